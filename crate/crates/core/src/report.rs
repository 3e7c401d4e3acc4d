//! Run persistence: `runs.csv`, `summary.json`, `sparsity_heatmap.csv`,
//! `records.json` and the optional `timings.csv`.
//!
//! Every file except `timings.csv` is a pure function of the records, so
//! identical configs and seeds reproduce identical bytes. Reals are printed
//! with six significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::tuner::{mean_std, RunRecord, SweepRow, TrendRow};

pub const RUNS_CSV: &str = "runs.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const HEATMAP_CSV: &str = "sparsity_heatmap.csv";
pub const RECORDS_JSON: &str = "records.json";
pub const TIMINGS_CSV: &str = "timings.csv";

pub const RUNS_HEADER: &str = "method,shots,num_atoms,mu,gamma,horizon,attack_rate,seed,epochs_executed,best_epoch,train_loss,val_accuracy,test_accuracy,sparsity_s,sparsity_p,atoms_active";
pub const HEATMAP_HEADER: &str =
    "mu,gamma,horizon,runs,sparsity_s_mean,sparsity_p_mean,test_accuracy_mean";

/// `%g`-style formatting with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to six significant digits as a JSON number.
fn json_num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = fmt_sig6(x).parse().expect("formatted float parses");
    json!(rounded)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in records {
        let fields = [
            r.method.name().to_string(),
            r.shots.to_string(),
            r.num_atoms.to_string(),
            opt_num(r.spiking.map(|s| s.mu)),
            opt_num(r.spiking.map(|s| s.gamma)),
            r.spiking.map(|s| s.horizon.to_string()).unwrap_or_default(),
            fmt_sig6(r.attack_rate),
            r.seed.to_string(),
            r.epochs_executed.to_string(),
            r.best_epoch.to_string(),
            fmt_sig6(r.train_loss),
            fmt_sig6(r.val_accuracy),
            fmt_sig6(r.test_accuracy),
            fmt_sig6(r.sparsity.sparsity_s_pre_softmax),
            fmt_sig6(r.sparsity.sparsity_p),
            fmt_sig6(r.sparsity.atoms_active_per_node),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Everything that identifies a config cell except the seed.
fn cell_key(r: &RunRecord) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}|{}",
        r.method.name(),
        r.shots,
        r.num_atoms,
        opt_num(r.spiking.map(|s| s.mu)),
        opt_num(r.spiking.map(|s| s.gamma)),
        r.spiking.map(|s| s.horizon.to_string()).unwrap_or_default(),
        fmt_sig6(r.attack_rate),
    )
}

/// Groups records by config cell, keeping first-appearance order.
fn cells(records: &[RunRecord]) -> Vec<Vec<&RunRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = cell_key(r);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).unwrap())
        .collect()
}

fn stat(recs: &[&RunRecord], f: impl Fn(&RunRecord) -> f64) -> (f64, f64) {
    mean_std(&recs.iter().map(|r| f(r)).collect::<Vec<_>>())
}

pub fn summary_json(records: &[RunRecord]) -> String {
    let cells: Vec<Value> = cells(records)
        .into_iter()
        .map(|recs| {
            let r = recs[0];
            let (acc_m, acc_s) = stat(&recs, |r| r.test_accuracy);
            let (val_m, val_s) = stat(&recs, |r| r.val_accuracy);
            let (ss_m, ss_s) = stat(&recs, |r| r.sparsity.sparsity_s_pre_softmax);
            let (sp_m, sp_s) = stat(&recs, |r| r.sparsity.sparsity_p);
            json!({
                "method": r.method.name(),
                "shots": r.shots,
                "num_atoms": r.num_atoms,
                "mu": r.spiking.map(|s| json_num(s.mu)),
                "gamma": r.spiking.map(|s| json_num(s.gamma)),
                "horizon": r.spiking.map(|s| s.horizon),
                "attack_rate": json_num(r.attack_rate),
                "runs": recs.len(),
                "seeds": recs.iter().map(|r| r.seed).collect::<Vec<_>>(),
                "test_accuracy": {"mean": json_num(acc_m), "std": json_num(acc_s)},
                "val_accuracy": {"mean": json_num(val_m), "std": json_num(val_s)},
                "sparsity_s": {"mean": json_num(ss_m), "std": json_num(ss_s)},
                "sparsity_p": {"mean": json_num(sp_m), "std": json_num(sp_s)},
            })
        })
        .collect();
    let mut out =
        serde_json::to_string_pretty(&json!({ "cells": cells })).expect("json values serialize");
    out.push('\n');
    out
}

/// Long-form grid over spiking records, sorted by `(mu, gamma, horizon)`.
pub fn heatmap_csv(records: &[RunRecord]) -> String {
    let mut grid: BTreeMap<(u64, u64, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.spiking {
            // Positive floats order like their bit patterns.
            grid.entry((s.mu.to_bits(), s.gamma.to_bits(), s.horizon))
                .or_default()
                .push(r);
        }
    }
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for ((mu, gamma, horizon), recs) in grid {
        let mean =
            |f: fn(&RunRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / recs.len() as f64;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_sig6(f64::from_bits(mu)),
            fmt_sig6(f64::from_bits(gamma)),
            horizon,
            recs.len(),
            fmt_sig6(mean(|r| r.sparsity.sparsity_s_pre_softmax)),
            fmt_sig6(mean(|r| r.sparsity.sparsity_p)),
            fmt_sig6(mean(|r| r.test_accuracy)),
        ));
    }
    out
}

pub fn trend_csv(level_name: &str, rows: &[TrendRow]) -> String {
    let mut out = format!("{level_name},method,runs,test_accuracy_mean,test_accuracy_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig6(r.level),
            r.method,
            r.runs,
            fmt_sig6(r.test_accuracy_mean),
            fmt_sig6(r.test_accuracy_std)
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,horizon,runs,test_accuracy_mean,test_accuracy_std,sparsity_s_mean,sparsity_p_mean\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_sig6(r.threshold),
            r.horizon,
            r.runs,
            fmt_sig6(r.test_accuracy_mean),
            fmt_sig6(r.test_accuracy_std),
            fmt_sig6(r.sparsity_s_mean),
            fmt_sig6(r.sparsity_p_mean)
        ));
    }
    out
}

pub fn timings_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,seed,wall_seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.method,
            r.seed,
            fmt_sig6(r.wall_seconds)
        ));
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(path, e))
}

/// Writes `runs.csv`, `summary.json`, `sparsity_heatmap.csv` and `records.json`.
pub fn write_report(dir: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, RUNS_CSV, &runs_csv(records))?;
    write(dir, SUMMARY_JSON, &summary_json(records))?;
    write(dir, HEATMAP_CSV, &heatmap_csv(records))?;
    let mut body = serde_json::to_string_pretty(records)?;
    body.push('\n');
    write(dir, RECORDS_JSON, &body)
}

pub fn write_timings(dir: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write(dir.as_ref(), TIMINGS_CSV, &timings_csv(records))
}

/// Writes an auxiliary table such as a per-rate or per-shot trend.
pub fn write_file(dir: impl AsRef<Path>, name: &str, body: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, name, body)
}

/// Reads `records.json` back from a run directory.
pub fn load_records(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = dir.as_ref().join(RECORDS_JSON);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.6), "0.6");
        assert_eq!(fmt_sig6(0.14142135623), "0.141421");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(0.00001234), "1.234e-05");
        assert_eq!(fmt_sig6(0.0001234), "0.0001234");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(999999.6), "1e+06");
    }
}
