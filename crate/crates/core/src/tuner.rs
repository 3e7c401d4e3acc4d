//! Downstream prompt tuning against a frozen encoder, and the experiment
//! drivers built on it (validation grid search, threshold/horizon sweep,
//! random-attack robustness, shots sweep).
//!
//! Only the prompt parameters `{B, W}` and the classifier head are updated.
//! Each run is a pure function of `(graph, encoder, config, split)`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{cross_entropy, Surrogate, Tape};
use crate::encoder::{classify_on, constant_weights, encode_on, ClassifierHead, EncoderModel};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, random_edge_attack, sample_few_shot, FewShotSplit, Graph};
use crate::optim::Adam;
use crate::prompt::{
    prompt_sparsity_report, PromptModel, PromptVariant, SparsityReport, DEFAULT_NUM_ATOMS,
};
use crate::seeds::{self, Stream};
use crate::spiking::SpikingConfig;
use crate::tensor::Tensor;

pub const HORIZON_GRID: [usize; 4] = [1, 2, 4, 8];
pub const THRESHOLD_GRID: [f64; 5] = [0.005, 0.05, 0.1, 0.2, 0.3];
pub const ATTACK_RATES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// What gets trained downstream: a bare linear probe or one of the prompt variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Probe,
    Prompt(PromptVariant),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Probe,
        Method::Prompt(PromptVariant::Gpf),
        Method::Prompt(PromptVariant::GpfPlus),
        Method::Prompt(PromptVariant::SpikingGpf),
        Method::Prompt(PromptVariant::SpikingSOnly),
        Method::Prompt(PromptVariant::SpikingPOnly),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Probe => "probe",
            Method::Prompt(v) => v.name(),
        }
    }

    pub fn prompt_variant(self) -> Option<PromptVariant> {
        match self {
            Method::Probe => None,
            Method::Prompt(v) => Some(v),
        }
    }

    pub fn is_spiking(self) -> bool {
        self.prompt_variant().is_some_and(PromptVariant::is_spiking)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "probe" {
            Ok(Method::Probe)
        } else {
            s.parse().map(Method::Prompt)
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub method: Method,
    pub shots: usize,
    pub val_per_class: usize,
    /// Maximum number of optimizer steps.
    pub epochs: usize,
    /// Stop after this many steps without a validation-accuracy improvement.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub num_atoms: usize,
    pub mu: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub surrogate_width: f64,
    pub horizon_grid: Vec<usize>,
    pub threshold_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// For spiking methods, pick `(threshold, T)` per seed from the grids by
    /// validation accuracy, with `mu = gamma = threshold`.
    pub select_by_validation: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            method: Method::Prompt(PromptVariant::SpikingGpf),
            shots: 1,
            val_per_class: crate::graph::DEFAULT_VAL_PER_CLASS,
            epochs: 300,
            patience: 50,
            lr: 1e-3,
            weight_decay: 4e-6,
            num_atoms: DEFAULT_NUM_ATOMS,
            mu: 0.1,
            gamma: 0.1,
            horizon: 4,
            surrogate_width: 1.0,
            horizon_grid: HORIZON_GRID.to_vec(),
            threshold_grid: THRESHOLD_GRID.to_vec(),
            seeds: (0..10).collect(),
            select_by_validation: false,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if self.shots == 0 {
            return bad("shots must be >= 1".into());
        }
        if self.num_atoms == 0 {
            return bad("num_atoms must be >= 1".into());
        }
        if self.horizon_grid.is_empty() || self.threshold_grid.is_empty() || self.seeds.is_empty() {
            return bad("grids and seed list must be non-empty".into());
        }
        if self.horizon_grid.contains(&0) || self.threshold_grid.iter().any(|&t| !(t > 0.0)) {
            return bad("grid values must be positive".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.method.is_spiking() {
            self.spiking()?;
        }
        Ok(())
    }

    pub fn spiking(&self) -> Result<SpikingConfig> {
        let cfg = SpikingConfig {
            mu: self.mu,
            gamma: self.gamma,
            horizon: self.horizon,
            surrogate: Surrogate::rectangular(self.surrogate_width)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_method(&self, method: Method) -> Self {
        TuneConfig {
            method,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub shots: usize,
    pub num_atoms: usize,
    pub spiking: Option<SpikingConfig>,
    pub attack_rate: f64,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs_executed: usize,
    /// Optimizer steps taken before the selected parameters; 0 is the initialization.
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub test_accuracy: f64,
    pub sparsity: SparsityReport,
    pub encoder_checksum: String,
    pub history: Vec<EpochMetrics>,
    /// Not serialized: the only non-deterministic quantity of a run.
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn accuracy(logits: &Tensor, ids: &[usize], labels: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let pred = logits.select_rows(ids).argmax_rows();
    let correct = pred
        .iter()
        .zip(ids)
        .filter(|(p, &i)| **p == labels[i])
        .count();
    correct as f64 / ids.len() as f64
}

fn labels_of(ids: &[usize], labels: &[usize]) -> Vec<usize> {
    ids.iter().map(|&i| labels[i]).collect()
}

fn check_split(g: &Graph, split: &FewShotSplit) -> Result<()> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    for &i in split.train.iter().chain(&split.val).chain(&split.test) {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidParameter(format!(
                "split is not a set of disjoint node ids below {n} (offending id {i})"
            )));
        }
    }
    if split.train.is_empty() {
        return Err(Error::InvalidParameter(
            "split has no training nodes".into(),
        ));
    }
    Ok(())
}

struct Selected {
    epoch: usize,
    val_accuracy: f64,
    val_loss: f64,
    test_accuracy: f64,
    train_loss: f64,
    sparsity: SparsityReport,
}

/// Validation accuracy first; lower validation loss breaks exact ties.
fn improves(acc: f64, loss: f64, best_acc: f64, best_loss: f64) -> bool {
    acc > best_acc || (acc == best_acc && loss < best_loss)
}

/// Tunes prompts and head on `split.train`, selecting the step with the best
/// validation accuracy (lower validation loss on ties, then earliest). `g` must already carry
/// encoder-width features. Randomness comes from `split.seed`.
pub fn tune(
    g: &Graph,
    encoder: &EncoderModel,
    cfg: &TuneConfig,
    split: &FewShotSplit,
) -> Result<RunRecord> {
    cfg.validate()?;
    if !encoder.is_frozen() {
        return Err(Error::EncoderNotFrozen);
    }
    check_split(g, split)?;
    if g.feature_dim() != encoder.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "tune",
            left: g.features().shape(),
            right: (encoder.in_dim(), encoder.hidden()),
        });
    }
    let started = Instant::now();
    let checksum = encoder.checksum();
    let seed = split.seed;
    let adj = normalize_adjacency(g);
    let labels = g.labels();
    let train_targets = labels_of(&split.train, labels);
    let val_targets = labels_of(&split.val, labels);

    let spiking = if cfg.method.is_spiking() {
        Some(cfg.spiking()?)
    } else {
        None
    };
    let mut prompt = match cfg.method.prompt_variant() {
        Some(v) => Some(PromptModel::new(
            v,
            cfg.num_atoms,
            g.feature_dim(),
            spiking,
            &mut seeds::rng(seed, Stream::PromptInit, 0),
        )?),
        None => None,
    };
    let mut head = ClassifierHead::new(
        encoder.hidden(),
        g.num_classes(),
        &mut seeds::rng(seed, Stream::HeadInit, 0),
    );

    let mut shapes = Vec::new();
    if let Some(p) = &prompt {
        shapes.push(p.atoms().shape());
        if p.trains_projection() {
            shapes.push(p.projection().shape());
        }
    }
    shapes.push(head.weight.shape());
    shapes.push(head.bias.shape());
    let mut opt = Adam::new(cfg.lr, cfg.weight_decay, &shapes)?;

    let mut history = Vec::new();
    let mut best: Option<Selected> = None;
    let mut since_best = 0;
    let mut step = 0;
    loop {
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone())?;
        let prompt_vars = match &prompt {
            Some(p) => {
                let b = tape.param(p.atoms().clone())?;
                let w = if p.trains_projection() {
                    tape.param(p.projection().clone())?
                } else {
                    tape.constant(p.projection().clone())?
                };
                Some((p.build(&mut tape, x, b, w)?, b, w))
            }
            None => None,
        };
        let input = prompt_vars.as_ref().map_or(x, |(v, _, _)| v.prompted);
        let enc_w = constant_weights(&mut tape, encoder)?;
        let z = encode_on(&mut tape, &adj, input, enc_w)?;
        let hw = tape.param(head.weight.clone())?;
        let hb = tape.param(head.bias.clone())?;
        let logits = classify_on(&mut tape, z, hw, hb)?;
        let train_logits = tape.select_rows(logits, &split.train)?;
        let loss = tape
            .cross_entropy(train_logits, &train_targets)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteLoss { epoch: step },
                other => other,
            })?;

        let all = tape.value(logits);
        let train_loss = tape.value(loss).get(0, 0);
        let val_accuracy = accuracy(all, &split.val, labels);
        let val_loss = if split.val.is_empty() {
            0.0
        } else {
            cross_entropy(&all.select_rows(&split.val), &val_targets)
        };
        if step > 0 {
            history.push(EpochMetrics {
                epoch: step,
                train_loss,
                train_accuracy: accuracy(all, &split.train, labels),
                val_loss,
                val_accuracy,
            });
        }
        if best
            .as_ref()
            .is_none_or(|b| improves(val_accuracy, val_loss, b.val_accuracy, b.val_loss))
        {
            let sparsity = match &prompt_vars {
                Some((v, _, _)) => prompt_sparsity_report(&v.collect(&tape)),
                None => SparsityReport {
                    sparsity_s_pre_softmax: 0.0,
                    sparsity_p: 1.0,
                    atoms_active_per_node: 0.0,
                },
            };
            best = Some(Selected {
                epoch: step,
                val_accuracy,
                val_loss,
                test_accuracy: accuracy(all, &split.test, labels),
                train_loss,
                sparsity,
            });
            since_best = 0;
        } else {
            since_best += 1;
        }
        if step >= cfg.epochs || since_best >= cfg.patience.max(1) {
            break;
        }

        let grads = tape.backward(loss)?;
        let mut params: Vec<&mut Tensor> = Vec::with_capacity(4);
        let mut gs: Vec<Tensor> = Vec::with_capacity(4);
        if let (Some(p), Some((_, b, w))) = (prompt.as_mut(), prompt_vars.as_ref()) {
            let trains_w = p.trains_projection();
            let (atoms, projection) = p.params_mut();
            gs.push(grads.get_or_zeros(*b, atoms.shape()));
            params.push(atoms);
            if trains_w {
                gs.push(grads.get_or_zeros(*w, projection.shape()));
                params.push(projection);
            }
        }
        gs.push(grads.get_or_zeros(hw, head.weight.shape()));
        gs.push(grads.get_or_zeros(hb, head.bias.shape()));
        params.push(&mut head.weight);
        params.push(&mut head.bias);
        let grad_refs: Vec<&Tensor> = gs.iter().collect();
        opt.step(&mut params, &grad_refs)?;
        step += 1;
    }

    let after = encoder.checksum();
    if after != checksum {
        return Err(Error::FreezeViolation {
            before: checksum,
            after,
        });
    }
    let best = best.expect("at least one evaluation");
    Ok(RunRecord {
        method: cfg.method,
        shots: split.shots,
        num_atoms: prompt.as_ref().map_or(0, PromptModel::num_atoms),
        spiking,
        attack_rate: 0.0,
        seed,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        epochs_executed: step,
        best_epoch: best.epoch,
        train_loss: best.train_loss,
        val_accuracy: best.val_accuracy,
        val_loss: best.val_loss,
        test_accuracy: best.test_accuracy,
        sparsity: best.sparsity,
        encoder_checksum: checksum,
        history,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// For spiking methods with `select_by_validation`, tunes every
/// `(threshold, T)` grid cell and keeps the best validation accuracy (lower
/// validation loss, then grid order, on ties). Otherwise a single [`tune`].
pub fn tune_selected(
    g: &Graph,
    encoder: &EncoderModel,
    cfg: &TuneConfig,
    split: &FewShotSplit,
) -> Result<RunRecord> {
    if !(cfg.select_by_validation && cfg.method.is_spiking()) {
        return tune(g, encoder, cfg, split);
    }
    let mut best: Option<RunRecord> = None;
    for &threshold in &cfg.threshold_grid {
        for &horizon in &cfg.horizon_grid {
            let cell = TuneConfig {
                mu: threshold,
                gamma: threshold,
                horizon,
                ..cfg.clone()
            };
            let rec = tune(g, encoder, &cell, split)?;
            if best.as_ref().is_none_or(|b| {
                improves(rec.val_accuracy, rec.val_loss, b.val_accuracy, b.val_loss)
            }) {
                best = Some(rec);
            }
        }
    }
    Ok(best.expect("non-empty grids"))
}

/// One run per configured seed, each on its own few-shot split.
pub fn run_seeds(g: &Graph, encoder: &EncoderModel, cfg: &TuneConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let split = sample_few_shot(g, cfg.shots, cfg.val_per_class, seed)?;
            tune_selected(g, encoder, cfg, &split)
        })
        .collect()
}

/// Mean and sample standard deviation (`n - 1`; zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub horizon: usize,
    pub runs: usize,
    pub test_accuracy_mean: f64,
    pub test_accuracy_std: f64,
    pub sparsity_s_mean: f64,
    pub sparsity_p_mean: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    /// Threshold-major, in grid order.
    pub rows: Vec<SweepRow>,
}

/// Full threshold x horizon grid (with `mu = gamma = threshold`), every cell
/// run for every seed and averaged.
pub fn sweep(g: &Graph, encoder: &EncoderModel, base: &TuneConfig) -> Result<SweepResult> {
    base.validate()?;
    if !base.method.is_spiking() {
        return Err(Error::InvalidParameter(format!(
            "sweep needs a spiking method, got {}",
            base.method
        )));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &threshold in &base.threshold_grid {
        for &horizon in &base.horizon_grid {
            let cell = TuneConfig {
                mu: threshold,
                gamma: threshold,
                horizon,
                select_by_validation: false,
                ..base.clone()
            };
            let recs = run_seeds(g, encoder, &cell)?;
            let acc: Vec<f64> = recs.iter().map(|r| r.test_accuracy).collect();
            let (m, s) = mean_std(&acc);
            let mean_of =
                |f: fn(&RunRecord) -> f64| recs.iter().map(f).sum::<f64>() / recs.len() as f64;
            rows.push(SweepRow {
                threshold,
                horizon,
                runs: recs.len(),
                test_accuracy_mean: m,
                test_accuracy_std: s,
                sparsity_s_mean: mean_of(|r| r.sparsity.sparsity_s_pre_softmax),
                sparsity_p_mean: mean_of(|r| r.sparsity.sparsity_p),
            });
            records.extend(recs);
        }
    }
    Ok(SweepResult { records, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendRow {
    /// Attack rate or shot count, depending on the experiment.
    pub level: f64,
    pub method: Method,
    pub runs: usize,
    pub test_accuracy_mean: f64,
    pub test_accuracy_std: f64,
}

#[derive(Clone, Debug)]
pub struct TrendResult {
    pub records: Vec<RunRecord>,
    /// Ascending level, then method order as given.
    pub rows: Vec<TrendRow>,
}

fn trend_row(level: f64, method: Method, recs: &[RunRecord]) -> TrendRow {
    let acc: Vec<f64> = recs.iter().map(|r| r.test_accuracy).collect();
    let (m, s) = mean_std(&acc);
    TrendRow {
        level,
        method,
        runs: recs.len(),
        test_accuracy_mean: m,
        test_accuracy_std: s,
    }
}

/// Re-tunes every method on randomly attacked copies of `g`.
///
/// Rates are deduplicated and run in ascending order. Each (rate, seed) cell
/// attacks with its own derived seed; rate 0 leaves the graph untouched, so
/// its runs equal the clean runs.
pub fn robustness(
    g: &Graph,
    encoder: &EncoderModel,
    cfg: &TuneConfig,
    rates: &[f64],
    methods: &[Method],
) -> Result<TrendResult> {
    cfg.validate()?;
    let mut rates: Vec<f64> = rates.to_vec();
    if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "attack rates must be >= 0, got {rates:?}"
        )));
    }
    rates.sort_by(f64::total_cmp);
    rates.dedup();

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (ri, &rate) in rates.iter().enumerate() {
        let mut per_method: Vec<Vec<RunRecord>> = vec![Vec::new(); methods.len()];
        for &seed in &cfg.seeds {
            let attacked =
                random_edge_attack(g, rate, seeds::derive(seed, Stream::Attack, ri as u64))?;
            let split = sample_few_shot(&attacked, cfg.shots, cfg.val_per_class, seed)?;
            for (mi, &method) in methods.iter().enumerate() {
                let mut rec = tune_selected(&attacked, encoder, &cfg.with_method(method), &split)?;
                rec.attack_rate = rate;
                per_method[mi].push(rec);
            }
        }
        for (mi, recs) in per_method.into_iter().enumerate() {
            rows.push(trend_row(rate, methods[mi], &recs));
            records.extend(recs);
        }
    }
    Ok(TrendResult { records, rows })
}

/// Seed-averaged accuracy per shot count and method.
pub fn shots_experiment(
    g: &Graph,
    encoder: &EncoderModel,
    cfg: &TuneConfig,
    shots: &[usize],
    methods: &[Method],
) -> Result<TrendResult> {
    let mut shots = shots.to_vec();
    shots.sort_unstable();
    shots.dedup();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &k in &shots {
        for &method in methods {
            let cell = TuneConfig {
                shots: k,
                method,
                ..cfg.clone()
            };
            let recs = run_seeds(g, encoder, &cell)?;
            rows.push(trend_row(k as f64, method, &recs));
            records.extend(recs);
        }
    }
    Ok(TrendResult { records, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_fixture() {
        let (m, s) = mean_std(&[0.5, 0.7]);
        assert!((m - 0.6).abs() < 1e-15);
        assert!((s - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn config_validation() {
        let ok = TuneConfig::default();
        ok.validate().unwrap();
        assert!(TuneConfig {
            lr: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TuneConfig {
            seeds: vec![1, 1],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TuneConfig {
            horizon_grid: vec![],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TuneConfig {
            threshold_grid: vec![],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TuneConfig {
            gamma: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
    }
}
