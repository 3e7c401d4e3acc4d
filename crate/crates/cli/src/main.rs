use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use spikegpf::encoder::{DEFAULT_HIDDEN, DEFAULT_INPUT_DIM};
use spikegpf::report::{self, fmt_sig6};
use spikegpf::tuner::{mean_std, TrendRow, ATTACK_RATES};
use spikegpf::{
    generate_sbm, load_graph, pretrain_pipeline, robustness, run_seeds, save_graph,
    shots_experiment, sweep, Graph, Method, PretrainOptions, PretrainedEncoder, RunRecord,
    SbmParams,
};

mod config;

use config::{Resolved, RunArgs};

#[derive(Parser)]
#[command(
    name = "spikegpf",
    version,
    about = "Sparse graph prompt tuning with spiking neurons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stochastic block model graph in the loader's file layout.
    Generate {
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        nodes_per_class: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0.2)]
        p_in: f64,
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Pretrain a GCN encoder by edge prediction and freeze it.
    Pretrain {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HIDDEN)]
        hidden: usize,
        /// Width the raw features are projected to.
        #[arg(long, default_value_t = DEFAULT_INPUT_DIM)]
        input_dim: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        neg_ratio: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tune one method over the configured seeds.
    Tune(RunArgs),
    /// Threshold x horizon grid for a spiking method.
    Sweep(RunArgs),
    /// Random edge-insertion robustness trend.
    Attack {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = default_rates())]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = default_methods())]
        methods: Vec<Method>,
    },
    /// Accuracy as a function of the number of shots, 1..=max.
    Shots {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        max: usize,
        #[arg(long, value_delimiter = ',', default_values_t = default_methods())]
        methods: Vec<Method>,
    },
    /// Rebuild the report files of a run directory from records.json.
    Report { run_dir: PathBuf },
}

fn default_rates() -> Vec<f64> {
    std::iter::once(0.0).chain(ATTACK_RATES).collect()
}

fn default_methods() -> Vec<Method> {
    ["probe", "gpf", "gpf-plus", "spiking"]
        .iter()
        .map(|m| m.parse().expect("known method"))
        .collect()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            out,
            nodes_per_class,
            classes,
            p_in,
            p_out,
            noise,
            seed,
        } => {
            let g = generate_sbm(&SbmParams {
                nodes_per_class,
                num_classes: classes,
                p_in,
                p_out,
                feature_noise: noise,
                seed,
            })?;
            save_graph(&g, &out)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                g.num_nodes(),
                g.num_edges(),
                g.num_classes(),
                out.display()
            );
        }
        Command::Pretrain {
            data,
            out,
            hidden,
            input_dim,
            epochs,
            neg_ratio,
            lr,
            seed,
        } => {
            let g = load_graph(&data).with_context(|| format!("loading {}", data.display()))?;
            let opts = PretrainOptions {
                epochs,
                neg_ratio,
                lr,
                seed,
            };
            let started = Instant::now();
            let (encoder, losses) = pretrain_pipeline(&g, input_dim, hidden, &opts)?;
            encoder.save(&out)?;
            match (losses.first(), losses.last()) {
                (Some(a), Some(b)) => {
                    println!("edge-prediction loss {} -> {}", fmt_sig6(*a), fmt_sig6(*b))
                }
                _ => println!("no training epochs"),
            }
            println!(
                "encoder {} saved to {} ({:.1} s)",
                encoder.encoder.checksum(),
                out.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Tune(args) => {
            let (r, g, enc) = prepare(&args)?;
            let records = run_seeds(&g, &enc.encoder, &r.tune)?;
            finish(&r.out, &records, args.timings)?;
        }
        Command::Sweep(args) => {
            let (r, g, enc) = prepare(&args)?;
            let out = sweep(&g, &enc.encoder, &r.tune)?;
            report::write_file(&r.out, "sweep.csv", &report::sweep_csv(&out.rows))?;
            finish(&r.out, &out.records, args.timings)?;
        }
        Command::Attack {
            run,
            rates,
            methods,
        } => {
            let (r, g, enc) = prepare(&run)?;
            let out = robustness(&g, &enc.encoder, &r.tune, &rates, &methods)?;
            write_trend(&r.out, "robustness.csv", "attack_rate", &out.rows)?;
            finish(&r.out, &out.records, run.timings)?;
        }
        Command::Shots { run, max, methods } => {
            if max == 0 {
                bail!("--max must be >= 1");
            }
            let (r, g, enc) = prepare(&run)?;
            let shots: Vec<usize> = (1..=max).collect();
            let out = shots_experiment(&g, &enc.encoder, &r.tune, &shots, &methods)?;
            write_trend(&r.out, "shots.csv", "shots", &out.rows)?;
            finish(&r.out, &out.records, run.timings)?;
        }
        Command::Report { run_dir } => {
            let records = report::load_records(&run_dir)?;
            report::write_report(&run_dir, &records)?;
            print_summary(&records);
        }
    }
    Ok(())
}

fn prepare(args: &RunArgs) -> Result<(Resolved, Graph, PretrainedEncoder)> {
    let r = args.resolve()?;
    let raw = load_graph(&r.data).with_context(|| format!("loading {}", r.data.display()))?;
    let enc = PretrainedEncoder::load(&r.encoder)
        .with_context(|| format!("loading {}", r.encoder.display()))?;
    let g = enc.prepare_graph(&raw)?;
    Ok((r, g, enc))
}

fn write_trend(dir: &Path, name: &str, level: &str, rows: &[TrendRow]) -> Result<()> {
    let csv = report::trend_csv(level, rows);
    report::write_file(dir, name, &csv)?;
    print!("{csv}");
    Ok(())
}

fn finish(dir: &Path, records: &[RunRecord], timings: bool) -> Result<()> {
    report::write_report(dir, records)?;
    if timings {
        report::write_timings(dir, records)?;
    }
    print_summary(records);
    println!("{} runs written to {}", records.len(), dir.display());
    Ok(())
}

fn print_summary(records: &[RunRecord]) {
    let mut seen: Vec<Method> = Vec::new();
    for r in records {
        if !seen.contains(&r.method) {
            seen.push(r.method);
        }
    }
    for m in seen {
        let acc: Vec<f64> = records
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.test_accuracy)
            .collect();
        let (mean, std) = mean_std(&acc);
        println!(
            "{m}: test accuracy {} ± {} over {} runs",
            fmt_sig6(mean),
            fmt_sig6(std),
            acc.len()
        );
    }
}
