//! TOML run configuration. Command-line flags override file values.
//!
//! ```toml
//! data = "data/sbm"
//! encoder = "runs/encoder.ckpt"
//! out = "runs/spiking"
//!
//! [tune]
//! method = "spiking"
//! shots = 5
//! mu = 0.05
//! gamma = 0.1
//! horizon = 4
//! seeds = [0, 1, 2]
//! ```
//!
//! Every key of `[tune]` is optional and falls back to the library default.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;
use spikegpf::{Method, TuneConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tune: TuneConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Graph directory with edges.tsv, features.csv and labels.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Encoder checkpoint written by `pretrain`.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// gpf, gpf-plus, spiking, spiking-s, spiking-p or probe.
    #[arg(long)]
    pub variant: Option<Method>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Number of prompt atoms K.
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Run seeds 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Pick (threshold, T) per seed from the grids by validation accuracy.
    #[arg(long)]
    pub select: bool,
    /// Also write timings.csv (wall-clock seconds per run).
    #[arg(long)]
    pub timings: bool,
}

/// Fully resolved inputs for one command.
#[derive(Debug)]
pub struct Resolved {
    pub data: PathBuf,
    pub encoder: PathBuf,
    pub out: PathBuf,
    pub tune: TuneConfig,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let mut tune = file.tune;
        if let Some(v) = self.variant {
            tune.method = v;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { tune.$field = v; })*
            };
        }
        set!(shots => shots, epochs => epochs, patience => patience, lr => lr, weight_decay => weight_decay,
             atoms => num_atoms, mu => mu, gamma => gamma, horizon => horizon);
        if let Some(n) = self.seeds {
            tune.seeds = (0..n).collect();
        }
        tune.select_by_validation |= self.select;
        tune.validate()?;

        let pick = |flag: &Option<PathBuf>, file: Option<PathBuf>, name: &str| {
            flag.clone()
                .or(file)
                .with_context(|| format!("--{name} is required (flag or config file)"))
        };
        Ok(Resolved {
            data: pick(&self.data, file.data, "data")?,
            encoder: pick(&self.encoder, file.encoder, "encoder")?,
            out: pick(&self.out, file.out, "out")?,
            tune,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> RunArgs {
        RunArgs {
            config: None,
            data: Some("d".into()),
            encoder: Some("e".into()),
            out: Some("o".into()),
            variant: None,
            shots: None,
            epochs: None,
            patience: None,
            lr: None,
            weight_decay: None,
            atoms: None,
            mu: None,
            gamma: None,
            horizon: None,
            seeds: None,
            select: false,
            timings: false,
        }
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "data = \"from-file\"\n[tune]\nmethod = \"gpf\"\nshots = 3\nmu = 0.2\n",
        )
        .unwrap();
        let r = RunArgs {
            config: Some(path),
            data: None,
            shots: Some(7),
            seeds: Some(2),
            ..args()
        }
        .resolve()
        .unwrap();
        assert_eq!(r.data, PathBuf::from("from-file"));
        assert_eq!(r.tune.method.name(), "gpf");
        assert_eq!((r.tune.shots, r.tune.mu), (7, 0.2));
        assert_eq!(r.tune.seeds, vec![0, 1]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[tune]\nthreshold = 0.1\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }

    #[test]
    fn missing_paths_are_reported() {
        let err = RunArgs {
            out: None,
            ..args()
        }
        .resolve()
        .unwrap_err();
        assert!(err.to_string().contains("--out"));
    }
}
