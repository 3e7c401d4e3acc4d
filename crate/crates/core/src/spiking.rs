//! Integrate-and-fire chains.
//!
//! A chain of `T` neurons shares one membrane accumulator: neuron `t` adds the
//! constant drive, fires if the potential reaches the threshold, and subtracts
//! the threshold on firing (soft reset). This is the same computation as one
//! neuron unrolled for `T` steps. The chain output is the mean spike value.
//!
//! * [`if_chain`] fires `1` at `v >= mu`.
//! * [`signed_if_chain`] fires `+1` at `u >= gamma` and `-1` at `u <= -gamma`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{heaviside, signed_heaviside, Surrogate, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Thresholds and horizon shared by both chains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikingConfig {
    /// Coefficient-path threshold.
    pub mu: f64,
    /// Prompt-path threshold.
    pub gamma: f64,
    /// Number of chained neurons `T`.
    pub horizon: usize,
    pub surrogate: Surrogate,
}

impl SpikingConfig {
    pub fn new(mu: f64, gamma: f64, horizon: usize) -> Result<Self> {
        let cfg = SpikingConfig {
            mu,
            gamma,
            horizon,
            surrogate: Surrogate::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        for (name, v) in [("mu", self.mu), ("gamma", self.gamma)] {
            if !(v > 0.0 && !v.is_nan()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Surrogate::rectangular(self.surrogate.width).map(|_| ())
    }
}

/// Coefficient-path chain on a tape. Output entries lie on `{0, 1/T, ..., 1}`.
pub fn if_chain_on(tape: &mut Tape<'_>, alpha: Var, cfg: &SpikingConfig) -> Result<Var> {
    cfg.validate()?;
    chain(tape, alpha, cfg.mu, cfg.horizon, |t, v| {
        t.heaviside_ste(v, cfg.mu, cfg.surrogate)
    })
}

/// Prompt-path chain on a tape. Output entries lie on the `1/T` grid in `[-1, 1]`.
pub fn signed_if_chain_on(tape: &mut Tape<'_>, drive: Var, cfg: &SpikingConfig) -> Result<Var> {
    cfg.validate()?;
    chain(tape, drive, cfg.gamma, cfg.horizon, |t, u| {
        t.signed_heaviside_ste(u, cfg.gamma, cfg.surrogate)
    })
}

fn chain<'a>(
    tape: &mut Tape<'a>,
    drive: Var,
    threshold: f64,
    horizon: usize,
    fire: impl Fn(&mut Tape<'a>, Var) -> Result<Var>,
) -> Result<Var> {
    let mut potential: Option<Var> = None;
    let mut total: Option<Var> = None;
    for _ in 0..horizon {
        let charged = match potential {
            None => drive,
            Some(v) => tape.add(v, drive)?,
        };
        let spikes = fire(tape, charged)?;
        let discharge = tape.scale(spikes, -threshold)?;
        potential = Some(tape.add(charged, discharge)?);
        total = Some(match total {
            None => spikes,
            Some(acc) => tape.add(acc, spikes)?,
        });
    }
    tape.scale(total.expect("horizon >= 1"), 1.0 / horizon as f64)
}

/// Forward-only [`if_chain_on`].
pub fn if_chain(alpha: &Tensor, cfg: &SpikingConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(alpha.clone())?;
    let h = if_chain_on(&mut tape, a, cfg)?;
    Ok(tape.value(h).clone())
}

/// Forward-only [`signed_if_chain_on`].
pub fn signed_if_chain(drive: &Tensor, cfg: &SpikingConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let d = tape.constant(drive.clone())?;
    let p = signed_if_chain_on(&mut tape, d, cfg)?;
    Ok(tape.value(p).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainKind {
    If,
    SignedIf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain {
    pub spikes: Vec<i8>,
    pub average: f64,
}

/// Scalar reference simulation of one chain, written as the plain recurrence.
pub fn oracle_simulate(kind: ChainKind, drive: f64, threshold: f64, horizon: usize) -> SpikeTrain {
    let mut v = 0.0;
    let mut spikes = Vec::with_capacity(horizon);
    let mut sum = 0.0;
    for _ in 0..horizon {
        let charged = v + drive;
        let h = match kind {
            ChainKind::If => heaviside(charged, threshold),
            ChainKind::SignedIf => signed_heaviside(charged, threshold),
        };
        v = charged - threshold * h;
        spikes.push(h as i8);
        sum += h;
    }
    SpikeTrain {
        spikes,
        average: (1.0 / horizon as f64) * sum,
    }
}

/// Fraction of entries with `|value| <= tol`.
pub fn sparsity(m: &Tensor, tol: f64) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    m.data().iter().filter(|v| v.abs() <= tol).count() as f64 / m.len() as f64
}
