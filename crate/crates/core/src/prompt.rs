//! Prompt generators.
//!
//! Every variant produces per-node coefficients `S` over `K` atoms and a
//! prompt matrix `P`, which is added to the node features.
//!
//! | variant          | coefficients                      | prompt                    |
//! |------------------|-----------------------------------|---------------------------|
//! | `Gpf`            | all-ones, `K = 1`                 | `S B` (one shared vector) |
//! | `GpfPlus`        | `softmax(X W^T)`                  | `S B`                     |
//! | `SpikingSOnly`   | `softmax(if_chain(X W^T))`        | `S B`                     |
//! | `SpikingPOnly`   | `softmax(X W^T)`                  | `signed_if_chain(S B)`    |
//! | `SpikingGpf`     | `softmax(if_chain(X W^T))`        | `signed_if_chain(S B)`    |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Surrogate, Tape, Var};
use crate::checkpoint::{Reader, Writer};
use crate::error::{Error, Result};
use crate::spiking::{if_chain_on, signed_if_chain_on, sparsity, SpikingConfig};
use crate::tensor::Tensor;

pub const DEFAULT_NUM_ATOMS: usize = 10;
const CHECKPOINT_MAGIC: &str = "spikegpf-prompt v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    Gpf,
    GpfPlus,
    SpikingSOnly,
    SpikingPOnly,
    SpikingGpf,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 5] = [
        PromptVariant::Gpf,
        PromptVariant::GpfPlus,
        PromptVariant::SpikingSOnly,
        PromptVariant::SpikingPOnly,
        PromptVariant::SpikingGpf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Gpf => "gpf",
            PromptVariant::GpfPlus => "gpf-plus",
            PromptVariant::SpikingSOnly => "spiking-s",
            PromptVariant::SpikingPOnly => "spiking-p",
            PromptVariant::SpikingGpf => "spiking",
        }
    }

    pub fn is_spiking(self) -> bool {
        self.spiking_coefficients() || self.spiking_prompts()
    }

    pub fn spiking_coefficients(self) -> bool {
        matches!(
            self,
            PromptVariant::SpikingSOnly | PromptVariant::SpikingGpf
        )
    }

    pub fn spiking_prompts(self) -> bool {
        matches!(
            self,
            PromptVariant::SpikingPOnly | PromptVariant::SpikingGpf
        )
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown prompt variant {s:?}")))
    }
}

/// Trainable prompt parameters: atoms `B` (K x d) and projection `W` (K x d).
#[derive(Clone, Debug, PartialEq)]
pub struct PromptModel {
    variant: PromptVariant,
    atoms: Tensor,
    projection: Tensor,
    spiking: Option<SpikingConfig>,
}

impl PromptModel {
    /// Fresh model with `B` and `W` drawn from `U(-1/sqrt(d), 1/sqrt(d))`.
    /// `Gpf` always uses a single atom and a zero, unused projection.
    pub fn new<R: Rng + ?Sized>(
        variant: PromptVariant,
        num_atoms: usize,
        dim: usize,
        spiking: Option<SpikingConfig>,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let k = if variant == PromptVariant::Gpf {
            1
        } else {
            num_atoms
        };
        let atoms = Tensor::uniform(k, dim, bound, rng);
        let projection = if variant == PromptVariant::Gpf {
            Tensor::zeros(1, dim)
        } else {
            Tensor::uniform(k, dim, bound, rng)
        };
        Self::from_parts(variant, atoms, projection, spiking)
    }

    pub fn from_parts(
        variant: PromptVariant,
        atoms: Tensor,
        projection: Tensor,
        spiking: Option<SpikingConfig>,
    ) -> Result<Self> {
        if atoms.shape() != projection.shape() {
            return Err(Error::ShapeMismatch {
                op: "prompt_model",
                left: atoms.shape(),
                right: projection.shape(),
            });
        }
        if atoms.rows() == 0 {
            return Err(Error::InvalidParameter(
                "need at least one prompt atom".into(),
            ));
        }
        if variant == PromptVariant::Gpf && atoms.rows() != 1 {
            return Err(Error::InvalidParameter(format!(
                "gpf uses one atom, got {}",
                atoms.rows()
            )));
        }
        if variant.is_spiking() {
            spiking.ok_or(Error::MissingSpikingConfig)?.validate()?;
        }
        Ok(PromptModel {
            variant,
            atoms,
            projection,
            spiking,
        })
    }

    pub fn variant(&self) -> PromptVariant {
        self.variant
    }

    pub fn atoms(&self) -> &Tensor {
        &self.atoms
    }

    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    pub fn spiking(&self) -> Option<&SpikingConfig> {
        self.spiking.as_ref()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.rows()
    }

    pub fn dim(&self) -> usize {
        self.atoms.cols()
    }

    /// Whether the optimizer should update `W`.
    pub fn trains_projection(&self) -> bool {
        self.variant != PromptVariant::Gpf
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.atoms, &mut self.projection)
    }

    /// Records the prompt computation on `tape`. `atoms` and `projection`
    /// must hold this model's current `B` and `W`.
    pub fn build<'a>(
        &self,
        tape: &mut Tape<'a>,
        x: Var,
        atoms: Var,
        projection: Var,
    ) -> Result<PromptVars> {
        let n = tape.value(x).rows();
        if tape.value(x).cols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "prompt",
                left: tape.value(x).shape(),
                right: self.atoms.shape(),
            });
        }
        let (coefficients, pre_softmax) = match self.variant {
            PromptVariant::Gpf => (tape.constant(Tensor::ones(n, 1))?, None),
            _ => {
                let alpha = tape.matmul_nt(x, projection)?;
                let scores = if self.variant.spiking_coefficients() {
                    let cfg = self.spiking.as_ref().ok_or(Error::MissingSpikingConfig)?;
                    if_chain_on(tape, alpha, cfg)?
                } else {
                    alpha
                };
                (tape.softmax_rows(scores)?, Some(scores))
            }
        };
        let combined = tape.matmul(coefficients, atoms)?;
        let prompts = if self.variant.spiking_prompts() {
            let cfg = self.spiking.as_ref().ok_or(Error::MissingSpikingConfig)?;
            signed_if_chain_on(tape, combined, cfg)?
        } else {
            combined
        };
        let prompted = tape.add(x, prompts)?;
        Ok(PromptVars {
            coefficients,
            pre_softmax,
            prompts,
            prompted,
        })
    }

    /// Forward pass without gradient tracking.
    pub fn forward(&self, x: &Tensor) -> Result<PromptOutput> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let b = tape.constant(self.atoms.clone())?;
        let w = tape.constant(self.projection.clone())?;
        let vars = self.build(&mut tape, xv, b, w)?;
        Ok(vars.collect(&tape))
    }

    pub fn to_checkpoint(&self) -> String {
        let mut w = Writer::new(CHECKPOINT_MAGIC);
        w.field("variant", &[self.variant.name().to_string()]);
        match &self.spiking {
            Some(c) => w.field(
                "spiking",
                &[
                    format!("{:e}", c.mu),
                    format!("{:e}", c.gamma),
                    c.horizon.to_string(),
                    format!("{:e}", c.surrogate.width),
                ],
            ),
            None => w.field("spiking", &["none".to_string()]),
        }
        w.tensor("atoms", &self.atoms);
        w.tensor("projection", &self.projection);
        w.finish()
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut r = Reader::new(text, CHECKPOINT_MAGIC)?;
        let variant: PromptVariant = r.scalar::<String>("variant")?.parse()?;
        let spiking = match r.field("spiking")?.as_slice() {
            ["none"] => None,
            [mu, gamma, horizon, width] => {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Checkpoint(format!("spiking: {e}")))
                };
                Some(SpikingConfig {
                    mu: num(mu)?,
                    gamma: num(gamma)?,
                    horizon: horizon
                        .parse()
                        .map_err(|e| Error::Checkpoint(format!("spiking: {e}")))?,
                    surrogate: Surrogate { width: num(width)? },
                })
            }
            other => return Err(Error::Checkpoint(format!("spiking: unexpected {other:?}"))),
        };
        let atoms = r.tensor("atoms")?;
        let projection = r.tensor("projection")?;
        Self::from_parts(variant, atoms, projection, spiking)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

/// Tape handles produced by [`PromptModel::build`].
#[derive(Clone, Copy, Debug)]
pub struct PromptVars {
    pub coefficients: Var,
    pub pre_softmax: Option<Var>,
    pub prompts: Var,
    pub prompted: Var,
}

impl PromptVars {
    pub fn collect(&self, tape: &Tape<'_>) -> PromptOutput {
        PromptOutput {
            coefficients: tape.value(self.coefficients).clone(),
            pre_softmax: self.pre_softmax.map(|v| tape.value(v).clone()),
            prompts: tape.value(self.prompts).clone(),
            prompted_features: tape.value(self.prompted).clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptOutput {
    /// `S`, n x K; rows sum to one.
    pub coefficients: Tensor,
    /// Scores fed to the softmax (`H` for spiking coefficients, `X W^T`
    /// otherwise). Absent for `Gpf`.
    pub pre_softmax: Option<Tensor>,
    /// `P`, n x d.
    pub prompts: Tensor,
    /// `X + P`.
    pub prompted_features: Tensor,
}

fn expect_variant(
    model: &PromptModel,
    allowed: &[PromptVariant],
    expected: &'static str,
) -> Result<()> {
    if allowed.contains(&model.variant) {
        Ok(())
    } else {
        Err(Error::VariantMismatch {
            expected,
            found: model.variant.name().to_string(),
        })
    }
}

pub fn gpf_prompt(x: &Tensor, model: &PromptModel) -> Result<PromptOutput> {
    expect_variant(model, &[PromptVariant::Gpf], "gpf")?;
    model.forward(x)
}

pub fn gpf_plus_prompt(x: &Tensor, model: &PromptModel) -> Result<PromptOutput> {
    expect_variant(model, &[PromptVariant::GpfPlus], "gpf-plus")?;
    model.forward(x)
}

pub fn spiking_prompt(x: &Tensor, model: &PromptModel) -> Result<PromptOutput> {
    expect_variant(
        model,
        &[
            PromptVariant::SpikingGpf,
            PromptVariant::SpikingSOnly,
            PromptVariant::SpikingPOnly,
        ],
        "spiking, spiking-s or spiking-p",
    )?;
    model.forward(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Fraction of exactly-zero pre-softmax scores (0 for `Gpf`).
    pub sparsity_s_pre_softmax: f64,
    /// Fraction of exactly-zero prompt entries.
    pub sparsity_p: f64,
    /// Mean number of atoms per node whose coefficient exceeds `1/K`.
    pub atoms_active_per_node: f64,
}

pub fn prompt_sparsity_report(out: &PromptOutput) -> SparsityReport {
    let s = &out.coefficients;
    let k = s.cols() as f64;
    let active = s.data().iter().filter(|&&v| v > 1.0 / k).count();
    SparsityReport {
        sparsity_s_pre_softmax: out.pre_softmax.as_ref().map_or(0.0, |h| sparsity(h, 0.0)),
        sparsity_p: sparsity(&out.prompts, 0.0),
        atoms_active_per_node: if s.rows() == 0 {
            0.0
        } else {
            active as f64 / s.rows() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn gpf_zero_atom_is_identity() {
        let x = Tensor::uniform(3, 2, 1.0, &mut rng());
        let m = PromptModel::from_parts(
            PromptVariant::Gpf,
            Tensor::zeros(1, 2),
            Tensor::zeros(1, 2),
            None,
        )
        .unwrap();
        assert_eq!(gpf_prompt(&x, &m).unwrap().prompted_features, x);
    }

    #[test]
    fn gpf_broadcasts_single_atom() {
        let atom = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let m =
            PromptModel::from_parts(PromptVariant::Gpf, atom, Tensor::zeros(1, 2), None).unwrap();
        let out = gpf_prompt(&Tensor::zeros(3, 2), &m).unwrap();
        assert_eq!(
            out.prompts,
            Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]])
        );
        assert_eq!(out.coefficients, Tensor::ones(3, 1));
    }

    #[test]
    fn gpf_plus_zero_projection_gives_uniform_coefficients() {
        let mut r = rng();
        let b = Tensor::uniform(4, 3, 1.0, &mut r);
        let m =
            PromptModel::from_parts(PromptVariant::GpfPlus, b.clone(), Tensor::zeros(4, 3), None)
                .unwrap();
        let out = gpf_plus_prompt(&Tensor::uniform(5, 3, 1.0, &mut r), &m).unwrap();
        assert!(out
            .coefficients
            .data()
            .iter()
            .all(|&v| (v - 0.25).abs() < 1e-15));
        for i in 0..5 {
            for c in 0..3 {
                let mean = (0..4).map(|k| b.get(k, c)).sum::<f64>() / 4.0;
                assert!((out.prompts.get(i, c) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variant_mismatch_is_reported() {
        let m = PromptModel::new(PromptVariant::GpfPlus, 3, 4, None, &mut rng()).unwrap();
        let x = Tensor::zeros(2, 4);
        assert!(matches!(
            gpf_prompt(&x, &m),
            Err(Error::VariantMismatch { .. })
        ));
        assert!(matches!(
            spiking_prompt(&x, &m),
            Err(Error::VariantMismatch { .. })
        ));
    }

    #[test]
    fn spiking_variants_need_config() {
        assert!(matches!(
            PromptModel::new(PromptVariant::SpikingGpf, 3, 4, None, &mut rng()),
            Err(Error::MissingSpikingConfig)
        ));
    }

    #[test]
    fn huge_thresholds_disable_spiking() {
        let cfg = SpikingConfig::new(1e9, 1e9, 4).unwrap();
        let mut r = rng();
        let m = PromptModel::new(PromptVariant::SpikingGpf, 3, 5, Some(cfg), &mut r).unwrap();
        let x = Tensor::uniform(4, 5, 1.0, &mut r);
        let out = spiking_prompt(&x, &m).unwrap();
        assert_eq!(out.pre_softmax.as_ref().unwrap(), &Tensor::zeros(4, 3));
        assert!(out
            .coefficients
            .data()
            .iter()
            .all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(out.prompts, Tensor::zeros(4, 5));
        assert_eq!(out.prompted_features, x);
        let report = prompt_sparsity_report(&out);
        assert_eq!(report.sparsity_p, 1.0);
        assert_eq!(report.sparsity_s_pre_softmax, 1.0);
        assert_eq!(report.atoms_active_per_node, 0.0);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in PromptVariant::ALL {
            assert_eq!(v.name().parse::<PromptVariant>().unwrap(), v);
        }
        assert!("nope".parse::<PromptVariant>().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = SpikingConfig::new(0.05, 0.1, 4).unwrap();
        let m = PromptModel::new(PromptVariant::SpikingGpf, 3, 5, Some(cfg), &mut rng()).unwrap();
        assert_eq!(PromptModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
        let g = PromptModel::new(PromptVariant::Gpf, 3, 5, None, &mut rng()).unwrap();
        assert_eq!(PromptModel::from_checkpoint(&g.to_checkpoint()).unwrap(), g);
        assert!(PromptModel::from_checkpoint("garbage\n").is_err());
    }
}
