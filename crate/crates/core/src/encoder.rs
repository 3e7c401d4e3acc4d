//! Three-layer GCN encoder, edge-prediction pretraining and the linear
//! classifier head.

use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Var};
use crate::checkpoint::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};
use crate::optim::Adam;
use crate::seeds::{self, Stream};
use crate::tensor::Tensor;

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_INPUT_DIM: usize = 100;
const CHECKPOINT_MAGIC: &str = "spikegpf-encoder v1";

/// Fixed Gaussian projection that maps raw features to the encoder input
/// width. Entries are `N(0, 1/in_dim)` drawn from `seed`, so the matrix is
/// reproducible from `(in_dim, out_dim, seed)` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureProjection {
    seed: u64,
    matrix: Tensor,
}

impl FeatureProjection {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed, Stream::Projection, 0);
        let std = 1.0 / (in_dim.max(1) as f64).sqrt();
        FeatureProjection {
            seed,
            matrix: Tensor::normal(in_dim, out_dim, std, &mut rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        features.matmul(&self.matrix)
    }

    pub fn apply_graph(&self, g: &Graph) -> Result<Graph> {
        g.with_features(self.apply(g.features())?)
    }
}

/// GCN weights `W1: d x h`, `W2: h x h`, `W3: h x h`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    weights: [Tensor; 3],
    frozen: bool,
}

impl EncoderModel {
    /// Glorot-uniform initialization.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let glorot = |fan_in: usize, fan_out: usize, rng: &mut R| {
            let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            Tensor::uniform(fan_in, fan_out, bound, rng)
        };
        let w1 = glorot(in_dim, hidden, rng);
        let w2 = glorot(hidden, hidden, rng);
        let w3 = glorot(hidden, hidden, rng);
        EncoderModel {
            weights: [w1, w2, w3],
            frozen: false,
        }
    }

    pub fn from_weights(weights: [Tensor; 3], frozen: bool) -> Result<Self> {
        let [w1, w2, w3] = &weights;
        let h = w1.cols();
        if w2.shape() != (h, h) || w3.shape() != (h, h) {
            return Err(Error::ShapeMismatch {
                op: "encoder",
                left: w1.shape(),
                right: w2.shape(),
            });
        }
        Ok(EncoderModel { weights, frozen })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn hidden(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn weights(&self) -> &[Tensor; 3] {
        &self.weights
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// SHA-256 over the dimensions and the bit patterns of every weight.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.weights {
            hasher.update((w.rows() as u64).to_le_bytes());
            hasher.update((w.cols() as u64).to_le_bytes());
            for v in w.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `Z1 = relu(A X W1)`, `Z2 = relu(A Z1 W2)`, `Z3 = A Z2 W3`.
pub fn encode_on<'a>(
    tape: &mut Tape<'a>,
    adj: &'a NormalizedAdjacency,
    x: Var,
    weights: [Var; 3],
) -> Result<Var> {
    let mut h = x;
    for (layer, w) in weights.into_iter().enumerate() {
        let xw = tape.matmul(h, w)?;
        let agg = tape.spmm(adj.matrix(), xw)?;
        h = if layer < 2 { tape.relu(agg)? } else { agg };
    }
    Ok(h)
}

pub fn encode(
    adj: &NormalizedAdjacency,
    features: &Tensor,
    model: &EncoderModel,
) -> Result<Tensor> {
    if features.rows() != adj.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            left: (adj.num_nodes(), adj.num_nodes()),
            right: features.shape(),
        });
    }
    let mut tape = Tape::new();
    let x = tape.constant(features.clone())?;
    let ws = constant_weights(&mut tape, model)?;
    let z = encode_on(&mut tape, adj, x, ws)?;
    Ok(tape.value(z).clone())
}

pub(crate) fn constant_weights(tape: &mut Tape<'_>, model: &EncoderModel) -> Result<[Var; 3]> {
    let [a, b, c] = &model.weights;
    Ok([
        tape.constant(a.clone())?,
        tape.constant(b.clone())?,
        tape.constant(c.clone())?,
    ])
}

/// Linear head `logits = Z theta + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassifierHead {
    /// Weight `U(-1/sqrt(h), 1/sqrt(h))`, zero bias.
    pub fn new<R: Rng + ?Sized>(hidden: usize, num_classes: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        ClassifierHead {
            weight: Tensor::uniform(hidden, num_classes, bound, rng),
            bias: Tensor::zeros(1, num_classes),
        }
    }

    pub fn zeros(hidden: usize, num_classes: usize) -> Self {
        ClassifierHead {
            weight: Tensor::zeros(hidden, num_classes),
            bias: Tensor::zeros(1, num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }
}

pub fn classify_on(tape: &mut Tape<'_>, z: Var, weight: Var, bias: Var) -> Result<Var> {
    let zw = tape.matmul(z, weight)?;
    tape.add_row_broadcast(zw, bias)
}

pub fn classify(embeddings: &Tensor, head: &ClassifierHead) -> Result<Tensor> {
    if head.bias.shape() != (1, head.weight.cols()) {
        return Err(Error::ShapeMismatch {
            op: "classify",
            left: head.weight.shape(),
            right: head.bias.shape(),
        });
    }
    let mut tape = Tape::new();
    let z = tape.constant(embeddings.clone())?;
    let w = tape.constant(head.weight.clone())?;
    let b = tape.constant(head.bias.clone())?;
    let logits = classify_on(&mut tape, z, w, b)?;
    Ok(tape.value(logits).clone())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainOptions {
    pub epochs: usize,
    /// Negatives sampled per positive edge.
    pub neg_ratio: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            epochs: 100,
            neg_ratio: 1,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    /// Frozen encoder.
    pub encoder: EncoderModel,
    /// Edge-prediction loss per epoch.
    pub losses: Vec<f64>,
}

/// Uniform non-edges `(u, v)`, `u != v`. Repeats are allowed.
pub fn sample_non_edges<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let n = g.num_nodes();
    if n < 2 || g.num_edges() >= n * (n - 1) / 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !g.has_edge(u, v) {
            out.push((u, v));
        }
    }
    out
}

/// Self-supervised edge prediction: binary cross-entropy on dot-product
/// scores `z_u . z_v`, with every edge as a positive and fresh uniform
/// non-edges as negatives each epoch. Returns the encoder frozen.
pub fn pretrain_edgepred(
    g: &Graph,
    model: EncoderModel,
    opts: &PretrainOptions,
) -> Result<Pretrained> {
    if model.is_frozen() {
        return Err(Error::EncoderFrozen);
    }
    if g.num_edges() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    if g.feature_dim() != model.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "pretrain_edgepred",
            left: g.features().shape(),
            right: model.weights[0].shape(),
        });
    }
    let adj = normalize_adjacency(g);
    let mut model = model;
    let shapes: Vec<_> = model.weights.iter().map(Tensor::shape).collect();
    let mut opt = Adam::new(opts.lr, 0.0, &shapes)?;
    let mut losses = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let mut rng = seeds::rng(opts.seed, Stream::NegativeSampling, epoch as u64);
        let negatives = sample_non_edges(g, opts.neg_ratio * g.num_edges(), &mut rng);
        let mut pairs = g.edges().to_vec();
        let mut targets = vec![1.0; pairs.len()];
        targets.extend(std::iter::repeat_n(0.0, negatives.len()));
        pairs.extend(negatives);

        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone())?;
        let [a, b, c] = &model.weights;
        let ws = [
            tape.param(a.clone())?,
            tape.param(b.clone())?,
            tape.param(c.clone())?,
        ];
        let z = encode_on(&mut tape, &adj, x, ws)?;
        let scores = tape.pair_dot(z, &pairs)?;
        let loss = tape.bce_with_logits(scores, &targets)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(value);
        let grads = tape.backward(loss)?;
        let gs: Vec<Tensor> = ws
            .iter()
            .zip(&shapes)
            .map(|(&w, &s)| grads.get_or_zeros(w, s))
            .collect();
        let [w1, w2, w3] = &mut model.weights;
        opt.step(&mut [w1, w2, w3], &[&gs[0], &gs[1], &gs[2]])?;
    }

    Ok(Pretrained {
        encoder: model.freeze(),
        losses,
    })
}

/// A frozen encoder plus the projection that maps raw features to its input.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedEncoder {
    pub projection: Option<FeatureProjection>,
    pub encoder: EncoderModel,
}

impl PretrainedEncoder {
    /// Applies the projection, if any, and checks the resulting width.
    pub fn prepare_graph(&self, g: &Graph) -> Result<Graph> {
        let g = match &self.projection {
            Some(p) => p.apply_graph(g)?,
            None => g.clone(),
        };
        if g.feature_dim() != self.encoder.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "prepare_graph",
                left: g.features().shape(),
                right: self.encoder.weights[0].shape(),
            });
        }
        Ok(g)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut w = Writer::new(CHECKPOINT_MAGIC);
        w.field("in_dim", &[self.encoder.in_dim().to_string()]);
        w.field("hidden", &[self.encoder.hidden().to_string()]);
        w.field("frozen", &[u8::from(self.encoder.frozen).to_string()]);
        match &self.projection {
            Some(p) => w.field(
                "projection",
                &[
                    p.in_dim().to_string(),
                    p.out_dim().to_string(),
                    p.seed.to_string(),
                ],
            ),
            None => w.field("projection", &["none".to_string()]),
        }
        for (i, t) in self.encoder.weights.iter().enumerate() {
            w.tensor(&format!("W{}", i + 1), t);
        }
        w.finish()
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut r = Reader::new(text, CHECKPOINT_MAGIC)?;
        let in_dim: usize = r.scalar("in_dim")?;
        let hidden: usize = r.scalar("hidden")?;
        let frozen = match r.scalar::<u8>("frozen")? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Checkpoint(format!(
                    "frozen: expected 0 or 1, got {other}"
                )))
            }
        };
        let projection = match r.field("projection")?.as_slice() {
            ["none"] => None,
            [i, o, s] => {
                let p = |v: &str| {
                    v.parse::<u64>()
                        .map_err(|e| Error::Checkpoint(format!("projection: {e}")))
                };
                Some(FeatureProjection::new(
                    p(i)? as usize,
                    p(o)? as usize,
                    p(s)?,
                ))
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "projection: unexpected {other:?}"
                )))
            }
        };
        let weights = [r.tensor("W1")?, r.tensor("W2")?, r.tensor("W3")?];
        let encoder = EncoderModel::from_weights(weights, frozen)?;
        if encoder.in_dim() != in_dim || encoder.hidden() != hidden {
            return Err(Error::Checkpoint(format!(
                "header says {in_dim}x{hidden}, weights are {}x{}",
                encoder.in_dim(),
                encoder.hidden()
            )));
        }
        if let Some(p) = &projection {
            if p.out_dim() != in_dim {
                return Err(Error::Checkpoint(
                    "projection width does not match encoder input".into(),
                ));
            }
        }
        Ok(PretrainedEncoder {
            projection,
            encoder,
        })
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

/// Projects `g` to `input_dim`, pretrains a fresh encoder on its edges, and
/// bundles both.
pub fn pretrain_pipeline(
    g: &Graph,
    input_dim: usize,
    hidden: usize,
    opts: &PretrainOptions,
) -> Result<(PretrainedEncoder, Vec<f64>)> {
    let projection = FeatureProjection::new(g.feature_dim(), input_dim, opts.seed);
    let projected = projection.apply_graph(g)?;
    let mut rng = seeds::rng(opts.seed, Stream::EncoderInit, 0);
    let model = EncoderModel::new(input_dim, hidden, &mut rng);
    let out = pretrain_edgepred(&projected, model, opts)?;
    Ok((
        PretrainedEncoder {
            projection: Some(projection),
            encoder: out.encoder,
        },
        out.losses,
    ))
}
