//! Node-classification graphs: storage, text I/O, GCN normalization, the
//! stochastic block model generator, few-shot splits and random edge attacks.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, Stream};
use crate::tensor::{CsrMatrix, Tensor};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

/// Undirected, unweighted graph with node features and class labels.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted and deduplicated.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    features: Tensor,
    edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Validates and canonicalizes. Self-loops are dropped and duplicate
    /// undirected edges collapsed.
    pub fn new(
        features: Tensor,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some((line, &value)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                line: line + 1,
                value: value as i64,
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite { op: "features" });
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::NonContiguousIds {
                    id: u.max(v) as i64,
                    n,
                });
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Graph {
            features,
            edges: set.into_iter().collect(),
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Node ids grouped by class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Same structure and labels with replaced node features.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::ShapeMismatch {
                op: "with_features",
                left: self.features.shape(),
                right: features.shape(),
            });
        }
        Ok(Graph {
            features,
            edges: self.edges.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        })
    }

    fn max_edges(&self) -> usize {
        let n = self.num_nodes();
        n * n.saturating_sub(1) / 2
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `edges.tsv`, `features.csv` and `labels.csv` from `dir`.
///
/// The node count comes from the feature rows; the class count is one more
/// than the largest label.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let features_path = dir.join(FEATURES_FILE);
    let labels_path = dir.join(LABELS_FILE);
    let edges_path = dir.join(EDGES_FILE);

    let text = read_text(&features_path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(&features_path, i + 1, e.to_string()))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::RaggedFeatures {
                    line: i + 1,
                    expected: w,
                    found: row.len(),
                })
            }
            _ => {}
        }
        data.extend(row);
        n += 1;
    }
    let features = Tensor::from_vec(n, width.unwrap_or(0), data)?;

    let text = read_text(&labels_path)?;
    let mut labels = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        for tok in line.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
            let value: i64 = tok.parse().map_err(|e: std::num::ParseIntError| {
                parse_err(&labels_path, i + 1, e.to_string())
            })?;
            if value < 0 {
                return Err(Error::LabelOutOfRange { line: i + 1, value });
            }
            labels.push(value as usize);
        }
    }
    if labels.len() != n {
        return Err(parse_err(
            &labels_path,
            labels.len(),
            format!("{} labels for {n} feature rows", labels.len()),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);

    let text = read_text(&edges_path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(parse_err(&edges_path, i + 1, "expected two node ids"));
        }
        let mut ids = [0usize; 2];
        for (slot, tok) in ids.iter_mut().zip(&toks) {
            let id: i64 = tok.parse().map_err(|e: std::num::ParseIntError| {
                parse_err(&edges_path, i + 1, e.to_string())
            })?;
            if id < 0 || id as usize >= n {
                return Err(Error::NonContiguousIds { id, n });
            }
            *slot = id as usize;
        }
        edges.push((ids[0], ids[1]));
    }

    Graph::new(features, edges, labels, num_classes)
}

/// Writes the three-file layout read by [`load_graph`].
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path: PathBuf = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };

    let mut edges = String::new();
    for &(u, v) in g.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write(EDGES_FILE, edges)?;

    let mut features = String::new();
    for r in 0..g.num_nodes() {
        let row: Vec<String> = g.features().row(r).iter().map(|v| v.to_string()).collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }
    write(FEATURES_FILE, features)?;

    let mut labels = String::new();
    for l in g.labels() {
        labels.push_str(&format!("{l}\n"));
    }
    write(LABELS_FILE, labels)
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
    degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Degrees of `A + I`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn to_dense(&self) -> Tensor {
        self.matrix.to_dense()
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let mut degrees = vec![1.0f64; n];
    for &(u, v) in g.edges() {
        degrees[u] += 1.0;
        degrees[v] += 1.0;
    }
    let weight = |i: usize, j: usize| 1.0 / (degrees[i] * degrees[j]).sqrt();
    let mut triplets = Vec::with_capacity(n + 2 * g.num_edges());
    for i in 0..n {
        triplets.push((i, i, weight(i, i)));
    }
    for &(u, v) in g.edges() {
        let w = weight(u, v);
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(n, n, triplets),
        degrees,
    }
}

/// Parameters of the stochastic block model generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub nodes_per_class: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            nodes_per_class: 50,
            num_classes: 3,
            p_in: 0.2,
            p_out: 0.02,
            feature_noise: 0.5,
            seed: 7,
        }
    }
}

/// Stochastic block model with one block per class.
///
/// Node `i` belongs to class `i / nodes_per_class`. Features are
/// `num_classes`-dimensional: the one-hot class indicator plus isotropic
/// Gaussian noise with standard deviation `feature_noise`.
pub fn generate_sbm(p: &SbmParams) -> Result<Graph> {
    if !(0.0 <= p.p_out && p.p_out < p.p_in && p.p_in <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            p.p_in, p.p_out
        )));
    }
    if p.nodes_per_class < 2 || p.num_classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need >= 2 nodes per class and >= 2 classes, got {} x {}",
            p.nodes_per_class, p.num_classes
        )));
    }
    if !(p.feature_noise >= 0.0 && p.feature_noise.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "feature noise must be a finite non-negative stddev, got {}",
            p.feature_noise
        )));
    }
    let c = p.num_classes;
    let n = p.nodes_per_class * c;
    let labels: Vec<usize> = (0..n).map(|i| i / p.nodes_per_class).collect();

    let mut rng = seeds::rng(p.seed, Stream::Graph, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = if labels[u] == labels[v] {
                p.p_in
            } else {
                p.p_out
            };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let noise = Normal::new(0.0, p.feature_noise).expect("validated stddev");
    let mut features = Tensor::zeros(n, c);
    for i in 0..n {
        for k in 0..c {
            let mean = if labels[i] == k { 1.0 } else { 0.0 };
            features.set(i, k, mean + noise.sample(&mut rng));
        }
    }
    Graph::new(features, edges, labels, c)
}

/// Disjoint train/validation/test node sets with `shots` training nodes per class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub shots: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub const DEFAULT_VAL_PER_CLASS: usize = 5;

/// Per class: shuffle members, take `shots` for training, `val_per_class`
/// for validation, and leave the rest for testing. Output id lists are sorted.
pub fn sample_few_shot(
    g: &Graph,
    shots: usize,
    val_per_class: usize,
    seed: u64,
) -> Result<FewShotSplit> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be >= 1".into()));
    }
    let mut rng = seeds::rng(seed, Stream::Split, 0);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (class, mut members) in g.class_members().into_iter().enumerate() {
        let required = shots + val_per_class;
        if members.len() < required {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required,
            });
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..shots]);
        val.extend_from_slice(&members[shots..required]);
        test.extend_from_slice(&members[required..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(FewShotSplit {
        shots,
        seed,
        train,
        val,
        test,
    })
}

/// Inserts `floor(rate * |E|)` uniformly random new undirected edges.
///
/// Features and labels are untouched. The attack only adds edges.
pub fn random_edge_attack(g: &Graph, rate: f64, seed: u64) -> Result<Graph> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "attack rate must be >= 0, got {rate}"
        )));
    }
    // The epsilon keeps products like 0.6 * 100 from flooring to 59.
    let budget = (rate * g.num_edges() as f64 + 1e-9).floor() as usize;
    if budget == 0 {
        return Ok(g.clone());
    }
    let available = g.max_edges() - g.num_edges();
    if available == 0 {
        return Err(Error::GraphComplete);
    }
    if budget > available {
        return Err(Error::InvalidParameter(format!(
            "attack needs {budget} new edges but only {available} non-edges exist"
        )));
    }

    let n = g.num_nodes();
    let mut rng = seeds::rng(seed, Stream::Attack, 0);
    let mut added: BTreeSet<(usize, usize)> = BTreeSet::new();
    if budget * 4 >= available {
        let mut candidates = Vec::with_capacity(available);
        for u in 0..n {
            for v in (u + 1)..n {
                if !g.has_edge(u, v) {
                    candidates.push((u, v));
                }
            }
        }
        let (chosen, _) = candidates.partial_shuffle(&mut rng, budget);
        added.extend(chosen.iter().copied());
    } else {
        while added.len() < budget {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if !g.has_edge(e.0, e.1) {
                added.insert(e);
            }
        }
    }

    Graph::new(
        g.features.clone(),
        g.edges.iter().copied().chain(added),
        g.labels.clone(),
        g.num_classes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, edges: &[(usize, usize)]) -> Graph {
        let labels = (0..n).map(|i| i % 2).collect();
        Graph::new(Tensor::zeros(n, 2), edges.iter().copied(), labels, 2).unwrap()
    }

    #[test]
    fn canonicalizes_edges() {
        let g = tiny(4, &[(1, 0), (0, 1), (2, 2), (3, 1)]);
        assert_eq!(g.edges(), &[(0, 1), (1, 3)]);
    }

    #[test]
    fn rejects_out_of_range_labels_and_ids() {
        assert!(matches!(
            Graph::new(Tensor::zeros(2, 1), vec![], vec![0, 2], 2),
            Err(Error::LabelOutOfRange { line: 2, value: 2 })
        ));
        assert!(matches!(
            Graph::new(Tensor::zeros(2, 1), vec![(0, 2)], vec![0, 1], 2),
            Err(Error::NonContiguousIds { id: 2, n: 2 })
        ));
    }

    #[test]
    fn normalized_two_node_graph() {
        let a = normalize_adjacency(&tiny(2, &[(0, 1)])).to_dense();
        assert_eq!(a, Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]));
    }

    #[test]
    fn normalized_isolated_node() {
        let g = Graph::new(Tensor::zeros(1, 1), vec![], vec![0], 2).unwrap();
        assert_eq!(
            normalize_adjacency(&g).to_dense(),
            Tensor::from_rows(&[vec![1.0]])
        );
    }

    #[test]
    fn normalized_triangle() {
        let a = normalize_adjacency(&tiny(3, &[(0, 1), (1, 2), (0, 2)])).to_dense();
        assert!(a.data().iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn star_hub_row_sum_exceeds_one() {
        // Row sums of the symmetric normalization are not bounded by one.
        let edges: Vec<_> = (1..9).map(|leaf| (0, leaf)).collect();
        let a = normalize_adjacency(&tiny(9, &edges)).to_dense();
        let hub: f64 = a.row(0).iter().sum();
        assert!(hub > 1.0);
    }

    #[test]
    fn sbm_is_deterministic_and_sized() {
        let p = SbmParams::default();
        let a = generate_sbm(&p).unwrap();
        let b = generate_sbm(&p).unwrap();
        assert_eq!(a.num_nodes(), 150);
        assert_eq!(a.num_classes(), 3);
        assert_eq!(a.feature_dim(), 3);
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
    }

    #[test]
    fn sbm_without_cross_edges() {
        let g = generate_sbm(&SbmParams {
            p_out: 0.0,
            ..SbmParams::default()
        })
        .unwrap();
        assert!(g.num_edges() > 0);
        assert!(g
            .edges()
            .iter()
            .all(|&(u, v)| g.labels()[u] == g.labels()[v]));
    }

    #[test]
    fn sbm_parameter_checks() {
        let base = SbmParams::default();
        assert!(generate_sbm(&SbmParams {
            p_in: 0.1,
            p_out: 0.1,
            ..base
        })
        .is_err());
        assert!(generate_sbm(&SbmParams { p_in: 1.2, ..base }).is_err());
        assert!(generate_sbm(&SbmParams {
            nodes_per_class: 1,
            ..base
        })
        .is_err());
        assert!(generate_sbm(&SbmParams {
            feature_noise: -1.0,
            ..base
        })
        .is_err());
    }

    #[test]
    fn few_shot_sizes() {
        let g = generate_sbm(&SbmParams::default()).unwrap();
        let s = sample_few_shot(&g, 1, 5, 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3, 15, 132));
        assert_eq!(s, sample_few_shot(&g, 1, 5, 0).unwrap());
    }

    #[test]
    fn few_shot_class_too_small() {
        let g = tiny(4, &[]);
        assert!(matches!(
            sample_few_shot(&g, 1, 5, 0),
            Err(Error::ClassTooSmall {
                available: 2,
                required: 6,
                ..
            })
        ));
    }

    #[test]
    fn attack_identity_and_counts() {
        let g = generate_sbm(&SbmParams::default()).unwrap();
        assert_eq!(random_edge_attack(&g, 0.0, 1).unwrap(), g);
        let e = g.num_edges();
        let attacked = random_edge_attack(&g, 1.0, 1).unwrap();
        assert_eq!(attacked.num_edges(), 2 * e);
        assert!(g.edges().iter().all(|&(u, v)| attacked.has_edge(u, v)));
        assert!(random_edge_attack(&g, -0.1, 1).is_err());
    }

    #[test]
    fn attack_on_complete_graph() {
        let g = tiny(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(matches!(
            random_edge_attack(&g, 0.5, 0),
            Err(Error::GraphComplete)
        ));
        assert_eq!(random_edge_attack(&g, 0.0, 0).unwrap(), g);
    }

    #[test]
    fn dense_attack_uses_enumeration() {
        let g = tiny(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let attacked = random_edge_attack(&g, 2.0, 3).unwrap();
        assert_eq!(attacked.num_edges(), 15);
    }
}
