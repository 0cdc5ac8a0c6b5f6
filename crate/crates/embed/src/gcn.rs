//! Two-layer graph convolutional POI classifier; its hidden layer is the
//! node embedding.
//!
//! `H = relu(Â X W1 + b1)`, `logits = Â H W2 + b2`, softmax cross-entropy on
//! the training nodes, full-batch gradient descent with early stopping on
//! validation loss. Gradients are derived by hand.

use std::io::{Read, Write};

use mixcity_core::fmt::fmt_f64;
use mixcity_core::places::PoiIndex;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Csr, PlaceGraph};
use crate::tensors::{find, Tensor};
use crate::{EmbedError, Result};

pub const EMBEDDING_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self { seed: 7, epochs: 500, lr: 0.5, hidden: EMBEDDING_DIM, patience: 100, val_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

impl GcnParams {
    /// Glorot-uniform weights and zero biases. Draws depend only on the
    /// shapes and the seed, never on node order.
    pub fn init(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |r: usize, c: usize| {
            let a = (6.0 / (r + c) as f64).sqrt();
            let v: Vec<f64> = (0..r * c).map(|_| rng.random_range(-a..a)).collect();
            DMatrix::from_row_slice(r, c, &v)
        };
        let w1 = glorot(inputs, hidden);
        let w2 = glorot(hidden, classes);
        Self { w1, b1: DMatrix::zeros(1, hidden), w2, b2: DMatrix::zeros(1, classes) }
    }

    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self { w1: DMatrix::zeros(inputs, hidden), b1: DMatrix::zeros(1, hidden), w2: DMatrix::zeros(hidden, classes), b2: DMatrix::zeros(1, classes) }
    }

    fn parts(&self) -> [&DMatrix<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn parts_mut(&mut self) -> [&mut DMatrix<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn n_params(&self) -> usize {
        self.parts().iter().map(|m| m.len()).sum()
    }

    /// All parameters in a fixed order.
    pub fn flat(&self) -> Vec<f64> {
        self.parts().iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let mut k = 0;
        for m in self.parts_mut() {
            for x in m.iter_mut() {
                *x = v[k];
                k += 1;
            }
        }
    }

    fn axpy(&mut self, a: f64, g: &GcnParams) {
        for (m, d) in self.parts_mut().into_iter().zip(g.parts()) {
            *m += d * a;
        }
    }

    pub fn to_tensors(&self, prefix: &str) -> Vec<Tensor> {
        ["w1", "b1", "w2", "b2"].iter().zip(self.parts()).map(|(n, m)| Tensor::from_matrix(format!("{prefix}{n}"), m)).collect()
    }

    pub fn from_tensors(ts: &[Tensor], prefix: &str) -> Result<Self> {
        let get = |n: &str| find(ts, &format!("{prefix}{n}")).map(|t| t.to_matrix());
        Ok(Self { w1: get("w1")?, b1: get("b1")?, w2: get("w2")?, b2: get("b2")? })
    }
}

fn add_row(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] += b[(0, j)];
        }
    }
}

fn col_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

/// Row-wise softmax.
fn softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = logits.clone();
    for i in 0..p.nrows() {
        let mut row = p.row_mut(i);
        let mx = row.max();
        row.apply(|v| *v = (*v - mx).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

struct Forward {
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    q: DMatrix<f64>,
    logits: DMatrix<f64>,
}

/// A graph with node features and labels, ready for training.
pub struct GcnProblem<'a> {
    a_hat: &'a Csr,
    ax: DMatrix<f64>,
    labels: &'a [usize],
    n_classes: usize,
}

impl<'a> GcnProblem<'a> {
    pub fn new(a_hat: &'a Csr, features: &DMatrix<f64>, labels: &'a [usize], n_classes: usize) -> Result<Self> {
        if features.nrows() != a_hat.n || labels.len() != a_hat.n {
            return Err(EmbedError::Input(format!("{} nodes, {} feature rows, {} labels", a_hat.n, features.nrows(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(EmbedError::Input(format!("label {l} outside {n_classes} classes")));
        }
        Ok(Self { a_hat, ax: a_hat.mul_dense(features), labels, n_classes })
    }

    fn forward(&self, p: &GcnParams) -> Forward {
        let mut z1 = &self.ax * &p.w1;
        add_row(&mut z1, &p.b1);
        let h1 = z1.map(|v| v.max(0.0));
        let q = self.a_hat.mul_dense(&h1);
        let mut logits = &q * &p.w2;
        add_row(&mut logits, &p.b2);
        Forward { z1, h1, q, logits }
    }

    fn ce(&self, probs: &DMatrix<f64>, nodes: &[usize]) -> f64 {
        let s: f64 = nodes
            .iter()
            .map(|&i| match probs[(i, self.labels[i])] {
                p if p.is_nan() => f64::NAN,
                p => -p.max(f64::MIN_POSITIVE).ln(),
            })
            .sum();
        s / nodes.len().max(1) as f64
    }

    /// Mean cross-entropy over `nodes`.
    pub fn loss(&self, p: &GcnParams, nodes: &[usize]) -> f64 {
        self.ce(&softmax(&self.forward(p).logits), nodes)
    }

    pub fn loss_and_grad(&self, p: &GcnParams, nodes: &[usize]) -> (f64, GcnParams) {
        let f = self.forward(p);
        let probs = softmax(&f.logits);
        let loss = self.ce(&probs, nodes);
        let n = nodes.len().max(1) as f64;
        let mut dl = DMatrix::zeros(probs.nrows(), self.n_classes);
        for &i in nodes {
            for c in 0..self.n_classes {
                dl[(i, c)] = probs[(i, c)] / n;
            }
            dl[(i, self.labels[i])] -= 1.0 / n;
        }
        let dw2 = f.q.transpose() * &dl;
        let db2 = col_sums(&dl);
        let dq = &dl * p.w2.transpose();
        // Â is symmetric, so Âᵀ dQ = Â dQ.
        let mut dz1 = self.a_hat.mul_dense(&dq);
        dz1.zip_apply(&f.z1, |g, z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let dw1 = self.ax.transpose() * &dz1;
        let db1 = col_sums(&dz1);
        (loss, GcnParams { w1: dw1, b1: db1, w2: dw2, b2: db2 })
    }

    pub fn accuracy(&self, p: &GcnParams, nodes: &[usize]) -> f64 {
        let logits = self.forward(p).logits;
        let hits = nodes.iter().filter(|&&i| logits.row(i).transpose().argmax().0 == self.labels[i]).count();
        hits as f64 / nodes.len().max(1) as f64
    }

    /// Hidden-layer activations for every node.
    pub fn embed(&self, p: &GcnParams) -> DMatrix<f64> {
        self.forward(p).h1
    }
}

/// Standardized planar coordinates, log weighted degree, and the
/// weight-normalized category histogram of each node's neighbors (the node's
/// own label is never included).
pub fn node_features(graph: &PlaceGraph, xy: &[(f64, f64)], labels: &[usize], n_classes: usize) -> DMatrix<f64> {
    let n = graph.n;
    let mut f = DMatrix::zeros(n, 3 + n_classes);
    for axis in 0..2 {
        let v: Vec<f64> = xy.iter().map(|p| if axis == 0 { p.0 } else { p.1 }).collect();
        let mean = v.iter().sum::<f64>() / n.max(1) as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for i in 0..n {
            f[(i, axis)] = (v[i] - mean) / sd;
        }
    }
    let deg = graph.degree();
    let adj = graph.adjacency();
    for i in 0..n {
        f[(i, 2)] = deg[i].ln_1p();
        if deg[i] > 0.0 {
            for (j, w) in adj.row(i) {
                f[(i, 3 + labels[j])] += w / deg[i];
            }
        }
    }
    f
}

/// Validation nodes by seeded shuffle of the sorted ids, so the split does
/// not depend on node order. Returns `(train, validation)` node indices, each
/// ascending.
pub fn split_nodes(ids: &[String], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]).then(a.cmp(&b)));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM));
    let n_val = (ids.len() as f64 * val_fraction).round() as usize;
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Keeps the split stream apart from the weight-initialization stream.
const SPLIT_STREAM: u64 = 0x5eed_5017;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub ids: Vec<String>,
    /// One row per node.
    pub vectors: DMatrix<f64>,
    pub info: TrainingInfo,
}

impl NodeEmbeddings {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Trains on the ids' train split and returns the embeddings of the epoch
/// with the lowest validation loss.
pub fn train_gcn(
    graph: &PlaceGraph,
    features: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    ids: &[String],
    cfg: &GcnConfig,
) -> Result<(NodeEmbeddings, GcnParams)> {
    if !(cfg.lr > 0.0) || cfg.hidden == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(EmbedError::Parameter(format!("{cfg:?}")));
    }
    if ids.len() != graph.n {
        return Err(EmbedError::Input(format!("{} ids for {} nodes", ids.len(), graph.n)));
    }
    let a_hat = graph.normalized_adjacency();
    let prob = GcnProblem::new(&a_hat, features, labels, n_classes)?;
    let (train, val) = split_nodes(ids, cfg.val_fraction, cfg.seed);
    if train.is_empty() {
        return Err(EmbedError::Input("no training nodes".into()));
    }
    let monitor = if val.is_empty() { &train } else { &val };
    let mut p = GcnParams::init(features.ncols(), cfg.hidden, n_classes, cfg.seed);
    let mut best = (prob.loss(&p, monitor), 0usize, p.clone());
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let (loss, g) = prob.loss_and_grad(&p, &train);
        if !loss.is_finite() {
            let norm: f64 = p.flat().iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(EmbedError::NonFinite(format!("epoch {epoch}: training loss {loss}, parameter norm {norm}, lr {}", cfg.lr)));
        }
        p.axpy(-cfg.lr, &g);
        epochs_run = epoch;
        let vl = prob.loss(&p, monitor);
        if !vl.is_finite() {
            return Err(EmbedError::NonFinite(format!("epoch {epoch}: validation loss {vl} after step with lr {}", cfg.lr)));
        }
        if vl < best.0 {
            best = (vl, epoch, p.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (val_loss, best_epoch, p) = best;
    let vectors = prob.embed(&p);
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite("embedding has non-finite entries".into()));
    }
    let info = TrainingInfo {
        seed: cfg.seed,
        epochs_run,
        best_epoch,
        train_accuracy: prob.accuracy(&p, &train),
        val_accuracy: prob.accuracy(&p, monitor),
        val_loss,
    };
    Ok((NodeEmbeddings { ids: ids.to_vec(), vectors, info }, p))
}

/// Trains on the POIs of `index` with their categories as labels.
pub fn embed_index(index: &PoiIndex, graph: &PlaceGraph, cfg: &GcnConfig) -> Result<(NodeEmbeddings, GcnParams)> {
    if graph.n != index.len() {
        return Err(EmbedError::Input(format!("graph has {} nodes, index {} POIs", graph.n, index.len())));
    }
    let xy: Vec<(f64, f64)> = (0..index.len()).map(|i| index.xy(i)).collect();
    let labels: Vec<usize> = (0..index.len()).map(|i| index.category_index(i)).collect();
    let c = index.categories().len();
    let features = node_features(graph, &xy, &labels, c);
    let ids: Vec<String> = index.pois().iter().map(|p| p.poi_id.clone()).collect();
    train_gcn(graph, &features, &labels, c, &ids, cfg)
}

pub fn write_embeddings_csv(emb: &NodeEmbeddings, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["poi_id".to_string()];
    header.extend((0..emb.dim()).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for (i, id) in emb.ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(emb.vectors.row(i).iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads ids and vectors; training metadata is not part of the file.
pub fn read_embeddings_csv(input: impl Read) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let dim = r.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        for k in 1..=dim {
            vals.push(rec[k].parse::<f64>().map_err(|_| EmbedError::Format(format!("embeddings row {}: bad value", line + 2)))?);
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), dim, &vals)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeType;

    fn toy() -> (PlaceGraph, DMatrix<f64>, Vec<usize>) {
        let edges = vec![(0, 1, 1.0), (1, 2, 0.5), (2, 3, 1.0), (3, 4, 0.7), (4, 0, 1.0), (5, 6, 1.0), (6, 7, 0.3), (7, 8, 1.0), (8, 9, 1.0), (2, 7, 0.2)];
        let g = PlaceGraph::from_edges(10, EdgeType::DistWeighted, 1.0, edges).unwrap();
        let f = DMatrix::from_fn(10, 4, |i, j| ((i * 7 + j * 3) as f64 * 0.61).sin());
        let labels = vec![0, 0, 1, 1, 0, 1, 1, 0, 1, 1];
        (g, f, labels)
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let (g, f, labels) = toy();
        let a = g.normalized_adjacency();
        let prob = GcnProblem::new(&a, &f, &labels, 3).unwrap();
        let all: Vec<usize> = (0..10).collect();
        assert!((prob.loss(&GcnParams::zeros(4, 3, 3), &all) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (g, f, labels) = toy();
        let a = g.normalized_adjacency();
        let prob = GcnProblem::new(&a, &f, &labels, 2).unwrap();
        let mut p = GcnParams::init(4, 3, 2, 11);
        p.b1 = DMatrix::from_row_slice(1, 3, &[0.05, -0.03, 0.02]);
        assert!(p.n_params() <= 32);
        let nodes = vec![0, 1, 2, 3, 5, 6, 8];
        let (_, grad) = prob.loss_and_grad(&p, &nodes);
        let analytic = grad.flat();
        let base = p.flat();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut q = p.clone();
            let mut v = base.clone();
            v[k] += h;
            q.set_flat(&v);
            let up = prob.loss(&q, &nodes);
            v[k] -= 2.0 * h;
            q.set_flat(&v);
            let down = prob.loss(&q, &nodes);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: fd {fd} analytic {}", analytic[k]);
        }
    }

    fn planted(n_per: usize, seed: u64) -> (PlaceGraph, DMatrix<f64>, Vec<usize>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per;
        let labels: Vec<usize> = (0..n).map(|i| i / n_per).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { 0.2 } else { 0.02 };
                if rng.random::<f64>() < p {
                    edges.push((i as u32, j as u32, 1.0));
                }
            }
        }
        let g = PlaceGraph::from_edges(n, EdgeType::DistBinary, 1.0, edges).unwrap();
        let xy: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let f = node_features(&g, &xy, &labels, 2);
        let ids = (0..n).map(|i| format!("n{i:03}")).collect();
        (g, f, labels, ids)
    }

    #[test]
    fn planted_clusters_are_learned() {
        let (g, f, labels, ids) = planted(50, 3);
        let (emb, _) = train_gcn(&g, &f, &labels, 2, &ids, &GcnConfig::default()).unwrap();
        assert!(emb.info.val_accuracy >= 0.95, "{:?}", emb.info);
        assert!(emb.info.epochs_run <= 500);
        assert_eq!(emb.dim(), 32);
    }

    #[test]
    fn permuting_nodes_permutes_embeddings() {
        let (g, f, labels, ids) = planted(20, 5);
        let cfg = GcnConfig { epochs: 50, ..GcnConfig::default() };
        let (e1, _) = train_gcn(&g, &f, &labels, 2, &ids, &cfg).unwrap();
        let n = g.n;
        let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 3) % n).collect(); // new position -> old node
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let edges = g.edges.iter().map(|&(i, j, w)| (inv[i as usize] as u32, inv[j as usize] as u32, w)).collect();
        let g2 = PlaceGraph::from_edges(n, g.edge_type, g.alpha, edges).unwrap();
        let f2 = DMatrix::from_fn(n, f.ncols(), |i, j| f[(perm[i], j)]);
        let l2: Vec<usize> = perm.iter().map(|&o| labels[o]).collect();
        let id2: Vec<String> = perm.iter().map(|&o| ids[o].clone()).collect();
        let (e2, _) = train_gcn(&g2, &f2, &l2, 2, &id2, &cfg).unwrap();
        for new in 0..n {
            for k in 0..32 {
                assert!((e2.vectors[(new, k)] - e1.vectors[(perm[new], k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_training() {
        let (g, f, labels, ids) = planted(15, 9);
        let cfg = GcnConfig { epochs: 30, ..GcnConfig::default() };
        let (a, pa) = train_gcn(&g, &f, &labels, 2, &ids, &cfg).unwrap();
        let (b, pb) = train_gcn(&g, &f, &labels, 2, &ids, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn divergence_is_reported() {
        let (g, f, labels, ids) = planted(10, 1);
        let cfg = GcnConfig { lr: 1e300, ..GcnConfig::default() };
        assert!(matches!(train_gcn(&g, &f, &labels, 2, &ids, &cfg), Err(EmbedError::NonFinite(_))));
    }

    #[test]
    fn isolated_nodes_allowed_and_features_exclude_self() {
        let g = PlaceGraph::from_edges(3, EdgeType::DistBinary, 1.0, vec![(0, 1, 1.0)]).unwrap();
        let f = node_features(&g, &[(0.0, 0.0), (1.0, 0.0), (5.0, 5.0)], &[0, 1, 1], 2);
        assert_eq!((f[(0, 3)], f[(0, 4)]), (0.0, 1.0));
        assert_eq!((f[(1, 3)], f[(1, 4)]), (1.0, 0.0));
        assert_eq!(f.row(2).columns(2, 3).sum(), 0.0);
    }

    #[test]
    fn embeddings_csv_round_trip() {
        let emb = NodeEmbeddings {
            ids: vec!["a".into(), "b".into()],
            vectors: DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.0, 2.25]),
            info: TrainingInfo { seed: 1, epochs_run: 1, best_epoch: 1, train_accuracy: 1.0, val_accuracy: 1.0, val_loss: 0.0 },
        };
        let mut buf = Vec::new();
        write_embeddings_csv(&emb, &mut buf).unwrap();
        let (ids, v) = read_embeddings_csv(buf.as_slice()).unwrap();
        assert_eq!(ids, emb.ids);
        assert_eq!(v, emb.vectors);
    }
}
