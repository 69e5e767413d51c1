//! A two-layer graph convolutional classifier with explicit gradients.
//!
//! The model scores every region for next-bin event occurrence:
//!
//! `p = sigmoid(A_hat * relu(A_hat * X * W1 + b1) * W2 + b2)`
//!
//! where `A_hat` is the symmetric degree-normalized adjacency with self
//! loops. Training is full-batch gradient descent on weighted binary
//! cross-entropy, with every gradient derived by hand so it can be checked
//! against finite differences. Everything here is serial and seeded: the
//! same config and data produce bit-identical traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::UrbanFeatures;
use crate::graph::{GraphFile, RegionGraph};
use crate::metrics::{self, EvaluationReport};
use crate::rng::SplitMix64;
use crate::temporal::SplitDataset;

// ---------------------------------------------------------------------------
// Dense matrix support
// ---------------------------------------------------------------------------

/// Row-major dense matrix. Node counts stay in the thousands, so dense
/// linear algebra keeps the arithmetic simple and fully testable.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    *out.at_mut(i, j) += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|k| self.at(i, k) * v[k]).sum())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Normalized adjacency
// ---------------------------------------------------------------------------

/// `A_hat = D^{-1/2} (A + I) D^{-1/2}` with `D = rowsum(A + I)`.
///
/// Isolated regions reduce to `A_hat[i][i] = 1`, so they pass through the
/// graph convolution untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub n: usize,
    pub matrix: Mat,
}

/// Build `A_hat` from a region graph. With `binary` the edge weights are
/// replaced by ones; otherwise the raw weights enter the normalization.
pub fn normalize_adjacency(graph: &RegionGraph, binary: bool) -> NormalizedAdjacency {
    let edges: Vec<(usize, usize, f64)> =
        graph.edges.iter().map(|e| (e.u, e.v, e.weight)).collect();
    normalized_adjacency_from_edges(graph.partition.len(), &edges, binary)
}

/// Same construction from a loaded graph file.
pub fn normalize_adjacency_file(file: &GraphFile, binary: bool) -> NormalizedAdjacency {
    normalized_adjacency_from_edges(file.n_regions(), &file.edges, binary)
}

pub fn normalized_adjacency_from_edges(
    n: usize,
    edges: &[(usize, usize, f64)],
    binary: bool,
) -> NormalizedAdjacency {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        *a.at_mut(i, i) = 1.0;
    }
    for &(u, v, w) in edges {
        let w = if binary { 1.0 } else { w };
        *a.at_mut(u, v) = w;
        *a.at_mut(v, u) = w;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = (0..n).map(|j| a.at(i, j)).sum();
            1.0 / deg.sqrt()
        })
        .collect();
    let mut matrix = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            *matrix.at_mut(i, j) = inv_sqrt_deg[i] * a.at(i, j) * inv_sqrt_deg[j];
        }
    }
    NormalizedAdjacency { n, matrix }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Positive-class weight; `None` selects `n_neg / n_pos` computed on the
    /// training split.
    pub pos_weight: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, epochs: 200, hidden: 16, seed: 42, pos_weight: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    /// Input width: window bins plus static feature columns.
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `input_dim x hidden_dim`.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// `hidden_dim` weights of the output head.
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl GcnModel {
    /// Uniform init in `[-sqrt(6 / (fan_in + fan_out)), +...]` drawn from
    /// the seeded stream in a fixed order: `w1` row-major, `b1`, `w2`, `b2`.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let bound1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let bound2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let mut w1 = Mat::zeros(input_dim, hidden_dim);
        for v in w1.data.iter_mut() {
            *v = rng.uniform(-bound1, bound1);
        }
        let b1 = (0..hidden_dim).map(|_| rng.uniform(-bound1, bound1)).collect();
        let w2 = (0..hidden_dim).map(|_| rng.uniform(-bound2, bound2)).collect();
        let b2 = rng.uniform(-bound2, bound2);
        Self { input_dim, hidden_dim, w1, b1, w2, b2 }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.len() + 1
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-node occurrence probabilities for one input matrix.
pub fn forward(model: &GcnModel, adj: &NormalizedAdjacency, x: &Mat) -> Result<Vec<f64>> {
    if x.rows != adj.n || x.cols != model.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "input is {}x{}, expected {}x{}",
            x.rows, x.cols, adj.n, model.input_dim
        )));
    }
    Ok(forward_from_ax(model, adj, &adj.matrix.matmul(x)).probabilities)
}

struct ForwardPass {
    /// Pre-activation of the hidden layer, `n x hidden`.
    pre: Mat,
    /// relu(pre).
    hidden: Mat,
    logits: Vec<f64>,
    probabilities: Vec<f64>,
}

/// Forward pass starting from the cached product `ax = A_hat * X`.
fn forward_from_ax(model: &GcnModel, adj: &NormalizedAdjacency, ax: &Mat) -> ForwardPass {
    let n = ax.rows;
    let h = model.hidden_dim;
    let mut pre = ax.matmul(&model.w1);
    for i in 0..n {
        for k in 0..h {
            *pre.at_mut(i, k) += model.b1[k];
        }
    }
    let mut hidden = pre.clone();
    for v in hidden.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let hw2 = hidden.matvec(&model.w2);
    let mut logits = adj.matrix.matvec(&hw2);
    for z in logits.iter_mut() {
        *z += model.b2;
    }
    let probabilities = logits.iter().map(|&z| sigmoid(z)).collect();
    ForwardPass { pre, hidden, logits, probabilities }
}

/// Gradients of the batch loss with respect to every parameter, in the same
/// layout as the model.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Mean weighted binary cross-entropy over all (sample, node) pairs, plus
/// its analytic gradients.
///
/// For logit `z`, label `y`, and weight `w` (pos_weight for positives, 1
/// otherwise) the per-pair loss is `w * (max(z,0) - z*y + ln(1 + e^{-|z|}))`
/// and its logit gradient is `w * (sigmoid(z) - y)`; the rest is the chain
/// rule through the two convolution layers.
pub fn loss_and_gradients(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    samples: &[PreparedSample],
    pos_weight: f64,
) -> (f64, Gradients) {
    let n = adj.n;
    let h = model.hidden_dim;
    let f = model.input_dim;
    let total = (samples.len() * n) as f64;

    let mut loss = 0.0;
    let mut grads = Gradients {
        w1: Mat::zeros(f, h),
        b1: vec![0.0; h],
        w2: vec![0.0; h],
        b2: 0.0,
    };

    for sample in samples {
        let pass = forward_from_ax(model, adj, &sample.ax);
        // Loss and dL/dz per node.
        let mut gz = vec![0.0; n];
        for i in 0..n {
            let z = pass.logits[i];
            let y = sample.labels[i];
            let w = if y > 0.5 { pos_weight } else { 1.0 };
            loss += w * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
            gz[i] = w * (pass.probabilities[i] - y) / total;
        }
        // z = A_hat * (hidden * w2) + b2, and A_hat is symmetric.
        let agz = adj.matrix.matvec(&gz);
        grads.b2 += gz.iter().sum::<f64>();
        for k in 0..h {
            grads.w2[k] += (0..n).map(|i| pass.hidden.at(i, k) * agz[i]).sum::<f64>();
        }
        // Backprop through relu into the first layer.
        for i in 0..n {
            for k in 0..h {
                if pass.pre.at(i, k) > 0.0 {
                    let gpre = agz[i] * model.w2[k];
                    grads.b1[k] += gpre;
                    for c in 0..f {
                        *grads.w1.at_mut(c, k) += sample.ax.at(i, c) * gpre;
                    }
                }
            }
        }
    }
    (loss / total, grads)
}

// ---------------------------------------------------------------------------
// Input preparation
// ---------------------------------------------------------------------------

/// One sample ready for the model: standardized inputs with the adjacency
/// product cached, plus 0/1 labels.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    /// Standardized `n x input_dim` inputs.
    pub x: Mat,
    /// `A_hat * x`, cached because it never changes across epochs.
    pub ax: Mat,
    pub labels: Vec<f64>,
}

/// Per-column standardization statistics, computed on the training split
/// only and reused everywhere to avoid leakage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub struct PreparedDataset {
    pub train: Vec<PreparedSample>,
    pub val: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
    pub input_dim: usize,
    pub stats: ColumnStats,
}

/// Assemble per-node inputs (window bins plus static feature columns),
/// compute train-split statistics, and standardize every split with them.
pub fn prepare_dataset(
    split: &SplitDataset,
    features: Option<&UrbanFeatures>,
    adj: &NormalizedAdjacency,
) -> Result<PreparedDataset> {
    let n = adj.n;
    let window = split.window;
    let first = split.train.first().ok_or(Error::EmptySplit { split: "train" })?;
    if first.input.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "samples cover {} regions, adjacency has {}",
            first.input.len(),
            n
        )));
    }
    if let Some(f) = features {
        if f.matrix.len() != n {
            return Err(Error::FeatureRowMismatch { rows: f.matrix.len(), regions: n });
        }
    }
    let n_static = features.map(|f| f.categories.len()).unwrap_or(0);
    let input_dim = window + n_static;

    let raw = |s: &crate::temporal::WindowSample| -> Mat {
        let mut x = Mat::zeros(n, input_dim);
        for i in 0..n {
            for k in 0..window {
                *x.at_mut(i, k) = s.input[i][k];
            }
            if let Some(f) = features {
                for c in 0..n_static {
                    *x.at_mut(i, window + c) = f.matrix[i][c];
                }
            }
        }
        x
    };

    // Column statistics over all (sample, node) rows of the training split.
    let mut mean = vec![0.0; input_dim];
    let mut sq = vec![0.0; input_dim];
    let rows = (split.train.len() * n) as f64;
    for s in &split.train {
        let x = raw(s);
        for i in 0..n {
            for c in 0..input_dim {
                mean[c] += x.at(i, c);
                sq[c] += x.at(i, c) * x.at(i, c);
            }
        }
    }
    for c in 0..input_dim {
        mean[c] /= rows;
        sq[c] = (sq[c] / rows - mean[c] * mean[c]).max(0.0).sqrt();
        if sq[c] < 1e-12 {
            sq[c] = 1.0; // constant column: leave it centered
        }
    }
    let stats = ColumnStats { mean, std: sq };

    let prepare = |samples: &[crate::temporal::WindowSample]| -> Vec<PreparedSample> {
        samples
            .iter()
            .map(|s| {
                let mut x = raw(s);
                for i in 0..n {
                    for c in 0..input_dim {
                        *x.at_mut(i, c) = (x.at(i, c) - stats.mean[c]) / stats.std[c];
                    }
                }
                let ax = adj.matrix.matmul(&x);
                let labels = s.target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
                PreparedSample { x, ax, labels }
            })
            .collect()
    };

    Ok(PreparedDataset {
        train: prepare(&split.train),
        val: prepare(&split.val),
        test: prepare(&split.test),
        input_dim,
        stats,
    })
}

/// `n_neg / n_pos` over the training labels; 1.0 when a class is absent.
pub fn auto_pos_weight(train: &[PreparedSample]) -> f64 {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for s in train {
        for &y in &s.labels {
            if y > 0.5 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Batch loss at the parameters the epoch started from.
    pub train_loss: f64,
    /// Validation AUC after the epoch's update; NaN when undefined.
    pub val_auc: f64,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch (final parameters when the
    /// validation AUC was never defined).
    pub model: GcnModel,
    /// Parameters after the last epoch, regardless of validation AUC.
    pub final_model: GcnModel,
    pub trace: Vec<TraceRow>,
    pub best_epoch: Option<usize>,
    pub pos_weight: f64,
}

/// Full-batch gradient descent with an early snapshot on validation AUC.
pub fn train(
    adj: &NormalizedAdjacency,
    dataset: &PreparedDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.train.is_empty() {
        return Err(Error::EmptySplit { split: "train" });
    }
    if cfg.learning_rate <= 0.0 || cfg.epochs == 0 {
        return Err(Error::InvalidParameter(
            "learning_rate must be > 0 and epochs >= 1".into(),
        ));
    }
    let mut model = GcnModel::init(dataset.input_dim, cfg.hidden, cfg.seed);
    let pos_weight = cfg.pos_weight.unwrap_or_else(|| auto_pos_weight(&dataset.train));

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, GcnModel)> = None;
    for epoch in 0..cfg.epochs {
        let (loss, grads) = loss_and_gradients(&model, adj, &dataset.train, pos_weight);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let lr = cfg.learning_rate;
        for (w, g) in model.w1.data.iter_mut().zip(&grads.w1.data) {
            *w -= lr * g;
        }
        for (b, g) in model.b1.iter_mut().zip(&grads.b1) {
            *b -= lr * g;
        }
        for (w, g) in model.w2.iter_mut().zip(&grads.w2) {
            *w -= lr * g;
        }
        model.b2 -= lr * grads.b2;

        let val_auc = split_auc(&model, adj, &dataset.val).unwrap_or(f64::NAN);
        if val_auc.is_finite() {
            let improved = match &best {
                None => true,
                Some((best_auc, _, _)) => val_auc > *best_auc,
            };
            if improved {
                best = Some((val_auc, epoch, model.clone()));
            }
        }
        trace.push(TraceRow { epoch, train_loss: loss, val_auc });
    }

    let final_model = model;
    let (model, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, Some(epoch)),
        None => (final_model.clone(), None),
    };
    Ok(TrainOutcome { model, final_model, trace, best_epoch, pos_weight })
}

fn split_auc(model: &GcnModel, adj: &NormalizedAdjacency, samples: &[PreparedSample]) -> Result<f64> {
    let (scores, labels) = concat_scores(model, adj, samples);
    metrics::auc(&scores, &labels)
}

fn concat_scores(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    samples: &[PreparedSample],
) -> (Vec<f64>, Vec<bool>) {
    let mut scores = Vec::with_capacity(samples.len() * adj.n);
    let mut labels = Vec::with_capacity(samples.len() * adj.n);
    for s in samples {
        let pass = forward_from_ax(model, adj, &s.ax);
        scores.extend(pass.probabilities);
        labels.extend(s.labels.iter().map(|&y| y > 0.5));
    }
    (scores, labels)
}

/// Score a split and compute the full metric suite at threshold 0.5.
pub fn evaluate(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    samples: &[PreparedSample],
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::EmptySplit { split: "evaluation" });
    }
    let (scores, labels) = concat_scores(model, adj, samples);
    metrics::evaluation_report(&scores, &labels, metrics::DEFAULT_THRESHOLD)
}

// ---------------------------------------------------------------------------
// Checkpoint and trace files
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointShapes {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParameters {
    /// `w1` row-major, `input_dim x hidden_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// On-disk model document: shapes, parameters row-major, config, seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub shapes: CheckpointShapes,
    pub parameters: CheckpointParameters,
    pub config: TrainConfig,
    pub seed: u64,
}

pub fn checkpoint(model: &GcnModel, config: &TrainConfig) -> CheckpointFile {
    CheckpointFile {
        shapes: CheckpointShapes { input_dim: model.input_dim, hidden_dim: model.hidden_dim },
        parameters: CheckpointParameters {
            w1: model.w1.data.clone(),
            b1: model.b1.clone(),
            w2: model.w2.clone(),
            b2: model.b2,
        },
        config: config.clone(),
        seed: config.seed,
    }
}

pub fn model_from_checkpoint(file: &CheckpointFile) -> Result<GcnModel> {
    let CheckpointShapes { input_dim, hidden_dim } = file.shapes;
    if file.parameters.w1.len() != input_dim * hidden_dim
        || file.parameters.b1.len() != hidden_dim
        || file.parameters.w2.len() != hidden_dim
    {
        return Err(Error::ShapeMismatch("checkpoint parameter sizes disagree with shapes".into()));
    }
    Ok(GcnModel {
        input_dim,
        hidden_dim,
        w1: Mat { rows: input_dim, cols: hidden_dim, data: file.parameters.w1.clone() },
        b1: file.parameters.b1.clone(),
        w2: file.parameters.w2.clone(),
        b2: file.parameters.b2,
    })
}

/// Loss trace CSV: `epoch,train_loss,val_auc`.
pub fn write_trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_auc\n");
    for row in trace {
        out.push_str(&format!("{},{},{}\n", row.epoch, row.train_loss, row.val_auc));
    }
    out
}
