//! Learnable node-affinity matcher `K_ij = exp(−‖MLP_in(X_i) − MLP_out(X̂_j)‖₁)`
//! with Sinkhorn projection for training, Hungarian rounding for inference,
//! and a gradient-descent training loop backpropagating the transport loss
//! through the unrolled Sinkhorn iterations.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::editdist::{upper_bound, EditResult};
use crate::error::{Error, Result};
use crate::featurize::{input_features, FeaturizedPair, FeaturizerConfig};
use crate::graph::{DenseGraph, Permutation, SparseGraph, TransportPlan};
use crate::loss::{lot_at_permutation, lot_fast, lot_gradients, GroundLoss, GroundLosses, LossWeights};
use crate::solvers::{hungarian, sinkhorn_backward_log, sinkhorn_log, SinkhornConfig};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_EMBED: usize = 16;

/// One-hidden-layer perceptron `relu(X W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

struct MlpCache {
    pre: Array2<f64>,
    out: Array2<f64>,
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit))
}

impl Mlp {
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: glorot(rng, d_in, hidden),
            b1: Array1::zeros(hidden),
            w2: glorot(rng, hidden, d_out),
            b2: Array1::zeros(d_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.dim()),
            b2: Array1::zeros(self.b2.len()),
        }
    }

    fn forward_cached(&self, x: &Array2<f64>) -> MlpCache {
        let pre = x.dot(&self.w1) + &self.b1;
        let out = pre.mapv(|v| v.max(0.0)).dot(&self.w2) + &self.b2;
        MlpCache { pre, out }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).out
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dX`.
    fn backward(&self, x: &Array2<f64>, cache: &MlpCache, d_out: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let hid = cache.pre.mapv(|v| v.max(0.0));
        grad.w2 += &hid.t().dot(d_out);
        grad.b2 += &d_out.sum_axis(Axis(0));
        let mut d_pre = d_out.dot(&self.w2.t());
        d_pre.zip_mut_with(&cache.pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        grad.w1 += &x.t().dot(&d_pre);
        grad.b1 += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.w1.t())
    }

    fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Input/output feature maps and the padding embedding `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityModel {
    pub mlp_in: Mlp,
    pub mlp_out: Mlp,
    pub u: Array1<f64>,
}

impl AffinityModel {
    /// Glorot-initialised maps with independent parameters; `u` starts at zero.
    pub fn new(d_n: usize, hidden: usize, d_e: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            mlp_in: Mlp::new(&mut rng, d_n, hidden, d_e),
            mlp_out: Mlp::new(&mut rng, d_n, hidden, d_e),
            u: Array1::zeros(d_n),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.mlp_in.b1.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.mlp_in.b2.len()
    }

    fn zeros_like(&self) -> Self {
        Self {
            mlp_in: self.mlp_in.zeros_like(),
            mlp_out: self.mlp_out.zeros_like(),
            u: Array1::zeros(self.u.len()),
        }
    }

    /// Number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Parameters flattened as `mlp_in (W1, b1, W2, b2)`, `mlp_out (…)`, `u`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.mlp_in.tensors().into_iter().chain(self.mlp_out.tensors()) {
            out.extend_from_slice(t);
        }
        out.extend(self.u.iter());
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut rest = params;
        let u = self.u.as_slice_mut().expect("standard layout");
        let slots = self
            .mlp_in
            .tensors_mut()
            .into_iter()
            .chain(self.mlp_out.tensors_mut())
            .chain(std::iter::once(u));
        for t in slots {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let delta = other.params();
        let mut p = self.params();
        for (a, b) in p.iter_mut().zip(delta) {
            *a += scale * b;
        }
        self.set_params(&p).expect("same layout");
    }

    /// Pads unpadded node embeddings `x` (`n × d_n`) to `capacity` rows with `u`.
    pub fn pad(&self, x: &Array2<f64>, capacity: usize) -> Result<Array2<f64>> {
        let n = x.nrows();
        if n > capacity {
            return Err(Error::Capacity { nodes: n, capacity });
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "embeddings have width {}, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut out = Array2::zeros((capacity, self.input_dim()));
        out.slice_mut(ndarray::s![..n, ..]).assign(x);
        for mut row in out.rows_mut().into_iter().skip(n) {
            row.assign(&self.u);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelRecord::from(self)).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: ModelRecord = serde_json::from_str(s)?;
        record.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct Dims {
    d_n: usize,
    hidden: usize,
    d_e: usize,
}

#[derive(Serialize, Deserialize)]
struct MlpRecord {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    dims: Dims,
    mlp_in: MlpRecord,
    mlp_out: MlpRecord,
    u: Vec<f64>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Dimension(format!("{what} does not have shape {shape:?}")));
    }
    Ok(Array2::from_shape_fn(shape, |(i, j)| rows[i][j]))
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::Dimension(format!("{what} has length {}, expected {len}", v.len())));
    }
    Ok(Array1::from(v.to_vec()))
}

impl From<&Mlp> for MlpRecord {
    fn from(m: &Mlp) -> Self {
        Self {
            w1: rows(&m.w1),
            b1: m.b1.to_vec(),
            w2: rows(&m.w2),
            b2: m.b2.to_vec(),
        }
    }
}

impl MlpRecord {
    fn to_mlp(&self, d: &Dims) -> Result<Mlp> {
        Ok(Mlp {
            w1: matrix(&self.w1, (d.d_n, d.hidden), "w1")?,
            b1: vector(&self.b1, d.hidden, "b1")?,
            w2: matrix(&self.w2, (d.hidden, d.d_e), "w2")?,
            b2: vector(&self.b2, d.d_e, "b2")?,
        })
    }
}

impl From<&AffinityModel> for ModelRecord {
    fn from(m: &AffinityModel) -> Self {
        Self {
            dims: Dims {
                d_n: m.input_dim(),
                hidden: m.hidden_dim(),
                d_e: m.embed_dim(),
            },
            mlp_in: (&m.mlp_in).into(),
            mlp_out: (&m.mlp_out).into(),
            u: m.u.to_vec(),
        }
    }
}

impl TryFrom<ModelRecord> for AffinityModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let model = Self {
            mlp_in: r.mlp_in.to_mlp(&r.dims)?,
            mlp_out: r.mlp_out.to_mlp(&r.dims)?,
            u: vector(&r.u, r.dims.d_n, "u")?,
        };
        if model.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("model weights must be finite".into()));
        }
        Ok(model)
    }
}

/// Pairwise L1 distances between rows of `a` and rows of `b`.
fn l1_distances(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y).abs()).sum()
    })
}

fn check_inputs(model: &AffinityModel, x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<()> {
    for (m, what) in [(x, "X"), (x_hat, "X̂")] {
        if m.ncols() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "{what} has width {}, model expects {}",
                m.ncols(),
                model.input_dim()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{what} contains non-finite entries")));
        }
    }
    if x.nrows() != x_hat.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows, X̂ has {}",
            x.nrows(),
            x_hat.nrows()
        )));
    }
    Ok(())
}

/// `−log K`, the L1 distance between mapped embeddings.
pub fn affinity_cost(model: &AffinityModel, x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<Array2<f64>> {
    check_inputs(model, x, x_hat)?;
    Ok(l1_distances(&model.mlp_in.forward(x), &model.mlp_out.forward(x_hat)))
}

/// `K_ij = exp(−‖MLP_in(X_i) − MLP_out(X̂_j)‖₁)`.
pub fn affinity(model: &AffinityModel, x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(affinity_cost(model, x, x_hat)?.mapv(|d| (-d).exp()))
}

/// Parameter gradient of `⟨upstream, log K⟩`, plus the gradients with respect
/// to `X` and `X̂`. The L1 and ReLU subgradients at 0 are 0.
pub fn affinity_backward_log(
    model: &AffinityModel,
    x: &Array2<f64>,
    x_hat: &Array2<f64>,
    upstream: &Array2<f64>,
) -> Result<(AffinityModel, Array2<f64>, Array2<f64>)> {
    check_inputs(model, x, x_hat)?;
    let n = x.nrows();
    if upstream.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "upstream has shape {:?}, expected ({n}, {n})",
            upstream.dim()
        )));
    }
    let ca = model.mlp_in.forward_cached(x);
    let cb = model.mlp_out.forward_cached(x_hat);
    let (a, b) = (&ca.out, &cb.out);
    let mut da = Array2::zeros(a.dim());
    let mut db = Array2::zeros(b.dim());
    for i in 0..n {
        for j in 0..n {
            // log K_ij = −Σ_c |a_ic − b_jc|
            let g = upstream[[i, j]];
            if g == 0.0 {
                continue;
            }
            for c in 0..a.ncols() {
                let diff = a[[i, c]] - b[[j, c]];
                let s = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                da[[i, c]] -= g * s;
                db[[j, c]] += g * s;
            }
        }
    }
    let mut grad = model.zeros_like();
    let dx = model.mlp_in.backward(x, &ca, &da, &mut grad.mlp_in);
    let dx_hat = model.mlp_out.backward(x_hat, &cb, &db, &mut grad.mlp_out);
    Ok((grad, dx, dx_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Soft plan from Sinkhorn.
    Train,
    /// Hard plan from Hungarian on `−log K`.
    Test,
}

/// Plan matching rows of `x` to rows of `x_hat`.
pub fn match_plan(
    model: &AffinityModel,
    x: &Array2<f64>,
    x_hat: &Array2<f64>,
    mode: MatchMode,
    sinkhorn: &SinkhornConfig,
) -> Result<TransportPlan> {
    let cost = affinity_cost(model, x, x_hat)?;
    match mode {
        MatchMode::Train => sinkhorn_log(&cost.mapv(|d| -d), sinkhorn),
        MatchMode::Test => Ok(hungarian(&cost)?.to_plan()),
    }
}

/// Hungarian matching of two graphs from their deterministic featurizer node
/// features (the model's `u` fills padding slots), with the edit-distance
/// upper bound of the resulting alignment.
pub fn match_graphs(
    model: &AffinityModel,
    g1: &SparseGraph,
    g2: &SparseGraph,
    capacity: usize,
    featurizer: &FeaturizerConfig,
) -> Result<(Permutation, EditResult)> {
    let quiet = FeaturizerConfig {
        noise_sigma: 0.0,
        ..*featurizer
    };
    let x = model.pad(&input_features(g1, &quiet)?.f, capacity)?;
    let x_hat = model.pad(&input_features(g2, &quiet)?.f, capacity)?;
    let sigma = hungarian(&affinity_cost(model, &x, &x_hat)?)?;
    let bound = upper_bound(g1, g2, &sigma)?;
    Ok((sigma, bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub sinkhorn: SinkhornConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            steps: 100,
            batch: 8,
            seed: 0,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.steps == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument(format!(
                "training needs lr > 0, steps ≥ 1 and batch ≥ 1, got {self:?}"
            )));
        }
        self.sinkhorn.validate()
    }
}

/// Squared-L2 label losses with size-scaled weights, the training objective.
pub fn training_losses(target: &DenseGraph) -> (GroundLosses, LossWeights) {
    (
        GroundLosses::labels(GroundLoss::SquaredL2, target.node_dim(), target.edge_dim()),
        LossWeights::for_size(target.size()),
    )
}

/// Both sides of one training example: the target graph `G*` with embeddings
/// `X` and its shuffled copy `P[G*]` with embeddings `X̂ = P X`.
pub struct MatchInstance {
    pub x: Array2<f64>,
    pub x_hat: Array2<f64>,
    pub target: DenseGraph,
    pub target_hat: DenseGraph,
}

impl MatchInstance {
    /// Pads the pair's input features with `u` and shuffles with `p`.
    pub fn new(model: &AffinityModel, pair: &FeaturizedPair, p: &Permutation) -> Result<Self> {
        let capacity = pair.target.size();
        let x = model.pad(&pair.input.f, capacity)?;
        let x_hat = x.select(Axis(0), p.inverse().as_slice());
        Ok(Self {
            x,
            x_hat,
            target: pair.target.clone(),
            target_hat: pair.target.permuted(p)?,
        })
    }

    /// `L_OT(G*, P[G*], sinkhorn(K(X, X̂)))`.
    pub fn loss(&self, model: &AffinityModel, sinkhorn: &SinkhornConfig) -> Result<f64> {
        let plan = match_plan(model, &self.x, &self.x_hat, MatchMode::Train, sinkhorn)?;
        let (gl, w) = training_losses(&self.target);
        lot_fast(&self.target, &self.target_hat, &plan, &gl, &w)
    }

    /// Loss and its gradient with respect to every model parameter. Padding
    /// rows of `X` and `X̂` both route their gradient to `u`.
    pub fn loss_and_grad(&self, model: &AffinityModel, sinkhorn: &SinkhornConfig) -> Result<(f64, AffinityModel)> {
        let log_k = affinity_cost(model, &self.x, &self.x_hat)?.mapv(|d| -d);
        let plan = sinkhorn_log(&log_k, sinkhorn)?;
        let (gl, w) = training_losses(&self.target);
        let loss = lot_fast(&self.target, &self.target_hat, &plan, &gl, &w)?;
        let d_t = lot_gradients(&self.target, &self.target_hat, &plan, &gl, &w)?.d_t;
        let d_log_k = sinkhorn_backward_log(&log_k, sinkhorn, &d_t)?;
        let (mut grad, dx, dx_hat) = affinity_backward_log(model, &self.x, &self.x_hat, &d_log_k)?;
        for (g, d) in [(&self.target, &dx), (&self.target_hat, &dx_hat)] {
            for i in (0..g.size()).filter(|&i| g.h[i] == 0.0) {
                grad.u += &d.row(i);
            }
        }
        Ok((loss, grad))
    }

    /// The Hungarian alignment has zero loss.
    pub fn solved_by(&self, model: &AffinityModel) -> Result<bool> {
        let sigma = hungarian(&affinity_cost(model, &self.x, &self.x_hat)?)?;
        let (gl, w) = training_losses(&self.target);
        Ok(lot_at_permutation(&self.target, &self.target_hat, &sigma, &gl, &w)? <= 1e-9)
    }
}

/// Plain gradient descent on the mean batch loss. Each step samples a batch
/// of pairs and a fresh random shuffle per pair; per-example gradients are
/// computed in parallel and summed in batch order.
pub fn train_matcher(
    model: &AffinityModel,
    dataset: &[FeaturizedPair],
    cfg: &TrainConfig,
) -> Result<(AffinityModel, Vec<f64>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let jobs: Vec<(usize, Permutation)> = (0..cfg.batch)
            .map(|_| {
                let idx = rng.random_range(0..dataset.len());
                let mut p: Vec<usize> = (0..dataset[idx].target.size()).collect();
                p.shuffle(&mut rng);
                (idx, Permutation::new(p).expect("shuffled range"))
            })
            .collect();
        let results: Vec<Result<(f64, AffinityModel)>> = jobs
            .par_iter()
            .map(|(idx, p)| MatchInstance::new(&model, &dataset[*idx], p)?.loss_and_grad(&model, &cfg.sinkhorn))
            .collect();
        let mut total = 0.0;
        let mut grad = model.zeros_like();
        for r in results {
            let (loss, g) = r?;
            total += loss;
            grad.add_scaled(&g, 1.0);
        }
        let mean = total / cfg.batch as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { step, loss: mean });
        }
        trace.push(mean);
        model.add_scaled(&grad, -cfg.lr / cfg.batch as f64);
        if model.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step, loss: mean });
        }
    }
    Ok((model, trace))
}
