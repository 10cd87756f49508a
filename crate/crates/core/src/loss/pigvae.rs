//! Aligned losses: the elementwise loss, its reordered (PIGVAE-style)
//! relaxation, the padded variant with entropy regularization, and the
//! SoftSort permuter.

use ndarray::{Array1, Array2};

use super::ground::GroundLosses;
use super::ot::{check_plan, Operands};
use super::weights::LossWeights;
use crate::error::{Error, Result};
use crate::graph::{DenseGraph, TransportPlan};

/// Elementwise loss between two graphs in their given node order, masked by
/// the target:
/// `α_h Σ ℓ_h(h_i, ĥ_i) + Σ h_i ℓ_F(F_i, F̂_i) + Σ h_i h_k ℓ_C(C_ik, Ĉ_ik)`.
///
/// With `h = 1` this is the unmasked aligned loss.
pub fn l_align(g: &DenseGraph, g_hat: &DenseGraph, gl: &GroundLosses, w: &LossWeights) -> Result<f64> {
    let op = Operands::new(g, g_hat, gl, w)?;
    let n = op.n();
    let mut total = 0.0;
    for i in 0..n {
        total += super::ot::linear_cost(&op, gl, w, i, i);
    }
    for i in 0..n {
        for k in 0..n {
            let mask = op.h[i] * op.h[k];
            if mask != 0.0 {
                total += mask * super::ot::edge_cost(&op, gl, w, i, k, i, k);
            }
        }
    }
    Ok(total)
}

/// `l_align(G, T[Ĝ])` with `T[Ĝ] = (T ĥ, T F̂, T Ĉ Tᵀ)`.
pub fn l_pigvae(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    plan: &TransportPlan,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<f64> {
    check_plan(plan, g.size())?;
    if !g.same_shape(g_hat) {
        return Err(Error::Dimension("target and prediction shapes differ".into()));
    }
    let reordered = g_hat.transported(plan)?;
    l_align(g, &reordered, gl, w)
}

/// Padding-aware plan entropy `Ω(T) = −Σ_ij T_ij log T_ij h_j`, `0 log 0 = 0`.
pub fn padded_entropy(plan: &TransportPlan, h: &Array1<f64>) -> Result<f64> {
    check_plan(plan, h.len())?;
    let t = plan.matrix();
    let mut omega = 0.0;
    for ((_, j), &v) in t.indexed_iter() {
        if v < 0.0 {
            return Err(Error::Domain(format!("negative plan entry {v}")));
        }
        if v > 0.0 {
            omega -= v * v.ln() * h[j];
        }
    }
    Ok(omega)
}

/// Padded reordered loss plus `λ Ω(T)`.
pub fn pigvae_plus(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    plan: &TransportPlan,
    gl: &GroundLosses,
    w: &LossWeights,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let base = l_pigvae(g, g_hat, plan, gl, w)?;
    Ok(base + lambda * padded_entropy(plan, &g.h)?)
}

/// Regularization strength selected by grid search for the padded loss.
pub const PIGVAE_PLUS_LAMBDA: f64 = 10.0;

/// Row-stochastic relaxed sorting plan: scores `s = X U`, and row `i` is
/// `softmax_j(−|s_i − sort↓(s)_j| / τ)`.
pub fn softsort_permuter(x: &Array2<f64>, u: &Array1<f64>, tau: f64) -> Result<TransportPlan> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    if x.ncols() != u.len() {
        return Err(Error::Dimension(format!(
            "embeddings have {} columns, scoring vector has {}",
            x.ncols(),
            u.len()
        )));
    }
    let s = x.dot(u);
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = s.len();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let logits: Vec<f64> = sorted.iter().map(|v| -(s[i] - v).abs() / tau).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for (j, l) in logits.iter().enumerate() {
            p[[i, j]] = (l - m).exp() / z;
        }
    }
    TransportPlan::new(p)
}
