//! Conditional gradient over the bistochastic matrices for the inner
//! quadratic matching problem `min_T L(G, Ĝ, T)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::error::{Error, Result};
use crate::graph::{DenseGraph, Permutation, TransportPlan};
use crate::loss::{lot_fast, lot_gradients, GroundLosses, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub max_iters: usize,
    /// Stop when an iteration lowers the objective by less than
    /// `tol · max(|objective|, 1e-12)`.
    pub tol: f64,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FwResult {
    pub plan: TransportPlan,
    /// Objective at the start and after every iteration; nonincreasing.
    pub trace: Vec<f64>,
}

impl FwResult {
    /// Nearest permutation: `hungarian(−T)`.
    pub fn rounded(&self) -> Result<Permutation> {
        round_plan(&self.plan)
    }
}

/// Permutation with the largest total plan mass.
pub fn round_plan(plan: &TransportPlan) -> Result<Permutation> {
    hungarian(&plan.matrix().mapv(|v| -v))
}

/// Starts from the uniform plan; each iteration solves the linearised problem
/// with the Hungarian algorithm and takes an exact line-search step toward
/// that vertex. The objective is quadratic along the segment, so its
/// curvature follows from the endpoint values and the slope.
pub fn frank_wolfe_qap(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    gl: &GroundLosses,
    w: &LossWeights,
    cfg: &FwConfig,
) -> Result<FwResult> {
    if cfg.max_iters == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frank-wolfe needs max_iters ≥ 1 and tol > 0, got {cfg:?}"
        )));
    }
    let n = g.size();
    let mut plan = TransportPlan::uniform(n);
    let mut value = lot_fast(g, g_hat, &plan, gl, w)?;
    let mut trace = vec![value];

    for _ in 0..cfg.max_iters {
        let grad = lot_gradients(g, g_hat, &plan, gl, w)?.d_t;
        let vertex = hungarian(&grad)?.to_plan();
        let direction: Array2<f64> = vertex.matrix() - plan.matrix();
        let slope: f64 = (&grad * &direction).sum();
        if slope >= 0.0 {
            break;
        }
        let at_vertex = lot_fast(g, g_hat, &vertex, gl, w)?;
        let curvature = at_vertex - value - slope;
        let step = if curvature > 0.0 {
            (-slope / (2.0 * curvature)).clamp(0.0, 1.0)
        } else if curvature + slope < 0.0 {
            1.0
        } else {
            0.0
        };
        if step == 0.0 {
            break;
        }
        let next = if step == 1.0 {
            vertex
        } else {
            TransportPlan::new((plan.matrix() + &(direction * step)).mapv(|v| v.max(0.0)))?
        };
        let next_value = lot_fast(g, g_hat, &next, gl, w)?;
        if next_value > value {
            // Round-off on a flat segment.
            break;
        }
        let decrease = value - next_value;
        plan = next;
        value = next_value;
        trace.push(value);
        if decrease <= cfg.tol * value.abs().max(1e-12) {
            break;
        }
    }
    Ok(FwResult { plan, trace })
}
