//! The masked optimal-transport graph loss
//!
//! ```text
//! L(G, Ĝ, T) = Σ_ij ℓ_h(h_i, ĥ_j) T_ij
//!            + Σ_ij h_i ℓ_F(F_i, F̂_j) T_ij
//!            + Σ_ijkl h_i h_k ℓ_C(C_ik, Ĉ_jl) T_ij T_kl
//! ```
//!
//! with each term scaled by its α weight. Terms whose plan weight or mask
//! weight is exactly zero contribute nothing, even when the ground loss is
//! infinite there.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, CowArray, Ix2, Ix3};

use super::ground::{ChannelBlock, GroundLosses};
use super::weights::LossWeights;
use crate::error::{Error, Result};
use crate::graph::{DenseGraph, Permutation, TransportPlan};

/// Partial derivatives of the loss with respect to the prediction and plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub d_h_hat: Array1<f64>,
    pub d_f_hat: Array2<f64>,
    pub d_c_hat: Array3<f64>,
    pub d_t: Array2<f64>,
}

/// Standard-layout views so that channel lanes are contiguous slices.
pub(crate) struct Operands<'a> {
    pub h: ArrayView1<'a, f64>,
    pub h_hat: ArrayView1<'a, f64>,
    pub f: CowArray<'a, f64, Ix2>,
    pub f_hat: CowArray<'a, f64, Ix2>,
    pub c: CowArray<'a, f64, Ix3>,
    pub c_hat: CowArray<'a, f64, Ix3>,
}

impl<'a> Operands<'a> {
    pub fn new(g: &'a DenseGraph, g_hat: &'a DenseGraph, gl: &GroundLosses, w: &LossWeights) -> Result<Self> {
        if !g.same_shape(g_hat) {
            return Err(Error::Dimension(format!(
                "target has shape (N={}, d_f={}, d_c={}), prediction has (N={}, d_f={}, d_c={})",
                g.size(),
                g.node_dim(),
                g.edge_dim(),
                g_hat.size(),
                g_hat.node_dim(),
                g_hat.edge_dim()
            )));
        }
        gl.validate(g.node_dim(), g.edge_dim())?;
        w.validate()?;
        Ok(Self {
            h: g.h.view(),
            h_hat: g_hat.h.view(),
            f: g.f.as_standard_layout(),
            f_hat: g_hat.f.as_standard_layout(),
            c: g.c.as_standard_layout(),
            c_hat: g_hat.c.as_standard_layout(),
        })
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn node(&self, i: usize, b: &ChannelBlock) -> &[f64] {
        lane2(&self.f, i, b)
    }

    pub fn node_hat(&self, j: usize, b: &ChannelBlock) -> &[f64] {
        lane2(&self.f_hat, j, b)
    }

    pub fn edge(&self, i: usize, k: usize, b: &ChannelBlock) -> &[f64] {
        lane3(&self.c, i, k, b)
    }

    pub fn edge_hat(&self, j: usize, l: usize, b: &ChannelBlock) -> &[f64] {
        lane3(&self.c_hat, j, l, b)
    }
}

fn lane2<'b>(m: &'b CowArray<'_, f64, Ix2>, i: usize, b: &ChannelBlock) -> &'b [f64] {
    let row = m.row(i).to_slice().expect("standard layout");
    &row[b.start..b.end]
}

fn lane3<'b>(m: &'b CowArray<'_, f64, Ix3>, i: usize, k: usize, b: &ChannelBlock) -> &'b [f64] {
    let lane = m.slice(s![i, k, ..]).to_slice().expect("standard layout");
    &lane[b.start..b.end]
}

pub(crate) fn check_plan(plan: &TransportPlan, n: usize) -> Result<()> {
    if plan.size() != n {
        return Err(Error::Dimension(format!(
            "plan is {}x{}, graphs have size {n}",
            plan.size(),
            plan.size()
        )));
    }
    Ok(())
}

/// Mask and node cost of coupling target node `i` with predicted node `j`.
pub(crate) fn linear_cost(op: &Operands<'_>, gl: &GroundLosses, w: &LossWeights, i: usize, j: usize) -> f64 {
    let mut cost = w.alpha_h * gl.mask.evaluate(&[op.h[i]], &[op.h_hat[j]]);
    let hi = op.h[i];
    if hi != 0.0 {
        for b in &gl.node {
            cost += w.node(b.role) * hi * b.loss.evaluate(op.node(i, b), op.node_hat(j, b));
        }
    }
    cost
}

/// Direct evaluation by quadruple loop; O(N⁴ d_c).
pub fn lot_naive(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    plan: &TransportPlan,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<f64> {
    let op = Operands::new(g, g_hat, gl, w)?;
    let n = op.n();
    check_plan(plan, n)?;
    let t = plan.matrix();

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if t[[i, j]] != 0.0 {
                total += linear_cost(&op, gl, w, i, j) * t[[i, j]];
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            let mask = op.h[i] * op.h[k];
            if mask == 0.0 {
                continue;
            }
            for j in 0..n {
                let tij = t[[i, j]];
                if tij == 0.0 {
                    continue;
                }
                for l in 0..n {
                    let tkl = t[[k, l]];
                    if tkl == 0.0 {
                        continue;
                    }
                    let mut cost = 0.0;
                    for b in &gl.edge {
                        cost += w.edge(b.role) * b.loss.evaluate(op.edge(i, k, b), op.edge_hat(j, l, b));
                    }
                    total += mask * cost * tij * tkl;
                }
            }
        }
    }
    Ok(total)
}

/// Value of the loss at the hard plan `T[i, σ(i)] = 1`, in O(N² d_c).
///
/// Equal to [`lot_naive`] at `σ.to_plan()`.
pub fn lot_at_permutation(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    sigma: &Permutation,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<f64> {
    let op = Operands::new(g, g_hat, gl, w)?;
    let n = op.n();
    if sigma.len() != n {
        return Err(Error::Dimension(format!(
            "permutation of length {} for graphs of size {n}",
            sigma.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        total += linear_cost(&op, gl, w, i, sigma.get(i));
    }
    for i in 0..n {
        for k in 0..n {
            let mask = op.h[i] * op.h[k];
            if mask != 0.0 {
                total += mask * edge_cost(&op, gl, w, i, k, sigma.get(i), sigma.get(k));
            }
        }
    }
    Ok(total)
}

pub(crate) fn edge_cost(
    op: &Operands<'_>,
    gl: &GroundLosses,
    w: &LossWeights,
    i: usize,
    k: usize,
    j: usize,
    l: usize,
) -> f64 {
    gl.edge
        .iter()
        .map(|b| w.edge(b.role) * b.loss.evaluate(op.edge(i, k, b), op.edge_hat(j, l, b)))
        .sum()
}

/// Factorized pieces of one edge block's quadratic term.
struct FactoredBlock {
    /// `W ∘ f1(C)` with `W = h hᵀ`.
    wf1: Array2<f64>,
    /// `f2(Ĉ)`.
    f2: Array2<f64>,
    /// `W ∘ h1(C)_c` per factor channel.
    a: Vec<Array2<f64>>,
    /// `h2(Ĉ)_c` per factor channel.
    h2: Vec<Array2<f64>>,
}

fn factor_block(op: &Operands<'_>, b: &ChannelBlock) -> Result<FactoredBlock> {
    let n = op.n();
    let loss = b.loss;
    if !loss.has_factorization() {
        return Err(Error::Unsupported(format!(
            "ground loss {} has no f1 + f2 − ⟨h1, h2⟩ factorization",
            loss.name()
        )));
    }
    let kdim = loss.factor_dim(b.len());
    let mut wf1 = Array2::zeros((n, n));
    let mut f2 = Array2::zeros((n, n));
    let mut a = vec![Array2::zeros((n, n)); kdim];
    let mut h2 = vec![Array2::zeros((n, n)); kdim];
    let mut buf = vec![0.0; kdim];
    for i in 0..n {
        for k in 0..n {
            let mask = op.h[i] * op.h[k];
            if mask != 0.0 {
                let lane = op.edge(i, k, b);
                wf1[[i, k]] = mask * loss.f1(lane);
                loss.h1(lane, &mut buf);
                for (c, v) in buf.iter().enumerate() {
                    a[c][[i, k]] = mask * v;
                }
            }
            let pred = op.edge_hat(i, k, b);
            loss.check_prediction(pred)?;
            f2[[i, k]] = loss.f2(pred);
            loss.h2(pred, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                h2[c][[i, k]] = *v;
            }
        }
    }
    Ok(FactoredBlock { wf1, f2, a, h2 })
}

fn frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// O(d_c N³) evaluation through the ground-loss factorization:
///
/// ```text
/// Σ_ijkl W_ik ℓ(C_ik, Ĉ_jl) T_ij T_kl
///   = rᵀ (W ∘ f1(C)) r + ⟨f2(Ĉ), Tᵀ W T⟩ − Σ_c ⟨h2(Ĉ)_c, Tᵀ (W ∘ h1(C)_c) T⟩
/// ```
///
/// where `W = h hᵀ` and `r = T 1`.
pub fn lot_fast(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    plan: &TransportPlan,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<f64> {
    let op = Operands::new(g, g_hat, gl, w)?;
    let n = op.n();
    check_plan(plan, n)?;
    let t = plan.matrix();

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if t[[i, j]] != 0.0 {
                total += linear_cost(&op, gl, w, i, j) * t[[i, j]];
            }
        }
    }
    if gl.edge.is_empty() {
        return Ok(total);
    }
    let mask = op.h.to_owned();
    let wmat = outer(&mask, &mask);
    let r = t.sum_axis(ndarray::Axis(1));
    let s_mat = t.t().dot(&wmat).dot(t);
    for b in &gl.edge {
        let fb = factor_block(&op, b)?;
        let mut q = r.dot(&fb.wf1.dot(&r)) + frobenius(&fb.f2, &s_mat);
        for (a_c, h2_c) in fb.a.iter().zip(&fb.h2) {
            let u = t.t().dot(a_c).dot(t);
            q -= frobenius(h2_c, &u);
        }
        total += w.edge(b.role) * q;
    }
    Ok(total)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Exact gradients of [`lot_naive`] with respect to `ĥ`, `F̂`, `Ĉ` and `T`,
/// computed in O(d_c N³).
pub fn lot_gradients(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    plan: &TransportPlan,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<LossGradients> {
    let op = Operands::new(g, g_hat, gl, w)?;
    let n = op.n();
    check_plan(plan, n)?;
    let t = plan.matrix();

    for j in 0..n {
        gl.mask.check_prediction(&[op.h_hat[j]])?;
        for b in &gl.node {
            b.loss.check_prediction(op.node_hat(j, b))?;
        }
    }

    let mut d_t = Array2::zeros((n, n));
    let mut d_h_hat = Array1::zeros(n);
    let mut d_f_hat = Array2::zeros(op.f_hat.dim());
    let mut d_c_hat = Array3::zeros(op.c_hat.dim());

    let mut buf = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let tij = t[[i, j]];
            d_t[[i, j]] = linear_cost(&op, gl, w, i, j);
            if tij == 0.0 {
                continue;
            }
            let mut gh = [0.0];
            gl.mask.grad_prediction(&[op.h[i]], &[op.h_hat[j]], &mut gh);
            d_h_hat[j] += w.alpha_h * tij * gh[0];
            let hi = op.h[i];
            if hi == 0.0 {
                continue;
            }
            for b in &gl.node {
                buf.resize(b.len(), 0.0);
                b.loss.grad_prediction(op.node(i, b), op.node_hat(j, b), &mut buf);
                let scale = w.node(b.role) * hi * tij;
                for (c, v) in buf.iter().enumerate() {
                    d_f_hat[[j, b.start + c]] += scale * v;
                }
            }
        }
    }

    if !gl.edge.is_empty() {
        let mask = op.h.to_owned();
        let wmat = outer(&mask, &mask);
        let r = t.sum_axis(ndarray::Axis(1));
        let wt = wmat.dot(t);
        let wtt = wmat.t().dot(t);
        let s_mat = t.t().dot(&wt);
        for b in &gl.edge {
            let alpha = w.edge(b.role);
            let fb = factor_block(&op, b)?;
            let kdim = fb.a.len();
            // f1 part: depends on T only through the row sums r.
            let row_term = fb.wf1.dot(&r) + fb.wf1.t().dot(&r);
            // f2 part.
            let mut grad = wt.dot(&fb.f2.t()) + wtt.dot(&fb.f2);
            let mut u = Vec::with_capacity(kdim);
            for (a_c, h2_c) in fb.a.iter().zip(&fb.h2) {
                let at = a_c.dot(t);
                let att = a_c.t().dot(t);
                grad = grad - at.dot(&h2_c.t()) - att.dot(h2_c);
                u.push(t.t().dot(&at));
            }
            for a in 0..n {
                for bcol in 0..n {
                    d_t[[a, bcol]] += alpha * (grad[[a, bcol]] + row_term[a]);
                }
            }
            let mut uvec = vec![0.0; kdim];
            let mut out = vec![0.0; b.len()];
            for j in 0..n {
                for l in 0..n {
                    for (c, u_c) in u.iter().enumerate() {
                        uvec[c] = u_c[[j, l]];
                    }
                    b.loss
                        .factor_pullback(op.edge_hat(j, l, b), s_mat[[j, l]], &uvec, &mut out);
                    for (c, v) in out.iter().enumerate() {
                        d_c_hat[[j, l, b.start + c]] += alpha * v;
                    }
                }
            }
        }
    }

    Ok(LossGradients {
        d_h_hat,
        d_f_hat,
        d_c_hat,
        d_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::ground::{GroundLoss, Role};
    use crate::fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_graphs_at_identity_cost_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_label_graph(&mut rng, 5, 3, 2);
        let gl = GroundLosses::labels(GroundLoss::SquaredL2, g.node_dim(), g.edge_dim());
        let plan = Permutation::identity(5).to_plan();
        let w = LossWeights::for_size(5);
        assert_eq!(lot_naive(&g, &g, &plan, &gl, &w).unwrap(), 0.0);
        let gl_kl = GroundLosses::labels(GroundLoss::Kl, g.node_dim(), g.edge_dim());
        assert_eq!(lot_naive(&g, &g, &plan, &gl_kl, &w).unwrap(), 0.0);
    }

    #[test]
    fn counterexample_instance_value() {
        let (g, g_hat, plan) = counterexample();
        let gl = GroundLosses::uniform(GroundLoss::SquaredL2, Role::Continuous, 1, 1);
        let w = LossWeights::unit();
        let naive = lot_naive(&g, &g_hat, &plan, &gl, &w).unwrap();
        let fast = lot_fast(&g, &g_hat, &plan, &gl, &w).unwrap();
        assert!((naive - 0.5).abs() < 1e-12);
        assert!((fast - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (g, g_hat, plan, gl) = random_instance(&mut rng, 5, GroundLoss::SquaredL2);
        let w = LossWeights::for_size(5);
        let base = lot_naive(&g, &g_hat, &plan, &gl, &w).unwrap();
        let scaled = lot_naive(&g, &g_hat, &plan, &gl, &w.scaled(3.5)).unwrap();
        assert!((scaled - 3.5 * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
    }

    #[test]
    fn fast_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in [GroundLoss::SquaredL2, GroundLoss::Kl, GroundLoss::CrossEntropyLogits] {
            for n in [1, 3, 6] {
                let (g, g_hat, plan, gl) = random_instance(&mut rng, n, kind);
                let w = LossWeights::for_size(n);
                let naive = lot_naive(&g, &g_hat, &plan, &gl, &w).unwrap();
                let fast = lot_fast(&g, &g_hat, &plan, &gl, &w).unwrap();
                assert!((naive - fast).abs() <= 1e-9 * (1.0 + naive.abs()), "{kind:?}: {naive} vs {fast}");
            }
        }
    }

    #[test]
    fn permutation_evaluator_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (g, g_hat, _, gl) = random_instance(&mut rng, 5, GroundLoss::Kl);
        let w = LossWeights::for_size(5);
        let sigma = Permutation::new(vec![3, 1, 4, 0, 2]).unwrap();
        let naive = lot_naive(&g, &g_hat, &sigma.to_plan(), &gl, &w).unwrap();
        let fast = lot_at_permutation(&g, &g_hat, &sigma, &gl, &w).unwrap();
        assert!((naive - fast).abs() < 1e-12);
    }

    #[test]
    fn unfactorizable_edge_loss_is_unsupported() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (g, g_hat, plan, _) = random_instance(&mut rng, 3, GroundLoss::SquaredL2);
        let gl = GroundLosses::uniform(GroundLoss::AbsoluteL1, Role::Continuous, g.node_dim(), g.edge_dim());
        let w = LossWeights::unit();
        assert!(lot_naive(&g, &g_hat, &plan, &gl, &w).is_ok());
        assert!(matches!(lot_fast(&g, &g_hat, &plan, &gl, &w), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (g, _, plan, gl) = random_instance(&mut rng, 3, GroundLoss::SquaredL2);
        let (other, _, _, _) = random_instance(&mut rng, 4, GroundLoss::SquaredL2);
        let w = LossWeights::unit();
        assert!(matches!(lot_naive(&g, &other, &plan, &gl, &w), Err(Error::Dimension(_))));
        assert!(matches!(
            lot_naive(&g, &g, &TransportPlan::uniform(4), &gl, &w),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn kl_gradient_on_boundary_is_a_domain_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let g = random_label_graph(&mut rng, 4, 3, 2);
        let gl = GroundLosses::labels(GroundLoss::Kl, g.node_dim(), g.edge_dim());
        let err = lot_gradients(&g, &g, &TransportPlan::uniform(4), &gl, &LossWeights::unit());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_vanishes_at_a_perfect_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_label_graph(&mut rng, 5, 3, 2);
        let gl = GroundLosses::labels(GroundLoss::SquaredL2, g.node_dim(), g.edge_dim());
        let grads = lot_gradients(&g, &g, &Permutation::identity(5).to_plan(), &gl, &LossWeights::for_size(5)).unwrap();
        assert!(grads.d_f_hat.iter().all(|v| v.abs() < 1e-15));
        assert!(grads.d_c_hat.iter().all(|v| v.abs() < 1e-15));
        assert!(grads.d_h_hat.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn plan_gradient_of_quadratic_term_is_symmetric_for_symmetric_inputs() {
        // For symmetric C and Ĉ the quadratic term is invariant under swapping
        // (i, j) with (k, l), so its plan gradient is 2 · Σ_kl W_ik ℓ(C_ik, Ĉ_jl) T_kl.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let (g, g_hat, plan, gl) = random_instance(&mut rng, 4, GroundLoss::SquaredL2);
        let g_hat = symmetrized(&g_hat);
        let w = LossWeights::unit();
        let mut edge_only = gl.clone();
        edge_only.node.iter_mut().for_each(|b| b.loss = GroundLoss::SquaredL2);
        let no_linear = LossWeights { alpha_h: 0.0, alpha_f_d: 0.0, alpha_f_c: 0.0, ..w };
        let grads = lot_gradients(&g, &g_hat, &plan, &edge_only, &no_linear).unwrap();
        let t = plan.matrix();
        let n = 4;
        for a in 0..n {
            for b in 0..n {
                let mut expected = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        let cost: f64 = edge_only
                            .edge
                            .iter()
                            .map(|blk| {
                                blk.loss.evaluate(
                                    &g.c.slice(s![a, k, blk.start..blk.end]).to_vec(),
                                    &g_hat.c.slice(s![b, l, blk.start..blk.end]).to_vec(),
                                )
                            })
                            .sum();
                        expected += 2.0 * g.h[a] * g.h[k] * cost * t[[k, l]];
                    }
                }
                assert!((grads.d_t[[a, b]] - expected).abs() < 1e-10);
            }
        }
    }
}
