//! Per-element ground losses and their `f1(a) + f2(b) − ⟨h1(a), h2(b)⟩`
//! factorizations.
//!
//! Every loss takes the target first and the prediction second. Blocks with a
//! single channel are read as Bernoulli parameters by the divergence kinds, so
//! the mask loss is binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundLoss {
    /// `Σ (a − b)²`.
    SquaredL2,
    /// `Σ a log(a / b)` on probability vectors, `0 log 0 = 0`.
    Kl,
    /// [`GroundLoss::Kl`] with the prediction given as logits (softmax, or a
    /// sigmoid for single-channel blocks, applied inside the loss).
    CrossEntropyLogits,
    /// `Σ |a − b|`; has no factorization.
    AbsoluteL1,
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `x log(x / y)` with `0 log(0 / y) = 0` and `x log(x / 0) = +∞` for `x > 0`.
fn xlogxy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y <= 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
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

impl GroundLoss {
    pub fn name(self) -> &'static str {
        match self {
            GroundLoss::SquaredL2 => "squared_l2",
            GroundLoss::Kl => "kl",
            GroundLoss::CrossEntropyLogits => "cross_entropy_logits",
            GroundLoss::AbsoluteL1 => "absolute_l1",
        }
    }

    pub fn evaluate(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            GroundLoss::SquaredL2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            GroundLoss::AbsoluteL1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            GroundLoss::Kl if a.len() == 1 => {
                xlogxy(a[0], b[0]) + xlogxy(1.0 - a[0], 1.0 - b[0])
            }
            GroundLoss::Kl => a.iter().zip(b).map(|(&x, &y)| xlogxy(x, y)).sum(),
            GroundLoss::CrossEntropyLogits if a.len() == 1 => {
                xlogx(a[0]) + xlogx(1.0 - a[0]) + softplus(b[0]) - a[0] * b[0]
            }
            GroundLoss::CrossEntropyLogits => {
                let mass: f64 = a.iter().sum();
                let neg_entropy: f64 = a.iter().map(|&x| xlogx(x)).sum();
                let dot: f64 = a.iter().zip(b).map(|(x, z)| x * z).sum();
                neg_entropy - dot + mass * log_sum_exp(b)
            }
        }
    }

    /// Gradient with respect to the prediction `b`, written into `out`.
    pub fn grad_prediction(self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match self {
            GroundLoss::SquaredL2 => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = 2.0 * (y - x);
                }
            }
            GroundLoss::AbsoluteL1 => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    let d = y - x;
                    *o = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            GroundLoss::Kl if a.len() == 1 => {
                out[0] = -a[0] / b[0] + (1.0 - a[0]) / (1.0 - b[0]);
            }
            GroundLoss::Kl => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = -x / y;
                }
            }
            GroundLoss::CrossEntropyLogits if a.len() == 1 => {
                out[0] = sigmoid(b[0]) - a[0];
            }
            GroundLoss::CrossEntropyLogits => {
                let mass: f64 = a.iter().sum();
                let lse = log_sum_exp(b);
                for ((o, x), z) in out.iter_mut().zip(a).zip(b) {
                    *o = mass * (z - lse).exp() - x;
                }
            }
        }
    }

    pub fn has_factorization(self) -> bool {
        !matches!(self, GroundLoss::AbsoluteL1)
    }

    /// Length of `h1(a)` and `h2(b)` for inputs of length `dim`.
    pub fn factor_dim(self, dim: usize) -> usize {
        match self {
            GroundLoss::CrossEntropyLogits if dim > 1 => dim + 1,
            _ => dim,
        }
    }

    pub fn f1(self, a: &[f64]) -> f64 {
        match self {
            GroundLoss::SquaredL2 => a.iter().map(|x| x * x).sum(),
            GroundLoss::Kl | GroundLoss::CrossEntropyLogits if a.len() == 1 => {
                xlogx(a[0]) + xlogx(1.0 - a[0])
            }
            GroundLoss::Kl | GroundLoss::CrossEntropyLogits => a.iter().map(|&x| xlogx(x)).sum(),
            GroundLoss::AbsoluteL1 => unreachable!("absolute_l1 has no factorization"),
        }
    }

    pub fn f2(self, b: &[f64]) -> f64 {
        match self {
            GroundLoss::SquaredL2 => b.iter().map(|x| x * x).sum(),
            GroundLoss::Kl if b.len() == 1 => -(1.0 - b[0]).ln(),
            GroundLoss::Kl => 0.0,
            GroundLoss::CrossEntropyLogits if b.len() == 1 => softplus(b[0]),
            GroundLoss::CrossEntropyLogits => 0.0,
            GroundLoss::AbsoluteL1 => unreachable!("absolute_l1 has no factorization"),
        }
    }

    pub fn h1(self, a: &[f64], out: &mut [f64]) {
        match self {
            GroundLoss::SquaredL2 => {
                for (o, x) in out.iter_mut().zip(a) {
                    *o = 2.0 * x;
                }
            }
            GroundLoss::Kl => out.copy_from_slice(a),
            GroundLoss::CrossEntropyLogits if a.len() == 1 => out.copy_from_slice(a),
            GroundLoss::CrossEntropyLogits => {
                let d = a.len();
                out[..d].copy_from_slice(a);
                out[d] = -a.iter().sum::<f64>();
            }
            GroundLoss::AbsoluteL1 => unreachable!("absolute_l1 has no factorization"),
        }
    }

    pub fn h2(self, b: &[f64], out: &mut [f64]) {
        match self {
            GroundLoss::SquaredL2 => out.copy_from_slice(b),
            GroundLoss::Kl if b.len() == 1 => out[0] = b[0].ln() - (1.0 - b[0]).ln(),
            GroundLoss::Kl => {
                for (o, y) in out.iter_mut().zip(b) {
                    *o = y.ln();
                }
            }
            GroundLoss::CrossEntropyLogits if b.len() == 1 => out.copy_from_slice(b),
            GroundLoss::CrossEntropyLogits => {
                let d = b.len();
                out[..d].copy_from_slice(b);
                out[d] = log_sum_exp(b);
            }
            GroundLoss::AbsoluteL1 => unreachable!("absolute_l1 has no factorization"),
        }
    }

    /// `s · ∇f2(b) − J_h2(b)ᵀ u`: the prediction gradient of
    /// `s · f2(b) − ⟨u, h2(b)⟩`.
    pub fn factor_pullback(self, b: &[f64], s: f64, u: &[f64], out: &mut [f64]) {
        match self {
            GroundLoss::SquaredL2 => {
                for ((o, y), v) in out.iter_mut().zip(b).zip(u) {
                    *o = 2.0 * s * y - v;
                }
            }
            GroundLoss::Kl if b.len() == 1 => {
                let y = b[0];
                out[0] = s / (1.0 - y) - u[0] * (1.0 / y + 1.0 / (1.0 - y));
            }
            GroundLoss::Kl => {
                for ((o, y), v) in out.iter_mut().zip(b).zip(u) {
                    *o = -v / y;
                }
            }
            GroundLoss::CrossEntropyLogits if b.len() == 1 => {
                out[0] = s * sigmoid(b[0]) - u[0];
            }
            GroundLoss::CrossEntropyLogits => {
                let d = b.len();
                let lse = log_sum_exp(b);
                for c in 0..d {
                    out[c] = -u[c] - u[d] * (b[c] - lse).exp();
                }
            }
            GroundLoss::AbsoluteL1 => unreachable!("absolute_l1 has no factorization"),
        }
    }

    /// Checks that the factorization and gradient are finite at prediction `b`.
    pub fn check_prediction(self, b: &[f64]) -> Result<()> {
        let ok = match self {
            GroundLoss::Kl if b.len() == 1 => b[0] > 0.0 && b[0] < 1.0,
            GroundLoss::Kl => b.iter().all(|&y| y > 0.0),
            _ => b.iter().all(|y| y.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{} prediction {:?} lies on the boundary of its domain",
                self.name(),
                b
            )))
        }
    }
}

/// Whether a channel block carries discrete labels or continuous features;
/// selects which α weight applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Discrete,
    Continuous,
}

/// Contiguous channel range scored by one ground loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBlock {
    pub start: usize,
    pub end: usize,
    pub role: Role,
    pub loss: GroundLoss,
}

impl ChannelBlock {
    pub fn new(start: usize, end: usize, role: Role, loss: GroundLoss) -> Self {
        Self {
            start,
            end,
            role,
            loss,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Ground losses for the mask, node and edge terms. Node and edge blocks
/// must tile their channel ranges exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundLosses {
    pub mask: GroundLoss,
    pub node: Vec<ChannelBlock>,
    pub edge: Vec<ChannelBlock>,
}

impl GroundLosses {
    /// One block per tensor, all scored by `loss`.
    pub fn uniform(loss: GroundLoss, role: Role, d_f: usize, d_c: usize) -> Self {
        Self {
            mask: loss,
            node: vec![ChannelBlock::new(0, d_f, role, loss)],
            edge: vec![ChannelBlock::new(0, d_c, role, loss)],
        }
    }

    /// Ground losses for one-hot label tensors: discrete blocks everywhere.
    pub fn labels(loss: GroundLoss, d_f: usize, d_c: usize) -> Self {
        Self::uniform(loss, Role::Discrete, d_f, d_c)
    }

    pub fn validate(&self, d_f: usize, d_c: usize) -> Result<()> {
        fn tiles(blocks: &[ChannelBlock], dim: usize, what: &str) -> Result<()> {
            let mut next = 0;
            for b in blocks {
                if b.start != next || b.end < b.start {
                    return Err(Error::Dimension(format!(
                        "{what} blocks must tile 0..{dim} contiguously"
                    )));
                }
                next = b.end;
            }
            if next != dim {
                return Err(Error::Dimension(format!(
                    "{what} blocks cover 0..{next}, tensor has {dim} channels"
                )));
            }
            Ok(())
        }
        tiles(&self.node, d_f, "node")?;
        tiles(&self.edge, d_c, "edge")
    }

    /// Every edge block supports the O(N³) evaluation.
    pub fn edge_factorizable(&self) -> bool {
        self.edge.iter().all(|b| b.loss.has_factorization())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [GroundLoss; 3] = [
        GroundLoss::SquaredL2,
        GroundLoss::Kl,
        GroundLoss::CrossEntropyLogits,
    ];

    fn simplex(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    /// Prediction drawn in the representation the loss expects.
    fn prediction(rng: &mut ChaCha8Rng, kind: GroundLoss, d: usize) -> Vec<f64> {
        match kind {
            GroundLoss::Kl if d == 1 => vec![rng.random_range(0.05..0.95)],
            GroundLoss::Kl => simplex(rng, d),
            _ => (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        }
    }

    fn target(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        if d == 1 {
            vec![rng.random_range(0.0..1.0)]
        } else {
            simplex(rng, d)
        }
    }

    #[test]
    fn factorization_reproduces_evaluate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in KINDS {
            for d in [1, 2, 5] {
                for _ in 0..50 {
                    let a = target(&mut rng, d);
                    let b = prediction(&mut rng, kind, d);
                    let k = kind.factor_dim(d);
                    let (mut h1, mut h2) = (vec![0.0; k], vec![0.0; k]);
                    kind.h1(&a, &mut h1);
                    kind.h2(&b, &mut h2);
                    let dot: f64 = h1.iter().zip(&h2).map(|(x, y)| x * y).sum();
                    let fact = kind.f1(&a) + kind.f2(&b) - dot;
                    let direct = kind.evaluate(&a, &b);
                    assert!(
                        (fact - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
                        "{kind:?} d={d}: {fact} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_on_the_diagonal_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [1, 3] {
            for _ in 0..20 {
                let a = target(&mut rng, d);
                assert!(GroundLoss::SquaredL2.evaluate(&a, &a).abs() < 1e-15);
                assert!(GroundLoss::Kl.evaluate(&a, &a).abs() < 1e-12);
                let logits: Vec<f64> = if d == 1 {
                    vec![(a[0] / (1.0 - a[0])).ln()]
                } else {
                    a.iter().map(|x| x.ln()).collect()
                };
                assert!(GroundLoss::CrossEntropyLogits.evaluate(&a, &logits).abs() < 1e-12);
                for kind in KINDS {
                    let b = prediction(&mut rng, kind, d);
                    assert!(kind.evaluate(&a, &b) >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn kl_boundary_conventions() {
        assert_eq!(GroundLoss::Kl.evaluate(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(GroundLoss::Kl.evaluate(&[1.0, 0.0], &[0.0, 1.0]), f64::INFINITY);
        assert_eq!(GroundLoss::Kl.evaluate(&[1.0], &[1.0]), 0.0);
        assert!(GroundLoss::Kl.check_prediction(&[0.5, 0.0]).is_err());
        assert!(GroundLoss::Kl.check_prediction(&[1.0]).is_err());
        assert!(GroundLoss::Kl.check_prediction(&[0.3, 0.7]).is_ok());
        assert!(GroundLoss::CrossEntropyLogits.check_prediction(&[-40.0, 3.0]).is_ok());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let step = 1e-6;
        for kind in [GroundLoss::SquaredL2, GroundLoss::Kl, GroundLoss::CrossEntropyLogits] {
            for d in [1, 4] {
                let a = target(&mut rng, d);
                let b = prediction(&mut rng, kind, d);
                let mut g = vec![0.0; d];
                kind.grad_prediction(&a, &b, &mut g);
                // Pullback with s = 1, u = h1(a) must reproduce the same gradient.
                let k = kind.factor_dim(d);
                let mut h1 = vec![0.0; k];
                kind.h1(&a, &mut h1);
                let mut pb = vec![0.0; d];
                kind.factor_pullback(&b, 1.0, &h1, &mut pb);
                for c in 0..d {
                    let mut bp = b.clone();
                    let mut bm = b.clone();
                    bp[c] += step;
                    bm[c] -= step;
                    let fd = (kind.evaluate(&a, &bp) - kind.evaluate(&a, &bm)) / (2.0 * step);
                    assert!((fd - g[c]).abs() <= 1e-6 * (1.0 + fd.abs()), "{kind:?}");
                    assert!((pb[c] - g[c]).abs() <= 1e-9 * (1.0 + g[c].abs()), "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn block_tiling() {
        let gl = GroundLosses::labels(GroundLoss::SquaredL2, 3, 2);
        assert!(gl.validate(3, 2).is_ok());
        assert!(gl.validate(4, 2).is_err());
        let gapped = GroundLosses {
            mask: GroundLoss::SquaredL2,
            node: vec![
                ChannelBlock::new(0, 1, Role::Discrete, GroundLoss::Kl),
                ChannelBlock::new(2, 3, Role::Continuous, GroundLoss::SquaredL2),
            ],
            edge: vec![],
        };
        assert!(gapped.validate(3, 0).is_err());
    }
}
