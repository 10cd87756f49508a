//! Log-domain Sinkhorn projection onto the bistochastic matrices, with an
//! exact reverse-mode derivative of the unrolled iterations.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TransportPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub n_iters: usize,
    /// Temperature: iterations run on `log K / epsilon`. `1.0` is the plain
    /// projection of `K`.
    pub epsilon: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            n_iters: 100,
            epsilon: 1.0,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::InvalidArgument("sinkhorn needs at least one iteration".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sinkhorn temperature must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Potentials recorded by the forward pass for the backward pass.
struct Trace {
    logits: Array2<f64>,
    /// Row potential after each half-step.
    f: Vec<Array1<f64>>,
    /// Column potential before each iteration; `g[n_iters]` is the final one.
    g: Vec<Array1<f64>>,
    plan: Array2<f64>,
}

fn log_kernel(k: &Array2<f64>) -> Result<Array2<f64>> {
    if k.nrows() != k.ncols() {
        return Err(Error::Dimension(format!(
            "kernel must be square, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if let Some(v) = k.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "sinkhorn kernel entries must be positive and finite, found {v}"
        )));
    }
    Ok(k.mapv(f64::ln))
}

fn forward(log_k: &Array2<f64>, cfg: &SinkhornConfig) -> Result<Trace> {
    cfg.validate()?;
    if log_k.nrows() != log_k.ncols() {
        return Err(Error::Dimension("kernel must be square".into()));
    }
    if log_k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("log-kernel entries must be finite".into()));
    }
    let n = log_k.nrows();
    let logits = log_k / cfg.epsilon;
    let mut f_hist = Vec::with_capacity(cfg.n_iters);
    let mut g_hist = Vec::with_capacity(cfg.n_iters + 1);
    let mut g = Array1::zeros(n);
    let mut f = Array1::zeros(n);
    for _ in 0..cfg.n_iters {
        for i in 0..n {
            f[i] = -lse((0..n).map(|j| logits[[i, j]] + g[j]));
        }
        g_hist.push(g.clone());
        for j in 0..n {
            g[j] = -lse((0..n).map(|i| logits[[i, j]] + f[i]));
        }
        f_hist.push(f.clone());
    }
    g_hist.push(g.clone());
    let plan = Array2::from_shape_fn((n, n), |(i, j)| (logits[[i, j]] + f[i] + g[j]).exp());
    Ok(Trace {
        logits,
        f: f_hist,
        g: g_hist,
        plan,
    })
}

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Projects a positive kernel `K`.
pub fn sinkhorn(k: &Array2<f64>, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    sinkhorn_log(&log_kernel(k)?, cfg)
}

/// Projects the kernel `exp(log_k)` without forming it.
pub fn sinkhorn_log(log_k: &Array2<f64>, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    TransportPlan::new(forward(log_k, cfg)?.plan)
}

/// Gradient with respect to `K` of `⟨upstream, sinkhorn(K)⟩`, through the
/// unrolled iterations.
pub fn sinkhorn_backward(k: &Array2<f64>, cfg: &SinkhornConfig, upstream: &Array2<f64>) -> Result<Array2<f64>> {
    let d_log = sinkhorn_backward_log(&log_kernel(k)?, cfg, upstream)?;
    Ok(d_log / k)
}

/// Gradient with respect to `log K`.
pub fn sinkhorn_backward_log(
    log_k: &Array2<f64>,
    cfg: &SinkhornConfig,
    upstream: &Array2<f64>,
) -> Result<Array2<f64>> {
    let trace = forward(log_k, cfg)?;
    if upstream.dim() != trace.plan.dim() {
        return Err(Error::Dimension(format!(
            "upstream gradient has shape {:?}, plan has {:?}",
            upstream.dim(),
            trace.plan.dim()
        )));
    }
    let n = log_k.nrows();
    let logits = &trace.logits;

    // T = exp(L + f 1ᵀ + 1 gᵀ)
    let weighted = &trace.plan * upstream;
    let mut d_logits = weighted.clone();
    let mut df = weighted.sum_axis(Axis(1));
    let mut dg = weighted.sum_axis(Axis(0));

    for t in (0..cfg.n_iters).rev() {
        let f = &trace.f[t];
        let g_new = &trace.g[t + 1];
        let g_old = &trace.g[t];
        // g_new_j = −lse_i(L_ij + f_i)
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let p = (logits[[i, j]] + f[i] + g_new[j]).exp();
                d_logits[[i, j]] -= p * dg[j];
                acc += p * dg[j];
            }
            df[i] -= acc;
        }
        // f_i = −lse_j(L_ij + g_old_j)
        let mut dg_old = Array1::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let q = (logits[[i, j]] + g_old[j] + f[i]).exp();
                d_logits[[i, j]] -= q * df[i];
                dg_old[j] -= q * df[i];
            }
        }
        df.fill(0.0);
        dg = dg_old;
    }
    Ok(d_logits / cfg.epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..10.0))
    }

    #[test]
    fn bistochastic_input_is_a_fixed_point() {
        let k = Array2::from_shape_vec((3, 3), vec![0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5]).unwrap();
        let t = sinkhorn(&k, &SinkhornConfig::default()).unwrap();
        for (a, b) in t.matrix().iter().zip(k.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_fixed_point() {
        let k = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let t = sinkhorn(&k, &SinkhornConfig::default()).unwrap();
        let expected = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in t.matrix().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let k = random_kernel(&mut rng, 6);
        let cfg = SinkhornConfig::default();
        let a = sinkhorn(&k, &cfg).unwrap();
        let b = sinkhorn(&(&k * 7.3), &cfg).unwrap();
        for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [3, 8, 20] {
            let t = sinkhorn(&random_kernel(&mut rng, n), &SinkhornConfig::default()).unwrap();
            assert!(t.marginal_deviation() <= 1e-6);
        }
    }

    #[test]
    fn rejects_nonpositive_kernels() {
        let k = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(sinkhorn(&k, &SinkhornConfig::default()), Err(Error::Domain(_))));
        let bad = SinkhornConfig { n_iters: 0, ..Default::default() };
        assert!(sinkhorn(&Array2::ones((2, 2)), &bad).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let k = random_kernel(&mut rng, 4);
        let d = sinkhorn_backward(&k, &SinkhornConfig::default(), &Array2::zeros((4, 4))).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for (n, eps) in [(4, 1.0), (6, 1.0), (4, 0.5)] {
            let cfg = SinkhornConfig { n_iters: 100, epsilon: eps };
            let k = random_kernel(&mut rng, n);
            let up = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let grad = sinkhorn_backward(&k, &cfg, &up).unwrap();
            let objective = |k: &Array2<f64>| -> f64 {
                (sinkhorn(k, &cfg).unwrap().matrix() * &up).sum()
            };
            let step = 1e-6;
            for i in 0..n {
                for j in 0..n {
                    let mut kp = k.clone();
                    let mut km = k.clone();
                    kp[[i, j]] += step;
                    km[[i, j]] -= step;
                    let fd = (objective(&kp) - objective(&km)) / (2.0 * step);
                    assert!(
                        (fd - grad[[i, j]]).abs() <= 1e-4 * fd.abs().max(1e-3),
                        "n={n} ({i},{j}): {fd} vs {}",
                        grad[[i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_log_shift_has_zero_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let k = random_kernel(&mut rng, 5);
        let up = Array2::from_shape_fn((5, 5), |_| rng.random_range(-1.0..1.0));
        let grad = sinkhorn_backward(&k, &SinkhornConfig::default(), &up).unwrap();
        // Direction K itself is d/dc at c = 1 of sinkhorn(cK).
        let directional: f64 = (&grad * &k).sum();
        assert!(directional.abs() < 1e-8, "{directional}");
    }
}
