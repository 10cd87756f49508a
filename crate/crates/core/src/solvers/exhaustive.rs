use crate::error::{Error, Result};
use crate::graph::{DenseGraph, Permutation};
use crate::loss::{lot_at_permutation, GroundLosses, LossWeights};

/// Largest graph size accepted by [`exhaustive_min`].
pub const MAX_EXHAUSTIVE_SIZE: usize = 8;

/// Exact minimiser of the loss over all `N!` hard plans `T[i, σ(i)] = 1`.
///
/// Permutations are visited in lexicographic order and only a strictly
/// better value replaces the incumbent, so ties resolve to the
/// lexicographically smallest `σ`. Branches whose partial cost already
/// reaches the incumbent are pruned (all costs are nonnegative).
pub fn exhaustive_min(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    gl: &GroundLosses,
    w: &LossWeights,
) -> Result<(Permutation, f64)> {
    let n = g.size();
    if n > MAX_EXHAUSTIVE_SIZE {
        return Err(Error::Size {
            what: "exhaustive permutation search",
            size: n,
            limit: MAX_EXHAUSTIVE_SIZE,
        });
    }
    let costs = PairCosts::new(g, g_hat, gl, w)?;
    let mut search = Search {
        costs: &costs,
        n,
        sigma: Vec::with_capacity(n),
        used: vec![false; n],
        best: None,
        prune: costs.nonnegative,
    };
    search.descend(0.0);
    let sigma = Permutation::new(search.best.expect("at least one permutation").0)?;
    let value = lot_at_permutation(g, g_hat, &sigma, gl, w)?;
    Ok((sigma, value))
}

/// Linear costs `lin[i][j]` and masked edge costs `quad[((i·n + k)·n + j)·n + l]`.
struct PairCosts {
    n: usize,
    lin: Vec<f64>,
    quad: Vec<f64>,
    nonnegative: bool,
}

impl PairCosts {
    fn new(g: &DenseGraph, g_hat: &DenseGraph, gl: &GroundLosses, w: &LossWeights) -> Result<Self> {
        let n = g.size();
        let mut lin = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                lin[i * n + j] = single_linear(g, g_hat, gl, w, i, j);
            }
        }
        let mut quad = vec![0.0; n * n * n * n];
        for i in 0..n {
            for k in 0..n {
                let mask = g.h[i] * g.h[k];
                if mask == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for l in 0..n {
                        quad[((i * n + k) * n + j) * n + l] = mask * single_edge(g, g_hat, gl, w, i, k, j, l);
                    }
                }
            }
        }
        let nonnegative = lin.iter().chain(quad.iter()).all(|&v| v >= 0.0);
        Ok(Self {
            n,
            lin,
            quad,
            nonnegative,
        })
    }

    fn quad(&self, i: usize, k: usize, j: usize, l: usize) -> f64 {
        let n = self.n;
        self.quad[((i * n + k) * n + j) * n + l]
    }
}

fn single_linear(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    gl: &GroundLosses,
    w: &LossWeights,
    i: usize,
    j: usize,
) -> f64 {
    let mut cost = w.alpha_h * gl.mask.evaluate(&[g.h[i]], &[g_hat.h[j]]);
    if g.h[i] != 0.0 {
        for b in &gl.node {
            let a = g.f.slice(ndarray::s![i, b.start..b.end]).to_vec();
            let p = g_hat.f.slice(ndarray::s![j, b.start..b.end]).to_vec();
            cost += w.node(b.role) * g.h[i] * b.loss.evaluate(&a, &p);
        }
    }
    cost
}

#[allow(clippy::too_many_arguments)]
fn single_edge(
    g: &DenseGraph,
    g_hat: &DenseGraph,
    gl: &GroundLosses,
    w: &LossWeights,
    i: usize,
    k: usize,
    j: usize,
    l: usize,
) -> f64 {
    gl.edge
        .iter()
        .map(|b| {
            let a = g.c.slice(ndarray::s![i, k, b.start..b.end]).to_vec();
            let p = g_hat.c.slice(ndarray::s![j, l, b.start..b.end]).to_vec();
            w.edge(b.role) * b.loss.evaluate(&a, &p)
        })
        .sum()
}

struct Search<'a> {
    costs: &'a PairCosts,
    n: usize,
    sigma: Vec<usize>,
    used: Vec<bool>,
    best: Option<(Vec<usize>, f64)>,
    prune: bool,
}

impl Search<'_> {
    fn descend(&mut self, partial: f64) {
        if self.prune {
            if let Some((_, best)) = &self.best {
                if partial >= *best {
                    return;
                }
            }
        }
        let m = self.sigma.len();
        if m == self.n {
            let better = match &self.best {
                None => true,
                Some((_, best)) => partial < *best,
            };
            if better {
                self.best = Some((self.sigma.clone(), partial));
            }
            return;
        }
        for j in 0..self.n {
            if self.used[j] {
                continue;
            }
            let c = self.costs;
            let mut add = c.lin[m * self.n + j] + c.quad(m, m, j, j);
            for (k, &l) in self.sigma.iter().enumerate() {
                add += c.quad(m, k, j, l) + c.quad(k, m, l, j);
            }
            self.used[j] = true;
            self.sigma.push(j);
            self.descend(partial + add);
            self.sigma.pop();
            self.used[j] = false;
        }
    }
}
