//! Input and target featurization of labelled graphs.
//!
//! The input side enriches one-hot labels with diffusion features and
//! shortest-path positional encodings and adds a little Gaussian noise to
//! break ties between symmetric nodes. The target side is the plain padded
//! one-hot encoding from [`dense_from_sparse`].

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{dense_from_sparse, DenseGraph, SparseGraph};

/// Base of the sinusoidal positional encoding.
pub const PE_BASE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    /// Diffusion order.
    pub k: usize,
    pub pe_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            k: 2,
            pe_dim: 16,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.pe_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "pe_dim must be even, got {}",
                self.pe_dim
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be a finite value ≥ 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Width of the node features produced for a graph with `n_f` labels.
    pub fn node_dim(&self, n_f: usize) -> usize {
        n_f * (self.k + 1)
    }

    /// Width of the edge features produced for a graph with `n_f` node
    /// labels and `n_c` edge labels.
    pub fn edge_dim(&self, n_f: usize, n_c: usize) -> usize {
        2 * self.node_dim(n_f) + 2 + self.pe_dim + n_c
    }
}

/// Noisy unpadded input and deterministic padded target of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedPair {
    pub input: DenseGraph,
    pub target: DenseGraph,
}

/// BFS hop distances; unreachable pairs get the sentinel `n`.
pub fn shortest_paths(g: &SparseGraph) -> Array2<usize> {
    let n = g.num_nodes();
    let adj = g.adjacency_lists();
    let mut sp = Array2::from_elem((n, n), n);
    let mut queue = VecDeque::new();
    for src in 0..n {
        sp[[src, src]] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = sp[[src, v]];
            for &w in &adj[v] {
                if sp[[src, w]] == n && w != src {
                    sp[[src, w]] = d + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    sp
}

/// One-hot label matrix `F_0` of shape `n × n_f`.
pub fn one_hot_labels(g: &SparseGraph) -> Array2<f64> {
    let mut f = Array2::zeros((g.num_nodes(), g.n_f()));
    for (i, &l) in g.node_labels().iter().enumerate() {
        f[[i, l]] = 1.0;
    }
    f
}

/// `[F_0, A F_0, …, A^k F_0]`.
pub fn diffusion_features(g: &SparseGraph, k: usize) -> Array2<f64> {
    let n = g.num_nodes();
    let d0 = g.n_f();
    let a = g.adjacency_matrix();
    let mut out = Array2::zeros((n, d0 * (k + 1)));
    let mut cur = one_hot_labels(g);
    for m in 0..=k {
        out.slice_mut(s![.., m * d0..(m + 1) * d0]).assign(&cur);
        if m < k {
            cur = a.dot(&cur);
        }
    }
    out
}

/// Sinusoidal encoding of a distance: `sin(d / B^{2m/D})`, `cos(d / B^{2m/D})`
/// interleaved for `m = 0..D/2` with `B =` [`PE_BASE`].
pub fn positional_encoding(d: f64, pe_dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pe_dim);
    for m in 0..pe_dim / 2 {
        let x = d / PE_BASE.powf(2.0 * m as f64 / pe_dim as f64);
        out.push(x.sin());
        out.push(x.cos());
    }
    out
}

/// `C_ij = [F_i, F_j, onehot(A_ij), PE(SP_ij), onehot(edge label)]`, the last
/// block present only when `n_c > 0`.
pub fn edge_features(g: &SparseGraph, f: &Array2<f64>, cfg: &FeaturizerConfig) -> Result<Array3<f64>> {
    cfg.validate()?;
    let n = g.num_nodes();
    if f.nrows() != n {
        return Err(Error::Dimension(format!(
            "node features have {} rows for a graph with {n} nodes",
            f.nrows()
        )));
    }
    let d = f.ncols();
    let sp = shortest_paths(g);
    let n_c = g.n_c();
    let width = 2 * d + 2 + cfg.pe_dim + n_c;
    let mut c = Array3::zeros((n, n, width));
    let pe_start = 2 * d + 2;
    let label_start = pe_start + cfg.pe_dim;
    for i in 0..n {
        for j in 0..n {
            c.slice_mut(s![i, j, 0..d]).assign(&f.row(i));
            c.slice_mut(s![i, j, d..2 * d]).assign(&f.row(j));
            let label = if i == j { None } else { g.edge_label(i, j) };
            c[[i, j, 2 * d + usize::from(label.is_some())]] = 1.0;
            let pe = positional_encoding(sp[[i, j]] as f64, cfg.pe_dim);
            c.slice_mut(s![i, j, pe_start..label_start])
                .assign(&Array1::from(pe));
            if let Some(l) = label {
                c[[i, j, label_start + l]] = 1.0;
            }
        }
    }
    Ok(c)
}

/// Deterministic input features `(F, C)` before noise, as an unpadded dense graph.
pub fn input_features(g: &SparseGraph, cfg: &FeaturizerConfig) -> Result<DenseGraph> {
    cfg.validate()?;
    let f = diffusion_features(g, cfg.k);
    let c = edge_features(g, &f, cfg)?;
    DenseGraph::new_unchecked(Array1::ones(g.num_nodes()), f, c)
}

/// Builds the noisy input and the padded one-hot target of `g`.
pub fn featurize(g: &SparseGraph, capacity: usize, cfg: &FeaturizerConfig) -> Result<FeaturizedPair> {
    let target = dense_from_sparse(g, capacity)?;
    let mut input = input_features(g, cfg)?;
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        input.f.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    Ok(FeaturizedPair { input, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Permutation;

    fn path3() -> SparseGraph {
        SparseGraph::new(1, 1, vec![0, 0, 0], [(0, 1, 0), (1, 2, 0)]).unwrap()
    }

    fn triangle(labels: Vec<usize>) -> SparseGraph {
        SparseGraph::new(3, 1, labels, [(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap()
    }

    #[test]
    fn shortest_path_examples() {
        let sp = shortest_paths(&path3());
        assert_eq!(sp, ndarray::arr2(&[[0, 1, 2], [1, 0, 1], [2, 1, 0]]));
        let iso = SparseGraph::new(1, 0, vec![0, 0], []).unwrap();
        assert_eq!(shortest_paths(&iso), ndarray::arr2(&[[0, 2], [2, 0]]));
        let tri = shortest_paths(&triangle(vec![0, 0, 0]));
        assert!(tri.indexed_iter().all(|((i, j), &d)| d == usize::from(i != j)));
    }

    #[test]
    fn diffusion_examples() {
        let edge = SparseGraph::new(2, 1, vec![0, 1], [(0, 1, 0)]).unwrap();
        assert_eq!(
            diffusion_features(&edge, 1),
            ndarray::arr2(&[[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]])
        );
        assert_eq!(diffusion_features(&edge, 0), one_hot_labels(&edge));
        let tri = triangle(vec![1, 1, 1]);
        let f = diffusion_features(&tri, 2);
        let f0 = one_hot_labels(&tri);
        // Each row of A² sums to 2 + 1 + 1.
        assert_eq!(f.slice(s![.., 6..9]), &f0 * 4.0);
        let a = tri.adjacency_matrix();
        assert!(a.dot(&a).diag().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn positional_encoding_base() {
        let pe = positional_encoding(3.0, 4);
        let expected = [3f64.sin(), 3f64.cos(), (3.0 / 10.0f64).sin(), (3.0 / 10.0f64).cos()];
        for (a, b) in pe.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_feature_layout() {
        let g = SparseGraph::new(2, 2, vec![0, 1, 1], [(0, 1, 1)]).unwrap();
        let cfg = FeaturizerConfig::default();
        let f = diffusion_features(&g, cfg.k);
        let c = edge_features(&g, &f, &cfg).unwrap();
        let d = f.ncols();
        assert_eq!(c.dim().2, cfg.edge_dim(2, 2));
        // Diagonal: F_i twice, "no edge", PE(0).
        assert_eq!(c.slice(s![0, 0, 0..d]), f.row(0));
        assert_eq!(c.slice(s![0, 0, d..2 * d]), f.row(0));
        assert_eq!(c[[0, 0, 2 * d]], 1.0);
        assert_eq!(c[[0, 1, 2 * d + 1]], 1.0);
        assert_eq!(c[[0, 1, 2 * d + 2 + cfg.pe_dim + 1]], 1.0);
        // Disconnected pair uses the sentinel distance 3.
        let pe = positional_encoding(3.0, cfg.pe_dim);
        assert_eq!(c.slice(s![0, 2, 2 * d + 2..2 * d + 2 + cfg.pe_dim]).to_vec(), pe);
        // Swapping i and j swaps the F blocks only.
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.slice(s![i, j, 0..d]), c.slice(s![j, i, d..2 * d]));
                assert_eq!(c.slice(s![i, j, 2 * d..]), c.slice(s![j, i, 2 * d..]));
            }
        }
    }

    #[test]
    fn featurize_noise_and_padding() {
        let g = path3();
        let quiet = FeaturizerConfig { noise_sigma: 0.0, ..Default::default() };
        let pair = featurize(&g, 5, &quiet).unwrap();
        assert_eq!(pair.input.f, diffusion_features(&g, 2));
        assert_eq!(pair.target.h.to_vec(), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let noisy = FeaturizerConfig { seed: 9, ..Default::default() };
        let a = featurize(&g, 5, &noisy).unwrap();
        let b = featurize(&g, 5, &noisy).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.input.f, pair.input.f);
        assert!(matches!(featurize(&g, 2, &quiet), Err(Error::Capacity { .. })));
        let odd = FeaturizerConfig { pe_dim: 3, ..Default::default() };
        assert!(featurize(&g, 5, &odd).is_err());
    }

    #[test]
    fn featurize_is_equivariant() {
        let g = SparseGraph::new(3, 2, vec![0, 1, 2, 1], [(0, 1, 0), (1, 2, 1), (2, 3, 0)]).unwrap();
        let p = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let cfg = FeaturizerConfig { noise_sigma: 0.0, ..Default::default() };
        let a = featurize(&g, 4, &cfg).unwrap();
        let b = featurize(&g.permuted(&p).unwrap(), 4, &cfg).unwrap();
        assert_eq!(a.input.permuted(&p).unwrap(), b.input);
        assert_eq!(a.target.permuted(&p).unwrap(), b.target);
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = FeaturizerConfig { k: 3, pe_dim: 8, noise_sigma: 0.5, seed: 4 };
        assert_eq!(FeaturizerConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
