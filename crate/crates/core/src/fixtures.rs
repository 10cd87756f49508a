//! Seeded random instances shared by unit tests, property suites and the
//! benchmark commands.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use crate::graph::{DenseGraph, TransportPlan};
use crate::loss::{ChannelBlock, GroundLoss, GroundLosses, Role};

/// Number of discrete / continuous channels in [`random_instance`] tensors.
pub const DISCRETE_DIM: usize = 3;
pub const CONTINUOUS_DIM: usize = 2;

fn simplex<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random one-hot labelled graph with a random active prefix.
pub fn random_label_graph<R: Rng>(rng: &mut R, n: usize, n_f: usize, n_c: usize) -> DenseGraph {
    let active = rng.random_range(1..=n);
    let mut labels = Vec::with_capacity(active);
    for _ in 0..active {
        labels.push(rng.random_range(0..n_f));
    }
    let mut edges = Vec::new();
    for a in 0..active {
        for b in (a + 1)..active {
            if rng.random_bool(0.4) {
                edges.push((a, b, rng.random_range(0..n_c)));
            }
        }
    }
    let g = crate::graph::SparseGraph::new(n_f, n_c, labels, edges).expect("valid by construction");
    crate::graph::dense_from_sparse(&g, n).expect("fits")
}

/// Ground losses for [`random_instance`] tensors: a discrete block scored by
/// `kind` followed by a continuous squared-L2 block, for nodes and edges.
pub fn mixed_losses(kind: GroundLoss) -> GroundLosses {
    let d = DISCRETE_DIM;
    let e = DISCRETE_DIM + CONTINUOUS_DIM;
    GroundLosses {
        mask: kind,
        node: vec![
            ChannelBlock::new(0, d, Role::Discrete, kind),
            ChannelBlock::new(d, e, Role::Continuous, GroundLoss::SquaredL2),
        ],
        edge: vec![
            ChannelBlock::new(0, d, Role::Discrete, kind),
            ChannelBlock::new(d, e, Role::Continuous, GroundLoss::SquaredL2),
        ],
    }
}

/// Draws a prediction lane in the representation `kind` expects.
fn prediction_lane<R: Rng>(rng: &mut R, kind: GroundLoss, d: usize) -> Vec<f64> {
    match kind {
        GroundLoss::Kl if d == 1 => vec![rng.random_range(0.05..0.95)],
        GroundLoss::Kl => simplex(rng, d),
        _ => (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

/// Random soft target: binary mask with at least one active node, simplex
/// discrete lanes, real continuous lanes, symmetric edges.
pub fn random_target<R: Rng>(rng: &mut R, n: usize) -> DenseGraph {
    let dim = DISCRETE_DIM + CONTINUOUS_DIM;
    let mut h = Array1::from_shape_fn(n, |_| if rng.random_bool(0.75) { 1.0 } else { 0.0 });
    h[rng.random_range(0..n)] = 1.0;
    let mut f = Array2::zeros((n, dim));
    for i in 0..n {
        let s = simplex(rng, DISCRETE_DIM);
        for c in 0..DISCRETE_DIM {
            f[[i, c]] = s[c];
        }
        for c in DISCRETE_DIM..dim {
            f[[i, c]] = rng.random_range(-1.0..1.0);
        }
    }
    let mut c = Array3::zeros((n, n, dim));
    for i in 0..n {
        for k in i..n {
            let s = simplex(rng, DISCRETE_DIM);
            let extra: Vec<f64> = (0..CONTINUOUS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            for (ch, v) in s.iter().chain(extra.iter()).enumerate() {
                c[[i, k, ch]] = *v;
                c[[k, i, ch]] = *v;
            }
        }
    }
    DenseGraph::new(h, f, c).expect("symmetric by construction")
}

/// Random prediction matching [`mixed_losses`]`(kind)`; edges are not symmetric.
pub fn random_prediction<R: Rng>(rng: &mut R, n: usize, kind: GroundLoss) -> DenseGraph {
    let dim = DISCRETE_DIM + CONTINUOUS_DIM;
    let h = Array1::from_shape_fn(n, |_| prediction_lane(rng, kind, 1)[0]);
    let mut f = Array2::zeros((n, dim));
    for i in 0..n {
        let lane = prediction_lane(rng, kind, DISCRETE_DIM);
        for c in 0..DISCRETE_DIM {
            f[[i, c]] = lane[c];
        }
        for c in DISCRETE_DIM..dim {
            f[[i, c]] = rng.random_range(-1.0..1.0);
        }
    }
    let mut c = Array3::zeros((n, n, dim));
    for i in 0..n {
        for k in 0..n {
            let lane = prediction_lane(rng, kind, DISCRETE_DIM);
            for ch in 0..DISCRETE_DIM {
                c[[i, k, ch]] = lane[ch];
            }
            for ch in DISCRETE_DIM..dim {
                c[[i, k, ch]] = rng.random_range(-1.0..1.0);
            }
        }
    }
    DenseGraph::new_unchecked(h, f, c).expect("shapes agree")
}

/// Random strictly positive bistochastic matrix by alternating normalization
/// of a random positive matrix.
pub fn random_bistochastic<R: Rng>(rng: &mut R, n: usize) -> TransportPlan {
    let mut t = Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..1.0));
    for _ in 0..500 {
        for mut row in t.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        for mut col in t.columns_mut() {
            let s = col.sum();
            col /= s;
        }
    }
    TransportPlan::new(t).expect("positive entries")
}

/// `(G, Ĝ, T, ground losses)` with a soft target and random prediction.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    kind: GroundLoss,
) -> (DenseGraph, DenseGraph, TransportPlan, GroundLosses) {
    let g = random_target(rng, n);
    let g_hat = random_prediction(rng, n, kind);
    let plan = random_bistochastic(rng, n);
    (g, g_hat, plan, mixed_losses(kind))
}

/// Two-node instance where reordering by the uniform plan hides a node-set
/// mismatch: `F = (0.5, 0.5)ᵀ`, `F̂ = (1, 0)ᵀ`, `C = Ĉ = 0`, `h = ĥ = 1`,
/// `T = ½ 𝟙𝟙ᵀ`.
pub fn counterexample() -> (DenseGraph, DenseGraph, TransportPlan) {
    let h = Array1::from_elem(2, 1.0);
    let g = DenseGraph::new(
        h.clone(),
        Array2::from_shape_vec((2, 1), vec![0.5, 0.5]).unwrap(),
        Array3::zeros((2, 2, 1)),
    )
    .unwrap();
    let g_hat = DenseGraph::new(
        h,
        Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap(),
        Array3::zeros((2, 2, 1)),
    )
    .unwrap();
    (g, g_hat, TransportPlan::uniform(2))
}

/// Averages `C` with its transpose in the first two indices.
pub fn symmetrized(g: &DenseGraph) -> DenseGraph {
    let n = g.size();
    let mut c = g.c.clone();
    for i in 0..n {
        for k in 0..n {
            for ch in 0..g.edge_dim() {
                c[[i, k, ch]] = 0.5 * (g.c[[i, k, ch]] + g.c[[k, i, ch]]);
            }
        }
    }
    DenseGraph::new_unchecked(g.h.clone(), g.f.clone(), c).unwrap()
}
