//! Seeded synthetic datasets: properly 4-coloured geometric graphs and
//! molecule-like labelled graphs, plus label corruption.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub const COLORS: usize = 4;
pub const KNN_K: usize = 3;
pub const MAX_COLORING_RETRIES: usize = 100;
pub const MAX_DEGREE: usize = 4;
pub const BOND_LABELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Coloring,
    Molecule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    pub flavor: Flavor,
    /// Probability that an eligible non-tree pair gets an extra bond (molecule).
    pub edge_density: f64,
    /// Node alphabet size (molecule; coloring always uses four colours).
    pub n_f: usize,
    /// Frequency of the dominant node label 0 (molecule).
    pub dominant_freq: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_min: 5,
            n_max: 20,
            seed: 0,
            flavor: Flavor::Coloring,
            edge_density: 0.1,
            n_f: 5,
            dominant_freq: 0.7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "size bounds must satisfy 1 ≤ n_min ≤ n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "edge_density must lie in (0, 1], got {}",
                self.edge_density
            )));
        }
        if self.n_f < 2 {
            return Err(Error::InvalidArgument("molecule alphabet needs at least 2 labels".into()));
        }
        if !(0.0..=1.0).contains(&self.dominant_freq) {
            return Err(Error::InvalidArgument(format!(
                "dominant_freq must lie in [0, 1], got {}",
                self.dominant_freq
            )));
        }
        Ok(())
    }
}

/// `count` graphs of the configured flavour from one seeded stream.
pub fn generate(cfg: &GenConfig, count: usize) -> Result<Vec<SparseGraph>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..count)
        .map(|_| match cfg.flavor {
            Flavor::Coloring => gen_coloring(cfg, &mut rng),
            Flavor::Molecule => gen_molecule(cfg, &mut rng),
        })
        .collect()
}

/// Connected graph on random points of the unit square (symmetrised
/// 3-nearest-neighbour edges, components joined by their closest pair)
/// with a proper greedy 4-colouring in random node order.
pub fn gen_coloring<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Result<SparseGraph> {
    let n = rng.random_range(cfg.n_min..=cfg.n_max);
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let dist = |a: usize, b: usize| {
        let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        dx * dx + dy * dy
    };
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| dist(a, x).total_cmp(&dist(a, y)));
        for &b in others.iter().take(KNN_K) {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    join_components(&mut adj, dist);

    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..n).filter(|&b| adj[a][b]).collect())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_COLORING_RETRIES {
        order.shuffle(rng);
        if let Some(colors) = greedy_coloring(&neighbours, &order, rng) {
            let edges: Vec<(usize, usize, usize)> = (0..n)
                .flat_map(|a| neighbours[a].iter().filter(move |&&b| b > a).map(move |&b| (a, b, 0)))
                .collect();
            return SparseGraph::new(COLORS, 1, colors, edges);
        }
    }
    Err(Error::Generation(format!(
        "no proper {COLORS}-colouring found for a {n}-node graph after {MAX_COLORING_RETRIES} attempts"
    )))
}

fn join_components(adj: &mut [Vec<bool>], dist: impl Fn(usize, usize) -> f64) {
    let n = adj.len();
    loop {
        let mut reached = vec![false; n];
        if n > 0 {
            let mut stack = vec![0];
            reached[0] = true;
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if adj[v][w] && !reached[w] {
                        reached[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..n).filter(|&a| reached[a]) {
            for b in (0..n).filter(|&b| !reached[b]) {
                let d = dist(a, b);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((_, a, b)) => {
                adj[a][b] = true;
                adj[b][a] = true;
            }
            None => return,
        }
    }
}

/// Colours nodes in `order`, each with a uniformly chosen colour unused by
/// already coloured neighbours.
fn greedy_coloring<R: Rng>(neighbours: &[Vec<usize>], order: &[usize], rng: &mut R) -> Option<Vec<usize>> {
    let mut colors = vec![usize::MAX; neighbours.len()];
    for &v in order {
        let free: Vec<usize> = (0..COLORS)
            .filter(|&c| neighbours[v].iter().all(|&w| colors[w] != c))
            .collect();
        colors[v] = *free.choose(rng)?;
    }
    Some(colors)
}

/// Connected graph built as a random tree plus extra bonds, with node degree
/// at most [`MAX_DEGREE`], node label 0 drawn with probability
/// `dominant_freq` and bond labels from a 4-letter alphabet.
pub fn gen_molecule<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Result<SparseGraph> {
    let n = rng.random_range(cfg.n_min..=cfg.n_max);
    let mut degree = vec![0usize; n];
    let mut adj = vec![vec![false; n]; n];
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| degree[u] < MAX_DEGREE).collect();
        let &u = open.choose(rng).expect("the previous node has degree 1");
        adj[u][v] = true;
        adj[v][u] = true;
        degree[u] += 1;
        degree[v] += 1;
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if !adj[a][b]
                && degree[a] < MAX_DEGREE
                && degree[b] < MAX_DEGREE
                && rng.random_bool(cfg.edge_density)
            {
                adj[a][b] = true;
                adj[b][a] = true;
                degree[a] += 1;
                degree[b] += 1;
            }
        }
    }
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(cfg.dominant_freq) {
                0
            } else {
                rng.random_range(1..cfg.n_f)
            }
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if adj[a][b] {
                let bond = if rng.random_bool(0.7) {
                    0
                } else {
                    rng.random_range(1..BOND_LABELS)
                };
                edges.push((a, b, bond));
            }
        }
    }
    SparseGraph::new(cfg.n_f, BOND_LABELS, labels, edges)
}

/// Resamples each node label uniformly with probability `p`.
pub fn corrupt_labels<R: Rng>(g: &SparseGraph, p: f64, rng: &mut R) -> Result<SparseGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("corruption rate must lie in [0, 1], got {p}")));
    }
    let labels = g
        .node_labels()
        .iter()
        .map(|&l| {
            // Both draws are always taken so streams stay aligned across rates.
            let u: f64 = rng.random();
            let fresh = rng.random_range(0..g.n_f());
            if u < p {
                fresh
            } else {
                l
            }
        })
        .collect();
    g.with_node_labels(labels)
}

/// Connected, and no edge joins two equal labels.
pub fn coloring_valid(g: &SparseGraph) -> bool {
    let labels = g.node_labels();
    g.is_connected() && g.edges().iter().all(|&(a, b, _)| labels[a] != labels[b])
}
