//! Experiment drivers behind the command-line tool: solver benchmarks on
//! random graph pairs, loss evaluation under a chosen plan, and validity
//! curves of corrupted colourings.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{coloring_valid, corrupt_labels};
use crate::editdist::{edit_exact, upper_bound, MAX_EXACT_EDIT_NODES};
use crate::error::{Error, Result};
use crate::featurize::{diffusion_features, featurize, FeaturizedPair, FeaturizerConfig};
use crate::graph::{dense_from_sparse, DenseGraph, Permutation, SparseGraph, TransportPlan};
use crate::loss::{
    l_pigvae, lot_fast, lot_gradients, lot_naive, pigvae_plus, GroundLosses, LossWeights,
};
use crate::matcher::{match_graphs, AffinityModel};
use crate::solvers::{exhaustive_min, frank_wolfe_qap, hungarian, FwConfig};

/// Repetitions per pair for the timing median.
pub const TIMING_RUNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Exhaustive,
    FrankWolfe,
    HungarianAffinity,
    Matcher,
    Random,
}

impl Solver {
    pub const ALL: [Solver; 5] = [
        Solver::Exhaustive,
        Solver::FrankWolfe,
        Solver::HungarianAffinity,
        Solver::Matcher,
        Solver::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Exhaustive => "exhaustive",
            Solver::FrankWolfe => "frank-wolfe",
            Solver::HungarianAffinity => "hungarian-affinity",
            Solver::Matcher => "matcher",
            Solver::Random => "random",
        }
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown solver '{s}'")))
    }
}

/// One solver's statistics; `None` marks a solver that could not run (N.A.).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub solver: String,
    pub mean_distance: Option<f64>,
    pub std_distance: Option<f64>,
    pub mean_seconds: Option<f64>,
    pub std_seconds: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N.A.".to_string(), |x| format!("{x:.6}"))
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "solver,mean_distance,std_distance,mean_seconds,std_seconds,pairs";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.solver,
                cell(r.mean_distance),
                cell(r.std_distance),
                cell(r.mean_seconds),
                cell(r.std_seconds),
                r.pairs
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub struct BenchConfig {
    pub solvers: Vec<Solver>,
    pub pairs: usize,
    pub seed: u64,
    pub featurizer: FeaturizerConfig,
    pub model: Option<AffinityModel>,
    pub fw: FwConfig,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Diffusion features padded with zero rows to `capacity`.
fn padded_features(g: &SparseGraph, capacity: usize, k: usize) -> Array2<f64> {
    let f = diffusion_features(g, k);
    let mut out = Array2::zeros((capacity, f.ncols()));
    out.slice_mut(ndarray::s![..f.nrows(), ..]).assign(&f);
    out
}

/// Hungarian matching on L1 distances between featurizer node features.
pub fn feature_matching(g1: &SparseGraph, g2: &SparseGraph, k: usize) -> Result<Permutation> {
    let n = g1.num_nodes().max(g2.num_nodes());
    let a = padded_features(g1, n, k);
    let b = padded_features(g2, n, k);
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension("graphs use different label alphabets".into()));
    }
    let cost = Array2::from_shape_fn((n, n), |(i, j)| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y).abs()).sum()
    });
    hungarian(&cost)
}

/// Frank–Wolfe on the one-hot padded forms with squared-L2 label losses and
/// unit weights, rounded to a permutation.
pub fn frank_wolfe_matching(g1: &SparseGraph, g2: &SparseGraph, cfg: &FwConfig) -> Result<Permutation> {
    let n = g1.num_nodes().max(g2.num_nodes());
    let a = dense_from_sparse(g1, n)?;
    let b = dense_from_sparse(g2, n)?;
    if !a.same_shape(&b) {
        return Err(Error::Dimension("graphs use different label alphabets".into()));
    }
    let gl = GroundLosses::labels(crate::loss::GroundLoss::SquaredL2, a.node_dim(), a.edge_dim());
    frank_wolfe_qap(&a, &b, &gl, &LossWeights::unit(), cfg)?.rounded()
}

fn solve_pair(
    solver: Solver,
    g1: &SparseGraph,
    g2: &SparseGraph,
    pair_seed: u64,
    cfg: &BenchConfig,
) -> Result<Option<usize>> {
    let n = g1.num_nodes().max(g2.num_nodes());
    Ok(Some(match solver {
        Solver::Exhaustive => {
            if n > MAX_EXACT_EDIT_NODES {
                return Ok(None);
            }
            edit_exact(g1, g2)?.distance
        }
        Solver::FrankWolfe => upper_bound(g1, g2, &frank_wolfe_matching(g1, g2, &cfg.fw)?)?.distance,
        Solver::HungarianAffinity => {
            upper_bound(g1, g2, &feature_matching(g1, g2, cfg.featurizer.k)?)?.distance
        }
        Solver::Matcher => match &cfg.model {
            None => return Ok(None),
            Some(model) => match_graphs(model, g1, g2, n, &cfg.featurizer)?.1.distance,
        },
        Solver::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            upper_bound(g1, g2, &Permutation::new(p)?)?.distance
        }
    }))
}

/// Distance and median wall-clock seconds over [`TIMING_RUNS`] runs.
fn timed(
    solver: Solver,
    g1: &SparseGraph,
    g2: &SparseGraph,
    pair_seed: u64,
    cfg: &BenchConfig,
) -> Result<Option<(usize, f64)>> {
    let mut times = Vec::with_capacity(TIMING_RUNS);
    let mut distance = None;
    for _ in 0..TIMING_RUNS {
        let start = Instant::now();
        distance = solve_pair(solver, g1, g2, pair_seed, cfg)?;
        times.push(start.elapsed().as_secs_f64());
        if distance.is_none() {
            return Ok(None);
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(distance.map(|d| (d, times[TIMING_RUNS / 2])))
}

/// Seeded pair indices, distinct when the dataset has more than one graph.
pub fn sample_pairs(len: usize, pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..len);
            let mut j = rng.random_range(0..len);
            while len > 1 && j == i {
                j = rng.random_range(0..len);
            }
            (i, j)
        })
        .collect()
}

/// Runs every requested solver on the same sampled pairs. Pairs are solved
/// in parallel on the current rayon pool and reported in pair order.
pub fn cmd_bench(graphs: &[SparseGraph], cfg: &BenchConfig) -> Result<BenchReport> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("benchmark dataset is empty".into()));
    }
    if cfg.pairs == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one pair".into()));
    }
    let pairs = sample_pairs(graphs.len(), cfg.pairs, cfg.seed);
    let mut rows = Vec::new();
    for &solver in &cfg.solvers {
        let results: Vec<Result<Option<(usize, f64)>>> = pairs
            .par_iter()
            .enumerate()
            .map(|(idx, &(i, j))| {
                let pair_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(idx as u64);
                timed(solver, &graphs[i], &graphs[j], pair_seed, cfg)
            })
            .collect();
        let results = results.into_iter().collect::<Result<Option<Vec<_>>>>()?;
        let row = match results {
            None => BenchRow {
                solver: solver.name().into(),
                mean_distance: None,
                std_distance: None,
                mean_seconds: None,
                std_seconds: None,
                pairs: pairs.len(),
            },
            Some(r) => {
                let d: Vec<f64> = r.iter().map(|x| x.0 as f64).collect();
                let t: Vec<f64> = r.iter().map(|x| x.1).collect();
                let (md, sd) = mean_std(&d);
                let (mt, st) = mean_std(&t);
                BenchRow {
                    solver: solver.name().into(),
                    mean_distance: Some(md),
                    std_distance: Some(sd),
                    mean_seconds: Some(mt),
                    std_seconds: Some(st),
                    pairs: pairs.len(),
                }
            }
        };
        rows.push(row);
    }
    Ok(BenchReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LossKind {
    Ot,
    Pigvae,
    PigvaePlus,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ot => "ot",
            LossKind::Pigvae => "pigvae",
            LossKind::PigvaePlus => "pigvae-plus",
        }
    }
}

pub enum PlanSource {
    Exhaustive,
    FrankWolfe(FwConfig),
    Given(TransportPlan),
}

impl PlanSource {
    pub fn name(&self) -> &'static str {
        match self {
            PlanSource::Exhaustive => "exhaustive",
            PlanSource::FrankWolfe(_) => "fw",
            PlanSource::Given(_) => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientNorms {
    pub h_hat: f64,
    pub f_hat: f64,
    pub c_hat: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub loss: String,
    pub plan: String,
    pub size: usize,
    pub value: f64,
    pub permutation: Option<Vec<usize>>,
    pub gradient_norms: Option<GradientNorms>,
}

pub struct LossRequest {
    pub plan: PlanSource,
    pub kind: LossKind,
    pub ground: GroundLosses,
    pub weights: LossWeights,
    pub lambda: f64,
    pub gradients: bool,
}

fn frobenius<'a>(xs: impl Iterator<Item = &'a f64>) -> f64 {
    xs.map(|v| v * v).sum::<f64>().sqrt()
}

/// Loss of `g_hat` against `g` under the requested plan.
pub fn cmd_loss(g: &DenseGraph, g_hat: &DenseGraph, req: &LossRequest) -> Result<LossRecord> {
    req.weights.validate()?;
    req.ground.validate(g.node_dim(), g.edge_dim())?;
    let (plan, permutation) = match &req.plan {
        PlanSource::Exhaustive => {
            let (sigma, _) = exhaustive_min(g, g_hat, &req.ground, &req.weights)?;
            (sigma.to_plan(), Some(sigma.as_slice().to_vec()))
        }
        PlanSource::FrankWolfe(fw) => {
            let res = frank_wolfe_qap(g, g_hat, &req.ground, &req.weights, fw)?;
            (res.plan, None)
        }
        PlanSource::Given(t) => {
            if t.size() != g.size() {
                return Err(Error::Dimension(format!(
                    "plan is {0}x{0}, graphs have size {1}",
                    t.size(),
                    g.size()
                )));
            }
            (t.clone(), None)
        }
    };
    let value = match req.kind {
        LossKind::Ot => {
            if req.ground.edge_factorizable() {
                lot_fast(g, g_hat, &plan, &req.ground, &req.weights)?
            } else {
                lot_naive(g, g_hat, &plan, &req.ground, &req.weights)?
            }
        }
        LossKind::Pigvae => l_pigvae(g, g_hat, &plan, &req.ground, &req.weights)?,
        LossKind::PigvaePlus => pigvae_plus(g, g_hat, &plan, &req.ground, &req.weights, req.lambda)?,
    };
    let gradient_norms = if req.gradients {
        if req.kind != LossKind::Ot {
            return Err(Error::Unsupported(format!(
                "gradients are available for the ot loss only, not {}",
                req.kind.name()
            )));
        }
        let gr = lot_gradients(g, g_hat, &plan, &req.ground, &req.weights)?;
        Some(GradientNorms {
            h_hat: frobenius(gr.d_h_hat.iter()),
            f_hat: frobenius(gr.d_f_hat.iter()),
            c_hat: frobenius(gr.d_c_hat.iter()),
            t: frobenius(gr.d_t.iter()),
        })
    } else {
        None
    };
    Ok(LossRecord {
        loss: req.kind.name().into(),
        plan: req.plan.name().into(),
        size: g.size(),
        value,
        permutation,
        gradient_norms,
    })
}

/// Parses a graph file holding either a sparse record or a dense
/// `{"h", "F", "C"}` record.
pub enum GraphFile {
    Sparse(SparseGraph),
    Dense(DenseGraph),
}

impl GraphFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("h").is_some() {
            Ok(GraphFile::Dense(DenseGraph::from_json(text)?))
        } else {
            Ok(GraphFile::Sparse(SparseGraph::from_json(text)?))
        }
    }

    fn size(&self) -> usize {
        match self {
            GraphFile::Sparse(g) => g.num_nodes(),
            GraphFile::Dense(g) => g.size(),
        }
    }

    fn into_dense(self, capacity: usize) -> Result<DenseGraph> {
        match self {
            GraphFile::Sparse(g) => dense_from_sparse(&g, capacity),
            GraphFile::Dense(g) => Ok(g),
        }
    }
}

/// Brings two graph files to a common dense shape; sparse graphs are padded
/// to `capacity` (default: the larger graph).
pub fn dense_pair(a: GraphFile, b: GraphFile, capacity: Option<usize>) -> Result<(DenseGraph, DenseGraph)> {
    let n = capacity.unwrap_or(a.size().max(b.size()));
    let (a, b) = (a.into_dense(n)?, b.into_dense(n)?);
    if !a.same_shape(&b) {
        return Err(Error::Dimension(format!(
            "graphs have shapes ({}, {}, {}) and ({}, {}, {})",
            a.size(),
            a.node_dim(),
            a.edge_dim(),
            b.size(),
            b.node_dim(),
            b.edge_dim()
        )));
    }
    Ok((a, b))
}

/// Reads a plan stored as a nested JSON array.
pub fn parse_plan(text: &str) -> Result<TransportPlan> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("plan file must hold a square matrix".into()));
    }
    TransportPlan::new(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
}

/// Featurizes a dataset with per-graph noise seeds `seed + index`.
pub fn featurize_dataset(graphs: &[SparseGraph], capacity: usize, cfg: &FeaturizerConfig) -> Result<Vec<FeaturizedPair>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let c = FeaturizerConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..*cfg
            };
            featurize(g, capacity, &c)
        })
        .collect()
}

/// Fraction of graphs still properly coloured after corrupting each node
/// label with probability `p`, for every `p` in `levels`. All levels reuse
/// the same random stream, so higher levels corrupt a superset of nodes.
pub fn denoise_eval(graphs: &[SparseGraph], levels: &[f64], seed: u64) -> Result<Vec<(f64, f64)>> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("denoise-eval dataset is empty".into()));
    }
    levels
        .iter()
        .map(|&p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut valid = 0usize;
            for g in graphs {
                if coloring_valid(&corrupt_labels(g, p, &mut rng)?) {
                    valid += 1;
                }
            }
            Ok((p, valid as f64 / graphs.len() as f64))
        })
        .collect()
}

pub fn denoise_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("p,valid_fraction\n");
    for (p, v) in rows {
        let _ = writeln!(out, "{p},{v:.6}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig};
    use crate::fixtures::counterexample;

    fn pool() -> Vec<SparseGraph> {
        generate(&GenConfig { n_min: 4, n_max: 7, seed: 11, ..Default::default() }, 30).unwrap()
    }

    fn cfg(solvers: Vec<Solver>) -> BenchConfig {
        BenchConfig {
            solvers,
            pairs: 20,
            seed: 3,
            featurizer: FeaturizerConfig::default(),
            model: None,
            fw: FwConfig::default(),
        }
    }

    fn strip_timing(csv: &str) -> Vec<String> {
        csv.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},{},{}", f[0], f[1], f[2], f[5])
            })
            .collect()
    }

    #[test]
    fn bench_rows_and_determinism() {
        let graphs = pool();
        let c = cfg(Solver::ALL.to_vec());
        let a = cmd_bench(&graphs, &c).unwrap();
        let b = cmd_bench(&graphs, &c).unwrap();
        assert_eq!(strip_timing(&a.to_csv()), strip_timing(&b.to_csv()));
        assert_eq!(a.rows.len(), 5);
        let get = |s: &str| a.rows.iter().find(|r| r.solver == s).unwrap().mean_distance;
        assert!(get("matcher").is_none());
        let exact = get("exhaustive").unwrap();
        for s in ["frank-wolfe", "hungarian-affinity", "random"] {
            assert!(get(s).unwrap() >= exact);
        }
        assert!(get("random").unwrap() >= get("frank-wolfe").unwrap());
        assert!(a.to_csv().contains("matcher,N.A.,N.A.,N.A.,N.A.,20"));
    }

    #[test]
    fn identical_pairs_have_zero_exact_distance() {
        let graphs = vec![pool().remove(0)];
        let r = cmd_bench(&graphs, &cfg(vec![Solver::Exhaustive])).unwrap();
        assert_eq!(r.rows[0].mean_distance, Some(0.0));
        assert!("simplex".parse::<Solver>().is_err());
    }

    #[test]
    fn loss_record_for_the_counterexample() {
        let (g, g_hat, plan) = counterexample();
        let gl = GroundLosses::uniform(
            crate::loss::GroundLoss::SquaredL2,
            crate::loss::Role::Continuous,
            g.node_dim(),
            g.edge_dim(),
        );
        let mut req = LossRequest {
            plan: PlanSource::Given(plan),
            kind: LossKind::Pigvae,
            ground: gl,
            weights: LossWeights::unit(),
            lambda: 0.0,
            gradients: false,
        };
        assert!(cmd_loss(&g, &g_hat, &req).unwrap().value.abs() <= 1e-12);
        req.kind = LossKind::Ot;
        assert!((cmd_loss(&g, &g_hat, &req).unwrap().value - 0.5).abs() <= 1e-12);
        req.plan = PlanSource::Given(TransportPlan::uniform(3));
        assert!(matches!(cmd_loss(&g, &g_hat, &req), Err(Error::Dimension(_))));
    }

    #[test]
    fn graph_files_and_plans_parse() {
        let g = pool().remove(0);
        let dense = dense_from_sparse(&g, 9).unwrap();
        let (a, b) = dense_pair(
            GraphFile::parse(&g.to_json()).unwrap(),
            GraphFile::parse(&dense.to_json()).unwrap(),
            Some(9),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_plan("[[0.5,0.5],[0.5,0.5]]").unwrap(), TransportPlan::uniform(2));
        assert!(parse_plan("[[1,0]]").is_err());
    }

    #[test]
    fn denoise_curve() {
        let graphs = pool();
        let rows = denoise_eval(&graphs, &[0.0, 0.2, 0.5, 1.0], 1).unwrap();
        assert_eq!(rows[0].1, 1.0);
        assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 + 0.02));
        assert_eq!(denoise_csv(&rows), denoise_csv(&denoise_eval(&graphs, &[0.0, 0.2, 0.5, 1.0], 1).unwrap()));
    }
}
