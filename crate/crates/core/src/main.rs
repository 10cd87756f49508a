use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use graphot::bench::{
    cmd_bench, cmd_loss, dense_pair, denoise_csv, denoise_eval, feature_matching, featurize_dataset,
    parse_plan, BenchConfig, GraphFile, LossKind, LossRequest, PlanSource, Solver,
};
use graphot::datagen::{generate, Flavor, GenConfig};
use graphot::editdist::{edit_exact, upper_bound, EditResult};
use graphot::featurize::FeaturizerConfig;
use graphot::graph::{read_jsonl, write_jsonl, Permutation, SparseGraph};
use graphot::loss::{GroundLoss, GroundLosses, LossWeights, Role};
use graphot::matcher::{match_graphs, train_matcher, AffinityModel, TrainConfig};
use graphot::solvers::{FwConfig, SinkhornConfig};

#[derive(Parser)]
#[command(name = "graphot", version, about = "Transport-plan graph losses, matching and edit distances")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: logical processors).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a JSON-lines dataset.
    Gen(GenArgs),
    /// Evaluate a loss between two graphs under a plan.
    Loss(LossArgs),
    /// Match two graphs and report the edit-distance upper bound.
    Match(MatchArgs),
    /// Exact or alignment-based edit distance.
    Editdist(EditArgs),
    /// Benchmark matching solvers on random pairs of a dataset.
    Bench(BenchArgs),
    /// Train the affinity matcher on a dataset.
    TrainMatcher(TrainArgs),
    /// Validity of corrupted colourings for several corruption rates.
    DenoiseEval(DenoiseArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Flavor::Coloring)]
    flavor: Flavor,
    #[arg(long, default_value_t = 5)]
    n_min: usize,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0.1)]
    edge_density: f64,
    #[arg(long, default_value_t = 5)]
    n_f: usize,
    #[arg(long, default_value_t = 0.7)]
    dominant_freq: f64,
}

#[derive(Args, Clone, Copy)]
struct FeatArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    pe_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    noise_sigma: f64,
}

impl FeatArgs {
    fn config(&self, seed: u64) -> FeaturizerConfig {
        FeaturizerConfig {
            k: self.k,
            pe_dim: self.pe_dim,
            noise_sigma: self.noise_sigma,
            seed,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct FwArgs {
    #[arg(long, default_value_t = 100)]
    fw_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    fw_tol: f64,
}

impl FwArgs {
    fn config(&self) -> FwConfig {
        FwConfig {
            max_iters: self.fw_iters,
            tol: self.fw_tol,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Exhaustive,
    Fw,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroundArg {
    L2,
    Kl,
    Ce,
    L1,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Size,
    Unit,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Discrete,
    Continuous,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum, default_value_t = PlanArg::Exhaustive)]
    plan: PlanArg,
    /// Plan as a nested JSON array (with --plan file).
    #[arg(long)]
    plan_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LossKind::Ot)]
    loss: LossKind,
    #[arg(long, default_value_t = graphot::loss::PIGVAE_PLUS_LAMBDA)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = GroundArg::L2)]
    ground: GroundArg,
    #[arg(long, value_enum, default_value_t = RoleArg::Discrete)]
    role: RoleArg,
    #[arg(long, value_enum, default_value_t = WeightsArg::Size)]
    weights: WeightsArg,
    #[arg(long)]
    alpha_h: Option<f64>,
    #[arg(long)]
    alpha_f_d: Option<f64>,
    #[arg(long)]
    alpha_f_c: Option<f64>,
    #[arg(long)]
    alpha_c_d: Option<f64>,
    #[arg(long)]
    alpha_c_c: Option<f64>,
    /// Padding size for sparse inputs (default: the larger graph).
    #[arg(long)]
    capacity: Option<usize>,
    /// Also report gradient norms (ot loss only).
    #[arg(long)]
    gradients: bool,
    #[command(flatten)]
    fw: FwArgs,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Trained matcher; without it nodes are matched on raw featurizer features.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    feat: FeatArgs,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Exhaustive search (the default when no permutation is given).
    #[arg(long, conflicts_with = "perm")]
    exact: bool,
    /// Alignment as a JSON array; reports its cost.
    #[arg(long)]
    perm: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated subset of exhaustive, frank-wolfe, hungarian-affinity, matcher, random.
    #[arg(long, value_delimiter = ',', default_value = "exhaustive,frank-wolfe,hungarian-affinity,matcher,random")]
    solvers: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    feat: FeatArgs,
    #[command(flatten)]
    fw: FwArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Padding size (default: the largest graph).
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, default_value_t = graphot::matcher::DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = graphot::matcher::DEFAULT_EMBED)]
    embed: usize,
    #[arg(long, default_value_t = 100)]
    sinkhorn_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[command(flatten)]
    feat: FeatArgs,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3,0.5,1")]
    levels: Vec<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_dataset(path: &Path) -> Result<Vec<SparseGraph>> {
    Ok(read_jsonl(&read(path)?)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn run_gen(cli: &Cli, a: &GenArgs) -> Result<String> {
    let cfg = GenConfig {
        n_min: a.n_min,
        n_max: a.n_max,
        seed: cli.seed,
        flavor: a.flavor,
        edge_density: a.edge_density,
        n_f: a.n_f,
        dominant_freq: a.dominant_freq,
    };
    let graphs = generate(&cfg, a.count)?;
    info!("generated {} graphs", graphs.len());
    Ok(write_jsonl(&graphs))
}

fn run_loss(a: &LossArgs) -> Result<String> {
    let (g, g_hat) = dense_pair(
        GraphFile::parse(&read(&a.a)?)?,
        GraphFile::parse(&read(&a.b)?)?,
        a.capacity,
    )?;
    let ground = match a.ground {
        GroundArg::L2 => GroundLoss::SquaredL2,
        GroundArg::Kl => GroundLoss::Kl,
        GroundArg::Ce => GroundLoss::CrossEntropyLogits,
        GroundArg::L1 => GroundLoss::AbsoluteL1,
    };
    let role = match a.role {
        RoleArg::Discrete => Role::Discrete,
        RoleArg::Continuous => Role::Continuous,
    };
    let mut weights = match a.weights {
        WeightsArg::Size => LossWeights::for_size(g.size()),
        WeightsArg::Unit => LossWeights::unit(),
    };
    let overrides = [
        (a.alpha_h, &mut weights.alpha_h),
        (a.alpha_f_d, &mut weights.alpha_f_d),
        (a.alpha_f_c, &mut weights.alpha_f_c),
        (a.alpha_c_d, &mut weights.alpha_c_d),
        (a.alpha_c_c, &mut weights.alpha_c_c),
    ];
    for (value, slot) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let plan = match a.plan {
        PlanArg::Exhaustive => PlanSource::Exhaustive,
        PlanArg::Fw => PlanSource::FrankWolfe(a.fw.config()),
        PlanArg::File => {
            let path = a
                .plan_file
                .as_ref()
                .ok_or_else(|| graphot::Error::InvalidArgument("--plan file needs --plan-file".into()))?;
            PlanSource::Given(parse_plan(&read(path)?)?)
        }
    };
    let req = LossRequest {
        plan,
        kind: a.loss,
        ground: GroundLosses::uniform(ground, role, g.node_dim(), g.edge_dim()),
        weights,
        lambda: a.lambda,
        gradients: a.gradients,
    };
    json_line(&cmd_loss(&g, &g_hat, &req)?)
}

fn load_model(path: &Path) -> Result<AffinityModel> {
    Ok(AffinityModel::from_json(&read(path)?)?)
}

fn run_match(cli: &Cli, a: &MatchArgs) -> Result<String> {
    let g1 = SparseGraph::from_json(&read(&a.a)?)?;
    let g2 = SparseGraph::from_json(&read(&a.b)?)?;
    let result = match &a.model {
        Some(path) => {
            let n = g1.num_nodes().max(g2.num_nodes());
            match_graphs(&load_model(path)?, &g1, &g2, n, &a.feat.config(cli.seed))?.1
        }
        None => upper_bound(&g1, &g2, &feature_matching(&g1, &g2, a.feat.k)?)?,
    };
    json_line(&result)
}

fn run_editdist(a: &EditArgs) -> Result<String> {
    let g1 = SparseGraph::from_json(&read(&a.a)?)?;
    let g2 = SparseGraph::from_json(&read(&a.b)?)?;
    let result: EditResult = match &a.perm {
        Some(path) => {
            let p: Vec<usize> = serde_json::from_str(&read(path)?)?;
            upper_bound(&g1, &g2, &Permutation::new(p)?)?
        }
        None => edit_exact(&g1, &g2)?,
    };
    json_line(&result)
}

fn run_bench(cli: &Cli, a: &BenchArgs) -> Result<String> {
    let graphs = read_dataset(&a.data)?;
    let solvers = a
        .solvers
        .iter()
        .map(|s| s.parse::<Solver>())
        .collect::<graphot::Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        solvers,
        pairs: a.pairs,
        seed: cli.seed,
        featurizer: a.feat.config(cli.seed),
        model: a.model.as_deref().map(load_model).transpose()?,
        fw: a.fw.config(),
    };
    let report = cmd_bench(&graphs, &cfg)?;
    Ok(match cli.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    })
}

fn run_train(cli: &Cli, a: &TrainArgs) -> Result<String> {
    let graphs = read_dataset(&a.data)?;
    let capacity = a
        .capacity
        .unwrap_or_else(|| graphs.iter().map(SparseGraph::num_nodes).max().unwrap_or(0));
    let data = featurize_dataset(&graphs, capacity, &a.feat.config(cli.seed))?;
    let d_n = data
        .first()
        .map(|p| p.input.node_dim())
        .ok_or_else(|| graphot::Error::InvalidArgument("training set is empty".into()))?;
    let model = AffinityModel::new(d_n, a.hidden, a.embed, cli.seed);
    let cfg = TrainConfig {
        lr: a.lr,
        steps: a.steps,
        batch: a.batch,
        seed: cli.seed,
        sinkhorn: SinkhornConfig {
            n_iters: a.sinkhorn_iters,
            epsilon: a.epsilon,
        },
    };
    let (trained, trace) = train_matcher(&model, &data, &cfg)?;
    info!(
        "trained {} steps: loss {:.6} -> {:.6}",
        trace.len(),
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(trained.to_json() + "\n")
}

fn run_denoise(cli: &Cli, a: &DenoiseArgs) -> Result<String> {
    let graphs = read_dataset(&a.data)?;
    let rows = denoise_eval(&graphs, &a.levels, cli.seed)?;
    Ok(match cli.format {
        Format::Csv => denoise_csv(&rows),
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                p: f64,
                valid_fraction: f64,
            }
            let rows: Vec<Row> = rows
                .into_iter()
                .map(|(p, valid_fraction)| Row { p, valid_fraction })
                .collect();
            json_line(&rows)?
        }
    })
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let text = match &cli.command {
        Command::Gen(a) => run_gen(cli, a)?,
        Command::Loss(a) => run_loss(a)?,
        Command::Match(a) => run_match(cli, a)?,
        Command::Editdist(a) => run_editdist(a)?,
        Command::Bench(a) => run_bench(cli, a)?,
        Command::TrainMatcher(a) => run_train(cli, a)?,
        Command::DenoiseEval(a) => run_denoise(cli, a)?,
    };
    emit(cli.out.as_deref(), &text)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use graphot::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::InvalidArgument(_) | E::Unsupported(_)) => 2,
        Some(E::Divergence { .. }) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPHOT_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
