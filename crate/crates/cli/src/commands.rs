//! Subcommands.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use cdnod::citest::{FisherZOracle, KciOracle, NullMethod, TestConfig};
use cdnod::data::Dataset;
use cdnod::graph::AugmentedSkeleton;
use cdnod::knv::{knv, KnvConfig, SecondKernel};
use cdnod::orient::{orient, Boundary, OrientConfig};
use cdnod::simgen::{self, ChangeKind, GroundTruth, SimParams};
use cdnod::skeleton::{recover_skeleton, SearchStrategy, SkeletonConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{self, CMode, GraphJson, TruthJson};

#[derive(Debug, Parser)]
#[command(name = "cdnod", version, about = "Causal discovery from nonstationary or multi-domain data")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Detect changing modules and recover the skeleton over V ∪ {C}.
    Discover(DiscoverArgs),
    /// Orient a skeleton produced by `discover`.
    Orient(OrientArgs),
    /// Nonstationarity encapsulators of one causal module.
    Knv(KnvArgs),
    /// FP/FN rates of the enhanced search and two baselines over a grid.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Generator {
    ToySem,
    TwoEnv,
    ConfoundedChain,
    SingleChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ChangeArg {
    Stationary,
    Coefficient,
    NoiseMean,
    NoiseScale,
}

impl From<ChangeArg> for ChangeKind {
    fn from(c: ChangeArg) -> Self {
        match c {
            ChangeArg::Stationary => ChangeKind::Stationary,
            ChangeArg::Coefficient => ChangeKind::Coefficient,
            ChangeArg::NoiseMean => ChangeKind::NoiseMean,
            ChangeArg::NoiseScale => ChangeKind::NoiseScale,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub generator: Generator,
    /// Periodicity of the changing parameters (toy_sem, single_change).
    #[arg(long, default_value_t = 10.0)]
    pub w: f64,
    /// Sample size; per domain for two_env.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Changing parameter for single_change.
    #[arg(long, value_enum, default_value = "coefficient")]
    pub change: ChangeArg,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// File name stem; defaults to the generator name.
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchArg {
    Auto,
    Sgs,
    PcStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestArg {
    Kci,
    FisherZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NullArg {
    Gamma,
    Permutation,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Dataset CSV with a header row and an optional `c_index` column.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub c_mode: CMode,
}

#[derive(Debug, Args, Clone)]
pub struct TestArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "kci")]
    pub test: TestArg,
    #[arg(long, value_enum, default_value = "gamma")]
    pub null: NullArg,
    #[arg(long, default_value_t = 1000)]
    pub n_perm: usize,
    /// Seed of the permutation null.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian bandwidth of C in units of its encoding.
    #[arg(long, default_value_t = 0.05)]
    pub c_bandwidth: f64,
}

impl TestArgs {
    fn config(&self) -> TestConfig {
        let null_method = match self.null {
            NullArg::Gamma => NullMethod::GammaApprox,
            NullArg::Permutation => NullMethod::Permutation { n_perm: self.n_perm, seed: self.seed },
        };
        TestConfig { alpha: self.alpha, null_method, c_bandwidth: self.c_bandwidth, ..TestConfig::default() }
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "alpha": self.alpha,
            "test": self.test,
            "null": self.null,
            "n_perm": self.n_perm,
            "seed": self.seed,
            "c_bandwidth": self.c_bandwidth,
        })
    }
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub test: TestArgs,
    /// Largest number of observed variables in a conditioning set.
    #[arg(long, default_value_t = 3)]
    pub max_cond: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub search: SearchArg,
    /// Plain skeleton search without C.
    #[arg(long)]
    pub no_c: bool,
    /// Graph JSON path; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrientArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Skeleton JSON written by `discover`.
    #[arg(long, short)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub window_len: usize,
    /// Defaults to the window length.
    #[arg(long)]
    pub window_stride: Option<usize>,
    #[arg(long, value_enum, default_value = "truncate")]
    pub boundary: BoundaryArg,
    #[arg(long, default_value_t = 3)]
    pub min_windows: usize,
    #[arg(long, default_value_t = 0.02)]
    pub tie_tol: f64,
    #[arg(long, default_value_t = 5)]
    pub max_cluster: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Truncate,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Debug, Args)]
pub struct KnvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short)]
    pub target: String,
    /// Comma-separated parent labels.
    #[arg(long, value_delimiter = ',', conflicts_with = "from_graph")]
    pub parents: Vec<String>,
    /// Read the target's parents from an oriented graph JSON.
    #[arg(long)]
    pub from_graph: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub window_len: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// Width σ₂² of the Gaussian k²; median heuristic when absent.
    #[arg(long)]
    pub sigma2_sq: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Encapsulator CSV; the eigenvalue sidecar goes next to it.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum, default_value = "toy_sem")]
    pub generator: Generator,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub w: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub n: Vec<usize>,
    /// Replications per cell.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub max_cond: usize,
    /// Skip orientation of the enhanced skeletons.
    #[arg(long)]
    pub no_orient: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Metrics CSV; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Discover(a) => discover(&a),
        Command::Orient(a) => orient_cmd(&a),
        Command::Knv(a) => knv_cmd(&a),
        Command::Benchmark(a) => benchmark(&a),
    }
}

fn generate(generator: Generator, w: f64, n: usize, seed: u64, change: ChangeKind) -> CliResult<(Dataset, GroundTruth)> {
    let params = SimParams { w, n, seed };
    let out = match generator {
        Generator::ToySem => simgen::gen_toy_sem(&params),
        Generator::TwoEnv => simgen::gen_two_env_with(&simgen::TwoEnvParams { n_per_domain: n, ..Default::default() }, seed),
        Generator::ConfoundedChain => {
            simgen::gen_confounded_chain_with(&simgen::ChainParams { n, ..Default::default() }, seed)
        }
        Generator::SingleChange => simgen::gen_single_change(change, &params),
    };
    Ok(out?)
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let change = ChangeKind::from(a.change);
    let (d, truth) = generate(a.generator, a.w, a.n, a.seed, change)?;
    let name = serde_json::to_value(a.generator).unwrap().as_str().unwrap().to_string();
    let stem = a.prefix.clone().unwrap_or_else(|| name.clone());
    let data_path = a.out_dir.join(format!("{stem}.csv"));
    let truth_path = a.out_dir.join(format!("{stem}_truth.json"));
    let meta = io::metadata(
        "simulate",
        json!({
            "generator": name,
            "w": a.w,
            "n": a.n,
            "seed": a.seed,
            "change": (a.generator == Generator::SingleChange).then(|| format!("{change:?}")),
            "prng": simgen::PRNG_NAME,
        }),
    );
    io::write_text(&data_path, &io::dataset_to_csv(&d))?;
    io::write_text(&truth_path, &io::to_json(&TruthJson::from_truth(&truth, Some(meta))))?;
    println!("{}", data_path.display());
    println!("{}", truth_path.display());
    Ok(())
}

fn skeleton_config(alpha: f64, max_cond: usize, search: SearchArg, no_c: bool) -> SkeletonConfig {
    let search = match search {
        SearchArg::Auto => SearchStrategy::Auto,
        SearchArg::Sgs => SearchStrategy::Sgs,
        SearchArg::PcStable => SearchStrategy::PcStable,
    };
    SkeletonConfig { alpha, max_cond, search, use_c: !no_c }
}

fn discover(a: &DiscoverArgs) -> CliResult<()> {
    let d = io::read_dataset(&a.input.input, a.input.c_mode)?;
    let cfg = skeleton_config(a.test.alpha, a.max_cond, a.search, a.no_c);
    let sk = match a.test.test {
        TestArg::Kci => recover_skeleton(&KciOracle::new(&d, a.test.config())?, d.names(), &cfg)?,
        TestArg::FisherZ => recover_skeleton(&FisherZOracle::new(&d)?, d.names(), &cfg)?,
    };
    let meta = io::metadata(
        "discover",
        json!({
            "input": a.input.input,
            "c_mode": a.input.c_mode,
            "ci_test": a.test.summary(),
            "max_cond": a.max_cond,
            "search": a.search,
            "use_c": !a.no_c,
        }),
    );
    let g = GraphJson::from_skeleton(&sk, Some(meta));
    if let Some(p) = &a.dot {
        io::write_text(p, &io::graph_to_dot(&g))?;
    }
    emit(a.output.as_deref(), &io::to_json(&g))
}

fn read_graph(path: &Path) -> CliResult<GraphJson> {
    serde_json::from_str(&io::read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn check_names(sk: &AugmentedSkeleton, d: &Dataset) -> CliResult<()> {
    if sk.var_names() != d.names() {
        return Err(CliError::Usage("graph vertices do not match the dataset columns".into()));
    }
    Ok(())
}

fn orient_cmd(a: &OrientArgs) -> CliResult<()> {
    let d = io::read_dataset(&a.input.input, a.input.c_mode)?;
    let sk = read_graph(&a.graph)?.to_skeleton()?;
    check_names(&sk, &d)?;
    let cfg = OrientConfig {
        window_len: a.window_len,
        window_stride: a.window_stride,
        boundary: match a.boundary {
            BoundaryArg::Truncate => Boundary::Truncate,
            BoundaryArg::Drop => Boundary::Drop,
        },
        min_windows: a.min_windows,
        tie_tol: a.tie_tol,
        max_cluster: a.max_cluster,
        ..OrientConfig::default()
    };
    let g = orient(&sk, &d, &cfg)?;
    let meta = io::metadata(
        "orient",
        json!({
            "input": a.input.input,
            "graph": a.graph,
            "window_len": a.window_len,
            "window_stride": cfg.stride(),
            "boundary": a.boundary,
            "min_windows": a.min_windows,
            "tie_tol": a.tie_tol,
            "max_cluster": a.max_cluster,
        }),
    );
    let out = GraphJson::from_graph(&g, &sk, Some(meta));
    if let Some(p) = &a.dot {
        io::write_text(p, &io::graph_to_dot(&out))?;
    }
    emit(a.output.as_deref(), &io::to_json(&out))
}

/// Dominance ratio below which a module is flagged as lacking one
/// dominant encapsulator.
pub const DOMINANCE_FLAG: f64 = 5.0;

#[derive(Debug, Serialize)]
struct Sidecar {
    target: String,
    parents: Vec<String>,
    eigenvalues: Vec<f64>,
    /// `null` when the second eigenvalue vanishes.
    dominance: Option<f64>,
    dominant: bool,
    kernel: &'static str,
    sigma2_sq: Option<f64>,
    beta: f64,
    sigma1_target: f64,
    sigma1_parents: Option<f64>,
    window_len: usize,
    stride: usize,
    n_windows: usize,
}

fn knv_cmd(a: &KnvArgs) -> CliResult<()> {
    let d = io::read_dataset(&a.input.input, a.input.c_mode)?;
    d.var_index(&a.target)?;
    let parents: Vec<String> = match &a.from_graph {
        Some(path) => {
            let g = read_graph(path)?.to_graph()?;
            let t = g.vertex(&a.target).map_err(|_| CliError::Usage(format!("`{}` is not in the graph", a.target)))?;
            g.parents(t).into_iter().filter(|&p| p != g.c_vertex()).map(|p| g.label(p).to_string()).collect()
        }
        None => a.parents.iter().filter(|p| !p.is_empty()).cloned().collect(),
    };
    let refs: Vec<&str> = parents.iter().map(|s| s.as_str()).collect();
    let cfg = KnvConfig {
        window_len: a.window_len,
        stride: a.stride,
        beta: a.beta,
        kernel: match a.kernel {
            KernelArg::Linear => SecondKernel::Linear,
            KernelArg::Gaussian => SecondKernel::Gaussian { sigma2_sq: a.sigma2_sq },
        },
        n_components: a.components,
    };
    let out = knv(&d, &a.target, &refs, &cfg)?;
    let dominance = out.series.dominance();
    let dominant = dominance >= DOMINANCE_FLAG;
    if !dominant {
        log::warn!("dominance ratio {dominance:.2} < {DOMINANCE_FLAG}: no single dominant encapsulator");
    }
    let (kernel, sigma2_sq) = match out.gram.kind {
        cdnod::knv::GramKind::Linear => ("linear", None),
        cdnod::knv::GramKind::Gaussian { sigma2_sq } => ("gaussian", Some(sigma2_sq)),
    };
    let sidecar = Sidecar {
        target: a.target.clone(),
        parents,
        eigenvalues: out.series.eigenvalues.clone(),
        dominance: dominance.is_finite().then_some(dominance),
        dominant,
        kernel,
        sigma2_sq,
        beta: a.beta,
        sigma1_target: out.sigma1_target,
        sigma1_parents: out.sigma1_parents,
        window_len: a.window_len,
        stride: a.stride,
        n_windows: out.series.window_centers.len(),
    };
    io::write_text(&a.output, &io::encapsulators_to_csv(&out))?;
    io::write_text(&io::sidecar_path(&a.output), &io::to_json(&sidecar))?;
    println!("{}", a.output.display());
    Ok(())
}

/// Metrics of one replication.
#[derive(Debug, Clone, Default)]
struct RunMetrics {
    enhanced: (f64, f64),
    baseline: (f64, f64),
    fisher_z: (f64, f64),
    accuracy: Option<f64>,
    seconds: f64,
}

fn bench_one(a: &BenchmarkArgs, w: f64, n: usize, seed: u64) -> CliResult<RunMetrics> {
    let start = Instant::now();
    let (d, truth) = generate(a.generator, w, n, seed, ChangeKind::Coefficient)?;
    let cfg = skeleton_config(a.alpha, a.max_cond, SearchArg::Auto, false);
    let kci = KciOracle::new(&d, TestConfig { alpha: a.alpha, ..TestConfig::default() })?;
    let enhanced = recover_skeleton(&kci, d.names(), &cfg)?;
    let baseline = recover_skeleton(&kci, d.names(), &cfg.baseline())?;
    let fz = recover_skeleton(&FisherZOracle::new(&d)?, d.names(), &cfg.baseline())?;
    let rates = |sk: &AugmentedSkeleton| -> CliResult<(f64, f64)> {
        let s = simgen::score_skeleton(sk, &truth)?;
        Ok((s.fp_rate, s.fn_rate))
    };
    let accuracy = if a.no_orient {
        None
    } else {
        let g = orient(&enhanced, &d, &OrientConfig::default())?;
        simgen::score_orientation(&g, &truth)?.accuracy
    };
    Ok(RunMetrics {
        enhanced: rates(&enhanced)?,
        baseline: rates(&baseline)?,
        fisher_z: rates(&fz)?,
        accuracy,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

fn benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if a.w.is_empty() || a.n.is_empty() || a.jobs == 0 {
        return Err(CliError::Usage("empty grid or zero jobs".into()));
    }
    let mut tasks = Vec::new();
    for (ci, &w) in a.w.iter().enumerate() {
        for (ni, &n) in a.n.iter().enumerate() {
            for s in 0..a.seeds {
                tasks.push(((ci, ni), w, n, a.seed + s));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CliResult<RunMetrics>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(_, w, n, seed)) = tasks.get(i) else { break };
                log::info!("benchmark w={w} n={n} seed={seed}");
                let r = bench_one(a, w, n, seed);
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    let mut rows: Vec<((usize, usize), f64, usize, RunMetrics)> = Vec::new();
    for (i, r) in results {
        let (cell, w, n, _) = tasks[i];
        rows.push((cell, w, n, r?));
    }
    let mut text = String::from(
        "generator,w,n,seeds,enhanced_fp,enhanced_fn,baseline_fp,baseline_fn,fisher_z_fp,fisher_z_fn,orientation_accuracy,wall_clock_s\n",
    );
    let gen = serde_json::to_value(a.generator).unwrap().as_str().unwrap().to_string();
    let mut cells: Vec<(usize, usize)> = rows.iter().map(|r| r.0).collect();
    cells.dedup();
    for cell in cells {
        let runs: Vec<&(_, f64, usize, RunMetrics)> = rows.iter().filter(|r| r.0 == cell).collect();
        let m = |f: &dyn Fn(&RunMetrics) -> f64| mean(runs.iter().map(|r| f(&r.3))).unwrap_or(f64::NAN);
        let acc = mean(runs.iter().filter_map(|r| r.3.accuracy));
        text.push_str(&format!(
            "{gen},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{:.2}\n",
            runs[0].1,
            runs[0].2,
            runs.len(),
            m(&|r| r.enhanced.0),
            m(&|r| r.enhanced.1),
            m(&|r| r.baseline.0),
            m(&|r| r.baseline.1),
            m(&|r| r.fisher_z.0),
            m(&|r| r.fisher_z.1),
            acc.map_or(String::new(), |v| format!("{v:.4}")),
            runs.iter().map(|r| r.3.seconds).sum::<f64>(),
        ));
    }
    emit(a.output.as_deref(), &text)
}
