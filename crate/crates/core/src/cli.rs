//! The `msbtree` command line.
//!
//! Subcommands: `gen`, `solve`, `weights`, `enumerate`, `oracle`. Every
//! command reads measures in the JSON format of [`crate::measures::MeasureFile`]
//! and writes its outputs under `--out-dir`. Exit codes: 0 success, 1 numerical
//! failure, 2 I/O or validation error; failures print a JSON error object on
//! stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::{
    image_to_measure, read_image, sample_gmm, DiscreteMeasure, GmmComponent, MeasureCollection,
};
use crate::mst::{
    build_weight_matrix, optimal_msb, rank_all_trees, CostSpec, MstAlgorithm,
    NonConvergencePolicy, SolverConfig,
};
use crate::oracle::{
    checked_len, cost_tensor, mm_sinkhorn, msb_objective, EdgeMap, DEFAULT_TENSOR_CAP,
};
use crate::sinkhorn::{CostKind, PairwiseCost, SinkhornConfig};
use crate::trees::{
    composed_objective, compose_tree_coupling, prufer_decode, tree_cost_decomposed, PruferCode,
    SpanningTree, DEFAULT_ENUMERATION_CAP,
};

/// Largest tensor on which `enumerate --direct auto` runs dense multimarginal
/// Sinkhorn per tree; larger instances fall back to the composed coupling.
pub const AUTO_SINKHORN_LIMIT: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "msbtree", version, about = "Optimal multimarginal Schrödinger bridges via minimum spanning trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample measures from Gaussian mixtures described in a JSON spec.
    Gen(GenArgs),
    /// Find the optimal tree and write weights, tree and cost report.
    Solve(SolveArgs),
    /// Write only the edge-weight matrix.
    Weights(SolveArgs),
    /// Rank every spanning tree by cost.
    Enumerate(EnumerateArgs),
    /// Compare the tree-composed coupling against dense multimarginal Sinkhorn.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file: {"interval": [a, b], "mixtures": [[{"mean", "std", "weight"}, ...], ...]}
    pub spec: PathBuf,
    #[arg(long, short = 'n', default_value_t = 25)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Measure files (at least two).
    #[arg(required = true, num_args = 1..)]
    pub measures: Vec<PathBuf>,
    /// Entropic regularization.
    #[arg(long)]
    pub eta: f64,
    /// sqeuclidean, euclidean, or matrix:<file>
    #[arg(long, default_value = "sqeuclidean")]
    pub cost: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Maximum number of entries of any dense tensor.
    #[arg(long, default_value_t = DEFAULT_TENSOR_CAP)]
    pub cap: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Recorded in reports; the solver itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Keep going when a Sinkhorn solve misses `--tol`.
    #[arg(long)]
    pub allow_nonconvergence: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = MstChoice::Prim)]
    pub mst: MstChoice,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MstChoice {
    Prim,
    Boruvka,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectMode {
    /// Dense Sinkhorn when small enough, else the composed coupling.
    Auto,
    /// Dense multimarginal Sinkhorn on each tree.
    Sinkhorn,
    /// Global objective of the tree-composed coupling.
    Composed,
    None,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rows to report; 0 reports every tree.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = DirectMode::Auto)]
    pub direct: DirectMode,
    /// Largest s to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub max_s: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prüfer code of the tree, 1-based and space-separated (empty for s = 2).
    #[arg(long, default_value = "")]
    pub tree: String,
}

/// Validated settings shared by all solver subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub eta: f64,
    pub cost: CostChoice,
    pub sinkhorn: SinkhornConfig,
    pub cap: usize,
    pub threads: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub on_nonconvergence: NonConvergencePolicy,
}

#[derive(Debug, Clone)]
pub enum CostChoice {
    Kind(CostKind),
    Matrix(PathBuf),
}

impl CostChoice {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "sqeuclidean" => Ok(Self::Kind(CostKind::SqEuclidean)),
            "euclidean" => Ok(Self::Kind(CostKind::Euclidean)),
            _ => match text.strip_prefix("matrix:") {
                Some(p) if !p.is_empty() => Ok(Self::Matrix(PathBuf::from(p))),
                _ => Err(Error::validation(format!(
                    "unknown cost {text:?}; expected sqeuclidean, euclidean or matrix:<file>"
                ))),
            },
        }
    }

    fn label(&self) -> String {
        match self {
            Self::Kind(CostKind::SqEuclidean) => "sqeuclidean".into(),
            Self::Kind(CostKind::Euclidean) => "euclidean".into(),
            Self::Kind(CostKind::Custom) => "custom".into(),
            Self::Matrix(p) => format!("matrix:{}", p.display()),
        }
    }
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        if !(args.eta > 0.0 && args.eta.is_finite()) {
            return Err(Error::validation(format!("--eta must be positive, got {}", args.eta)));
        }
        if !(args.tol > 0.0) {
            return Err(Error::validation(format!("--tol must be positive, got {}", args.tol)));
        }
        if args.cap < 1 {
            return Err(Error::validation("--cap must be at least 1"));
        }
        let sinkhorn = SinkhornConfig {
            tol: args.tol,
            max_iter: args.max_iter,
            record_history: false,
        };
        sinkhorn.validate()?;
        Ok(Self {
            eta: args.eta,
            cost: CostChoice::parse(&args.cost)?,
            sinkhorn,
            cap: args.cap,
            threads: args.threads,
            seed: args.seed,
            out_dir: args.out_dir.clone(),
            on_nonconvergence: if args.allow_nonconvergence {
                NonConvergencePolicy::Warn
            } else {
                NonConvergencePolicy::Fail
            },
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            eta: self.eta,
            sinkhorn: self.sinkhorn,
            on_nonconvergence: self.on_nonconvergence,
            threads: self.threads,
            tensor_cap: self.cap,
            compose: false,
            algorithm: MstAlgorithm::Prim,
        }
    }

    pub fn cost_spec(&self, measures: &MeasureCollection) -> Result<CostSpec> {
        match &self.cost {
            CostChoice::Kind(k) => Ok(CostSpec::Points(*k)),
            CostChoice::Matrix(path) => read_cost_matrices(path, measures.len()),
        }
    }
}

/// Formats with 15 significant digits.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 15;
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", (DIGITS - 1) as usize, x)
    }
}

/// `x` rounded to 15 significant digits, for JSON output.
pub fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

#[derive(Debug, Deserialize)]
struct CostMatrixFile {
    costs: Vec<CostMatrixEntry>,
}

#[derive(Debug, Deserialize)]
struct CostMatrixEntry {
    /// 1-based vertex labels.
    pair: [usize; 2],
    matrix: Vec<Vec<f64>>,
}

/// Reads `{"costs": [{"pair": [a, b], "matrix": [[...]]}, ...]}` with 1-based
/// labels; rows of each matrix index the first vertex of its pair.
pub fn read_cost_matrices(path: &Path, s: usize) -> Result<CostSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CostMatrixFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut map = EdgeMap::new();
    for entry in file.costs {
        let [a, b] = entry.pair;
        if a == 0 || b == 0 || a > s || b > s || a == b {
            return Err(Error::parse(path, format!("invalid pair [{a}, {b}]")));
        }
        let m = Matrix::from_rows(&entry.matrix).map_err(|e| Error::parse(path, e.to_string()))?;
        let (m, key) = if a < b { (m, (a - 1, b - 1)) } else { (m.transpose(), (b - 1, a - 1)) };
        let cost = PairwiseCost::custom(m).map_err(|e| Error::parse(path, e.to_string()))?;
        map.insert(key, cost);
    }
    Ok(CostSpec::Matrices(map))
}

/// Reads measure JSON files; `.pgm` and `.csv` files are read as images.
pub fn read_measures(paths: &[PathBuf]) -> Result<MeasureCollection> {
    let measures = paths
        .iter()
        .map(|p| match p.extension().and_then(|e| e.to_str()) {
            Some("pgm" | "csv") => {
                image_to_measure(&read_image(p)?).map_err(|e| Error::parse(p, e.to_string()))
            }
            _ => DiscreteMeasure::read(p),
        })
        .collect::<Result<Vec<_>>>()?;
    MeasureCollection::new(measures)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Deserialize)]
pub struct GmmSpec {
    pub interval: [f64; 2],
    pub mixtures: Vec<Vec<GmmComponent>>,
}

/// Writes `mu1.json ... mu<s>.json`; returns their paths.
pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec: GmmSpec =
        serde_json::from_str(&text).map_err(|e| Error::parse(&args.spec, e.to_string()))?;
    if spec.mixtures.is_empty() {
        return Err(Error::parse(&args.spec, "no mixtures"));
    }
    ensure_dir(&args.out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut paths = Vec::with_capacity(spec.mixtures.len());
    for (k, mix) in spec.mixtures.iter().enumerate() {
        let m = sample_gmm(mix, args.n, (spec.interval[0], spec.interval[1]), &mut rng)
            .map_err(|e| Error::parse(&args.spec, format!("mixture {}: {e}", k + 1)))?;
        let path = args.out_dir.join(format!("mu{}.json", k + 1));
        m.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeJson {
    pub prufer: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub edge: [usize; 2],
    pub g: f64,
    pub sb_value: f64,
    pub transport_cost: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub in_tree: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub s: usize,
    pub eta: f64,
    pub cost: String,
    pub tol: f64,
    pub seed: u64,
    pub prufer: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    /// `sum_T g - sum H`
    pub total_cost: f64,
    /// `sum_T SB + sum (deg - 1) H`
    pub decomposed_cost: f64,
    pub entropies: Vec<f64>,
    pub edge_weights: Vec<EdgeReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub weights_seconds: f64,
    pub mst_seconds: f64,
    pub total_seconds: f64,
    pub per_edge_iterations: Vec<([usize; 2], usize)>,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<SolveReport> {
    let start = Instant::now();
    let cfg = RunConfig::from_args(&args.common)?;
    let measures = read_measures(&args.common.measures)?;
    let costs = cfg.cost_spec(&measures)?;
    let mut solver = cfg.solver();
    solver.algorithm = match args.mst {
        MstChoice::Prim => MstAlgorithm::Prim,
        MstChoice::Boruvka => MstAlgorithm::Boruvka,
    };
    let result = optimal_msb(&measures, &costs, &solver)?;

    let w = &result.weights;
    let s = measures.len();
    let mut edge_weights = Vec::new();
    for a in 0..s {
        for b in a + 1..s {
            let att = w.attachment(a, b).expect("all pairs solved");
            edge_weights.push(EdgeReport {
                edge: [a + 1, b + 1],
                g: round_sig(w.get(a, b)),
                sb_value: round_sig(att.sb_value),
                transport_cost: round_sig(att.transport_cost),
                iterations: att.iterations(),
                residual: att.residual(),
                converged: att.converged(),
                in_tree: result.tree.contains(a, b),
            });
        }
    }
    let prufer = result.prufer();
    let report = SolveReport {
        s,
        eta: cfg.eta,
        cost: cfg.cost.label(),
        tol: cfg.sinkhorn.tol,
        seed: cfg.seed,
        prufer: prufer.one_based(),
        edges: result.tree.edges_one_based(),
        total_cost: round_sig(result.total_cost),
        decomposed_cost: round_sig(result.decomposed_cost),
        entropies: result.entropies().iter().map(|&h| round_sig(h)).collect(),
        edge_weights,
        warnings: result.notes.clone(),
    };

    let out = &cfg.out_dir;
    ensure_dir(out)?;
    write(&out.join("weights.csv"), w.to_csv(fmt_sig))?;
    write(&out.join("tree.dot"), result.tree.to_dot())?;
    write(&out.join("prufer.txt"), format!("{prufer}\n"))?;
    write_json(
        &out.join("tree.json"),
        &TreeJson {
            prufer: prufer.one_based(),
            edges: result.tree.edges_one_based(),
            cost: round_sig(result.total_cost),
        },
    )?;
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("timings.json"),
        &TimingReport {
            weights_seconds: result.timings.weights_seconds,
            mst_seconds: result.timings.mst_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
            per_edge_iterations: report
                .edge_weights
                .iter()
                .map(|e| (e.edge, e.iterations))
                .collect(),
        },
    )?;
    Ok(report)
}

pub fn cmd_weights(args: &SolveArgs) -> Result<Matrix> {
    let cfg = RunConfig::from_args(&args.common)?;
    let measures = read_measures(&args.common.measures)?;
    let costs = cfg.cost_spec(&measures)?;
    let w = build_weight_matrix(&measures, &costs, &cfg.solver())?;
    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("weights.csv"), w.to_csv(fmt_sig))?;
    Ok(w.matrix().clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnumerateRow {
    pub rank: usize,
    pub prufer: Vec<usize>,
    /// `sum_T g - sum H`
    pub additive_cost: f64,
    /// `<C + eta log M, M> / eta` of a globally computed coupling.
    pub direct_cost: Option<f64>,
    pub direct_method: Option<DirectMode>,
}

impl EnumerateRow {
    pub fn gap(&self) -> Option<f64> {
        self.direct_cost.map(|d| (d - self.additive_cost).abs())
    }
}

fn direct_cost(
    mode: DirectMode,
    tree: &SpanningTree,
    measures: &MeasureCollection,
    all_costs: &EdgeMap<PairwiseCost>,
    plans: &EdgeMap<crate::sinkhorn::BimarginalCoupling>,
    cfg: &RunConfig,
) -> Result<Option<f64>> {
    match mode {
        DirectMode::None | DirectMode::Auto => Ok(None),
        DirectMode::Sinkhorn => {
            let graph = tree.to_graph();
            let r = mm_sinkhorn(measures, &graph, all_costs, cfg.eta, &cfg.sinkhorn, cfg.cap)?;
            if !r.report.converged && cfg.on_nonconvergence == NonConvergencePolicy::Fail {
                return Err(Error::NonConvergence {
                    edge: None,
                    iterations: r.report.iterations,
                    residual: r.report.residual,
                });
            }
            let c = cost_tensor(&graph, all_costs, &measures.shape(), cfg.cap)?;
            Ok(Some(msb_objective(r.coupling.tensor(), &c, cfg.eta)? / cfg.eta))
        }
        DirectMode::Composed => {
            Ok(Some(composed_objective(tree, plans, measures, all_costs, cfg.eta)? / cfg.eta))
        }
    }
}

fn resolve_direct(mode: DirectMode, shape: &[usize], cap: usize) -> DirectMode {
    let entries = checked_len(shape, cap).ok();
    match (mode, entries) {
        (DirectMode::Auto, Some(n)) if n <= AUTO_SINKHORN_LIMIT => DirectMode::Sinkhorn,
        (DirectMode::Auto, Some(_)) => DirectMode::Composed,
        (DirectMode::Auto, None) => DirectMode::None,
        (m, _) => m,
    }
}

pub fn cmd_enumerate(args: &EnumerateArgs) -> Result<Vec<EnumerateRow>> {
    let cfg = RunConfig::from_args(&args.common)?;
    let measures = read_measures(&args.common.measures)?;
    if measures.len() > args.max_s {
        return Err(Error::validation(format!(
            "refusing to enumerate {}^{} trees: s = {} exceeds the bound --max-s {}",
            measures.len(),
            measures.len() - 2,
            measures.len(),
            args.max_s
        )));
    }
    let costs = cfg.cost_spec(&measures)?;
    let all_costs = costs.all_pairs(&measures)?;
    let w = build_weight_matrix(&measures, &costs, &cfg.solver())?;
    let ranked = rank_all_trees(&w, args.max_s)?;
    let k = if args.top_k == 0 { ranked.len() } else { args.top_k.min(ranked.len()) };

    let mode = resolve_direct(args.direct, &measures.shape(), cfg.cap);
    if matches!(mode, DirectMode::Sinkhorn | DirectMode::Composed) {
        checked_len(&measures.shape(), cfg.cap)?;
    }
    let plans = w.plans();
    let direct: Vec<Result<Option<f64>>> = {
        let job = || {
            ranked[..k]
                .par_iter()
                .map(|r| direct_cost(mode, &r.tree, &measures, &all_costs, &plans, &cfg))
                .collect()
        };
        match cfg.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::validation(format!("thread pool: {e}")))?
                .install(job),
            None => job(),
        }
    };
    let method = (mode != DirectMode::None).then_some(mode);
    let rows = ranked[..k]
        .iter()
        .zip(direct)
        .enumerate()
        .map(|(i, (r, d))| {
            Ok(EnumerateRow {
                rank: i + 1,
                prufer: r.code.one_based(),
                additive_cost: r.additive_cost,
                direct_cost: d?,
                direct_method: method,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    ensure_dir(&cfg.out_dir)?;
    let mut csv = String::from("rank,prufer,additive_cost,direct_cost,direct_method\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.rank,
            join(&r.prufer),
            fmt_sig(r.additive_cost),
            r.direct_cost.map(fmt_sig).unwrap_or_default(),
            r.direct_method.map(|m| format!("{m:?}").to_lowercase()).unwrap_or_default(),
        ));
    }
    write(&cfg.out_dir.join("enumerate.csv"), csv)?;
    Ok(rows)
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub prufer: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    /// Sup-norm distance between the composed and the dense Sinkhorn coupling.
    pub tensor_gap: f64,
    /// `sum SB + sum (deg - 1) H`
    pub decomposed_cost: f64,
    /// `<C + eta log M, M> / eta` of the dense Sinkhorn coupling.
    pub direct_cost: f64,
    pub cost_gap: f64,
    pub oracle_iterations: usize,
    pub oracle_residual: f64,
    pub oracle_converged: bool,
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<OracleReport> {
    let cfg = RunConfig::from_args(&args.common)?;
    let measures = read_measures(&args.common.measures)?;
    let s = measures.len();
    checked_len(&measures.shape(), cfg.cap)?;
    let code = PruferCode::parse(&args.tree, s)?;
    let tree = prufer_decode(&code);
    let costs = cfg.cost_spec(&measures)?;
    let w = build_weight_matrix(&measures, &costs, &cfg.solver())?;
    let all_costs = costs.all_pairs(&measures)?;

    let composed = compose_tree_coupling(&tree, &w.plans(), &measures, cfg.cap)?;
    let graph = tree.to_graph();
    let dense = mm_sinkhorn(&measures, &graph, &all_costs, cfg.eta, &cfg.sinkhorn, cfg.cap)?;
    if !dense.report.converged && cfg.on_nonconvergence == NonConvergencePolicy::Fail {
        return Err(Error::NonConvergence {
            edge: None,
            iterations: dense.report.iterations,
            residual: dense.report.residual,
        });
    }
    let c = cost_tensor(&graph, &all_costs, &measures.shape(), cfg.cap)?;
    let direct = msb_objective(dense.coupling.tensor(), &c, cfg.eta)? / cfg.eta;
    let decomposed = tree_cost_decomposed(&tree, &w.sb_values(), w.entropies())?;
    let report = OracleReport {
        prufer: code.one_based(),
        edges: tree.edges_one_based(),
        tensor_gap: composed.tensor().sup_distance(dense.coupling.tensor())?,
        decomposed_cost: round_sig(decomposed),
        direct_cost: round_sig(direct),
        cost_gap: (decomposed - direct).abs(),
        oracle_iterations: dense.report.iterations,
        oracle_residual: dense.report.residual,
        oracle_converged: dense.report.converged,
    };
    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("oracle.json"), &report)?;
    Ok(report)
}

/// Machine-readable failure printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorObject {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        1
    } else {
        2
    }
}

pub fn error_object(e: &Error) -> ErrorObject {
    let kind = match e {
        Error::Validation(_) => "validation",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NonConvergence { .. } => "non_convergence",
        Error::CapExceeded { .. } => "cap_exceeded",
        Error::NonFinite(_) => "non_finite",
        Error::InfiniteDivergence(_) => "infinite_divergence",
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
    };
    ErrorObject {
        error: ErrorBody {
            kind,
            message: e.to_string(),
            exit_code: exit_code(e),
        },
    }
}

/// Runs one parsed command, printing a human summary on stdout.
pub fn execute(cli: &Cli) -> Result<()> {
    let out = summary(cli)?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    Ok(())
}

/// Runs one parsed command and returns its stdout summary.
pub fn summary(cli: &Cli) -> Result<String> {
    let mut out = String::new();
    match &cli.command {
        Command::Gen(a) => {
            for p in cmd_gen(a)? {
                let _ = writeln!(out, "{}", p.display());
            }
        }
        Command::Solve(a) => {
            let r = cmd_solve(a)?;
            let _ = writeln!(out, "prufer: {}", join(&r.prufer));
            let edges: Vec<String> = r.edges.iter().map(|[a, b]| format!("{a}-{b}")).collect();
            let _ = writeln!(out, "edges: {}", edges.join(" "));
            let _ = writeln!(out, "cost: {}", fmt_sig(r.total_cost));
            for w in &r.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        Command::Weights(a) => {
            cmd_weights(a)?;
            let path = a.common.out_dir.join("weights.csv");
            let _ = write!(out, "{}", fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        Command::Enumerate(a) => {
            let rows = cmd_enumerate(a)?;
            let _ = writeln!(out, "{:>5}  {:<16} {:>22} {:>22}", "rank", "prufer", "additive", "direct");
            for r in rows {
                let _ = writeln!(out, 
                    "{:>5}  {:<16} {:>22} {:>22}",
                    r.rank,
                    join(&r.prufer),
                    fmt_sig(r.additive_cost),
                    r.direct_cost.map(fmt_sig).unwrap_or_else(|| "-".into())
                );
            }
        }
        Command::Oracle(a) => {
            let r = cmd_oracle(a)?;
            let _ = writeln!(out, "tree: {}", join(&r.prufer));
            let _ = writeln!(out, "tensor sup-norm gap: {:.3e}", r.tensor_gap);
            let _ = writeln!(out, "decomposed cost: {}", fmt_sig(r.decomposed_cost));
            let _ = writeln!(out, "direct cost: {}", fmt_sig(r.direct_cost));
            let _ = writeln!(out, "cost gap: {:.3e}", r.cost_gap);
        }
    }
    Ok(out)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let obj = error_object(&e);
            eprintln!(
                "{}",
                serde_json::to_string(&obj).unwrap_or_else(|_| e.to_string())
            );
            obj.error.exit_code
        }
    }
}
