//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; settings come from an optional TOML file and flags override it.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::damex::SupportSet;
use crate::em::PosteriorMatrix;
use crate::graph::{self, ExportFormat, GraphDocument};
use crate::ingest::{self, StandardizedDataset, Threshold};
use crate::matrix::Matrix;
use crate::mixture::ThetaParams;
use crate::pipeline::{self, DamexConfig, PipelineConfig};
use crate::simulate::{self, SyntheticSpec, LAMBDA_SWEEP};
use crate::{eval, shuttle, Error};

#[derive(Debug, Parser)]
#[command(name = "extremix", version, about = "Clustering and mapping of multivariate extremes")]
pub struct Cli {
    /// TOML configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a labeled synthetic sample from a random mixture.
    Simulate(SimulateArgs),
    /// Recover the support and fit the mixture to a CSV.
    Fit(FitArgs),
    /// Hard and spectral clusterings from a fitted posterior.
    Cluster(ClusterArgs),
    /// Export the posterior-similarity graph with a spring layout.
    Graph(GraphArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Download and cache the shuttle data.
    FetchShuttle(FetchArgs),
    /// Run a benchmark preset end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k_faces: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub max_face_size: Option<usize>,
    /// Draw faces uniformly among all subsets of size >= 2.
    #[arg(long, conflicts_with = "max_face_size")]
    pub any_face_size: bool,
    #[arg(long)]
    pub rho_floor: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ThresholdArgs {
    /// Keep rows whose radius exceeds this quantile of all radii.
    #[arg(long, group = "threshold", alias = "extreme-quantile")]
    pub quantile: Option<f64>,
    /// Keep rows whose radius exceeds this value.
    #[arg(long, group = "threshold")]
    pub r0: Option<f64>,
    /// Keep this many rows with the largest radii.
    #[arg(long, group = "threshold")]
    pub top: Option<usize>,
}

impl ThresholdArgs {
    fn resolve(&self) -> Option<Threshold> {
        self.quantile
            .map(Threshold::Quantile)
            .or(self.r0.map(Threshold::Absolute))
            .or(self.top.map(Threshold::Top))
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV of observations, one column per feature.
    pub data: PathBuf,
    /// Columns are already on the unit-Pareto scale; skip the rank transform.
    #[arg(long)]
    pub standardized: bool,
    /// Split each feature into its parts above and below the mean.
    #[arg(long, conflicts_with = "standardized")]
    pub sign_double: bool,
    /// Name of a class-label column to drop before fitting.
    #[arg(long)]
    pub label_column: Option<String>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub mu_min: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub nu_init: Option<f64>,
    #[arg(long)]
    pub lambda_init: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Posterior matrix written by `fit`.
    #[arg(long)]
    pub gamma: PathBuf,
    #[arg(long)]
    pub n_clusters: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Graphml,
    Dot,
    Json,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Graphml => ExportFormat::GraphMl,
            FormatArg::Dot => ExportFormat::Dot,
            FormatArg::Json => ExportFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub gamma: PathBuf,
    /// Fitted model, to annotate nodes with their face.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n_clusters: Option<usize>,
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    #[arg(long)]
    pub layout_iterations: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "graphml")]
    pub format: Vec<FormatArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON with a `labels` array of predictions.
    #[arg(long)]
    pub pred: PathBuf,
    /// JSON with a `labels` array of true labels or classes.
    #[arg(long)]
    pub truth: PathBuf,
    /// Fitted model; with `--model-true`, aligns components by face and
    /// adds parameter errors.
    #[arg(long, requires = "model_true")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub model_true: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Parameter errors over the noise sweep.
    Parameters,
    /// Labeling errors over the noise sweep.
    Labeling,
    /// Shuttle purity for n0 in {100, ..., 500}.
    Shuttle,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub preset: Preset,
    /// Replicates per noise level.
    #[arg(long, default_value_t = 5)]
    pub replicates: u64,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub simulate: SyntheticSpec,
    pub pipeline: PipelineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

struct Context {
    seed: u64,
    out_dir: PathBuf,
    file: FileConfig,
    /// Whether the file set a `[pipeline.damex]` table.
    damex_from_file: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.out_dir).map_err(|source| Error::Io {
            path: self.out_dir.clone(),
            source,
        })?;
        let path = self.path(name);
        fs::write(&path, contents).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn matrix_csv(m: &Matrix, prefix: &str) -> String {
    let mut s = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for row in m.rows_iter() {
        s.push_str(&row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Error> {
    let (file, damex_from_file) = match &cli.config {
        Some(path) => {
            let raw: toml::Table = toml::from_str(&read_text(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let has_damex = raw
                .get("pipeline")
                .and_then(|p| p.get("damex"))
                .is_some();
            (FileConfig::load(path)?, has_damex)
        }
        None => (FileConfig::default(), false),
    };
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        file,
        damex_from_file,
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Cluster(a) => cmd_cluster(&ctx, a),
        Command::Graph(a) => cmd_graph(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::FetchShuttle(a) => {
            let dir = a.cache_dir.unwrap_or_else(shuttle::default_cache_dir);
            let path = shuttle::fetch(&dir)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Reproduce(a) => cmd_reproduce(&ctx, a),
    }
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs) -> Result<(), Error> {
    let mut spec = ctx.file.simulate.clone();
    spec.seed = ctx.seed;
    if let Some(x) = a.d {
        spec.d = x;
    }
    if let Some(x) = a.k_faces {
        spec.k_faces = x;
    }
    if let Some(x) = a.nu {
        spec.nu = x.into();
    }
    if let Some(x) = a.lambda {
        spec.lambda = x.into();
    }
    if let Some(x) = a.n0 {
        spec.n0 = x;
    }
    if let Some(x) = a.r0 {
        spec.r0 = x;
    }
    if a.any_face_size {
        spec.max_face_size = None;
    } else if let Some(x) = a.max_face_size {
        spec.max_face_size = Some(x);
    }
    if let Some(x) = a.rho_floor {
        spec.rho_floor = x;
    }
    let sample = simulate::sample_dataset(&spec)?;
    ctx.write("data.csv", matrix_csv(&sample.v, "x"))?;
    ctx.write("labels.json", json_string(&json!({ "labels": sample.labels })))?;
    ctx.write("theta_true.json", sample.theta_true.to_json() + "\n")?;
    ctx.write("spec.json", json_string(&spec))?;
    Ok(())
}

fn pipeline_config(ctx: &Context, a: &FitArgs) -> PipelineConfig {
    let mut cfg = ctx.file.pipeline.clone();
    if a.standardized && !ctx.damex_from_file {
        cfg.damex = DamexConfig::pareto_scale();
    }
    if let Some(t) = a.threshold.resolve() {
        cfg.threshold = Some(t);
    }
    if let Some(x) = a.eps {
        cfg.damex.eps = x;
    }
    if let Some(x) = a.k {
        cfg.damex.k = Some(x);
        cfg.damex.scale = None;
        cfg.damex.relative_scale = None;
    }
    if let Some(x) = a.mu_min {
        cfg.damex.mu_min = Some(x);
    }
    if let Some(x) = a.max_iter {
        cfg.fit.max_iter = x;
    }
    if let Some(x) = a.tol {
        cfg.fit.tol = Some(x);
    }
    if let Some(x) = a.nu_init {
        cfg.fit.nu_init = x;
    }
    if let Some(x) = a.lambda_init {
        cfg.fit.lambda_init = x;
    }
    cfg.fit.seed = ctx.seed;
    cfg
}

fn cmd_fit(ctx: &Context, a: FitArgs) -> Result<(), Error> {
    let cfg = pipeline_config(ctx, &a);
    let text = read_text(&a.data)?;
    let mut raw = match &a.label_column {
        Some(col) => ingest::read_csv_with_labels(text.as_bytes(), col)?.0,
        None => ingest::read_csv(text.as_bytes())?,
    };
    if a.sign_double {
        raw = ingest::sign_double(&raw);
    }
    let out = if a.standardized {
        let names = raw.feature_names().to_vec();
        pipeline::run_standardized(StandardizedDataset::provided(raw.rows().clone(), names), &cfg)?
    } else {
        pipeline::run_data(&raw, &cfg)?
    };
    ctx.write("model.json", out.fit.theta.to_json() + "\n")?;
    ctx.write("gamma.csv", matrix_csv(out.fit.gamma.matrix(), "c"))?;
    let mut trace = Vec::new();
    out.fit.write_trace(&mut trace).expect("in-memory write");
    ctx.write("trace.jsonl", trace)?;
    ctx.write("support.json", json_string(&out.support))?;
    ctx.write(
        "extremes.json",
        json_string(&json!({ "r0": out.extremes.r0, "indices": out.extremes.indices })),
    )?;
    ctx.write("assignment.json", json_string(&json!({ "labels": out.hard.labels })))?;
    ctx.write("config.json", json_string(&cfg))?;
    println!(
        "{}",
        json!({
            "n0": out.extremes.n0,
            "faces": out.support.n_faces(),
            "singletons": out.support.n_singletons(),
            "iterations": out.fit.iterations,
            "converged": out.fit.converged,
            "q": out.fit.q_trace.last(),
        })
    );
    Ok(())
}

fn read_gamma(path: &Path) -> Result<PosteriorMatrix, Error> {
    let raw = ingest::read_csv(read_text(path)?.as_bytes())?;
    Ok(PosteriorMatrix::new(raw.rows().clone())?)
}

fn cmd_cluster(ctx: &Context, a: ClusterArgs) -> Result<(), Error> {
    let gamma = read_gamma(&a.gamma)?;
    let hard = graph::hard_assign(&gamma);
    let k = a
        .n_clusters
        .or(ctx.file.pipeline.graph.n_clusters)
        .unwrap_or(gamma.n_components());
    let spectral = graph::spectral_clustering(&graph::similarity_matrix(&gamma), k, ctx.seed)?;
    ctx.write(
        "clusters.json",
        json_string(&json!({
            "hard": { "n_clusters": hard.n_clusters, "labels": hard.labels },
            "spectral": { "n_clusters": spectral.n_clusters, "labels": spectral.labels },
        })),
    )?;
    Ok(())
}

fn cmd_graph(ctx: &Context, a: GraphArgs) -> Result<(), Error> {
    let gamma = read_gamma(&a.gamma)?;
    let gcfg = &ctx.file.pipeline.graph;
    let sim = graph::similarity_matrix(&gamma);
    let k = a.n_clusters.or(gcfg.n_clusters).unwrap_or(gamma.n_components());
    let clusters = graph::spectral_clustering(&sim, k, ctx.seed)?;
    let drawn = graph::threshold_edges(&sim, a.edge_threshold.unwrap_or(gcfg.edge_threshold))?;
    let mut layout_cfg = gcfg.layout.clone();
    layout_cfg.seed = ctx.seed;
    if let Some(it) = a.layout_iterations {
        layout_cfg.iterations = it;
    }
    let layout = graph::fr_layout(&drawn, &layout_cfg)?;
    let model = a.model.as_deref().map(|p| read_text(p).and_then(|t| Ok(ThetaParams::from_json(&t)?))).transpose()?;
    let hard = graph::hard_assign(&gamma);
    let support: Option<&SupportSet> = model.as_ref().map(|m| m.support());
    let doc = GraphDocument::new(&drawn, &clusters, &layout, support.map(|s| (&hard, s)))?;
    for f in a.format {
        let format: ExportFormat = f.into();
        ctx.write(&format!("graph.{}", format.extension()), doc.render(format))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct LabelFile {
    labels: Vec<serde_json::Value>,
}

fn read_labels(path: &Path) -> Result<Vec<serde_json::Value>, Error> {
    let f: LabelFile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(f.labels)
}

fn as_indices(labels: &[serde_json::Value]) -> Option<Vec<usize>> {
    labels.iter().map(|v| v.as_u64().map(|x| x as usize)).collect()
}

fn cmd_eval(ctx: &Context, a: EvalArgs) -> Result<(), Error> {
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.truth)?;
    let mut metrics = serde_json::Map::new();
    let models = match (&a.model, &a.model_true) {
        (Some(m), Some(t)) => Some((
            ThetaParams::from_json(&read_text(m)?)?,
            ThetaParams::from_json(&read_text(t)?)?,
        )),
        _ => None,
    };
    if let (Some(p), Some(t)) = (as_indices(&pred), as_indices(&truth)) {
        let p = match &models {
            Some((hat, tru)) => eval::relabel(&p, hat.support(), tru.support()),
            None => p,
        };
        metrics.insert("labeling_errors".into(), json!(eval::labeling_error(&p, &t)?));
    }
    let pred_k = as_indices(&pred).ok_or_else(|| Error::Config("predictions must be integer labels".into()))?;
    let classes: Vec<String> = truth.iter().map(|v| v.to_string()).collect();
    metrics.insert("purity".into(), json!(eval::purity(&pred_k, &classes)?));
    if let Some((hat, tru)) = &models {
        match eval::param_errors(hat, tru) {
            Ok(e) => {
                metrics.insert("param_errors".into(), json!(e));
            }
            Err(e) => log::warn!("parameter errors unavailable: {e}"),
        }
    }
    let text = json_string(&metrics);
    ctx.write("eval.json", &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_reproduce(ctx: &Context, a: ReproduceArgs) -> Result<(), Error> {
    let seeds: Vec<u64> = (0..a.replicates).map(|r| ctx.seed + r).collect();
    let base = SyntheticSpec {
        seed: ctx.seed,
        ..ctx.file.simulate.clone()
    };
    let fit_cfg = ctx.file.pipeline.fit.clone();
    let damex_cfg = if ctx.damex_from_file {
        ctx.file.pipeline.damex.clone()
    } else {
        DamexConfig::pareto_scale()
    };
    match a.preset {
        Preset::Parameters | Preset::Labeling => {
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for lambda in LAMBDA_SWEEP {
                let r = pipeline::benchmark(&base, lambda, &seeds, &damex_cfg, &fit_cfg)?;
                let n = r.len() as f64;
                let exact: Vec<_> = r.iter().filter_map(|x| x.param_errors).collect();
                let mean = |f: fn(&eval::ParamErrors) -> f64| {
                    (!exact.is_empty()).then(|| exact.iter().map(f).sum::<f64>() / exact.len() as f64)
                };
                summary.push(json!({
                    "lambda": lambda,
                    "mean_labeling_errors": r.iter().map(|x| x.labeling_errors as f64).sum::<f64>() / n,
                    "exact_support": r.iter().filter(|x| x.support_exact).count(),
                    "err_rho": mean(|e| e.err_rho),
                    "err_nu": mean(|e| e.err_nu),
                    "err_lambda": mean(|e| e.err_lambda),
                }));
                rows.extend(r);
            }
            let name = match a.preset {
                Preset::Parameters => "parameters",
                _ => "labeling",
            };
            let text = json_string(&json!({ "summary": summary, "replicates": rows }));
            ctx.write(&format!("{name}.json"), &text)?;
            println!("{}", json_string(&summary));
        }
        Preset::Shuttle => {
            let dir = a.cache_dir.unwrap_or_else(shuttle::default_cache_dir);
            let data = shuttle::load(&shuttle::fetch(&dir)?)?;
            let mut cfg = ctx.file.pipeline.clone();
            cfg.fit.seed = ctx.seed;
            let rows = [100, 200, 300, 400, 500]
                .into_iter()
                .map(|n0| pipeline::shuttle_purity(&data, n0, &cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let text = json_string(&rows);
            ctx.write("shuttle.json", &text)?;
            print!("{text}");
        }
    }
    Ok(())
}
