//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    run_alpha_sweep, run_mixture_study, run_scaling, AlphaSweepConfig, MixtureConfig, ScalingConfig, ScalingKind,
};
use crate::inference::{
    absolute_to_relative, extract_edges, fit_baseline, prediction_error, BaselineKind, EdgeMode, FittedModel,
};
use crate::io::{read_json, read_matrix, read_panel, read_panel_raw, read_vector, write_json, write_panel_file};
use crate::io::{MixtureFile, ModelFile, SimulationModel};
use crate::rng::derive_seed;
use crate::simulate::{
    constant_q_preset, dynamic_preset, multinomial_preset, simulate_logistic_normal, simulate_mixture,
    simulate_multinomial, InitSpec, MixtureSpec,
};
use crate::solver::{
    cross_validate, fit_joint, fit_logistic_normal_const_q, fit_multinomial, Criterion, CvConfig, FitConfig, ModelKind,
};
use crate::tensor::{EventPanel, PanelKind};

#[derive(Debug, Parser, Serialize)]
#[command(name = "ctxnet", version, about = "Context-dependent influence networks from marked event data")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file of flag values; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Simulate a panel from a model file or a preset.
    Simulate(SimulateArgs),
    /// Fit a penalized network estimate.
    Fit(FitArgs),
    /// Select the penalty (and mixing weight) by rolling-window cross-validation.
    Cv(CvArgs),
    /// Held-out one-step-ahead prediction error.
    Predict(PredictArgs),
    /// Export thresholded network edges.
    Export(ExportArgs),
    /// Run a synthetic experiment.
    Experiment(ExperimentArgs),
    /// Check a panel file and summarize it.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Preset {
    /// Sparse multinomial network.
    #[value(name = "mn", alias = "mn-4.1.1")]
    Multinomial,
    /// Logistic-normal network with constant occurrence probability 0.8.
    #[value(name = "ln-constq", alias = "ln-constq-4.1.2")]
    ConstQ,
    /// Logistic-normal network with a Bernoulli occurrence network.
    #[value(name = "ln-dyn", alias = "ln-dyn-4.1.3")]
    Dynamic,
    /// Two-population mixture of multinomial and logistic-normal nodes.
    #[value(name = "mixture", alias = "mixture-appB")]
    Mixture,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Model JSON to simulate from.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of nodes (presets).
    #[arg(long = "M", default_value_t = 20)]
    pub nodes: usize,
    /// Nonzero groups in total (presets; default M).
    #[arg(long)]
    pub s: Option<usize>,
    /// Number of categories (presets).
    #[arg(long = "K", default_value_t = 2)]
    pub k: usize,
    /// Number of transitions.
    #[arg(long = "T")]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Network entries are U(-bound, bound) (ln-dyn preset).
    #[arg(long, default_value_t = 2.0)]
    pub bound: f64,
    /// Noise variance (ln-dyn preset).
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    /// Event probability of the initial frame.
    #[arg(long, default_value_t = 0.8)]
    pub init_prob: f64,
    /// Output panel CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FitKind {
    #[value(name = "mn")]
    Multinomial,
    #[value(name = "ln-constq")]
    ConstQ,
    #[value(name = "ln-joint")]
    Joint,
}

impl FitKind {
    fn model_kind(self) -> ModelKind {
        match self {
            FitKind::Multinomial => ModelKind::Multinomial,
            FitKind::ConstQ => ModelKind::ConstQ,
            FitKind::Joint => ModelKind::Joint,
        }
    }

    fn panel_kind(self) -> PanelKind {
        match self {
            FitKind::Multinomial => PanelKind::Categorical,
            _ => PanelKind::Compositional,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    /// Mixing weight of the joint model.
    #[arg(long, default_value_t = 0.4)]
    pub alpha: f64,
    /// Also estimate the intercepts, starting from the given values.
    #[arg(long)]
    pub fit_intercepts: bool,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Relative objective change at which the solver stops.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Compositional entries below this are raised to it (0 = strict).
    #[arg(long, default_value_t = 0.0)]
    pub clip_eps: f64,
    /// Plain proximal gradient instead of the accelerated method.
    #[arg(long)]
    pub no_acceleration: bool,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> FitConfig {
        FitConfig {
            lambda,
            alpha: self.alpha,
            max_iters: self.max_iters,
            tol: self.tol,
            fit_intercepts: self.fit_intercepts,
            accelerated: !self.no_acceleration,
            clip_eps: self.clip_eps,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub model_kind: FitKind,
    /// Panel CSV.
    #[arg(long)]
    pub panel: PathBuf,
    /// Intercepts JSON: a flat list, a list of rows, or an object with `nu`.
    #[arg(long)]
    pub nu: PathBuf,
    /// Occurrence intercepts JSON (ln-joint).
    #[arg(long)]
    pub eta: Option<PathBuf>,
    /// Number of nodes when it exceeds the largest node index in the panel.
    #[arg(long = "M")]
    pub nodes: Option<usize>,
}

struct Problem {
    panel: EventPanel,
    nu: Array2<f64>,
    eta: Option<Vec<f64>>,
}

impl ProblemArgs {
    fn load(&self) -> Result<Problem> {
        let panel = read_panel(&self.panel, Some(self.model_kind.panel_kind()), self.nodes, None)?;
        let (m, k) = (panel.n_nodes(), panel.n_categories());
        let cols = if self.model_kind == FitKind::Multinomial { k } else { k - 1 };
        let nu = read_matrix(&self.nu, m, cols).map_err(|e| Error::Dimension(format!("nu vs panel with M = {m}, K = {k}: {e}")))?;
        let eta = match (&self.eta, self.model_kind) {
            (Some(p), _) => Some(read_vector(p, m).map_err(|e| Error::Dimension(format!("eta vs panel with M = {m}: {e}")))?),
            (None, FitKind::Joint) => return Err(Error::InvalidParameter("ln-joint needs --eta".into())),
            (None, _) => None,
        };
        Ok(Problem { panel, nu, eta })
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![self.panel.as_path(), self.nu.as_path()];
        v.extend(self.eta.as_deref());
        v
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Group penalty.
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum CriterionArg {
    Loss,
    Pred,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda_grid: Vec<f64>,
    /// Mixing weights to search (ln-joint).
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Loss)]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output JSON with the selection and the score table.
    #[arg(long)]
    pub out: PathBuf,
    /// Refit on the full panel at the selection and write the model here.
    #[arg(long)]
    pub refit_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Metric {
    Mn,
    Ln,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Panel CSV.
    #[arg(long)]
    pub panel: PathBuf,
    /// First predicted time point.
    #[arg(long)]
    pub holdout_start: usize,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Also report the two baselines fitted on the points before the holdout.
    #[arg(long)]
    pub baselines: bool,
    /// Output JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModeArg {
    Abs,
    Rel,
    Occ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Json,
    Dot,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Keep entries above this fraction of the largest absolute entry.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ExperimentName {
    ScalingMn,
    ScalingLnConstq,
    ScalingLnJoint,
    AlphaSweep,
    Mixture,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: ExperimentName,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the number of trials (seeds for the mixture study).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Larger grids: 50 trials, and tuning on every mixture seed.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum KindArg {
    Categorical,
    Compositional,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Panel CSV.
    #[arg(long)]
    pub panel: PathBuf,
    /// Panel type (default: categorical if every row is one-hot).
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long = "M")]
    pub nodes: Option<usize>,
    #[arg(long = "T")]
    pub steps: Option<usize>,
    /// Output JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of a run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_secs: f64,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| Ok(FileDigest { path: p.to_path_buf(), sha256: sha256_file(p)? })).collect()
}

/// `p.csv` -> `p.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Converts a JSON object of flag values into command-line tokens.
fn config_tokens(path: &Path) -> std::result::Result<Vec<String>, Failure> {
    let value: serde_json::Value = read_json(path).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(Failure::Usage("config must be a JSON object".into()));
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        match &v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Array(items) => {
                out.push(flag);
                out.push(items.iter().map(scalar).collect::<Vec<_>>().join(","));
            }
            other => {
                out.push(flag);
                out.push(scalar(other));
            }
        }
    }
    Ok(out)
}

const SUBCOMMANDS: [&str; 7] = ["simulate", "fit", "cv", "predict", "export", "experiment", "validate"];

fn find_config(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Inserts config-file flags right after the subcommand so that flags given
/// on the command line override them.
fn expand_config(argv: Vec<String>) -> std::result::Result<Vec<String>, Failure> {
    let Some(path) = find_config(&argv) else {
        return Ok(argv);
    };
    let tokens = config_tokens(&path)?;
    let Some(pos) = argv.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut out = argv[..pos + 2].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&argv[pos + 2..]);
    Ok(out)
}

/// Parses `argv`, runs the command and returns the process exit status:
/// 0 on success, 1 on usage errors, 2 on data and validation errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(f) => return report(f),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report(Failure::Usage("--threads must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli, &argv) {
        Ok(()) => 0,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            1
        }
        Failure::Data(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

struct Run<'a> {
    cli: &'a Cli,
    argv: &'a [String],
    start: Instant,
    quiet: bool,
}

impl Run<'_> {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn manifest(&self, at: &Path, seed: Option<u64>, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        let command = SUBCOMMANDS
            .iter()
            .find(|c| self.argv.iter().any(|a| a == *c))
            .map_or_else(String::new, |c| c.to_string());
        let manifest = RunManifest {
            command,
            argv: self.argv.to_vec(),
            config: serde_json::to_value(self.cli)?,
            seed,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            wall_time_secs: self.start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        write_json(&manifest, at)
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> std::result::Result<(), Failure> {
    let run = Run { cli, argv, start: Instant::now(), quiet: cli.quiet };
    match &cli.command {
        Command::Simulate(a) => simulate(&run, a),
        Command::Fit(a) => fit(&run, a),
        Command::Cv(a) => cv(&run, a),
        Command::Predict(a) => predict(&run, a),
        Command::Export(a) => export(&run, a),
        Command::Experiment(a) => experiment(&run, a),
        Command::Validate(a) => validate(&run, a),
    }
}

fn simulate(run: &Run, a: &SimulateArgs) -> std::result::Result<(), Failure> {
    let init = InitSpec { event_prob: a.init_prob };
    if !(0.0..=1.0).contains(&a.init_prob) {
        return Err(Failure::Usage("--init-prob must lie in [0, 1]".into()));
    }
    let (net_seed, sim_seed) = (derive_seed(a.seed, &[1]), derive_seed(a.seed, &[2]));
    let truth = sibling(&a.out, "truth.json");
    let s = a.s.unwrap_or(a.nodes);
    let (panel, truth_written) = match (&a.model, a.preset) {
        (Some(path), _) => {
            let file: ModelFile = read_json(path)?;
            let panel = match file.to_simulation_model()? {
                SimulationModel::Multinomial(m) => simulate_multinomial(&m, a.steps, init, sim_seed),
                SimulationModel::LogisticNormal(m) => simulate_logistic_normal(&m, a.steps, init, sim_seed),
            };
            (panel, false)
        }
        (None, Some(Preset::Multinomial)) => {
            let model = multinomial_preset(a.nodes, a.k, s, net_seed)?;
            write_json(&ModelFile::from_multinomial(&model), &truth)?;
            (simulate_multinomial(&model, a.steps, init, sim_seed), true)
        }
        (None, Some(Preset::ConstQ)) => {
            let model = constant_q_preset(a.nodes, a.k, s, net_seed)?;
            write_json(&ModelFile::from_logistic_normal(&model), &truth)?;
            (simulate_logistic_normal(&model, a.steps, init, sim_seed), true)
        }
        (None, Some(Preset::Dynamic)) => {
            let model = dynamic_preset(a.nodes, a.k, s, a.bound, a.variance, net_seed)?;
            write_json(&ModelFile::from_logistic_normal(&model), &truth)?;
            (simulate_logistic_normal(&model, a.steps, init, sim_seed), true)
        }
        (None, Some(Preset::Mixture)) => {
            let (panel, spec) = simulate_mixture(&MixtureSpec::reference(), a.steps, init, sim_seed)?;
            write_json(&MixtureFile::from_spec(&spec), &truth)?;
            (panel, true)
        }
        (None, None) => return Err(Failure::Usage("give --model or --preset".into())),
    };
    write_panel_file(&panel, &a.out)?;
    let mut outputs = vec![a.out.as_path()];
    if truth_written {
        outputs.push(truth.as_path());
    }
    let inputs: Vec<&Path> = a.model.as_deref().into_iter().collect();
    run.manifest(&sibling(&a.out, "manifest.json"), Some(a.seed), &inputs, &outputs)?;
    run.say(&format!("wrote {} ({} nodes, {} transitions)", a.out.display(), panel.n_nodes(), panel.n_steps()));
    Ok(())
}

fn fit_model(kind: FitKind, p: &Problem, cfg: &FitConfig) -> Result<(FittedModel, bool, usize)> {
    Ok(match kind {
        FitKind::Multinomial => {
            let f = fit_multinomial(&p.panel, &p.nu, cfg)?;
            let d = (f.diagnostics.converged(), f.diagnostics.max_iterations());
            (FittedModel::Multinomial { a: f.a, nu: f.nu }, d.0, d.1)
        }
        FitKind::ConstQ => {
            let f = fit_logistic_normal_const_q(&p.panel, &p.nu, cfg)?;
            let d = (f.diagnostics.converged(), f.diagnostics.max_iterations());
            (FittedModel::ConstQ { a: f.a, nu: f.nu, q: f.q }, d.0, d.1)
        }
        FitKind::Joint => {
            let eta = p.eta.as_deref().ok_or_else(|| Error::InvalidParameter("ln-joint needs --eta".into()))?;
            let f = fit_joint(&p.panel, &p.nu, eta, cfg)?;
            let d = (f.diagnostics.converged(), f.diagnostics.max_iterations());
            (FittedModel::Joint { a: f.a, nu: f.nu, b: f.b, eta: f.eta }, d.0, d.1)
        }
    })
}

fn fit(run: &Run, a: &FitArgs) -> std::result::Result<(), Failure> {
    let problem = a.problem.load()?;
    let cfg = a.solver.config(a.lambda);
    cfg.validate()?;
    let (model, converged, iters) = fit_model(a.problem.model_kind, &problem, &cfg)?;
    write_json(&ModelFile::from_fitted(&model), &a.out)?;
    run.manifest(&sibling(&a.out, "manifest.json"), None, &a.problem.inputs(), &[&a.out])?;
    run.say(&format!(
        "wrote {} ({}converged, at most {iters} iterations per node)",
        a.out.display(),
        if converged { "" } else { "not " }
    ));
    Ok(())
}

fn cv(run: &Run, a: &CvArgs) -> std::result::Result<(), Failure> {
    let problem = a.problem.load()?;
    let template = a.solver.config(a.lambda_grid.first().copied().unwrap_or(0.0));
    let cv_cfg = CvConfig {
        alpha_grid: a.alpha_grid.clone(),
        folds: a.folds,
        criterion: match a.criterion {
            CriterionArg::Loss => Criterion::HeldOutLoss,
            CriterionArg::Pred => Criterion::PredictionError,
        },
        ..CvConfig::new(a.lambda_grid.clone())
    };
    let kind = a.problem.model_kind;
    let result = cross_validate(&problem.panel, &problem.nu, problem.eta.as_deref(), kind.model_kind(), &cv_cfg, &template)?;
    write_json(&result, &a.out)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(path) = &a.refit_out {
        let mut cfg = template.with_lambda(result.lambda);
        cfg.alpha = result.alpha;
        let (model, _, _) = fit_model(kind, &problem, &cfg)?;
        write_json(&ModelFile::from_fitted(&model), path)?;
        outputs.push(path);
    }
    run.manifest(&sibling(&a.out, "manifest.json"), None, &a.problem.inputs(), &outputs)?;
    run.say(&format!("lambda = {} alpha = {}", result.lambda, result.alpha));
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictReport {
    metric: Metric,
    holdout_start: usize,
    prediction_error: f64,
    context_independent: Option<f64>,
    constant_process: Option<f64>,
}

fn predict(run: &Run, a: &PredictArgs) -> std::result::Result<(), Failure> {
    let file: ModelFile = read_json(&a.model)?;
    let model = file.to_fitted()?;
    let kind = match a.metric {
        Metric::Mn => PanelKind::Categorical,
        Metric::Ln => PanelKind::Compositional,
    };
    if model.panel_kind() != kind {
        return Err(Error::InvalidParameter(format!("--metric {:?} does not match a {:?} model", a.metric, model.panel_kind())).into());
    }
    let panel = read_panel(&a.panel, Some(kind), Some(file.M), None)?;
    let err = prediction_error(&model, &panel, a.holdout_start)?;
    let (mut ci, mut cp) = (None, None);
    if a.baselines {
        let train = panel.prefix(a.holdout_start.saturating_sub(1));
        for (kind, slot) in [(BaselineKind::ContextIndependent, &mut ci), (BaselineKind::ConstantProcess, &mut cp)] {
            let b = fit_baseline(&train, kind, None, 0.0)?;
            *slot = Some(prediction_error(&b, &panel, a.holdout_start)?);
        }
    }
    let report = PredictReport { metric: a.metric, holdout_start: a.holdout_start, prediction_error: err, context_independent: ci, constant_process: cp };
    if let Some(out) = &a.out {
        write_json(&report, out)?;
        run.manifest(&sibling(out, "manifest.json"), None, &[&a.model, &a.panel], &[out])?;
    }
    let mut line = format!("prediction error {err}");
    if let (Some(c), Some(p)) = (ci, cp) {
        line.push_str(&format!(" context-independent {c} constant {p}"));
    }
    if !run.quiet || a.out.is_none() {
        println!("{line}");
    }
    Ok(())
}

fn export(run: &Run, a: &ExportArgs) -> std::result::Result<(), Failure> {
    let file: ModelFile = read_json(&a.model)?;
    let model = file.to_fitted()?;
    let (net, mode) = match (a.mode, &model) {
        (ModeArg::Abs, FittedModel::Multinomial { a, .. }) => (a.clone(), EdgeMode::Absolute),
        (ModeArg::Abs, _) => return Err(Error::InvalidParameter("absolute export needs a multinomial model".into()).into()),
        (ModeArg::Rel, FittedModel::Multinomial { a, .. }) => (absolute_to_relative(a)?, EdgeMode::Relative),
        (ModeArg::Rel, FittedModel::ConstQ { a, .. } | FittedModel::Joint { a, .. }) => (a.clone(), EdgeMode::Relative),
        (ModeArg::Occ, FittedModel::Joint { b, .. }) => (b.clone(), EdgeMode::Occurrence),
        (ModeArg::Occ, _) => return Err(Error::InvalidParameter("occurrence export needs a model with B".into()).into()),
    };
    let edges = extract_edges(&net, a.threshold, mode)?;
    let text = match a.format {
        Format::Json => edges.to_json()? + "\n",
        Format::Dot => edges.to_dot(),
    };
    match &a.out {
        Some(out) => {
            std::fs::write(out, text).map_err(Error::from)?;
            run.manifest(&sibling(out, "manifest.json"), None, &[&a.model], &[out])?;
            run.say(&format!("wrote {} edges to {}", edges.edges.len(), out.display()));
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn experiment(run: &Run, a: &ExperimentArgs) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    let trials = a.trials.unwrap_or(if a.full { 50 } else { 10 });
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let scaling = |kind: ScalingKind| -> Result<(String, serde_json::Value, String)> {
        let cfg = ScalingConfig { trials, ..ScalingConfig::desk(kind, a.seed) };
        let r = run_scaling(&cfg)?;
        let summary = r.slopes()?.iter().map(|((m, s), v)| format!("M={m} s={s} slope={v:.3}")).collect::<Vec<_>>().join("; ");
        Ok((r.to_csv(), serde_json::to_value(&cfg)?, summary))
    };
    let (csv, config, summary) = match a.name {
        ExperimentName::ScalingMn => scaling(ScalingKind::Multinomial)?,
        ExperimentName::ScalingLnConstq => scaling(ScalingKind::ConstQ)?,
        ExperimentName::ScalingLnJoint => scaling(ScalingKind::Joint)?,
        ExperimentName::AlphaSweep => {
            let cfg = AlphaSweepConfig { trials, ..AlphaSweepConfig::desk(a.seed) };
            let r = run_alpha_sweep(&cfg)?;
            (r.to_csv(), serde_json::to_value(&cfg).map_err(Error::from)?, format!("{} rows", r.rows.len()))
        }
        ExperimentName::Mixture => {
            let seeds = a.trials.unwrap_or(5);
            let cfg = MixtureConfig {
                seeds: (0..seeds as u64).map(|i| a.seed + i).collect(),
                tune_once: !a.full,
                ..MixtureConfig::default()
            };
            let r = run_mixture_study(&MixtureSpec::reference(), &cfg)?;
            (r.to_csv(), serde_json::to_value(&cfg).map_err(Error::from)?, format!("hypothesis holds in {}/{} seeds", r.hypothesis_holds(), seeds))
        }
    };
    let name = a.name.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let out = a.out_dir.join(format!("{name}.csv"));
    std::fs::write(&out, csv).map_err(Error::from)?;
    let cfg_path = a.out_dir.join(format!("{name}.config.json"));
    write_json(&config, &cfg_path)?;
    run.manifest(&a.out_dir.join(format!("{name}.manifest.json")), Some(a.seed), &[], &[&out, &cfg_path])?;
    run.say(&format!("wrote {}: {summary}", out.display()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    ok: bool,
    kind: PanelKind,
    nodes: usize,
    categories: usize,
    steps: usize,
    rows: usize,
    /// `T_m / T` over time points `1..=T`.
    frequencies: Vec<f64>,
    violations: Vec<crate::tensor::RowViolation>,
}

fn validate(run: &Run, a: &ValidateArgs) -> std::result::Result<(), Failure> {
    let raw = read_panel_raw(std::fs::File::open(&a.panel).map_err(Error::from)?, a.nodes, a.steps)?;
    let kind = match a.kind {
        Some(KindArg::Categorical) => PanelKind::Categorical,
        Some(KindArg::Compositional) => PanelKind::Compositional,
        None => raw.detect_kind(),
    };
    let violations = raw.violations(kind);
    let (tl, m, k) = raw.data.dim();
    let steps = tl - 1;
    let frequencies = (0..m)
        .map(|node| {
            let n = (1..tl).filter(|&t| raw.data.slice(ndarray::s![t, node, ..]).iter().any(|&x| x != 0.0)).count();
            n as f64 / steps.max(1) as f64
        })
        .collect();
    let report = ValidationReport { ok: violations.is_empty(), kind, nodes: m, categories: k, steps, rows: raw.rows, frequencies, violations };
    if let Some(out) = &a.out {
        write_json(&report, out)?;
        run.manifest(&sibling(out, "manifest.json"), None, &[&a.panel], &[out])?;
    }
    if report.ok {
        run.say(&format!("OK: {kind:?} panel, M = {m}, K = {k}, T = {steps}, {} event rows", report.rows));
        Ok(())
    } else {
        for v in &report.violations {
            eprintln!("violation at t = {}, node = {}: {}", v.t, v.node, v.reason);
        }
        Err(Error::Malformed(format!("{} row violations", report.violations.len())).into())
    }
}
