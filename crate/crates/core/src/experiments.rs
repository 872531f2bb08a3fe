//! Synthetic studies: estimation-error scaling, the mixing-weight sweep and
//! the two-population mixture comparison.

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::absolute_to_relative;
use crate::rng::derive_seed;
use crate::simulate::{
    constant_q_preset, dynamic_preset, multinomial_preset, round_to_categorical, simulate_logistic_normal,
    simulate_mixture, simulate_multinomial, InitSpec, MixtureSpec, Occurrence,
};
use crate::solver::{
    cross_validate, empirical_lambda, fit_joint, fit_logistic_normal_const_q, fit_multinomial, Criterion, CvConfig,
    FitConfig, ModelKind,
};
use crate::tensor::{frobenius_sq_diff, InfluenceTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingKind {
    Multinomial,
    ConstQ,
    Joint,
}

impl ScalingKind {
    /// Penalty coefficient `c` of `lambda = c K sqrt(log M / T)`.
    pub fn default_coefficient(self) -> f64 {
        match self {
            ScalingKind::Multinomial => 0.12,
            ScalingKind::ConstQ => 0.13,
            ScalingKind::Joint => 0.08,
        }
    }

    fn label(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub kind: ScalingKind,
    /// `(M, s)` pairs.
    pub cells: Vec<(usize, usize)>,
    pub steps: Vec<usize>,
    pub trials: usize,
    pub k: usize,
    pub coefficient: f64,
    /// Mixing weight of joint fits.
    pub alpha: f64,
    pub seed: u64,
    pub fit: FitConfig,
}

impl ScalingConfig {
    /// `M in {10, 20}`, `s in {M, 2M}`, `T in {500, 1000, 2000, 4000}`, 10 trials, `K = 2`.
    pub fn desk(kind: ScalingKind, seed: u64) -> Self {
        Self {
            kind,
            cells: vec![(10, 10), (10, 20), (20, 20), (20, 40)],
            steps: vec![500, 1000, 2000, 4000],
            trials: 10,
            k: 2,
            coefficient: kind.default_coefficient(),
            alpha: 0.4,
            seed,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.steps.is_empty() || self.trials == 0 || self.k < 2 {
            return Err(Error::InvalidParameter("empty scaling grid".into()));
        }
        for &(m, s) in &self.cells {
            if m < 2 || s > m * m {
                return Err(Error::InvalidParameter(format!("cell (M = {m}, s = {s}) is invalid")));
            }
        }
        if self.steps.iter().any(|&t| t < 2) {
            return Err(Error::InvalidParameter("every T must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub s: usize,
    pub steps: usize,
    pub mean: f64,
    pub se: f64,
    /// `mean / (s log M)`.
    pub normalized: f64,
    /// Occurrence-network error of joint fits.
    pub mean_b: Option<f64>,
    pub se_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
    /// Per-trial errors, `[cell][trial][T]`.
    pub trials: Vec<Vec<Vec<(f64, Option<f64>)>>>,
}

impl ScalingResult {
    pub fn cell_rows(&self, nodes: usize, s: usize) -> Vec<ScalingRow> {
        self.rows.iter().filter(|r| r.nodes == nodes && r.s == s).copied().collect()
    }

    /// Log-log slope of the cell means against `T`, for each cell.
    pub fn slopes(&self) -> Result<Vec<((usize, usize), f64)>> {
        self.config
            .cells
            .iter()
            .map(|&(m, s)| {
                let pts: Vec<(f64, f64)> = self.cell_rows(m, s).iter().map(|r| (r.steps as f64, r.mean)).collect();
                Ok(((m, s), fit_loglog_slope(&pts)?))
            })
            .collect()
    }

    pub fn slopes_b(&self) -> Result<Vec<((usize, usize), f64)>> {
        self.config
            .cells
            .iter()
            .map(|&(m, s)| {
                let pts: Vec<(f64, f64)> = self
                    .cell_rows(m, s)
                    .iter()
                    .map(|r| r.mean_b.map(|b| (r.steps as f64, b)).ok_or_else(|| Error::Empty("no B errors".into())))
                    .collect::<Result<_>>()?;
                Ok(((m, s), fit_loglog_slope(&pts)?))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("M,s,T,mean,se,normalized,mean_b,se_b\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.10e},{:.10e},{:.10e},{},{}",
                r.nodes,
                r.s,
                r.steps,
                r.mean,
                r.se,
                r.normalized,
                opt(r.mean_b),
                opt(r.se_b)
            );
        }
        out
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive values".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all x values are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Errors of one trial at every `T`: one network, one long simulation, fits
/// on its prefixes.
fn scaling_trial(cfg: &ScalingConfig, nodes: usize, s: usize, trial: usize) -> Result<Vec<(f64, Option<f64>)>> {
    let labels = [cfg.kind.label(), nodes as u64, s as u64, trial as u64];
    let net_seed = derive_seed(cfg.seed, &[labels[0], labels[1], labels[2], labels[3], 0]);
    let sim_seed = derive_seed(cfg.seed, &[labels[0], labels[1], labels[2], labels[3], 1]);
    let t_max = *cfg.steps.iter().max().unwrap();
    let k = cfg.k;
    let init = InitSpec::default();
    let mut out = Vec::with_capacity(cfg.steps.len());
    match cfg.kind {
        ScalingKind::Multinomial => {
            let model = multinomial_preset(nodes, k, s, net_seed)?;
            let panel = simulate_multinomial(&model, t_max, init, sim_seed);
            for &t in &cfg.steps {
                let fc = cfg.fit.with_lambda(empirical_lambda(cfg.coefficient, k, nodes, t));
                let fit = fit_multinomial(&panel.prefix(t), &model.nu, &fc)?;
                out.push((frobenius_sq_diff(&fit.a, &model.a)?, None));
            }
        }
        ScalingKind::ConstQ => {
            let model = constant_q_preset(nodes, k, s, net_seed)?;
            let panel = simulate_logistic_normal(&model, t_max, init, sim_seed);
            for &t in &cfg.steps {
                let fc = cfg.fit.with_lambda(empirical_lambda(cfg.coefficient, k, nodes, t));
                let fit = fit_logistic_normal_const_q(&panel.prefix(t), &model.nu, &fc)?;
                out.push((frobenius_sq_diff(&fit.a, &model.a)?, None));
            }
        }
        ScalingKind::Joint => {
            let model = dynamic_preset(nodes, k, s, 2.0, 1.0, net_seed)?;
            let Occurrence::Dynamic { b, eta } = &model.occurrence else { unreachable!() };
            let panel = simulate_logistic_normal(&model, t_max, init, sim_seed);
            for &t in &cfg.steps {
                let fc = FitConfig { alpha: cfg.alpha, ..cfg.fit.with_lambda(empirical_lambda(cfg.coefficient, k, nodes, t)) };
                let fit = fit_joint(&panel.prefix(t), &model.nu, eta.as_slice().unwrap(), &fc)?;
                out.push((frobenius_sq_diff(&fit.a, &model.a)?, Some(frobenius_sq_diff(&fit.b, b)?)));
            }
        }
    }
    Ok(out)
}

/// Estimation error `||A_hat - A||_F^2` over the `(M, s, T)` grid with the
/// empirical penalty rule.
pub fn run_scaling(cfg: &ScalingConfig) -> Result<ScalingResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.cells.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let results: Vec<Vec<(f64, Option<f64>)>> = jobs
        .par_iter()
        .map(|&(c, trial)| scaling_trial(cfg, cfg.cells[c].0, cfg.cells[c].1, trial))
        .collect::<Result<_>>()?;
    let mut trials = vec![Vec::with_capacity(cfg.trials); cfg.cells.len()];
    for (&(c, _), r) in jobs.iter().zip(results) {
        trials[c].push(r);
    }
    let mut rows = Vec::new();
    for (c, &(nodes, s)) in cfg.cells.iter().enumerate() {
        for (it, &steps) in cfg.steps.iter().enumerate() {
            let a: Vec<f64> = trials[c].iter().map(|r| r[it].0).collect();
            let b: Option<Vec<f64>> = trials[c].iter().map(|r| r[it].1).collect();
            let (mean, se) = mean_se(&a);
            let (mean_b, se_b) = match b {
                Some(b) => {
                    let (m, e) = mean_se(&b);
                    (Some(m), Some(e))
                }
                None => (None, None),
            };
            let normalized = mean / (s.max(1) as f64 * (nodes as f64).ln());
            rows.push(ScalingRow { nodes, s, steps, mean, se, normalized, mean_b, se_b });
        }
    }
    Ok(ScalingResult { config: cfg.clone(), rows, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepConfig {
    pub nodes: usize,
    pub s: usize,
    pub k: usize,
    pub steps: usize,
    pub variances: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    /// Network entries are `U(-bound, bound)`.
    pub bound: f64,
    /// Cross-validated penalties are `c K sqrt(log M / T)` for these `c`.
    pub coefficients: Vec<f64>,
    pub seed: u64,
    pub fit: FitConfig,
}

impl AlphaSweepConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            nodes: 20,
            s: 20,
            k: 2,
            steps: 1000,
            variances: vec![1.0, 2.0],
            alphas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            trials: 10,
            bound: 1.0,
            coefficients: vec![0.02, 0.04, 0.08, 0.16, 0.32],
            seed,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub variance: f64,
    pub alpha: f64,
    pub trial: usize,
    pub lambda: f64,
    pub mse_a: f64,
    pub mse_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepResult {
    pub config: AlphaSweepConfig,
    pub rows: Vec<AlphaRow>,
}

impl AlphaSweepResult {
    fn select(&self, variance: f64, alpha: f64) -> impl Iterator<Item = &AlphaRow> {
        self.rows.iter().filter(move |r| r.variance == variance && r.alpha == alpha)
    }

    /// Mean `(MSE(A_hat), MSE(B_hat))` over trials.
    pub fn mean_mse(&self, variance: f64, alpha: f64) -> (f64, f64) {
        let (mut a, mut b, mut n) = (0.0, 0.0, 0usize);
        for r in self.select(variance, alpha) {
            a += r.mse_a;
            b += r.mse_b;
            n += 1;
        }
        (a / n as f64, b / n as f64)
    }

    /// Alpha with the smallest `MSE(A_hat)` in one trial; ties go to the smaller alpha.
    pub fn best_alpha_for_a(&self, variance: f64, trial: usize) -> f64 {
        let mut best = (f64::INFINITY, f64::NAN);
        for &alpha in &self.config.alphas {
            for r in self.select(variance, alpha).filter(|r| r.trial == trial) {
                if r.mse_a < best.0 {
                    best = (r.mse_a, alpha);
                }
            }
        }
        best.1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma2,alpha,trial,lambda,mse_a,mse_b\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.10e},{:.10e},{:.10e}", r.variance, r.alpha, r.trial, r.lambda, r.mse_a, r.mse_b);
        }
        out
    }
}

/// Joint-fit errors across mixing weights, with the penalty chosen by
/// cross-validation for every `(trial, alpha)`. Trials share their network
/// and noise draws across variances.
pub fn run_alpha_sweep(cfg: &AlphaSweepConfig) -> Result<AlphaSweepResult> {
    if cfg.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) || cfg.alphas.is_empty() {
        return Err(Error::InvalidParameter("alpha grid must lie in [0, 1]".into()));
    }
    let lambdas: Vec<f64> = cfg.coefficients.iter().map(|&c| empirical_lambda(c, cfg.k, cfg.nodes, cfg.steps)).collect();
    let jobs: Vec<(usize, usize)> =
        (0..cfg.variances.len()).flat_map(|v| (0..cfg.trials).map(move |t| (v, t))).collect();
    let rows: Vec<Vec<AlphaRow>> = jobs
        .par_iter()
        .map(|&(iv, trial)| {
            let variance = cfg.variances[iv];
            let net_seed = derive_seed(cfg.seed, &[trial as u64, 0]);
            let sim_seed = derive_seed(cfg.seed, &[trial as u64, 1]);
            let model = dynamic_preset(cfg.nodes, cfg.k, cfg.s, cfg.bound, variance, net_seed)?;
            let Occurrence::Dynamic { b, eta } = &model.occurrence else { unreachable!() };
            let eta = eta.to_vec();
            let panel = simulate_logistic_normal(&model, cfg.steps, InitSpec::default(), sim_seed);
            let cv = CvConfig::new(lambdas.clone());
            cfg.alphas
                .iter()
                .map(|&alpha| {
                    let template = FitConfig { alpha, ..cfg.fit };
                    let sel = cross_validate(&panel, &model.nu, Some(&eta), ModelKind::Joint, &cv, &template)?;
                    let fit = fit_joint(&panel, &model.nu, &eta, &template.with_lambda(sel.lambda))?;
                    Ok(AlphaRow {
                        variance,
                        alpha,
                        trial,
                        lambda: sel.lambda,
                        mse_a: frobenius_sq_diff(&fit.a, &model.a)?,
                        mse_b: frobenius_sq_diff(&fit.b, b)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(AlphaSweepResult { config: cfg.clone(), rows: rows.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_edges: usize,
    pub predicted_edges: usize,
}

/// Entries `(m, k, m', k')` with `m` in `targets` and normalized magnitude
/// above `threshold`; the normalization uses the whole network.
pub fn thresholded_support(net: &InfluenceTensor, targets: &[usize], threshold: f64) -> Vec<(usize, usize, usize, usize)> {
    let scale = net.max_abs();
    if scale == 0.0 {
        return Vec::new();
    }
    net.data()
        .indexed_iter()
        .filter(|((m, _, _, _), v)| targets.contains(m) && v.abs() / scale > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Precision, recall and F1 of the estimated support against the truth.
///
/// Precision is 0 when nothing is predicted; F1 is 0 when precision and
/// recall are both 0.
pub fn edge_score(estimate: &InfluenceTensor, truth: &InfluenceTensor, targets: &[usize], threshold: f64) -> EdgeScore {
    let pred = thresholded_support(estimate, targets, threshold);
    let real = thresholded_support(truth, targets, threshold);
    let hits = pred.iter().filter(|e| real.contains(e)).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hits / pred.len() as f64 };
    let recall = if real.is_empty() { 0.0 } else { hits / real.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    EdgeScore { precision, recall, f1, true_edges: real.len(), predicted_edges: pred.len() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    /// Penalty grid coefficients `c` of `c K sqrt(log M / T)`.
    pub coefficients: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Tune on the first seed only and reuse the selection for the others.
    pub tune_once: bool,
    /// Solver tolerance of the cross-validation fits.
    pub cv_tol: f64,
    pub fit: FitConfig,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            seeds: vec![1, 2, 3, 4, 5],
            threshold: 0.1,
            coefficients: vec![0.01, 0.03, 0.1],
            alpha_grid: vec![0.2, 0.5, 0.8],
            tune_once: true,
            cv_tol: 1e-5,
            fit: FitConfig { fit_intercepts: true, ..FitConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub seed: u64,
    pub ln_lambda: f64,
    pub ln_alpha: f64,
    pub mn_lambda: f64,
    /// Scores on mixed-node targets.
    pub ln_mixed: EdgeScore,
    pub mn_mixed: EdgeScore,
    /// Scores on focused-node targets.
    pub ln_focused: EdgeScore,
    pub mn_focused: EdgeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub config: MixtureConfig,
    pub rows: Vec<MixtureRow>,
}

impl MixtureReport {
    /// Seeds where the compositional fit wins on mixed targets and the
    /// categorical fit wins on focused targets.
    pub fn hypothesis_holds(&self) -> usize {
        self.rows.iter().filter(|r| r.ln_mixed.f1 > r.mn_mixed.f1 && r.mn_focused.f1 > r.ln_focused.f1).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "seed,ln_lambda,ln_alpha,mn_lambda,ln_f1_mixed,mn_f1_mixed,ln_f1_focused,mn_f1_focused,\
             ln_precision_mixed,ln_recall_mixed,mn_precision_mixed,mn_recall_mixed,\
             ln_precision_focused,ln_recall_focused,mn_precision_focused,mn_recall_focused\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6e},{},{:.6e},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.seed,
                r.ln_lambda,
                r.ln_alpha,
                r.mn_lambda,
                r.ln_mixed.f1,
                r.mn_mixed.f1,
                r.ln_focused.f1,
                r.mn_focused.f1,
                r.ln_mixed.precision,
                r.ln_mixed.recall,
                r.mn_mixed.precision,
                r.mn_mixed.recall,
                r.ln_focused.precision,
                r.ln_focused.recall,
                r.mn_focused.precision,
                r.mn_focused.recall
            );
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Tuned {
    ln_lambda: f64,
    ln_alpha: f64,
    mn_lambda: f64,
}

fn tune_mixture(spec: &MixtureSpec, cfg: &MixtureConfig, seed: u64) -> Result<Tuned> {
    let (panel, _) = simulate_mixture(spec, cfg.steps, InitSpec::default(), seed)?;
    let rounded = round_to_categorical(&panel);
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    let lambdas: Vec<f64> = cfg.coefficients.iter().map(|&c| empirical_lambda(c, k, m, cfg.steps)).collect();
    let mut cv = CvConfig::new(lambdas);
    cv.criterion = Criterion::PredictionError;
    let fit = FitConfig { tol: cfg.cv_tol, ..cfg.fit };
    let mn = cross_validate(&rounded, &Array2::zeros((m, k)), None, ModelKind::Multinomial, &cv, &fit)?;
    cv.alpha_grid = Some(cfg.alpha_grid.clone());
    let ln = cross_validate(&panel, &Array2::zeros((m, k - 1)), Some(&vec![0.0; m]), ModelKind::Joint, &cv, &fit)?;
    Ok(Tuned { ln_lambda: ln.lambda, ln_alpha: ln.alpha, mn_lambda: mn.lambda })
}

/// Compares compositional and categorical estimates of the mixture network
/// by edge recovery on each node population.
pub fn run_mixture_study(spec: &MixtureSpec, cfg: &MixtureConfig) -> Result<MixtureReport> {
    spec.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("no seeds".into()));
    }
    let truth = spec.true_relative_network();
    let shared = if cfg.tune_once { Some(tune_mixture(spec, cfg, cfg.seeds[0])?) } else { None };
    let rows = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let tuned = match &shared {
                Some(t) => *t,
                None => tune_mixture(spec, cfg, seed)?,
            };
            let (panel, _) = simulate_mixture(spec, cfg.steps, InitSpec::default(), seed)?;
            let rounded = round_to_categorical(&panel);
            let (m, k) = (panel.n_nodes(), panel.n_categories());
            let ln_cfg = FitConfig { alpha: tuned.ln_alpha, ..cfg.fit.with_lambda(tuned.ln_lambda) };
            let ln = fit_joint(&panel, &Array2::zeros((m, k - 1)), &vec![0.0; m], &ln_cfg)?;
            let mn = fit_multinomial(&rounded, &Array2::zeros((m, k)), &cfg.fit.with_lambda(tuned.mn_lambda))?;
            let mn_rel = absolute_to_relative(&mn.a)?;
            Ok(MixtureRow {
                seed,
                ln_lambda: tuned.ln_lambda,
                ln_alpha: tuned.ln_alpha,
                mn_lambda: tuned.mn_lambda,
                ln_mixed: edge_score(&ln.a, &truth, &spec.mixed, cfg.threshold),
                mn_mixed: edge_score(&mn_rel, &truth, &spec.mixed, cfg.threshold),
                ln_focused: edge_score(&ln.a, &truth, &spec.focused, cfg.threshold),
                mn_focused: edge_score(&mn_rel, &truth, &spec.focused, cfg.threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureReport { config: cfg.clone(), rows })
}
