//! Penalized estimators for the three model families.
//!
//! Every estimator splits into independent per-node problems that are
//! solved in parallel and reassembled into influence tensors.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{from_working, to_working, BernoulliNode, Design, Groups, JointNode, MultinomialNode, SquaredNode, NO_EVENT};
use super::prox::{minimize, SolveOptions, StepRule};
use crate::error::{Error, Result};
use crate::objective::{log_ratio_transform, LogRatioPanel};
use crate::tensor::{EventPanel, InfluenceTensor, PanelKind};

/// Penalty level and solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    /// Weight of the compositional loss in joint fits.
    pub alpha: f64,
    pub max_iters: usize,
    /// Relative objective change that stops the iterations.
    pub tol: f64,
    pub step: StepRule,
    /// Also estimate unpenalized per-node intercepts, added to the given ones.
    pub fit_intercepts: bool,
    pub accelerated: bool,
    /// Floor applied to compositional entries before taking log-ratios; 0 is strict.
    pub clip_eps: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            alpha: 0.4,
            max_iters: 5000,
            tol: 1e-8,
            step: StepRule::default(),
            fit_intercepts: false,
            accelerated: true,
            clip_eps: 0.0,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        match self.step {
            StepRule::Fixed(eta) if !(eta > 0.0) => {
                return Err(Error::InvalidParameter("fixed step must be positive".into()))
            }
            StepRule::Backtracking { init, shrink, min } if !(init > 0.0 && shrink > 0.0 && shrink < 1.0 && min > 0.0) => {
                return Err(Error::InvalidParameter("invalid backtracking parameters".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { max_iters: self.max_iters, tol: self.tol, step: self.step, accelerated: self.accelerated }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes: Vec<NodeReport>,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.nodes.iter().all(|n| n.converged)
    }

    pub fn max_iterations(&self) -> usize {
        self.nodes.iter().map(|n| n.iterations).max().unwrap_or(0)
    }

    /// Sum of the per-node composite objectives.
    pub fn objective(&self) -> f64 {
        self.nodes.iter().map(|n| n.objective).sum()
    }

    fn warn_if_unconverged(&self, what: &str) {
        let bad = self.nodes.iter().filter(|n| !n.converged).count();
        if bad > 0 {
            log::warn!("{what}: {bad} of {} node problems hit max_iters", self.nodes.len());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialFit {
    pub a: InfluenceTensor,
    pub nu: Array2<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstQFit {
    pub a: InfluenceTensor,
    pub nu: Array2<f64>,
    /// Empirical occurrence frequencies `T_m / T`.
    pub q: Array1<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub a: InfluenceTensor,
    pub b: InfluenceTensor,
    pub nu: Array2<f64>,
    pub eta: Array1<f64>,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliFit {
    pub b: InfluenceTensor,
    pub eta: Array1<f64>,
    pub diagnostics: Diagnostics,
}

pub(crate) fn all_transitions(panel: &EventPanel) -> Vec<usize> {
    (0..panel.n_steps()).collect()
}

fn check_panel(panel: &EventPanel, kind: PanelKind) -> Result<()> {
    if panel.kind() != kind {
        return Err(Error::InvalidParameter(format!("expected a {kind:?} panel, got {:?}", panel.kind())));
    }
    if panel.n_steps() < 2 {
        return Err(Error::Empty("panel needs at least 2 transitions".into()));
    }
    Ok(())
}

fn check_offsets(nu: &Array2<f64>, nodes: usize, cols: usize, name: &str) -> Result<()> {
    if nu.dim() != (nodes, cols) {
        return Err(Error::Dimension(format!("{name} is {:?}, expected ({nodes}, {cols})", nu.dim())));
    }
    Ok(())
}

fn check_times(times: &[usize], panel: &EventPanel) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty("no transitions to fit".into()));
    }
    if times.iter().any(|&t| t >= panel.n_steps()) {
        return Err(Error::InvalidParameter("transition index out of range".into()));
    }
    Ok(())
}

fn row_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn category_targets(panel: &EventPanel, times: &[usize], node: usize) -> Vec<u8> {
    times.iter().map(|&t| panel.category(t + 1, node).map_or(NO_EVENT, |c| c as u8)).collect()
}

pub(crate) fn event_targets(panel: &EventPanel, times: &[usize], node: usize) -> Vec<bool> {
    times.iter().map(|&t| panel.has_event(t + 1, node)).collect()
}

pub(crate) fn log_ratio_targets<'a>(lr: &'a LogRatioPanel, times: &[usize], node: usize) -> Vec<Option<&'a [f64]>> {
    times
        .iter()
        .map(|&t| {
            lr.mask[[t + 1, node]].then(|| {
                let row = lr.y.slice(ndarray::s![t + 1, node, ..]);
                row.to_slice().expect("log-ratio rows are contiguous")
            })
        })
        .collect()
}

pub fn fit_multinomial(panel: &EventPanel, nu: &Array2<f64>, cfg: &FitConfig) -> Result<MultinomialFit> {
    fit_multinomial_on(panel, &all_transitions(panel), nu, cfg, None)
}

/// Multinomial fit on the transitions `t -> t + 1` for `t` in `times`,
/// optionally warm-started from `init`.
pub fn fit_multinomial_on(
    panel: &EventPanel,
    times: &[usize],
    nu: &Array2<f64>,
    cfg: &FitConfig,
    init: Option<&MultinomialFit>,
) -> Result<MultinomialFit> {
    cfg.validate()?;
    check_panel(panel, PanelKind::Categorical)?;
    check_times(times, panel)?;
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    check_offsets(nu, m, k, "nu")?;
    let design = Design::from_panel(panel, times);
    let groups = Groups::for_node(m, k, k);
    let opts = cfg.solve_options();
    let results: Vec<_> = (0..m)
        .into_par_iter()
        .map(|node| {
            let targets = category_targets(panel, times, node);
            let offset = nu.row(node).to_vec();
            let loss = MultinomialNode { design: &design, targets: &targets, offset: &offset, intercept: cfg.fit_intercepts };
            let x0 = match init {
                Some(f) => {
                    let b = row_diff(&f.nu.row(node).to_vec(), &offset);
                    to_working(f.a.node_slice(node), k, cfg.fit_intercepts.then_some(b.as_slice()))
                }
                None => vec![0.0; (m * k + usize::from(cfg.fit_intercepts)) * k],
            };
            minimize(&loss, &groups, cfg.lambda, x0, &opts)
        })
        .collect();
    let mut a = InfluenceTensor::zeros(m, k, k);
    let mut nu_hat = nu.clone();
    let mut diagnostics = Diagnostics::default();
    for (node, sol) in results.into_iter().enumerate() {
        let b = from_working(&sol.x, k, a.node_slice_mut(node));
        if cfg.fit_intercepts {
            nu_hat.row_mut(node).iter_mut().zip(&b).for_each(|(v, d)| *v += d);
        }
        diagnostics.nodes.push(NodeReport { iterations: sol.iterations, converged: sol.converged, objective: sol.objective });
    }
    diagnostics.warn_if_unconverged("multinomial fit");
    Ok(MultinomialFit { a, nu: nu_hat, diagnostics })
}

pub fn fit_logistic_normal_const_q(panel: &EventPanel, nu: &Array2<f64>, cfg: &FitConfig) -> Result<ConstQFit> {
    check_panel(panel, PanelKind::Compositional)?;
    let lr = log_ratio_transform(panel, cfg.clip_eps)?;
    fit_const_q_on(panel, &lr, &all_transitions(panel), nu, cfg, None)
}

pub fn fit_const_q_on(
    panel: &EventPanel,
    lr: &LogRatioPanel,
    times: &[usize],
    nu: &Array2<f64>,
    cfg: &FitConfig,
    init: Option<&ConstQFit>,
) -> Result<ConstQFit> {
    cfg.validate()?;
    check_panel(panel, PanelKind::Compositional)?;
    check_times(times, panel)?;
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    check_offsets(nu, m, k - 1, "nu")?;
    let design = Design::from_panel(panel, times);
    let groups = Groups::for_node(m, k, k - 1);
    let opts = cfg.solve_options();
    let results: Vec<_> = (0..m)
        .into_par_iter()
        .map(|node| {
            let y = log_ratio_targets(lr, times, node);
            let offset = nu.row(node).to_vec();
            let loss = SquaredNode::new(&design, &y, &offset, cfg.fit_intercepts);
            let x0 = match init {
                Some(f) => {
                    let b = row_diff(&f.nu.row(node).to_vec(), &offset);
                    to_working(f.a.node_slice(node), k - 1, cfg.fit_intercepts.then_some(b.as_slice()))
                }
                None => vec![0.0; (m * k + usize::from(cfg.fit_intercepts)) * (k - 1)],
            };
            minimize(&loss, &groups, cfg.lambda, x0, &opts)
        })
        .collect();
    let mut a = InfluenceTensor::zeros(m, k - 1, k);
    let mut nu_hat = nu.clone();
    let mut diagnostics = Diagnostics::default();
    for (node, sol) in results.into_iter().enumerate() {
        let b = from_working(&sol.x, k - 1, a.node_slice_mut(node));
        if cfg.fit_intercepts {
            nu_hat.row_mut(node).iter_mut().zip(&b).for_each(|(v, d)| *v += d);
        }
        diagnostics.nodes.push(NodeReport { iterations: sol.iterations, converged: sol.converged, objective: sol.objective });
    }
    diagnostics.warn_if_unconverged("logistic-normal fit");
    let q = times_frequencies(panel, times);
    Ok(ConstQFit { a, nu: nu_hat, q, diagnostics })
}

/// Fraction of the given transitions whose target row holds an event.
fn times_frequencies(panel: &EventPanel, times: &[usize]) -> Array1<f64> {
    let n = times.len().max(1) as f64;
    Array1::from_iter(
        (0..panel.n_nodes()).map(|node| times.iter().filter(|&&t| panel.has_event(t + 1, node)).count() as f64 / n),
    )
}

pub fn fit_bernoulli(panel: &EventPanel, eta: &[f64], cfg: &FitConfig) -> Result<BernoulliFit> {
    fit_bernoulli_on(panel, &all_transitions(panel), eta, cfg, None)
}

pub fn fit_bernoulli_on(
    panel: &EventPanel,
    times: &[usize],
    eta: &[f64],
    cfg: &FitConfig,
    init: Option<&BernoulliFit>,
) -> Result<BernoulliFit> {
    cfg.validate()?;
    if panel.n_steps() < 2 {
        return Err(Error::Empty("panel needs at least 2 transitions".into()));
    }
    check_times(times, panel)?;
    let design = Design::from_panel(panel, times);
    let (b, eta, diagnostics) = fit_occurrence_design(panel, &design, times, eta, cfg, init.map(|f| (&f.b, &f.eta)))?;
    Ok(BernoulliFit { b, eta, diagnostics })
}

/// Occurrence network on the aggregated covariates `1{X^t_m != 0}`, a
/// `(M, 1, M, 1)` tensor.
pub fn fit_occurrence_network(panel: &EventPanel, eta: &[f64], cfg: &FitConfig) -> Result<BernoulliFit> {
    cfg.validate()?;
    if panel.n_steps() < 2 {
        return Err(Error::Empty("panel needs at least 2 transitions".into()));
    }
    let times = all_transitions(panel);
    let design = Design::occurrence_from_panel(panel, &times);
    let (b, eta, diagnostics) = fit_occurrence_design(panel, &design, &times, eta, cfg, None)?;
    Ok(BernoulliFit { b, eta, diagnostics })
}

fn fit_occurrence_design(
    panel: &EventPanel,
    design: &Design,
    times: &[usize],
    eta: &[f64],
    cfg: &FitConfig,
    init: Option<(&InfluenceTensor, &Array1<f64>)>,
) -> Result<(InfluenceTensor, Array1<f64>, Diagnostics)> {
    let m = panel.n_nodes();
    if eta.len() != m {
        return Err(Error::Dimension(format!("eta has {} entries, M = {m}", eta.len())));
    }
    let k_in = design.n_features() / m;
    let groups = Groups::for_node(m, k_in, 1);
    let opts = cfg.solve_options();
    let results: Vec<_> = (0..m)
        .into_par_iter()
        .map(|node| {
            let targets = event_targets(panel, times, node);
            let loss = BernoulliNode { design, targets: &targets, offset: eta[node], intercept: cfg.fit_intercepts };
            let mut x0 = vec![0.0; m * k_in + usize::from(cfg.fit_intercepts)];
            if let Some((b, e)) = init {
                x0[..m * k_in].copy_from_slice(b.node_slice(node));
                if cfg.fit_intercepts {
                    x0[m * k_in] = e[node] - eta[node];
                }
            }
            minimize(&loss, &groups, cfg.lambda, x0, &opts)
        })
        .collect();
    let mut b = InfluenceTensor::zeros(m, 1, k_in);
    let mut eta_hat = Array1::from(eta.to_vec());
    let mut diagnostics = Diagnostics::default();
    for (node, sol) in results.into_iter().enumerate() {
        b.node_slice_mut(node).copy_from_slice(&sol.x[..m * k_in]);
        if cfg.fit_intercepts {
            eta_hat[node] += sol.x[m * k_in];
        }
        diagnostics.nodes.push(NodeReport { iterations: sol.iterations, converged: sol.converged, objective: sol.objective });
    }
    diagnostics.warn_if_unconverged("occurrence fit");
    Ok((b, eta_hat, diagnostics))
}

/// Minimizes `alpha L^LN(A) + (1 - alpha) L^Bern(B) + lambda R_alpha(A, B)`.
pub fn fit_joint(panel: &EventPanel, nu: &Array2<f64>, eta: &[f64], cfg: &FitConfig) -> Result<JointFit> {
    check_panel(panel, PanelKind::Compositional)?;
    let lr = log_ratio_transform(panel, cfg.clip_eps)?;
    fit_joint_on(panel, &lr, &all_transitions(panel), nu, eta, cfg, None)
}

pub fn fit_joint_on(
    panel: &EventPanel,
    lr: &LogRatioPanel,
    times: &[usize],
    nu: &Array2<f64>,
    eta: &[f64],
    cfg: &FitConfig,
    init: Option<&JointFit>,
) -> Result<JointFit> {
    cfg.validate()?;
    check_panel(panel, PanelKind::Compositional)?;
    check_times(times, panel)?;
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    check_offsets(nu, m, k - 1, "nu")?;
    if eta.len() != m {
        return Err(Error::Dimension(format!("eta has {} entries, M = {m}", eta.len())));
    }
    let alpha = cfg.alpha;
    if alpha == 1.0 {
        let warm = init.map(|f| ConstQFit { a: f.a.clone(), nu: f.nu.clone(), q: Array1::zeros(m), diagnostics: Diagnostics::default() });
        let fit = fit_const_q_on(panel, lr, times, nu, cfg, warm.as_ref())?;
        return Ok(JointFit {
            a: fit.a,
            b: InfluenceTensor::zeros(m, 1, k),
            nu: fit.nu,
            eta: Array1::from(eta.to_vec()),
            alpha,
            diagnostics: fit.diagnostics,
        });
    }
    if alpha == 0.0 {
        let design = Design::from_panel(panel, times);
        let (b, eta_hat, diagnostics) = fit_occurrence_design(panel, &design, times, eta, cfg, init.map(|f| (&f.b, &f.eta)))?;
        return Ok(JointFit { a: InfluenceTensor::zeros(m, k - 1, k), b, nu: nu.clone(), eta: eta_hat, alpha, diagnostics });
    }

    let design = Design::from_panel(panel, times);
    let groups = Groups::for_node(m, k, k);
    let opts = cfg.solve_options();
    let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let cols = m * k + usize::from(cfg.fit_intercepts);
    let results: Vec<_> = (0..m)
        .into_par_iter()
        .map(|node| {
            let y = log_ratio_targets(lr, times, node);
            let offset = nu.row(node).to_vec();
            let squared = SquaredNode::new(&design, &y, &offset, cfg.fit_intercepts);
            let targets = event_targets(panel, times, node);
            let bernoulli = BernoulliNode { design: &design, targets: &targets, offset: eta[node], intercept: cfg.fit_intercepts };
            let loss = JointNode { squared: &squared, bernoulli, alpha };
            let mut x0 = vec![0.0; cols * k];
            if let Some(f) = init {
                let da = row_diff(&f.nu.row(node).to_vec(), &offset);
                let wa = to_working(f.a.node_slice(node), k - 1, cfg.fit_intercepts.then_some(da.as_slice()));
                let mut wb = f.b.node_slice(node).to_vec();
                if cfg.fit_intercepts {
                    wb.push(f.eta[node] - eta[node]);
                }
                for j in 0..cols {
                    for r in 0..k - 1 {
                        x0[j * k + r] = sa * wa[j * (k - 1) + r];
                    }
                    x0[j * k + k - 1] = sb * wb[j];
                }
            }
            minimize(&loss, &groups, cfg.lambda, x0, &opts)
        })
        .collect();
    let mut a = InfluenceTensor::zeros(m, k - 1, k);
    let mut b = InfluenceTensor::zeros(m, 1, k);
    let mut nu_hat = nu.clone();
    let mut eta_hat = Array1::from(eta.to_vec());
    let mut diagnostics = Diagnostics::default();
    for (node, sol) in results.into_iter().enumerate() {
        let mut wa = vec![0.0; cols * (k - 1)];
        let mut wb = vec![0.0; cols];
        for j in 0..cols {
            for r in 0..k - 1 {
                wa[j * (k - 1) + r] = sol.x[j * k + r] / sa;
            }
            wb[j] = sol.x[j * k + k - 1] / sb;
        }
        let da = from_working(&wa, k - 1, a.node_slice_mut(node));
        b.node_slice_mut(node).copy_from_slice(&wb[..m * k]);
        if cfg.fit_intercepts {
            nu_hat.row_mut(node).iter_mut().zip(&da).for_each(|(v, d)| *v += d);
            eta_hat[node] += wb[m * k];
        }
        diagnostics.nodes.push(NodeReport { iterations: sol.iterations, converged: sol.converged, objective: sol.objective });
    }
    diagnostics.warn_if_unconverged("joint fit");
    Ok(JointFit { a, b, nu: nu_hat, eta: eta_hat, alpha, diagnostics })
}
