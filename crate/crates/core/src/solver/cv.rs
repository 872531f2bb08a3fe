//! Rolling-window cross-validation over penalty (and mixing) grids.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{
    category_targets, event_targets, fit_const_q_on, fit_joint_on, fit_multinomial_on, log_ratio_targets,
    ConstQFit, FitConfig, JointFit, MultinomialFit,
};
use super::problem::{to_working, BernoulliNode, Design, MultinomialNode, SmoothLoss, SquaredNode};
use crate::error::{Error, Result};
use crate::inference::{prediction_error_on, FittedModel};
use crate::objective::{log_ratio_transform, LogRatioPanel};
use crate::tensor::{EventPanel, PanelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Multinomial,
    ConstQ,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// Average negative log-likelihood on the held-out transitions.
    HeldOutLoss,
    /// One-step-ahead prediction error on the held-out transitions.
    PredictionError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub window_frac: f64,
    pub offset_frac: f64,
    pub criterion: Criterion,
}

impl CvConfig {
    pub fn new(lambda_grid: Vec<f64>) -> Self {
        Self { lambda_grid, alpha_grid: None, folds: 5, window_frac: 0.8, offset_frac: 0.05, criterion: Criterion::HeldOutLoss }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("lambda grid entries must be finite and >= 0".into()));
        }
        if let Some(g) = &self.alpha_grid {
            if g.is_empty() || g.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::InvalidParameter("alpha grid must be nonempty with entries in [0, 1]".into()));
            }
        }
        if self.folds == 0 || !(self.window_frac > 0.0) || self.offset_frac < 0.0 {
            return Err(Error::InvalidParameter("invalid fold layout".into()));
        }
        if self.window_frac + (self.folds - 1) as f64 * self.offset_frac > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("folds extend past the end of the panel".into()));
        }
        Ok(())
    }

    /// `(start, len)` of each training window of transitions for `steps` transitions.
    pub fn windows(&self, steps: usize) -> Vec<(usize, usize)> {
        let len = (self.window_frac * steps as f64).round() as usize;
        (0..self.folds)
            .map(|i| {
                let start = (self.offset_frac * steps as f64 * i as f64).round() as usize;
                (start, len.min(steps - start.min(steps)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub alpha: f64,
    /// Mean held-out score over the folds used.
    pub score: f64,
    pub folds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub alpha: f64,
    pub table: Vec<CvRow>,
}

enum Fitted {
    Mn(MultinomialFit),
    Cq(ConstQFit),
    Joint(JointFit),
}

struct Data<'a> {
    panel: &'a EventPanel,
    lr: Option<LogRatioPanel>,
    nu: &'a Array2<f64>,
    eta: &'a [f64],
    kind: ModelKind,
}

impl Data<'_> {
    fn fit(&self, times: &[usize], cfg: &FitConfig, warm: Option<&Fitted>) -> Result<Fitted> {
        Ok(match self.kind {
            ModelKind::Multinomial => {
                let w = match warm {
                    Some(Fitted::Mn(f)) => Some(f),
                    _ => None,
                };
                Fitted::Mn(fit_multinomial_on(self.panel, times, self.nu, cfg, w)?)
            }
            ModelKind::ConstQ => {
                let w = match warm {
                    Some(Fitted::Cq(f)) => Some(f),
                    _ => None,
                };
                Fitted::Cq(fit_const_q_on(self.panel, self.lr.as_ref().unwrap(), times, self.nu, cfg, w)?)
            }
            ModelKind::Joint => {
                let w = match warm {
                    Some(Fitted::Joint(f)) => Some(f),
                    _ => None,
                };
                Fitted::Joint(fit_joint_on(self.panel, self.lr.as_ref().unwrap(), times, self.nu, self.eta, cfg, w)?)
            }
        })
    }

    fn degenerate(&self, times: &[usize]) -> bool {
        let m = self.panel.n_nodes();
        !times.iter().any(|&t| (0..m).any(|node| self.panel.has_event(t + 1, node)))
    }

    fn score(&self, fitted: &Fitted, times: &[usize], criterion: Criterion) -> f64 {
        match criterion {
            Criterion::PredictionError => {
                let model = match fitted {
                    Fitted::Mn(f) => FittedModel::Multinomial { a: f.a.clone(), nu: f.nu.clone() },
                    Fitted::Cq(f) => FittedModel::ConstQ { a: f.a.clone(), nu: f.nu.clone(), q: f.q.clone() },
                    Fitted::Joint(f) => FittedModel::Joint { a: f.a.clone(), nu: f.nu.clone(), b: f.b.clone(), eta: f.eta.clone() },
                };
                prediction_error_on(&model, self.panel, times)
            }
            Criterion::HeldOutLoss => self.held_out_loss(fitted, times),
        }
    }

    fn held_out_loss(&self, fitted: &Fitted, times: &[usize]) -> f64 {
        let panel = self.panel;
        let (m, k) = (panel.n_nodes(), panel.n_categories());
        let design = Design::from_panel(panel, times);
        let squared = |a: &crate::tensor::InfluenceTensor, nu: &Array2<f64>, node: usize| {
            let y = log_ratio_targets(self.lr.as_ref().unwrap(), times, node);
            let offset = nu.row(node).to_vec();
            SquaredNode::new(&design, &y, &offset, false).value(&to_working(a.node_slice(node), k - 1, None))
        };
        (0..m)
            .map(|node| match fitted {
                Fitted::Mn(f) => {
                    let targets = category_targets(panel, times, node);
                    let offset = f.nu.row(node).to_vec();
                    let loss = MultinomialNode { design: &design, targets: &targets, offset: &offset, intercept: false };
                    loss.value(&to_working(f.a.node_slice(node), k, None))
                }
                Fitted::Cq(f) => squared(&f.a, &f.nu, node),
                Fitted::Joint(f) => {
                    let targets = event_targets(panel, times, node);
                    let bern = BernoulliNode { design: &design, targets: &targets, offset: f.eta[node], intercept: false };
                    squared(&f.a, &f.nu, node) + bern.value(f.b.node_slice(node))
                }
            })
            .sum()
    }
}

/// Selects `(lambda, alpha)` by rolling-window cross-validation.
///
/// Each fold trains on a window of consecutive transitions and scores the
/// rest. The penalty path is traversed from the largest `lambda` down with
/// warm starts. Ties go to the larger `lambda`.
pub fn cross_validate(
    panel: &EventPanel,
    nu: &Array2<f64>,
    eta: Option<&[f64]>,
    kind: ModelKind,
    cv: &CvConfig,
    template: &FitConfig,
) -> Result<CvResult> {
    cv.validate()?;
    template.validate()?;
    let expected = if kind == ModelKind::Multinomial { PanelKind::Categorical } else { PanelKind::Compositional };
    if panel.kind() != expected {
        return Err(Error::InvalidParameter(format!("{kind:?} needs a {expected:?} panel")));
    }
    let zeros = vec![0.0; panel.n_nodes()];
    let eta = match (kind, eta) {
        (ModelKind::Joint, Some(e)) => e,
        (ModelKind::Joint, None) => return Err(Error::InvalidParameter("joint cross-validation needs eta".into())),
        _ => &zeros,
    };
    let lr = match kind {
        ModelKind::Multinomial => None,
        _ => Some(log_ratio_transform(panel, template.clip_eps)?),
    };
    let data = Data { panel, lr, nu, eta, kind };

    let mut lambdas = cv.lambda_grid.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();
    let alphas = match (&cv.alpha_grid, kind) {
        (Some(g), ModelKind::Joint) => g.clone(),
        _ => vec![template.alpha],
    };
    let steps = panel.n_steps();
    let windows = cv.windows(steps);

    let jobs: Vec<(usize, usize)> = (0..alphas.len()).flat_map(|ia| (0..windows.len()).map(move |f| (ia, f))).collect();
    let results: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(ia, f)| {
            let (start, len) = windows[f];
            let train: Vec<usize> = (start..start + len).collect();
            let held: Vec<usize> = (0..start).chain(start + len..steps).collect();
            if train.len() < 2 || held.is_empty() || data.degenerate(&train) || data.degenerate(&held) {
                log::warn!("cross-validation fold {} skipped: no events", f + 1);
                return Ok(None);
            }
            let mut cfg = *template;
            cfg.alpha = alphas[ia];
            let mut warm: Option<Fitted> = None;
            let mut scores = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                cfg.lambda = lambda;
                let fitted = data.fit(&train, &cfg, warm.as_ref())?;
                scores.push(data.score(&fitted, &held, cv.criterion));
                warm = Some(fitted);
            }
            Ok(Some(scores))
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::new();
    for (ia, &alpha) in alphas.iter().enumerate() {
        let mut sums = vec![0.0; lambdas.len()];
        let mut used = 0;
        for f in 0..windows.len() {
            if let Some(s) = &results[ia * windows.len() + f] {
                used += 1;
                sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
        }
        if used == 0 {
            return Err(Error::Empty("every cross-validation fold was degenerate".into()));
        }
        for (il, &lambda) in lambdas.iter().enumerate() {
            table.push(CvRow { lambda, alpha, score: sums[il] / used as f64, folds_used: used });
        }
    }
    // table is ordered by alpha, then decreasing lambda: the first strict minimum wins
    let best = table
        .iter()
        .fold(None::<&CvRow>, |best, row| match best {
            Some(b) if row.score >= b.score => Some(b),
            _ => Some(row),
        })
        .expect("table is nonempty");
    Ok(CvResult { lambda: best.lambda, alpha: best.alpha, table })
}
