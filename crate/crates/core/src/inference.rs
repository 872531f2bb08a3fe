//! Prediction, baselines and network post-processing.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{log_ratio_transform, LogRatioPanel};
use crate::simulate::{additive_logistic, logistic, multinomial_probabilities};
use crate::solver::{fit_occurrence_network, FitConfig};
use crate::tensor::{EventPanel, InfluenceTensor, PanelKind};

/// One-step-ahead predictor of `X^{t+1}_m` from the frame `X^t`.
pub trait Predictor: Sync {
    fn predict(&self, frame: ArrayView2<f64>, node: usize) -> Vec<f64>;
}

/// Outcome probabilities `(p_1, .., p_K, p_none)` and the predicted row.
///
/// The prediction is the most likely outcome; ties go to "no event", then
/// to the lowest category.
pub fn predict_multinomial(a: &InfluenceTensor, nu: &Array2<f64>, frame: ArrayView2<f64>, node: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mu = a.intensity(node, frame);
    mu.iter_mut().zip(nu.row(node)).for_each(|(x, n)| *x += n);
    let p = multinomial_probabilities(&mu);
    let k = mu.len();
    (p.clone(), argmax_outcome(&p, k))
}

fn argmax_outcome(p: &[f64], k: usize) -> Vec<f64> {
    let mut best = k;
    for c in 0..k {
        if p[c] > p[best] {
            best = c;
        }
    }
    let mut x = vec![0.0; k];
    if best < k {
        x[best] = 1.0;
    }
    x
}

/// `q Z`, with `Z` the additive-logistic image of the expected log-ratios.
pub fn predict_logistic_normal(a: &InfluenceTensor, nu: &Array2<f64>, q: f64, frame: ArrayView2<f64>, node: usize) -> Vec<f64> {
    let mut y = a.intensity(node, frame);
    y.iter_mut().zip(nu.row(node)).for_each(|(x, n)| *x += n);
    additive_logistic(&y).into_iter().map(|z| q * z).collect()
}

/// A fitted network model ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Multinomial { a: InfluenceTensor, nu: Array2<f64> },
    /// Compositional network with constant occurrence probabilities `q`.
    ConstQ { a: InfluenceTensor, nu: Array2<f64>, q: Array1<f64> },
    /// Compositional network with occurrence network `b` and intercepts `eta`.
    Joint { a: InfluenceTensor, nu: Array2<f64>, b: InfluenceTensor, eta: Array1<f64> },
}

impl FittedModel {
    pub fn n_nodes(&self) -> usize {
        match self {
            FittedModel::Multinomial { a, .. } | FittedModel::ConstQ { a, .. } | FittedModel::Joint { a, .. } => a.n_nodes(),
        }
    }

    pub fn n_categories(&self) -> usize {
        match self {
            FittedModel::Multinomial { a, .. } | FittedModel::ConstQ { a, .. } | FittedModel::Joint { a, .. } => a.k_in(),
        }
    }

    pub fn panel_kind(&self) -> PanelKind {
        match self {
            FittedModel::Multinomial { .. } => PanelKind::Categorical,
            _ => PanelKind::Compositional,
        }
    }

    /// Occurrence probability of `node` given the frame, for compositional models.
    pub fn occurrence_probability(&self, frame: ArrayView2<f64>, node: usize) -> Option<f64> {
        match self {
            FittedModel::Multinomial { .. } => None,
            FittedModel::ConstQ { q, .. } => Some(q[node]),
            FittedModel::Joint { b, eta, .. } => Some(logistic(b.intensity(node, frame)[0] + eta[node])),
        }
    }
}

impl Predictor for FittedModel {
    fn predict(&self, frame: ArrayView2<f64>, node: usize) -> Vec<f64> {
        match self {
            FittedModel::Multinomial { a, nu } => predict_multinomial(a, nu, frame, node).1,
            FittedModel::ConstQ { a, nu, .. } | FittedModel::Joint { a, nu, .. } => {
                let q = self.occurrence_probability(frame, node).unwrap();
                predict_logistic_normal(a, nu, q, frame, node)
            }
        }
    }
}

/// Mean of `||X^{t+1}_m - X^hat||^2` over nodes and the transitions `times`.
pub fn prediction_error_on(model: &dyn Predictor, panel: &EventPanel, times: &[usize]) -> f64 {
    let m = panel.n_nodes();
    let mut total = 0.0;
    for &t in times {
        let frame = panel.frame(t);
        for node in 0..m {
            let x_hat = model.predict(frame, node);
            total += panel.row(t + 1, node).iter().zip(&x_hat).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    total / (times.len().max(1) * m) as f64
}

/// Prediction error over the time points `holdout_start..=T`, each predicted
/// from the observed previous frame.
pub fn prediction_error(model: &dyn Predictor, panel: &EventPanel, holdout_start: usize) -> Result<f64> {
    let steps = panel.n_steps();
    if holdout_start == 0 || holdout_start > steps {
        return Err(Error::InvalidParameter(format!("holdout start {holdout_start} outside 1..={steps}")));
    }
    let times: Vec<usize> = (holdout_start - 1..steps).collect();
    Ok(prediction_error_on(model, panel, &times))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Constant occurrence and category distributions.
    ConstantProcess,
    /// Occurrence driven by past occurrences only; constant category distribution.
    ContextIndependent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OccurrenceModel {
    Constant(Array1<f64>),
    /// `P(event) = logistic(sum_m' b[m, m'] 1{X_m' != 0} + eta_m)`.
    Network { b: InfluenceTensor, eta: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub family: PanelKind,
    pub occurrence: OccurrenceModel,
    /// Categorical: category probabilities given an event, `(M, K)`.
    /// Compositional: mean log-ratios over event rows, `(M, K-1)`.
    pub categories: Array2<f64>,
}

impl BaselineModel {
    fn occurrence(&self, frame: ArrayView2<f64>, node: usize) -> f64 {
        match &self.occurrence {
            OccurrenceModel::Constant(q) => q[node],
            OccurrenceModel::Network { b, eta } => {
                let z: f64 = (0..frame.nrows())
                    .filter(|&src| frame.row(src).iter().any(|&v| v != 0.0))
                    .map(|src| b.data()[[node, 0, src, 0]])
                    .sum();
                logistic(z + eta[node])
            }
        }
    }

    /// Outcome probabilities `(p_1, .., p_K, p_none)` for categorical baselines.
    pub fn probabilities(&self, frame: ArrayView2<f64>, node: usize) -> Vec<f64> {
        let q = self.occurrence(frame, node);
        let mut p: Vec<f64> = self.categories.row(node).iter().map(|pi| q * pi).collect();
        p.push(1.0 - q);
        p
    }
}

impl Predictor for BaselineModel {
    fn predict(&self, frame: ArrayView2<f64>, node: usize) -> Vec<f64> {
        match self.family {
            PanelKind::Categorical => {
                let p = self.probabilities(frame, node);
                argmax_outcome(&p, p.len() - 1)
            }
            PanelKind::Compositional => {
                let q = self.occurrence(frame, node);
                let y = self.categories.row(node).to_vec();
                additive_logistic(&y).into_iter().map(|z| q * z).collect()
            }
        }
    }
}

/// Penalty for the occurrence network of the context-independent baseline.
pub fn default_baseline_lambda(nodes: usize, steps: usize) -> f64 {
    0.1 * ((nodes as f64).ln().max(1.0) / steps as f64).sqrt()
}

/// Fits a baseline. `lambda` is the occurrence-network penalty of the
/// context-independent baseline (default [`default_baseline_lambda`]).
pub fn fit_baseline(panel: &EventPanel, kind: BaselineKind, lambda: Option<f64>, clip_eps: f64) -> Result<BaselineModel> {
    let steps = panel.n_steps();
    if steps == 0 {
        return Err(Error::Empty("panel has no transitions".into()));
    }
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    let categories = match panel.kind() {
        PanelKind::Categorical => {
            let mut pi = Array2::zeros((m, k));
            for node in 0..m {
                let mut counts = vec![0usize; k];
                for t in 1..=steps {
                    if let Some(c) = panel.category(t, node) {
                        counts[c] += 1;
                    }
                }
                let total: usize = counts.iter().sum();
                for c in 0..k {
                    pi[[node, c]] = if total == 0 { 1.0 / k as f64 } else { counts[c] as f64 / total as f64 };
                }
            }
            pi
        }
        PanelKind::Compositional => mean_log_ratios(panel, &log_ratio_transform(panel, clip_eps)?),
    };
    let occurrence = match kind {
        BaselineKind::ConstantProcess => OccurrenceModel::Constant(Array1::from(panel.event_frequencies())),
        BaselineKind::ContextIndependent => {
            let cfg = FitConfig {
                lambda: lambda.unwrap_or_else(|| default_baseline_lambda(m, steps)),
                fit_intercepts: true,
                ..FitConfig::default()
            };
            let fit = fit_occurrence_network(panel, &vec![0.0; m], &cfg)?;
            OccurrenceModel::Network { b: fit.b, eta: fit.eta }
        }
    };
    Ok(BaselineModel { kind, family: panel.kind(), occurrence, categories })
}

/// Mean log-ratio per node over event rows `t = 1..T`.
fn mean_log_ratios(panel: &EventPanel, lr: &LogRatioPanel) -> Array2<f64> {
    let (m, kk) = (panel.n_nodes(), panel.n_categories() - 1);
    let mut out = Array2::zeros((m, kk));
    for node in 0..m {
        let mut n = 0usize;
        for t in 1..panel.t_len() {
            if lr.mask[[t, node]] {
                n += 1;
                for c in 0..kk {
                    out[[node, c]] += lr.y[[t, node, c]];
                }
            }
        }
        if n > 0 {
            out.row_mut(node).mapv_inplace(|v| v / n as f64);
        }
    }
    out
}

/// `A_rel[m, k] = A_abs[m, k] - A_abs[m, K]` for `k < K`.
pub fn absolute_to_relative(a_abs: &InfluenceTensor) -> Result<InfluenceTensor> {
    let (m, k, m2, k_in) = a_abs.dims();
    if k < 2 {
        return Err(Error::InvalidParameter("need at least 2 output categories".into()));
    }
    let d = a_abs.data();
    let base = d.slice(s![.., k - 1..k, .., ..]);
    let rel = &d.slice(s![.., ..k - 1, .., ..]) - &base;
    debug_assert_eq!(rel.dim(), (m, k - 1, m2, k_in));
    InfluenceTensor::new(rel)
}

/// A relative network expressed against a new baseline category.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebased {
    pub a: InfluenceTensor,
    pub nu: Array2<f64>,
    /// Original category index of each output row.
    pub labels: Vec<usize>,
    /// Original index of the new baseline category.
    pub baseline: usize,
}

/// Moves the baseline from the last category to category `l` (0-based).
///
/// Rows `k != l` become `A_k - A_l`; row `l` becomes `-A_l` and now stands
/// for the old baseline. Applying the same `l` again restores the input.
pub fn rebase(a: &InfluenceTensor, nu: &Array2<f64>, l: usize) -> Result<Rebased> {
    let (m, kk, _, _) = a.dims();
    if l >= kk {
        return Err(Error::InvalidParameter(format!("category {l} is already the baseline or out of range")));
    }
    if nu.dim() != (m, kk) {
        return Err(Error::Dimension(format!("nu is {:?}, expected ({m}, {kk})", nu.dim())));
    }
    let mut out = a.data().clone();
    let al = a.data().slice(s![.., l..l + 1, .., ..]).to_owned();
    for k in 0..kk {
        let mut row = out.slice_mut(s![.., k..k + 1, .., ..]);
        if k == l {
            row.assign(&(-&al));
        } else {
            row -= &al;
        }
    }
    let mut nu_out = nu.clone();
    for node in 0..m {
        let base = nu[[node, l]];
        for k in 0..kk {
            nu_out[[node, k]] = if k == l { -base } else { nu[[node, k]] - base };
        }
    }
    let mut labels: Vec<usize> = (0..kk).collect();
    labels[l] = kk;
    Ok(Rebased { a: InfluenceTensor::new(out)?, nu: nu_out, labels, baseline: l })
}

/// Log-ratios against category `l` instead of the last one, in the row
/// order produced by [`rebase`].
pub fn rebase_log_ratios(lr: &LogRatioPanel, l: usize) -> Result<LogRatioPanel> {
    let kk = lr.y.dim().2;
    if l >= kk {
        return Err(Error::InvalidParameter(format!("category {l} is already the baseline or out of range")));
    }
    let mut y = lr.y.clone();
    let yl = lr.y.slice(s![.., .., l]).to_owned();
    for k in 0..kk {
        let mut col = y.slice_mut(s![.., .., k]);
        if k == l {
            col.assign(&(-&yl));
        } else {
            col -= &yl;
        }
    }
    Ok(LogRatioPanel { y, mask: lr.mask.clone() })
}

/// Covariance of the rebased log-ratios, `P Sigma P^T`.
pub fn rebase_covariance(sigma: &Array2<f64>, l: usize) -> Result<Array2<f64>> {
    let kk = sigma.nrows();
    if l >= kk || sigma.ncols() != kk {
        return Err(Error::InvalidParameter("bad covariance or baseline index".into()));
    }
    let mut p = Array2::<f64>::eye(kk);
    for k in 0..kk {
        p[[k, l]] = -1.0;
    }
    Ok(p.dot(sigma).dot(&p.t()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Absolute,
    Relative,
    Occurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub k_in: usize,
    /// Output category; `None` for occurrence edges.
    pub k_out: Option<usize>,
    pub raw: f64,
    /// `raw / max |entry|`, in `[-1, 1]`.
    pub weight: f64,
    pub stimulatory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub mode: EdgeMode,
    pub threshold: f64,
    /// Largest absolute entry of the network.
    pub scale: f64,
    pub edges: Vec<Edge>,
}

/// Entries whose magnitude relative to the largest one exceeds `threshold`.
pub fn extract_edges(net: &InfluenceTensor, threshold: f64, mode: EdgeMode) -> Result<EdgeList> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1)")));
    }
    if mode == EdgeMode::Occurrence && net.k_out() != 1 {
        return Err(Error::Dimension("occurrence networks have one output row".into()));
    }
    let scale = net.max_abs();
    let mut edges = Vec::new();
    if scale > 0.0 {
        for ((target, k_out, source, k_in), &raw) in net.data().indexed_iter() {
            let weight = raw / scale;
            if weight.abs() > threshold {
                edges.push(Edge {
                    source,
                    target,
                    k_in,
                    k_out: (mode != EdgeMode::Occurrence).then_some(k_out),
                    raw,
                    weight,
                    stimulatory: raw > 0.0,
                });
            }
        }
    }
    Ok(EdgeList { mode, threshold, scale, edges })
}

impl EdgeList {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Graphviz digraph; solid edges are stimulatory, dashed inhibitory,
    /// pen width proportional to the normalized weight.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph network {\n");
        for e in &self.edges {
            let label = match e.k_out {
                Some(ko) => format!("{}->{}", e.k_in + 1, ko + 1),
                None => format!("{}", e.k_in + 1),
            };
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{label}\", raw={}, weight={:.6}, penwidth={:.3}, style={}];",
                e.source + 1,
                e.target + 1,
                e.raw,
                e.weight,
                3.0 * e.weight.abs(),
                if e.stimulatory { "solid" } else { "dashed" }
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Support of the `(m, m')` groups: `true` where the group is nonzero after
/// normalizing by the largest absolute entry and thresholding.
pub fn group_support(net: &InfluenceTensor, threshold: f64) -> Array2<bool> {
    let m = net.n_nodes();
    let scale = net.max_abs();
    let d: &Array4<f64> = net.data();
    Array2::from_shape_fn((m, m), |(i, j)| {
        scale > 0.0 && d.slice(s![i, .., j, ..]).iter().any(|v| v.abs() / scale > threshold)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{dynamic_preset, simulate_logistic_normal, InitSpec};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(m: usize, ko: usize, ki: usize, seed: u64) -> InfluenceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        InfluenceTensor::from_flat(m, ko, ki, (0..m * ko * m * ki).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn onehot_frame(m: usize, k: usize, cats: &[Option<usize>]) -> Array2<f64> {
        let mut f = Array2::zeros((m, k));
        for (node, c) in cats.iter().enumerate() {
            if let Some(c) = c {
                f[[node, *c]] = 1.0;
            }
        }
        f
    }

    #[test]
    fn null_model_predicts_no_event() {
        let a = InfluenceTensor::zeros(2, 3, 3);
        let nu = Array2::zeros((2, 3));
        let f = onehot_frame(2, 3, &[Some(0), None]);
        let (p, x) = predict_multinomial(&a, &nu, f.view(), 0);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn large_intercept_predicts_that_category() {
        let a = InfluenceTensor::zeros(1, 3, 3);
        let nu = Array2::from_shape_vec((1, 3), vec![10.0, 0.0, 0.0]).unwrap();
        let f = onehot_frame(1, 3, &[None]);
        assert_eq!(predict_multinomial(&a, &nu, f.view(), 0).1, vec![1.0, 0.0, 0.0]);
        // ties between categories go to the lower index
        let nu = Array2::from_shape_vec((1, 3), vec![0.0, 5.0, 5.0]).unwrap();
        assert_eq!(predict_multinomial(&a, &nu, f.view(), 0).1, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn multinomial_probabilities_match_enumeration() {
        let a = random_tensor(3, 2, 2, 1);
        let nu = Array2::from_shape_vec((3, 2), vec![0.1, -0.2, 0.3, 0.0, -0.5, 0.4]).unwrap();
        let f = onehot_frame(3, 2, &[Some(1), None, Some(0)]);
        for node in 0..3 {
            let (p, _) = predict_multinomial(&a, &nu, f.view(), node);
            let mu: Vec<f64> = (0..2).map(|k| a.intensity(node, f.view())[k] + nu[[node, k]]).collect();
            let z = 1.0 + mu.iter().map(|v| v.exp()).sum::<f64>();
            assert!((p[0] - mu[0].exp() / z).abs() < 1e-14);
            assert!((p[1] - mu[1].exp() / z).abs() < 1e-14);
            assert!((p[2] - 1.0 / z).abs() < 1e-14);
        }
    }

    #[test]
    fn logistic_normal_prediction_limits() {
        let a = InfluenceTensor::zeros(1, 2, 3);
        let nu = Array2::zeros((1, 2));
        let f = Array2::zeros((1, 3));
        let x = predict_logistic_normal(&a, &nu, 1.0, f.view(), 0);
        assert!(x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(predict_logistic_normal(&a, &nu, 0.0, f.view(), 0), vec![0.0; 3]);
        let nu = Array2::from_shape_vec((1, 2), vec![0.3, -1.0]).unwrap();
        let x = predict_logistic_normal(&a, &nu, 0.7, f.view(), 0);
        assert!((x.iter().sum::<f64>() - 0.7).abs() < 1e-14);
    }

    #[test]
    fn scaled_composition_minimizes_expected_error_along_its_ray() {
        // Monte-Carlo check at one configuration: E||X - c Z||^2 is smallest near c = q
        let model = dynamic_preset(1, 3, 0, 1.0, 0.05, 3).unwrap();
        let crate::simulate::Occurrence::Dynamic { eta, .. } = &model.occurrence else { unreachable!() };
        let q = logistic(eta[0]);
        let panel = simulate_logistic_normal(&model, 40_000, InitSpec::default(), 9);
        let z = additive_logistic(&model.nu.row(0).to_vec());
        let err = |c: f64| {
            (1..panel.t_len())
                .map(|t| panel.row(t, 0).iter().zip(&z).map(|(x, zi)| (x - c * zi).powi(2)).sum::<f64>())
                .sum::<f64>()
                / panel.n_steps() as f64
        };
        let at_q = err(q);
        assert!(at_q < err(q - 0.1) && at_q < err(q + 0.1));
    }

    #[test]
    fn prediction_error_one_step_miss_costs_two() {
        let data = Array3::from_shape_vec((2, 1, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let panel = EventPanel::new(data, PanelKind::Categorical).unwrap();
        // predicts category 1 at every step
        let model = FittedModel::Multinomial {
            a: InfluenceTensor::zeros(1, 2, 2),
            nu: Array2::from_shape_vec((1, 2), vec![5.0, 0.0]).unwrap(),
        };
        assert_eq!(prediction_error(&model, &panel, 1).unwrap(), 2.0);
        assert!(prediction_error(&model, &panel, 0).is_err());
    }

    #[test]
    fn perfect_predictor_has_zero_error() {
        let model = FittedModel::Multinomial {
            a: InfluenceTensor::from_flat(1, 2, 2, vec![0.0, 9.0, 9.0, 0.0]).unwrap(),
            nu: Array2::zeros((1, 2)),
        };
        // alternate categories: the argmax sequence of the model itself
        let mut data = Array3::zeros((6, 1, 2));
        for t in 0..6 {
            data[[t, 0, t % 2]] = 1.0;
        }
        let panel = EventPanel::new(data, PanelKind::Categorical).unwrap();
        assert_eq!(prediction_error(&model, &panel, 1).unwrap(), 0.0);
    }

    #[test]
    fn constant_baselines_are_empirical() {
        let mut data = Array3::zeros((5, 1, 3));
        for t in 0..5 {
            data[[t, 0, 0]] = 1.0;
        }
        let panel = EventPanel::new(data, PanelKind::Categorical).unwrap();
        let b = fit_baseline(&panel, BaselineKind::ConstantProcess, None, 0.0).unwrap();
        let p = b.probabilities(Array2::zeros((1, 3)).view(), 0);
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);

        let model = dynamic_preset(2, 3, 1, 1.0, 1.0, 5).unwrap();
        let panel = simulate_logistic_normal(&model, 200, InitSpec::default(), 6);
        let b = fit_baseline(&panel, BaselineKind::ConstantProcess, None, 0.0).unwrap();
        let lr = log_ratio_transform(&panel, 0.0).unwrap();
        for node in 0..2 {
            let rows: Vec<usize> = (1..panel.t_len()).filter(|&t| lr.mask[[t, node]]).collect();
            for c in 0..2 {
                let mean = rows.iter().map(|&t| lr.y[[t, node, c]]).sum::<f64>() / rows.len() as f64;
                assert!((b.categories[[node, c]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_transform_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let slice: Vec<f64> = (0..2 * 2 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        // identical slices across k
        let mut flat = Vec::new();
        for node in 0..2 {
            for _ in 0..3 {
                flat.extend_from_slice(&slice[node * 6..(node + 1) * 6]);
            }
        }
        let a = InfluenceTensor::from_flat(2, 3, 3, flat).unwrap();
        assert!(absolute_to_relative(&a).unwrap().is_zero());

        let a = random_tensor(2, 3, 3, 5);
        let rel = absolute_to_relative(&a).unwrap();
        let mut shifted = a.clone();
        let c = random_tensor(2, 1, 3, 6);
        for ((m, k, mm, kk), v) in shifted.data_mut().indexed_iter_mut() {
            let _ = k;
            *v += c.data()[[m, 0, mm, kk]];
        }
        let rel2 = absolute_to_relative(&shifted).unwrap();
        assert!(rel.as_slice().iter().zip(rel2.as_slice()).all(|(x, y)| (x - y).abs() < 1e-14));

        let mut last_zero = a.clone();
        last_zero.data_mut().slice_mut(s![.., 2, .., ..]).fill(0.0);
        let rel = absolute_to_relative(&last_zero).unwrap();
        assert_eq!(rel.data(), &last_zero.data().slice(s![.., ..2, .., ..]));
    }

    #[test]
    fn rebase_round_trip() {
        let a = random_tensor(3, 3, 4, 7);
        let nu = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64) - 0.5 * j as f64);
        for l in 0..3 {
            let once = rebase(&a, &nu, l).unwrap();
            let twice = rebase(&once.a, &once.nu, l).unwrap();
            assert!(twice.a.as_slice().iter().zip(a.as_slice()).all(|(x, y)| (x - y).abs() < 1e-14));
            assert!(twice.nu.iter().zip(nu.iter()).all(|(x, y)| (x - y).abs() < 1e-14));
            assert_eq!(once.labels[l], 3);
        }
        assert!(rebase(&a, &nu, 3).is_err());

        let mut a0 = a.clone();
        a0.data_mut().slice_mut(s![.., 1, .., ..]).fill(0.0);
        let nu0 = Array2::zeros((3, 3));
        let r = rebase(&a0, &nu0, 1).unwrap();
        assert_eq!(r.a.data().slice(s![.., 0, .., ..]), a0.data().slice(s![.., 0, .., ..]));
        assert_eq!(r.a.data().slice(s![.., 2, .., ..]), a0.data().slice(s![.., 2, .., ..]));
    }

    fn gaussian_loglik(a: &InfluenceTensor, nu: &Array2<f64>, sigma: &Array2<f64>, lr: &LogRatioPanel, panel: &EventPanel) -> f64 {
        let kk = sigma.nrows();
        // explicit inverse and determinant for the small matrix; kk <= 3
        let inv = invert(sigma);
        let det = determinant(sigma);
        let mut total = 0.0;
        for t in 0..panel.n_steps() {
            for node in 0..panel.n_nodes() {
                if !lr.mask[[t + 1, node]] {
                    continue;
                }
                let mu = a.intensity(node, panel.frame(t));
                let r: Vec<f64> = (0..kk).map(|c| lr.y[[t + 1, node, c]] - mu[c] - nu[[node, c]]).collect();
                let mut q = 0.0;
                for i in 0..kk {
                    for j in 0..kk {
                        q += r[i] * inv[[i, j]] * r[j];
                    }
                }
                total += -0.5 * q - 0.5 * det.ln();
            }
        }
        total
    }

    fn determinant(m: &Array2<f64>) -> f64 {
        match m.nrows() {
            1 => m[[0, 0]],
            2 => m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]],
            _ => unimplemented!(),
        }
    }

    fn invert(m: &Array2<f64>) -> Array2<f64> {
        let d = determinant(m);
        match m.nrows() {
            1 => Array2::from_elem((1, 1), 1.0 / d),
            2 => Array2::from_shape_vec((2, 2), vec![m[[1, 1]] / d, -m[[0, 1]] / d, -m[[1, 0]] / d, m[[0, 0]] / d]).unwrap(),
            _ => unimplemented!(),
        }
    }

    #[test]
    fn rebasing_preserves_likelihood() {
        let model = dynamic_preset(3, 3, 3, 1.0, 0.5, 11).unwrap();
        let panel = simulate_logistic_normal(&model, 300, InitSpec::default(), 12);
        let lr = log_ratio_transform(&panel, 0.0).unwrap();
        let sigma = model.sigma.matrix().clone();
        let base = gaussian_loglik(&model.a, &model.nu, &sigma, &lr, &panel);
        for l in 0..2 {
            let r = rebase(&model.a, &model.nu, l).unwrap();
            let lr2 = rebase_log_ratios(&lr, l).unwrap();
            let s2 = rebase_covariance(&sigma, l).unwrap();
            let other = gaussian_loglik(&r.a, &r.nu, &s2, &lr2, &panel);
            assert!((base - other).abs() < 1e-9 * base.abs().max(1.0), "{base} vs {other}");
        }
    }

    #[test]
    fn edge_extraction_rules() {
        let zero = InfluenceTensor::zeros(2, 2, 2);
        assert!(extract_edges(&zero, 0.1, EdgeMode::Absolute).unwrap().edges.is_empty());
        let mut one = InfluenceTensor::zeros(2, 2, 2);
        one.data_mut()[[1, 0, 0, 1]] = 2.0;
        let e = extract_edges(&one, 0.5, EdgeMode::Absolute).unwrap();
        assert_eq!(e.edges.len(), 1);
        assert_eq!(e.edges[0].weight, 1.0);
        assert_eq!((e.edges[0].source, e.edges[0].target), (0, 1));
        let a = random_tensor(3, 2, 2, 8);
        let all = extract_edges(&a, 0.0, EdgeMode::Relative).unwrap();
        assert_eq!(all.edges.len(), a.as_slice().iter().filter(|v| **v != 0.0).count());
        let scaled = extract_edges(&a.scaled(3.5), 0.3, EdgeMode::Relative).unwrap();
        let plain = extract_edges(&a, 0.3, EdgeMode::Relative).unwrap();
        let key = |l: &EdgeList| l.edges.iter().map(|e| (e.source, e.target, e.k_in, e.k_out, e.stimulatory)).collect::<Vec<_>>();
        assert_eq!(key(&scaled), key(&plain));
        assert!(plain.edges.iter().all(|e| e.stimulatory == (e.weight > 0.0)));
        assert!(plain.to_dot().contains("dashed") || plain.edges.iter().all(|e| e.stimulatory));
        assert!(extract_edges(&a, 1.0, EdgeMode::Relative).is_err());
    }
}
