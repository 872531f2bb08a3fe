//! Loss functions, links and analytic gradients of the three estimators.
//!
//! These are whole-panel reference evaluations. The solver uses per-node
//! equivalents in [`crate::solver::problem`] that share the same formulas.

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::simulate::logistic;
use crate::tensor::{EventPanel, InfluenceTensor, PanelKind};

/// `log(1 + sum_i e^{x_i})`, evaluated against the implicit zero term.
pub fn multinomial_link(x: &[f64]) -> f64 {
    let mx = x.iter().fold(0.0_f64, |a, &b| a.max(b));
    let s: f64 = x.iter().map(|&v| (v - mx).exp()).sum::<f64>() + (-mx).exp();
    mx + s.ln()
}

/// Gradient of [`multinomial_link`]: `e^{x_i} / (sum_j e^{x_j} + 1)`.
pub fn multinomial_link_grad(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().fold(0.0_f64, |a, &b| a.max(b));
    let e: Vec<f64> = x.iter().map(|&v| (v - mx).exp()).collect();
    let s = e.iter().sum::<f64>() + (-mx).exp();
    e.into_iter().map(|v| v / s).collect()
}

/// `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: InfluenceTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEval {
    pub value: f64,
    pub grad_a: InfluenceTensor,
    pub grad_b: InfluenceTensor,
}

fn check_network(a: &InfluenceTensor, panel: &EventPanel, k_out: usize, what: &str) -> Result<()> {
    let (m, ko, m2, ki) = a.dims();
    if m != panel.n_nodes() || m2 != panel.n_nodes() || ki != panel.n_categories() || ko != k_out {
        return Err(Error::Dimension(format!(
            "{what} {:?} against panel with M = {}, K = {}",
            a.dims(),
            panel.n_nodes(),
            panel.n_categories()
        )));
    }
    Ok(())
}

fn check_nu(nu: &Array2<f64>, m: usize, cols: usize) -> Result<()> {
    if nu.dim() != (m, cols) {
        return Err(Error::Dimension(format!("intercepts {:?}, expected ({m}, {cols})", nu.dim())));
    }
    Ok(())
}

/// `grad[m, k, :, :] += r_k * X` for the node fiber.
fn add_outer(grad: &mut InfluenceTensor, node: usize, residual: &[f64], frame: ArrayView2<f64>) {
    let (_, _, m, k_in) = grad.dims();
    let p = m * k_in;
    let g = grad.node_slice_mut(node);
    for (src, row) in frame.outer_iter().enumerate() {
        for (kk, &x) in row.iter().enumerate() {
            if x != 0.0 {
                let j = src * k_in + kk;
                for (k, r) in residual.iter().enumerate() {
                    g[k * p + j] += r * x;
                }
            }
        }
    }
}

/// Negative multinomial log-likelihood `L^MN(A)` and its gradient.
pub fn multinomial_loss(a: &InfluenceTensor, nu: &Array2<f64>, panel: &EventPanel) -> Result<LossEval> {
    if panel.kind() != PanelKind::Categorical {
        return Err(Error::InvalidParameter("multinomial loss needs a categorical panel".into()));
    }
    let k = panel.n_categories();
    check_network(a, panel, k, "A")?;
    check_nu(nu, panel.n_nodes(), k)?;
    let steps = panel.n_steps();
    if steps == 0 {
        return Err(Error::Empty("panel has no transitions".into()));
    }
    let mut grad = InfluenceTensor::zeros(panel.n_nodes(), k, k);
    let mut value = 0.0;
    for t in 0..steps {
        let frame = panel.frame(t);
        for node in 0..panel.n_nodes() {
            let mut mu = a.intensity(node, frame);
            mu.iter_mut().zip(nu.row(node)).for_each(|(x, n)| *x += n);
            let target = panel.category(t + 1, node);
            value += multinomial_link(&mu) - target.map_or(0.0, |c| mu[c]);
            let mut r = multinomial_link_grad(&mu);
            if let Some(c) = target {
                r[c] -= 1.0;
            }
            add_outer(&mut grad, node, &r, frame);
        }
    }
    let scale = 1.0 / steps as f64;
    Ok(LossEval { value: value * scale, grad: grad.scaled(scale) })
}

/// Log-ratios against the last category plus the event mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioPanel {
    /// `[t, m, k]` with `k` over the first `K-1` categories.
    pub y: Array3<f64>,
    /// `[t, m]`: an event occurred.
    pub mask: Array2<bool>,
}

/// `Y_{mk} = log(X_{mk} / X_{mK})` on event rows, zero elsewhere.
///
/// With `clip_eps > 0`, entries below `clip_eps` are raised to it and the row
/// renormalized first.
pub fn log_ratio_transform(panel: &EventPanel, clip_eps: f64) -> Result<LogRatioPanel> {
    if clip_eps < 0.0 {
        return Err(Error::InvalidParameter("clip_eps must be nonnegative".into()));
    }
    let (tl, m, k) = panel.data().dim();
    if k < 2 {
        return Err(Error::InvalidParameter("log-ratios need K >= 2".into()));
    }
    let mut y = Array3::zeros((tl, m, k - 1));
    let mut mask = Array2::from_elem((tl, m), false);
    let mut row = vec![0.0; k];
    for t in 0..tl {
        for node in 0..m {
            let src = panel.row(t, node);
            if src.iter().all(|&v| v == 0.0) {
                continue;
            }
            mask[[t, node]] = true;
            row.iter_mut().zip(src.iter()).for_each(|(r, &v)| *r = v);
            if clip_eps > 0.0 && row.iter().any(|&v| v < clip_eps) {
                row.iter_mut().for_each(|v| *v = v.max(clip_eps));
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            if row.iter().any(|&v| v <= 0.0) {
                return Err(Error::ZeroEntry { t, node });
            }
            let base = row[k - 1].ln();
            for c in 0..k - 1 {
                y[[t, node, c]] = row[c].ln() - base;
            }
        }
    }
    Ok(LogRatioPanel { y, mask })
}

/// Squared-error loss `L^LN(A)` and its gradient.
pub fn ln_squared_loss(a: &InfluenceTensor, nu: &Array2<f64>, lr: &LogRatioPanel, panel: &EventPanel) -> Result<LossEval> {
    let k = panel.n_categories();
    check_network(a, panel, k - 1, "A")?;
    check_nu(nu, panel.n_nodes(), k - 1)?;
    if lr.mask.dim() != (panel.t_len(), panel.n_nodes()) {
        return Err(Error::Dimension("log-ratio panel does not match event panel".into()));
    }
    let steps = panel.n_steps();
    if steps == 0 {
        return Err(Error::Empty("panel has no transitions".into()));
    }
    let mut grad = InfluenceTensor::zeros(panel.n_nodes(), k - 1, k);
    let mut value = 0.0;
    for t in 0..steps {
        let frame = panel.frame(t);
        for node in 0..panel.n_nodes() {
            if !lr.mask[[t + 1, node]] {
                continue;
            }
            let mut mu = a.intensity(node, frame);
            mu.iter_mut().zip(nu.row(node)).for_each(|(x, n)| *x += n);
            // residual mu - Y
            let r: Vec<f64> = (0..k - 1).map(|c| mu[c] - lr.y[[t + 1, node, c]]).collect();
            value += 0.5 * r.iter().map(|v| v * v).sum::<f64>();
            add_outer(&mut grad, node, &r, frame);
        }
    }
    let scale = 1.0 / steps as f64;
    Ok(LossEval { value: value * scale, grad: grad.scaled(scale) })
}

/// Bernoulli occurrence loss `L^Bern(B)` and its gradient.
pub fn bernoulli_loss(b: &InfluenceTensor, eta: &[f64], panel: &EventPanel) -> Result<LossEval> {
    check_network(b, panel, 1, "B")?;
    if eta.len() != panel.n_nodes() {
        return Err(Error::Dimension(format!("eta has {} entries, M = {}", eta.len(), panel.n_nodes())));
    }
    let steps = panel.n_steps();
    if steps == 0 {
        return Err(Error::Empty("panel has no transitions".into()));
    }
    let mut grad = InfluenceTensor::zeros(panel.n_nodes(), 1, panel.n_categories());
    let mut value = 0.0;
    for t in 0..steps {
        let frame = panel.frame(t);
        for (node, &e) in eta.iter().enumerate() {
            let z = b.intensity(node, frame)[0] + e;
            let y = if panel.has_event(t + 1, node) { 1.0 } else { 0.0 };
            value += softplus(z) - z * y;
            add_outer(&mut grad, node, &[logistic(z) - y], frame);
        }
    }
    let scale = 1.0 / steps as f64;
    Ok(LossEval { value: value * scale, grad: grad.scaled(scale) })
}

/// `alpha L^LN(A) + (1 - alpha) L^Bern(B)` with per-block gradients.
#[allow(clippy::too_many_arguments)]
pub fn combined_objective(
    a: &InfluenceTensor,
    b: &InfluenceTensor,
    alpha: f64,
    nu: &Array2<f64>,
    eta: &[f64],
    lr: &LogRatioPanel,
    panel: &EventPanel,
) -> Result<JointEval> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let ln = ln_squared_loss(a, nu, lr, panel)?;
    let bern = bernoulli_loss(b, eta, panel)?;
    Ok(JointEval {
        value: alpha * ln.value + (1.0 - alpha) * bern.value,
        grad_a: ln.grad.scaled(alpha),
        grad_b: bern.grad.scaled(1.0 - alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{
        constant_q_preset, dynamic_preset, multinomial_preset, simulate_logistic_normal, simulate_multinomial,
        InitSpec,
    };
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(m: usize, ko: usize, ki: usize, scale: f64, seed: u64) -> InfluenceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m * ko * m * ki;
        InfluenceTensor::from_flat(m, ko, ki, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn link_values() {
        assert!((multinomial_link(&[0.0, 0.0]) - 3.0_f64.ln()).abs() < 1e-15);
        for g in multinomial_link_grad(&[0.0, 0.0]) {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(multinomial_link(&[-1e3, -1e3]).abs() < 1e-300);
        assert!(multinomial_link_grad(&[-1e3, -1e3]).iter().all(|&g| g < 1e-300));
        assert!((multinomial_link(&[1.0, 2.0]) - 2.407_605_964_444_38).abs() < 1e-12);
        assert!((multinomial_link(&[1e3, 0.0]) - 1e3).abs() < 1e-9);
    }

    #[test]
    fn empty_panel_multinomial_loss() {
        let panel = EventPanel::zeros(11, 3, 2, PanelKind::Categorical);
        let ev = multinomial_loss(&InfluenceTensor::zeros(3, 2, 2), &Array2::zeros((3, 2)), &panel).unwrap();
        assert!((ev.value - 3.0 * 3.0_f64.ln()).abs() < 1e-12);
        assert!(ev.grad.is_zero());
    }

    #[test]
    fn multinomial_loss_matches_log_probabilities() {
        let model = multinomial_preset(3, 2, 4, 1).unwrap();
        let panel = simulate_multinomial(&model, 15, InitSpec::default(), 2);
        let a = random_tensor(3, 2, 2, 1.0, 3);
        let ev = multinomial_loss(&a, &model.nu, &panel).unwrap();
        let mut nll = 0.0;
        for t in 0..15 {
            for node in 0..3 {
                let mut mu = a.intensity(node, panel.frame(t));
                mu.iter_mut().zip(model.nu.row(node)).for_each(|(x, n)| *x += n);
                let denom = 1.0 + mu.iter().map(|v| v.exp()).sum::<f64>();
                let p = match panel.category(t + 1, node) {
                    Some(c) => mu[c].exp() / denom,
                    None => 1.0 / denom,
                };
                nll -= p.ln();
            }
        }
        assert!((ev.value - nll / 15.0).abs() < 1e-12);
    }

    #[test]
    fn log_ratio_cases() {
        let mut d = Array3::zeros((3, 1, 2));
        d[[0, 0, 0]] = 0.5;
        d[[0, 0, 1]] = 0.5;
        d[[1, 0, 0]] = 2.0 / 3.0;
        d[[1, 0, 1]] = 1.0 / 3.0;
        let p = EventPanel::new(d, PanelKind::Compositional).unwrap();
        let lr = log_ratio_transform(&p, 0.0).unwrap();
        assert_eq!(lr.y[[0, 0, 0]], 0.0);
        assert!((lr.y[[1, 0, 0]] - 2.0_f64.ln()).abs() < 1e-15);
        assert!(!lr.mask[[2, 0]] && lr.y[[2, 0, 0]] == 0.0);

        let mut d = Array3::zeros((1, 1, 3));
        d[[0, 0, 0]] = 1.0;
        let p = EventPanel::new(d, PanelKind::Categorical).unwrap();
        assert!(matches!(log_ratio_transform(&p, 0.0), Err(Error::ZeroEntry { t: 0, node: 0 })));
        let lr = log_ratio_transform(&p, 1e-6).unwrap();
        // entries raised to 1e-6 then renormalized: the ratio is 1 / 1e-6
        assert!((lr.y[[0, 0, 0]] - 1e6_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn ln_loss_zero_residual_and_empty_mask() {
        let model = constant_q_preset(4, 3, 4, 5).unwrap();
        let mut exact = model.clone();
        exact.sigma = crate::simulate::Covariance::zero(2);
        let panel = simulate_logistic_normal(&exact, 50, InitSpec::default(), 1);
        let lr = log_ratio_transform(&panel, 0.0).unwrap();
        let ev = ln_squared_loss(&model.a, &model.nu, &lr, &panel).unwrap();
        assert!(ev.value.abs() < 1e-20 && ev.grad.max_abs() < 1e-12);

        let empty = EventPanel::zeros(10, 4, 3, PanelKind::Compositional);
        let lr = log_ratio_transform(&empty, 0.0).unwrap();
        let ev = ln_squared_loss(&model.a, &model.nu, &lr, &empty).unwrap();
        assert_eq!(ev.value, 0.0);
        assert!(ev.grad.is_zero());
    }

    #[test]
    fn bernoulli_matches_scalar_enumeration() {
        let model = dynamic_preset(3, 2, 3, 2.0, 1.0, 1).unwrap();
        let panel = simulate_logistic_normal(&model, 12, InitSpec::default(), 4);
        let b = random_tensor(3, 1, 2, 1.0, 8);
        let eta = [0.3, -0.2, 1.0];
        let ev = bernoulli_loss(&b, &eta, &panel).unwrap();
        let mut nll = 0.0;
        for t in 0..12 {
            for node in 0..3 {
                let q = logistic(b.intensity(node, panel.frame(t))[0] + eta[node]);
                nll -= if panel.has_event(t + 1, node) { q.ln() } else { (1.0 - q).ln() };
            }
        }
        assert!((ev.value - nll / 12.0).abs() < 1e-12);

        let empty = EventPanel::zeros(6, 3, 2, PanelKind::Compositional);
        let ev = bernoulli_loss(&InfluenceTensor::zeros(3, 1, 2), &[0.0; 3], &empty).unwrap();
        assert!((ev.value - 3.0 * 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn combined_reductions() {
        let model = dynamic_preset(3, 3, 4, 2.0, 1.0, 6).unwrap();
        let panel = simulate_logistic_normal(&model, 30, InitSpec::default(), 9);
        let lr = log_ratio_transform(&panel, 0.0).unwrap();
        let a = random_tensor(3, 2, 3, 0.5, 1);
        let b = random_tensor(3, 1, 3, 0.5, 2);
        let eta = Array1::from_elem(3, 0.5).to_vec();
        let ln = ln_squared_loss(&a, &model.nu, &lr, &panel).unwrap();
        let be = bernoulli_loss(&b, &eta, &panel).unwrap();
        let one = combined_objective(&a, &b, 1.0, &model.nu, &eta, &lr, &panel).unwrap();
        assert_eq!(one.value, ln.value);
        assert_eq!(one.grad_a, ln.grad);
        let zero = combined_objective(&a, &b, 0.0, &model.nu, &eta, &lr, &panel).unwrap();
        assert_eq!(zero.value, be.value);
        let mid = combined_objective(&a, &b, 0.4, &model.nu, &eta, &lr, &panel).unwrap();
        assert!((mid.value - (0.4 * ln.value + 0.6 * be.value)).abs() < 1e-14);
        assert!(combined_objective(&a, &b, 1.4, &model.nu, &eta, &lr, &panel).is_err());
    }

    #[test]
    fn dimension_errors() {
        let panel = EventPanel::zeros(5, 3, 2, PanelKind::Categorical);
        assert!(multinomial_loss(&InfluenceTensor::zeros(2, 2, 2), &Array2::zeros((2, 2)), &panel).is_err());
        assert!(bernoulli_loss(&InfluenceTensor::zeros(3, 1, 2), &[0.0; 2], &panel).is_err());
    }

    fn convexity_probe(f: &dyn Fn(&InfluenceTensor) -> f64, m: usize, ko: usize, ki: usize) {
        for i in 0..100 {
            let a = random_tensor(m, ko, ki, 2.0, 1000 + i);
            let b = random_tensor(m, ko, ki, 2.0, 2000 + i);
            let mid = a.add(&b).unwrap().scaled(0.5);
            assert!(f(&mid) <= 0.5 * f(&a) + 0.5 * f(&b) + 1e-12);
        }
    }

    #[test]
    fn losses_are_convex() {
        let mn = multinomial_preset(3, 2, 3, 2).unwrap();
        let pm = simulate_multinomial(&mn, 40, InitSpec::default(), 3);
        convexity_probe(&|a| multinomial_loss(a, &mn.nu, &pm).unwrap().value, 3, 2, 2);

        let ln = dynamic_preset(3, 2, 3, 2.0, 1.0, 4).unwrap();
        let pl = simulate_logistic_normal(&ln, 40, InitSpec::default(), 5);
        let lr = log_ratio_transform(&pl, 0.0).unwrap();
        convexity_probe(&|a| ln_squared_loss(a, &ln.nu, &lr, &pl).unwrap().value, 3, 1, 2);
        convexity_probe(&|b| bernoulli_loss(b, &[1.0; 3], &pl).unwrap().value, 3, 1, 2);
    }

    #[test]
    fn losses_separate_over_nodes() {
        let mn = multinomial_preset(3, 2, 3, 7).unwrap();
        let pm = simulate_multinomial(&mn, 40, InitSpec::default(), 3);
        let a = random_tensor(3, 2, 2, 1.0, 4);
        let total = multinomial_loss(&a, &mn.nu, &pm).unwrap().value;
        let mut by_node = 0.0;
        for node in 0..3 {
            // keep only one node's fiber; other nodes contribute a constant
            let mut single = InfluenceTensor::zeros(3, 2, 2);
            single.node_slice_mut(node).copy_from_slice(a.node_slice(node));
            let zero_loss = multinomial_loss(&InfluenceTensor::zeros(3, 2, 2), &mn.nu, &pm).unwrap().value;
            let part = multinomial_loss(&single, &mn.nu, &pm).unwrap().value - zero_loss;
            by_node += part;
        }
        let zero_loss = multinomial_loss(&InfluenceTensor::zeros(3, 2, 2), &mn.nu, &pm).unwrap().value;
        assert!((total - (by_node + zero_loss)).abs() < 1e-12);
    }
}
