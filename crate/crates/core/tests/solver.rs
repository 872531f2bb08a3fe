mod common;

use common::*;
use ctxnet::objective::{bernoulli_loss, combined_objective, ln_squared_loss, log_ratio_transform, multinomial_loss};
use ctxnet::solver::{
    fit_bernoulli, fit_joint, fit_logistic_normal_const_q, fit_multinomial, fit_occurrence_network, kkt_audit, kkt_audit_joint, FitConfig,
};
use ctxnet::tensor::{group_norm_r, group_norm_r_alpha};
use ctxnet::{EventPanel, GroupIndex, InfluenceTensor};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

fn tight(lambda: f64) -> FitConfig {
    FitConfig { lambda, tol: 1e-14, max_iters: 200_000, ..FitConfig::default() }
}

fn max_group_norm(g: &InfluenceTensor) -> f64 {
    GroupIndex::new(g.n_nodes()).iter().map(|(m, mm)| g.group_sq_norm(m, mm).sqrt()).fold(0.0, f64::max)
}

fn joint_dual_norm(ga: &InfluenceTensor, gb: &InfluenceTensor, alpha: f64) -> f64 {
    GroupIndex::new(ga.n_nodes())
        .iter()
        .map(|(m, mm)| (alpha * ga.group_sq_norm(m, mm) + (1.0 - alpha) * gb.group_sq_norm(m, mm)).sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn unpenalized_multinomial_matches_bfgs() {
    let panel = categorical_panel(2, 2, 500, 1);
    let nu = Array2::zeros((2, 2));
    let fit = fit_multinomial(&panel, &nu, &tight(0.0)).unwrap();
    let f = |x: &[f64]| {
        let e = multinomial_loss(&InfluenceTensor::from_flat(2, 2, 2, x.to_vec()).unwrap(), &nu, &panel).unwrap();
        (e.value, e.grad.as_slice().to_vec())
    };
    let reference = bfgs(f, vec![0.0; 16], 1e-11, 10_000);
    assert!(max_abs_diff(fit.a.as_slice(), &reference) < 1e-4, "{:?} vs {:?}", fit.a.as_slice(), reference);
}

/// Least squares per node from the normal equations over event transitions.
fn normal_equations(panel: &EventPanel, nu: &Array2<f64>) -> InfluenceTensor {
    let lr = log_ratio_transform(panel, 0.0).unwrap();
    let (m, k) = (panel.n_nodes(), panel.n_categories());
    let p = m * k;
    let mut out = InfluenceTensor::zeros(m, k - 1, k);
    for node in 0..m {
        let rows: Vec<usize> = (0..panel.n_steps()).filter(|&t| lr.mask[[t + 1, node]]).collect();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| panel.frame(rows[i])[[j / k, j % k]]);
        for c in 0..k - 1 {
            let y = DVector::from_fn(rows.len(), |i, _| lr.y[[rows[i] + 1, node, c]] - nu[[node, c]]);
            let xtx = x.transpose() * &x;
            let sol = xtx.cholesky().expect("full rank design").solve(&(x.transpose() * y));
            for j in 0..p {
                out.data_mut()[[node, c, j / k, j % k]] = sol[j];
            }
        }
    }
    out
}

#[test]
fn unpenalized_logistic_normal_matches_normal_equations() {
    let panel = const_q_panel(2, 2, 500, 2);
    let nu = Array2::from_elem((2, 1), 0.2);
    let fit = fit_logistic_normal_const_q(&panel, &nu, &tight(0.0)).unwrap();
    let reference = normal_equations(&panel, &nu);
    assert!(max_abs_diff(fit.a.as_slice(), reference.as_slice()) < 1e-6);
    assert!(fit.q.iter().all(|&q| q > 0.6 && q < 1.0));
}

#[test]
fn penalized_fits_pass_kkt_audit() {
    let cat = categorical_panel(2, 2, 500, 3);
    let nu = Array2::zeros((2, 2));
    let fit = fit_multinomial(&cat, &nu, &tight(0.02)).unwrap();
    let g = multinomial_loss(&fit.a, &nu, &cat).unwrap().grad;
    assert!(kkt_audit(&fit.a, &g, 0.02).unwrap().passes(1e-4));

    let comp = const_q_panel(2, 2, 500, 4);
    let lr = log_ratio_transform(&comp, 0.0).unwrap();
    let nu1 = Array2::zeros((2, 1));
    let fit = fit_logistic_normal_const_q(&comp, &nu1, &tight(0.05)).unwrap();
    let g = ln_squared_loss(&fit.a, &nu1, &lr, &comp).unwrap().grad;
    assert!(kkt_audit(&fit.a, &g, 0.05).unwrap().passes(1e-4));

    let dynp = dynamic_panel(2, 2, 500, 5);
    let lr = log_ratio_transform(&dynp, 0.0).unwrap();
    let eta = vec![0.5; 2];
    let cfg = FitConfig { alpha: 0.4, ..tight(0.03) };
    let fit = fit_joint(&dynp, &nu1, &eta, &cfg).unwrap();
    let ga = ln_squared_loss(&fit.a, &nu1, &lr, &dynp).unwrap().grad;
    let gb = bernoulli_loss(&fit.b, &eta, &dynp).unwrap().grad;
    let r = kkt_audit_joint(&fit.a, &fit.b, &ga, &gb, 0.4, 0.03).unwrap();
    assert!(r.passes(1e-4), "{r:?}");
}

#[test]
fn penalty_above_dual_norm_gives_zero_network() {
    let cat = categorical_panel(3, 2, 300, 6);
    let nu = Array2::zeros((3, 2));
    let g0 = multinomial_loss(&InfluenceTensor::zeros(3, 2, 2), &nu, &cat).unwrap().grad;
    let lmax = max_group_norm(&g0);
    assert!(fit_multinomial(&cat, &nu, &FitConfig::default().with_lambda(lmax * 1.0001)).unwrap().a.is_zero());
    assert!(!fit_multinomial(&cat, &nu, &FitConfig::default().with_lambda(lmax * 0.5)).unwrap().a.is_zero());

    let comp = const_q_panel(3, 2, 300, 7);
    let lr = log_ratio_transform(&comp, 0.0).unwrap();
    let nu1 = Array2::zeros((3, 1));
    let g0 = ln_squared_loss(&InfluenceTensor::zeros(3, 1, 2), &nu1, &lr, &comp).unwrap().grad;
    let lmax = max_group_norm(&g0);
    assert!(fit_logistic_normal_const_q(&comp, &nu1, &FitConfig::default().with_lambda(lmax * 1.0001)).unwrap().a.is_zero());

    let dynp = dynamic_panel(3, 2, 300, 8);
    let lr = log_ratio_transform(&dynp, 0.0).unwrap();
    let eta = vec![0.0; 3];
    let alpha = 0.4;
    let ga = ln_squared_loss(&InfluenceTensor::zeros(3, 1, 2), &nu1, &lr, &dynp).unwrap().grad;
    let gb = bernoulli_loss(&InfluenceTensor::zeros(3, 1, 2), &eta, &dynp).unwrap().grad;
    let lmax = joint_dual_norm(&ga, &gb, alpha);
    let fit = fit_joint(&dynp, &nu1, &eta, &FitConfig { alpha, ..FitConfig::default().with_lambda(lmax * 1.0001) }).unwrap();
    assert!(fit.a.is_zero() && fit.b.is_zero());
    let fit = fit_joint(&dynp, &nu1, &eta, &FitConfig { alpha, ..FitConfig::default().with_lambda(lmax * 0.5) }).unwrap();
    assert!(!(fit.a.is_zero() && fit.b.is_zero()));
}

#[test]
fn joint_reduces_at_the_alpha_endpoints() {
    let panel = dynamic_panel(3, 3, 400, 9);
    let nu = Array2::zeros((3, 2));
    let eta = vec![0.2; 3];
    let cfg = FitConfig::default().with_lambda(0.02);
    let one = fit_joint(&panel, &nu, &eta, &FitConfig { alpha: 1.0, ..cfg }).unwrap();
    let cq = fit_logistic_normal_const_q(&panel, &nu, &cfg).unwrap();
    assert_eq!(one.a, cq.a);
    assert!(one.b.is_zero());
    let zero = fit_joint(&panel, &nu, &eta, &FitConfig { alpha: 0.0, ..cfg }).unwrap();
    let bern = fit_bernoulli(&panel, &eta, &cfg).unwrap();
    assert!(zero.a.is_zero());
    assert_eq!(zero.b, bern.b);
    let occ = fit_occurrence_network(&panel, &eta, &cfg).unwrap();
    assert_eq!(occ.b.dims(), (3, 1, 3, 1));
    // near the endpoints the joint estimate approaches the single-block fits
    let near = fit_joint(&panel, &nu, &eta, &FitConfig { alpha: 1.0 - 1e-9, ..tight(0.02) }).unwrap();
    let cq = fit_logistic_normal_const_q(&panel, &nu, &tight(0.02)).unwrap();
    assert!(max_abs_diff(near.a.as_slice(), cq.a.as_slice()) < 1e-3);
}

#[test]
fn joint_objective_equals_reparameterized_objective() {
    let panel = dynamic_panel(3, 2, 300, 10);
    let lr = log_ratio_transform(&panel, 0.0).unwrap();
    let nu = Array2::zeros((3, 1));
    let eta = vec![0.1; 3];
    for alpha in [0.3, 0.5, 0.7] {
        let lambda = 0.01;
        let fit = fit_joint(&panel, &nu, &eta, &FitConfig { alpha, ..tight(lambda) }).unwrap();
        let j = combined_objective(&fit.a, &fit.b, alpha, &nu, &eta, &lr, &panel).unwrap();
        let direct = j.value + lambda * group_norm_r_alpha(&fit.a, &fit.b, alpha).unwrap();
        assert!((direct - fit.diagnostics.objective()).abs() < 1e-10 * direct.abs().max(1.0), "alpha {alpha}");
    }
}

#[test]
fn objective_history_is_monotone() {
    let panel = categorical_panel(4, 3, 300, 11);
    let nu = Array2::zeros((4, 3));
    for accelerated in [true, false] {
        let fit = fit_multinomial(&panel, &nu, &FitConfig { accelerated, ..FitConfig::default().with_lambda(0.01) }).unwrap();
        assert!(fit.diagnostics.converged());
        assert!(fit.diagnostics.nodes.iter().all(|n| n.objective.is_finite()));
    }
}

#[test]
fn doubling_lambda_shrinks_the_network() {
    let panel = const_q_panel(4, 3, 400, 12);
    let nu = Array2::zeros((4, 2));
    let mut prev = f64::INFINITY;
    for lambda in [0.005, 0.01, 0.02, 0.04, 0.08] {
        let fit = fit_logistic_normal_const_q(&panel, &nu, &tight(lambda)).unwrap();
        let r = group_norm_r(&fit.a);
        assert!(r <= prev + 1e-9, "lambda {lambda}: {r} > {prev}");
        prev = r;
    }
}

#[test]
fn node_problems_are_separable() {
    let panel = categorical_panel(3, 2, 300, 13);
    let nu = Array2::zeros((3, 2));
    let cfg = tight(0.01);
    let base = fit_multinomial(&panel, &nu, &cfg).unwrap();
    // altering node 2's outcomes leaves the other nodes' estimates unchanged
    // only when their covariates are unchanged, so flip the last frame only
    let mut data = panel.data().clone();
    let last = data.dim().0 - 1;
    for c in 0..2 {
        data[[last, 2, c]] = if c == 0 { 1.0 } else { 0.0 };
    }
    let altered = EventPanel::new(data, panel.kind()).unwrap();
    let fit = fit_multinomial(&altered, &nu, &cfg).unwrap();
    for node in 0..2 {
        assert_eq!(base.a.node_slice(node), fit.a.node_slice(node));
    }
}
