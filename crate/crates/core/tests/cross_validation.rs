mod common;

use common::*;
use ctxnet::solver::{cross_validate, Criterion, CvConfig, FitConfig, ModelKind};
use ndarray::Array2;

#[test]
fn fold_windows_follow_the_rolling_layout() {
    let cv = CvConfig::new(vec![0.1]);
    assert_eq!(cv.windows(100), vec![(0, 80), (5, 80), (10, 80), (15, 80), (20, 80)]);
    for (start, len) in cv.windows(1000) {
        assert_eq!(len, 800);
        assert!(start + len <= 1000);
    }
    let w = cv.windows(333);
    assert_eq!(w[1].0, 17);
    assert!(w.iter().all(|&(s, l)| s + l <= 333));
}

#[test]
fn fold_layout_must_fit_in_the_panel() {
    let mut cv = CvConfig::new(vec![0.1]);
    cv.offset_frac = 0.06;
    assert!(cv.validate().is_err());
    cv.offset_frac = 0.05;
    assert!(cv.validate().is_ok());
    assert!(CvConfig::new(vec![]).validate().is_err());
    assert!(CvConfig::new(vec![-1.0]).validate().is_err());
}

#[test]
fn table_covers_the_grid_and_selection_is_its_minimum() {
    let panel = const_q_panel(4, 3, 400, 1);
    let nu = Array2::zeros((4, 2));
    let cv = CvConfig::new(vec![0.001, 0.01, 0.1, 1.0]);
    let r = cross_validate(&panel, &nu, None, ModelKind::ConstQ, &cv, &FitConfig::default()).unwrap();
    assert_eq!(r.table.len(), 4);
    let lambdas: Vec<f64> = r.table.iter().map(|row| row.lambda).collect();
    assert_eq!(lambdas, vec![1.0, 0.1, 0.01, 0.001]);
    let best = r.table.iter().map(|row| row.score).fold(f64::INFINITY, f64::min);
    let chosen = r.table.iter().find(|row| row.lambda == r.lambda).unwrap();
    assert_eq!(chosen.score, best);
    assert!(r.table.iter().all(|row| row.folds_used == 5));
    // a huge penalty zeroes the network and cannot beat a moderate one
    assert!(r.lambda < 1.0);
}

#[test]
fn ties_go_to_the_larger_penalty() {
    let panel = categorical_panel(3, 2, 300, 2);
    let nu = Array2::zeros((3, 2));
    // both penalties exceed the dual norm, so both fits are zero and tie
    let cv = CvConfig::new(vec![50.0, 100.0]);
    let r = cross_validate(&panel, &nu, None, ModelKind::Multinomial, &cv, &FitConfig::default()).unwrap();
    assert_eq!(r.table[0].score, r.table[1].score);
    assert_eq!(r.lambda, 100.0);
}

#[test]
fn joint_search_covers_alpha_and_prediction_error() {
    let panel = dynamic_panel(3, 3, 300, 3);
    let nu = Array2::zeros((3, 2));
    let eta = vec![0.0; 3];
    let mut cv = CvConfig::new(vec![0.01, 0.1]);
    cv.alpha_grid = Some(vec![0.2, 0.8]);
    cv.criterion = Criterion::PredictionError;
    let r = cross_validate(&panel, &nu, Some(&eta), ModelKind::Joint, &cv, &FitConfig::default()).unwrap();
    assert_eq!(r.table.len(), 4);
    assert!(r.table.iter().all(|row| row.score.is_finite() && row.score >= 0.0));
    assert!([0.2, 0.8].contains(&r.alpha));
    assert!(cross_validate(&panel, &nu, None, ModelKind::Joint, &cv, &FitConfig::default()).is_err());
    assert!(cross_validate(&panel, &nu, Some(&eta), ModelKind::Multinomial, &cv, &FitConfig::default()).is_err());
}
