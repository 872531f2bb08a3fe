//! Group-sparse estimation by proximal gradient descent.

mod cv;
mod fit;
mod kkt;
pub mod problem;
mod prox;

pub use cv::{cross_validate, Criterion, CvConfig, CvResult, CvRow, ModelKind};
pub use fit::{
    fit_bernoulli, fit_bernoulli_on, fit_const_q_on, fit_joint, fit_joint_on, fit_logistic_normal_const_q, fit_multinomial,
    fit_multinomial_on, fit_occurrence_network, BernoulliFit, ConstQFit, Diagnostics, FitConfig, JointFit, MultinomialFit,
    NodeReport,
};
pub use kkt::{kkt_audit, kkt_audit_joint, KktReport};
pub use prox::{minimize, prox_group, Solution, SolveOptions, StepRule};

/// `c K sqrt(log M / T)`, the penalty scale used in the simulation studies.
pub fn empirical_lambda(c: f64, k: usize, nodes: usize, steps: usize) -> f64 {
    c * k as f64 * ((nodes as f64).ln() / steps as f64).sqrt()
}

/// `c sqrt(max_m T_m log M) / T`, the rate-matched penalty for constant-q fits.
pub fn theorem_lambda(c: f64, panel: &crate::tensor::EventPanel) -> f64 {
    let steps = panel.n_steps() as f64;
    let max_events = (0..panel.n_nodes()).map(|m| panel.event_count(m)).max().unwrap_or(0) as f64;
    c * (max_events * (panel.n_nodes() as f64).ln()).sqrt() / steps
}
