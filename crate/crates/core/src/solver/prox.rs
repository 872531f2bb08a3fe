//! Group soft-thresholding and the proximal gradient loop.

use super::problem::{norm, Groups, SmoothLoss};

/// `max(0, 1 - tau / ||v||) v`, and `0` for `v = 0`.
pub fn prox_group(v: &[f64], tau: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_group_in_place(&mut out, tau);
    out
}

pub(crate) fn prox_group_in_place(v: &mut [f64], tau: f64) {
    let n = norm(v);
    // slack absorbs rounding in gradients evaluated at the threshold
    if n <= tau * (1.0 + 1e-12) || n == 0.0 {
        v.fill(0.0);
    } else {
        let f = 1.0 - tau / n;
        v.iter_mut().for_each(|x| *x *= f);
    }
}

/// Step-size rule for the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum StepRule {
    Backtracking { init: f64, shrink: f64, min: f64 },
    Fixed(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { init: 1.0, shrink: 0.5, min: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step: StepRule,
    /// Nesterov momentum with restart whenever it would raise the objective.
    pub accelerated: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: 5000, tol: 1e-8, step: StepRule::default(), accelerated: true }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Composite objective at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Composite objective after each iteration, starting with the initial point.
    pub history: Vec<f64>,
    /// Final step size.
    pub step: f64,
}

fn prox_all(v: &mut [f64], groups: &Groups, tau: f64) {
    for r in groups.ranges() {
        prox_group_in_place(&mut v[r.clone()], tau);
    }
}

struct Trial {
    z: Vec<f64>,
    f: f64,
    step: f64,
}

/// One proximal gradient step from `y` (with value `fy` and gradient `gy`).
fn prox_step(
    loss: &dyn SmoothLoss,
    groups: &Groups,
    lambda: f64,
    y: &[f64],
    fy: f64,
    gy: &[f64],
    step: f64,
    rule: StepRule,
) -> Trial {
    let mut s = step;
    loop {
        let mut z: Vec<f64> = y.iter().zip(gy).map(|(a, g)| a - s * g).collect();
        prox_all(&mut z, groups, s * lambda);
        let f = loss.value(&z);
        match rule {
            StepRule::Fixed(_) => return Trial { z, f, step: s },
            StepRule::Backtracking { shrink, min, .. } => {
                let mut lin = 0.0;
                let mut sq = 0.0;
                for ((zi, yi), gi) in z.iter().zip(y).zip(gy) {
                    let d = zi - yi;
                    lin += gi * d;
                    sq += d * d;
                }
                let model = fy + lin + sq / (2.0 * s);
                if f <= model + 1e-12 * fy.abs().max(1.0) || s <= min {
                    return Trial { z, f, step: s };
                }
                s = (s * shrink).max(min);
            }
        }
    }
}

/// Minimizes `loss(x) + lambda * sum_g ||x_g||` from `x0`.
pub fn minimize(loss: &dyn SmoothLoss, groups: &Groups, lambda: f64, x0: Vec<f64>, opts: &SolveOptions) -> Solution {
    let n = loss.dim();
    assert_eq!(x0.len(), n, "initial point has wrong length");
    let mut step = match opts.step {
        StepRule::Backtracking { init, .. } => init,
        StepRule::Fixed(eta) => eta,
    };
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut obj = loss.value(&x) + lambda * groups.penalty(&x);
    let mut history = vec![obj];
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let fy = loss.value_grad(&y, &mut grad);
        let mut trial = prox_step(loss, groups, lambda, &y, fy, &grad, step, opts.step);
        let mut new_obj = trial.f + lambda * groups.penalty(&trial.z);
        let mut restarted = false;
        if new_obj > obj && opts.accelerated && t > 1.0 {
            // momentum overshot: take a plain step from the current iterate
            let fx_now = loss.value_grad(&x, &mut grad);
            trial = prox_step(loss, groups, lambda, &x, fx_now, &grad, trial.step, opts.step);
            new_obj = trial.f + lambda * groups.penalty(&trial.z);
            restarted = true;
        }
        step = trial.step;
        if new_obj > obj {
            // no descent at the smallest admissible step; stay put
            history.push(obj);
            converged = matches!(opts.step, StepRule::Backtracking { .. });
            break;
        }
        let change = (obj - new_obj).abs();
        let prev = std::mem::replace(&mut x, trial.z);
        obj = new_obj;
        history.push(obj);
        debug_assert!(history[history.len() - 1] <= history[history.len() - 2]);

        if opts.accelerated && !restarted {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = x.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
            t = t_next;
        } else {
            y.copy_from_slice(&x);
            t = 1.0;
        }

        if change <= opts.tol * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Solution { x, objective: obj, iterations, converged, history, step }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prox_examples() {
        assert_eq!(prox_group(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        let out = prox_group(&[3.0, 4.0], 2.5);
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
        assert_eq!(prox_group(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn prox_satisfies_subgradient_condition(
            v in proptest::collection::vec(-5.0..5.0f64, 1..6),
            tau in 0.0..6.0f64,
        ) {
            let out = prox_group(&v, tau);
            let d: Vec<f64> = v.iter().zip(&out).map(|(a, b)| a - b).collect();
            let no = norm(&out);
            if no == 0.0 {
                prop_assert!(norm(&d) <= tau + 1e-12);
            } else {
                for (di, oi) in d.iter().zip(&out) {
                    prop_assert!((di - tau * oi / no).abs() < 1e-10);
                }
            }
        }
    }

    struct Quadratic {
        center: Vec<f64>,
        scale: Vec<f64>,
    }

    impl SmoothLoss for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value(&self, w: &[f64]) -> f64 {
            w.iter().zip(&self.center).zip(&self.scale).map(|((a, c), s)| 0.5 * s * (a - c) * (a - c)).sum()
        }
        fn value_grad(&self, w: &[f64], g: &mut [f64]) -> f64 {
            for i in 0..w.len() {
                g[i] = self.scale[i] * (w[i] - self.center[i]);
            }
            self.value(w)
        }
    }

    #[test]
    fn separable_quadratic_has_closed_form() {
        // with equal curvature per group the minimizer is prox(center, lambda / s)
        let q = Quadratic { center: vec![3.0, 4.0, 0.1, -0.1, 2.0], scale: vec![2.0, 2.0, 2.0, 2.0, 5.0] };
        let groups = Groups::new(vec![0..2, 2..4]);
        for accelerated in [false, true] {
            let opts = SolveOptions { tol: 1e-14, accelerated, ..Default::default() };
            let sol = minimize(&q, &groups, 1.0, vec![0.0; 5], &opts);
            assert!(sol.converged);
            let g0 = prox_group(&[3.0, 4.0], 0.5);
            assert!((sol.x[0] - g0[0]).abs() < 1e-6 && (sol.x[1] - g0[1]).abs() < 1e-6);
            assert_eq!(&sol.x[2..4], &[0.0, 0.0]);
            assert!((sol.x[4] - 2.0).abs() < 1e-6);
            assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn fixed_step_converges_on_quadratic() {
        let q = Quadratic { center: vec![1.0, -2.0], scale: vec![1.0, 1.0] };
        let groups = Groups::new(vec![0..2]);
        let opts = SolveOptions { step: StepRule::Fixed(0.5), tol: 1e-14, ..Default::default() };
        let sol = minimize(&q, &groups, 0.0, vec![0.0; 2], &opts);
        assert!((sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] + 2.0).abs() < 1e-6);
    }
}
