#![allow(dead_code)]

use ctxnet::simulate::{
    constant_q_preset, dynamic_preset, multinomial_preset, simulate_logistic_normal, simulate_multinomial, InitSpec,
};
use ctxnet::{EventPanel, InfluenceTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(m: usize, ko: usize, ki: usize, scale: f64, seed: u64) -> InfluenceTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = (0..m * ko * m * ki).map(|_| rng.random_range(-scale..scale)).collect();
    InfluenceTensor::from_flat(m, ko, ki, flat).unwrap()
}

pub fn random_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn categorical_panel(m: usize, k: usize, steps: usize, seed: u64) -> EventPanel {
    let model = multinomial_preset(m, k, m, seed).unwrap();
    simulate_multinomial(&model, steps, InitSpec::default(), seed + 1)
}

pub fn const_q_panel(m: usize, k: usize, steps: usize, seed: u64) -> EventPanel {
    let model = constant_q_preset(m, k, m, seed).unwrap();
    simulate_logistic_normal(&model, steps, InitSpec::default(), seed + 1)
}

pub fn dynamic_panel(m: usize, k: usize, steps: usize, seed: u64) -> EventPanel {
    let model = dynamic_preset(m, k, m, 2.0, 1.0, seed).unwrap();
    simulate_logistic_normal(&model, steps, InitSpec::default(), seed + 1)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central finite-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let num: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    num / den.max(1e-300)
}

/// Dense BFGS with Armijo backtracking, used as an independent optimizer.
pub fn bfgs(f: impl Fn(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, gtol: f64, max_iters: usize) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = vec![0.0; n * n];
    (0..n).for_each(|i| h[i * n + i] = 1.0);
    for _ in 0..max_iters {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < gtol {
            break;
        }
        let d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let (xn, fxn, gn) = loop {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (fxn, gn) = f(&xn);
            if fxn <= fx + 1e-4 * step * slope {
                break (xn, fxn, gn);
            }
            step *= 0.5;
            if step < 1e-16 {
                return x;
            }
        };
        if fxn >= fx {
            return x;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    x
}
