//! Optimality audit for group-penalized fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GroupIndex, InfluenceTensor};

/// Worst subgradient-condition violations over the `(m, m')` groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub lambda: f64,
    pub zero_groups: usize,
    pub active_groups: usize,
    /// `max (||g|| - lambda)_+` over zero groups.
    pub max_zero_violation: f64,
    /// `max ||g + lambda u / ||u|| ||` over nonzero groups.
    pub max_active_violation: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.max_zero_violation.max(self.max_active_violation)
    }

    /// Absolute check: both violations at most `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }

    /// Check scaled by the penalty: zero groups within `lambda (1 + tol)`,
    /// active groups within `lambda tol`.
    pub fn passes_relative(&self, tol: f64) -> bool {
        self.max_zero_violation <= self.lambda * tol && self.max_active_violation <= self.lambda * tol
    }

    fn absorb(&mut self, x: &[f64], g: &[f64]) {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            self.zero_groups += 1;
            self.max_zero_violation = self.max_zero_violation.max((ng - self.lambda).max(0.0));
        } else {
            let r = x.iter().zip(g).map(|(u, gi)| (gi + self.lambda * u / nx).powi(2)).sum::<f64>().sqrt();
            self.active_groups += 1;
            self.max_active_violation = self.max_active_violation.max(r);
        }
    }

    fn empty(lambda: f64) -> Self {
        Self { lambda, zero_groups: 0, active_groups: 0, max_zero_violation: 0.0, max_active_violation: 0.0 }
    }
}

/// Audits `a` against the gradient of the smooth loss at `a`.
pub fn kkt_audit(a: &InfluenceTensor, grad: &InfluenceTensor, lambda: f64) -> Result<KktReport> {
    if a.dims() != grad.dims() {
        return Err(Error::Dimension(format!("estimate {:?} vs gradient {:?}", a.dims(), grad.dims())));
    }
    let groups = GroupIndex::new(a.n_nodes());
    let dims = a.dims();
    let mut report = KktReport::empty(lambda);
    for (m, mm) in groups.iter() {
        let idx = groups.members(dims, m, mm);
        let x: Vec<f64> = idx.iter().map(|&i| a.as_slice()[i]).collect();
        let g: Vec<f64> = idx.iter().map(|&i| grad.as_slice()[i]).collect();
        report.absorb(&x, &g);
    }
    Ok(report)
}

/// Audit of a joint fit in the rescaled variables `(sqrt(alpha) A, sqrt(1 - alpha) B)`.
///
/// `grad_a` and `grad_b` are the gradients of the unweighted losses
/// `L^LN` and `L^Bern`.
pub fn kkt_audit_joint(
    a: &InfluenceTensor,
    b: &InfluenceTensor,
    grad_a: &InfluenceTensor,
    grad_b: &InfluenceTensor,
    alpha: f64,
    lambda: f64,
) -> Result<KktReport> {
    if a.dims() != grad_a.dims() || b.dims() != grad_b.dims() || a.n_nodes() != b.n_nodes() || a.k_in() != b.k_in() {
        return Err(Error::Dimension("joint audit inputs disagree in shape".into()));
    }
    let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let groups = GroupIndex::new(a.n_nodes());
    let mut report = KktReport::empty(lambda);
    for (m, mm) in groups.iter() {
        let ia = groups.members(a.dims(), m, mm);
        let ib = groups.members(b.dims(), m, mm);
        let mut x = Vec::with_capacity(ia.len() + ib.len());
        let mut g = Vec::with_capacity(ia.len() + ib.len());
        if alpha > 0.0 {
            x.extend(ia.iter().map(|&i| sa * a.as_slice()[i]));
            g.extend(ia.iter().map(|&i| sa * grad_a.as_slice()[i]));
        }
        if alpha < 1.0 {
            x.extend(ib.iter().map(|&i| sb * b.as_slice()[i]));
            g.extend(ib.iter().map(|&i| sb * grad_b.as_slice()[i]));
        }
        report.absorb(&x, &g);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_solution_reduces_to_dual_norm_bound() {
        let a = InfluenceTensor::zeros(2, 1, 1);
        let g = InfluenceTensor::from_flat(2, 1, 1, vec![0.5, -0.2, 0.1, 0.9]).unwrap();
        let r = kkt_audit(&a, &g, 1.0).unwrap();
        assert_eq!(r.zero_groups, 4);
        assert_eq!(r.max_violation(), 0.0);
        let r = kkt_audit(&a, &g, 0.6).unwrap();
        assert!((r.max_zero_violation - 0.3).abs() < 1e-15);
    }

    #[test]
    fn perturbed_solution_is_flagged() {
        // optimum of 0.5 (x - 3)^2 + |x| is x = 2 with gradient -1
        let a = InfluenceTensor::from_flat(1, 1, 1, vec![2.0]).unwrap();
        let g = InfluenceTensor::from_flat(1, 1, 1, vec![-1.0]).unwrap();
        assert!(kkt_audit(&a, &g, 1.0).unwrap().passes(1e-12));
        let a = InfluenceTensor::from_flat(1, 1, 1, vec![2.5]).unwrap();
        let g = InfluenceTensor::from_flat(1, 1, 1, vec![-0.5]).unwrap();
        let r = kkt_audit(&a, &g, 1.0).unwrap();
        assert!((r.max_active_violation - 0.5).abs() < 1e-15);
        assert!(!r.passes(1e-3));
    }
}
