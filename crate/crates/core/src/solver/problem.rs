//! Per-node smooth losses in the solver's working layout.
//!
//! Each node's parameters are stored feature-major: entry `(j, r)` lives at
//! `j * rows + r`, where `j` runs over the `M * K` covariates (plus one
//! trailing intercept feature when intercepts are fitted) and `r` over the
//! output rows. The group of source node `m'` is then the contiguous range
//! of features `m' K .. (m' + 1) K`.

use std::ops::Range;

use crate::objective::{multinomial_link, softplus};
use crate::simulate::logistic;
use crate::tensor::EventPanel;

/// A differentiable loss over a flat parameter vector.
pub trait SmoothLoss: Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the value.
    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64;
}

/// Penalized groups as disjoint index ranges; indices outside every range
/// are unpenalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    ranges: Vec<Range<usize>>,
}

impl Groups {
    pub fn new(ranges: Vec<Range<usize>>) -> Self {
        Self { ranges }
    }

    /// Groups of one node problem: `nodes` source groups of `k_in` features,
    /// each spanning all `rows` outputs.
    pub fn for_node(nodes: usize, k_in: usize, rows: usize) -> Self {
        let w = k_in * rows;
        Self { ranges: (0..nodes).map(|g| g * w..(g + 1) * w).collect() }
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn penalty(&self, w: &[f64]) -> f64 {
        self.ranges.iter().map(|r| norm(&w[r.clone()])).sum()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Covariate rows `x^t = vec(X^t)` for a list of transitions, kept sparse
/// and, when mostly nonzero, also as a dense row-major matrix.
#[derive(Debug, Clone)]
pub struct Design {
    n_features: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    dense: Option<Vec<f64>>,
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

impl Design {
    /// Rows are the frames `X^t` for `t` in `times`.
    pub fn from_panel(panel: &EventPanel, times: &[usize]) -> Self {
        let (m, k) = (panel.n_nodes(), panel.n_categories());
        let mut indptr = Vec::with_capacity(times.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &t in times {
            for node in 0..m {
                for (c, &v) in panel.row(t, node).iter().enumerate() {
                    if v != 0.0 {
                        indices.push((node * k + c) as u32);
                        values.push(v);
                    }
                }
            }
            indptr.push(indices.len());
        }
        Self { n_features: m * k, indptr, indices, values, dense: None }.densify()
    }

    /// Aggregated occurrence covariates `1{X^t_m != 0}`, one feature per node.
    pub fn occurrence_from_panel(panel: &EventPanel, times: &[usize]) -> Self {
        let m = panel.n_nodes();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        for &t in times {
            for node in 0..m {
                if panel.has_event(t, node) {
                    indices.push(node as u32);
                }
            }
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Self { n_features: m, indptr, indices, values, dense: None }.densify()
    }

    fn densify(mut self) -> Self {
        let (n, p) = (self.n_rows(), self.n_features);
        if 2 * self.values.len() > n * p {
            let mut x = vec![0.0; n * p];
            for i in 0..n {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).for_each(|(&j, &v)| x[i * p + j as usize] = v);
            }
            self.dense = Some(x);
        }
        self
    }

    /// Row-major `n_rows x n_features` matrix when the design is mostly nonzero.
    pub fn dense(&self) -> Option<&[f64]> {
        self.dense.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }
}

/// Sentinel for "no event" in categorical targets.
pub const NO_EVENT: u8 = u8::MAX;

/// Per-node multinomial negative log-likelihood.
pub struct MultinomialNode<'a> {
    pub design: &'a Design,
    /// Category of `X^{t+1}_m` per design row, or [`NO_EVENT`].
    pub targets: &'a [u8],
    pub offset: &'a [f64],
    pub intercept: bool,
}

impl MultinomialNode<'_> {
    fn cols(&self) -> usize {
        self.design.n_features() + usize::from(self.intercept)
    }

    fn eval(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let k = self.offset.len();
        let p = self.design.n_features();
        let mut mu = vec![0.0; k];
        let mut r = vec![0.0; k];
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        for i in 0..self.design.n_rows() {
            let (idx, val) = self.design.row(i);
            mu.copy_from_slice(self.offset);
            if self.intercept {
                mu.iter_mut().zip(&w[p * k..(p + 1) * k]).for_each(|(m, b)| *m += b);
            }
            for (&j, &v) in idx.iter().zip(val) {
                let wj = &w[j as usize * k..(j as usize + 1) * k];
                mu.iter_mut().zip(wj).for_each(|(m, a)| *m += a * v);
            }
            let y = self.targets[i];
            let observed = if y == NO_EVENT { 0.0 } else { mu[y as usize] };
            if let Some(g) = grad.as_deref_mut() {
                let mx = mu.iter().fold(0.0_f64, |a, &b| a.max(b));
                let mut s = (-mx).exp();
                for (ri, &m) in r.iter_mut().zip(&mu) {
                    *ri = (m - mx).exp();
                    s += *ri;
                }
                total += mx + s.ln() - observed;
                r.iter_mut().for_each(|v| *v /= s);
                if y != NO_EVENT {
                    r[y as usize] -= 1.0;
                }
                for (&j, &v) in idx.iter().zip(val) {
                    let gj = &mut g[j as usize * k..(j as usize + 1) * k];
                    gj.iter_mut().zip(&r).for_each(|(gg, rr)| *gg += rr * v);
                }
                if self.intercept {
                    g[p * k..(p + 1) * k].iter_mut().zip(&r).for_each(|(gg, rr)| *gg += rr);
                }
            } else {
                total += multinomial_link(&mu) - observed;
            }
        }
        let scale = 1.0 / self.design.n_rows().max(1) as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v *= scale);
        }
        total * scale
    }
}

impl SmoothLoss for MultinomialNode<'_> {
    fn dim(&self) -> usize {
        self.cols() * self.offset.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.eval(w, None)
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(w, Some(grad))
    }
}

/// Per-node Bernoulli occurrence loss.
pub struct BernoulliNode<'a> {
    pub design: &'a Design,
    /// `1{X^{t+1}_m != 0}` per design row.
    pub targets: &'a [bool],
    pub offset: f64,
    pub intercept: bool,
}

impl BernoulliNode<'_> {
    fn eval(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let p = self.design.n_features();
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let bias = self.offset + if self.intercept { w[p] } else { 0.0 };
        let mut total = 0.0;
        if let Some(x) = self.design.dense() {
            let wp = &w[..p];
            for (row, &t) in x.chunks_exact(p.max(1)).zip(self.targets) {
                let z = bias + dot(row, wp);
                let y = if t { 1.0 } else { 0.0 };
                total += softplus(z) - z * y;
                if let Some(g) = grad.as_deref_mut() {
                    let r = logistic(z) - y;
                    g[..p].iter_mut().zip(row).for_each(|(gg, v)| *gg += r * v);
                    if self.intercept {
                        g[p] += r;
                    }
                }
            }
            let scale = 1.0 / self.design.n_rows().max(1) as f64;
            if let Some(g) = grad {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            return total * scale;
        }
        for i in 0..self.design.n_rows() {
            let (idx, val) = self.design.row(i);
            let mut z = bias;
            for (&j, &v) in idx.iter().zip(val) {
                z += w[j as usize] * v;
            }
            let y = if self.targets[i] { 1.0 } else { 0.0 };
            total += softplus(z) - z * y;
            if let Some(g) = grad.as_deref_mut() {
                let r = logistic(z) - y;
                for (&j, &v) in idx.iter().zip(val) {
                    g[j as usize] += r * v;
                }
                if self.intercept {
                    g[p] += r;
                }
            }
        }
        let scale = 1.0 / self.design.n_rows().max(1) as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v *= scale);
        }
        total * scale
    }
}

impl SmoothLoss for BernoulliNode<'_> {
    fn dim(&self) -> usize {
        self.design.n_features() + usize::from(self.intercept)
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.eval(w, None)
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(w, Some(grad))
    }
}

/// Per-node masked squared loss held as sufficient statistics:
/// `G = sum x x^T`, `C = sum x (Y - offset)^T`, `s0 = sum ||Y - offset||^2`
/// over event transitions, normalized by the number of transitions.
#[derive(Debug, Clone)]
pub struct SquaredNode {
    cols: usize,
    rows: usize,
    gram: Vec<f64>,
    cross: Vec<f64>,
    s0: f64,
    n: usize,
}

impl SquaredNode {
    /// `y[i]` is the `(K-1)`-vector of log-ratios of design row `i`'s target,
    /// or `None` when no event occurred.
    pub fn new(design: &Design, y: &[Option<&[f64]>], offset: &[f64], intercept: bool) -> Self {
        let rows = offset.len();
        let p = design.n_features();
        let cols = p + usize::from(intercept);
        let mut gram = vec![0.0; cols * cols];
        let mut cross = vec![0.0; cols * rows];
        let mut s0 = 0.0;
        let mut resid = vec![0.0; rows];
        for (i, yi) in y.iter().enumerate() {
            let Some(yi) = yi else { continue };
            let (idx, val) = design.row(i);
            for r in 0..rows {
                resid[r] = yi[r] - offset[r];
            }
            s0 += resid.iter().map(|v| v * v).sum::<f64>();
            if let Some(x) = design.dense() {
                let row = &x[i * p..(i + 1) * p];
                for (a, &va) in row.iter().enumerate() {
                    gram[a * cols..a * cols + a + 1].iter_mut().zip(&row[..=a]).for_each(|(g, &vb)| *g += va * vb);
                    for r in 0..rows {
                        cross[a * rows + r] += va * resid[r];
                    }
                }
                if intercept {
                    gram[p * cols..p * cols + p].iter_mut().zip(row).for_each(|(g, &v)| *g += v);
                    gram[p * cols + p] += 1.0;
                    for r in 0..rows {
                        cross[p * rows + r] += resid[r];
                    }
                }
                continue;
            }
            for (a, (&ja, &va)) in idx.iter().zip(val).enumerate() {
                let ja = ja as usize;
                for (&jb, &vb) in idx[..=a].iter().zip(&val[..=a]) {
                    gram[ja * cols + jb as usize] += va * vb;
                }
                for r in 0..rows {
                    cross[ja * rows + r] += va * resid[r];
                }
            }
            if intercept {
                for (&ja, &va) in idx.iter().zip(val) {
                    gram[p * cols + ja as usize] += va;
                }
                gram[p * cols + p] += 1.0;
                for r in 0..rows {
                    cross[p * rows + r] += resid[r];
                }
            }
        }
        // indices within a row are increasing, so the lower triangle is filled
        for a in 0..cols {
            for b in 0..a {
                gram[b * cols + a] = gram[a * cols + b];
            }
        }
        Self { cols, rows, gram, cross, s0, n: design.n_rows().max(1) }
    }

    fn eval(&self, w: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (cols, rows) = (self.cols, self.rows);
        let mut h = vec![0.0; cols * rows];
        for a in 0..cols {
            let ga = &self.gram[a * cols..(a + 1) * cols];
            let ha = &mut h[a * rows..(a + 1) * rows];
            for (b, &g) in ga.iter().enumerate() {
                if g != 0.0 {
                    let wb = &w[b * rows..(b + 1) * rows];
                    ha.iter_mut().zip(wb).for_each(|(x, y)| *x += g * y);
                }
            }
        }
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..cols * rows {
            quad += w[i] * h[i];
            lin += w[i] * self.cross[i];
        }
        let scale = 1.0 / self.n as f64;
        if let Some(g) = grad {
            for i in 0..cols * rows {
                g[i] = (h[i] - self.cross[i]) * scale;
            }
        }
        (0.5 * quad - lin + 0.5 * self.s0) * scale
    }
}

impl SmoothLoss for SquaredNode {
    fn dim(&self) -> usize {
        self.cols * self.rows
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.eval(w, None)
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(w, Some(grad))
    }
}

/// `alpha L^LN + (1 - alpha) L^Bern` in the rescaled variables
/// `(sqrt(alpha) A_m, sqrt(1 - alpha) B_m)`, stacked as `K` rows per
/// feature: `K - 1` relative rows then the occurrence row.
pub struct JointNode<'a> {
    pub squared: &'a SquaredNode,
    pub bernoulli: BernoulliNode<'a>,
    pub alpha: f64,
}

impl JointNode<'_> {
    fn split(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rows = self.squared.rows;
        let stride = rows + 1;
        let (sa, sb) = (self.alpha.sqrt(), (1.0 - self.alpha).sqrt());
        let cols = self.squared.cols;
        let mut a = Vec::with_capacity(cols * rows);
        let mut b = Vec::with_capacity(cols);
        for j in 0..cols {
            a.extend(w[j * stride..j * stride + rows].iter().map(|v| v / sa));
            b.push(w[j * stride + rows] / sb);
        }
        (a, b)
    }
}

impl SmoothLoss for JointNode<'_> {
    fn dim(&self) -> usize {
        self.squared.cols * (self.squared.rows + 1)
    }

    fn value(&self, w: &[f64]) -> f64 {
        let (a, b) = self.split(w);
        self.alpha * self.squared.value(&a) + (1.0 - self.alpha) * self.bernoulli.value(&b)
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let (a, b) = self.split(w);
        let mut ga = vec![0.0; a.len()];
        let mut gb = vec![0.0; b.len()];
        let va = self.squared.value_grad(&a, &mut ga);
        let vb = self.bernoulli.value_grad(&b, &mut gb);
        let rows = self.squared.rows;
        let stride = rows + 1;
        let (sa, sb) = (self.alpha.sqrt(), (1.0 - self.alpha).sqrt());
        for j in 0..self.squared.cols {
            for r in 0..rows {
                grad[j * stride + r] = sa * ga[j * rows + r];
            }
            grad[j * stride + rows] = sb * gb[j];
        }
        self.alpha * va + (1.0 - self.alpha) * vb
    }
}

/// Tensor node slice (`[r][j]`, row-major) to working layout, appending the
/// intercept feature when given.
pub(crate) fn to_working(slice: &[f64], rows: usize, intercept: Option<&[f64]>) -> Vec<f64> {
    let p = slice.len() / rows;
    let cols = p + usize::from(intercept.is_some());
    let mut w = vec![0.0; cols * rows];
    for r in 0..rows {
        for j in 0..p {
            w[j * rows + r] = slice[r * p + j];
        }
    }
    if let Some(b) = intercept {
        w[p * rows..].copy_from_slice(b);
    }
    w
}

/// Inverse of [`to_working`]: writes the network part into `slice` and
/// returns the intercept feature (empty when absent).
pub(crate) fn from_working(w: &[f64], rows: usize, slice: &mut [f64]) -> Vec<f64> {
    let p = slice.len() / rows;
    for r in 0..rows {
        for j in 0..p {
            slice[r * p + j] = w[j * rows + r];
        }
    }
    w[p * rows..].to_vec()
}
