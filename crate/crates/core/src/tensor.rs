//! Dense containers shared by every other module.
//!
//! Index conventions: a panel is `[t, m, k]`, an influence tensor is
//! `[m, k, m', k']` in row-major order, so the fiber `A[m, ..]` that drives
//! node `m` is one contiguous slice.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simplex tolerance applied on ingest.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PanelKind {
    /// Every event row is one-hot.
    Categorical,
    /// Every event row is a strictly positive simplex vector.
    Compositional,
}

/// A problem found while checking panel rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowViolation {
    pub t: usize,
    pub node: usize,
    pub reason: String,
}

/// The `(T+1) x M x K` observation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPanel {
    data: Array3<f64>,
    kind: PanelKind,
}

impl EventPanel {
    /// Validates and wraps `data`. Compositional rows within [`SIMPLEX_TOL`]
    /// of the simplex are renormalized with [`normalize_simplex`].
    pub fn new(mut data: Array3<f64>, kind: PanelKind) -> Result<Self> {
        if let Some(v) = check_rows(&data, kind).into_iter().next() {
            return Err(Error::InvalidRow { t: v.t, node: v.node, reason: v.reason });
        }
        if kind == PanelKind::Compositional {
            for mut row in data.rows_mut() {
                let mut v = row.to_vec();
                if v.iter().any(|&x| x != 0.0) {
                    normalize_simplex(&mut v);
                    row.iter_mut().zip(v).for_each(|(r, x)| *r = x);
                }
            }
        }
        Ok(Self { data, kind })
    }

    /// Wraps data produced by a trusted generator without re-checking rows.
    pub(crate) fn from_trusted(data: Array3<f64>, kind: PanelKind) -> Self {
        debug_assert!(check_rows(&data, kind).is_empty());
        Self { data, kind }
    }

    pub fn zeros(t_len: usize, nodes: usize, categories: usize, kind: PanelKind) -> Self {
        Self { data: Array3::zeros((t_len, nodes, categories)), kind }
    }

    pub fn kind(&self) -> PanelKind {
        self.kind
    }

    /// Number of stored time points, `T + 1`.
    pub fn t_len(&self) -> usize {
        self.data.dim().0
    }

    /// Number of transitions `T`.
    pub fn n_steps(&self) -> usize {
        self.t_len().saturating_sub(1)
    }

    pub fn n_nodes(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_categories(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn row(&self, t: usize, node: usize) -> ArrayView1<'_, f64> {
        self.data.slice(ndarray::s![t, node, ..])
    }

    pub fn frame(&self, t: usize) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![t, .., ..])
    }

    pub fn has_event(&self, t: usize, node: usize) -> bool {
        self.row(t, node).iter().any(|&x| x != 0.0)
    }

    /// Category of a one-hot row, `None` for the zero row.
    pub fn category(&self, t: usize, node: usize) -> Option<usize> {
        self.row(t, node).iter().position(|&x| x != 0.0)
    }

    /// `T_m`: number of events at `node` over `t = 1..=T`.
    pub fn event_count(&self, node: usize) -> usize {
        (1..self.t_len()).filter(|&t| self.has_event(t, node)).count()
    }

    /// `T_m / T` for every node.
    pub fn event_frequencies(&self) -> Vec<f64> {
        let steps = self.n_steps().max(1) as f64;
        (0..self.n_nodes()).map(|m| self.event_count(m) as f64 / steps).collect()
    }

    /// The first `steps + 1` time points.
    pub fn prefix(&self, steps: usize) -> EventPanel {
        let end = (steps + 1).min(self.t_len());
        Self { data: self.data.slice(ndarray::s![..end, .., ..]).to_owned(), kind: self.kind }
    }

    /// Time points `start..end` as a new panel.
    pub fn window(&self, start: usize, end: usize) -> EventPanel {
        Self { data: self.data.slice(ndarray::s![start..end, .., ..]).to_owned(), kind: self.kind }
    }
}

/// Checks the row invariants without constructing a panel.
/// Divides by the row sum unless it is already within rounding error of one,
/// so normalizing twice changes nothing.
pub fn normalize_simplex(row: &mut [f64]) {
    let slack = 2.0 * (row.len() + 1) as f64 * f64::EPSILON;
    for _ in 0..4 {
        let s = row.iter().fold(0.0, |a, &x| a + x);
        if (s - 1.0).abs() <= slack || s <= 0.0 {
            return;
        }
        row.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn check_rows(data: &Array3<f64>, kind: PanelKind) -> Vec<RowViolation> {
    let (tl, m, _) = data.dim();
    let mut out = Vec::new();
    for t in 0..tl {
        for node in 0..m {
            let row = data.slice(ndarray::s![t, node, ..]);
            if let Some(reason) = row_problem(row, kind) {
                out.push(RowViolation { t, node, reason });
            }
        }
    }
    out
}

fn row_problem(row: ArrayView1<f64>, kind: PanelKind) -> Option<String> {
    if row.iter().any(|x| !x.is_finite()) {
        return Some("non-finite entry".into());
    }
    if row.iter().any(|&x| x < 0.0) {
        return Some("negative entry".into());
    }
    if row.iter().all(|&x| x == 0.0) {
        return None;
    }
    match kind {
        PanelKind::Categorical => {
            let ones = row.iter().filter(|&&x| x == 1.0).count();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                Some("row is not one-hot".into())
            } else {
                None
            }
        }
        PanelKind::Compositional => {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                Some(format!("row sums to {s}, not 1"))
            } else if row.iter().any(|&x| x <= 0.0) {
                Some("row has a non-positive entry".into())
            } else {
                None
            }
        }
    }
}

/// A 4th-order network tensor `[m, k, m', k']`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTensor {
    data: Array4<f64>,
}

impl InfluenceTensor {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("influence tensor has non-finite entries".into()));
        }
        let (m, _, m2, _) = data.dim();
        if m != m2 {
            return Err(Error::Dimension(format!("target nodes {m} vs source nodes {m2}")));
        }
        Ok(Self { data: data.as_standard_layout().to_owned() })
    }

    pub fn zeros(nodes: usize, k_out: usize, k_in: usize) -> Self {
        Self { data: Array4::zeros((nodes, k_out, nodes, k_in)) }
    }

    pub fn from_flat(nodes: usize, k_out: usize, k_in: usize, flat: Vec<f64>) -> Result<Self> {
        let n = nodes * k_out * nodes * k_in;
        if flat.len() != n {
            return Err(Error::Dimension(format!("expected {n} entries, got {}", flat.len())));
        }
        Self::new(Array4::from_shape_vec((nodes, k_out, nodes, k_in), flat).expect("shape checked"))
    }

    /// `(M, K_out, M, K_in)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.data.dim().0
    }

    pub fn k_out(&self) -> usize {
        self.data.dim().1
    }

    pub fn k_in(&self) -> usize {
        self.data.dim().3
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub(crate) fn as_slice_mut(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    /// Contiguous `K_out x (M*K_in)` block of parameters driving `node`.
    pub fn node_slice(&self, node: usize) -> &[f64] {
        let len = self.k_out() * self.n_nodes() * self.k_in();
        &self.as_slice()[node * len..(node + 1) * len]
    }

    pub fn node_slice_mut(&mut self, node: usize) -> &mut [f64] {
        let len = self.k_out() * self.n_nodes() * self.k_in();
        &mut self.as_slice_mut()[node * len..(node + 1) * len]
    }

    /// Squared Frobenius norm of the fiber `A[m, :, m', :]`.
    pub fn group_sq_norm(&self, m: usize, m_src: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.k_out() {
            for kk in 0..self.k_in() {
                let v = self.data[[m, k, m_src, kk]];
                s += v * v;
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: &self.data * c }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_dims(self, other)?;
        Ok(Self { data: &self.data + &other.data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// `<A_{mk}, X>` for every output category `k` of `node`.
    pub fn intensity(&self, node: usize, frame: ArrayView2<f64>) -> Vec<f64> {
        let (_, k_out, m, k_in) = self.dims();
        let w = self.node_slice(node);
        let p = m * k_in;
        let mut out = vec![0.0; k_out];
        for (src, x_row) in frame.outer_iter().enumerate() {
            for (kk, &x) in x_row.iter().enumerate() {
                if x != 0.0 {
                    let j = src * k_in + kk;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += w[k * p + j] * x;
                    }
                }
            }
        }
        out
    }
}

fn same_dims(a: &InfluenceTensor, b: &InfluenceTensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Known or fitted intercept terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Intercepts {
    /// `[m, k]`: `K` columns for multinomial use, `K-1` for logistic-normal use.
    pub nu: Array2<f64>,
    /// Occurrence offsets `[m]`.
    pub eta: Option<Array1<f64>>,
}

impl Intercepts {
    pub fn new(nu: Array2<f64>, eta: Option<Array1<f64>>) -> Result<Self> {
        if nu.iter().any(|x| !x.is_finite()) || eta.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite intercept".into()));
        }
        if let Some(e) = &eta {
            if e.len() != nu.nrows() {
                return Err(Error::Dimension(format!("eta has {} nodes, nu {}", e.len(), nu.nrows())));
            }
        }
        Ok(Self { nu, eta })
    }

    pub fn constant(nodes: usize, cols: usize, value: f64) -> Self {
        Self { nu: Array2::from_elem((nodes, cols), value), eta: None }
    }

    pub fn with_eta(mut self, eta: Array1<f64>) -> Self {
        self.eta = Some(eta);
        self
    }
}

/// The `(m, m')` groups of a network tensor; each group is the fiber
/// `A[m, :, m', :]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    nodes: usize,
}

impl GroupIndex {
    pub fn new(nodes: usize) -> Self {
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes).flat_map(move |m| (0..self.nodes).map(move |mm| (m, mm)))
    }

    /// Flat row-major offsets of every entry of group `(m, m')` in a tensor
    /// with the given dims.
    pub fn members(&self, dims: (usize, usize, usize, usize), m: usize, m_src: usize) -> Vec<usize> {
        let (_, k_out, n, k_in) = dims;
        let mut v = Vec::with_capacity(k_out * k_in);
        for k in 0..k_out {
            for kk in 0..k_in {
                v.push(((m * k_out + k) * n + m_src) * k_in + kk);
            }
        }
        v
    }
}

/// `||A||_R = sum_{m,m'} ||A[m,:,m',:]||_F`.
pub fn group_norm_r(a: &InfluenceTensor) -> f64 {
    GroupIndex::new(a.n_nodes()).iter().map(|(m, mm)| a.group_sq_norm(m, mm).sqrt()).sum()
}

/// `R_alpha(A, B) = sum_{m,m'} (alpha ||A_{m,:,m',:}||_F^2 + (1-alpha) ||B_{m,m',:}||^2)^(1/2)`.
pub fn group_norm_r_alpha(a: &InfluenceTensor, b: &InfluenceTensor, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let (m, _, m2, k) = a.dims();
    let (bm, bk_out, bm2, bk) = b.dims();
    if m != bm || m2 != bm2 || k != bk || bk_out != 1 {
        return Err(Error::Dimension(format!("A {:?} vs B {:?}", a.dims(), b.dims())));
    }
    Ok(GroupIndex::new(m)
        .iter()
        .map(|(i, j)| (alpha * a.group_sq_norm(i, j) + (1.0 - alpha) * b.group_sq_norm(i, j)).sqrt())
        .sum())
}

/// `||A - B||_F^2`.
pub fn frobenius_sq_diff(a: &InfluenceTensor, b: &InfluenceTensor) -> Result<f64> {
    same_dims(a, b)?;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum())
}
