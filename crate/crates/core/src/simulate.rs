//! Seeded generators for the multinomial, logistic-normal and mixture models.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};
use crate::tensor::{EventPanel, InfluenceTensor, PanelKind};

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Category probabilities `(p_1, .., p_K, p_none)` for intensities `mu`
/// under the softmax with an implicit zero "no event" slot.
pub fn multinomial_probabilities(mu: &[f64]) -> Vec<f64> {
    let mx = mu.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut p: Vec<f64> = mu.iter().map(|&x| (x - mx).exp()).collect();
    p.push((-mx).exp());
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Additive-logistic map: `log(Z_k / Z_K) = y_k` for `k < K`.
pub fn additive_logistic(y: &[f64]) -> Vec<f64> {
    let mut z = multinomial_probabilities(y);
    // a component can underflow for extreme log-ratios; keep rows strictly positive
    if z.iter().any(|&v| v <= 0.0) {
        z.iter_mut().for_each(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    crate::tensor::normalize_simplex(&mut z);
    z
}

/// Symmetric positive-definite noise covariance with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    sigma: Array2<f64>,
    chol: Array2<f64>,
}

impl Covariance {
    pub fn new(sigma: Array2<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if sigma.ncols() != d {
            return Err(Error::Dimension(format!("covariance is {}x{}", d, sigma.ncols())));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma[[i, j]] - sigma[[j, i]]).abs() > 1e-12 * (1.0 + sigma[[i, j]].abs()) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(&sigma).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { sigma, chol })
    }

    pub fn scaled_identity(dim: usize, variance: f64) -> Result<Self> {
        Self::new(Array2::eye(dim) * variance)
    }

    /// Degenerate zero covariance; draws are exactly the mean.
    pub fn zero(dim: usize) -> Self {
        Self { sigma: Array2::zeros((dim, dim)), chol: Array2::zeros((dim, dim)) }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.sigma
    }

    /// `L z` for a standard normal vector `z`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d).map(|i| (0..=i).map(|j| self.chol[[i, j]] * z[j]).sum()).collect()
    }
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = a[[i, i]] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Draws `Z ~ LN(mu, Sigma)` on the `K`-simplex, `K = mu.len() + 1`.
pub fn sample_logistic_normal<R: Rng + ?Sized>(mu: &[f64], cov: &Covariance, rng: &mut R) -> Vec<f64> {
    let eps = cov.draw(rng);
    let y: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
    additive_logistic(&y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialModel {
    /// `(M, K, M, K)` absolute network.
    pub a: InfluenceTensor,
    /// `M x K` intercepts.
    pub nu: Array2<f64>,
}

impl MultinomialModel {
    pub fn new(a: InfluenceTensor, nu: Array2<f64>) -> Result<Self> {
        let (m, ko, _, ki) = a.dims();
        if ko != ki || nu.dim() != (m, ki) {
            return Err(Error::Dimension(format!("A {:?} with nu {:?}", a.dims(), nu.dim())));
        }
        Ok(Self { a, nu })
    }

    pub fn n_nodes(&self) -> usize {
        self.a.n_nodes()
    }

    pub fn n_categories(&self) -> usize {
        self.a.k_in()
    }

    pub fn intensities(&self, node: usize, frame: ArrayView2<f64>) -> Vec<f64> {
        let mut mu = self.a.intensity(node, frame);
        mu.iter_mut().zip(self.nu.row(node)).for_each(|(x, n)| *x += n);
        mu
    }

    /// `(p_1, .., p_K, p_none)` for `node` given the previous frame.
    pub fn probabilities(&self, node: usize, frame: ArrayView2<f64>) -> Vec<f64> {
        multinomial_probabilities(&self.intensities(node, frame))
    }
}

/// How event occurrence is modelled in the logistic-normal model.
#[derive(Debug, Clone, PartialEq)]
pub enum Occurrence {
    ConstantQ(Array1<f64>),
    Dynamic { b: InfluenceTensor, eta: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticNormalModel {
    /// `(M, K-1, M, K)` relative network.
    pub a: InfluenceTensor,
    /// `M x (K-1)` intercepts.
    pub nu: Array2<f64>,
    pub sigma: Covariance,
    pub occurrence: Occurrence,
}

impl LogisticNormalModel {
    pub fn new(a: InfluenceTensor, nu: Array2<f64>, sigma: Covariance, occurrence: Occurrence) -> Result<Self> {
        let (m, ko, _, ki) = a.dims();
        if ki < 2 || ko + 1 != ki || nu.dim() != (m, ko) || sigma.dim() != ko {
            return Err(Error::Dimension(format!(
                "A {:?}, nu {:?}, Sigma {}",
                a.dims(),
                nu.dim(),
                sigma.dim()
            )));
        }
        match &occurrence {
            Occurrence::ConstantQ(q) => {
                if q.len() != m || q.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                    return Err(Error::InvalidParameter("q must have M entries in (0, 1]".into()));
                }
            }
            Occurrence::Dynamic { b, eta } => {
                if b.dims() != (m, 1, m, ki) || eta.len() != m {
                    return Err(Error::Dimension(format!("B {:?}, eta {}", b.dims(), eta.len())));
                }
            }
        }
        Ok(Self { a, nu, sigma, occurrence })
    }

    pub fn n_nodes(&self) -> usize {
        self.a.n_nodes()
    }

    pub fn n_categories(&self) -> usize {
        self.a.k_in()
    }

    /// Expected log-ratios `<A_m, X> + nu_m`.
    pub fn mean_log_ratios(&self, node: usize, frame: ArrayView2<f64>) -> Vec<f64> {
        let mut mu = self.a.intensity(node, frame);
        mu.iter_mut().zip(self.nu.row(node)).for_each(|(x, n)| *x += n);
        mu
    }

    pub fn occurrence_probability(&self, node: usize, frame: ArrayView2<f64>) -> f64 {
        match &self.occurrence {
            Occurrence::ConstantQ(q) => q[node],
            Occurrence::Dynamic { b, eta } => logistic(b.intensity(node, frame)[0] + eta[node]),
        }
    }
}

/// Initial frame `X^0`: events with probability `event_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub event_prob: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { event_prob: 0.8 }
    }
}

fn draw_category<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulates `T` transitions of the multinomial model.
pub fn simulate_multinomial(model: &MultinomialModel, steps: usize, init: InitSpec, seed: u64) -> EventPanel {
    let (m, k) = (model.n_nodes(), model.n_categories());
    let streams = Streams::new(seed);
    let mut data = Array3::zeros((steps + 1, m, k));
    for node in 0..m {
        let mut rng = streams.at(Purpose::Init, 0, node, m);
        if rng.random::<f64>() < init.event_prob {
            let c = rng.random_range(0..k);
            data[[0, node, c]] = 1.0;
        }
    }
    for t in 0..steps {
        for node in 0..m {
            let probs = model.probabilities(node, data.slice(ndarray::s![t, .., ..]));
            let mut rng = streams.at(Purpose::Step, t + 1, node, m);
            let c = draw_category(&probs, &mut rng);
            if c < k {
                data[[t + 1, node, c]] = 1.0;
            }
        }
    }
    EventPanel::from_trusted(data, PanelKind::Categorical)
}

/// Simulates `T` transitions of the logistic-normal model.
pub fn simulate_logistic_normal(model: &LogisticNormalModel, steps: usize, init: InitSpec, seed: u64) -> EventPanel {
    let (m, k) = (model.n_nodes(), model.n_categories());
    let streams = Streams::new(seed);
    let mut data = Array3::zeros((steps + 1, m, k));
    for node in 0..m {
        let mut rng = streams.at(Purpose::Init, 0, node, m);
        if rng.random::<f64>() < init.event_prob {
            let nu: Vec<f64> = model.nu.row(node).to_vec();
            let z = sample_logistic_normal(&nu, &model.sigma, &mut rng);
            data.slice_mut(ndarray::s![0, node, ..]).assign(&Array1::from(z));
        }
    }
    for t in 0..steps {
        for node in 0..m {
            let frame = data.slice(ndarray::s![t, .., ..]);
            let q = model.occurrence_probability(node, frame);
            let mut rng = streams.at(Purpose::Step, t + 1, node, m);
            if rng.random::<f64>() < q {
                let mu = model.mean_log_ratios(node, frame);
                let z = sample_logistic_normal(&mu, &model.sigma, &mut rng);
                data.slice_mut(ndarray::s![t + 1, node, ..]).assign(&Array1::from(z));
            }
        }
    }
    EventPanel::from_trusted(data, PanelKind::Compositional)
}

/// Node partition and parameters of the two-population mixture model.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// Nodes with mixed-membership events (logistic-normal dynamics).
    pub mixed: Vec<usize>,
    /// Nodes whose events fall in one category (multinomial dynamics, then
    /// contaminated).
    pub focused: Vec<usize>,
    /// Full-size logistic-normal model; rows of focused nodes are unused.
    pub ln: LogisticNormalModel,
    /// Full-size multinomial model; rows of mixed nodes are unused.
    pub mn: MultinomialModel,
    pub sigma_contam: f64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.ln.n_nodes();
        if self.mn.n_nodes() != m || self.mn.n_categories() != self.ln.n_categories() {
            return Err(Error::Dimension("mixture components disagree on M or K".into()));
        }
        let mut seen = vec![0u8; m];
        for &i in self.mixed.iter().chain(&self.focused) {
            if i >= m {
                return Err(Error::InvalidParameter(format!("node {i} out of range")));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidParameter("node sets must partition 0..M".into()));
        }
        if !(self.sigma_contam > 0.0) {
            return Err(Error::InvalidParameter("sigma_contam must be positive".into()));
        }
        if !matches!(self.ln.occurrence, Occurrence::Dynamic { .. }) {
            return Err(Error::InvalidParameter("mixed nodes need a dynamic occurrence model".into()));
        }
        Ok(())
    }

    /// Logistic-normal centre used to contaminate category `c`: `e_c` for
    /// `c < K-1`, `(-1, .., -1)` for the baseline.
    pub fn contamination_center(k: usize, c: usize) -> Vec<f64> {
        if c + 1 == k {
            vec![-1.0; k - 1]
        } else {
            let mut v = vec![0.0; k - 1];
            v[c] = 1.0;
            v
        }
    }

    /// The 17-node, 5-category two-population network.
    pub fn reference() -> Self {
        let (m, k) = (17, 5);
        let mixed: Vec<usize> = (0..5).collect();
        let focused: Vec<usize> = (5..17).collect();
        let leaders = [5usize, 8, 11, 14];

        let mut a_ln = InfluenceTensor::zeros(m, k - 1, k);
        for (c, &src) in leaders.iter().enumerate() {
            a_ln.data_mut()[[0, c, src, c]] = 0.5;
        }
        for tgt in 1..5 {
            for c in 0..k - 1 {
                a_ln.data_mut()[[tgt, c, 0, c]] = 1.0;
            }
        }
        let mut b = InfluenceTensor::zeros(m, 1, k);
        for tgt in 0..m {
            for src in 0..m {
                for c in 0..k - 1 {
                    b.data_mut()[[tgt, 0, src, c]] = a_ln.data()[[tgt, c, src, c]];
                }
            }
        }
        let mut nu_ln = Array2::zeros((m, k - 1));
        let mut eta = Array1::zeros(m);
        for &i in &mixed {
            nu_ln.row_mut(i).fill(1.0);
            eta[i] = 4.0_f64.ln();
        }

        let mut a_mn = InfluenceTensor::zeros(m, k, k);
        let mut nu_mn = Array2::zeros((m, k));
        for (c, &lead) in leaders.iter().enumerate() {
            a_mn.data_mut()[[lead, c, 0, c]] = 2.0;
            for tgt in lead + 1..=lead + 2 {
                a_mn.data_mut()[[tgt, c, lead, c]] = 0.7;
            }
            for node in lead..lead + 3 {
                nu_mn.row_mut(node).fill(0.5);
                nu_mn[[node, c]] = 1.0;
            }
        }

        Self {
            mixed,
            focused,
            ln: LogisticNormalModel::new(
                a_ln,
                nu_ln,
                Covariance::scaled_identity(k - 1, 1.0).expect("identity"),
                Occurrence::Dynamic { b, eta },
            )
            .expect("reference dims"),
            mn: MultinomialModel::new(a_mn, nu_mn).expect("reference dims"),
            sigma_contam: 0.2,
        }
    }

    /// True relative network: logistic-normal rows for mixed targets and the
    /// relative transform of the multinomial rows for focused targets.
    pub fn true_relative_network(&self) -> InfluenceTensor {
        let (m, k) = (self.ln.n_nodes(), self.ln.n_categories());
        let mut out = InfluenceTensor::zeros(m, k - 1, k);
        for &i in &self.mixed {
            out.node_slice_mut(i).copy_from_slice(self.ln.a.node_slice(i));
        }
        for &i in &self.focused {
            for c in 0..k - 1 {
                for src in 0..m {
                    for kk in 0..k {
                        out.data_mut()[[i, c, src, kk]] =
                            self.mn.a.data()[[i, c, src, kk]] - self.mn.a.data()[[i, k - 1, src, kk]];
                    }
                }
            }
        }
        out
    }
}

/// Simulates the mixture model. Returns the observed compositional panel and
/// the generating specification.
pub fn simulate_mixture(spec: &MixtureSpec, steps: usize, init: InitSpec, seed: u64) -> Result<(EventPanel, MixtureSpec)> {
    spec.validate()?;
    let (m, k) = (spec.ln.n_nodes(), spec.ln.n_categories());
    let contam = Covariance::scaled_identity(k - 1, spec.sigma_contam * spec.sigma_contam)?;
    let mut is_mixed = vec![false; m];
    spec.mixed.iter().for_each(|&i| is_mixed[i] = true);
    let streams = Streams::new(seed);
    let mut data = Array3::zeros((steps + 1, m, k));

    let emit_focused = |c: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Option<Vec<f64>> {
        (c < k).then(|| sample_logistic_normal(&MixtureSpec::contamination_center(k, c), &contam, rng))
    };

    for node in 0..m {
        let mut rng = streams.at(Purpose::Init, 0, node, m);
        if rng.random::<f64>() >= init.event_prob {
            continue;
        }
        let z = if is_mixed[node] {
            let nu = spec.ln.nu.row(node).to_vec();
            Some(sample_logistic_normal(&nu, &spec.ln.sigma, &mut rng))
        } else {
            let mut probs = multinomial_probabilities(&spec.mn.nu.row(node).to_vec());
            probs.pop();
            let s: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= s);
            emit_focused(draw_category(&probs, &mut rng), &mut rng)
        };
        if let Some(z) = z {
            data.slice_mut(ndarray::s![0, node, ..]).assign(&Array1::from(z));
        }
    }
    for t in 0..steps {
        for node in 0..m {
            let frame = data.slice(ndarray::s![t, .., ..]);
            let mut rng = streams.at(Purpose::Step, t + 1, node, m);
            let z = if is_mixed[node] {
                let q = spec.ln.occurrence_probability(node, frame);
                if rng.random::<f64>() < q {
                    let mu = spec.ln.mean_log_ratios(node, frame);
                    Some(sample_logistic_normal(&mu, &spec.ln.sigma, &mut rng))
                } else {
                    None
                }
            } else {
                let probs = spec.mn.probabilities(node, frame);
                emit_focused(draw_category(&probs, &mut rng), &mut rng)
            };
            if let Some(z) = z {
                data.slice_mut(ndarray::s![t + 1, node, ..]).assign(&Array1::from(z));
            }
        }
    }
    Ok((EventPanel::from_trusted(data, PanelKind::Compositional), spec.clone()))
}

/// Rounds every event row to the one-hot vector at its argmax (lowest index
/// on ties).
pub fn round_to_categorical(panel: &EventPanel) -> EventPanel {
    let (tl, m, k) = panel.data().dim();
    let mut out = Array3::zeros((tl, m, k));
    for t in 0..tl {
        for node in 0..m {
            let row = panel.row(t, node);
            if row.iter().all(|&x| x == 0.0) {
                continue;
            }
            let mut best = 0;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            out[[t, node, best]] = 1.0;
        }
    }
    EventPanel::from_trusted(out, PanelKind::Categorical)
}

/// Number of nonzero groups assigned to `node` when `s` groups are spread
/// over `nodes` targets.
fn groups_for_node(s: usize, nodes: usize, node: usize) -> usize {
    s / nodes + usize::from(node < s % nodes)
}

/// Random group-sparse network: node `m` receives `s / M` nonzero groups
/// from sources drawn without replacement, entries i.i.d. `U(-bound, bound)`.
pub fn random_sparse_network(nodes: usize, k_out: usize, k_in: usize, s: usize, bound: f64, seed: u64) -> Result<InfluenceTensor> {
    if s > nodes * nodes {
        return Err(Error::InvalidParameter(format!("s = {s} exceeds M^2 = {}", nodes * nodes)));
    }
    let streams = Streams::new(seed);
    let unif = Uniform::new(-bound, bound).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut a = InfluenceTensor::zeros(nodes, k_out, k_in);
    for m in 0..nodes {
        let mut rng = streams.stream(Purpose::Network, m as u64);
        for src in sample(&mut rng, nodes, groups_for_node(s, nodes, m)).into_iter() {
            for k in 0..k_out {
                for kk in 0..k_in {
                    a.data_mut()[[m, k, src, kk]] = unif.sample(&mut rng);
                }
            }
        }
    }
    Ok(a)
}

/// Random `(A, B)` pair sharing one support draw per node.
pub fn random_shared_support(nodes: usize, k: usize, s: usize, bound: f64, seed: u64) -> Result<(InfluenceTensor, InfluenceTensor)> {
    if s > nodes * nodes {
        return Err(Error::InvalidParameter(format!("s = {s} exceeds M^2 = {}", nodes * nodes)));
    }
    let streams = Streams::new(seed);
    let unif = Uniform::new(-bound, bound).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut a = InfluenceTensor::zeros(nodes, k - 1, k);
    let mut b = InfluenceTensor::zeros(nodes, 1, k);
    for m in 0..nodes {
        let mut rng = streams.stream(Purpose::Network, m as u64);
        for src in sample(&mut rng, nodes, groups_for_node(s, nodes, m)).into_iter() {
            for c in 0..k - 1 {
                for kk in 0..k {
                    a.data_mut()[[m, c, src, kk]] = unif.sample(&mut rng);
                }
            }
            for kk in 0..k {
                b.data_mut()[[m, 0, src, kk]] = unif.sample(&mut rng);
            }
        }
    }
    Ok((a, b))
}

/// Multinomial setup with baseline event rate 0.8.
pub fn multinomial_preset(nodes: usize, k: usize, s: usize, seed: u64) -> Result<MultinomialModel> {
    let a = random_sparse_network(nodes, k, k, s, 2.0, seed)?;
    MultinomialModel::new(a, Array2::from_elem((nodes, k), (4.0 / k as f64).ln()))
}

/// Logistic-normal setup with constant `q = 0.8`, `Sigma = I`, `nu = 0`.
pub fn constant_q_preset(nodes: usize, k: usize, s: usize, seed: u64) -> Result<LogisticNormalModel> {
    let a = random_sparse_network(nodes, k - 1, k, s, 2.0, seed)?;
    LogisticNormalModel::new(
        a,
        Array2::zeros((nodes, k - 1)),
        Covariance::scaled_identity(k - 1, 1.0)?,
        Occurrence::ConstantQ(Array1::from_elem(nodes, 0.8)),
    )
}

/// Logistic-normal setup with past-dependent occurrence, `eta = log 4`,
/// `Sigma = variance * I`, `nu = 0` and entries `U(-bound, bound)`.
pub fn dynamic_preset(nodes: usize, k: usize, s: usize, bound: f64, variance: f64, seed: u64) -> Result<LogisticNormalModel> {
    let (a, b) = random_shared_support(nodes, k, s, bound, seed)?;
    LogisticNormalModel::new(
        a,
        Array2::zeros((nodes, k - 1)),
        Covariance::scaled_identity(k - 1, variance)?,
        Occurrence::Dynamic { b, eta: Array1::from_elem(nodes, 4.0_f64.ln()) },
    )
}
