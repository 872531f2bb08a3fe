//! Panel CSV and model JSON formats.
//!
//! Panels are stored sparsely, one CSV row per `(t, node)` with an event:
//! `t,node,x_1,...,x_K`. Tensors are serialized flat in `[m, k, m', k']`
//! row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::FittedModel;
use crate::simulate::{Covariance, LogisticNormalModel, MixtureSpec, MultinomialModel, Occurrence};
use crate::tensor::{check_rows, EventPanel, InfluenceTensor, PanelKind, RowViolation};

/// Raw panel values before validation.
#[derive(Debug, Clone)]
pub struct RawPanel {
    pub data: Array3<f64>,
    pub rows: usize,
}

impl RawPanel {
    /// Categorical when every stored row is one-hot.
    pub fn detect_kind(&self) -> PanelKind {
        let onehot = self.data.outer_iter().all(|frame| {
            frame.outer_iter().all(|row| {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                zeros == row.len() || (ones == 1 && zeros + 1 == row.len())
            })
        });
        if onehot {
            PanelKind::Categorical
        } else {
            PanelKind::Compositional
        }
    }

    pub fn violations(&self, kind: PanelKind) -> Vec<RowViolation> {
        check_rows(&self.data, kind)
    }

    pub fn into_panel(self, kind: Option<PanelKind>) -> Result<EventPanel> {
        let kind = kind.unwrap_or_else(|| self.detect_kind());
        EventPanel::new(self.data, kind)
    }
}

/// Reads a panel CSV. `nodes` and `steps` override the sizes inferred from
/// the largest node index and time point.
pub fn read_panel_raw<R: Read>(reader: R, nodes: Option<usize>, steps: Option<usize>) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "t" || &header[1] != "node" {
        return Err(Error::Malformed("panel header must be t,node,x_1,...,x_K".into()));
    }
    let k = header.len() - 2;
    let mut entries: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_idx = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::Malformed(format!("row {}: bad index {:?}", line + 2, &rec[i])))
        };
        let (t, node) = (parse_idx(0)?, parse_idx(1)?);
        let x = (2..rec.len())
            .map(|i| rec[i].parse::<f64>().map_err(|_| Error::Malformed(format!("row {}: bad value {:?}", line + 2, &rec[i]))))
            .collect::<Result<Vec<_>>>()?;
        entries.push((t, node, x));
    }
    let max_t = entries.iter().map(|e| e.0).max().unwrap_or(0);
    let max_node = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let t_len = steps.map_or(max_t + 1, |s| s + 1);
    let m = nodes.unwrap_or(max_node);
    if m == 0 {
        return Err(Error::Empty("panel has no nodes".into()));
    }
    if max_t >= t_len || max_node > m {
        return Err(Error::Dimension(format!("panel entries exceed T = {} or M = {m}", t_len - 1)));
    }
    let mut data = Array3::zeros((t_len, m, k));
    let rows = entries.len();
    for (t, node, x) in entries {
        for (c, v) in x.into_iter().enumerate() {
            data[[t, node, c]] = v;
        }
    }
    Ok(RawPanel { data, rows })
}

pub fn read_panel(path: &Path, kind: Option<PanelKind>, nodes: Option<usize>, steps: Option<usize>) -> Result<EventPanel> {
    read_panel_raw(std::fs::File::open(path)?, nodes, steps)?.into_panel(kind)
}

pub fn write_panel<W: Write>(panel: &EventPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let k = panel.n_categories();
    let mut header = vec!["t".to_string(), "node".to_string()];
    header.extend((1..=k).map(|c| format!("x_{c}")));
    w.write_record(&header)?;
    for t in 0..panel.t_len() {
        for node in 0..panel.n_nodes() {
            if !panel.has_event(t, node) {
                continue;
            }
            let mut rec = vec![t.to_string(), node.to_string()];
            rec.extend(panel.row(t, node).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel_file(panel: &EventPanel, path: &Path) -> Result<()> {
    write_panel(panel, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Model JSON. `B` carries an occurrence network when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ModelFile {
    pub M: usize,
    pub K: usize,
    pub K_out: usize,
    pub A: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub Sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub B: Option<Vec<f64>>,
}

/// A model read from JSON, as used for simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulationModel {
    Multinomial(MultinomialModel),
    LogisticNormal(LogisticNormalModel),
}

impl ModelFile {
    pub fn from_multinomial(model: &MultinomialModel) -> Self {
        let (m, k) = (model.n_nodes(), model.n_categories());
        Self {
            M: m,
            K: k,
            K_out: k,
            A: model.a.as_slice().to_vec(),
            nu: model.nu.iter().copied().collect(),
            eta: None,
            Sigma: None,
            q: None,
            B: None,
        }
    }

    pub fn from_logistic_normal(model: &LogisticNormalModel) -> Self {
        let (m, k) = (model.n_nodes(), model.n_categories());
        let (eta, q, b) = match &model.occurrence {
            Occurrence::ConstantQ(q) => (None, Some(q.to_vec()), None),
            Occurrence::Dynamic { b, eta } => (Some(eta.to_vec()), None, Some(b.as_slice().to_vec())),
        };
        Self {
            M: m,
            K: k,
            K_out: k - 1,
            A: model.a.as_slice().to_vec(),
            nu: model.nu.iter().copied().collect(),
            eta,
            Sigma: Some(model.sigma.matrix().iter().copied().collect()),
            q,
            B: b,
        }
    }

    pub fn from_fitted(model: &FittedModel) -> Self {
        let (a, nu) = match model {
            FittedModel::Multinomial { a, nu } | FittedModel::ConstQ { a, nu, .. } | FittedModel::Joint { a, nu, .. } => (a, nu),
        };
        let mut file = Self {
            M: a.n_nodes(),
            K: a.k_in(),
            K_out: a.k_out(),
            A: a.as_slice().to_vec(),
            nu: nu.iter().copied().collect(),
            eta: None,
            Sigma: None,
            q: None,
            B: None,
        };
        match model {
            FittedModel::Multinomial { .. } => {}
            FittedModel::ConstQ { q, .. } => file.q = Some(q.to_vec()),
            FittedModel::Joint { b, eta, .. } => {
                file.eta = Some(eta.to_vec());
                file.B = Some(b.as_slice().to_vec());
            }
        }
        file
    }

    fn network(&self) -> Result<InfluenceTensor> {
        InfluenceTensor::from_flat(self.M, self.K_out, self.K, self.A.clone())
    }

    fn intercepts(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.M, self.K_out), self.nu.clone())
            .map_err(|_| Error::Dimension(format!("nu has {} entries, expected {}", self.nu.len(), self.M * self.K_out)))
    }

    fn vector(v: &[f64], len: usize, name: &str) -> Result<Array1<f64>> {
        if v.len() != len {
            return Err(Error::Dimension(format!("{name} has {} entries, expected {len}", v.len())));
        }
        Ok(Array1::from(v.to_vec()))
    }

    fn occurrence_network(&self) -> Result<Option<InfluenceTensor>> {
        self.B.as_ref().map(|b| InfluenceTensor::from_flat(self.M, 1, self.K, b.clone())).transpose()
    }

    pub fn is_multinomial(&self) -> bool {
        self.K_out == self.K
    }

    pub fn to_fitted(&self) -> Result<FittedModel> {
        let a = self.network()?;
        let nu = self.intercepts()?;
        if self.is_multinomial() {
            return Ok(FittedModel::Multinomial { a, nu });
        }
        if self.K_out + 1 != self.K {
            return Err(Error::Dimension(format!("K_out = {} must be K or K - 1", self.K_out)));
        }
        match (&self.q, self.occurrence_network()?, &self.eta) {
            (_, Some(b), Some(eta)) => Ok(FittedModel::Joint { a, nu, b, eta: Self::vector(eta, self.M, "eta")? }),
            (Some(q), None, _) => Ok(FittedModel::ConstQ { a, nu, q: Self::vector(q, self.M, "q")? }),
            _ => Err(Error::Malformed("logistic-normal model needs q, or B with eta".into())),
        }
    }

    pub fn to_simulation_model(&self) -> Result<SimulationModel> {
        let a = self.network()?;
        let nu = self.intercepts()?;
        if self.is_multinomial() {
            return Ok(SimulationModel::Multinomial(MultinomialModel::new(a, nu)?));
        }
        let kk = self.K_out;
        let sigma = match &self.Sigma {
            Some(s) => Covariance::new(
                Array2::from_shape_vec((kk, kk), s.clone())
                    .map_err(|_| Error::Dimension(format!("Sigma needs {} entries", kk * kk)))?,
            )?,
            None => return Err(Error::Malformed("logistic-normal simulation needs Sigma".into())),
        };
        let occurrence = match (&self.q, self.occurrence_network()?, &self.eta) {
            (_, Some(b), Some(eta)) => Occurrence::Dynamic { b, eta: Self::vector(eta, self.M, "eta")? },
            (Some(q), None, _) => Occurrence::ConstantQ(Self::vector(q, self.M, "q")?),
            _ => return Err(Error::Malformed("logistic-normal model needs q, or B with eta".into())),
        };
        Ok(SimulationModel::LogisticNormal(LogisticNormalModel::new(a, nu, sigma, occurrence)?))
    }
}

/// Ground truth of the two-population mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFile {
    pub mixed: Vec<usize>,
    pub focused: Vec<usize>,
    pub sigma_contam: f64,
    pub logistic_normal: ModelFile,
    pub multinomial: ModelFile,
    /// Relative network combining both populations.
    pub relative: Vec<f64>,
}

impl MixtureFile {
    pub fn from_spec(spec: &MixtureSpec) -> Self {
        Self {
            mixed: spec.mixed.clone(),
            focused: spec.focused.clone(),
            sigma_contam: spec.sigma_contam,
            logistic_normal: ModelFile::from_logistic_normal(&spec.ln),
            multinomial: ModelFile::from_multinomial(&spec.mn),
            relative: spec.true_relative_network().as_slice().to_vec(),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Intercept matrix from JSON: either a flat list or a list of rows.
pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let v: serde_json::Value = read_json(path)?;
    let flat: Vec<f64> = match v {
        serde_json::Value::Array(items) if items.iter().all(|i| i.is_array()) => items
            .into_iter()
            .map(serde_json::from_value::<Vec<f64>>)
            .collect::<std::result::Result<Vec<_>, _>>()?
            .concat(),
        serde_json::Value::Object(map) if map.contains_key("nu") => serde_json::from_value(map["nu"].clone())?,
        other => serde_json::from_value(other)?,
    };
    Array2::from_shape_vec((rows, cols), flat.clone())
        .map_err(|_| Error::Dimension(format!("matrix has {} entries, expected {rows} x {cols}", flat.len())))
}

/// Vector from JSON: a flat list or an object with an `eta` field.
pub fn read_vector(path: &Path, len: usize) -> Result<Vec<f64>> {
    let v: serde_json::Value = read_json(path)?;
    let out: Vec<f64> = match v {
        serde_json::Value::Object(map) if map.contains_key("eta") => serde_json::from_value(map["eta"].clone())?,
        other => serde_json::from_value(other)?,
    };
    if out.len() != len {
        return Err(Error::Dimension(format!("vector has {} entries, expected {len}", out.len())));
    }
    Ok(out)
}
