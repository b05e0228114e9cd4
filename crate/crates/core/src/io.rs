//! File formats: model JSON and comma-separated data.
//!
//! Model JSON:
//! ```json
//! {"p": 2, "k": 1,
//!  "A": [[0.5, 0.1], [0.0, 0.3]],
//!  "rho": [0.4],
//!  "marginals": [{"family": "weibull", "shape": 2.0, "scale": 3.0},
//!                {"family": "gaussian", "mean": 0.0, "sd": 1.0}]}
//! ```
//! `A` is one `p x p` matrix when `k = 1` and a list of `k` matrices
//! otherwise; `rho` is the row-major upper triangle of `Σ`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::gaussian::CorrelationMatrix;
use crate::likelihood::{TimeSeriesData, VartaModel};
use crate::linalg::Matrix;
use crate::marginals::MarginalSpec;
use crate::scalar::Scalar;
use crate::var_model::VarParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged, bound = "")]
pub enum Coefficients<T: Scalar> {
    Single(Vec<Vec<T>>),
    Lags(Vec<Vec<Vec<T>>>),
}

impl<'de, T: Scalar> Deserialize<'de> for Coefficients<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let depth3 = v
            .as_array()
            .and_then(|a| a.first())
            .and_then(|r| r.as_array())
            .and_then(|r| r.first())
            .is_some_and(|x| x.is_array());
        let parsed = if depth3 {
            serde_json::from_value(v).map(Coefficients::Lags)
        } else {
            serde_json::from_value(v).map(Coefficients::Single)
        };
        parsed.map_err(|e| {
            serde::de::Error::custom(format!(
                "field `A` must be a matrix of numbers or a list of matrices: {e}"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
pub struct ModelConfig<T: Scalar> {
    pub p: usize,
    pub k: usize,
    #[serde(rename = "A")]
    pub a: Coefficients<T>,
    pub rho: Vec<T>,
    pub marginals: Vec<MarginalSpec<T>>,
}

fn matrix_field<T: Scalar>(rows: &[Vec<T>], p: usize, field: &str) -> Result<Matrix<T>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(VartaError::Config(format!("field `{field}` must be a {p}x{p} matrix")));
    }
    Matrix::from_rows(rows)
}

impl<T: Scalar> TryFrom<ModelConfig<T>> for VartaModel<T> {
    type Error = VartaError;

    fn try_from(c: ModelConfig<T>) -> Result<Self> {
        if c.p == 0 || c.k == 0 {
            return Err(VartaError::Config("fields `p` and `k` must be at least 1".into()));
        }
        let a = match (&c.a, c.k) {
            (Coefficients::Single(m), 1) => vec![matrix_field(m, c.p, "A")?],
            (Coefficients::Lags(ms), k) if ms.len() == k => ms
                .iter()
                .enumerate()
                .map(|(i, m)| matrix_field(m, c.p, &format!("A[{i}]")))
                .collect::<Result<_>>()?,
            (Coefficients::Single(_), k) => {
                return Err(VartaError::Config(format!(
                    "field `A` holds one matrix but k = {k}; give a list of {k} matrices"
                )))
            }
            (Coefficients::Lags(ms), k) => {
                return Err(VartaError::Config(format!(
                    "field `A` holds {} matrices but k = {k}",
                    ms.len()
                )))
            }
        };
        let sigma = CorrelationMatrix::new(c.p, c.rho)
            .map_err(|e| VartaError::Config(format!("field `rho`: {e}")))?;
        if c.marginals.len() != c.p {
            return Err(VartaError::Config(format!(
                "field `marginals` has {} entries, expected {}",
                c.marginals.len(),
                c.p
            )));
        }
        let var = VarParams::new(a, sigma).map_err(|e| VartaError::Config(format!("field `A`: {e}")))?;
        var.validate()
            .map_err(|e| VartaError::Config(format!("fields `A` and `rho`: {e}")))?;
        VartaModel::new(var, c.marginals).map_err(|e| VartaError::Config(format!("field `marginals`: {e}")))
    }
}

impl<T: Scalar> From<&VartaModel<T>> for ModelConfig<T> {
    fn from(m: &VartaModel<T>) -> Self {
        let mats: Vec<Vec<Vec<T>>> = m.var.coefficients().iter().map(Matrix::to_rows).collect();
        let a = if mats.len() == 1 {
            Coefficients::Single(mats.into_iter().next().unwrap())
        } else {
            Coefficients::Lags(mats)
        };
        ModelConfig {
            p: m.dim(),
            k: m.order(),
            a,
            rho: m.var.sigma().rho().to_vec(),
            marginals: m.marginals.clone(),
        }
    }
}

impl<T: Scalar> From<VartaModel<T>> for ModelConfig<T> {
    fn from(m: VartaModel<T>) -> Self {
        (&m).into()
    }
}

impl<T: Scalar> Serialize for VartaModel<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelConfig::from(self).serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for VartaModel<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = ModelConfig::<T>::deserialize(d)?;
        VartaModel::try_from(c).map_err(serde::de::Error::custom)
    }
}

/// Parses a model from JSON text. Accepts a bare model or any object with
/// a `model` field (such as a saved fit).
pub fn model_from_json(text: &str) -> Result<VartaModel<f64>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| VartaError::Config(e.to_string()))?;
    let inner = match value.get("model") {
        Some(m) => m.clone(),
        None => value,
    };
    serde_json::from_value(inner).map_err(|e| VartaError::Config(e.to_string()))
}

pub fn read_model(path: &Path) -> Result<VartaModel<f64>> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn model_to_json(model: &VartaModel<f64>) -> String {
    serde_json::to_string_pretty(model).expect("model serializes")
}

/// Reads comma-separated data with a header row. Every cell must parse as a
/// finite number; errors name the 1-based data row and the column.
pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeriesData<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| VartaError::DataInvalid(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(VartaError::DataInvalid("missing header row".into()));
    }
    let p = names.len();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| VartaError::DataInvalid(format!("row {}: {e}", row + 1)))?;
        if rec.len() != p {
            return Err(VartaError::DataInvalid(format!(
                "row {} has {} fields, header has {p}",
                row + 1,
                rec.len()
            )));
        }
        for (col, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                VartaError::DataInvalid(format!(
                    "row {}, column {} ({}): cannot parse {cell:?} as a number",
                    row + 1,
                    col + 1,
                    names[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(VartaError::DataInvalid(format!(
                    "row {}, column {} ({}): value is not finite",
                    row + 1,
                    col + 1,
                    names[col]
                )));
            }
            values.push(v);
        }
    }
    let n = values.len() / p;
    TimeSeriesData::new(Matrix::from_vec(n, p, values)?, Some(names))
}

pub fn read_csv_file(path: &Path) -> Result<TimeSeriesData<f64>> {
    read_csv(std::fs::File::open(path)?)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv<W: Write>(data: &TimeSeriesData<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| VartaError::Io(e.to_string());
    w.write_record(data.names()).map_err(io)?;
    for t in 0..data.n() {
        w.write_record(data.values().row(t).iter().map(|v| format_f64(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to a temporary sibling and renames, so a failed run leaves no
/// partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
