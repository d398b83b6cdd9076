//! Python bindings: PE parsing, feature extraction, score calibration,
//! ROC metrics and saved-model prediction.

use std::path::PathBuf;

use deepstatic::calibration::{self, CalibrationModel};
use deepstatic::evaluation;
use deepstatic::features::{self, FEATURE_DIM};
use deepstatic::pe;
use deepstatic::store::SavedModel;
use deepstatic::Error;
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Parses a PE image. Never fails; malformed input yields `is_pe=False` or
/// `truncated=True`.
#[pyfunction]
fn parse_pe<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let s = pe::parse_pe(data);
    let d = PyDict::new(py);
    d.set_item("is_pe", s.is_pe)?;
    d.set_item("truncated", s.truncated())?;
    d.set_item("compile_timestamp", s.compile_timestamp)?;
    let imports: Vec<(String, String)> = s.imports.into_iter().map(|i| (i.dll, i.function)).collect();
    d.set_item("imports", imports)?;
    d.set_item("numeric_fields", s.numeric_fields)?;
    Ok(d)
}

/// The 1024 log-scaled features of a file.
#[pyfunction]
fn extract_features(data: &[u8]) -> Vec<f64> {
    features::extract(data).1.into_inner()
}

#[pyfunction]
fn window_entropy(window: &[u8]) -> PyResult<f64> {
    features::window_entropy(window).map_err(py_err)
}

/// `"malware"`, `"benign"` or `"discarded"`.
#[pyfunction]
fn label_from_votes(alarms: u32, engines: u32) -> PyResult<&'static str> {
    evaluation::label_from_votes(alarms, engines)
        .map(|l| l.as_str())
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (samples, x, bandwidth = calibration::DEFAULT_BANDWIDTH))]
fn kde_pdf(samples: Vec<f64>, x: f64, bandwidth: f64) -> PyResult<f64> {
    calibration::kde_pdf(&samples, x, bandwidth).map_err(py_err)
}

/// Posterior malware probability from the two class densities at a score.
#[pyfunction]
fn posterior(p_malware: f64, p_benign: f64, base_rate: f64) -> PyResult<f64> {
    if !(base_rate > 0.0 && base_rate < 1.0) {
        return Err(PyValueError::new_err(format!("base rate {base_rate} outside (0, 1)")));
    }
    Ok(calibration::posterior(p_malware, p_benign, base_rate))
}

/// Returns `(fpr, tpr, thresholds, auc)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn roc_curve(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    let roc = evaluation::roc_curve(&scores, &labels).map_err(py_err)?;
    let fpr = roc.points.iter().map(|p| p.fpr).collect();
    let tpr = roc.points.iter().map(|p| p.tpr).collect();
    let thr = roc.points.iter().map(|p| p.threshold).collect();
    Ok((fpr, tpr, thr, roc.auc))
}

#[pyfunction]
fn tpr_at_fpr(scores: Vec<f64>, labels: Vec<bool>, target: f64) -> PyResult<f64> {
    let roc = evaluation::roc_curve(&scores, &labels).map_err(py_err)?;
    Ok(roc.tpr_at_fpr(target))
}

/// A trained network with its feature mask and score calibration.
#[pyclass(frozen)]
struct Model {
    saved: SavedModel,
}

impl Model {
    fn calibrated(&self, base_rate: f64) -> PyResult<CalibrationModel> {
        let densities = self
            .saved
            .calibration
            .clone()
            .ok_or_else(|| PyValueError::new_err("model has no calibration data"))?;
        densities.with_base_rate(base_rate).map_err(py_err)
    }

    fn predict_rows(&self, rows: &[Vec<f64>]) -> PyResult<Vec<f64>> {
        let mask = &self.saved.feature_blocks;
        let mut x = Array2::zeros((rows.len(), mask.width()));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != FEATURE_DIM {
                return Err(PyValueError::new_err(format!(
                    "row {i} has {} features, expected {FEATURE_DIM}",
                    row.len()
                )));
            }
            for (j, v) in mask.select(row).into_iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        self.saved.network.predict(x.view()).map_err(py_err)
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            saved: SavedModel::load(&path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model {
            saved: SavedModel::from_json(text).map_err(py_err)?,
        })
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.saved.network.layer_sizes.clone()
    }

    #[getter]
    fn feature_blocks(&self) -> Vec<&'static str> {
        self.saved.feature_blocks.blocks().iter().map(|b| b.name()).collect()
    }

    /// Raw scores for full 1024-wide feature rows.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.predict_rows(&rows)
    }

    /// Raw score of one file, matching the command-line scorer.
    fn score_bytes(&self, data: &[u8]) -> PyResult<f64> {
        let row: Vec<f64> = features::extract(data)
            .1
            .to_f32()
            .into_iter()
            .map(f64::from)
            .collect();
        Ok(self.predict_rows(&[row])?[0])
    }

    #[pyo3(signature = (raw_scores, base_rate = 0.5))]
    fn threat_scores(&self, raw_scores: Vec<f64>, base_rate: f64) -> PyResult<Vec<f64>> {
        let cal = self.calibrated(base_rate)?;
        Ok(raw_scores.into_iter().map(|s| cal.threat_score(s)).collect())
    }
}

#[pymodule]
#[pyo3(name = "deepstatic")]
fn deepstatic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FEATURE_DIM", FEATURE_DIM)?;
    m.add_function(wrap_pyfunction!(parse_pe, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(window_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(label_from_votes, m)?)?;
    m.add_function(wrap_pyfunction!(kde_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tpr_at_fpr, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
