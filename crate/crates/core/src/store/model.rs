//! Model file: a single JSON document tagged `BNSM1` holding the network
//! shape, training metadata, calibration samples and the parameters as
//! base64-encoded little-endian f64.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::calibration::ScoreDensities;
use crate::error::{Error, Result};
use crate::features::BlockMask;
use crate::nn::{DenseLayer, MlpModel, TrainConfig};

pub const MODEL_FORMAT: &str = "BNSM1";
const PARAM_ENCODING: &str = "base64-f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub rows: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub network: MlpModel,
    pub feature_blocks: BlockMask,
    pub training: Option<TrainingMeta>,
    pub calibration: Option<ScoreDensities>,
}

#[derive(Serialize, Deserialize)]
struct Params {
    encoding: String,
    count: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    layer_sizes: Vec<usize>,
    keep_prob: f64,
    seed: u64,
    feature_blocks: BlockMask,
    #[serde(default)]
    training: Option<TrainingMeta>,
    #[serde(default)]
    calibration: Option<ScoreDensities>,
    parameters: Params,
}

fn encode_params(values: &[f64]) -> Params {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Params {
        encoding: PARAM_ENCODING.into(),
        count: values.len(),
        data: STANDARD.encode(bytes),
    }
}

fn decode_params(p: &Params) -> Result<Vec<f64>> {
    if p.encoding != PARAM_ENCODING {
        return Err(Error::format("model file", format!("unknown parameter encoding {:?}", p.encoding)));
    }
    let bytes = STANDARD
        .decode(&p.data)
        .map_err(|e| Error::format("model file", format!("parameter blob: {e}")))?;
    if bytes.len() != p.count * 8 {
        return Err(Error::format(
            "model file",
            format!("expected {} parameters, blob holds {} bytes", p.count, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Zero-filled network with the given shape, ready for `set_flat_params`.
fn skeleton(layer_sizes: &[usize], keep_prob: f64, seed: u64) -> Result<MlpModel> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::format("model file", format!("bad layer sizes {layer_sizes:?}")));
    }
    let last = layer_sizes.len() - 2;
    let layers = layer_sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| DenseLayer {
            weights: Array2::zeros((w[1], w[0])),
            bias: Array1::zeros(w[1]),
            slopes: (i != last).then(|| Array1::zeros(w[1])),
        })
        .collect();
    Ok(MlpModel {
        layer_sizes: layer_sizes.to_vec(),
        layers,
        keep_prob,
        seed,
    })
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            layer_sizes: self.network.layer_sizes.clone(),
            keep_prob: self.network.keep_prob,
            seed: self.network.seed,
            feature_blocks: self.feature_blocks.clone(),
            training: self.training.clone(),
            calibration: self.calibration.clone(),
            parameters: encode_params(&self.network.flat_params()),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::format("model file", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::format("model file", e.to_string()))?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>");
        if found != MODEL_FORMAT {
            return Err(Error::VersionMismatch {
                what: "model file",
                found: found.to_string(),
                expected: MODEL_FORMAT.to_string(),
            });
        }
        let doc: ModelDoc =
            serde_json::from_value(value).map_err(|e| Error::format("model file", e.to_string()))?;
        let mut network = skeleton(&doc.layer_sizes, doc.keep_prob, doc.seed)?;
        network.set_flat_params(&decode_params(&doc.parameters)?)?;
        network.validate()?;
        if doc.feature_blocks.width() != network.input_dim() {
            return Err(Error::format(
                "model file",
                format!(
                    "feature blocks {} give {} inputs but the network takes {}",
                    doc.feature_blocks,
                    doc.feature_blocks.width(),
                    network.input_dim()
                ),
            ));
        }
        Ok(SavedModel {
            network,
            feature_blocks: doc.feature_blocks,
            training: doc.training,
            calibration: doc.calibration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureBlock;

    fn sample() -> SavedModel {
        SavedModel {
            network: MlpModel::init_glorot(&[256, 8, 4, 1], 0.8, 11).unwrap(),
            feature_blocks: BlockMask::new([FeatureBlock::Imports]).unwrap(),
            training: None,
            calibration: Some(ScoreDensities::new(vec![0.1, 0.2], vec![0.9], 0.01).unwrap()),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let back = SavedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), m.to_json().unwrap());
    }

    #[test]
    fn version_mismatch_is_named() {
        let text = sample().to_json().unwrap().replace("\"BNSM1\"", "\"BNSM0\"");
        match SavedModel::from_json(&text) {
            Err(Error::VersionMismatch { found, expected, .. }) => {
                assert_eq!(found, "BNSM0");
                assert_eq!(expected, "BNSM1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_blob_rejected() {
        let m = sample();
        let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        doc["parameters"]["count"] = serde_json::json!(3);
        assert!(SavedModel::from_json(&doc.to_string()).is_err());
        assert!(SavedModel::from_json("{not json").is_err());
    }

    #[test]
    fn mask_width_must_match_input() {
        let mut m = sample();
        m.feature_blocks = BlockMask::all();
        assert!(SavedModel::from_json(&m.to_json().unwrap()).is_err());
    }
}
