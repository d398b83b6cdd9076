//! On-disk artifacts: feature matrices, model files and CSV tables.

mod matrix;
mod model;
mod tables;

pub use matrix::{FeatureMatrix, MATRIX_MAGIC, MATRIX_VERSION};
pub use model::{SavedModel, TrainingMeta, MODEL_FORMAT};
pub use tables::*;
