//! Static malware classification from raw Windows executables: PE parsing,
//! a 1024-wide hashed feature vector, a dropout/PReLU feedforward network
//! trained with Adam, KDE-based score calibration and the evaluation
//! protocols (k-fold, time split, ROC metrics) used to measure it.

pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod nn;
pub mod pe;
pub mod pipeline;
pub mod store;

pub use error::{Error, Result};
