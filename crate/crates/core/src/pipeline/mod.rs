//! Batch orchestration behind the `deepstatic` command line: settings and
//! config files, input discovery, and the extract / train / evaluate / score
//! commands.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::BlockMask;
use crate::nn::{AdamConfig, TrainConfig, DEFAULT_KEEP_PROB};

pub use commands::{
    evaluate, extract, score, train, EvalMode, EvaluateReport, ExtractReport, ScoreReport,
    TrainOutcome, FEATURES_BIN, FEATURES_CSV, MODEL_FILE, SCORES_FILE, SUMMARY_FILE,
    TRAIN_LOG_FILE, TRAIN_SCORES_FILE,
};

pub const DEFAULT_HIDDEN: [usize; 2] = [1024, 1024];
pub const DEFAULT_FOLDS: usize = 4;
pub const DEFAULT_BASE_RATE: f64 = 0.5;
pub const DEFAULT_CALIBRATION_FRACTION: f64 = 0.25;

/// Every tunable knob of a run. Built from defaults, then a config file, then
/// command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub mask: BlockMask,
    pub epochs: usize,
    pub batch_size: usize,
    pub keep_prob: f64,
    pub stop_train_error: f64,
    pub hidden: Vec<usize>,
    pub bandwidth: f64,
    /// Share of labeled rows held out of training to fit the score densities.
    pub calibration_fraction: f64,
    /// Malware base rate for threat scores; `None` falls back to 0.5 with a warning.
    pub base_rate: Option<f64>,
    pub folds: usize,
    pub split_date: Option<String>,
    pub min_date: Option<String>,
    pub max_date: Option<String>,
    pub jobs: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Settings {
            seed: 0,
            mask: BlockMask::all(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            keep_prob: DEFAULT_KEEP_PROB,
            stop_train_error: t.stop_train_error,
            hidden: DEFAULT_HIDDEN.to_vec(),
            bandwidth: crate::calibration::DEFAULT_BANDWIDTH,
            calibration_fraction: DEFAULT_CALIBRATION_FRACTION,
            base_rate: None,
            folds: DEFAULT_FOLDS,
            split_date: None,
            min_date: None,
            max_date: None,
            jobs: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MaskSpec {
    Text(String),
    List(Vec<String>),
}

impl MaskSpec {
    fn parse(&self) -> Result<BlockMask> {
        match self {
            MaskSpec::Text(s) => s.parse(),
            MaskSpec::List(v) => v.join(",").parse(),
        }
    }
}

/// TOML config file; keys mirror the command-line flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    seed: Option<u64>,
    mask: Option<MaskSpec>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    keep_prob: Option<f64>,
    stop_train_error: Option<f64>,
    hidden: Option<Vec<usize>>,
    bandwidth: Option<f64>,
    calibration_fraction: Option<f64>,
    base_rate: Option<f64>,
    folds: Option<usize>,
    split_date: Option<String>,
    min_date: Option<String>,
    max_date: Option<String>,
    jobs: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Overwrites every setting the file names.
    pub fn apply(&self, s: &mut Settings) -> Result<()> {
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    s.$f = v.clone();
                }
            )*};
        }
        take!(seed, epochs, batch_size, keep_prob, stop_train_error, hidden, bandwidth, calibration_fraction, folds);
        macro_rules! take_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    s.$f = self.$f.clone();
                }
            )*};
        }
        take_opt!(base_rate, split_date, min_date, max_date, jobs);
        if let Some(m) = &self.mask {
            s.mask = m.parse()?;
        }
        Ok(())
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad(format!("keep probability {} outside (0, 1]", self.keep_prob));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden layer sizes {:?} must be non-empty and positive", self.hidden));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth {} must be positive", self.bandwidth));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return bad(format!("calibration fraction {} outside (0, 1)", self.calibration_fraction));
        }
        if let Some(r) = self.base_rate {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("base rate {r} outside (0, 1)"));
            }
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Layer sizes for a network reading `input_dim` features.
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            stop_train_error: self.stop_train_error,
            batch_size: self.batch_size,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

/// Paths and settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Files or directories (searched recursively) to extract or score.
    pub inputs: Vec<PathBuf>,
    /// `file_id,alarms,engines,compile_timestamp` CSV.
    pub votes: Option<PathBuf>,
    /// Directory holding a previous extract's matrix and sidecar.
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub settings: Settings,
}

impl RunManifest {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunManifest {
            inputs: Vec::new(),
            votes: None,
            features: None,
            model: None,
            out_dir: out_dir.into(),
            settings: Settings::default(),
        }
    }

    /// Checks that every referenced input exists and the settings are sane.
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        let named = self
            .inputs
            .iter()
            .chain(&self.votes)
            .chain(&self.features)
            .chain(&self.model);
        for p in named {
            if !p.exists() {
                return Err(Error::Usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Seed for an independent purpose (`tag`) within this run.
    pub fn derive_seed(&self, tag: u64) -> u64 {
        derive_seed(self.settings.seed, tag)
    }
}

/// SplitMix64 mix of a run seed and a purpose tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands directories into their files (recursively, sorted by path) and
/// keeps plain files as given.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found = Vec::new();
            for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
                match entry {
                    Ok(e) if !e.file_type().is_dir() => found.push(e.into_path()),
                    Ok(_) => {}
                    Err(e) => log::warn!("skipping unreadable entry under {}: {e}", p.display()),
                }
            }
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::Usage(format!("{} does not exist", p.display())));
        }
    }
    Ok(out)
}

/// Sample identifier: the file name of `path`.
pub fn file_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureBlock;

    #[test]
    fn config_then_flags() {
        let cfg = ConfigFile::parse("seed = 7\nmask = [\"imports\"]\nhidden = [16, 8]\nbase-rate = 0.1\n").unwrap();
        let mut s = Settings::default();
        cfg.apply(&mut s).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.mask.blocks(), &[FeatureBlock::Imports]);
        assert_eq!(s.layer_sizes(256), vec![256, 16, 8, 1]);
        assert_eq!(s.base_rate, Some(0.1));
        assert_eq!(s.epochs, 200);
        s.validate().unwrap();

        let cfg = ConfigFile::parse("mask = \"strings,metadata\"").unwrap();
        cfg.apply(&mut s).unwrap();
        assert_eq!(s.mask.width(), 512);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(matches!(ConfigFile::parse("sead = 1"), Err(Error::Usage(_))));
        assert!(ConfigFile::parse("mask = []").unwrap().apply(&mut Settings::default()).is_err());
    }

    #[test]
    fn validation() {
        let bad = [
            Settings { keep_prob: 0.0, ..Settings::default() },
            Settings { folds: 1, ..Settings::default() },
            Settings { base_rate: Some(1.0), ..Settings::default() },
        ];
        assert!(bad.iter().all(|s| s.validate().is_err()));
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..8).map(|t| derive_seed(0, t)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 8);
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
        assert_ne!(derive_seed(5, 3), derive_seed(6, 3));
    }

    #[test]
    fn inputs_sorted_and_recursive() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        for name in ["b.exe", "a.exe", "sub/c.exe"] {
            fs::write(dir.path().join(name), b"x").unwrap();
        }
        let found = collect_inputs(&[dir.path().to_path_buf()]).unwrap();
        let ids: Vec<_> = found.iter().map(|p| file_id(p)).collect();
        assert_eq!(ids, vec!["a.exe", "b.exe", "c.exe"]);
        assert!(collect_inputs(&[dir.path().join("missing")]).is_err());
    }
}
