//! Vote labeling, ROC metrics, fold and time splits, deployment arithmetic.

mod roc;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use roc::{average_roc, default_fpr_grid, roc_curve, tpr_at_fpr, RocCurve, RocPoint};
pub use split::{
    complement, date_end, date_start, kfold_split, parse_date, stratified_kfold_split, time_split,
    TimeSplit, TimeSplitConfig,
};

/// FPR operating point reported alongside AUC.
pub const REPORT_FPR: f64 = 0.001;
pub const DEFAULT_BINARIES_PER_ENDPOINT_DAY: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malware,
    Benign,
    /// Some but fewer than 30% of engines alarm; excluded from training and testing.
    Discarded,
    /// No vote information available.
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Malware => "malware",
            Label::Benign => "benign",
            Label::Discarded => "discarded",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// 1 for malware, 0 for benign, `None` for rows that must not be used.
    pub fn target(self) -> Option<bool> {
        match self {
            Label::Malware => Some(true),
            Label::Benign => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "malware" => Ok(Label::Malware),
            "benign" => Ok(Label::Benign),
            "discarded" => Ok(Label::Discarded),
            "unlabeled" | "" => Ok(Label::Unlabeled),
            other => Err(Error::format("label", format!("unknown label {other:?}"))),
        }
    }
}

/// Malware when at least 30% of engines alarm, benign when none do, discarded
/// in between.
pub fn label_from_votes(alarms: u32, engines: u32) -> Result<Label> {
    if engines == 0 {
        return Err(Error::Domain("vote with zero engines".into()));
    }
    if alarms > engines {
        return Err(Error::Domain(format!("{alarms} alarms from only {engines} engines")));
    }
    // alarms / engines >= 3 / 10, in integers
    Ok(if u64::from(alarms) * 10 >= u64::from(engines) * 3 {
        Label::Malware
    } else if alarms == 0 {
        Label::Benign
    } else {
        Label::Discarded
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub file_id: String,
    pub feature_row: usize,
    pub alarms: Option<u32>,
    pub engines: Option<u32>,
    pub label: Label,
    pub compile_timestamp: Option<i64>,
}

impl SampleRecord {
    /// Record with the label derived from its vote counts.
    pub fn from_votes(
        file_id: impl Into<String>,
        feature_row: usize,
        alarms: u32,
        engines: u32,
        compile_timestamp: Option<i64>,
    ) -> Result<Self> {
        Ok(SampleRecord {
            file_id: file_id.into(),
            feature_row,
            alarms: Some(alarms),
            engines: Some(engines),
            label: label_from_votes(alarms, engines)?,
            compile_timestamp,
        })
    }
}

/// Expected false alarms per day across `endpoints`, each executing
/// `per_endpoint_per_day` previously unseen binaries.
pub fn expected_daily_false_positives(fpr: f64, endpoints: f64, per_endpoint_per_day: f64) -> Result<f64> {
    if [fpr, endpoints, per_endpoint_per_day].iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::Domain("deployment inputs must be non-negative".into()));
    }
    Ok(fpr * endpoints * per_endpoint_per_day)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_examples() {
        assert_eq!(label_from_votes(17, 55).unwrap(), Label::Malware);
        assert_eq!(label_from_votes(0, 55).unwrap(), Label::Benign);
        assert_eq!(label_from_votes(5, 55).unwrap(), Label::Discarded);
        assert_eq!(label_from_votes(3, 10).unwrap(), Label::Malware);
        assert_eq!(label_from_votes(2, 10).unwrap(), Label::Discarded);
        assert!(label_from_votes(0, 0).is_err());
        assert!(label_from_votes(6, 5).is_err());
    }

    #[test]
    fn deployment_examples() {
        assert_eq!(expected_daily_false_positives(0.001, 1000.0, 5.0).unwrap(), 5.0);
        assert_eq!(expected_daily_false_positives(0.0, 123.0, 9.0).unwrap(), 0.0);
        assert!((expected_daily_false_positives(0.001, 200.0, 5.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(expected_daily_false_positives(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn label_round_trip() {
        for l in [Label::Malware, Label::Benign, Label::Discarded, Label::Unlabeled] {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
        }
    }
}
