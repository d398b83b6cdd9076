//! CSV inputs and outputs: vote counts, the per-row sidecar of a feature
//! matrix, ROC curves, summaries and score reports.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{label_from_votes, Label, RocCurve, SampleRecord};

fn csv_err(what: &'static str, path: &Path, e: csv::Error) -> Error {
    Error::format(what, format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRow {
    pub file_id: String,
    pub alarms: u32,
    pub engines: u32,
    pub compile_timestamp: Option<i64>,
}

impl VoteRow {
    pub fn label(&self) -> Result<Label> {
        label_from_votes(self.alarms, self.engines)
    }
}

/// Reads `file_id,alarms,engines,compile_timestamp`; the timestamp may be empty.
pub fn read_votes(path: &Path) -> Result<Vec<VoteRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("votes CSV", path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err("votes CSV", path, e))?.clone();
    let want = ["file_id", "alarms", "engines", "compile_timestamp"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::format(
            "votes CSV",
            format!("{}: header must be {}", path.display(), want.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<VoteRow>().enumerate() {
        let row = rec.map_err(|e| csv_err("votes CSV", path, e))?;
        row.label().map_err(|e| {
            Error::format("votes CSV", format!("{} line {}: {e}", path.display(), i + 2))
        })?;
        out.push(row);
    }
    Ok(out)
}

pub fn votes_by_id(rows: Vec<VoteRow>) -> HashMap<String, VoteRow> {
    rows.into_iter().map(|r| (r.file_id.clone(), r)).collect()
}

/// One line of the sidecar that accompanies a feature matrix, in row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRow {
    pub file_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub compile_timestamp: Option<i64>,
}

impl SidecarRow {
    pub fn record(&self, row: usize, votes: Option<&VoteRow>) -> SampleRecord {
        SampleRecord {
            file_id: self.file_id.clone(),
            feature_row: row,
            alarms: votes.map(|v| v.alarms),
            engines: votes.map(|v| v.engines),
            label: self.label,
            compile_timestamp: self.compile_timestamp,
        }
    }
}

pub fn write_sidecar(path: &Path, rows: &[SidecarRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("sidecar", path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err("sidecar", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Vec<SidecarRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("sidecar", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("sidecar", path, e)))
        .collect()
}

/// `threshold,fpr,tpr`, one line per operating point.
pub fn write_roc(path: &Path, roc: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("ROC CSV", path, e))?;
    w.write_record(["threshold", "fpr", "tpr"])
        .map_err(|e| csv_err("ROC CSV", path, e))?;
    for p in &roc.points {
        let threshold = if p.threshold.is_nan() {
            String::new()
        } else {
            p.threshold.to_string()
        };
        w.write_record([threshold, p.fpr.to_string(), p.tpr.to_string()])
            .map_err(|e| csv_err("ROC CSV", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCsvRow {
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

pub fn read_roc(path: &Path) -> Result<Vec<RocCsvRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("ROC CSV", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("ROC CSV", path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fold: String,
    pub auc: f64,
    #[serde(rename = "tpr_at_0.001")]
    pub tpr_at_0_001: f64,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("summary CSV", path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err("summary CSV", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("summary CSV", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("summary CSV", path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub file_id: String,
    pub raw_score: f64,
    pub threat_score: f64,
}

pub fn write_scores(w: impl Write, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::format("score report", e.to_string()))?;
    }
    w.flush()
        .map_err(|e| Error::format("score report", e.to_string()))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("score report", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("score report", path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScoreRow {
    pub file_id: String,
    pub label: Label,
    pub raw_score: f64,
}

pub fn write_raw_scores(path: &Path, rows: &[RawScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err("score log", path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err("score log", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw_scores(path: &Path) -> Result<Vec<RawScoreRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err("score log", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("score log", path, e)))
        .collect()
}

/// `epoch,mean_loss`
pub fn write_loss_log(path: &Path, epoch_losses: &[f64]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("epoch,mean_loss\n");
    for (i, l) in epoch_losses.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, l));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::roc_curve;

    #[test]
    fn votes_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "file_id,alarms,engines,compile_timestamp\na.exe,20,55,1400000000\nb.exe,0,55,\n").unwrap();
        let v = read_votes(&p).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].label().unwrap(), Label::Malware);
        assert_eq!(v[1].compile_timestamp, None);

        std::fs::write(&p, "file_id,alarms,engines,compile_timestamp\na.exe,60,55,\n").unwrap();
        assert!(read_votes(&p).is_err());
        std::fs::write(&p, "id,alarms,engines\na.exe,1,55\n").unwrap();
        assert!(read_votes(&p).is_err());
    }

    #[test]
    fn roc_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("roc.csv");
        let roc = roc_curve(&[0.2, 0.9, 0.5], &[false, true, false]).unwrap();
        write_roc(&p, &roc).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        let back = read_roc(&p).unwrap();
        assert_eq!(back.len(), roc.points.len());
        assert_eq!(back[0].threshold, Some(f64::INFINITY));
        assert_eq!(back[2].fpr, roc.points[2].fpr);
    }

    #[test]
    fn summary_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_summary(&p, &[SummaryRow { fold: "0".into(), auc: 0.5, tpr_at_0_001: 0.25 }]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("fold,auc,tpr_at_0.001\n"));
        assert_eq!(read_summary(&p).unwrap()[0].tpr_at_0_001, 0.25);
    }
}
