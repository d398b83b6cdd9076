use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use rayon::prelude::*;

use super::{collect_inputs, file_id, RunManifest, Settings, DEFAULT_BASE_RATE};
use crate::calibration::ScoreDensities;
use crate::error::{Error, Result};
use crate::evaluation::{
    average_roc, complement, default_fpr_grid, parse_date, roc_curve, stratified_kfold_split,
    time_split, Label, RocCurve, TimeSplitConfig, REPORT_FPR,
};
use crate::features::{self, BlockMask, FeatureVector, FEATURE_DIM};
use crate::nn::{self, MlpModel, TrainReport};
use crate::store::{
    read_sidecar, read_votes, votes_by_id, write_loss_log, write_raw_scores, write_roc,
    write_sidecar, write_summary, FeatureMatrix, RawScoreRow, SavedModel, ScoreRow, SidecarRow,
    SummaryRow, TrainingMeta, VoteRow,
};

pub const FEATURES_BIN: &str = "features.bnsf";
pub const FEATURES_CSV: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const TRAIN_SCORES_FILE: &str = "train_scores.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCORES_FILE: &str = "scores.csv";

const TAG_MODEL: u64 = 1;
const TAG_CALIBRATION: u64 = 2;
const TAG_FOLDS: u64 = 3;
const TAG_TIMESPLIT: u64 = 4;
const TAG_FOLD_MODEL: u64 = 1000;

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Extracted {
    path: PathBuf,
    compile_timestamp: Option<u32>,
    features: FeatureVector,
}

/// Extracts every file in parallel, returning results in input order and
/// skipping files that cannot be read.
fn extract_files(paths: &[PathBuf], jobs: Option<usize>) -> Result<Vec<Extracted>> {
    let results: Vec<Option<Extracted>> = pool(jobs)?.install(|| {
        paths
            .par_iter()
            .map(|p| match fs::read(p) {
                Ok(bytes) => {
                    let (pe, features) = features::extract(&bytes);
                    Some(Extracted {
                        path: p.clone(),
                        compile_timestamp: pe.compile_timestamp,
                        features,
                    })
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    None
                }
            })
            .collect()
    });
    Ok(results.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractReport {
    pub rows: usize,
    pub skipped: usize,
    pub matrix_path: PathBuf,
    pub sidecar_path: PathBuf,
}

/// Writes the feature matrix and its sidecar for `manifest.inputs`.
pub fn extract(manifest: &RunManifest) -> Result<ExtractReport> {
    manifest.validate()?;
    let paths = collect_inputs(&manifest.inputs)?;
    let votes = match &manifest.votes {
        Some(p) => Some(votes_by_id(read_votes(p)?)),
        None => None,
    };
    let done = extract_files(&paths, manifest.settings.jobs)?;
    if done.is_empty() {
        return Err(Error::EmptyInput(format!("no readable files among {} inputs", paths.len())));
    }

    let mut matrix = FeatureMatrix::new(FEATURE_DIM);
    let mut sidecar = Vec::with_capacity(done.len());
    for e in &done {
        matrix.push_row(&e.features.to_f32())?;
        let id = file_id(&e.path);
        let vote = votes.as_ref().and_then(|v| v.get(&id));
        let label = match vote {
            Some(v) => v.label()?,
            None => Label::Unlabeled,
        };
        let compile_timestamp = vote
            .and_then(|v| v.compile_timestamp)
            .or(e.compile_timestamp.map(i64::from));
        sidecar.push(SidecarRow {
            file_id: id,
            path: e.path.clone(),
            label,
            compile_timestamp,
        });
    }

    create_dir(&manifest.out_dir)?;
    let matrix_path = manifest.out_dir.join(FEATURES_BIN);
    let sidecar_path = manifest.out_dir.join(FEATURES_CSV);
    matrix.save(&matrix_path)?;
    write_sidecar(&sidecar_path, &sidecar)?;
    log::info!("extracted {} of {} files", done.len(), paths.len());
    Ok(ExtractReport {
        rows: done.len(),
        skipped: paths.len() - done.len(),
        matrix_path,
        sidecar_path,
    })
}

/// Feature matrix and sidecar from a previous extract, relabeled from the
/// votes CSV when the manifest names one.
struct Dataset {
    matrix: FeatureMatrix,
    rows: Vec<SidecarRow>,
}

impl Dataset {
    fn load(manifest: &RunManifest) -> Result<Self> {
        let dir = manifest
            .features
            .as_ref()
            .ok_or_else(|| Error::Usage("no feature directory given".into()))?;
        let matrix = FeatureMatrix::load(&dir.join(FEATURES_BIN))?;
        let mut rows = read_sidecar(&dir.join(FEATURES_CSV))?;
        if rows.len() != matrix.rows() {
            return Err(Error::format(
                "sidecar",
                format!("{} lines for a {}-row matrix", rows.len(), matrix.rows()),
            ));
        }
        if matrix.cols() != FEATURE_DIM {
            return Err(Error::shape(FEATURE_DIM, matrix.cols()));
        }
        if let Some(p) = &manifest.votes {
            let votes = votes_by_id(read_votes(p)?);
            for r in &mut rows {
                relabel(r, votes.get(&r.file_id))?;
            }
        }
        Ok(Dataset { matrix, rows })
    }

    /// Rows usable for training and testing, with their targets.
    fn labeled(&self) -> (Vec<usize>, Vec<bool>) {
        let mut idx = Vec::new();
        let mut targets = Vec::new();
        let (mut discarded, mut unlabeled) = (0, 0);
        for (i, r) in self.rows.iter().enumerate() {
            match r.label.target() {
                Some(t) => {
                    idx.push(i);
                    targets.push(t);
                }
                None if r.label == Label::Discarded => discarded += 1,
                None => unlabeled += 1,
            }
        }
        if discarded + unlabeled > 0 {
            log::info!("excluding {discarded} discarded and {unlabeled} unlabeled rows");
        }
        (idx, targets)
    }

    fn x(&self, rows: &[usize], mask: &BlockMask) -> ndarray::Array2<f64> {
        self.matrix.select(rows, &mask.columns())
    }
}

fn relabel(row: &mut SidecarRow, vote: Option<&VoteRow>) -> Result<()> {
    match vote {
        Some(v) => {
            row.label = v.label()?;
            if v.compile_timestamp.is_some() {
                row.compile_timestamp = v.compile_timestamp;
            }
        }
        None => row.label = Label::Unlabeled,
    }
    Ok(())
}

fn require_both_classes(targets: &[bool]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("no labeled rows after vote filtering".into()));
    }
    if targets.iter().all(|&t| t) {
        return Err(Error::SingleClass("malware only"));
    }
    if targets.iter().all(|&t| !t) {
        return Err(Error::SingleClass("benign only"));
    }
    Ok(())
}

fn fit(
    data: &Dataset,
    rows: &[usize],
    targets: &[bool],
    settings: &Settings,
    seed: u64,
) -> Result<(MlpModel, TrainReport)> {
    require_both_classes(targets)?;
    let x = data.x(rows, &settings.mask);
    let y: Vec<f64> = targets.iter().map(|&t| f64::from(u8::from(t))).collect();
    let mut model = MlpModel::init_glorot(&settings.layer_sizes(settings.mask.width()), settings.keep_prob, seed)?;
    let report = nn::train(&mut model, x.view(), &y, &settings.train_config(seed))?;
    Ok((model, report))
}

fn pick<T: Copy>(values: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| values[i]).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SavedModel,
    pub report: TrainReport,
    pub fit_rows: usize,
    pub calibration_rows: usize,
    pub model_path: PathBuf,
}

/// Trains on the labeled rows, fits the score densities on a stratified
/// holdout, and writes the model, loss log and per-row training scores.
pub fn train(manifest: &RunManifest) -> Result<TrainOutcome> {
    manifest.validate()?;
    let s = &manifest.settings;
    let data = Dataset::load(manifest)?;
    let (labeled, targets) = data.labeled();
    require_both_classes(&targets)?;

    // positions within `labeled`
    let k = ((1.0 / s.calibration_fraction).round() as usize).clamp(2, targets.len().max(2));
    let (fit_pos, cal_pos) = match stratified_kfold_split(&targets, k, manifest.derive_seed(TAG_CALIBRATION)) {
        Ok(folds) => {
            let fit_pos = complement(&folds, 0);
            let cal_targets = pick(&targets, &folds[0]);
            let fit_targets = pick(&targets, &fit_pos);
            if require_both_classes(&cal_targets).is_ok() && require_both_classes(&fit_targets).is_ok() {
                (fit_pos, folds[0].clone())
            } else {
                log::warn!("too few rows per class for a calibration holdout; calibrating on training scores");
                let all: Vec<usize> = (0..targets.len()).collect();
                (all.clone(), all)
            }
        }
        Err(_) => {
            log::warn!("too few rows for a calibration holdout; calibrating on training scores");
            let all: Vec<usize> = (0..targets.len()).collect();
            (all.clone(), all)
        }
    };

    let seed = manifest.derive_seed(TAG_MODEL);
    let (network, report) = fit(&data, &pick(&labeled, &fit_pos), &pick(&targets, &fit_pos), s, seed)?;
    if !report.stopped_early {
        log::info!("training ran all {} epochs", s.epochs);
    }

    let scores = network.predict(data.x(&labeled, &s.mask).view())?;
    let (mut benign, mut malware) = (Vec::new(), Vec::new());
    for &p in &cal_pos {
        if targets[p] {
            malware.push(scores[p]);
        } else {
            benign.push(scores[p]);
        }
    }
    let calibration = ScoreDensities::new(benign, malware, s.bandwidth)?;

    let model = SavedModel {
        network,
        feature_blocks: s.mask.clone(),
        training: Some(TrainingMeta {
            config: s.train_config(seed),
            rows: fit_pos.len(),
            epochs_run: report.epoch_losses.len(),
            stopped_early: report.stopped_early,
            epoch_losses: report.epoch_losses.clone(),
        }),
        calibration: Some(calibration),
    };

    create_dir(&manifest.out_dir)?;
    let model_path = manifest.out_dir.join(MODEL_FILE);
    model.save(&model_path)?;
    write_loss_log(&manifest.out_dir.join(TRAIN_LOG_FILE), &report.epoch_losses)?;
    let score_rows: Vec<RawScoreRow> = labeled
        .iter()
        .zip(&scores)
        .map(|(&i, &raw_score)| RawScoreRow {
            file_id: data.rows[i].file_id.clone(),
            label: data.rows[i].label,
            raw_score,
        })
        .collect();
    write_raw_scores(&manifest.out_dir.join(TRAIN_SCORES_FILE), &score_rows)?;

    Ok(TrainOutcome {
        model,
        report,
        fit_rows: fit_pos.len(),
        calibration_rows: cal_pos.len(),
        model_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    KFold,
    TimeSplit,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kfold" => Ok(EvalMode::KFold),
            "timesplit" => Ok(EvalMode::TimeSplit),
            other => Err(Error::Usage(format!("unknown evaluation mode {other:?} (kfold or timesplit)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub mode: EvalMode,
    /// One curve per fold, or the single test curve of a time split.
    pub curves: Vec<RocCurve>,
    pub average: Option<RocCurve>,
    pub summary: Vec<SummaryRow>,
    pub dropped: usize,
}

fn summary_row(name: impl Into<String>, roc: &RocCurve) -> SummaryRow {
    SummaryRow {
        fold: name.into(),
        auc: roc.auc,
        tpr_at_0_001: roc.tpr_at_fpr(REPORT_FPR),
    }
}

fn held_out_roc(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    targets: &[bool],
    labeled: &[usize],
    settings: &Settings,
    seed: u64,
) -> Result<RocCurve> {
    let (model, _) = fit(data, &pick(labeled, train_idx), &pick(targets, train_idx), settings, seed)?;
    let scores = model.predict(data.x(&pick(labeled, test_idx), &settings.mask).view())?;
    roc_curve(&scores, &pick(targets, test_idx))
}

/// Cross-validated or time-split evaluation writing ROC CSVs and a summary.
pub fn evaluate(manifest: &RunManifest, mode: EvalMode) -> Result<EvaluateReport> {
    manifest.validate()?;
    let s = &manifest.settings;
    let data = Dataset::load(manifest)?;
    let (labeled, targets) = data.labeled();
    require_both_classes(&targets)?;
    create_dir(&manifest.out_dir)?;

    let report = match mode {
        EvalMode::KFold => {
            let folds = stratified_kfold_split(&targets, s.folds, manifest.derive_seed(TAG_FOLDS))?;
            let curves = pool(s.jobs)?.install(|| {
                (0..folds.len())
                    .into_par_iter()
                    .map(|f| {
                        let seed = manifest.derive_seed(TAG_FOLD_MODEL + f as u64);
                        held_out_roc(&data, &complement(&folds, f), &folds[f], &targets, &labeled, s, seed)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let average = average_roc(&curves, &default_fpr_grid())?;
            let mut summary: Vec<SummaryRow> = curves
                .iter()
                .enumerate()
                .map(|(i, c)| summary_row(i.to_string(), c))
                .collect();
            let n = curves.len() as f64;
            summary.push(SummaryRow {
                fold: "mean".into(),
                auc: summary.iter().map(|r| r.auc).sum::<f64>() / n,
                tpr_at_0_001: summary.iter().map(|r| r.tpr_at_0_001).sum::<f64>() / n,
            });
            summary.push(summary_row("average", &average));
            for (i, c) in curves.iter().enumerate() {
                write_roc(&manifest.out_dir.join(format!("roc_fold{i}.csv")), c)?;
            }
            write_roc(&manifest.out_dir.join("roc_average.csv"), &average)?;
            EvaluateReport {
                mode,
                curves,
                average: Some(average),
                summary,
                dropped: 0,
            }
        }
        EvalMode::TimeSplit => {
            let date = |v: &Option<String>, default: &str| parse_date(v.as_deref().unwrap_or(default));
            let max = match &s.max_date {
                Some(d) => parse_date(d)?,
                None => Utc::now().date_naive(),
            };
            let cfg = TimeSplitConfig::from_dates(
                date(&s.min_date, TimeSplitConfig::DEFAULT_MIN)?,
                date(&s.split_date, TimeSplitConfig::DEFAULT_BOUNDARY)?,
                max,
            )?;
            let stamps: Vec<Option<i64>> = labeled.iter().map(|&i| data.rows[i].compile_timestamp).collect();
            let split = time_split(&stamps, &cfg);
            if split.train.is_empty() || split.test.is_empty() {
                return Err(Error::EmptyInput("time split leaves an empty train or test side".into()));
            }
            let seed = manifest.derive_seed(TAG_TIMESPLIT);
            let roc = held_out_roc(&data, &split.train, &split.test, &targets, &labeled, s, seed)?;
            write_roc(&manifest.out_dir.join("roc_test.csv"), &roc)?;
            EvaluateReport {
                mode,
                summary: vec![summary_row("test", &roc)],
                curves: vec![roc],
                average: None,
                dropped: split.dropped.len(),
            }
        }
    };
    write_summary(&manifest.out_dir.join(SUMMARY_FILE), &report.summary)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub base_rate: f64,
}

/// Scores `manifest.inputs` with the model at `manifest.model`.
pub fn score(manifest: &RunManifest) -> Result<ScoreReport> {
    manifest.validate()?;
    let path = manifest
        .model
        .as_ref()
        .ok_or_else(|| Error::Usage("no model file given".into()))?;
    let saved = SavedModel::load(path)?;
    let densities = saved
        .calibration
        .clone()
        .ok_or_else(|| Error::format("model file", "no calibration data; retrain with this version"))?;
    let base_rate = match manifest.settings.base_rate {
        Some(r) => r,
        None => {
            log::warn!("no --base-rate given; assuming {DEFAULT_BASE_RATE}");
            DEFAULT_BASE_RATE
        }
    };
    let calibration = densities.with_base_rate(base_rate)?;

    let paths = collect_inputs(&manifest.inputs)?;
    let done = extract_files(&paths, manifest.settings.jobs)?;
    if done.is_empty() {
        return Err(Error::EmptyInput(format!("no readable files among {} inputs", paths.len())));
    }
    let matrix = FeatureMatrix::from_rows(FEATURE_DIM, done.iter().map(|e| e.features.to_f32()))?;
    let all_rows: Vec<usize> = (0..matrix.rows()).collect();
    let x = matrix.select(&all_rows, &saved.feature_blocks.columns());
    let raw = saved.network.predict(x.view())?;
    let rows = done
        .iter()
        .zip(raw)
        .map(|(e, raw_score)| ScoreRow {
            file_id: file_id(&e.path),
            raw_score,
            threat_score: calibration.threat_score(raw_score),
        })
        .collect();
    Ok(ScoreReport { rows, base_rate })
}
