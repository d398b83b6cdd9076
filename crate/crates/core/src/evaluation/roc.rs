use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called malware. The origin uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Exact threshold sweep over the distinct scores, highest first. Tied scores
/// move the curve in a single diagonal step; AUC is the trapezoid area.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape(scores.len(), labels.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Domain(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(if pos == 0 { "benign only" } else { "malware only" }));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

impl RocCurve {
    /// TPR at the largest achieved FPR not exceeding `target`. No
    /// interpolation between operating points.
    pub fn tpr_at_fpr(&self, target: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.fpr <= target)
            .map(|p| p.tpr)
            .fold(0.0, f64::max)
    }
}

pub fn tpr_at_fpr(roc: &RocCurve, target: f64) -> f64 {
    roc.tpr_at_fpr(target)
}

/// Vertical average of several curves: mean step-convention TPR at each FPR of
/// `grid`. The returned points carry NaN thresholds.
pub fn average_roc(curves: &[RocCurve], grid: &[f64]) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("no curves to average".into()));
    }
    let mut points: Vec<RocPoint> = grid
        .iter()
        .map(|&fpr| RocPoint {
            threshold: f64::NAN,
            fpr,
            tpr: curves.iter().map(|c| c.tpr_at_fpr(fpr)).sum::<f64>() / curves.len() as f64,
        })
        .collect();
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr));
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// FPR grid for averaged curves: 0, a log-spaced run from 1e-5 and a linear
/// run up to 1.
pub fn default_fpr_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..=100).map(|i| 10f64.powf(-5.0 + 5.0 * i as f64 / 100.0)));
    grid.extend((1..=100).map(|i| i as f64 / 100.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let roc = roc_curve(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.tpr_at_fpr(0.001), 1.0);
        assert_eq!(roc.tpr_at_fpr(0.0), 1.0);
    }

    #[test]
    fn all_equal_scores() {
        let roc = roc_curve(&[0.4; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points.len(), 2);
        assert_eq!(roc.tpr_at_fpr(0.001), 0.0);
    }

    #[test]
    fn endpoints() {
        let roc = roc_curve(&[0.1, 0.7, 0.4, 0.9], &[false, true, false, true]).unwrap();
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(first.threshold.is_infinite());
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(roc_curve(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass(_))));
        assert!(roc_curve(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn averaging_identical_curves_is_identity_on_grid() {
        let roc = roc_curve(&[0.1, 0.7, 0.4, 0.9, 0.3], &[false, true, false, true, true]).unwrap();
        let avg = average_roc(&[roc.clone(), roc.clone()], &default_fpr_grid()).unwrap();
        for p in &avg.points {
            assert_eq!(p.tpr, roc.tpr_at_fpr(p.fpr));
        }
        assert_eq!(avg.points.first().unwrap().fpr, 0.0);
        assert_eq!(avg.points.last().unwrap().fpr, 1.0);
    }
}
