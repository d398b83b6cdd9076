//! Maps raw classifier scores to threat probabilities.
//!
//! Each class's score density is estimated with an Epanechnikov KDE whose
//! samples are reflected about 0 and 1, so no mass leaks outside `[0, 1]`.
//! The two densities are combined with an assumed malware base rate through
//! Bayes' rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 0.01;

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Class-conditional score density from a sorted sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreDensity {
    sorted: Vec<f64>,
}

impl ScoreDensity {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("density needs at least one sample".into()));
        }
        if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Domain(format!("score sample {s} outside [0, 1]")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(ScoreDensity { sorted: samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Sum of kernels over samples lying in `[lo, hi]`, with `u` computed from
    /// the reflected position `map(s)`.
    fn kernel_sum(&self, lo: f64, hi: f64, x: f64, bandwidth: f64, map: impl Fn(f64) -> f64) -> f64 {
        let start = self.sorted.partition_point(|&s| s < lo);
        let end = self.sorted.partition_point(|&s| s <= hi);
        self.sorted[start..end]
            .iter()
            .map(|&s| epanechnikov((x - map(s)) / bandwidth))
            .fold(0.0, |acc, k| acc + k)
    }

    /// Density at `x`: `(1 / (N * bw)) * sum K((x - s') / bw)` over the samples
    /// and their reflections `-s` and `2 - s`.
    pub fn pdf(&self, x: f64, bandwidth: f64) -> f64 {
        let n = self.sorted.len() as f64;
        let direct = self.kernel_sum(x - bandwidth, x + bandwidth, x, bandwidth, |s| s);
        let left = self.kernel_sum(-x - bandwidth, -x + bandwidth, x, bandwidth, |s| -s);
        let right = self.kernel_sum(2.0 - x - bandwidth, 2.0 - x + bandwidth, x, bandwidth, |s| 2.0 - s);
        (direct + left + right) / (n * bandwidth)
    }
}

impl TryFrom<Vec<f64>> for ScoreDensity {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreDensity::new(v)
    }
}

impl From<ScoreDensity> for Vec<f64> {
    fn from(d: ScoreDensity) -> Self {
        d.sorted
    }
}

/// Mirrored Epanechnikov KDE of `samples` evaluated at `x`.
pub fn kde_pdf(samples: &[f64], x: f64, bandwidth: f64) -> Result<f64> {
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::Domain(format!("bandwidth {bandwidth} must be positive")));
    }
    Ok(ScoreDensity::new(samples.to_vec())?.pdf(x, bandwidth))
}

/// Bayes' rule with both-zero densities falling back to the prior.
pub fn posterior(p_malware: f64, p_benign: f64, base_rate: f64) -> f64 {
    let num = p_malware * base_rate;
    let den = num + p_benign * (1.0 - base_rate);
    if den > 0.0 {
        num / den
    } else {
        base_rate
    }
}

/// Score samples and bandwidth as persisted alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDensities {
    pub benign: ScoreDensity,
    pub malware: ScoreDensity,
    pub bandwidth: f64,
}

impl ScoreDensities {
    pub fn new(benign: Vec<f64>, malware: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(ScoreDensities {
            benign: ScoreDensity::new(benign)?,
            malware: ScoreDensity::new(malware)?,
            bandwidth,
        })
    }

    pub fn with_base_rate(self, base_rate: f64) -> Result<CalibrationModel> {
        if !(base_rate > 0.0 && base_rate < 1.0) {
            return Err(Error::Domain(format!("base rate {base_rate} outside (0, 1)")));
        }
        Ok(CalibrationModel {
            densities: self,
            base_rate,
        })
    }
}

/// Densities plus the assumed malware base rate `P(m)`, the "riskiness" of the
/// network being protected.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub densities: ScoreDensities,
    pub base_rate: f64,
}

impl CalibrationModel {
    pub fn malware_pdf(&self, s: f64) -> f64 {
        self.densities.malware.pdf(s, self.densities.bandwidth)
    }

    pub fn benign_pdf(&self, s: f64) -> f64 {
        self.densities.benign.pdf(s, self.densities.bandwidth)
    }

    /// `P(malware | score)`. Scores are clamped into `[0, 1]`.
    pub fn threat_score(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        posterior(self.malware_pdf(s), self.benign_pdf(s), self.base_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_peak_and_support() {
        assert_eq!(kde_pdf(&[0.5], 0.5, 0.01).unwrap(), 75.0);
        assert_eq!(kde_pdf(&[0.5], 0.52, 0.01).unwrap(), 0.0);
        assert!(kde_pdf(&[0.5], 0.9, 0.01).unwrap().is_sign_positive());
    }

    #[test]
    fn boundary_sample_coincides_with_mirror() {
        assert_eq!(kde_pdf(&[0.0], 0.0, 0.01).unwrap(), 150.0);
        assert_eq!(kde_pdf(&[1.0], 1.0, 0.01).unwrap(), 150.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kde_pdf(&[], 0.5, 0.01).is_err());
        assert!(kde_pdf(&[0.5], 0.5, 0.0).is_err());
        assert!(kde_pdf(&[1.5], 0.5, 0.01).is_err());
        assert!(ScoreDensities::new(vec![0.1], vec![0.9], 0.01).unwrap().with_base_rate(1.0).is_err());
    }

    #[test]
    fn bayes_rule_cases() {
        assert_eq!(posterior(3.0, 3.0, 0.5), 0.5);
        assert_eq!(posterior(2.0, 0.0, 0.3), 1.0);
        assert!((posterior(2.0, 1.0, 0.1) - 0.2 / 1.1).abs() < 1e-12);
        assert_eq!(posterior(0.0, 0.0, 0.25), 0.25);
    }

    #[test]
    fn threat_score_far_from_samples_is_prior() {
        let c = ScoreDensities::new(vec![0.1, 0.2], vec![0.8, 0.9], 0.01)
            .unwrap()
            .with_base_rate(0.3)
            .unwrap();
        assert_eq!(c.threat_score(0.5), 0.3);
        assert_eq!(c.threat_score(0.9), 1.0);
        assert_eq!(c.threat_score(0.1), 0.0);
    }

    #[test]
    fn density_serde_sorts() {
        let d: ScoreDensity = serde_json::from_str("[0.9, 0.1, 0.5]").unwrap();
        assert_eq!(d.samples(), &[0.1, 0.5, 0.9]);
        assert!(serde_json::from_str::<ScoreDensity>("[]").is_err());
    }
}
