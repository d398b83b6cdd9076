use chrono::{NaiveDate, NaiveTime};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::rng_for;

const SPLIT_STREAM: u64 = 3;

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous folds whose
/// sizes differ by at most one (the first `n % k` folds get the extra index).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n < k {
        return Err(Error::Domain(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, SPLIT_STREAM));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Random k-fold split that deals each class out separately, so every fold
/// sees both classes whenever each class has at least `k` members.
///
/// Fold `f` receives the `f`-th class-wise fold of each class; folds are
/// returned sorted by row index.
pub fn stratified_kfold_split(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || labels.len() < k {
        return Err(Error::Domain(format!("cannot split {} rows into {k} folds", labels.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (class, class_seed) in [(false, seed), (true, seed.wrapping_add(1))] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng_for(class_seed, SPLIT_STREAM));
        let (base, extra) = (idx.len() / k, idx.len() % k);
        let mut start = 0;
        // rotate which folds get the remainder so totals stay balanced
        for j in 0..k {
            let f = (j + offset) % k;
            let len = base + usize::from(j < extra);
            folds[f].extend_from_slice(&idx[start..start + len]);
            start += len;
        }
        offset = extra;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Everything outside `folds[test]`, in index order.
pub fn complement(folds: &[Vec<usize>], test: usize) -> Vec<usize> {
    let mut out: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != test)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    out.sort_unstable();
    out
}

pub fn date_start(date: NaiveDate) -> i64 {
    date.and_time(NaiveTime::MIN).and_utc().timestamp()
}

/// Last second of `date`.
pub fn date_end(date: NaiveDate) -> i64 {
    date_start(date) + 86_399
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Usage(format!("invalid date {s:?} (want YYYY-MM-DD): {e}")))
}

/// Time-split bounds in seconds since the epoch (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSplitConfig {
    /// Earliest kept timestamp, inclusive.
    pub min: i64,
    /// Timestamps `< boundary` train, `>= boundary` test.
    pub boundary: i64,
    /// Latest kept timestamp, inclusive.
    pub max: i64,
}

impl TimeSplitConfig {
    pub const DEFAULT_MIN: &'static str = "2000-01-01";
    pub const DEFAULT_BOUNDARY: &'static str = "2014-07-31";

    /// Default min and boundary dates; `run_date` is the last kept day.
    pub fn with_run_date(run_date: NaiveDate) -> Self {
        TimeSplitConfig {
            min: date_start(parse_date(Self::DEFAULT_MIN).unwrap()),
            boundary: date_start(parse_date(Self::DEFAULT_BOUNDARY).unwrap()),
            max: date_end(run_date),
        }
    }

    pub fn from_dates(min: NaiveDate, boundary: NaiveDate, max: NaiveDate) -> Result<Self> {
        if !(min <= boundary && boundary <= max) {
            return Err(Error::Usage(format!(
                "time split dates must satisfy min <= boundary <= max, got {min} / {boundary} / {max}"
            )));
        }
        Ok(TimeSplitConfig {
            min: date_start(min),
            boundary: date_start(boundary),
            max: date_end(max),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Splits row indices by compile timestamp. Rows without a timestamp or
/// outside `[min, max]` are dropped.
pub fn time_split(timestamps: &[Option<i64>], config: &TimeSplitConfig) -> TimeSplit {
    let mut out = TimeSplit::default();
    for (i, ts) in timestamps.iter().enumerate() {
        match ts {
            Some(t) if (config.min..=config.max).contains(t) => {
                if *t < config.boundary {
                    out.train.push(i);
                } else {
                    out.test.push(i);
                }
            }
            _ => out.dropped.push(i),
        }
    }
    if out.train.is_empty() {
        log::warn!("time split: no rows before the boundary");
    }
    if out.test.is_empty() {
        log::warn!("time split: no rows on or after the boundary");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(y: i32, m: u32, d: u32) -> i64 {
        date_start(NaiveDate::from_ymd_opt(y, m, d).unwrap())
    }

    #[test]
    fn fold_sizes() {
        let f = kfold_split(8, 4, 1).unwrap();
        assert!(f.iter().all(|x| x.len() == 2));
        let mut sizes: Vec<_> = kfold_split(9, 4, 1).unwrap().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 3]);
        assert_eq!(kfold_split(9, 4, 5).unwrap(), kfold_split(9, 4, 5).unwrap());
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(3, 0, 0).is_err());
    }

    #[test]
    fn stratified_folds_are_balanced() {
        let labels: Vec<bool> = (0..22).map(|i| i % 3 == 0).collect();
        let folds = stratified_kfold_split(&labels, 4, 9).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..22).collect::<Vec<_>>());
        let sizes: Vec<_> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
        for f in &folds {
            assert!(f.iter().any(|&i| labels[i]));
            assert!(f.iter().any(|&i| !labels[i]));
        }
    }

    #[test]
    fn time_split_rules() {
        let cfg = TimeSplitConfig::with_run_date(NaiveDate::from_ymd_opt(2015, 7, 31).unwrap());
        let stamps = vec![
            Some(ts(1999, 12, 31)),
            Some(ts(2014, 7, 30)),
            Some(ts(2014, 7, 31)),
            Some(ts(2015, 7, 31) + 3600),
            Some(ts(2015, 8, 1)),
            None,
        ];
        let s = time_split(&stamps, &cfg);
        assert_eq!(s.train, vec![1]);
        assert_eq!(s.test, vec![2, 3]);
        assert_eq!(s.dropped, vec![0, 4, 5]);
    }

    #[test]
    fn year_buckets() {
        let cfg = TimeSplitConfig::with_run_date(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap());
        let stamps = [ts(2001, 1, 1), ts(2010, 6, 1), ts(2015, 3, 1)].map(Some);
        let s = time_split(&stamps, &cfg);
        assert_eq!((s.train, s.test), (vec![0, 1], vec![2]));
    }

    #[test]
    fn bad_date_order() {
        let d = |s| parse_date(s).unwrap();
        assert!(TimeSplitConfig::from_dates(d("2015-01-01"), d("2014-01-01"), d("2016-01-01")).is_err());
        assert!(parse_date("31/07/2014").is_err());
    }
}
