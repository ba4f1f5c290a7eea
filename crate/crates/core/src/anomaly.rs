//! Distance-to-measure anomaly detection.
//!
//! `d̂_ℓ(x)` is the root mean squared distance from `x` to its k nearest rows
//! of class ℓ. Each class gets a threshold `ĉ_ℓ` calibrated on a random split
//! of its own rows, and a point is flagged only when it exceeds the threshold
//! of every class.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    /// Neighbors in the distance to measure.
    pub k: usize,
    /// Nominal type I error.
    pub alpha: f64,
    /// Share of each class used for the calibration scores; the rest serves
    /// as the reference sample they are scored against.
    pub split_fraction: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self { k: 5, alpha: 0.1, split_fraction: 0.5 }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("anomaly k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction)));
        }
        Ok(())
    }
}

/// Per-class thresholds on the `d̂` scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyCalibration {
    pub thresholds: Vec<f64>,
    /// Number of calibration scores behind each threshold.
    pub calibration_sizes: Vec<usize>,
    /// Training rows of each class that the calibration scores were
    /// computed against.
    pub reference_rows: Vec<Vec<usize>>,
    pub config: AnomalyConfig,
}

/// `sqrt(mean of the k smallest squared distances)` from `x` to `rows`.
fn dtm_rows<'a>(x: &[f64], rows: impl Iterator<Item = &'a [f64]>, k: usize, metric: &Metric) -> f64 {
    let mut d: Vec<f64> = rows.map(|r| metric.sq_dist(x, r)).collect();
    let k = k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let head = &mut d[..k];
    head.sort_unstable_by(f64::total_cmp);
    (head.iter().sum::<f64>() / k as f64).sqrt()
}

/// Empirical distance to measure of `x` with respect to every row of
/// `class_data`. `k` above the row count is clamped with a warning.
pub fn dtm_hat(x: &[f64], class_data: &Dataset, k: usize, metric: &Metric) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("anomaly k must be at least 1".into()));
    }
    if class_data.is_empty() {
        return Err(Error::Usage("distance to measure of an empty class".into()));
    }
    class_data.check_point(x)?;
    if k > class_data.n_rows() {
        log::warn!("dtm k = {k} exceeds the {} class rows; clamping", class_data.n_rows());
    }
    Ok(dtm_rows(x, class_data.rows(), k, metric))
}

/// Per-class row indices of `train`, each sorted by feature values so the
/// subsequent shuffle does not depend on the incoming row order.
fn canonical_class_rows(train: &Dataset) -> Result<Vec<Vec<usize>>> {
    (1..=train.n_classes())
        .map(|l| {
            let mut rows = train.rows_of_class(l)?;
            rows.sort_by(|&a, &b| {
                train
                    .row(a)
                    .iter()
                    .zip(train.row(b))
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            Ok(rows)
        })
        .collect()
}

/// Order statistic (1-based) used as the `(1 - α)` empirical quantile.
fn quantile_rank(n: usize, alpha: f64) -> usize {
    let r = ((1.0 - alpha) * n as f64 - 1e-9).ceil() as usize;
    r.clamp(1, n)
}

/// Calibrate one threshold per class by data splitting. Class `ℓ` is shuffled
/// with stream `rng / Split / ℓ`.
pub fn calibrate(train: &Dataset, cfg: &AnomalyConfig, metric: &Metric, rng: &RngStream) -> Result<AnomalyCalibration> {
    cfg.validate()?;
    train.require_labels()?;
    let classes = canonical_class_rows(train)?;
    let split = rng.tagged(Purpose::Split);
    let per_class: Vec<(f64, usize, Vec<usize>)> = classes
        .into_par_iter()
        .enumerate()
        .map(|(c, mut rows)| {
            let n = rows.len();
            if n < 2 * (cfg.k + 1) {
                return Err(Error::Config(format!(
                    "class {} has {n} training rows; calibration with k = {} needs at least {}",
                    class_name(train, c + 1),
                    cfg.k,
                    2 * (cfg.k + 1)
                )));
            }
            rows.shuffle(&mut split.child(c as u64 + 1).rng());
            let n1 = ((cfg.split_fraction * n as f64).round() as usize).clamp(1, n - cfg.k);
            let (scored, reference) = rows.split_at(n1);
            let mut scores: Vec<f64> = scored
                .iter()
                .map(|&i| dtm_rows(train.row(i), reference.iter().map(|&r| train.row(r)), cfg.k, metric))
                .collect();
            scores.sort_unstable_by(f64::total_cmp);
            Ok((scores[quantile_rank(n1, cfg.alpha) - 1], n1, reference.to_vec()))
        })
        .collect::<Result<_>>()?;
    let mut cal = AnomalyCalibration {
        thresholds: Vec::new(),
        calibration_sizes: Vec::new(),
        reference_rows: Vec::new(),
        config: cfg.clone(),
    };
    for (t, n1, reference) in per_class {
        cal.thresholds.push(t);
        cal.calibration_sizes.push(n1);
        cal.reference_rows.push(reference);
    }
    Ok(cal)
}

fn class_name(train: &Dataset, label: usize) -> String {
    match train.class_names() {
        Some(names) => format!("'{}'", names[label - 1]),
        None => label.to_string(),
    }
}

/// `d̂_ℓ(x)` against the full training rows of every class.
pub fn dtm_scores(x: &[f64], train: &Dataset, cal: &AnomalyCalibration, metric: &Metric) -> Result<Vec<f64>> {
    let labels = train.require_labels()?;
    train.check_point(x)?;
    if cal.thresholds.len() != train.n_classes() {
        return Err(Error::DimensionMismatch { expected: train.n_classes(), got: cal.thresholds.len() });
    }
    Ok((1..=train.n_classes())
        .map(|l| {
            let rows = train.rows().zip(labels).filter(move |(_, &y)| y == l).map(|(r, _)| r);
            dtm_rows(x, rows, cal.config.k, metric)
        })
        .collect())
}

/// Whether `x` exceeds the threshold of every class.
pub fn test_statistic(x: &[f64], train: &Dataset, cal: &AnomalyCalibration, metric: &Metric) -> Result<bool> {
    let scores = dtm_scores(x, train, cal, metric)?;
    Ok(scores.iter().zip(&cal.thresholds).all(|(s, c)| s > c))
}

/// Test indices split by the detector, with the per-class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPartition {
    pub inliers: Vec<usize>,
    pub anomalies: Vec<usize>,
    /// `scores[i][ℓ - 1]` is `d̂_ℓ` of test row `i`.
    pub scores: Vec<Vec<f64>>,
}

impl AnomalyPartition {
    pub fn flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.scores.len()];
        for &i in &self.anomalies {
            f[i] = true;
        }
        f
    }
}

pub fn filter_anomalies(
    test: &Dataset,
    train: &Dataset,
    cal: &AnomalyCalibration,
    metric: &Metric,
) -> Result<AnomalyPartition> {
    train.check_dimension(test)?;
    let scores: Vec<Vec<f64>> = (0..test.n_rows())
        .into_par_iter()
        .map(|i| dtm_scores(test.row(i), train, cal, metric))
        .collect::<Result<_>>()?;
    let mut inliers = Vec::new();
    let mut anomalies = Vec::new();
    for (i, s) in scores.iter().enumerate() {
        if s.iter().zip(&cal.thresholds).all(|(s, c)| s > c) {
            anomalies.push(i);
        } else {
            inliers.push(i);
        }
    }
    Ok(AnomalyPartition { inliers, anomalies, scores })
}
