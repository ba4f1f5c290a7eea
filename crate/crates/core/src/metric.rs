use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Supported distance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Euclidean,
}

/// Distance between feature vectors.
///
/// Optional per-feature standardization divides each coordinate difference by
/// the training standard deviation of that feature. The mean shift of a
/// z-score cancels in differences, so only the scale is stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    /// Reciprocal per-feature scale; `None` means raw features.
    inv_scale: Option<Vec<f64>>,
}

impl Metric {
    pub fn euclidean() -> Self {
        Self::default()
    }

    /// Euclidean distance on z-scored features, scales estimated on `train`.
    pub fn standardized(train: &Dataset) -> Self {
        let flags = vec![true; train.n_features()];
        Self::standardized_features(train, &flags).expect("flags match the dimension")
    }

    /// Standardize only the features whose flag is set. Constant features
    /// keep unit scale.
    pub fn standardized_features(train: &Dataset, flags: &[bool]) -> Result<Self> {
        let p = train.n_features();
        if flags.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: flags.len() });
        }
        let n = train.n_rows() as f64;
        let mut mean = vec![0.0; p];
        for row in train.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in train.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_scale = var
            .iter()
            .zip(flags)
            .map(|(&s, &on)| {
                let sd = if n > 1.0 { (s / (n - 1.0)).sqrt() } else { 0.0 };
                if on && sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { kind: MetricKind::Euclidean, inv_scale: Some(inv_scale) })
    }

    pub fn is_standardized(&self) -> bool {
        self.inv_scale.is_some()
    }

    /// Checked distance between two points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
        }
        if let Some(s) = &self.inv_scale {
            if s.len() != a.len() {
                return Err(Error::DimensionMismatch { expected: s.len(), got: a.len() });
            }
        }
        Ok(self.dist(a, b))
    }

    /// Squared distance without dimension checks.
    #[inline]
    pub(crate) fn sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.inv_scale {
            None => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Some(s) => a
                .iter()
                .zip(b)
                .zip(s)
                .map(|((x, y), w)| {
                    let d = (x - y) * w;
                    d * d
                })
                .sum(),
        }
    }

    #[inline]
    pub(crate) fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sq_dist(a, b).sqrt()
    }
}

/// Distance between `a` and `b` under `m`.
pub fn distance(a: &[f64], b: &[f64], m: &Metric) -> Result<f64> {
    m.distance(a, b)
}
