use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Linear discriminant analysis with a pooled covariance and class-proportion
/// priors. Scores are `w_ℓᵀx + b_ℓ` with `w_ℓ = Σ⁻¹μ_ℓ` and
/// `b_ℓ = -μ_ℓᵀΣ⁻¹μ_ℓ / 2 + ln π_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// One row of weights per class; absent classes hold `None`.
    weights: Vec<Option<(Vec<f64>, f64)>>,
    n_features: usize,
}

impl LdaModel {
    pub(crate) fn fit(train: &Dataset, ridge: f64) -> Result<Self> {
        let labels = train.require_labels()?;
        let (n, p, l) = (train.n_rows(), train.n_features(), train.n_classes());
        let counts = train.class_counts()?;
        let mut means = vec![vec![0.0; p]; l];
        for (x, &y) in train.rows().zip(labels) {
            for (m, v) in means[y - 1].iter_mut().zip(x) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for (x, &y) in train.rows().zip(labels) {
            let d = DVector::from_iterator(p, x.iter().zip(&means[y - 1]).map(|(a, b)| a - b));
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= n.saturating_sub(present).max(1) as f64;
        if ridge > 0.0 {
            let trace = cov.trace();
            let lambda = if trace > 0.0 { ridge * trace / p as f64 } else { ridge };
            for i in 0..p {
                cov[(i, i)] += lambda;
            }
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numeric("pooled covariance is singular; use a positive ridge".into()))?;
        let weights = (0..l)
            .map(|c| {
                if counts[c] == 0 {
                    return None;
                }
                let mu = DVector::from_column_slice(&means[c]);
                let w = chol.solve(&mu);
                let b = -0.5 * mu.dot(&w) + (counts[c] as f64 / n as f64).ln();
                Some((w.iter().copied().collect(), b))
            })
            .collect();
        Ok(Self { weights, n_features: p })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    /// Discriminant scores, `-inf` for classes absent from training.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|wb| match wb {
                Some((w, b)) => b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>(),
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    pub(crate) fn predict(&self, x: &[f64]) -> usize {
        super::argmax_label(&self.scores(x))
    }
}
