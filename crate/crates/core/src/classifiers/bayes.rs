use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One weighted multivariate normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`.
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianComponent {
    /// `cov` is row-major `p × p`, symmetric positive definite.
    pub fn new(weight: f64, mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let p = mean.len();
        if p == 0 {
            return Err(Error::Config("gaussian component needs at least one dimension".into()));
        }
        if cov.len() != p * p {
            return Err(Error::DimensionMismatch { expected: p * p, got: cov.len() });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::Config(format!("component weight must be non-negative, got {weight}")));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::Config("gaussian parameters must be finite".into()));
        }
        let cov = DMatrix::from_row_slice(p, p, &cov);
        let scale = cov.amax().max(1.0);
        for i in 0..p {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Config("covariance is not symmetric".into()));
                }
            }
        }
        let chol =
            cov.clone().cholesky().ok_or_else(|| Error::Config("covariance is not positive definite".into()))?.l();
        let log_det_half: f64 = (0..p).map(|i| chol[(i, i)].ln()).sum();
        let log_norm = -0.5 * p as f64 * LN_2PI - log_det_half;
        Ok(Self { weight, mean, cov, chol, log_norm })
    }

    /// Identity-covariance component.
    pub fn spherical(weight: f64, mean: Vec<f64>, variance: f64) -> Result<Self> {
        let p = mean.len();
        let mut cov = vec![0.0; p * p];
        for i in 0..p {
            cov[i * p + i] = variance;
        }
        Self::new(weight, mean, cov)
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(self.dim(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        let y = self.chol.solve_lower_triangular(&d).expect("cholesky diagonal is positive");
        self.log_norm - 0.5 * y.norm_squared()
    }

    /// Squared Mahalanobis distance to the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(self.dim(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        self.chol.solve_lower_triangular(&d).expect("cholesky diagonal is positive").norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = &self.chol * z;
        self.mean.iter().zip(y.iter()).map(|(m, v)| m + v).collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A class-conditional density: a finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDensity {
    components: Vec<GaussianComponent>,
}

impl ClassDensity {
    /// Component weights must sum to one.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Config("class density needs at least one component".into()));
        };
        let p = first.dim();
        if let Some(c) = components.iter().find(|c| c.dim() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: c.dim() });
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("component weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, cov)?])
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect();
        log_sum_exp(&terms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        self.components[pick].sample(rng)
    }
}

/// Known class priors `q_ℓ` and class densities `f_ℓ`.
///
/// The densities sit behind an `Arc`, so oracles that differ only in their
/// priors (training versus test distribution) share one parameter object.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureOracle {
    class_weights: Vec<f64>,
    classes: Arc<[ClassDensity]>,
}

fn normalize_weights(q: &[f64], n_classes: usize) -> Result<Vec<f64>> {
    if q.len() != n_classes {
        return Err(Error::DimensionMismatch { expected: n_classes, got: q.len() });
    }
    if q.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!("class weights must be finite and non-negative: {q:?}")));
    }
    let total: f64 = q.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("class weights sum to zero".into()));
    }
    Ok(q.iter().map(|w| w / total).collect())
}

impl GaussianMixtureOracle {
    /// Class weights are normalized onto the simplex.
    pub fn new(class_weights: Vec<f64>, classes: Vec<ClassDensity>) -> Result<Self> {
        let Some(first) = classes.first() else {
            return Err(Error::Config("oracle needs at least one class".into()));
        };
        let p = first.dim();
        if let Some(c) = classes.iter().find(|c| c.dim() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: c.dim() });
        }
        let class_weights = normalize_weights(&class_weights, classes.len())?;
        Ok(Self { class_weights, classes: classes.into() })
    }

    /// Same densities, new priors.
    pub fn with_class_weights(&self, class_weights: &[f64]) -> Result<Self> {
        Ok(Self { class_weights: normalize_weights(class_weights, self.classes.len())?, classes: self.classes.clone() })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.classes[0].dim()
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn classes(&self) -> &[ClassDensity] {
        &self.classes
    }

    /// Whether both oracles point at the same density parameters.
    pub fn shares_densities(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.classes, &other.classes)
    }

    /// `ln q_ℓ + ln f_ℓ(x)` for each class.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.class_weights.iter().zip(self.classes.iter()).map(|(q, f)| q.ln() + f.log_density(x)).collect()
    }

    /// Posterior class probabilities `η_ℓ(x)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let z = log_sum_exp(&lj);
        if z == f64::NEG_INFINITY {
            // x is beyond every density's floating-point support
            return self.class_weights.clone();
        }
        lj.iter().map(|v| (v - z).exp()).collect()
    }

    /// Draw from `f_ℓ` (1-based class).
    pub fn sample_class<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Vec<f64> {
        self.classes[class - 1].sample(rng)
    }

    /// Draw a `(label, x)` pair from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = self.class_weights.iter().rposition(|&q| q > 0.0).expect("weights sum to one") + 1;
        for (i, q) in self.class_weights.iter().enumerate() {
            acc += q;
            if u < acc {
                label = i + 1;
                break;
            }
        }
        let x = self.sample_class(label, rng);
        (label, x)
    }
}

/// The Bayes rule `argmax_ℓ q_ℓ f_ℓ(x)`; ties go to the smallest label.
pub fn bayes_classify(oracle: &GaussianMixtureOracle, x: &[f64]) -> Result<usize> {
    if x.len() != oracle.n_features() {
        return Err(Error::DimensionMismatch { expected: oracle.n_features(), got: x.len() });
    }
    Ok(super::argmax_label(&oracle.log_joint(x)))
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Monte Carlo Bayes risk, the mean of `1 - max_ℓ η_ℓ(X)` over `n_mc` draws
/// of `X` from the oracle's mixture. Draw `i` uses stream `rng / i`.
pub fn bayes_risk(oracle: &GaussianMixtureOracle, n_mc: usize, rng: &RngStream) -> Result<RiskEstimate> {
    if n_mc == 0 {
        return Err(Error::Config("bayes_risk needs n_mc >= 1".into()));
    }
    let losses: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let (_, x) = oracle.sample(&mut rng.child(i as u64).rng());
            let post = oracle.posterior(&x);
            1.0 - post.iter().copied().fold(0.0, f64::max)
        })
        .collect();
    Ok(mean_and_se(&losses))
}

pub(crate) fn mean_and_se(v: &[f64]) -> RiskEstimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std_error =
        if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
    RiskEstimate { value: mean, std_error }
}
