//! Base classifiers behind one fit/predict contract, plus the Bayes oracle
//! for known Gaussian-mixture class densities.
//!
//! Every fitted model predicts a 1-based label in `1..=L`. A class absent from
//! the training data is never predicted (unless every class is absent, which a
//! labeled dataset cannot express).

mod bayes;
mod knn;
mod lda;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng::RngStream;

pub(crate) use bayes::mean_and_se;
pub use bayes::{bayes_classify, bayes_risk, ClassDensity, GaussianComponent, GaussianMixtureOracle, RiskEstimate};
pub use knn::KnnModel;
pub use lda::LdaModel;
pub use logistic::LogisticModel;
pub use tree::TreeModel;

/// Which base classifier to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    /// Multinomial logistic regression, damped Newton on the mean
    /// cross-entropy plus `l2 / 2 * |θ|²`.
    Logistic {
        #[serde(default = "defaults::max_iter")]
        max_iter: usize,
        #[serde(default = "defaults::l2")]
        l2: f64,
        #[serde(default = "defaults::tol")]
        tol: f64,
    },
    /// Linear discriminant analysis. The pooled covariance gets
    /// `ridge * trace(Σ) / p` added to its diagonal; `ridge = 0` disables it.
    Lda {
        #[serde(default = "defaults::ridge")]
        ridge: f64,
    },
    /// CART with Gini impurity. `max_features` enables per-node feature
    /// subsampling (random-forest trees).
    Tree {
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
        #[serde(default)]
        max_features: Option<usize>,
    },
}

mod defaults {
    pub fn max_iter() -> usize {
        200
    }
    pub fn l2() -> f64 {
        1e-6
    }
    pub fn tol() -> f64 {
        1e-8
    }
    pub fn ridge() -> f64 {
        1e-8
    }
    pub fn max_depth() -> usize {
        8
    }
    pub fn min_leaf() -> usize {
        5
    }
}

impl ClassifierSpec {
    pub fn knn(k: usize) -> Self {
        ClassifierSpec::Knn { k }
    }

    pub fn logistic() -> Self {
        ClassifierSpec::Logistic { max_iter: defaults::max_iter(), l2: defaults::l2(), tol: defaults::tol() }
    }

    pub fn lda() -> Self {
        ClassifierSpec::Lda { ridge: defaults::ridge() }
    }

    pub fn tree() -> Self {
        ClassifierSpec::Tree { max_depth: defaults::max_depth(), min_leaf: defaults::min_leaf(), max_features: None }
    }

    /// Tree with `floor(sqrt(p))` candidate features per node.
    pub fn forest_tree(n_features: usize) -> Self {
        let m = ((n_features as f64).sqrt().floor() as usize).max(1);
        ClassifierSpec::Tree { max_depth: defaults::max_depth(), min_leaf: defaults::min_leaf(), max_features: Some(m) }
    }

    /// Short name used in result tables.
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::Logistic { .. } => "logistic",
            ClassifierSpec::Lda { .. } => "lda",
            ClassifierSpec::Tree { max_features: None, .. } => "tree",
            ClassifierSpec::Tree { .. } => "forest_tree",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassifierSpec::Knn { k: 0 } => Err(Error::Config("knn k must be at least 1".into())),
            ClassifierSpec::Logistic { max_iter, l2, tol } => {
                if max_iter == 0 || !(l2 >= 0.0) || !(tol > 0.0) {
                    Err(Error::Config(format!(
                        "logistic needs max_iter >= 1, l2 >= 0, tol > 0 (got {max_iter}, {l2}, {tol})"
                    )))
                } else {
                    Ok(())
                }
            }
            ClassifierSpec::Lda { ridge } if !(ridge >= 0.0) => {
                Err(Error::Config(format!("lda ridge must be non-negative, got {ridge}")))
            }
            ClassifierSpec::Tree { max_depth, min_leaf, max_features } => {
                if min_leaf == 0 || max_features == Some(0) {
                    Err(Error::Config("tree needs min_leaf >= 1 and max_features >= 1".into()))
                } else {
                    let _ = max_depth;
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedClassifier {
    Knn(KnnModel),
    Logistic(LogisticModel),
    Lda(LdaModel),
    Tree(TreeModel),
}

impl FittedClassifier {
    pub fn n_features(&self) -> usize {
        match self {
            FittedClassifier::Knn(m) => m.n_features(),
            FittedClassifier::Logistic(m) => m.n_features(),
            FittedClassifier::Lda(m) => m.n_features(),
            FittedClassifier::Tree(m) => m.n_features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            FittedClassifier::Knn(m) => m.n_classes(),
            FittedClassifier::Logistic(m) => m.n_classes(),
            FittedClassifier::Lda(m) => m.n_classes(),
            FittedClassifier::Tree(m) => m.n_classes(),
        }
    }

    /// Predicted label for `x`. The stream only matters for kNN vote ties.
    pub fn predict(&self, x: &[f64], rng: &RngStream) -> Result<usize> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(match self {
            FittedClassifier::Knn(m) => m.predict(x, rng),
            FittedClassifier::Logistic(m) => m.predict(x),
            FittedClassifier::Lda(m) => m.predict(x),
            FittedClassifier::Tree(m) => m.predict(x),
        })
    }

    /// Predict every row of `data`; row `j` uses stream `rng / j`.
    pub fn predict_all(&self, data: &Dataset, rng: &RngStream) -> Result<Vec<usize>> {
        if data.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: data.n_features() });
        }
        Ok(data
            .rows()
            .enumerate()
            .map(|(j, x)| match self {
                FittedClassifier::Knn(m) => m.predict(x, &rng.child(j as u64)),
                FittedClassifier::Logistic(m) => m.predict(x),
                FittedClassifier::Lda(m) => m.predict(x),
                FittedClassifier::Tree(m) => m.predict(x),
            })
            .collect())
    }
}

/// Fit `spec` on labeled `train` with Euclidean distance for kNN.
pub fn fit(spec: &ClassifierSpec, train: &Dataset, rng: &RngStream) -> Result<FittedClassifier> {
    fit_with_metric(spec, train, &Metric::euclidean(), rng)
}

/// Fit with an explicit metric (used by kNN only).
pub fn fit_with_metric(
    spec: &ClassifierSpec,
    train: &Dataset,
    metric: &Metric,
    rng: &RngStream,
) -> Result<FittedClassifier> {
    spec.validate()?;
    train.require_labels()?;
    if train.is_empty() {
        return Err(Error::Usage("cannot fit a classifier on zero rows".into()));
    }
    Ok(match *spec {
        ClassifierSpec::Knn { k } => FittedClassifier::Knn(KnnModel::fit(train, k, metric.clone())),
        ClassifierSpec::Logistic { max_iter, l2, tol } => {
            FittedClassifier::Logistic(LogisticModel::fit(train, max_iter, l2, tol)?)
        }
        ClassifierSpec::Lda { ridge } => FittedClassifier::Lda(LdaModel::fit(train, ridge)?),
        ClassifierSpec::Tree { max_depth, min_leaf, max_features } => {
            FittedClassifier::Tree(TreeModel::fit(train, max_depth, min_leaf, max_features, rng))
        }
    })
}

/// Free-function form of [`FittedClassifier::predict`].
pub fn predict(model: &FittedClassifier, x: &[f64], rng: &RngStream) -> Result<usize> {
    model.predict(x, rng)
}

/// Index (1-based label) of the largest score; ties go to the smallest label.
/// Scores of `-inf` mark classes that must never win.
pub(crate) fn argmax_label(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm_one() -> Dataset {
        Dataset::labeled(vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0], 1, vec![1, 1, 1, 2, 2, 2], 2).unwrap()
    }

    #[test]
    fn every_kind_separates_two_points() {
        let specs = [
            ClassifierSpec::knn(1),
            ClassifierSpec::logistic(),
            ClassifierSpec::lda(),
            ClassifierSpec::Tree { max_depth: 8, min_leaf: 1, max_features: None },
        ];
        let s = RngStream::new(0);
        for spec in &specs {
            let m = fit(spec, &pm_one(), &s).unwrap();
            assert_eq!(m.predict(&[0.9], &s).unwrap(), 2, "{spec:?}");
            assert_eq!(m.predict(&[-0.9], &s).unwrap(), 1, "{spec:?}");
            assert!(m.predict(&[0.0, 1.0], &s).is_err());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ClassifierSpec::knn(0).validate().is_err());
        assert!(ClassifierSpec::Lda { ridge: -1.0 }.validate().is_err());
        assert!(ClassifierSpec::Logistic { max_iter: 10, l2: -1.0, tol: 1e-8 }.validate().is_err());
        assert!(ClassifierSpec::Tree { max_depth: 3, min_leaf: 0, max_features: None }.validate().is_err());
        assert!(fit(&ClassifierSpec::knn(1), &pm_one().without_labels(), &RngStream::new(0)).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: ClassifierSpec = serde_json::from_str(r#"{"kind":"tree","max_depth":4}"#).unwrap();
        assert_eq!(s, ClassifierSpec::Tree { max_depth: 4, min_leaf: 5, max_features: None });
        let s: ClassifierSpec = serde_json::from_str(r#"{"kind":"knn","k":7}"#).unwrap();
        assert_eq!(s, ClassifierSpec::knn(7));
        assert_eq!(ClassifierSpec::forest_tree(10).name(), "forest_tree");
    }

    #[test]
    fn argmax_prefers_smallest_on_ties() {
        assert_eq!(argmax_label(&[1.0, 3.0, 3.0]), 2);
        assert_eq!(argmax_label(&[f64::NEG_INFINITY, -5.0]), 2);
        assert_eq!(argmax_label(&[0.5, 0.5]), 1);
    }
}
