//! Bagged ensembles: domain adaptive (INN-resampled) or classical bootstrap,
//! aggregated by majority vote.
//!
//! Vote ties go to the smallest class index. Stream layout for a fit with
//! stream `s`: resampling uses `s / Resample` (replicate `b` then takes
//! `/ b`), classical bootstrap draws use `s / Bootstrap / b`, and member `b`
//! is fit with `s / Fit / b`, for `b` in `1..=B`. Prediction of row `j` by
//! member `b` uses `s' / j / b` for the prediction stream `s'`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit_with_metric, ClassifierSpec, FittedClassifier};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::resample::{resample_batch_indices, ResampleConfig, ResampleTrace};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaggingMode {
    /// Members fit on INN resamples of the training data toward the test set.
    DomainAdaptive,
    /// Members fit on n-out-of-n bootstraps of the training data.
    ClassicalBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaBaggingConfig {
    /// Number of members `B`.
    #[serde(alias = "b")]
    pub replicates: usize,
    #[serde(default)]
    pub resample: ResampleConfig,
    pub base: ClassifierSpec,
    #[serde(default = "default_mode")]
    pub mode: BaggingMode,
    /// Scale features to unit training variance for every distance
    /// computation (resampling and kNN). Off by default.
    #[serde(default)]
    pub standardize: bool,
}

fn default_mode() -> BaggingMode {
    BaggingMode::DomainAdaptive
}

impl DaBaggingConfig {
    pub fn new(replicates: usize, base: ClassifierSpec, mode: BaggingMode) -> Self {
        Self { replicates, resample: ResampleConfig::default(), base, mode, standardize: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("the ensemble needs B >= 1 members".into()));
        }
        self.base.validate()?;
        self.resample.validate()
    }

    pub fn metric(&self, train: &Dataset) -> Metric {
        if self.standardize {
            Metric::standardized(train)
        } else {
            Metric::euclidean()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<FittedClassifier>,
    traces: Vec<ResampleTrace>,
    config: DaBaggingConfig,
    n_features: usize,
    n_classes: usize,
}

/// Fit `B` members. `test_features` is only read in domain adaptive mode.
pub fn fit_ensemble(
    train: &Dataset,
    test_features: &Dataset,
    cfg: &DaBaggingConfig,
    rng: &RngStream,
) -> Result<EnsembleModel> {
    cfg.validate()?;
    train.require_labels()?;
    if train.is_empty() {
        return Err(Error::Usage("cannot fit an ensemble on zero rows".into()));
    }
    let metric = cfg.metric(train);
    let b_count = cfg.replicates;
    let (samples, traces): (Vec<Vec<usize>>, Vec<ResampleTrace>) = match cfg.mode {
        BaggingMode::DomainAdaptive => resample_batch_indices(
            train,
            test_features,
            &cfg.resample,
            &metric,
            b_count,
            &rng.tagged(Purpose::Resample),
        )?
        .into_iter()
        .unzip(),
        BaggingMode::ClassicalBootstrap => {
            let n = train.n_rows();
            let boot = rng.tagged(Purpose::Bootstrap);
            let samples = (1..=b_count as u64)
                .map(|b| {
                    let mut r = boot.child(b).rng();
                    (0..n).map(|_| r.random_range(0..n)).collect()
                })
                .collect();
            (samples, Vec::new())
        }
    };
    for (b, t) in traces.iter().enumerate() {
        if t.collapsed() {
            log::info!("replicate {} collapsed to a single class", b + 1);
        }
    }
    let fit_stream = rng.tagged(Purpose::Fit);
    let members = samples
        .par_iter()
        .enumerate()
        .map(|(b, idx)| fit_with_metric(&cfg.base, &train.select(idx), &metric, &fit_stream.child(b as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        members,
        traces,
        config: cfg.clone(),
        n_features: train.n_features(),
        n_classes: train.n_classes(),
    })
}

impl EnsembleModel {
    pub fn members(&self) -> &[FittedClassifier] {
        &self.members
    }

    /// One trace per member in domain adaptive mode, empty otherwise.
    pub fn traces(&self) -> &[ResampleTrace] {
        &self.traces
    }

    pub fn config(&self) -> &DaBaggingConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Member votes per class; member `b` (1-based) uses `rng / b`.
    pub fn vote_counts(&self, x: &[f64], rng: &RngStream) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.n_classes];
        for (b, m) in self.members.iter().enumerate() {
            counts[m.predict(x, &rng.child(b as u64 + 1))? - 1] += 1;
        }
        Ok(counts)
    }

    /// Fraction of members voting for each class.
    pub fn vote_fraction(&self, x: &[f64], rng: &RngStream) -> Result<Vec<f64>> {
        let b = self.members.len() as f64;
        Ok(self.vote_counts(x, rng)?.into_iter().map(|c| c as f64 / b).collect())
    }

    /// Majority vote, ties to the smallest class index.
    pub fn predict(&self, x: &[f64], rng: &RngStream) -> Result<usize> {
        Ok(majority(&self.vote_counts(x, rng)?))
    }

    /// Member predictions for every row of `data` (row `j` uses `rng / j`).
    pub fn vote_table(&self, data: &Dataset, rng: &RngStream) -> Result<VoteTable> {
        if data.n_features() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: data.n_features() });
        }
        let rows: Vec<Vec<usize>> = (0..data.n_rows())
            .into_par_iter()
            .map(|j| {
                let s = rng.child(j as u64);
                self.members
                    .iter()
                    .enumerate()
                    .map(|(b, m)| m.predict(data.row(j), &s.child(b as u64 + 1)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(VoteTable { predictions: rows, n_classes: self.n_classes })
    }

    /// Majority-vote labels for every row of `data`.
    pub fn predict_all(&self, data: &Dataset, rng: &RngStream) -> Result<Vec<usize>> {
        Ok(self.vote_table(data, rng)?.predict())
    }
}

/// Free-function forms.
pub fn vote_fraction(model: &EnsembleModel, x: &[f64], rng: &RngStream) -> Result<Vec<f64>> {
    model.vote_fraction(x, rng)
}

pub fn predict_ensemble(model: &EnsembleModel, x: &[f64], rng: &RngStream) -> Result<usize> {
    model.predict(x, rng)
}

/// Index (1-based) of the largest count, smallest index on ties.
pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best + 1
}

/// Cached member predictions for a fixed evaluation set: `predictions[j][b]`
/// is member `b + 1`'s label for row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    predictions: Vec<Vec<usize>>,
    n_classes: usize,
}

impl VoteTable {
    pub fn n_rows(&self) -> usize {
        self.predictions.len()
    }

    pub fn n_members(&self) -> usize {
        self.predictions.first().map_or(0, Vec::len)
    }

    pub fn member_predictions(&self, j: usize) -> &[usize] {
        &self.predictions[j]
    }

    /// Labels predicted by member `b` (1-based) for every row.
    pub fn member_column(&self, b: usize) -> Vec<usize> {
        self.predictions.iter().map(|r| r[b - 1]).collect()
    }

    /// Vote counts for row `j` using only the first `members` members.
    pub fn counts_prefix(&self, j: usize, members: usize) -> Vec<usize> {
        let mut c = vec![0usize; self.n_classes];
        for &l in &self.predictions[j][..members] {
            c[l - 1] += 1;
        }
        c
    }

    /// Majority vote of the first `members` members for every row.
    pub fn predict_prefix(&self, members: usize) -> Vec<usize> {
        (0..self.n_rows()).map(|j| majority(&self.counts_prefix(j, members))).collect()
    }

    pub fn predict(&self) -> Vec<usize> {
        self.predict_prefix(self.n_members())
    }
}

/// Test error statistics for one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub b: usize,
    pub mean_error: f64,
    /// Sample variance across repetitions; absent with a single repetition.
    pub variance: Option<f64>,
}

/// Mean and variance of the test error as a function of `B`, conditional on
/// the data. Each of the `n_rep` repetitions fits one ensemble of
/// `max(b_grid)` members with stream `rng / r` (1-based) and scores the
/// majority vote of its first `B` members for every `B` in the grid.
pub fn variance_vs_b(
    train: &Dataset,
    test_labeled: &Dataset,
    cfg: &DaBaggingConfig,
    b_grid: &[usize],
    n_rep: usize,
    rng: &RngStream,
) -> Result<Vec<VarianceRow>> {
    if b_grid.is_empty() || b_grid[0] == 0 || b_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("B grid must be non-empty, positive and strictly ascending".into()));
    }
    if n_rep == 0 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    let truth = test_labeled.require_labels()?;
    let test_features = test_labeled.without_labels();
    let mut big = cfg.clone();
    big.replicates = *b_grid.last().expect("non-empty grid");
    let errors: Vec<Vec<f64>> = (1..=n_rep as u64)
        .map(|r| {
            let s = rng.child(r);
            let model = fit_ensemble(train, &test_features, &big, &s)?;
            let table = model.vote_table(&test_features, &s.tagged(Purpose::Predict))?;
            Ok(b_grid.iter().map(|&b| error_rate(&table.predict_prefix(b), truth)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(b_grid
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let col: Vec<f64> = errors.iter().map(|e| e[i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let variance =
                (col.len() > 1).then(|| col.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64);
            VarianceRow { b, mean_error: mean, variance }
        })
        .collect())
}

fn error_rate(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64
}
