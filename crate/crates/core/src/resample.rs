//! Iterative nearest-neighbor (INN) stratified bootstrap.
//!
//! One step: for every test point `j`, take the class frequencies `π_j` of its
//! k nearest rows in the current sample, draw per-class counts from
//! Multinomial(`draws`, `π_j`), and draw that many rows uniformly with
//! replacement from each class of the current sample. The step's output is the
//! concatenation over test points. Iterating drives the class proportions of
//! the sample toward those of the test data.
//!
//! Internally a sample is a list of row indices into the original training
//! set; rows are only materialized at the end. Test-to-train distances are
//! computed once per replicate batch and shared by every iteration.
//!
//! Random stream layout for one replicate with stream `s`:
//! `s / t / j / {TieBreak, Multinomial, WithinClass / ℓ}` for iteration `t`
//! (1-based) and test point `j` (0-based).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{proportions_from_counts, Dataset};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::neighbors::select_nearest;
use crate::rng::{multinomial, Purpose, RngStream};

/// Cache the full test × train distance matrix up to this many entries.
const DISTANCE_CACHE_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    /// Neighbors per test point.
    pub k: usize,
    /// Rows drawn per test point; `None` uses `ceil(n / m)`.
    pub per_test_draws: Option<usize>,
    /// Stop once no class proportion moves by this much between iterations.
    pub eps_stop: f64,
    /// Iteration cap.
    pub t_max: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { k: 1, per_test_draws: None, eps_stop: 0.01, t_max: 50 }
    }
}

impl ResampleConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("resampler k must be at least 1".into()));
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::Config(format!("eps_stop must be positive, got {}", self.eps_stop)));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if self.per_test_draws == Some(0) {
            return Err(Error::Config("per_test_draws must be at least 1".into()));
        }
        Ok(())
    }

    /// Draws per test point for a sample of `n` rows and `m` test points.
    pub fn draws(&self, n: usize, m: usize) -> usize {
        self.per_test_draws.unwrap_or_else(|| n.div_ceil(m).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    MaxIterations,
}

/// Class-proportion history of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleTrace {
    /// Proportions of the training data the replicate started from.
    pub initial_proportions: Vec<f64>,
    /// Proportions after each iteration `1..=iterations_run`.
    pub proportions: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub stopped_by: StopReason,
}

impl ResampleTrace {
    pub fn final_proportions(&self) -> &[f64] {
        self.proportions.last().unwrap_or(&self.initial_proportions)
    }

    /// True when the final sample holds a single class.
    pub fn collapsed(&self) -> bool {
        self.final_proportions().iter().filter(|&&p| p > 0.0).count() <= 1
    }
}

/// Shared state for resampling one (source, test) pair.
pub(crate) struct Sampler<'a> {
    source: &'a Dataset,
    labels: &'a [usize],
    test: &'a Dataset,
    metric: &'a Metric,
    /// Row-major `m × n_source` distances when small enough.
    cache: Option<Vec<f64>>,
    k: usize,
    draws: usize,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(
        source: &'a Dataset,
        test: &'a Dataset,
        metric: &'a Metric,
        cfg: &ResampleConfig,
        use_cache: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let labels = source.require_labels()?;
        source.check_dimension(test)?;
        if source.is_empty() {
            return Err(Error::Usage("cannot resample an empty training set".into()));
        }
        if test.is_empty() {
            return Err(Error::Usage("domain adaptive resampling needs test points".into()));
        }
        let (n, m) = (source.n_rows(), test.n_rows());
        let cache = (use_cache && n.saturating_mul(m) <= DISTANCE_CACHE_LIMIT).then(|| {
            (0..m)
                .into_par_iter()
                .flat_map_iter(|j| {
                    let q = test.row(j);
                    source.rows().map(move |r| metric.dist(q, r))
                })
                .collect()
        });
        Ok(Self { source, labels, test, metric, cache, k: cfg.k, draws: cfg.draws(n, m) })
    }

    #[inline]
    fn distance(&self, j: usize, i: usize) -> f64 {
        match &self.cache {
            Some(c) => c[j * self.source.n_rows() + i],
            None => self.metric.dist(self.test.row(j), self.source.row(i)),
        }
    }

    fn proportions(&self, sample: &[usize]) -> Vec<f64> {
        let mut counts = vec![0usize; self.source.n_classes()];
        for &i in sample {
            counts[self.labels[i] - 1] += 1;
        }
        proportions_from_counts(&counts)
    }

    /// One INN step over `current` (indices into the source rows).
    pub(crate) fn step(&self, current: &[usize], rng: &RngStream) -> Result<Vec<usize>> {
        let n_classes = self.source.n_classes();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (pos, &i) in current.iter().enumerate() {
            by_class[self.labels[i] - 1].push(pos);
        }
        let parts: Vec<Result<Vec<usize>>> = (0..self.test.n_rows())
            .into_par_iter()
            .map(|j| {
                let point = rng.child(j as u64);
                let dists: Vec<f64> = current.iter().map(|&i| self.distance(j, i)).collect();
                let nearest = select_nearest(&dists, self.k, &point.tagged(Purpose::TieBreak));
                let mut counts = vec![0usize; n_classes];
                for &pos in &nearest {
                    counts[self.labels[current[pos]] - 1] += 1;
                }
                let k_eff = nearest.len() as f64;
                let pi: Vec<f64> = counts.iter().map(|&c| c as f64 / k_eff).collect();
                let draws = multinomial(&mut point.tagged(Purpose::Multinomial).rng(), self.draws as u64, &pi);
                let mut out = Vec::with_capacity(self.draws);
                for (c, &n_c) in draws.iter().enumerate() {
                    if n_c == 0 {
                        continue;
                    }
                    let members = &by_class[c];
                    if members.is_empty() {
                        return Err(Error::Invariant(format!(
                            "class {} drawn for test point {j} but absent from the sample",
                            c + 1
                        )));
                    }
                    let mut r = point.tagged(Purpose::WithinClass).child(c as u64 + 1).rng();
                    for _ in 0..n_c {
                        out.push(current[members[r.random_range(0..members.len())]]);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut next = Vec::with_capacity(self.test.n_rows() * self.draws);
        for part in parts {
            next.extend(part?);
        }
        Ok(next)
    }

    /// Iterate from `initial` until the proportions settle or `t_max`.
    pub(crate) fn run(
        &self,
        initial: &[usize],
        cfg: &ResampleConfig,
        rng: &RngStream,
    ) -> Result<(Vec<usize>, ResampleTrace)> {
        let initial_proportions = self.proportions(initial);
        let mut previous = initial_proportions.clone();
        let mut current = initial.to_vec();
        let mut proportions = Vec::new();
        let mut stopped_by = StopReason::MaxIterations;
        for t in 1..=cfg.t_max {
            current = self.step(&current, &rng.child(t as u64))?;
            let p = self.proportions(&current);
            let change = p.iter().zip(&previous).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            proportions.push(p.clone());
            if change < cfg.eps_stop {
                stopped_by = StopReason::Threshold;
                break;
            }
            previous = p;
        }
        let iterations_run = proportions.len();
        Ok((current, ResampleTrace { initial_proportions, proportions, iterations_run, stopped_by }))
    }

    pub(crate) fn all_rows(&self) -> Vec<usize> {
        (0..self.source.n_rows()).collect()
    }
}

/// One INN step from `current` toward `test`.
///
/// Every output row is a copy of a row of `current` with its label; the output
/// has `m * draws` rows.
pub fn inn_step(
    current: &Dataset,
    test: &Dataset,
    cfg: &ResampleConfig,
    metric: &Metric,
    rng: &RngStream,
) -> Result<Dataset> {
    let sampler = Sampler::new(current, test, metric, cfg, false)?;
    let idx = sampler.step(&sampler.all_rows(), rng)?;
    Ok(current.select(&idx))
}

/// Full INN resampling of `train` toward `test` (one replicate).
///
/// Iteration `t` uses stream `rng / t`. Hitting `t_max` is not an error; it
/// is recorded in the trace.
pub fn inn_resample(
    train: &Dataset,
    test: &Dataset,
    cfg: &ResampleConfig,
    metric: &Metric,
    rng: &RngStream,
) -> Result<(Dataset, ResampleTrace)> {
    let sampler = Sampler::new(train, test, metric, cfg, true)?;
    let (idx, trace) = sampler.run(&sampler.all_rows(), cfg, rng)?;
    Ok((train.select(&idx), trace))
}

pub(crate) fn resample_batch_indices(
    train: &Dataset,
    test: &Dataset,
    cfg: &ResampleConfig,
    metric: &Metric,
    replicates: usize,
    rng: &RngStream,
) -> Result<Vec<(Vec<usize>, ResampleTrace)>> {
    if replicates == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let sampler = Sampler::new(train, test, metric, cfg, true)?;
    let initial = sampler.all_rows();
    (1..=replicates as u64).into_par_iter().map(|b| sampler.run(&initial, cfg, &rng.child(b))).collect()
}

/// `replicates` independent INN replicates; replicate `b` (1-based) uses
/// stream `rng / b`, so the batch is identical under any thread count.
pub fn resample_batch(
    train: &Dataset,
    test: &Dataset,
    cfg: &ResampleConfig,
    metric: &Metric,
    replicates: usize,
    rng: &RngStream,
) -> Result<Vec<(Dataset, ResampleTrace)>> {
    Ok(resample_batch_indices(train, test, cfg, metric, replicates, rng)?
        .into_iter()
        .map(|(idx, trace)| (train.select(&idx), trace))
        .collect())
}
