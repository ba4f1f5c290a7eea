//! Metrics and experiment orchestration.
//!
//! Within one (scenario, repetition) cell every method sees the same data, so
//! method comparisons are paired. The data of repetition `r` come from stream
//! `RngStream::new(spec.seed) / r`; method `i` of that cell runs on
//! `... / r / Experiment / i`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{calibrate, filter_anomalies, AnomalyCalibration, AnomalyConfig, AnomalyPartition};
use crate::classifiers::{bayes_risk, fit_with_metric, mean_and_se, ClassifierSpec, RiskEstimate};
use crate::data::Dataset;
use crate::ensemble::{fit_ensemble, BaggingMode, DaBaggingConfig};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::resample::ResampleConfig;
use crate::rng::{Purpose, RngStream};
use crate::simgen::{generate, GroundTruth, ScenarioSpec};

/// Misclassification fraction.
pub fn test_error(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: predictions.len() });
    }
    if truth.is_empty() {
        return Err(Error::Usage("test error of zero predictions".into()));
    }
    let wrong = predictions.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// `1 - test_error`.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(1.0 - test_error(predictions, truth)?)
}

/// False-flag rate among true inliers and detection rate among true
/// anomalies; a rate is absent when its denominator is zero.
pub fn type_i_and_power(flags: &[bool], truth: &[bool]) -> Result<(Option<f64>, Option<f64>)> {
    if flags.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: flags.len() });
    }
    let rate = |want: bool| {
        let (hit, total) = flags
            .iter()
            .zip(truth)
            .filter(|pair| *pair.1 == want)
            .fold((0usize, 0usize), |(h, n), (&f, _)| (h + f as usize, n + 1));
        (total > 0).then(|| hit as f64 / total as f64)
    };
    Ok((rate(false), rate(true)))
}

/// `round(n^{4/(p+4)})`, at least 1: the kNN neighbor schedule that matches
/// the optimal rate for smooth densities.
pub fn knn_k_schedule(n: usize, p: usize) -> usize {
    ((n as f64).powf(4.0 / (p as f64 + 4.0)).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DaBagging,
    Bagging,
    /// The base classifier fit once on the training data.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub base: ClassifierSpec,
    /// Ensemble size; ignored by `single`.
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub resample: ResampleConfig,
    #[serde(default)]
    pub standardize: bool,
}

fn default_b() -> usize {
    50
}

impl MethodConfig {
    pub fn new(method: Method, base: ClassifierSpec, b: usize) -> Self {
        Self { method, base, b, resample: ResampleConfig::default(), standardize: false }
    }

    /// e.g. `da_bagging+knn`.
    pub fn tag(&self) -> String {
        let m = match self.method {
            Method::DaBagging => "da_bagging",
            Method::Bagging => "bagging",
            Method::Single => "single",
        };
        format!("{m}+{}", self.base.name())
    }

    pub fn ensemble_config(&self) -> Option<DaBaggingConfig> {
        let mode = match self.method {
            Method::DaBagging => BaggingMode::DomainAdaptive,
            Method::Bagging => BaggingMode::ClassicalBootstrap,
            Method::Single => return None,
        };
        Some(DaBaggingConfig {
            replicates: self.b,
            resample: self.resample.clone(),
            base: self.base.clone(),
            mode,
            standardize: self.standardize,
        })
    }

    /// Fit on `train` (adapting to `test` where applicable) and predict `test`.
    pub fn fit_predict(&self, train: &Dataset, test: &Dataset, rng: &RngStream) -> Result<Vec<usize>> {
        match self.ensemble_config() {
            Some(cfg) => fit_ensemble(train, test, &cfg, rng)?.predict_all(test, &rng.tagged(Purpose::Predict)),
            None => {
                let metric = if self.standardize { Metric::standardized(train) } else { Metric::euclidean() };
                fit_with_metric(&self.base, train, &metric, &rng.tagged(Purpose::Fit))?
                    .predict_all(test, &rng.tagged(Purpose::Predict))
            }
        }
    }
}

/// Full factorial over scenarios × methods × repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioSpec>,
    pub methods: Vec<MethodConfig>,
    pub reps: usize,
    /// Run anomaly detection before fitting; flagged rows are dropped.
    #[serde(default)]
    pub anomaly: Option<AnomalyConfig>,
}

/// One (scenario, repetition, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_index: usize,
    pub scenario: String,
    pub q1: f64,
    pub epsilon_out: f64,
    pub rep: usize,
    pub seed: u64,
    pub method_index: usize,
    pub method: String,
    /// Accuracy over the retained true-inlier test rows.
    pub accuracy: Option<f64>,
    pub error: Option<f64>,
    pub type_i: Option<f64>,
    pub power: Option<f64>,
    /// Wall-clock seconds for the cell; not deterministic.
    pub runtime_secs: f64,
    pub failure: Option<String>,
}

/// Mean and standard deviation over the repetitions of one
/// (scenario, method) pair; failed cells are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario_index: usize,
    pub scenario: String,
    pub q1: f64,
    pub method_index: usize,
    pub method: String,
    pub n: usize,
    pub failures: usize,
    pub mean_accuracy: Option<f64>,
    pub sd_accuracy: Option<f64>,
    pub mean_type_i: Option<f64>,
    pub mean_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

/// Aggregates in first-appearance order of (scenario, method).
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in records {
        let k = (r.scenario_index, r.method_index);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(si, mi)| {
            let group: Vec<&RunRecord> =
                records.iter().filter(|r| r.scenario_index == si && r.method_index == mi).collect();
            let acc: Vec<f64> = group.iter().filter_map(|r| r.accuracy).collect();
            let t1: Vec<f64> = group.iter().filter_map(|r| r.type_i).collect();
            let pw: Vec<f64> = group.iter().filter_map(|r| r.power).collect();
            let (mean_accuracy, sd_accuracy) = mean_sd(&acc);
            Aggregate {
                scenario_index: si,
                scenario: group[0].scenario.clone(),
                q1: group[0].q1,
                method_index: mi,
                method: group[0].method.clone(),
                n: group.len(),
                failures: group.iter().filter(|r| r.failure.is_some()).count(),
                mean_accuracy,
                sd_accuracy,
                mean_type_i: mean_sd(&t1).0,
                mean_power: mean_sd(&pw).0,
            }
        })
        .collect()
}

/// Detection outcome for one generated instance.
struct Screened {
    kept: Vec<usize>,
    type_i: Option<f64>,
    power: Option<f64>,
}

fn screen(truth: &GroundTruth, anomaly: Option<&AnomalyConfig>, rng: &RngStream) -> Result<Screened> {
    let all: Vec<usize> = (0..truth.test.n_rows()).collect();
    let Some(cfg) = anomaly else {
        return Ok(Screened { kept: all, type_i: None, power: None });
    };
    let metric = Metric::euclidean();
    let cal = calibrate(&truth.train, cfg, &metric, &rng.tagged(Purpose::Split))?;
    let part = filter_anomalies(&truth.test, &truth.train, &cal, &metric)?;
    let (type_i, power) = type_i_and_power(&part.flags(), &truth.anomaly_flags())?;
    Ok(Screened { kept: part.inliers, type_i, power })
}

fn run_cell(
    truth: &GroundTruth,
    screened: &Screened,
    method: &MethodConfig,
    rng: &RngStream,
) -> Result<(Option<f64>, Option<f64>)> {
    let test = truth.test.select(&screened.kept);
    if test.is_empty() {
        return Ok((None, None));
    }
    let pred = method.fit_predict(&truth.train, &test, rng)?;
    let (p, t): (Vec<usize>, Vec<usize>) =
        screened.kept.iter().zip(&pred).filter_map(|(&i, &p)| truth.test_labels[i].map(|t| (p, t))).unzip();
    if t.is_empty() {
        return Ok((None, None));
    }
    let err = test_error(&p, &t)?;
    Ok((Some(1.0 - err), Some(err)))
}

/// Output of [`predict_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// One entry per test row; `None` marks a row flagged as an anomaly.
    pub predictions: Vec<Option<usize>>,
    pub calibration: Option<AnomalyCalibration>,
    pub partition: Option<AnomalyPartition>,
}

/// Screen `test` for anomalies (when `anomaly` is set), then fit `method` on
/// `train`, adapting to the retained rows, and predict them.
///
/// Calibration uses stream `rng / Split` and the Euclidean metric; the method
/// runs on `rng / Experiment`.
pub fn predict_pipeline(
    train: &Dataset,
    test: &Dataset,
    method: &MethodConfig,
    anomaly: Option<&AnomalyConfig>,
    rng: &RngStream,
) -> Result<PipelineOutput> {
    train.require_labels()?;
    train.check_dimension(test)?;
    let (kept, calibration, partition) = match anomaly {
        Some(cfg) => {
            let metric = Metric::euclidean();
            let cal = calibrate(train, cfg, &metric, &rng.tagged(Purpose::Split))?;
            let part = filter_anomalies(test, train, &cal, &metric)?;
            (part.inliers.clone(), Some(cal), Some(part))
        }
        None => ((0..test.n_rows()).collect(), None, None),
    };
    let mut predictions = vec![None; test.n_rows()];
    if !kept.is_empty() {
        let pred = method.fit_predict(train, &test.select(&kept), &rng.tagged(Purpose::Experiment))?;
        for (&i, p) in kept.iter().zip(pred) {
            predictions[i] = Some(p);
        }
    }
    Ok(PipelineOutput { predictions, calibration, partition })
}

/// Run the plan. Cells run in parallel; the output order and contents do not
/// depend on the thread count (runtimes aside).
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    if plan.scenarios.is_empty() || plan.methods.is_empty() {
        return Err(Error::Config("experiment needs at least one scenario and one method".into()));
    }
    if plan.reps == 0 {
        return Err(Error::Config("experiment needs at least one repetition".into()));
    }
    for s in &plan.scenarios {
        s.validate()?;
    }
    for m in &plan.methods {
        m.base.validate()?;
        if let Some(cfg) = m.ensemble_config() {
            cfg.validate()?;
        }
    }
    if let Some(a) = &plan.anomaly {
        a.validate()?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..plan.scenarios.len()).flat_map(|s| (0..plan.reps).map(move |r| (s, r))).collect();
    let records: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(si, rep)| {
            let spec = &plan.scenarios[si];
            let stream = RngStream::new(spec.seed).child(rep as u64);
            let record = |method_index: usize, secs: f64| RunRecord {
                scenario_index: si,
                scenario: spec.scenario.name().to_string(),
                q1: spec.q1_inlier(),
                epsilon_out: spec.epsilon_out,
                rep,
                seed: spec.seed,
                method_index,
                method: plan.methods[method_index].tag(),
                accuracy: None,
                error: None,
                type_i: None,
                power: None,
                runtime_secs: secs,
                failure: None,
            };
            let started = Instant::now();
            let prepared =
                generate(spec, &stream).and_then(|truth| Ok((screen(&truth, plan.anomaly.as_ref(), &stream)?, truth)));
            let (screened, truth) = match prepared {
                Ok(v) => v,
                Err(e) => {
                    let secs = started.elapsed().as_secs_f64();
                    return plan
                        .methods
                        .iter()
                        .enumerate()
                        .map(|(mi, _)| RunRecord { failure: Some(e.to_string()), ..record(mi, secs) })
                        .collect();
                }
            };
            plan.methods
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    let t0 = Instant::now();
                    let out = run_cell(&truth, &screened, m, &stream.tagged(Purpose::Experiment).child(mi as u64));
                    let mut rec = record(mi, t0.elapsed().as_secs_f64());
                    rec.type_i = screened.type_i;
                    rec.power = screened.power;
                    match out {
                        Ok((acc, err)) => {
                            rec.accuracy = acc;
                            rec.error = err;
                        }
                        Err(e) => {
                            log::warn!("{} rep {rep} {}: {e}", spec.scenario.name(), m.tag());
                            rec.failure = Some(e.to_string());
                        }
                    }
                    rec
                })
                .collect()
        })
        .collect();
    let records: Vec<RunRecord> = records.into_iter().flatten().collect();
    let aggregates = aggregate(&records);
    Ok(ExperimentResult { records, aggregates })
}

/// Both sides of the excess-risk bound
/// `E R(C_DA) - R_Bayes <= 2 (E R(C_b) - R_Bayes)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessRiskReport {
    pub bayes: RiskEstimate,
    /// Test risk of the DA ensemble, averaged over repetitions.
    pub ensemble: RiskEstimate,
    /// Test risk of a single resampled member, averaged over members and
    /// repetitions.
    pub member: RiskEstimate,
    /// `E R(C_DA) - R_Bayes`.
    pub lhs: f64,
    /// `2 (E R(C_b) - R_Bayes)`.
    pub rhs: f64,
    /// Standard error of `lhs - rhs`.
    pub std_error: f64,
}

impl ExcessRiskReport {
    /// The bound holds up to `z` standard errors.
    pub fn holds_within(&self, z: f64) -> bool {
        self.lhs - self.rhs <= z * self.std_error
    }
}

/// Monte Carlo check of the excess-risk bound. Repetition `r` (1-based)
/// draws data from `rng / r` and scores on `n_eval` fresh draws from the test
/// distribution; the Bayes risk uses `n_mc` draws.
pub fn excess_risk_check(
    spec: &ScenarioSpec,
    base: &ClassifierSpec,
    b: usize,
    reps: usize,
    n_eval: usize,
    n_mc: usize,
    rng: &RngStream,
) -> Result<ExcessRiskReport> {
    spec.validate()?;
    if spec.scenario.n_classes() != 2 {
        return Err(Error::Config("the excess-risk check needs a two-class scenario".into()));
    }
    if reps < 2 || n_eval == 0 {
        return Err(Error::Config("the excess-risk check needs reps >= 2 and n_eval >= 1".into()));
    }
    let inlier_only = ScenarioSpec { epsilon_out: 0.0, q: normalized(&spec.q), ..spec.clone() };
    let cfg = DaBaggingConfig::new(b, base.clone(), BaggingMode::DomainAdaptive);
    let pairs: Vec<(f64, f64)> = (1..=reps as u64)
        .map(|r| {
            let s = rng.child(r);
            let truth = generate(&inlier_only, &s)?;
            let mut er = s.tagged(Purpose::Evaluation).rng();
            let draws: Vec<(usize, Vec<f64>)> = (0..n_eval).map(|_| truth.test_oracle.sample(&mut er)).collect();
            let labels: Vec<usize> = draws.iter().map(|d| d.0).collect();
            let eval = Dataset::from_rows(&draws.into_iter().map(|d| d.1).collect::<Vec<_>>(), None, 2)?;
            let model = fit_ensemble(&truth.train, &truth.test, &cfg, &s)?;
            let table = model.vote_table(&eval, &s.tagged(Purpose::Predict))?;
            let ens = test_error(&table.predict(), &labels)?;
            let mut member = 0.0;
            for m in 1..=table.n_members() {
                member += test_error(&table.member_column(m), &labels)?;
            }
            Ok((ens, member / table.n_members() as f64))
        })
        .collect::<Result<_>>()?;
    // the Bayes risk does not depend on the rotation, so any repetition's
    // oracle will do
    let test_oracle = generate(&inlier_only, &rng.child(1))?.test_oracle;
    let bayes = bayes_risk(&test_oracle, n_mc, &rng.tagged(Purpose::Evaluation))?;
    let ens: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mem: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - 2.0 * p.1).collect();
    let d = mean_and_se(&diff);
    let ensemble = mean_and_se(&ens);
    let member = mean_and_se(&mem);
    Ok(ExcessRiskReport {
        bayes,
        ensemble,
        member,
        lhs: ensemble.value - bayes.value,
        rhs: 2.0 * (member.value - bayes.value),
        std_error: (d.std_error.powi(2) + bayes.std_error.powi(2)).sqrt(),
    })
}

fn normalized(q: &[f64]) -> Vec<f64> {
    let s: f64 = q.iter().sum();
    q.iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Scenario;

    #[test]
    fn error_examples() {
        assert_eq!(test_error(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(test_error(&[2, 1], &[1, 2]).unwrap(), 1.0);
        assert_eq!(test_error(&[1, 2, 2], &[1, 2, 1]).unwrap(), 1.0 / 3.0);
        assert!(test_error(&[1], &[1, 2]).is_err());
        assert!(test_error(&[], &[]).is_err());
    }

    #[test]
    fn detector_rates() {
        let truth = [false, false, true, true];
        assert_eq!(type_i_and_power(&truth, &truth).unwrap(), (Some(0.0), Some(1.0)));
        assert_eq!(type_i_and_power(&[true; 4], &truth).unwrap(), (Some(1.0), Some(1.0)));
        assert_eq!(type_i_and_power(&[false; 2], &[false; 2]).unwrap(), (Some(0.0), None));
    }

    #[test]
    fn k_schedule() {
        assert_eq!(knn_k_schedule(500, 10), 6);
        assert_eq!(knn_k_schedule(1, 10), 1);
    }

    fn small_plan() -> ExperimentPlan {
        ExperimentPlan {
            scenarios: vec![ScenarioSpec::two_class(Scenario::Setting1, 60, 40, 0.2, 0.0, 5)],
            methods: vec![
                MethodConfig::new(Method::Single, ClassifierSpec::knn(3), 1),
                MethodConfig::new(Method::DaBagging, ClassifierSpec::knn(3), 3),
            ],
            reps: 2,
            anomaly: None,
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let strip = |r: ExperimentResult| {
            r.records.into_iter().map(|x| RunRecord { runtime_secs: 0.0, ..x }).collect::<Vec<_>>()
        };
        let a = strip(run_experiment(&small_plan()).unwrap());
        let b = strip(run_experiment(&small_plan()).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|r| r.failure.is_none()));
    }

    #[test]
    fn failures_are_recorded() {
        let mut plan = small_plan();
        plan.scenarios[0].n_train = 4;
        plan.anomaly = Some(AnomalyConfig { k: 5, ..Default::default() });
        let r = run_experiment(&plan).unwrap();
        assert!(r.records.iter().all(|x| x.failure.is_some()));
        assert_eq!(r.aggregates[0].failures, 2);
    }
}
