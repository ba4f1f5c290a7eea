//! Scenario reproduction from a JSON config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dabag::eval::{Aggregate, RunRecord};
use dabag::{
    AnomalyConfig, ClassifierSpec, ExperimentPlan, ExperimentResult, Method, MethodConfig, ResampleConfig, Scenario,
    ScenarioSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, opt, write_atomic};

/// Experiment config file.
///
/// Two-class scenarios list the inlier proportion of class 1 under `q1`;
/// `toy3` lists full test proportion vectors under `q`. Grid point `i` runs
/// with seed `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub q1: Vec<f64>,
    #[serde(default)]
    pub q: Vec<Vec<f64>>,
    #[serde(default)]
    pub epsilon_out: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ensemble size for methods that do not set their own.
    #[serde(default = "default_b")]
    pub b: usize,
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub anomaly: Option<AnomalyConfig>,
    #[serde(default)]
    pub full_scale: Option<Scale>,
}

fn default_reps() -> usize {
    20
}

fn default_b() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub method: Method,
    pub base: ClassifierSpec,
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub resample: Option<ResampleConfig>,
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scale {
    pub b: usize,
    pub reps: usize,
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub b: Option<usize>,
    pub full_scale: bool,
    pub k: Option<usize>,
    pub eps_stop: Option<f64>,
    pub t_max: Option<usize>,
    pub alpha: Option<f64>,
}

pub fn load_config(path: &Path) -> CliResult<SimulateConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> CliResult<SimulateConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(e.to_string()))
}

impl SimulateConfig {
    pub fn plan(&self, o: &Overrides) -> CliResult<ExperimentPlan> {
        let seed = o.seed.unwrap_or(self.seed);
        let mut reps = self.reps;
        let mut b = None;
        if o.full_scale {
            let s = self.full_scale.ok_or_else(|| CliError::Usage("config has no full_scale section".into()))?;
            reps = s.reps;
            b = Some(s.b);
        }
        reps = o.reps.unwrap_or(reps);
        b = o.b.or(b);
        let scenarios: Vec<ScenarioSpec> = match (self.q1.is_empty(), self.q.is_empty()) {
            (false, true) => self
                .q1
                .iter()
                .enumerate()
                .map(|(i, &q1)| {
                    ScenarioSpec::two_class(
                        self.scenario,
                        self.n_train,
                        self.n_test,
                        q1,
                        self.epsilon_out,
                        seed + i as u64,
                    )
                })
                .collect(),
            (true, false) => self
                .q
                .iter()
                .enumerate()
                .map(|(i, q)| ScenarioSpec {
                    scenario: self.scenario,
                    n_train: self.n_train,
                    n_test: self.n_test,
                    q: q.clone(),
                    epsilon_out: self.epsilon_out,
                    seed: seed + i as u64,
                })
                .collect(),
            _ => return Err(CliError::Usage("config needs exactly one of q1 and q".into())),
        };
        let methods = self
            .methods
            .iter()
            .map(|m| {
                let mut resample = m.resample.clone().unwrap_or_default();
                if let Some(k) = o.k {
                    resample.k = k;
                }
                if let Some(e) = o.eps_stop {
                    resample.eps_stop = e;
                }
                if let Some(t) = o.t_max {
                    resample.t_max = t;
                }
                MethodConfig {
                    method: m.method,
                    base: m.base.clone(),
                    b: b.or(m.b).unwrap_or(self.b),
                    resample,
                    standardize: m.standardize,
                }
            })
            .collect();
        let anomaly = self.anomaly.clone().map(|mut a| {
            if let Some(alpha) = o.alpha {
                a.alpha = alpha;
            }
            a
        });
        Ok(ExperimentPlan { scenarios, methods, reps, anomaly })
    }
}

/// Paths of the two result files for a config named `stem`.
pub fn result_paths(out_dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (out_dir.join(format!("{stem}_records.csv")), out_dir.join(format!("{stem}_aggregates.json")))
}

/// Per-repetition records. Runtimes are left out so the file is a
/// deterministic function of config and seed.
pub fn records_csv(records: &[RunRecord]) -> CliResult<Vec<u8>> {
    let header: Vec<String> = [
        "scenario_index",
        "scenario",
        "q1",
        "epsilon_out",
        "rep",
        "seed",
        "method_index",
        "method",
        "accuracy",
        "error",
        "type_i",
        "power",
        "failure",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    csv_bytes(
        &header,
        records.iter().map(|r| {
            vec![
                r.scenario_index.to_string(),
                r.scenario.clone(),
                r.q1.to_string(),
                r.epsilon_out.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                r.method_index.to_string(),
                r.method.clone(),
                opt(r.accuracy),
                opt(r.error),
                opt(r.type_i),
                opt(r.power),
                r.failure.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn aggregates_json(aggregates: &[Aggregate]) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(aggregates)
        .map_err(|e| CliError::Internal(format!("json serialization failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

pub fn aggregate_table(aggregates: &[Aggregate]) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{:<9} {:>7} {:<22} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9}\n",
        "scenario", "q1", "method", "n", "fail", "accuracy", "sd", "type_i", "power"
    );
    for a in aggregates {
        let _ = writeln!(
            s,
            "{:<9} {:>7.4} {:<22} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9}",
            a.scenario,
            a.q1,
            a.method,
            a.n,
            a.failures,
            f(a.mean_accuracy),
            f(a.sd_accuracy),
            f(a.mean_type_i),
            f(a.mean_power)
        );
    }
    s
}

/// Write both result files atomically.
pub fn write_results(out_dir: &Path, stem: &str, result: &ExperimentResult) -> CliResult<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let (csv_path, json_path) = result_paths(out_dir, stem);
    write_atomic(&csv_path, &records_csv(&result.records)?)?;
    write_atomic(&json_path, &aggregates_json(&result.aggregates)?)?;
    Ok((csv_path, json_path))
}
