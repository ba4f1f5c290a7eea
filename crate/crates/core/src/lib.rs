//! Domain adaptive bagging for classification under label shift.
//!
//! Training rows are resampled with an iterative nearest-neighbor sampler so
//! that each bootstrap replicate follows the class proportions of the test
//! data; base classifiers fit on the replicates are combined by majority vote.
//! A distance-to-measure detector screens out test points unlike any training
//! class before resampling.
//!
//! Labels are 1-based throughout. Every random draw comes from an
//! [`RngStream`], so results are reproducible regardless of thread count.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod classifiers;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod metric;
pub mod neighbors;
pub mod resample;
pub mod rng;
pub mod simgen;

pub use anomaly::{
    calibrate, dtm_hat, filter_anomalies, test_statistic, AnomalyCalibration, AnomalyConfig, AnomalyPartition,
};
pub use classifiers::{
    bayes_classify, bayes_risk, fit, predict, ClassDensity, ClassifierSpec, FittedClassifier, GaussianComponent,
    GaussianMixtureOracle,
};
pub use data::{class_proportions, Dataset};
pub use ensemble::{
    fit_ensemble, predict_ensemble, variance_vs_b, vote_fraction, BaggingMode, DaBaggingConfig, EnsembleModel,
};
pub use error::{Error, Result};
pub use eval::{
    accuracy, excess_risk_check, predict_pipeline, run_experiment, test_error, type_i_and_power, ExperimentPlan,
    ExperimentResult, Method, MethodConfig, PipelineOutput,
};
pub use metric::{distance, Metric};
pub use neighbors::{class_weights, k_nearest, ClassWeights, NeighborSet};
pub use resample::{inn_resample, inn_step, resample_batch, ResampleConfig, ResampleTrace, StopReason};
pub use rng::{Purpose, RngStream};
pub use simgen::{gen_setting1, gen_setting2, gen_toy3, generate, haar_rotation, GroundTruth, Scenario, ScenarioSpec};
