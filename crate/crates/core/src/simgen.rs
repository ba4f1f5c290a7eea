//! Synthetic label-shift scenarios with known class densities.
//!
//! Every generator draws from the same [`GaussianMixtureOracle`] it returns,
//! so the ground truth cannot drift from the sampler. Class counts are fixed
//! by largest-remainder apportionment of the requested proportions (ties to
//! the smaller index); rows are then shuffled.
//!
//! Stream layout for stream `s`: `s / Rotation` for the Haar rotation,
//! `s / Generate / 1` training rows, `/ 2` test rows, `/ 3` training shuffle,
//! `/ 4` test shuffle.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassDensity, GaussianComponent, GaussianMixtureOracle};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

const DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Three 2-d Gaussians stacked along the second axis.
    Toy3,
    /// Two classes in 10-d, each a symmetric pair of unit Gaussians.
    Setting1,
    /// Two 10-d Gaussians with block covariances under a random rotation.
    Setting2,
}

impl Scenario {
    pub fn n_classes(self) -> usize {
        match self {
            Scenario::Toy3 => 3,
            Scenario::Setting1 | Scenario::Setting2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Toy3 => "toy3",
            Scenario::Setting1 => "setting1",
            Scenario::Setting2 => "setting2",
        }
    }
}

/// One scenario instance. `q` holds the test proportions of the inlier
/// classes, so `sum(q) + epsilon_out = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    pub q: Vec<f64>,
    #[serde(default)]
    pub epsilon_out: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// Two-class setting with inlier proportions `(1 - ε)(q1, 1 - q1)`.
    pub fn two_class(scenario: Scenario, n: usize, m: usize, q1: f64, epsilon_out: f64, seed: u64) -> Self {
        let s = 1.0 - epsilon_out;
        Self { scenario, n_train: n, n_test: m, q: vec![s * q1, s * (1.0 - q1)], epsilon_out, seed }
    }

    pub fn toy3(n: usize, m: usize, q: [f64; 3], seed: u64) -> Self {
        Self { scenario: Scenario::Toy3, n_train: n, n_test: m, q: q.to_vec(), epsilon_out: 0.0, seed }
    }

    /// Test proportion of class 1 among inliers.
    pub fn q1_inlier(&self) -> f64 {
        self.q[0] / self.q.iter().sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.scenario.n_classes();
        if self.q.len() != l {
            return Err(Error::Config(format!(
                "{} needs {l} test proportions, got {}",
                self.scenario.name(),
                self.q.len()
            )));
        }
        if self.q.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(format!("test proportions must be non-negative: {:?}", self.q)));
        }
        if !(self.epsilon_out >= 0.0 && self.epsilon_out < 1.0) {
            return Err(Error::Config(format!("epsilon_out must lie in [0, 1), got {}", self.epsilon_out)));
        }
        if self.scenario == Scenario::Toy3 && self.epsilon_out > 0.0 {
            return Err(Error::Config("toy3 has no anomaly distribution".into()));
        }
        let total = self.q.iter().sum::<f64>() + self.epsilon_out;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("test proportions plus epsilon_out sum to {total}, not 1")));
        }
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        Ok(())
    }
}

/// A generated train/test pair with everything needed to score it.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub train: Dataset,
    /// Test features only.
    pub test: Dataset,
    /// True test labels; `None` marks an injected anomaly.
    pub test_labels: Vec<Option<usize>>,
    pub train_counts: Vec<usize>,
    /// Inlier test counts per class.
    pub test_counts: Vec<usize>,
    pub n_anomalies: usize,
    /// Densities with the training priors.
    pub train_oracle: GaussianMixtureOracle,
    /// Same densities with the inlier test priors.
    pub test_oracle: GaussianMixtureOracle,
    pub outlier: Option<GaussianComponent>,
    pub rotation: Option<DMatrix<f64>>,
}

impl GroundTruth {
    pub fn anomaly_flags(&self) -> Vec<bool> {
        self.test_labels.iter().map(Option::is_none).collect()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        (0..self.test_labels.len()).filter(|&i| self.test_labels[i].is_some()).collect()
    }

    /// Inlier test rows with their labels.
    pub fn labeled_inliers(&self) -> Dataset {
        let idx = self.inlier_indices();
        let labels = idx.iter().map(|&i| self.test_labels[i].expect("inlier")).collect();
        self.test.select(&idx).with_labels(labels, self.train.n_classes()).expect("generated labels are in range")
    }
}

/// Largest-remainder apportionment of `total` over `weights` (summing to 1).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Uniformly random orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn haar_rotation(p: usize, rng: &RngStream) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::Config("rotation dimension must be positive".into()));
    }
    let mut r = rng.rng();
    let g = DMatrix::from_fn(p, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..p {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

fn unit(p: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; p];
    for &(i, x) in entries {
        v[i] = x;
    }
    v
}

fn identity(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
    }
    m
}

/// `diag(a) + ½·1·1ᵀ` of size `d`, written into `m` (row-major, side `p`) at `offset`.
fn equicorrelated_block(m: &mut [f64], p: usize, offset: usize, d: usize, a: f64) {
    for i in 0..d {
        for j in 0..d {
            m[(offset + i) * p + offset + j] = 0.5 + if i == j { a } else { 0.0 };
        }
    }
}

fn rotate(omega: &DMatrix<f64>, mean: &[f64], cov: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = mean.len();
    let mu = omega * nalgebra::DVector::from_column_slice(mean);
    let s = omega * DMatrix::from_row_slice(p, p, cov) * omega.transpose();
    // symmetrize away rounding so the density constructor accepts it
    let s = (&s + s.transpose()) * 0.5;
    let cov: Vec<f64> = (0..p * p).map(|k| s[(k / p, k % p)]).collect();
    (mu.iter().copied().collect(), cov)
}

/// Densities of the two Setting I classes and the anomaly component.
pub fn setting1_densities() -> Result<(Vec<ClassDensity>, GaussianComponent)> {
    let pair = |mu: Vec<f64>| -> Result<ClassDensity> {
        let neg: Vec<f64> = mu.iter().map(|v| -v).collect();
        ClassDensity::new(vec![
            GaussianComponent::new(0.5, mu, identity(DIM))?,
            GaussianComponent::new(0.5, neg, identity(DIM))?,
        ])
    };
    let classes = vec![pair(unit(DIM, &[(0, 2.0), (1, -2.0)]))?, pair(unit(DIM, &[(0, 2.0), (1, 2.0)]))?];
    let mut out_cov = identity(DIM);
    out_cov[0] = 0.5;
    out_cov[DIM + 1] = 0.5;
    let outlier = GaussianComponent::new(1.0, unit(DIM, &[(0, 4.0), (1, 4.0)]), out_cov)?;
    Ok((classes, outlier))
}

/// Densities of the two Setting II classes and the anomaly component under
/// rotation `omega`.
pub fn setting2_densities(omega: &DMatrix<f64>) -> Result<(Vec<ClassDensity>, GaussianComponent)> {
    let p = DIM;
    let mut s0 = vec![0.0; p * p];
    equicorrelated_block(&mut s0, p, 0, 3, 1.5);
    equicorrelated_block(&mut s0, p, 3, p - 3, 0.5);
    let mut s1 = vec![0.0; p * p];
    equicorrelated_block(&mut s1, p, 0, 3, 0.5);
    equicorrelated_block(&mut s1, p, 3, p - 3, 1.5);
    let (m0, c0) = rotate(omega, &unit(p, &[(0, 1.0), (1, 1.0), (2, 1.0)]), &s0);
    let (m1, c1) = rotate(omega, &vec![0.0; p], &s1);
    let (m2, c2) = rotate(omega, &unit(p, &[(2, 2.0), (3, 2.0)]), &identity(p));
    Ok((vec![ClassDensity::gaussian(m0, c0)?, ClassDensity::gaussian(m1, c1)?], GaussianComponent::new(1.0, m2, c2)?))
}

pub fn toy3_densities() -> Result<Vec<ClassDensity>> {
    let cov = vec![1.0, 0.2, 0.2, 1.0];
    [1.0, 4.0, 7.0].iter().map(|&y| ClassDensity::gaussian(vec![1.0, y], cov.clone())).collect()
}

/// Draw a train/test pair from arbitrary class densities.
///
/// Training counts apportion `n` by `train_weights`; test counts apportion
/// `m` over the inlier classes `q` and the anomaly share `epsilon_out`.
#[allow(clippy::too_many_arguments)]
pub fn generate_mixture(
    classes: Vec<ClassDensity>,
    train_weights: &[f64],
    n: usize,
    m: usize,
    q: &[f64],
    epsilon_out: f64,
    outlier: Option<GaussianComponent>,
    rotation: Option<DMatrix<f64>>,
    rng: &RngStream,
) -> Result<GroundTruth> {
    let l = classes.len();
    if q.len() != l {
        return Err(Error::DimensionMismatch { expected: l, got: q.len() });
    }
    if epsilon_out > 0.0 && outlier.is_none() {
        return Err(Error::Config("anomalies requested without an anomaly distribution".into()));
    }
    let train_oracle = GaussianMixtureOracle::new(train_weights.to_vec(), classes)?;
    let inlier_total: f64 = q.iter().sum();
    let test_oracle = if inlier_total > 0.0 { train_oracle.with_class_weights(q)? } else { train_oracle.clone() };
    let p = train_oracle.n_features();
    let gen = rng.tagged(Purpose::Generate);

    let train_counts = apportion(n, train_oracle.class_weights());
    let mut r = gen.child(1).rng();
    let mut train_rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for (c, &count) in train_counts.iter().enumerate() {
        for _ in 0..count {
            train_rows.push((train_oracle.sample_class(c + 1, &mut r), c + 1));
        }
    }
    train_rows.shuffle(&mut gen.child(3).rng());

    let mut weights = q.to_vec();
    weights.push(epsilon_out);
    let all_counts = apportion(m, &weights);
    let mut r = gen.child(2).rng();
    let mut test_rows: Vec<(Vec<f64>, Option<usize>)> = Vec::with_capacity(m);
    for (c, &count) in all_counts[..l].iter().enumerate() {
        for _ in 0..count {
            test_rows.push((train_oracle.sample_class(c + 1, &mut r), Some(c + 1)));
        }
    }
    if let Some(out) = &outlier {
        for _ in 0..all_counts[l] {
            test_rows.push((out.sample(&mut r), None));
        }
    }
    test_rows.shuffle(&mut gen.child(4).rng());

    let train = Dataset::labeled(
        train_rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
        p,
        train_rows.iter().map(|(_, y)| *y).collect(),
        l,
    )?;
    let test = Dataset::new(test_rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(), p)?;
    Ok(GroundTruth {
        train,
        test,
        test_labels: test_rows.into_iter().map(|(_, y)| y).collect(),
        train_counts,
        test_counts: all_counts[..l].to_vec(),
        n_anomalies: all_counts[l],
        train_oracle,
        test_oracle,
        outlier,
        rotation,
    })
}

/// Three-class 2-d example with equal training proportions.
pub fn gen_toy3(n: usize, m: usize, q: &[f64], rng: &RngStream) -> Result<GroundTruth> {
    ScenarioSpec { scenario: Scenario::Toy3, n_train: n, n_test: m, q: q.to_vec(), epsilon_out: 0.0, seed: 0 }
        .validate()?;
    generate_mixture(toy3_densities()?, &[1.0 / 3.0; 3], n, m, q, 0.0, None, None, rng)
}

/// Setting I with inlier test proportions `(1 - ε)(q1, 1 - q1)`.
pub fn gen_setting1(n: usize, m: usize, q1: f64, epsilon_out: f64, rng: &RngStream) -> Result<GroundTruth> {
    let spec = ScenarioSpec::two_class(Scenario::Setting1, n, m, q1, epsilon_out, 0);
    check_q1(q1)?;
    spec.validate()?;
    let (classes, outlier) = setting1_densities()?;
    generate_mixture(classes, &[0.5, 0.5], n, m, &spec.q, epsilon_out, Some(outlier), None, rng)
}

/// Setting II; the rotation is drawn once per call from `rng / Rotation`.
pub fn gen_setting2(n: usize, m: usize, q1: f64, epsilon_out: f64, rng: &RngStream) -> Result<GroundTruth> {
    let spec = ScenarioSpec::two_class(Scenario::Setting2, n, m, q1, epsilon_out, 0);
    check_q1(q1)?;
    spec.validate()?;
    let omega = haar_rotation(DIM, &rng.tagged(Purpose::Rotation))?;
    let (classes, outlier) = setting2_densities(&omega)?;
    generate_mixture(classes, &[0.5, 0.5], n, m, &spec.q, epsilon_out, Some(outlier), Some(omega), rng)
}

fn check_q1(q1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q1) {
        return Err(Error::Config(format!("q1 must lie in [0, 1], got {q1}")));
    }
    Ok(())
}

/// Generate `spec` from stream `rng`.
pub fn generate(spec: &ScenarioSpec, rng: &RngStream) -> Result<GroundTruth> {
    spec.validate()?;
    match spec.scenario {
        Scenario::Toy3 => gen_toy3(spec.n_train, spec.n_test, &spec.q, rng),
        Scenario::Setting1 | Scenario::Setting2 => {
            let (classes, outlier, rotation) = if spec.scenario == Scenario::Setting1 {
                let (c, o) = setting1_densities()?;
                (c, o, None)
            } else {
                let omega = haar_rotation(DIM, &rng.tagged(Purpose::Rotation))?;
                let (c, o) = setting2_densities(&omega)?;
                (c, o, Some(omega))
            };
            generate_mixture(
                classes,
                &[0.5, 0.5],
                spec.n_train,
                spec.n_test,
                &spec.q,
                spec.epsilon_out,
                Some(outlier),
                rotation,
                rng,
            )
        }
    }
}
