//! Multinomial logistic regression.
//!
//! Parameters are one row `[intercept, w_1..w_p]` per present class. The
//! objective is
//!
//! `J(θ) = (1/n) Σ_i [logsumexp(z_i) - z_{i,y_i}] + (l2/2) |θ|²`
//!
//! minimized by Newton steps with Armijo backtracking. Every class gets its own
//! row and the intercepts are penalized too, so with `l2 > 0` the optimum is
//! unique and does not depend on how classes are numbered.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// The penalized cross-entropy for a labeled dataset, exposed so the
/// gradient can be checked against finite differences.
pub struct LogisticObjective<'a> {
    data: &'a Dataset,
    labels: &'a [usize],
    /// Present labels, ascending.
    classes: Vec<usize>,
    /// `label - 1` -> position in `classes`.
    position: Vec<Option<usize>>,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(data: &'a Dataset, l2: f64) -> Result<Self> {
        let labels = data.require_labels()?;
        if data.is_empty() {
            return Err(Error::Usage("logistic regression on zero rows".into()));
        }
        let counts = data.class_counts()?;
        let classes: Vec<usize> = (1..=data.n_classes()).filter(|&l| counts[l - 1] > 0).collect();
        let mut position = vec![None; data.n_classes()];
        for (i, &l) in classes.iter().enumerate() {
            position[l - 1] = Some(i);
        }
        Ok(Self { data, labels, classes, position, l2 })
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        if self.classes.len() < 2 {
            0
        } else {
            self.classes.len() * (self.data.n_features() + 1)
        }
    }

    fn width(&self) -> usize {
        self.data.n_features() + 1
    }

    fn logits(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let w = self.width();
        for (c, z) in out.iter_mut().enumerate() {
            let row = &theta[c * w..(c + 1) * w];
            *z = row[0] + row[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let mut z = vec![0.0; self.classes.len()];
        let mut loss = 0.0;
        for (i, x) in self.data.rows().enumerate() {
            self.logits(theta, x, &mut z);
            let y = self.position[self.labels[i] - 1].expect("present class");
            loss += log_sum_exp(&z) - z[y];
        }
        loss / self.data.n_rows() as f64 + 0.5 * self.l2 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.evaluate(theta, false).1
    }

    /// Value, gradient and (optionally) Hessian.
    fn evaluate(&self, theta: &[f64], with_hessian: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let n = self.data.n_rows() as f64;
        let w = self.width();
        let free = self.classes.len();
        let dim = self.dim();
        let mut grad = vec![0.0; dim];
        let mut hess = with_hessian.then(|| DMatrix::<f64>::zeros(dim, dim));
        let mut z = vec![0.0; self.classes.len()];
        let mut xt = vec![1.0; w];
        let mut loss = 0.0;
        for (i, x) in self.data.rows().enumerate() {
            self.logits(theta, x, &mut z);
            let lse = log_sum_exp(&z);
            let y = self.position[self.labels[i] - 1].expect("present class");
            loss += lse - z[y];
            xt[1..].copy_from_slice(x);
            let prob: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
            for c in 0..free {
                let r = prob[c] - if c == y { 1.0 } else { 0.0 };
                for (g, v) in grad[c * w..(c + 1) * w].iter_mut().zip(&xt) {
                    *g += r * v;
                }
            }
            if let Some(h) = hess.as_mut() {
                for c in 0..free {
                    for d in 0..free {
                        let s = prob[c] * (if c == d { 1.0 } else { 0.0 } - prob[d]);
                        if s == 0.0 {
                            continue;
                        }
                        for a in 0..w {
                            let sa = s * xt[a];
                            for b in 0..w {
                                h[(c * w + a, d * w + b)] += sa * xt[b];
                            }
                        }
                    }
                }
            }
        }
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = *g / n + self.l2 * t;
        }
        if let Some(h) = hess.as_mut() {
            *h /= n;
            for i in 0..dim {
                h[(i, i)] += self.l2;
            }
        }
        let value = loss / n + 0.5 * self.l2 * theta.iter().map(|t| t * t).sum::<f64>();
        (value, grad, hess)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    classes: Vec<usize>,
    theta: Vec<f64>,
    n_features: usize,
    n_classes: usize,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

impl LogisticModel {
    pub(crate) fn fit(train: &Dataset, max_iter: usize, l2: f64, tol: f64) -> Result<Self> {
        let obj = LogisticObjective::new(train, l2)?;
        let mut model = Self {
            classes: obj.classes.clone(),
            theta: vec![0.0; obj.dim()],
            n_features: train.n_features(),
            n_classes: train.n_classes(),
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
        };
        if obj.dim() == 0 {
            return Ok(model);
        }
        let mut theta = vec![0.0; obj.dim()];
        model.converged = false;
        for it in 0..max_iter {
            let (f, g, h) = obj.evaluate(&theta, true);
            let gnorm = norm(&g);
            model.iterations = it;
            model.gradient_norm = gnorm;
            if gnorm <= tol {
                model.converged = true;
                break;
            }
            let h = h.expect("hessian requested");
            let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
            // without a penalty the Hessian is singular along the all-classes
            // shift, so retry with a tiny damping before falling back to -g
            let damped = |delta: f64| {
                let mut m = h.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += delta;
                }
                m.cholesky().map(|ch| ch.solve(&rhs).iter().copied().collect::<Vec<f64>>())
            };
            let dir = damped(0.0).or_else(|| damped(1e-10)).unwrap_or_else(|| rhs.iter().copied().collect());
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-12 {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
                if obj.value(&trial) <= f + 1e-4 * step * slope {
                    theta = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // no further decrease representable in floating point
                break;
            }
        }
        if !model.converged {
            let g = obj.gradient(&theta);
            model.gradient_norm = norm(&g);
            model.converged = model.gradient_norm <= tol;
            if !model.converged {
                log::warn!(
                    "logistic regression stopped with gradient norm {:.3e} after {} iterations",
                    model.gradient_norm,
                    model.iterations + 1
                );
            }
        }
        model.theta = theta;
        Ok(model)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Fitted parameters, `[intercept, weights...]` per present class.
    pub fn coefficients(&self) -> &[f64] {
        &self.theta
    }

    /// Gradient norm of the objective at the returned parameters.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub(crate) fn predict(&self, x: &[f64]) -> usize {
        let w = self.n_features + 1;
        if self.theta.is_empty() {
            return self.classes[0];
        }
        let z: Vec<f64> = (0..self.classes.len())
            .map(|c| {
                let row = &self.theta[c * w..(c + 1) * w];
                row[0] + row[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        self.classes[super::argmax_label(&z) - 1]
    }
}
