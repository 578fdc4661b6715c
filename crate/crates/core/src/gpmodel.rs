//! Gaussian-process regression with the repertoire as prior mean.
//!
//! The transformation model maps expected task-space transitions to observed
//! ones. Inputs are the repertoire's stored transitions, targets the
//! transitions measured on the deployed system, and the prior mean is the
//! identity: with no data the model predicts exactly what the repertoire
//! promised. One GP per output dimension; all dimensions share the kernel,
//! the inputs, and therefore a single Cholesky factorization of
//! `K + sigma_n^2 I`.

use crate::error::Error;
use crate::types::TaskPoint;
use crate::Result;

/// Variance floor applied to posterior predictions.
const VAR_FLOOR: f64 = 1e-12;

/// Squared-exponential kernel hyperparameters and observation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub sigma_se: f64,
    pub length_scale: f64,
    pub sigma_n: f64,
}

impl GpHyperparams {
    pub fn new(sigma_se: f64, length_scale: f64, sigma_n: f64) -> Result<Self> {
        if !(sigma_se > 0.0 && length_scale > 0.0 && sigma_n > 0.0) {
            return Err(Error::InvalidInput(
                "GP hyperparameters must be positive".into(),
            ));
        }
        Ok(Self {
            sigma_se,
            length_scale,
            sigma_n,
        })
    }
}

impl Default for GpHyperparams {
    /// Kernel scale 0.03 and length 0.3; noise 1e-3 matches the deployment
    /// noise scale.
    fn default() -> Self {
        Self {
            sigma_se: 0.03,
            length_scale: 0.3,
            sigma_n: 1e-3,
        }
    }
}

/// `sigma_se^2 * exp(-|x - x'|^2 / l^2)`.
pub fn kernel(x: &TaskPoint, y: &TaskPoint, hyper: &GpHyperparams) -> f64 {
    let l2 = hyper.length_scale * hyper.length_scale;
    hyper.sigma_se * hyper.sigma_se * (-x.sq_dist(y) / l2).exp()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
struct CholeskyFactor {
    l: Vec<f64>,
    n: usize,
}

impl CholeskyFactor {
    /// Factorizes `a` (row-major, n x n). Fails on a non-positive pivot.
    fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Numerical(
                            "kernel matrix is not positive definite (duplicate inputs?); \
                             use sigma_n > 0"
                                .into(),
                        ));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { l, n })
    }

    /// Solves `L z = b` in place.
    fn forward(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.l[i * self.n..i * self.n + i];
            let dot: f64 = row.iter().zip(b[..i].iter()).map(|(a, c)| a * c).sum();
            b[i] = (b[i] - dot) / self.l[i * self.n + i];
        }
    }

    /// Solves `L^T z = b` in place (column access into the row-major `l`).
    fn backward(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let dot: f64 = b[i + 1..]
                .iter()
                .enumerate()
                .map(|(off, c)| self.l[(i + 1 + off) * self.n + i] * c)
                .sum();
            b[i] = (b[i] - dot) / self.l[i * self.n + i];
        }
    }

    /// Solves `(L L^T) z = b` in place.
    fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

/// Per-output-dimension GP posterior anchored to a repertoire prior.
///
/// A fitted model is immutable; refitting produces a new value, so concurrent
/// `predict` calls are safe.
#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    hyper: GpHyperparams,
    /// Sliding window: keep only the most recent observations when set.
    window: Option<usize>,
    inputs: Vec<TaskPoint>,
    targets: Vec<TaskPoint>,
    chol: Option<CholeskyFactor>,
    /// Per-dimension `(K + sigma_n^2 I)^{-1} (y_d - M_d(x))`.
    alpha: Vec<Vec<f64>>,
}

impl GpModel {
    pub fn new(dim: usize, hyper: GpHyperparams) -> Self {
        Self {
            dim,
            hyper,
            window: None,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: None,
            alpha: Vec::new(),
        }
    }

    pub fn with_window(mut self, window: Option<usize>) -> Self {
        self.window = window;
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    /// Prior belief with no data: the repertoire's own expectation.
    fn prior_mean(&self, x: &TaskPoint) -> TaskPoint {
        x.clone()
    }

    /// Fits the model on `observations` (pairs of expected and observed
    /// transitions), replacing any previous data. With a sliding window only
    /// the most recent `M` observations are kept.
    pub fn fit(&self, observations: &[(TaskPoint, TaskPoint)]) -> Result<GpModel> {
        let kept: &[(TaskPoint, TaskPoint)] = match self.window {
            Some(m) if observations.len() > m => &observations[observations.len() - m..],
            _ => observations,
        };
        let mut model = GpModel {
            dim: self.dim,
            hyper: self.hyper.clone(),
            window: self.window,
            inputs: Vec::with_capacity(kept.len()),
            targets: Vec::with_capacity(kept.len()),
            chol: None,
            alpha: Vec::new(),
        };
        for (x, y) in kept {
            x.check_dim(self.dim)?;
            y.check_dim(self.dim)?;
            model.inputs.push(x.clone());
            model.targets.push(y.clone());
        }
        if model.inputs.is_empty() {
            return Ok(model);
        }

        let t = model.inputs.len();
        let mut k = vec![0.0f64; t * t];
        for i in 0..t {
            for j in 0..=i {
                let v = kernel(&model.inputs[i], &model.inputs[j], &model.hyper);
                k[i * t + j] = v;
                k[j * t + i] = v;
            }
            k[i * t + i] += model.hyper.sigma_n * model.hyper.sigma_n;
        }
        let chol = CholeskyFactor::factor(&k, t)?;

        let mut alpha = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            let mut resid: Vec<f64> = (0..t)
                .map(|i| {
                    let prior = self.prior_mean(&model.inputs[i]);
                    model.targets[i].coords[d] - prior.coords[d]
                })
                .collect();
            chol.solve(&mut resid);
            alpha.push(resid);
        }
        model.chol = Some(chol);
        model.alpha = alpha;
        Ok(model)
    }

    /// Convenience: refit with one more observation appended.
    pub fn augmented(&self, x: TaskPoint, y: TaskPoint) -> Result<GpModel> {
        let mut obs: Vec<(TaskPoint, TaskPoint)> = self
            .inputs
            .iter()
            .cloned()
            .zip(self.targets.iter().cloned())
            .collect();
        obs.push((x, y));
        self.fit(&obs)
    }

    /// Posterior mean and per-dimension variance at `x`.
    ///
    /// `mu_d(x) = M_d(x) + k^T (K + sigma_n^2 I)^{-1} (y_d - M_d(x_{1:t}))`,
    /// `sigma^2(x) = k(x, x) - k^T (K + sigma_n^2 I)^{-1} k`, floored at
    /// 1e-12. With no data this reduces to the prior mean and variance.
    pub fn predict(&self, x: &TaskPoint) -> Result<(TaskPoint, Vec<f64>)> {
        x.check_dim(self.dim)?;
        let prior = self.prior_mean(x);
        let prior_var = kernel(x, x, &self.hyper);
        let Some(chol) = &self.chol else {
            return Ok((prior, vec![prior_var; self.dim]));
        };

        let t = self.inputs.len();
        let kvec: Vec<f64> = (0..t)
            .map(|i| kernel(&self.inputs[i], x, &self.hyper))
            .collect();

        let mut mu = prior;
        for d in 0..self.dim {
            let dot: f64 = kvec.iter().zip(&self.alpha[d]).map(|(a, b)| a * b).sum();
            mu.coords[d] += dot;
        }

        let mut v = kvec;
        chol.forward(&mut v);
        let explained: f64 = v.iter().map(|z| z * z).sum();
        let var = (prior_var - explained).max(VAR_FLOOR);
        Ok((mu, vec![var; self.dim]))
    }
}
