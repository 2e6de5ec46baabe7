//! Linear models, their losses and subgradients, clipping, projection and
//! fitness evaluation.
//!
//! Everything in this module is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{dot, norm1};

/// Decision vector of a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        Ok(Self(theta))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(theta: Vec<f64>) -> Self {
        Self(theta)
    }
}

impl From<ModelParams> for Vec<f64> {
    fn from(p: ModelParams) -> Self {
        p.0
    }
}

/// One training example. For classification `y` is `-1.0` or `+1.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Record {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// Non-empty ordered collection of records with a common feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyDataset)?;
        let p = first.x.len();
        for r in &records {
            ensure_dim(p, r.x.len())?;
            if !r.y.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("records must be finite".into()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.records[0].x.len()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Concatenation of several datasets, in order.
    pub fn pooled(datasets: &[Dataset]) -> Result<Self> {
        Self::new(datasets.iter().flat_map(|d| d.records.iter().cloned()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error on `θᵀx`, no regularizer.
    LinearRegression,
    /// Hinge loss on `θᵀ[x; 1]` plus `½‖θ‖²`.
    LinearSvm,
}

/// A loss family together with the feasible box and the per-sample clip bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    /// Box half-width; `f64::INFINITY` means unconstrained.
    pub theta_max: f64,
    /// L1 bound enforced on every per-sample subgradient.
    pub xi_clip: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, theta_max: f64, xi_clip: f64) -> Result<Self> {
        if !(theta_max > 0.0) {
            return Err(Error::InvalidParameter(format!("theta_max must be positive, got {theta_max}")));
        }
        if !(xi_clip > 0.0) || !xi_clip.is_finite() {
            return Err(Error::InvalidParameter(format!("xi_clip must be positive and finite, got {xi_clip}")));
        }
        Ok(Self { kind, theta_max, xi_clip })
    }

    pub fn regression(xi_clip: f64) -> Result<Self> {
        Self::new(LossKind::LinearRegression, f64::INFINITY, xi_clip)
    }

    pub fn svm(theta_max: f64, xi_clip: f64) -> Result<Self> {
        Self::new(LossKind::LinearSvm, theta_max, xi_clip)
    }

    pub fn with_theta_max(mut self, theta_max: f64) -> Result<Self> {
        self.theta_max = theta_max;
        Self::new(self.kind, self.theta_max, self.xi_clip)
    }

    pub fn with_xi_clip(self, xi_clip: f64) -> Result<Self> {
        Self::new(self.kind, self.theta_max, xi_clip)
    }

    /// Number of model coefficients for inputs of dimension `feature_dim`.
    pub fn param_dim(&self, feature_dim: usize) -> usize {
        match self.kind {
            LossKind::LinearRegression => feature_dim,
            LossKind::LinearSvm => feature_dim + 1,
        }
    }

    /// Checks labels and dimensions of a dataset against this loss.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.kind == LossKind::LinearSvm {
            if let Some(bad) = data.records().iter().find(|r| r.y != 1.0 && r.y != -1.0) {
                return Err(Error::InvalidParameter(format!("SVM labels must be ±1, found {}", bad.y)));
            }
        }
        Ok(())
    }

    fn check(&self, theta: &ModelParams, x: &[f64]) -> Result<()> {
        ensure_dim(self.param_dim(x.len()), theta.len())
    }

    /// Model output `M(x; θ)`.
    pub fn predict(&self, theta: &ModelParams, x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        Ok(self.output(theta.as_slice(), x))
    }

    fn output(&self, theta: &[f64], x: &[f64]) -> f64 {
        match self.kind {
            LossKind::LinearRegression => dot(theta, x),
            LossKind::LinearSvm => dot(&theta[..x.len()], x) + theta[x.len()],
        }
    }

    /// Per-record loss `g2(M(x; θ), y)`.
    pub fn sample_loss(&self, theta: &ModelParams, r: &Record) -> Result<f64> {
        self.check(theta, &r.x)?;
        Ok(self.sample_loss_unchecked(theta.as_slice(), r))
    }

    fn sample_loss_unchecked(&self, theta: &[f64], r: &Record) -> f64 {
        let m = self.output(theta, &r.x);
        match self.kind {
            LossKind::LinearRegression => (r.y - m).powi(2),
            LossKind::LinearSvm => (1.0 - m * r.y).max(0.0),
        }
    }

    /// Regularizer value `g1(θ)`.
    pub fn regularizer(&self, theta: &ModelParams) -> f64 {
        match self.kind {
            LossKind::LinearRegression => 0.0,
            LossKind::LinearSvm => 0.5 * dot(theta.as_slice(), theta.as_slice()),
        }
    }

    /// Subgradient of the per-record loss before clipping.
    ///
    /// At the hinge kink (`1 − M y = 0`) the zero element of the
    /// subdifferential is returned.
    pub fn raw_subgradient(&self, theta: &ModelParams, r: &Record) -> Result<Vec<f64>> {
        self.check(theta, &r.x)?;
        let mut out = vec![0.0; theta.len()];
        self.raw_subgradient_into(theta.as_slice(), r, &mut out);
        Ok(out)
    }

    fn raw_subgradient_into(&self, theta: &[f64], r: &Record, out: &mut [f64]) {
        match self.kind {
            LossKind::LinearRegression => {
                let scale = -2.0 * (r.y - dot(theta, &r.x));
                out.iter_mut().zip(&r.x).for_each(|(o, xi)| *o = scale * xi);
            }
            LossKind::LinearSvm => {
                let margin = 1.0 - self.output(theta, &r.x) * r.y;
                if margin > 0.0 {
                    let p = r.x.len();
                    out[..p].iter_mut().zip(&r.x).for_each(|(o, xi)| *o = -r.y * xi);
                    out[p] = -r.y;
                } else {
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
        }
    }

    /// Per-record subgradient, L1-clipped to `xi_clip`.
    pub fn per_sample_subgradient(&self, theta: &ModelParams, r: &Record) -> Result<Vec<f64>> {
        let raw = self.raw_subgradient(theta, r)?;
        Ok(clip_l1(raw, self.xi_clip))
    }

    /// Adds the clipped per-record subgradient to `acc`. Hot path for owners.
    pub(crate) fn accumulate_clipped(&self, theta: &[f64], r: &Record, scratch: &mut [f64], acc: &mut [f64]) {
        self.raw_subgradient_into(theta, r, scratch);
        let l1 = norm1(scratch);
        let factor = if l1 > self.xi_clip { self.xi_clip / l1 } else { 1.0 };
        acc.iter_mut().zip(scratch.iter()).for_each(|(a, g)| *a += g * factor);
    }

    /// Subgradient of the regularizer: zero for regression, `θ` for SVM.
    pub fn regularizer_subgradient(&self, theta: &ModelParams) -> Vec<f64> {
        match self.kind {
            LossKind::LinearRegression => vec![0.0; theta.len()],
            LossKind::LinearSvm => theta.as_slice().to_vec(),
        }
    }

    /// Exact (unclipped) subgradient of the pooled fitness.
    pub fn fitness_subgradient(&self, theta: &ModelParams, datasets: &[Dataset]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; theta.len()];
        let mut scratch = vec![0.0; theta.len()];
        let mut n = 0usize;
        for d in datasets {
            for r in d.records() {
                self.check(theta, &r.x)?;
                self.raw_subgradient_into(theta.as_slice(), r, &mut scratch);
                grad.iter_mut().zip(&scratch).for_each(|(g, s)| *g += s);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let reg = self.regularizer_subgradient(theta);
        Ok(grad.iter().zip(&reg).map(|(g, r)| g / n as f64 + r).collect())
    }

    /// Pooled objective `g1(θ) + (1/n) Σ g2` over every record of every dataset.
    pub fn fitness(&self, theta: &ModelParams, datasets: &[Dataset]) -> Result<f64> {
        let mut acc = FitnessAccumulator::new(*self, theta.clone());
        for d in datasets {
            for r in d.records() {
                acc.push(r)?;
            }
        }
        acc.finish()
    }

    /// Default clip bound: `safety` times the largest per-record L1
    /// subgradient norm at `theta` over the given records.
    pub fn calibrate_xi_clip(
        kind: LossKind,
        datasets: &[Dataset],
        theta: &ModelParams,
        safety: f64,
    ) -> Result<f64> {
        let probe = LossModel { kind, theta_max: f64::INFINITY, xi_clip: f64::MAX };
        let mut max_l1: f64 = 0.0;
        for d in datasets {
            for r in d.records() {
                max_l1 = max_l1.max(norm1(&probe.raw_subgradient(theta, r)?));
            }
        }
        if max_l1 == 0.0 {
            // Every record already fits the model exactly; any positive bound is sound.
            max_l1 = 1.0;
        }
        Ok(max_l1 * safety)
    }
}

/// Streaming evaluation of the pooled objective, one record at a time.
///
/// Summation is strictly left-to-right in push order, so pushing the records
/// of `fitness`'s datasets in order reproduces it bit for bit.
#[derive(Debug, Clone)]
pub struct FitnessAccumulator {
    loss: LossModel,
    theta: ModelParams,
    sum: f64,
    count: usize,
}

impl FitnessAccumulator {
    pub fn new(loss: LossModel, theta: ModelParams) -> Self {
        Self { loss, theta, sum: 0.0, count: 0 }
    }

    pub fn push(&mut self, r: &Record) -> Result<()> {
        self.loss.check(&self.theta, &r.x)?;
        self.sum += self.loss.sample_loss_unchecked(self.theta.as_slice(), r);
        self.count += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(self.loss.regularizer(&self.theta) + self.sum / self.count as f64)
    }
}

/// Scales `v` down so that `‖v‖₁ ≤ xi`; vectors already inside are untouched.
pub fn clip_l1(mut v: Vec<f64>, xi: f64) -> Vec<f64> {
    let l1 = norm1(&v);
    if l1 > xi {
        let factor = xi / l1;
        v.iter_mut().for_each(|x| *x *= factor);
    }
    v
}

/// `f(θ)/f(θ*) − 1`.
pub fn relative_fitness(f_theta: f64, f_star: f64) -> Result<f64> {
    if !(f_star > 0.0) {
        return Err(Error::UndefinedRelativeFitness(f_star));
    }
    Ok(f_theta / f_star - 1.0)
}

/// Euclidean projection onto `{θ : ‖θ‖∞ ≤ theta_max}`.
pub fn project_box(theta: &ModelParams, theta_max: f64) -> ModelParams {
    if theta_max.is_infinite() {
        return theta.clone();
    }
    ModelParams(theta.0.iter().map(|v| v.clamp(-theta_max, theta_max)).collect())
}
