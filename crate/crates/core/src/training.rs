//! Training drivers over a federation of owners, plus non-private baselines.
//!
//! Three update rules share one loop:
//!
//! * [`Mode::DecayingStep`]: `θ[k+1] = θ[k] − ρ/(T²k) · (ξ_g1 + Σ nℓ/n q̄ℓ)`,
//!   unconstrained. Meant for smooth strongly convex objectives.
//! * [`Mode::ProjectedAveraging`]: `θ[k+1] = Π[θ[k] − c₁/√k · (…)]` followed
//!   by the running average `θ̄[k+1]`, see [`average_update`].
//! * [`Mode::ConstantStep`]: projected steps of fixed size, the non-private
//!   reference schedule.
//!
//! Each run issues `T − 1` update queries (`k = 1..T−1`) and one final query
//! at `θ[T]` whose aggregate is kept as a privatized stationarity diagnostic,
//! so a complete run consumes exactly `T` rounds of every owner's budget.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::federation::{run_round, OwnerEndpoint};
use crate::linalg::{norm2, norm_inf, Matrix};
use crate::model::{project_box, relative_fitness, Dataset, LossKind, LossModel, ModelParams};

/// Iterates whose sup-norm exceeds this are treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    DecayingStep,
    ProjectedAveraging,
    ConstantStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Horizon `T`: number of queries each owner answers.
    pub rounds: usize,
    pub mode: Mode,
    /// Numerator of the decaying step `ρ/(T²k)`.
    pub rho: f64,
    /// Constant of the `c₁/√k` step.
    pub c1: f64,
    /// Step of the constant-step modes and of [`nonprivate_train`].
    pub const_step: f64,
    pub theta_init: ModelParams,
    pub master_seed: u64,
    /// Iteration cap for [`nonprivate_train`].
    pub max_iters: usize,
    /// Gradient-norm stopping tolerance for [`nonprivate_train`].
    pub grad_tol: f64,
}

impl TrainConfig {
    pub fn new(rounds: usize, mode: Mode, theta_init: ModelParams) -> Self {
        Self {
            rounds,
            mode,
            rho: 1.0,
            c1: 1.0,
            const_step: 1.0,
            theta_init,
            master_seed: 0,
            max_iters: 100_000,
            grad_tol: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 rounds, got {}", self.rounds)));
        }
        for (name, v) in [("rho", self.rho), ("c1", self.c1), ("const_step", self.const_step)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn step(&self, k: usize) -> f64 {
        let t = self.rounds as f64;
        match self.mode {
            Mode::DecayingStep => self.rho / (t * t * k as f64),
            Mode::ProjectedAveraging => self.c1 / (k as f64).sqrt(),
            Mode::ConstantStep => self.const_step,
        }
    }
}

/// Iterates of one training run. Index `i` holds round `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub theta: Vec<ModelParams>,
    /// Running averages `θ̄[1..T]`; empty unless the mode averages. `θ̄[1]`
    /// is the initial point and carries zero weight in every later average.
    pub theta_bar: Vec<ModelParams>,
    /// Privatized `ξ_g1 + Σ nℓ/n q̄ℓ` at the final iterate.
    pub final_gradient: Vec<f64>,
}

impl Trajectory {
    pub fn final_theta(&self) -> &ModelParams {
        self.theta.last().expect("trajectories are never empty")
    }

    /// `θ̄[T]` when averaging, otherwise `θ[T]`.
    pub fn final_estimate(&self) -> &ModelParams {
        self.theta_bar.last().unwrap_or_else(|| self.final_theta())
    }

    /// The sequence the run reports: averages when present, raw iterates otherwise.
    pub fn reported(&self) -> &[ModelParams] {
        if self.theta_bar.is_empty() {
            &self.theta
        } else {
            &self.theta_bar
        }
    }

    /// Relative fitness of every iterate and every average.
    pub fn relative_fitness(
        &self,
        loss: &LossModel,
        datasets: &[Dataset],
        f_star: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let series = |params: &[ModelParams]| -> Result<Vec<f64>> {
            params.iter().map(|p| relative_fitness(loss.fitness(p, datasets)?, f_star)).collect()
        };
        Ok((series(&self.theta)?, series(&self.theta_bar)?))
    }
}

/// `θ̄[k+1] = (k−1)/(1/√T+k) · θ̄[k] + (1/√T+1)/(1/√T+k) · θ[k]`.
pub fn average_update(theta_bar: &ModelParams, theta: &ModelParams, k: usize, horizon: usize) -> ModelParams {
    let (keep, take) = average_weights(k, horizon);
    ModelParams::from_vec_unchecked(
        theta_bar.as_slice().iter().zip(theta.as_slice()).map(|(b, t)| keep * b + take * t).collect(),
    )
}

/// The two coefficients of [`average_update`].
pub fn average_weights(k: usize, horizon: usize) -> (f64, f64) {
    let a = 1.0 / (horizon as f64).sqrt();
    let k = k as f64;
    ((k - 1.0) / (a + k), (a + 1.0) / (a + k))
}

fn guard(theta: &[f64], round: usize) -> Result<()> {
    if theta.iter().any(|v| !v.is_finite()) || norm_inf(theta) > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { round });
    }
    Ok(())
}

/// Runs the configured update rule against `owners`.
pub fn train<E: OwnerEndpoint>(loss: &LossModel, owners: &mut [E], cfg: &TrainConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let horizon = cfg.rounds;
    let project = match cfg.mode {
        Mode::DecayingStep => false,
        Mode::ProjectedAveraging => {
            if loss.theta_max.is_infinite() {
                return Err(Error::InvalidParameter("projected averaging needs a finite theta_max".into()));
            }
            true
        }
        Mode::ConstantStep => true,
    };
    let averaging = cfg.mode == Mode::ProjectedAveraging;

    let mut theta = cfg.theta_init.clone();
    let mut trajectory = Trajectory {
        theta: vec![theta.clone()],
        theta_bar: if averaging { vec![theta.clone()] } else { Vec::new() },
        final_gradient: Vec::new(),
    };

    for k in 1..horizon {
        let direction = descent_direction(loss, owners, &theta, k)?;
        let step = cfg.step(k);
        let raw = ModelParams::from_vec_unchecked(
            theta.as_slice().iter().zip(&direction).map(|(t, d)| t - step * d).collect(),
        );
        let next = if project { project_box(&raw, loss.theta_max) } else { raw };
        guard(next.as_slice(), k + 1)?;
        if averaging {
            let bar = trajectory.theta_bar.last().expect("seeded above");
            let next_bar = average_update(bar, &theta, k, horizon);
            trajectory.theta_bar.push(next_bar);
        }
        trajectory.theta.push(next.clone());
        theta = next;
    }

    trajectory.final_gradient = descent_direction(loss, owners, &theta, horizon)?;
    Ok(trajectory)
}

fn descent_direction<E: OwnerEndpoint>(
    loss: &LossModel,
    owners: &mut [E],
    theta: &ModelParams,
    round: usize,
) -> Result<Vec<f64>> {
    let aggregate = run_round(theta, owners, round)?;
    let reg = loss.regularizer_subgradient(theta);
    Ok(reg.iter().zip(&aggregate).map(|(r, a)| r + a).collect())
}

/// Decaying-step training; any box constraint on `loss` is ignored.
pub fn train_decaying_step<E: OwnerEndpoint>(
    loss: &LossModel,
    owners: &mut [E],
    cfg: &TrainConfig,
) -> Result<Trajectory> {
    train(loss, owners, &TrainConfig { mode: Mode::DecayingStep, ..cfg.clone() })
}

/// Projected `c₁/√k` steps with iterate averaging.
pub fn train_projected_averaging<E: OwnerEndpoint>(
    loss: &LossModel,
    owners: &mut [E],
    cfg: &TrainConfig,
) -> Result<Trajectory> {
    train(loss, owners, &TrainConfig { mode: Mode::ProjectedAveraging, ..cfg.clone() })
}

/// Constant-step projected (sub)gradient descent on pooled data with exact,
/// unclipped gradients.
///
/// Stops when the gradient's ℓ2 norm drops below `cfg.grad_tol` or after
/// `cfg.max_iters` steps. Regression returns the last iterate; for the
/// non-smooth SVM objective the best iterate seen is returned.
pub fn nonprivate_train(loss: &LossModel, pooled: &[Dataset], cfg: &TrainConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let first = pooled.first().ok_or(Error::EmptyDataset)?;
    ensure_dim(loss.param_dim(first.feature_dim()), cfg.theta_init.len())?;
    let track_best = loss.kind == LossKind::LinearSvm;

    let mut theta = project_box(&cfg.theta_init, loss.theta_max);
    let mut best = (loss.fitness(&theta, pooled)?, theta.clone());
    for it in 0..cfg.max_iters {
        let grad = loss.fitness_subgradient(&theta, pooled)?;
        if norm2(&grad) < cfg.grad_tol {
            break;
        }
        let raw = ModelParams::from_vec_unchecked(
            theta.as_slice().iter().zip(&grad).map(|(t, g)| t - cfg.const_step * g).collect(),
        );
        theta = project_box(&raw, loss.theta_max);
        guard(theta.as_slice(), it + 1)?;
        if track_best {
            let f = loss.fitness(&theta, pooled)?;
            if f < best.0 {
                best = (f, theta.clone());
            }
        }
    }
    Ok(if track_best { best.1 } else { theta })
}

/// Solves `(XᵀX + ridge·I) θ = Xᵀy` over the pooled records.
pub fn closed_form_regression(pooled: &[Dataset], ridge: f64) -> Result<ModelParams> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let first = pooled.first().ok_or(Error::EmptyDataset)?;
    let p = first.feature_dim();
    let records = pooled.iter().flat_map(|d| d.records());
    let mut gram = Matrix::gram(p, records.clone().map(|r| r.x.as_slice()), 1.0);
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    let mut rhs = vec![0.0; p];
    for r in records {
        ensure_dim(p, r.x.len())?;
        rhs.iter_mut().zip(&r.x).for_each(|(b, x)| *b += x * r.y);
    }
    let theta = crate::linalg::solve(&gram, &rhs)?;
    ModelParams::new(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::DataOwner;
    use crate::mechanism::{Epsilon, NoiseStream};
    use crate::model::Record;

    fn params(v: &[f64]) -> ModelParams {
        ModelParams::new(v.to_vec()).unwrap()
    }

    fn scalar_owner(eps: Epsilon, horizon: usize, loss: LossModel) -> DataOwner {
        let d = Dataset::new(vec![Record::new(vec![1.0], 2.0)]).unwrap();
        DataOwner::new(0, d, loss, eps, horizon, NoiseStream::for_owner(3, 0)).unwrap()
    }

    #[test]
    fn average_first_step_returns_iterate() {
        for t in [1, 4, 100] {
            let out = average_update(&params(&[9.0, -9.0]), &params(&[0.25, 3.0]), 1, t);
            assert_eq!(out, params(&[0.25, 3.0]));
        }
    }

    #[test]
    fn average_second_step_with_unit_horizon() {
        let out = average_update(&params(&[3.0]), &params(&[6.0]), 2, 1);
        assert!((out.as_slice()[0] - (1.0 + 4.0)).abs() < 1e-15);
        let (keep, take) = average_weights(2, 1);
        assert!((keep - 1.0 / 3.0).abs() < 1e-15 && (take - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn average_weights_sum_to_one() {
        for t in 1..50 {
            for k in 1..200 {
                let (a, b) = average_weights(k, t);
                assert!((a + b - 1.0).abs() < 1e-12, "k={k} T={t}");
            }
        }
    }

    #[test]
    fn decaying_step_moves_toward_optimum() {
        let loss = LossModel::regression(1e6).unwrap();
        let mut owners = vec![scalar_owner(Epsilon::INFINITE, 20, loss)];
        let mut cfg = TrainConfig::new(20, Mode::DecayingStep, params(&[0.0]));
        cfg.rho = 400.0 * 0.2;
        let traj = train_decaying_step(&loss, &mut owners, &cfg).unwrap();
        // θ' = θ − ρ/(T²k)·(−2(2 − θ)): distance to 2 shrinks by (1 − 2ρ/(T²k)) each round
        let mut expected = 0.0;
        for (k, th) in traj.theta.iter().enumerate().skip(1) {
            let prev = expected;
            expected = prev + cfg.rho / (400.0 * k as f64) * 2.0 * (2.0 - prev);
            let v = th.as_slice()[0];
            assert!((v - expected).abs() < 1e-12);
            assert!(v > traj.theta[k - 1].as_slice()[0] && v < 2.0);
        }
    }

    #[test]
    fn zero_step_constants_freeze_iterates() {
        let loss = LossModel::regression(10.0).unwrap().with_theta_max(5.0).unwrap();
        let init = params(&[0.7]);
        let mut cfg = TrainConfig::new(6, Mode::DecayingStep, init.clone());
        cfg.rho = 0.0;
        cfg.c1 = 0.0;
        let mut owners = vec![scalar_owner(Epsilon(1.0), 6, loss)];
        let t1 = train_decaying_step(&loss, &mut owners, &cfg).unwrap();
        assert!(t1.theta.iter().all(|t| *t == init));

        let mut owners = vec![scalar_owner(Epsilon(1.0), 6, loss)];
        let t2 = train_projected_averaging(&loss, &mut owners, &cfg).unwrap();
        assert!(t2.theta.iter().all(|t| *t == init));
        assert!(t2.theta_bar.iter().all(|t| (t.as_slice()[0] - 0.7).abs() < 1e-15));
    }

    #[test]
    fn initial_point_outside_box_projected_on_first_update() {
        let loss = LossModel::regression(10.0).unwrap().with_theta_max(1.0).unwrap();
        let mut cfg = TrainConfig::new(3, Mode::ProjectedAveraging, params(&[5.0]));
        cfg.c1 = 1e-3;
        let mut owners = vec![scalar_owner(Epsilon::INFINITE, 3, loss)];
        let traj = train_projected_averaging(&loss, &mut owners, &cfg).unwrap();
        assert_eq!(traj.theta[0], params(&[5.0]));
        assert_eq!(traj.theta[1], params(&[1.0]));
        assert_eq!(traj.theta_bar[1], params(&[5.0]));
    }

    #[test]
    fn projected_averaging_requires_finite_box() {
        let loss = LossModel::regression(10.0).unwrap();
        let mut owners = vec![scalar_owner(Epsilon::INFINITE, 3, loss)];
        let cfg = TrainConfig::new(3, Mode::ProjectedAveraging, params(&[0.0]));
        assert!(matches!(train(&loss, &mut owners, &cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn divergence_is_reported() {
        // Clip bound large enough that clipping cannot tame the oscillation.
        let loss = LossModel::regression(1e300).unwrap();
        let mut owners = vec![scalar_owner(Epsilon::INFINITE, 200, loss)];
        let mut cfg = TrainConfig::new(200, Mode::ConstantStep, params(&[0.0]));
        cfg.const_step = 10.0;
        assert!(matches!(train(&loss, &mut owners, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn run_consumes_full_horizon() {
        let loss = LossModel::regression(10.0).unwrap();
        let mut owners = vec![scalar_owner(Epsilon(1.0), 7, loss)];
        let cfg = TrainConfig::new(7, Mode::DecayingStep, params(&[0.0]));
        let traj = train(&loss, &mut owners, &cfg).unwrap();
        assert_eq!(traj.theta.len(), 7);
        assert_eq!(owners[0].spent_rounds(), 7);
        assert_eq!(traj.final_gradient.len(), 1);
    }

    #[test]
    fn nonprivate_scalar_regression() {
        let loss = LossModel::regression(1.0).unwrap();
        let d = Dataset::new(vec![Record::new(vec![1.0], 2.0)]).unwrap();
        let mut cfg = TrainConfig::new(2, Mode::ConstantStep, params(&[0.0]));
        cfg.const_step = 0.25;
        let th = nonprivate_train(&loss, &[d], &cfg).unwrap();
        assert!((th.as_slice()[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn nonprivate_matches_normal_equations() {
        let loss = LossModel::regression(1.0).unwrap();
        let d = Dataset::new(vec![Record::new(vec![1.0], 2.0), Record::new(vec![2.0], 4.0)]).unwrap();
        let mut cfg = TrainConfig::new(2, Mode::ConstantStep, params(&[0.0]));
        // Hessian is (2/n)Σx² = 5
        cfg.const_step = 0.2;
        let th = nonprivate_train(&loss, &[d.clone()], &cfg).unwrap();
        assert!((th.as_slice()[0] - 2.0).abs() < 1e-9);
        assert!((closed_form_regression(&[d], 0.0).unwrap().as_slice()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn separable_svm_reaches_zero_hinge() {
        // Oracle: brute-force grid over (w, b) ∈ [−2, 2]² of the objective
        // written out by hand, independent of `LossModel`.
        let objective = |w: f64, b: f64| {
            0.5 * (w * w + b * b) + 0.5 * ((1.0 - (w + b)).max(0.0) + (1.0 - (w - b)).max(0.0))
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let (w, b) = (-2.0 + 0.01 * i as f64, -2.0 + 0.01 * j as f64);
                let v = objective(w, b);
                if v < best.0 {
                    best = (v, w, b);
                }
            }
        }
        assert!((best.0 - 0.5).abs() < 1e-9 && (best.1 - 1.0).abs() < 1e-9 && best.2.abs() < 1e-9);

        let loss = LossModel::svm(10.0, 100.0).unwrap();
        let d = Dataset::new(vec![Record::new(vec![1.0], 1.0), Record::new(vec![-1.0], -1.0)]).unwrap();
        let mut cfg = TrainConfig::new(2, Mode::ConstantStep, params(&[0.0, 0.0]));
        cfg.const_step = 1e-3;
        cfg.max_iters = 20_000;
        let th = nonprivate_train(&loss, &[d.clone()], &cfg).unwrap();
        let f = loss.fitness(&th, &[d]).unwrap();
        let reg = loss.regularizer(&th);
        assert!((f - best.0).abs() < 2e-3, "f = {f}");
        assert!((f - reg).abs() < 2e-3);
        assert!((th.as_slice()[0] - best.1).abs() < 5e-3 && (th.as_slice()[1] - best.2).abs() < 5e-3);
    }

    #[test]
    fn closed_form_examples() {
        // orthonormal rows: X = I, so θ = y
        let d = Dataset::new(vec![Record::new(vec![1.0, 0.0], 3.0), Record::new(vec![0.0, 1.0], -2.0)]).unwrap();
        assert_eq!(closed_form_regression(&[d.clone()], 0.0).unwrap(), params(&[3.0, -2.0]));
        let shrunk = closed_form_regression(&[d], 1e12).unwrap();
        assert!(norm_inf(shrunk.as_slice()) < 1e-11);

        let rank_deficient = Dataset::new(vec![Record::new(vec![1.0, 1.0], 1.0)]).unwrap();
        assert!(matches!(closed_form_regression(&[rank_deficient], 0.0), Err(Error::Singular)));
    }
}
