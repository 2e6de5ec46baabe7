//! Seeded Monte Carlo sweeps over privacy budgets, dataset sizes, or whole
//! collaboration scenarios, with percentile statistics, log-log slope fits,
//! and CSV/JSON emission.
//!
//! For every grid point the non-private optimum `θ*` is computed once and
//! shared by all `R` runs; run `i` uses seed `master_seed + i` and each owner
//! draws from its own stream of that seed. Runs that trip the divergence
//! guard are counted and left out of the statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{partition, read_dataset_csv, synth_instance};
use crate::error::{Error, Result};
use crate::federation::DataOwner;
use crate::mechanism::{Epsilon, NoiseStream};
use crate::model::{relative_fitness, Dataset, LossKind, LossModel, ModelParams};
use crate::predictor::{estimate_curvature, BoundKind, CurvatureEstimate, Forecaster, Scenario, ScenarioForecast};
use crate::training::{nonprivate_train, train, Mode, TrainConfig, Trajectory};

pub const DEFAULT_RUNS: usize = 100;
pub const FAST_RUNS: usize = 50;
pub const DEFAULT_ROUNDS: usize = 100;
pub const DEFAULT_THETA_MAX: f64 = 10.0;
/// Default clip bound is this multiple of the largest per-record subgradient at `θ_init`.
pub const DEFAULT_XI_SAFETY: f64 = 1.5;

/// Where the pooled records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated by [`synth_instance`]; owners get consecutive slices.
    Synthetic { p: usize, noise_sd: f64, seed: u64 },
    /// A numeric CSV whose last column is the target (as written by `prep`).
    Csv { path: PathBuf },
}

/// What varies across grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    /// A single point using the configured sizes and budgets.
    None,
    /// Every owner gets the same budget, one grid point per value.
    Epsilon { values: Vec<Epsilon> },
    /// Every owner gets the same number of records, one grid point per value.
    N { values: Vec<usize> },
    Scenario { scenarios: Vec<Scenario> },
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Epsilon { .. } => "epsilon",
            Sweep::N { .. } => "n",
            Sweep::Scenario { .. } => "scenario",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub loss: LossKind,
    pub sizes: Vec<usize>,
    pub budgets: Vec<Epsilon>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Decaying-step numerator; defaults to `T²/λ̂`.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Averaging step constant; defaults to `1/(λ̂ + 1)`.
    #[serde(default)]
    pub c1: Option<f64>,
    /// Constant-step size; defaults to `1/λ̂`.
    #[serde(default)]
    pub const_step: Option<f64>,
    /// Monte Carlo runs per grid point; defaults to 100 (50 in fast mode).
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    pub sweep: Sweep,
    pub data: DataSource,
    #[serde(default)]
    pub xi_clip: Option<f64>,
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub fast: bool,
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

fn default_mode() -> Mode {
    Mode::ProjectedAveraging
}

fn default_theta_max() -> f64 {
    DEFAULT_THETA_MAX
}

impl ExperimentConfig {
    /// Synthetic regression sweep over `ε ∈ {0.1, 1, 10}` with `T = 100`.
    pub fn synthetic_epsilon_sweep(sizes: Vec<usize>, p: usize, seed: u64) -> Self {
        let owners = sizes.len();
        Self {
            loss: LossKind::LinearRegression,
            sizes,
            budgets: vec![Epsilon(1.0); owners],
            rounds: DEFAULT_ROUNDS,
            mode: Mode::ProjectedAveraging,
            rho: None,
            c1: None,
            const_step: None,
            runs: None,
            master_seed: seed,
            sweep: Sweep::Epsilon { values: vec![Epsilon(0.1), Epsilon(1.0), Epsilon(10.0)] },
            data: DataSource::Synthetic { p, noise_sd: 0.1, seed },
            xi_clip: None,
            theta_max: DEFAULT_THETA_MAX,
            out_dir: None,
            fast: false,
        }
    }

    pub fn runs(&self) -> usize {
        match (self.runs, self.fast) {
            (Some(r), true) => r.min(FAST_RUNS),
            (Some(r), false) => r,
            (None, true) => FAST_RUNS,
            (None, false) => DEFAULT_RUNS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs() == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.rounds < 2 {
            return Err(Error::InvalidParameter("rounds must be at least 2".into()));
        }
        Scenario::new(self.sizes.clone(), self.budgets.clone()).validate()?;
        let empty = match &self.sweep {
            Sweep::None => false,
            Sweep::Epsilon { values } => values.is_empty(),
            Sweep::N { values } => values.is_empty() || values.contains(&0),
            Sweep::Scenario { scenarios } => {
                for s in scenarios {
                    s.validate()?;
                }
                scenarios.is_empty()
            }
        };
        if empty {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        Ok(())
    }

    /// The grid points, each as a scenario plus the value plotted on the x axis.
    pub fn grid(&self) -> Vec<(f64, Scenario)> {
        let base = || Scenario::new(self.sizes.clone(), self.budgets.clone());
        match &self.sweep {
            Sweep::None => vec![(1.0, base())],
            Sweep::Epsilon { values } => values
                .iter()
                .map(|&e| (e.value(), Scenario::new(self.sizes.clone(), vec![e; self.sizes.len()])))
                .collect(),
            Sweep::N { values } => values
                .iter()
                .map(|&n| (n as f64, Scenario::new(vec![n; self.sizes.len()], self.budgets.clone())))
                .collect(),
            Sweep::Scenario { scenarios } => {
                scenarios.iter().enumerate().map(|(i, s)| ((i + 1) as f64, s.clone())).collect()
            }
        }
    }
}

/// Everything shared by the Monte Carlo runs of one grid point.
#[derive(Debug, Clone)]
pub struct GridSetup {
    pub scenario: Scenario,
    pub shards: Vec<Dataset>,
    pub loss: LossModel,
    pub train: TrainConfig,
    pub curvature: CurvatureEstimate,
    pub theta_star: ModelParams,
    pub f_star: f64,
}

fn load_pool(data: &DataSource, kind: LossKind, total: usize) -> Result<Dataset> {
    match data {
        DataSource::Synthetic { p, noise_sd, seed } => Ok(synth_instance(kind, total, *p, *noise_sd, *seed)?.0),
        DataSource::Csv { path } => read_dataset_csv(path),
    }
}

/// Non-private optimum by constant-step descent, refining the step tenfold
/// in each of four phases so that the non-smooth objective settles too.
fn reference_optimum(loss: &LossModel, shards: &[Dataset], lipschitz: f64, dim: usize) -> Result<ModelParams> {
    let mut cfg = TrainConfig::new(2, Mode::ConstantStep, ModelParams::zeros(dim));
    cfg.const_step = 1.0 / lipschitz;
    cfg.max_iters = 25_000;
    let mut theta = nonprivate_train(loss, shards, &cfg)?;
    if loss.kind == LossKind::LinearSvm {
        for _ in 0..3 {
            cfg.theta_init = theta;
            cfg.const_step /= 10.0;
            theta = nonprivate_train(loss, shards, &cfg)?;
        }
    }
    Ok(theta)
}

/// Builds the shards, reference optimum, and training schedule of one point.
pub fn setup_grid_point(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<GridSetup> {
    scenario.validate()?;
    let pool = load_pool(&cfg.data, cfg.loss, scenario.n_total())?;
    let shards: Vec<Dataset> = partition(&pool, &scenario.sizes)?.into_iter().map(|(d, _)| d).collect();
    let dim = LossModel::new(cfg.loss, cfg.theta_max, 1.0)?.param_dim(pool.feature_dim());
    let theta_init = ModelParams::zeros(dim);
    let xi = match cfg.xi_clip {
        Some(x) => x,
        None => LossModel::calibrate_xi_clip(cfg.loss, &shards, &theta_init, DEFAULT_XI_SAFETY)?,
    };
    let loss = LossModel::new(cfg.loss, cfg.theta_max, xi)?;
    for d in &shards {
        loss.validate(d)?;
    }
    let curvature = estimate_curvature(&loss, &shards)?;
    let theta_star = reference_optimum(&loss, &shards, curvature.lipschitz, dim)?;
    let f_star = loss.fitness(&theta_star, &shards)?;
    if f_star <= 0.0 {
        return Err(Error::UndefinedRelativeFitness(f_star));
    }

    let t = cfg.rounds as f64;
    let mut train = TrainConfig::new(cfg.rounds, cfg.mode, theta_init);
    train.rho = cfg.rho.unwrap_or(t * t / curvature.lipschitz);
    train.c1 = cfg.c1.unwrap_or(1.0 / (curvature.lipschitz + 1.0));
    train.const_step = cfg.const_step.unwrap_or(1.0 / curvature.lipschitz);
    train.master_seed = cfg.master_seed;
    train.validate()?;
    Ok(GridSetup { scenario: scenario.clone(), shards, loss, train, curvature, theta_star, f_star })
}

impl GridSetup {
    /// Fresh owners whose noise streams derive from `seed`.
    pub fn owners(&self, seed: u64) -> Result<Vec<DataOwner>> {
        self.shards
            .iter()
            .zip(&self.scenario.budgets)
            .enumerate()
            .map(|(id, (d, &eps))| {
                DataOwner::new(id, d.clone(), self.loss, eps, self.train.rounds, NoiseStream::for_owner(seed, id as u64))
            })
            .collect()
    }

    /// One private training run.
    pub fn run(&self, seed: u64) -> Result<Trajectory> {
        let mut owners = self.owners(seed)?;
        train(&self.loss, &mut owners, &self.train)
    }

    /// `ψ` of the reported sequence (averages when the mode averages), one
    /// entry per round `1..=T`; `None` if the run diverged.
    pub fn psi_series(&self, seed: u64) -> Result<Option<Vec<f64>>> {
        match self.run(seed) {
            Ok(traj) => traj
                .reported()
                .iter()
                .map(|p| relative_fitness(self.loss.fitness(p, &self.shards)?, self.f_star))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Err(Error::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// `p25 ≤ p50 ≤ p75` of `ψ` at one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundPercentiles {
    pub round: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointStats {
    pub grid_value: f64,
    pub scenario: Scenario,
    pub xi_clip: f64,
    pub curvature: CurvatureEstimate,
    pub f_star: f64,
    pub theta_star: ModelParams,
    pub rounds: Vec<RoundPercentiles>,
    /// `ψ` of the final estimate of every completed run, in seed order.
    pub terminal_psi: Vec<f64>,
    pub terminal_mean: f64,
    pub runs_completed: usize,
    pub runs_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub axis: String,
    pub mode: Mode,
    pub loss: LossKind,
    pub points: Vec<GridPointStats>,
}

/// Runs seeds `master_seed + i`, `i < R`, at one grid point.
pub fn run_grid_point(setup: &GridSetup, master_seed: u64, runs: usize) -> Result<Vec<Option<Vec<f64>>>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| setup.psi_series(master_seed.wrapping_add(i)))
        .collect()
}

/// Summarizes the `ψ` series of one grid point.
pub fn summarize(grid_value: f64, setup: &GridSetup, series: &[Option<Vec<f64>>]) -> Result<GridPointStats> {
    let completed: Vec<&Vec<f64>> = series.iter().flatten().collect();
    if completed.is_empty() {
        return Err(Error::Divergence { round: setup.train.rounds });
    }
    let horizon = completed[0].len();
    let rounds = (0..horizon)
        .map(|r| {
            let column: Vec<f64> = completed.iter().map(|s| s[r]).collect();
            Ok(RoundPercentiles {
                round: r + 1,
                p25: percentile(&column, 25.0)?,
                p50: percentile(&column, 50.0)?,
                p75: percentile(&column, 75.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let terminal_psi: Vec<f64> = completed.iter().map(|s| s[horizon - 1]).collect();
    let terminal_mean = terminal_psi.iter().sum::<f64>() / terminal_psi.len() as f64;
    Ok(GridPointStats {
        grid_value,
        scenario: setup.scenario.clone(),
        xi_clip: setup.loss.xi_clip,
        curvature: setup.curvature,
        f_star: setup.f_star,
        theta_star: setup.theta_star.clone(),
        rounds,
        runs_completed: completed.len(),
        runs_diverged: series.len() - completed.len(),
        terminal_psi,
        terminal_mean,
    })
}

/// Runs the full sweep. Deterministic in `cfg.master_seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunStatistics> {
    cfg.validate()?;
    let points = cfg
        .grid()
        .into_iter()
        .map(|(value, scenario)| {
            let setup = setup_grid_point(cfg, &scenario)?;
            let series = run_grid_point(&setup, cfg.master_seed, cfg.runs())?;
            summarize(value, &setup, &series)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunStatistics { axis: cfg.sweep.name().into(), mode: cfg.mode, loss: cfg.loss, points })
}

/// Linear interpolation between closest ranks at fractional index `q/100·(m−1)`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("percentile rank {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Least-squares slope of `log₁₀ y` against `log₁₀ x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("a slope needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all x values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Forecast for one grid point next to what was measured there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    #[serde(flatten)]
    pub forecast: ScenarioForecast,
    /// `fitness_bound / f*`, comparable to `ψ`.
    pub forecast_psi: f64,
    pub empirical_mean_psi: f64,
    pub empirical_gap: f64,
    pub runs_completed: usize,
    pub runs_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub axis: String,
    pub bound: BoundKind,
    /// Bound constant fitted so the first grid point's forecast matches its measurement.
    pub calibrated_constant: f64,
    pub points: Vec<ForecastRecord>,
}

/// Strongly convex bound for smooth, well-conditioned regression; the
/// averaged-subgradient bound otherwise.
pub fn forecaster_for(loss: LossKind, xi: f64, constant: f64, curvature: CurvatureEstimate) -> Forecaster {
    if loss == LossKind::LinearRegression && !curvature.rank_deficient && curvature.strong_convexity > 0.0 {
        Forecaster::strongly_convex(loss, xi, constant, curvature)
    } else {
        Forecaster::averaged(loss, xi, constant, Some(curvature))
    }
}

/// Forecasts every grid point with the constant calibrated on the first one.
pub fn forecast_report(stats: &RunStatistics) -> Result<ForecastReport> {
    let Some(first) = stats.points.first() else {
        return Ok(ForecastReport {
            axis: stats.axis.clone(),
            bound: BoundKind::Averaged,
            calibrated_constant: 1.0,
            points: Vec::new(),
        });
    };
    let unit = forecaster_for(stats.loss, first.xi_clip, 1.0, first.curvature);
    let unit_bound = unit.bound(first.scenario.n_total(), &first.scenario.budgets)?.fitness_gap_bound;
    let observed = first.terminal_mean * first.f_star;
    // Non-private grid points have a zero bound; fall back to the raw constant.
    let constant = if unit_bound > 0.0 && observed > 0.0 { observed / unit_bound } else { 1.0 };

    let points = stats
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let f = forecaster_for(stats.loss, p.xi_clip, constant, p.curvature);
            let id = p.scenario.id.clone().unwrap_or_else(|| format!("grid-{}", i + 1));
            let forecast = f.forecast(id, &p.scenario)?;
            Ok(ForecastRecord {
                forecast_psi: forecast.fitness_bound / p.f_star,
                forecast,
                empirical_mean_psi: p.terminal_mean,
                empirical_gap: p.terminal_mean * p.f_star,
                runs_completed: p.runs_completed,
                runs_diverged: p.runs_diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastReport { axis: stats.axis.clone(), bound: unit.kind, calibrated_constant: constant, points })
}

/// Slope reported in the summary: defined for ε and n sweeps with at least
/// two positive points.
pub fn summary_slope(stats: &RunStatistics) -> Option<f64> {
    if !matches!(stats.axis.as_str(), "epsilon" | "n") {
        return None;
    }
    let xs: Vec<f64> = stats.points.iter().map(|p| p.grid_value).collect();
    let ys: Vec<f64> = stats.points.iter().map(|p| p.terminal_mean).collect();
    loglog_slope(&xs, &ys).ok()
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

/// Writes `rounds_<i>.csv` per grid point, `summary.csv`, and `forecast.json`.
/// Returns the paths written.
pub fn emit_results(stats: &RunStatistics, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, p) in stats.points.iter().enumerate() {
        let mut body = String::from("round,p25,p50,p75\n");
        for r in &p.rounds {
            writeln!(body, "{},{},{},{}", r.round, r.p25, r.p50, r.p75).expect("writing to a String");
        }
        let path = dir.join(format!("rounds_{}.csv", i + 1));
        fs::write(&path, body)?;
        written.push(path);
    }

    let slope = summary_slope(stats).map(fmt_f64).unwrap_or_default();
    let mut summary = String::from("grid_value,mean_psi,fitted_slope\n");
    for p in &stats.points {
        writeln!(summary, "{},{},{}", fmt_f64(p.grid_value), p.terminal_mean, slope).expect("writing to a String");
    }
    let path = dir.join("summary.csv");
    fs::write(&path, summary)?;
    written.push(path);

    let path = dir.join("forecast.json");
    fs::write(&path, serde_json::to_string_pretty(&forecast_report(stats)?)? + "\n")?;
    written.push(path);
    Ok(written)
}

/// Writes `round,psi_theta,psi_theta_bar` for one run; the last column is
/// empty when the mode does not average.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    loss: &LossModel,
    datasets: &[Dataset],
    f_star: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (psi, psi_bar) = traj.relative_fitness(loss, datasets, f_star)?;
    let mut body = String::from("round,psi_theta,psi_theta_bar\n");
    for (i, v) in psi.iter().enumerate() {
        let bar = psi_bar.get(i).map(|b| b.to_string()).unwrap_or_default();
        writeln!(body, "{},{},{}", i + 1, v, bar).expect("writing to a String");
    }
    fs::write(path, body)?;
    Ok(())
}
