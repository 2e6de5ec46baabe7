use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use privcollab::data::{prepare, PrepConfig};
use privcollab::experiment::{
    emit_results, forecaster_for, run_experiment, setup_grid_point, write_trajectory_csv, ExperimentConfig,
};
use privcollab::predictor::scenario_rank;
use privcollab::Result;

/// Private collaborative learning: train, sweep, forecast, and preprocess.
#[derive(Parser)]
#[command(name = "privcollab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One private training run at the configured sizes and budgets.
    Train(Common),
    /// Monte Carlo sweep; writes per-round CSVs, a summary, and forecasts.
    Sweep(Common),
    /// Rank the configured grid points by their utility bound.
    Forecast(Common),
    /// Encode, standardize, and project a CSV dataset.
    Prep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fewer Monte Carlo runs.
    #[arg(long)]
    fast: bool,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&self.config)?)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.fast |= self.fast;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn train(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.experiment()?;
    cfg.validate()?;
    let (_, scenario) = cfg.grid().into_iter().next().expect("validated grid is non-empty");
    let setup = setup_grid_point(&cfg, &scenario)?;
    let mut owners = setup.owners(cfg.master_seed)?;
    let traj = privcollab::training::train(&setup.loss, &mut owners, &setup.train)?;
    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir)?;
    write_trajectory_csv(&traj, &setup.loss, &setup.shards, setup.f_star, dir.join("trajectory.csv"))?;
    let estimate = traj.final_estimate();
    let psi = privcollab::model::relative_fitness(setup.loss.fitness(estimate, &setup.shards)?, setup.f_star)?;
    let result = json!({
        "theta": estimate,
        "theta_star": setup.theta_star,
        "psi": psi,
        "xi_clip": setup.loss.xi_clip,
        "spent_rounds": owners.iter().map(|o| o.spent_rounds()).collect::<Vec<_>>(),
    });
    write_json(&dir.join("result.json"), &result)?;
    Ok(result)
}

fn sweep(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.experiment()?;
    let stats = run_experiment(&cfg)?;
    let files = emit_results(&stats, out_dir(&cfg))?;
    Ok(json!({
        "files": files,
        "terminal_mean_psi": stats.points.iter().map(|p| p.terminal_mean).collect::<Vec<_>>(),
        "slope": privcollab::experiment::summary_slope(&stats),
    }))
}

fn forecast(args: &Common) -> Result<serde_json::Value> {
    let cfg = args.experiment()?;
    cfg.validate()?;
    let grid: Vec<_> = cfg.grid().into_iter().map(|(_, s)| s).collect();
    // Shared constants come from the largest grid point; unit bound constant.
    let largest = grid.iter().max_by_key(|s| s.n_total()).expect("validated grid is non-empty");
    let setup = setup_grid_point(&cfg, largest)?;
    let forecaster = forecaster_for(cfg.loss, setup.loss.xi_clip, 1.0, setup.curvature);
    let ranked = scenario_rank(&grid, &forecaster)?;
    let value = serde_json::to_value(&ranked)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("forecast.json"), &value)?;
    }
    Ok(value)
}

fn prep(args: &Common) -> Result<serde_json::Value> {
    let cfg: PrepConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    let prepared = prepare(&cfg)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("prepared"));
    prepared.write(&dir)?;
    Ok(json!({
        "records": prepared.dataset.len(),
        "features": prepared.dataset.feature_dim(),
        "out": dir,
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Forecast(a) => forecast(a),
        Command::Prep(a) => prep(a),
    };
    match result {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

