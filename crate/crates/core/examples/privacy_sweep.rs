//! Monte Carlo sweep over ε with per-round percentiles, a log-log slope, and
//! forecasts written next to the measurements.
//!
//! ```bash
//! cargo run --release --example privacy_sweep -- /tmp/sweep
//! ```

use privcollab::experiment::{emit_results, run_experiment, summary_slope, ExperimentConfig};

fn main() -> privcollab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "results/privacy_sweep".into());
    let mut cfg = ExperimentConfig::synthetic_epsilon_sweep(vec![2_000; 3], 3, 2024);
    cfg.fast = true;

    let stats = run_experiment(&cfg)?;
    for p in &stats.points {
        let last = p.rounds.last().expect("rounds are recorded");
        println!(
            "ε = {:>4}: E{{ψ(θ̄[T])}} = {:.3e}, median {:.3e} [{:.3e}, {:.3e}], diverged {}",
            p.grid_value, p.terminal_mean, last.p50, last.p25, last.p75, p.runs_diverged
        );
    }
    if let Some(slope) = summary_slope(&stats) {
        println!("log-log slope of E{{ψ}} against ε: {slope:.3}");
    }
    for path in emit_results(&stats, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
