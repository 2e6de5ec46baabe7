//! Ranking candidate collaborations before any data is exchanged.
//!
//! Adding a large owner helps only until the strictest partners dominate:
//! with two owners of 1 000 records at ε = 0.1, the averaged bound cannot
//! drop below √200 · Ξ/(2000 + n₁) however generous the new owner is.

use privcollab::mechanism::Epsilon;
use privcollab::model::LossKind;
use privcollab::predictor::{scenario_rank, Forecaster, Scenario};

fn main() -> privcollab::Result<()> {
    let forecaster = Forecaster::averaged(LossKind::LinearRegression, 1.0, 1.0, None);
    let scenario = |id: &str, sizes: Vec<usize>, eps: Vec<f64>| Scenario {
        id: Some(id.into()),
        sizes,
        budgets: eps.into_iter().map(Epsilon).collect(),
    };
    let candidates = vec![
        scenario("two strict banks", vec![1_000, 1_000], vec![0.1, 0.1]),
        scenario("+ big bank, ε = 1", vec![30_000, 1_000, 1_000], vec![1.0, 0.1, 0.1]),
        scenario("+ big bank, ε = ∞", vec![30_000, 1_000, 1_000], vec![f64::INFINITY, 0.1, 0.1]),
        scenario("big bank alone, ε = 1", vec![30_000], vec![1.0]),
        scenario("three mid banks, ε = 10", vec![10_000; 3], vec![10.0; 3]),
    ];
    for (rank, f) in scenario_rank(&candidates, &forecaster)?.iter().enumerate() {
        println!("{}. {:<26} n = {:>6}  bound = {:.3e}", rank + 1, f.scenario_id, f.n_total, f.fitness_bound);
    }

    println!("\nfloor from the strict partners as the big bank's ε grows (n₁ = 30 000):");
    for eps in [0.1, 1.0, 10.0, f64::INFINITY] {
        let s = scenario("", vec![30_000, 1_000, 1_000], vec![eps, 0.1, 0.1]);
        let b = forecaster.forecast(String::new(), &s)?.fitness_bound;
        println!("  ε₁ = {eps:>4}: {b:.4e}  (floor {:.4e})", 200f64.sqrt() / 32_000.0);
    }
    Ok(())
}
