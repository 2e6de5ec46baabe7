//! Calibrating and sampling the noise an owner adds to its answers.
//!
//! An owner with 5 000 records, clip bound Ξ = 2, horizon T = 100 and budget
//! ε = 1 answers every query with Laplace noise of scale 2ΞT/(nε).

use privcollab::mechanism::{l1_sensitivity_bound, noise_scale, privatize, Epsilon, NoiseSpec, NoiseStream};

fn main() -> privcollab::Result<()> {
    let (xi, horizon, n) = (2.0, 100, 5_000);

    println!("per-query L1 sensitivity: {}", l1_sensitivity_bound(xi, n)?);
    for eps in [Epsilon(0.1), Epsilon(1.0), Epsilon(10.0), Epsilon::INFINITE] {
        println!("ε = {eps:>4}: b = {}", noise_scale(xi, horizon, n, eps)?);
    }

    let spec = NoiseSpec::calibrated(xi, horizon, n, Epsilon(1.0), 3)?;
    let mut stream = NoiseStream::for_owner(42, 0);
    let exact = [0.25, -1.0, 0.5];
    for round in 1..=3 {
        println!("round {round}: {:?}", privatize(&exact, &spec, &mut stream)?);
    }

    let draws: Vec<f64> = (0..200_000).map(|_| stream.laplace(spec.scale_b)).collect();
    let var = draws.iter().map(|w| w * w).sum::<f64>() / draws.len() as f64;
    println!("empirical variance {var:.3e}, expected 2b² = {:.3e}", 2.0 * spec.scale_b.powi(2));
    Ok(())
}
