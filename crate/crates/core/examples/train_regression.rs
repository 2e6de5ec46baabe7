//! Private linear regression over three owners, compared with the
//! non-private optimum through the relative fitness ψ = f(θ)/f(θ*) − 1.

use privcollab::data::{partition, synth_instance};
use privcollab::federation::DataOwner;
use privcollab::mechanism::{Epsilon, NoiseStream};
use privcollab::model::{relative_fitness, Dataset, LossKind, LossModel, ModelParams};
use privcollab::predictor::estimate_curvature;
use privcollab::training::{closed_form_regression, train_projected_averaging, TrainConfig, Mode};

fn main() -> privcollab::Result<()> {
    let (pool, theta_gen) = synth_instance(LossKind::LinearRegression, 6_000, 3, 0.1, 2024)?;
    let shards: Vec<Dataset> = partition(&pool, &[2_000; 3])?.into_iter().map(|(d, _)| d).collect();

    let zero = ModelParams::zeros(3);
    let xi = LossModel::calibrate_xi_clip(LossKind::LinearRegression, &shards, &zero, 1.5)?;
    let loss = LossModel::regression(xi)?.with_theta_max(10.0)?;
    let curvature = estimate_curvature(&loss, &shards)?;
    let theta_star = closed_form_regression(&shards, 0.0)?;
    let f_star = loss.fitness(&theta_star, &shards)?;
    println!("θ_gen = {:.3?}\nθ*    = {:.3?}", theta_gen.as_slice(), theta_star.as_slice());

    for eps in [0.1, 1.0, 10.0] {
        let mut owners = shards
            .iter()
            .enumerate()
            .map(|(id, d)| DataOwner::new(id, d.clone(), loss, Epsilon(eps), 100, NoiseStream::for_owner(1, id as u64)))
            .collect::<privcollab::Result<Vec<_>>>()?;
        let mut cfg = TrainConfig::new(100, Mode::ProjectedAveraging, zero.clone());
        cfg.c1 = 1.0 / (curvature.lipschitz + 1.0);
        let run = train_projected_averaging(&loss, &mut owners, &cfg)?;
        let psi = relative_fitness(loss.fitness(run.final_estimate(), &shards)?, f_star)?;
        println!("ε = {eps:>4}: θ̄[T] = {:.3?}, ψ = {psi:.3e}", run.final_estimate().as_slice());
    }
    Ok(())
}
