//! Private linear SVM (hinge loss, ½‖θ‖² regularizer) inside the box
//! ‖θ‖∞ ≤ θmax, with the decaying-step rule for comparison.

use privcollab::data::{partition, synth_instance};
use privcollab::federation::DataOwner;
use privcollab::mechanism::{Epsilon, NoiseStream};
use privcollab::model::{Dataset, LossKind, LossModel, ModelParams};
use privcollab::training::{nonprivate_train, train, Mode, TrainConfig};

fn accuracy(loss: &LossModel, theta: &ModelParams, data: &Dataset) -> f64 {
    let hits = data.records().iter().filter(|r| loss.predict(theta, &r.x).unwrap().signum() == r.y).count();
    hits as f64 / data.len() as f64
}

fn main() -> privcollab::Result<()> {
    let (pool, _) = synth_instance(LossKind::LinearSvm, 4_000, 4, 0.0, 5)?;
    let shards: Vec<Dataset> = partition(&pool, &[1_000, 3_000])?.into_iter().map(|(d, _)| d).collect();
    let zero = ModelParams::zeros(5);
    let xi = LossModel::calibrate_xi_clip(LossKind::LinearSvm, &shards, &zero, 1.0)?;
    let loss = LossModel::svm(2.0, xi)?;

    let mut reference = TrainConfig::new(2, Mode::ConstantStep, zero.clone());
    reference.const_step = 0.05;
    reference.max_iters = 5_000;
    let theta_star = nonprivate_train(&loss, &shards, &reference)?;
    println!("non-private: f = {:.4}, accuracy {:.3}", loss.fitness(&theta_star, &shards)?, accuracy(&loss, &theta_star, &pool));

    for (mode, name) in [(Mode::ProjectedAveraging, "projected averaging"), (Mode::DecayingStep, "decaying step")] {
        let mut owners = shards
            .iter()
            .enumerate()
            .map(|(id, d)| DataOwner::new(id, d.clone(), loss, Epsilon(5.0), 200, NoiseStream::for_owner(9, id as u64)))
            .collect::<privcollab::Result<Vec<_>>>()?;
        let mut cfg = TrainConfig::new(200, mode, zero.clone());
        cfg.c1 = 0.5;
        cfg.rho = 200.0 * 200.0;
        let run = train(&loss, &mut owners, &cfg)?;
        let est = run.final_estimate();
        println!("{name:>20}: f = {:.4}, accuracy {:.3}", loss.fitness(est, &shards)?, accuracy(&loss, est, &pool));
    }
    Ok(())
}
