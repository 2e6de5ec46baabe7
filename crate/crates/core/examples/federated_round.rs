//! One round of the protocol, step by step: broadcast θ, collect each owner's
//! privatized mean subgradient, combine with weights nℓ/n.

use privcollab::data::{partition, synth_instance};
use privcollab::federation::{aggregate_responses, DataOwner, GradientQuery};
use privcollab::mechanism::{Epsilon, NoiseStream};
use privcollab::model::{LossKind, LossModel, ModelParams};

fn main() -> privcollab::Result<()> {
    let (pool, _) = synth_instance(LossKind::LinearRegression, 1_000, 2, 0.1, 1)?;
    let loss = LossModel::regression(5.0)?;
    let budgets = [Epsilon(0.5), Epsilon(2.0), Epsilon::INFINITE];
    let mut owners = partition(&pool, &[200, 300, 500])?
        .into_iter()
        .zip(budgets)
        .enumerate()
        .map(|(id, ((data, range), eps))| {
            Ok(DataOwner::new(id, data, loss, eps, 10, NoiseStream::for_owner(7, id as u64))?.with_source_range(range))
        })
        .collect::<privcollab::Result<Vec<_>>>()?;
    privcollab::federation::check_disjoint(&owners)?;

    let query = GradientQuery { round: 1, theta: ModelParams::new(vec![0.3, -0.2])? };
    let mut responses = Vec::new();
    for owner in &mut owners {
        let exact = owner.compute_query(&query.theta)?;
        let resp = owner.respond(&query)?;
        println!(
            "owner {} (n = {}, ε = {}): exact {exact:.4?}, sent {:.4?}",
            owner.id(),
            resp.n,
            owner.budget().epsilon,
            resp.q_bar
        );
        responses.push(resp);
    }
    let n: usize = owners.iter().map(|o| o.dataset().len()).sum();
    println!("aggregate: {:.4?}", aggregate_responses(&responses, n)?);
    println!("exact pooled gradient: {:.4?}", loss.fitness_subgradient(&query.theta, &[pool])?);
    Ok(())
}
