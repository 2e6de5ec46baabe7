//! Owners served over TCP with newline-delimited JSON; the learner trains
//! through remote handles exactly as it would in-process.

use std::net::TcpListener;
use std::thread;

use privcollab::data::{partition, synth_instance};
use privcollab::federation::wire::{serve_owner, RemoteOwner};
use privcollab::federation::DataOwner;
use privcollab::mechanism::{Epsilon, NoiseStream};
use privcollab::model::{LossKind, LossModel, ModelParams};
use privcollab::training::{train, Mode, TrainConfig};

fn main() -> privcollab::Result<()> {
    let (pool, _) = synth_instance(LossKind::LinearRegression, 900, 2, 0.1, 3)?;
    let loss = LossModel::regression(6.0)?.with_theta_max(5.0)?;
    let horizon = 40;

    let mut remotes = Vec::new();
    let mut servers = Vec::new();
    for (id, (data, _)) in partition(&pool, &[300, 600])?.into_iter().enumerate() {
        let owner = DataOwner::new(id, data, loss, Epsilon(2.0), horizon, NoiseStream::for_owner(11, id as u64))?;
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let n = owner.dataset().len();
        servers.push(thread::spawn(move || serve_owner(owner, &listener)));
        println!("owner {id} listening on {addr}");
        remotes.push(RemoteOwner::connect(addr, id, n)?);
    }

    let mut cfg = TrainConfig::new(horizon, Mode::ProjectedAveraging, ModelParams::zeros(2));
    cfg.c1 = 0.5;
    let run = train(&loss, &mut remotes, &cfg)?;
    println!("θ̄[T] = {:.4?}", run.final_estimate().as_slice());

    // Closing the connections ends each server loop.
    drop(remotes);
    for s in servers {
        let owner = s.join().expect("owner thread panicked")?;
        println!("owner {} spent {} of {} rounds", owner.id(), owner.spent_rounds(), owner.horizon());
    }
    Ok(())
}
