//! The learner/owner round protocol on a star topology.
//!
//! The learner broadcasts a [`GradientQuery`] to every owner, each owner
//! answers with one privatized [`QueryResponse`], and the learner combines
//! them with weights `nℓ/n`. Rounds are a synchronous barrier: either every
//! owner answers or the round fails.
//!
//! Owners are reached through [`OwnerEndpoint`]. [`DataOwner`] answers
//! in-process; [`wire::RemoteOwner`] speaks newline-delimited JSON over TCP
//! to an owner served by [`wire::serve_owner`].

mod owner;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::model::ModelParams;

pub use owner::{check_disjoint, DataOwner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientQuery {
    pub round: usize,
    pub theta: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub round: usize,
    pub q_bar: Vec<f64>,
    /// Responding owner's record count, used as the aggregation weight.
    pub n: usize,
}

/// Anything the learner can send a gradient query to.
pub trait OwnerEndpoint {
    fn owner_id(&self) -> usize;

    /// Declared dataset size of the owner.
    fn record_count(&self) -> usize;

    /// Fails if the owner cannot answer `round`. Called for every owner before
    /// any of them is queried, so that a failing round charges nobody.
    fn precheck(&self, _round: usize) -> Result<()> {
        Ok(())
    }

    fn answer(&mut self, query: &GradientQuery) -> Result<QueryResponse>;
}

/// `Σ (nℓ / n_total) q̄ℓ`.
pub fn aggregate_responses(responses: &[QueryResponse], n_total: usize) -> Result<Vec<f64>> {
    let first = responses.first().ok_or(Error::MissingResponse { owner: 0 })?;
    let dim = first.q_bar.len();
    let mut weight_sum = 0usize;
    for r in responses {
        if r.round != first.round {
            return Err(Error::MixedRounds);
        }
        ensure_dim(dim, r.q_bar.len())?;
        weight_sum += r.n;
    }
    if weight_sum != n_total || n_total == 0 {
        return Err(Error::WeightMismatch { expected: n_total, found: weight_sum });
    }
    let mut out = vec![0.0; dim];
    for r in responses {
        let w = r.n as f64 / n_total as f64;
        out.iter_mut().zip(&r.q_bar).for_each(|(o, q)| *o += w * q);
    }
    Ok(out)
}

/// Broadcasts the round-`round` query at `theta` to every owner and returns
/// the weighted aggregate of their responses.
pub fn run_round<E: OwnerEndpoint>(theta: &ModelParams, owners: &mut [E], round: usize) -> Result<Vec<f64>> {
    if owners.is_empty() {
        return Err(Error::InvalidParameter("a round needs at least one owner".into()));
    }
    for o in owners.iter() {
        o.precheck(round)?;
    }
    let n_total: usize = owners.iter().map(|o| o.record_count()).sum();
    let query = GradientQuery { round, theta: theta.clone() };
    let mut responses = Vec::with_capacity(owners.len());
    for o in owners.iter_mut() {
        let resp = o.answer(&query)?;
        if resp.round != round {
            return Err(Error::MixedRounds);
        }
        if resp.n != o.record_count() {
            return Err(Error::WeightMismatch { expected: o.record_count(), found: resp.n });
        }
        ensure_dim(theta.len(), resp.q_bar.len())?;
        responses.push(resp);
    }
    aggregate_responses(&responses, n_total)
}
