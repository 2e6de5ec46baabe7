use std::ops::Range;

use crate::error::{ensure_dim, Error, Result};
use crate::mechanism::{privatize, Epsilon, NoiseSpec, NoiseStream, PrivacyBudget};
use crate::model::{Dataset, LossModel, ModelParams};

use super::{GradientQuery, OwnerEndpoint, QueryResponse};

/// A data owner holding a private shard and answering gradient queries with
/// Laplace-perturbed responses.
#[derive(Debug, Clone)]
pub struct DataOwner {
    id: usize,
    dataset: Dataset,
    loss: LossModel,
    budget: PrivacyBudget,
    horizon: usize,
    stream: NoiseStream,
    source_range: Option<Range<usize>>,
}

impl DataOwner {
    pub fn new(
        id: usize,
        dataset: Dataset,
        loss: LossModel,
        epsilon: Epsilon,
        horizon: usize,
        stream: NoiseStream,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        loss.validate(&dataset)?;
        Ok(Self {
            id,
            dataset,
            loss,
            budget: PrivacyBudget::new(epsilon),
            horizon,
            stream,
            source_range: None,
        })
    }

    /// Records the half-open index range of the source table this shard was cut from.
    pub fn with_source_range(mut self, range: Range<usize>) -> Self {
        self.source_range = Some(range);
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn loss(&self) -> &LossModel {
        &self.loss
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn spent_rounds(&self) -> usize {
        self.budget.spent_rounds
    }

    pub fn source_range(&self) -> Option<&Range<usize>> {
        self.source_range.as_ref()
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let dim = self.loss.param_dim(self.dataset.feature_dim());
        NoiseSpec::calibrated(self.loss.xi_clip, self.horizon, self.dataset.len(), self.budget.epsilon, dim)
    }

    /// Exact mean of clipped per-record subgradients at `theta`.
    pub fn compute_query(&self, theta: &ModelParams) -> Result<Vec<f64>> {
        let dim = self.loss.param_dim(self.dataset.feature_dim());
        ensure_dim(dim, theta.len())?;
        let mut acc = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        for r in self.dataset.records() {
            self.loss.accumulate_clipped(theta.as_slice(), r, &mut scratch, &mut acc);
        }
        let n = self.dataset.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Checks that `round` is the next query this owner may answer.
    pub fn check_round(&self, round: usize) -> Result<()> {
        if self.budget.spent_rounds >= self.horizon {
            return Err(Error::BudgetExhausted { owner: self.id, round, horizon: self.horizon });
        }
        let expected = self.budget.spent_rounds + 1;
        if round != expected {
            return Err(Error::BadRound { owner: self.id, expected, found: round });
        }
        Ok(())
    }

    /// Answers a query with a privatized response and charges one round.
    pub fn respond(&mut self, query: &GradientQuery) -> Result<QueryResponse> {
        self.check_round(query.round)?;
        let exact = self.compute_query(&query.theta)?;
        let noisy = privatize(&exact, &self.noise_spec()?, &mut self.stream)?;
        self.budget.spent_rounds += 1;
        Ok(QueryResponse { round: query.round, q_bar: noisy, n: self.dataset.len() })
    }
}

impl OwnerEndpoint for DataOwner {
    fn owner_id(&self) -> usize {
        self.id
    }

    fn record_count(&self) -> usize {
        self.dataset.len()
    }

    fn precheck(&self, round: usize) -> Result<()> {
        self.check_round(round)
    }

    fn answer(&mut self, query: &GradientQuery) -> Result<QueryResponse> {
        self.respond(query)
    }
}

/// Rejects owner sets whose declared source ranges intersect.
pub fn check_disjoint(owners: &[DataOwner]) -> Result<()> {
    let ranges: Vec<(usize, &Range<usize>)> =
        owners.iter().filter_map(|o| o.source_range().map(|r| (o.id(), r))).collect();
    for (i, (a_id, a)) in ranges.iter().enumerate() {
        for (b_id, b) in &ranges[i + 1..] {
            if a.start < b.end && b.start < a.end {
                return Err(Error::OverlappingPartitions { first: *a_id, second: *b_id });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Record;

    fn scalar_owner(eps: Epsilon, horizon: usize) -> DataOwner {
        let d = Dataset::new(vec![Record::new(vec![1.0], 1.0), Record::new(vec![1.0], 3.0)]).unwrap();
        DataOwner::new(0, d, LossModel::regression(100.0).unwrap(), eps, horizon, NoiseStream::from_seed(5))
            .unwrap()
    }

    fn query(round: usize, theta: &[f64]) -> GradientQuery {
        GradientQuery { round, theta: ModelParams::new(theta.to_vec()).unwrap() }
    }

    #[test]
    fn query_is_mean_clipped_gradient() {
        let owner = scalar_owner(Epsilon::INFINITE, 3);
        assert_eq!(owner.compute_query(&ModelParams::zeros(1)).unwrap(), vec![-4.0]);
    }

    #[test]
    fn query_zero_when_interpolating() {
        let d = Dataset::new(vec![Record::new(vec![1.0, 0.0], 2.0), Record::new(vec![0.0, 1.0], -1.0)]).unwrap();
        let owner = DataOwner::new(
            0,
            d,
            LossModel::regression(10.0).unwrap(),
            Epsilon(1.0),
            1,
            NoiseStream::from_seed(0),
        )
        .unwrap();
        assert_eq!(owner.compute_query(&ModelParams::new(vec![2.0, -1.0]).unwrap()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_record_query_equals_its_clipped_subgradient() {
        let r = Record::new(vec![2.0, -1.0], 4.0);
        let loss = LossModel::regression(3.0).unwrap();
        let d = Dataset::new(vec![r.clone()]).unwrap();
        let owner = DataOwner::new(0, d, loss, Epsilon(1.0), 1, NoiseStream::from_seed(0)).unwrap();
        let theta = ModelParams::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(owner.compute_query(&theta).unwrap(), loss.per_sample_subgradient(&theta, &r).unwrap());
    }

    #[test]
    fn infinite_budget_answers_exactly() {
        let mut owner = scalar_owner(Epsilon::INFINITE, 3);
        let resp = owner.respond(&query(1, &[0.0])).unwrap();
        assert_eq!(resp.q_bar, vec![-4.0]);
        assert_eq!(resp.n, 2);
        assert_eq!(owner.spent_rounds(), 1);
    }

    #[test]
    fn budget_exhausts_after_horizon() {
        let mut owner = scalar_owner(Epsilon(1.0), 2);
        owner.respond(&query(1, &[0.0])).unwrap();
        owner.respond(&query(2, &[0.0])).unwrap();
        let err = owner.respond(&query(3, &[0.0])).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { round: 3, horizon: 2, .. }));
        assert_eq!(owner.spent_rounds(), 2);
    }

    #[test]
    fn out_of_order_round_rejected() {
        let mut owner = scalar_owner(Epsilon(1.0), 5);
        let err = owner.respond(&query(2, &[0.0])).unwrap_err();
        assert!(matches!(err, Error::BadRound { expected: 1, found: 2, .. }));
        assert_eq!(owner.spent_rounds(), 0);
    }

    #[test]
    fn responses_are_deterministic() {
        let mut a = scalar_owner(Epsilon(0.5), 4);
        let mut b = scalar_owner(Epsilon(0.5), 4);
        for k in 1..=4 {
            let q = query(k, &[0.25]);
            assert_eq!(a.respond(&q).unwrap().q_bar, b.respond(&q).unwrap().q_bar);
        }
    }

    #[test]
    fn fresh_noise_every_round() {
        let mut owner = scalar_owner(Epsilon(1.0), 3);
        let r1 = owner.respond(&query(1, &[0.0])).unwrap();
        let r2 = owner.respond(&query(2, &[0.0])).unwrap();
        assert_ne!(r1.q_bar, r2.q_bar);
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let a = scalar_owner(Epsilon(1.0), 1).with_source_range(0..10);
        let mut b = scalar_owner(Epsilon(1.0), 1).with_source_range(10..20);
        b.id = 1;
        assert!(check_disjoint(&[a.clone(), b]).is_ok());
        let mut c = scalar_owner(Epsilon(1.0), 1).with_source_range(5..12);
        c.id = 2;
        assert!(matches!(
            check_disjoint(&[a, c]),
            Err(Error::OverlappingPartitions { first: 0, second: 2 })
        ));
    }
}
