use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privcollab::data::{encode_categoricals, partition, pca_fit, synth_instance, RawTable};
use privcollab::experiment::{percentile, setup_grid_point, ExperimentConfig, Sweep};
use privcollab::federation::{run_round, DataOwner};
use privcollab::linalg::{dot, norm1, norm2, Matrix};
use privcollab::mechanism::{aggregate_noise_variance, Epsilon, NoiseStream};
use privcollab::model::{clip_l1, project_box, Dataset, FitnessAccumulator, LossKind, LossModel, ModelParams, Record};
use privcollab::predictor::{averaged_subgradient_bounds, eigen_extremes, estimate_curvature, strongly_convex_bounds};
use privcollab::training::{average_weights, train, Mode, TrainConfig};

fn vec_strategy(dim: usize, half_width: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-half_width..half_width, dim)
}

fn records_strategy(p: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Record>> {
    prop::collection::vec((vec_strategy(p, 3.0), -5.0..5.0f64), n)
        .prop_map(|rows| rows.into_iter().map(|(x, y)| Record::new(x, y)).collect())
}

fn svm_records(p: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Record>> {
    prop::collection::vec((vec_strategy(p, 3.0), any::<bool>()), n)
        .prop_map(|rows| rows.into_iter().map(|(x, s)| Record::new(x, if s { 1.0 } else { -1.0 })).collect())
}

proptest! {
    #[test]
    fn clip_respects_the_l1_ball(v in vec_strategy(6, 100.0), xi in 0.01..50.0f64) {
        let clipped = clip_l1(v.clone(), xi);
        prop_assert!(norm1(&clipped) <= xi * (1.0 + 1e-12));
        if norm1(&v) <= xi {
            prop_assert_eq!(clipped, v);
        }
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(a in vec_strategy(5, 30.0), b in vec_strategy(5, 30.0), r in 0.1..20.0f64) {
        let (a, b) = (ModelParams::new(a).unwrap(), ModelParams::new(b).unwrap());
        let pa = project_box(&a, r);
        prop_assert_eq!(project_box(&pa, r), pa.clone());
        let pb = project_box(&b, r);
        let d = |x: &ModelParams, y: &ModelParams| {
            norm2(&x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p - q).collect::<Vec<_>>())
        };
        prop_assert!(d(&pa, &pb) <= d(&a, &b) * (1.0 + 1e-12));
    }

    #[test]
    fn streaming_fitness_matches_batch(records in svm_records(3, 1..60), theta in vec_strategy(4, 2.0)) {
        let loss = LossModel::svm(10.0, 5.0).unwrap();
        let theta = ModelParams::new(theta).unwrap();
        let d = Dataset::new(records).unwrap();
        let batch = loss.fitness(&theta, &[d.clone()]).unwrap();
        let mut acc = FitnessAccumulator::new(loss, theta);
        for r in d.records() {
            acc.push(r).unwrap();
        }
        let streamed = acc.finish().unwrap();
        prop_assert!((streamed - batch).abs() <= 1e-12 * batch.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn subgradients_certify_convexity(
        x in vec_strategy(3, 3.0), y in -5.0..5.0f64, label in any::<bool>(),
        theta in vec_strategy(4, 3.0), z in vec_strategy(4, 3.0), on_kink in any::<bool>(),
    ) {
        let reg = LossModel::regression(f64::MAX).unwrap();
        let svm = LossModel::svm(f64::INFINITY, f64::MAX).unwrap();
        let label = if label { 1.0 } else { -1.0 };
        let mut theta_svm = theta.clone();
        if on_kink {
            theta_svm[3] = label - dot(&theta_svm[..3], &x);
        }
        let cases = [
            (reg, ModelParams::new(theta[..3].to_vec()).unwrap(), ModelParams::new(z[..3].to_vec()).unwrap(), Record::new(x.clone(), y)),
            (svm, ModelParams::new(theta_svm).unwrap(), ModelParams::new(z.clone()).unwrap(), Record::new(x.clone(), label)),
        ];
        for (loss, th, other, r) in cases {
            let g = loss.raw_subgradient(&th, &r).unwrap();
            let step: Vec<f64> = other.as_slice().iter().zip(th.as_slice()).map(|(a, b)| a - b).collect();
            let rhs = loss.sample_loss(&th, &r).unwrap() + dot(&g, &step);
            prop_assert!(loss.sample_loss(&other, &r).unwrap() >= rhs - 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn averaging_weights_sum_to_one(k in 1usize..10_000, horizon in 1usize..100_000) {
        let (keep, take) = average_weights(k, horizon);
        prop_assert!((keep + take - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bounds_are_monotone(
        eps in prop::collection::vec(0.01..100.0f64, 1..5), bump in 1.0..10.0f64, idx in 0usize..5,
        n in 1usize..100_000, extra in 1usize..1000,
    ) {
        let e: Vec<Epsilon> = eps.iter().map(|&v| Epsilon(v)).collect();
        let mut raised = e.clone();
        let i = idx % e.len();
        raised[i] = Epsilon(e[i].0 * bump);
        let sc = |n, e: &[Epsilon]| strongly_convex_bounds(1.0, 1.0, 0.5, n, e, 0.0).unwrap().fitness_gap_bound;
        let av = |n, e: &[Epsilon]| averaged_subgradient_bounds(1.0, 1.0, Some(0.5), n, e).unwrap().fitness_gap_bound;
        prop_assert!(sc(n, &raised) <= sc(n, &e));
        prop_assert!(av(n, &raised) <= av(n, &e));
        prop_assert!(sc(n + extra, &e) <= sc(n, &e));
        prop_assert!(av(n + extra, &e) <= av(n, &e));
    }

    #[test]
    fn bound_ratio_laws(eps in prop::collection::vec(0.01..100.0f64, 1..5), n in 1usize..100_000, xi in 0.1..10.0f64) {
        let e: Vec<Epsilon> = eps.iter().map(|&v| Epsilon(v)).collect();
        let sc = |n| strongly_convex_bounds(xi, 2.0, 0.5, n, &e, 0.0).unwrap().fitness_gap_bound;
        let av = |n| averaged_subgradient_bounds(xi, 2.0, None, n, &e).unwrap().fitness_gap_bound;
        prop_assert!((sc(n) / sc(10 * n) - 100.0).abs() <= 1e-10);
        prop_assert!((av(n) / av(10 * n) - 10.0).abs() <= 1e-11);
    }

    #[test]
    fn percentiles_are_ordered(values in prop::collection::vec(-1e6..1e6f64, 1..200)) {
        let p25 = percentile(&values, 25.0).unwrap();
        let p50 = percentile(&values, 50.0).unwrap();
        let p75 = percentile(&values, 75.0).unwrap();
        prop_assert!(p25 <= p50 && p50 <= p75);
    }

    #[test]
    fn shards_are_an_ordered_disjoint_prefix(records in records_strategy(2, 1..80), cuts in prop::collection::vec(1usize..20, 1..5)) {
        let d = Dataset::new(records).unwrap();
        match partition(&d, &cuts) {
            Ok(shards) => {
                let mut next = 0;
                let mut joined = Vec::new();
                for (shard, range) in &shards {
                    prop_assert_eq!(range.start, next);
                    next = range.end;
                    joined.extend_from_slice(shard.records());
                }
                prop_assert_eq!(&joined[..], &d.records()[..next]);
            }
            Err(_) => prop_assert!(cuts.iter().sum::<usize>() > d.len()),
        }
    }

    #[test]
    fn categorical_codes_are_a_bijection(values in prop::collection::vec("[a-e]{1,2}", 1..50)) {
        let table = RawTable::new(vec!["c".into()], values.iter().map(|v| vec![v.clone()]).collect()).unwrap();
        let encoded = encode_categoricals(table, &["c"]).unwrap();
        let codes: Vec<usize> = encoded.rows.iter().map(|r| r[0].parse().unwrap()).collect();
        let distinct: std::collections::BTreeSet<&String> = values.iter().collect();
        let used: std::collections::BTreeSet<usize> = codes.iter().copied().collect();
        prop_assert_eq!(used, (0..distinct.len()).collect());
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                prop_assert_eq!(a == b, codes[i] == codes[j]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pca_basis_is_orthonormal_and_lossless(records in records_strategy(4, 6..40)) {
        let d = Dataset::new(records).unwrap();
        let basis = pca_fit(&d, 4, 0..d.len()).unwrap();
        for (i, u) in basis.vectors.iter().enumerate() {
            for (j, v) in basis.vectors.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(u, v) - expected).abs() <= 1e-8);
            }
        }
        prop_assert!(basis.values.windows(2).all(|w| w[0] >= w[1]) && basis.values.iter().all(|v| *v >= 0.0));
        for r in d.records() {
            let back = basis.reconstruct(&basis.project(&r.x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&r.x) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn noiseless_aggregate_is_the_pooled_gradient(
        a in svm_records(2, 1..30), b in svm_records(2, 1..30), c in svm_records(2, 1..30), theta in vec_strategy(3, 2.0),
    ) {
        let loss = LossModel::svm(10.0, f64::MAX).unwrap();
        let theta = ModelParams::new(theta).unwrap();
        let shards: Vec<Dataset> = [a, b, c].into_iter().map(|r| Dataset::new(r).unwrap()).collect();
        let mut owners: Vec<DataOwner> = shards
            .iter()
            .enumerate()
            .map(|(id, d)| DataOwner::new(id, d.clone(), loss, Epsilon::INFINITE, 1, NoiseStream::for_owner(0, id as u64)).unwrap())
            .collect();
        let agg = run_round(&theta, &mut owners, 1).unwrap();
        let with_reg: Vec<f64> = agg.iter().zip(loss.regularizer_subgradient(&theta)).map(|(a, r)| a + r).collect();
        let pooled = loss.fitness_subgradient(&theta, &shards).unwrap();
        let scale = norm2(&pooled).max(1.0);
        for (u, v) in with_reg.iter().zip(&pooled) {
            prop_assert!((u - v).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn averaged_iterates_stay_in_the_box(seed in any::<u64>(), eps in 0.05..5.0f64, radius in 0.5..3.0f64) {
        let (pool, _) = synth_instance(LossKind::LinearRegression, 60, 2, 0.3, seed).unwrap();
        let loss = LossModel::regression(4.0).unwrap().with_theta_max(radius).unwrap();
        let mut owners = vec![DataOwner::new(0, pool, loss, Epsilon(eps), 40, NoiseStream::from_seed(seed)).unwrap()];
        let cfg = TrainConfig { c1: 2.0, ..TrainConfig::new(40, Mode::ProjectedAveraging, ModelParams::zeros(2)) };
        let run = train(&loss, &mut owners, &cfg).unwrap();
        for th in run.theta.iter().chain(&run.theta_bar) {
            prop_assert!(th.as_slice().iter().all(|v| v.abs() <= radius));
        }
    }

    #[test]
    fn curvature_is_ordered(records in records_strategy(3, 4..40)) {
        let d = Dataset::new(records).unwrap();
        let c = estimate_curvature(&LossModel::regression(1.0).unwrap(), &[d]).unwrap();
        prop_assert!(c.strong_convexity <= c.lipschitz);
    }
}

/// Determinant by elimination; no pivot threshold, so exact zeros stay zero.
fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

/// All eigenvalues of a symmetric PSD matrix as roots of `det(A − tI)` on
/// `[−1e-9, trace]`, by scanning for sign changes and bisecting.
fn characteristic_roots(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let shifted = |t: f64| {
        let mut m = a.to_vec();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] -= t;
        }
        det(m)
    };
    let trace: f64 = (0..n).map(|i| a[i][i]).sum();
    let steps = 200_000;
    let (lo, hi) = (-1e-9, trace + 1e-9);
    let mut roots = Vec::new();
    let mut prev = (lo, shifted(lo));
    for s in 1..=steps {
        let t = lo + (hi - lo) * s as f64 / steps as f64;
        let v = shifted(t);
        if v == 0.0 || v.signum() != prev.1.signum() {
            let (mut l, mut r, fl) = (prev.0, t, prev.1);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                let fm = shifted(m);
                if fm.signum() == fl.signum() {
                    l = m;
                } else {
                    r = m;
                }
            }
            roots.push(0.5 * (l + r));
        }
        prev = (t, v);
    }
    roots
}

#[test]
fn power_iteration_matches_characteristic_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..10 {
        let vectors: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let gram = Matrix::gram(5, vectors.iter().map(Vec::as_slice), 1.0 / 8.0);
        let dense: Vec<Vec<f64>> = (0..5).map(|i| gram.row(i).to_vec()).collect();
        let roots = characteristic_roots(&dense);
        assert_eq!(roots.len(), 5, "{roots:?}");
        assert!((roots.iter().sum::<f64>() - gram.trace()).abs() < 1e-6);
        let (low, high) = eigen_extremes(&gram);
        assert!((high - roots[4]).abs() < 1e-6, "{high} vs {roots:?}");
        assert!((low - roots[0]).abs() < 1e-6, "{low} vs {roots:?}");
    }
}

// Kolmogorov–Smirnov distance of 10⁵ draws from the Laplace CDF.
#[test]
fn sampler_passes_ks_at_1e5() {
    let b = 1.3;
    let mut stream = NoiseStream::from_seed(404);
    let mut draws: Vec<f64> = (0..100_000).map(|_| stream.laplace(b)).collect();
    draws.sort_by(f64::total_cmp);
    let m = draws.len() as f64;
    let cdf = |x: f64| if x < 0.0 { 0.5 * (x / b).exp() } else { 1.0 - 0.5 * (-x / b).exp() };
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| (cdf(x) - i as f64 / m).abs().max(((i + 1) as f64 / m - cdf(x)).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / m.sqrt(), "ks = {ks}");
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

// Every seed in a fixed range, not a single hand-picked one: each pair must
// stay within ±0.01 and the spread must match the 1/√m law of independence.
#[test]
fn owner_streams_are_uncorrelated() {
    let m = 100_000;
    let rs: Vec<f64> = (0..20u64)
        .map(|seed| {
            let mut a = NoiseStream::for_owner(seed, 0);
            let mut b = NoiseStream::for_owner(seed, 1);
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..m).map(|_| (a.laplace(1.0), b.laplace(1.0))).unzip();
            correlation(&xs, &ys)
        })
        .collect();
    assert!(rs.iter().all(|r| r.abs() <= 0.01), "{rs:?}");
    let rms = (rs.iter().map(|r| r * r).sum::<f64>() / rs.len() as f64).sqrt();
    assert!(rms <= 1.5 / (m as f64).sqrt(), "rms correlation {rms}");
}

#[test]
fn aggregate_noise_variance_matches_closed_form() {
    let owners = [(100usize, 0.5), (300, 0.2), (600, 0.05)];
    let n: usize = owners.iter().map(|o| o.0).sum();
    let dim = 3;
    let mut streams: Vec<NoiseStream> = (0..owners.len()).map(|i| NoiseStream::for_owner(31, i as u64)).collect();
    let samples = 100_000;
    let mut total = 0.0;
    for _ in 0..samples {
        let mut w = vec![0.0; dim];
        for ((n_l, b), s) in owners.iter().zip(streams.iter_mut()) {
            for wi in w.iter_mut() {
                *wi += *n_l as f64 / n as f64 * s.laplace(*b);
            }
        }
        total += dot(&w, &w);
    }
    let empirical = total / samples as f64;
    let expected = dim as f64 * aggregate_noise_variance(&owners);
    assert!((empirical - expected).abs() / expected < 0.05, "{empirical} vs {expected}");
}

#[test]
fn changing_one_seed_changes_only_that_run() {
    let mut cfg = ExperimentConfig::synthetic_epsilon_sweep(vec![60, 60], 2, 3);
    cfg.rounds = 15;
    cfg.sweep = Sweep::None;
    let setup = setup_grid_point(&cfg, &cfg.grid()[0].1).unwrap();
    let seeds = [10u64, 11, 12];
    let altered = [10u64, 999, 12];
    let a: Vec<_> = seeds.iter().map(|&s| setup.psi_series(s).unwrap()).collect();
    let b: Vec<_> = altered.iter().map(|&s| setup.psi_series(s).unwrap()).collect();
    assert_eq!(a[0], b[0]);
    assert_eq!(a[2], b[2]);
    assert_ne!(a[1], b[1]);
}
