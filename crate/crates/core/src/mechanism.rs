//! Laplace mechanism: noise calibration, seeded sampling and response
//! privatization for the aggregate-subgradient query.
//!
//! A data owner answering `T` queries with per-record subgradients clipped to
//! L1 norm `Ξ` over `nℓ` records has per-query L1 sensitivity `2Ξ/nℓ`. Adding
//! i.i.d. Laplace noise of scale `b = 2ΞT/(nℓ εℓ)` makes each answer
//! `(εℓ/T)`-DP and the whole horizon `εℓ`-DP by basic composition.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_dim, Error, Result};

/// A privacy budget value; `f64::INFINITY` means non-private.
///
/// Serializes finite values as JSON numbers and infinity as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(pub f64);

impl Epsilon {
    pub const INFINITE: Epsilon = Epsilon(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidParameter(format!("privacy budget must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1/ε²`, zero for a non-private owner.
    pub fn inverse_square(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / (self.0 * self.0)
        }
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let value = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => f64::INFINITY,
                other => other.parse().map_err(serde::de::Error::custom)?,
            },
        };
        Epsilon::new(value).map_err(serde::de::Error::custom)
    }
}

/// Total budget over a horizon together with how many queries it has paid for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: Epsilon,
    pub spent_rounds: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: Epsilon) -> Self {
        Self { epsilon, spent_rounds: 0 }
    }
}

/// Laplace scale and dimension of one response's noise vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub scale_b: f64,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn new(scale_b: f64, dim: usize) -> Result<Self> {
        if !(scale_b >= 0.0) || !scale_b.is_finite() {
            return Err(Error::InvalidParameter(format!("noise scale must be finite and >= 0, got {scale_b}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("noise dimension must be positive".into()));
        }
        Ok(Self { scale_b, dim })
    }

    /// Calibrated spec for an owner with `n_l` records answering `horizon` queries.
    pub fn calibrated(xi: f64, horizon: usize, n_l: usize, epsilon: Epsilon, dim: usize) -> Result<Self> {
        Self::new(noise_scale(xi, horizon, n_l, epsilon)?, dim)
    }
}

/// Deterministic per-owner random source.
///
/// Backed by ChaCha8 so sequences are identical on every platform. Owners
/// that share a seed are separated by the ChaCha stream id.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn from_seed(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream `stream` of the generator keyed by `seed`; distinct streams are independent.
    pub fn for_owner(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform draw on the open interval (−½, ½).
    fn centered_uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random::<f64>() - 0.5;
            if u > -0.5 {
                return u;
            }
        }
    }

    /// One Laplace(0, b) draw by inverse CDF.
    pub fn laplace(&mut self, b: f64) -> f64 {
        let u = self.centered_uniform();
        if b == 0.0 {
            return 0.0;
        }
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

/// `2ΞT/(nℓ εℓ)`, or zero when `εℓ` is infinite.
pub fn noise_scale(xi: f64, horizon: usize, n_l: usize, epsilon: Epsilon) -> Result<f64> {
    if !(xi > 0.0) || horizon == 0 || n_l == 0 || !(epsilon.0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise scale needs positive arguments (xi={xi}, T={horizon}, n={n_l}, eps={epsilon})"
        )));
    }
    if epsilon.is_infinite() {
        return Ok(0.0);
    }
    Ok(2.0 * xi * horizon as f64 / (n_l as f64 * epsilon.0))
}

/// `spec.dim` independent Laplace draws. The stream advances even when `b = 0`
/// so that trajectories stay aligned across budgets.
pub fn sample_laplace_vector(spec: &NoiseSpec, stream: &mut NoiseStream) -> Vec<f64> {
    (0..spec.dim).map(|_| stream.laplace(spec.scale_b)).collect()
}

/// `q + w` with `w` drawn from the spec's Laplace distribution.
pub fn privatize(q: &[f64], spec: &NoiseSpec, stream: &mut NoiseStream) -> Result<Vec<f64>> {
    ensure_dim(spec.dim, q.len())?;
    let noise = sample_laplace_vector(spec, stream);
    Ok(q.iter().zip(noise).map(|(a, w)| a + w).collect())
}

/// L1 sensitivity `2Ξ/nℓ` of the clipped mean-subgradient query under
/// replacement of one record.
pub fn l1_sensitivity_bound(xi: f64, n_l: usize) -> Result<f64> {
    if !(xi > 0.0) || n_l == 0 {
        return Err(Error::InvalidParameter("sensitivity needs xi > 0 and n > 0".into()));
    }
    Ok(2.0 * xi / n_l as f64)
}

/// Per-coordinate variance of the weighted aggregate noise `(1/n) Σ nℓ wℓ`,
/// i.e. `(1/n²) Σ nℓ² · 2bℓ²`. Multiply by the dimension for `E‖·‖₂²`.
pub fn aggregate_noise_variance(owners: &[(usize, f64)]) -> f64 {
    let n: usize = owners.iter().map(|(n_l, _)| n_l).sum();
    let n = n as f64;
    owners.iter().map(|&(n_l, b)| (n_l as f64).powi(2) * 2.0 * b * b).sum::<f64>() / (n * n)
}
