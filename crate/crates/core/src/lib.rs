//! `privcollab`: distributed convex learning over privately held datasets.
//!
//! A learner trains a linear regression or linear SVM model by querying data
//! owners for gradients. Each owner answers with a Laplace-privatized,
//! clipped mean subgradient, so its whole participation over `T` rounds is
//! ε-differentially private. The crate also forecasts the utility of a
//! proposed collaboration in closed form, before any data moves.
//!
//! ## Modules
//!
//! - [`model`]: parameters, datasets, losses, clipped subgradients, fitness
//! - [`mechanism`]: privacy budgets, noise calibration, Laplace sampling
//! - [`federation`]: the owner/learner round protocol, in-process or over TCP
//! - [`training`]: decaying-step and projected-averaging drivers, baselines
//! - [`predictor`]: curvature estimates, utility bounds, scenario ranking
//! - [`data`]: CSV ingestion, encoding, standardization, PCA, partitioning
//! - [`experiment`]: seeded Monte Carlo sweeps and result emission
//!
//! ## Examples
//!
//! ```text
//! examples/
//! ├── laplace_noise.rs            # calibrate and sample owner noise
//! ├── federated_round.rs          # one query round, owner by owner
//! ├── train_regression.rs         # private regression against θ*
//! ├── train_svm.rs                # private linear SVM with a box constraint
//! ├── forecast_collaboration.rs   # rank candidate collaborations
//! ├── privacy_sweep.rs            # Monte Carlo ε sweep to CSV
//! ├── pca_pipeline.rs             # CSV → encoding → standardize → PCA → shards
//! └── tcp_owners.rs               # owners served over newline-delimited JSON
//! ```
//!
//! ```bash
//! cargo run --release -p privcollab --example train_regression
//! cargo run --release -p privcollab --example forecast_collaboration
//! cargo run --release -p privcollab --example privacy_sweep
//! ```
//!
//! ## Quick start
//!
//! ```
//! use privcollab::prelude::*;
//!
//! let (pool, _) = synth_instance(LossKind::LinearRegression, 600, 3, 0.1, 7)?;
//! let shards = partition(&pool, &[200, 200, 200])?;
//! let loss = LossModel::regression(10.0)?.with_theta_max(10.0)?;
//! let mut owners = shards
//!     .into_iter()
//!     .enumerate()
//!     .map(|(id, (d, _))| DataOwner::new(id, d, loss, Epsilon(1.0), 50, NoiseStream::for_owner(1, id as u64)))
//!     .collect::<Result<Vec<_>>>()?;
//! let mut cfg = TrainConfig::new(50, Mode::ProjectedAveraging, ModelParams::zeros(3));
//! cfg.c1 = 0.3;
//! let run = train(&loss, &mut owners, &cfg)?;
//! assert_eq!(owners[0].spent_rounds(), 50);
//! assert_eq!(run.theta_bar.len(), 50);
//! # Ok::<(), privcollab::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod linalg;
pub mod mechanism;
pub mod model;
pub mod predictor;
pub mod training;

pub use error::{Error, Result};

/// The types and functions most programs need.
pub mod prelude {
    pub use crate::data::{load_csv, partition, pca_fit, pca_transform, synth_instance, PcaBasis};
    pub use crate::error::{Error, Result};
    pub use crate::experiment::{run_experiment, ExperimentConfig, RunStatistics};
    pub use crate::federation::{run_round, DataOwner, OwnerEndpoint};
    pub use crate::mechanism::{Epsilon, NoiseSpec, NoiseStream};
    pub use crate::model::{relative_fitness, Dataset, LossKind, LossModel, ModelParams, Record};
    pub use crate::predictor::{estimate_curvature, scenario_rank, Forecaster, Scenario};
    pub use crate::training::{nonprivate_train, train, Mode, TrainConfig, Trajectory};
}
