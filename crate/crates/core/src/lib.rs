//! Bayesian infinite factor models.
//!
//! Three increasing-shrinkage priors on the loading matrix, each with an
//! adaptive Gibbs sampler that infers the number of latent factors:
//!
//! * [`mgp`]: multiplicative gamma process with threshold-based truncation,
//! * [`cusp`]: cumulative shrinkage process (spike-and-slab column variances
//!   with stick-breaking weights),
//! * [`ibp`]: Indian buffet process spike-and-slab on individual loadings.
//!
//! [`model`] holds the shared Gaussian factor model and its generic Gibbs
//! steps, [`stats`] the densities and draws, and [`synth`] the synthetic
//! benchmark used to compare the priors.

pub mod adapt;
pub mod config;
pub mod cusp;
pub mod error;
pub mod ibp;
pub mod mgp;
pub mod model;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod stats;
pub mod synth;

pub use adapt::AdaptationSchedule;
pub use config::{PriorKind, RunConfig};
pub use error::{Error, Result};
pub use model::{CorePriors, CoreState, Dataset, LoadingMatrix};
pub use rng::{RngState, RngStream};
pub use sampler::{PriorConfig, Sampler, SweepRecord};
pub use synth::{ReplicateSummary, SimDesign};
