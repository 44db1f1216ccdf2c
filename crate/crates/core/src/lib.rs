//! Spatial GLM-AR modelling of fMRI time series.
//!
//! Each voxel carries a linear model with an order-`P` autoregressive error
//! process; regression and AR coefficient images receive Gaussian Markov
//! random field priors whose precision is `SᵀS` for a fixed-diagonal lattice
//! Laplacian `S`. The crate provides
//!
//! * [`lattice`]: mask geometry, the kernel `S` and the sparse precision `SᵀS`,
//! * [`model`]: datasets, the parameter vector, precomputed lag statistics and
//!   the exact log-posterior with its gradient,
//! * [`hmc`]: a whole-vector Hamiltonian Monte Carlo sampler,
//! * [`vb`]: the mean-field variational Bayes fitter,
//! * [`simulate`]: data generation under the model,
//! * [`metrics`]: replicate-level evaluation (bias, MSE, Moran's I, PPMs).
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the companion `glmar` crate.
#![no_std]
// Whenever std ends up in the build graph (test harness, std dependants)
// its inherent float methods shadow `num_traits::Float`.
#![allow(unused_imports)]

extern crate alloc;

pub mod dense;
pub mod error;
pub mod hmc;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod special;
pub mod summary;
pub mod vb;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use error::{Error, Result};
pub use lattice::{Mask, SpatialKernel};
pub use model::{Dataset, HyperPriors, ParamState, SuffStats};
pub use summary::PosteriorSummary;
