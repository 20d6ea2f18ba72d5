//! Rare-event simulation with cheap surrogate scores.
//!
//! The engine samples a sequence of proposal distributions of the form
//! `1{S(x) > l} dπ(x)` where `S` is a reduced (surrogate) score carrying a
//! pointwise error bound `E` with `|S - S*| <= E`. Adaptive multilevel
//! splitting drives the level up to a critical value chosen from the
//! relative entropy between pessimistic/optimistic targets and the proposal;
//! snapshots of the true score refine the surrogate, and an importance
//! sampling estimator built on the successive proposals gives an unbiased
//! estimate of `π(S* > l_max)`.
//!
//! The crate is `no_std` (with `alloc`). IO, configuration files and the
//! command line live in the companion `arms` crate.
//!
//! Module map:
//! - [`reference`], [`ensemble`], [`rng`]: states, the log-normal reference
//!   distribution, particle ensembles and reproducible random streams.
//! - [`ams`]: splitting primitives and the run up to the critical level.
//! - [`mcmc`]: the level-set preserving mutation kernel.
//! - [`bridge`]: archive of past ensembles and the bridging search.
//! - [`driver`]: the outer loop and the estimators.
//! - [`surrogates`]: concrete score models (analytic toy + spline, thermal
//!   block + reduced basis, tabular test double).
//! - [`exact`]: finite-state idealized algorithm with exact expectations.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ams;
pub mod bridge;
pub mod driver;
pub mod ensemble;
mod error;
pub mod exact;
mod exec;
pub mod linalg;
pub(crate) mod math;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod reference;
pub mod rng;
pub mod serde_ext;
pub mod surrogates;

pub use error::{Error, Result};
pub use model::{Evaluation, EventRule, Problem, Surrogate};
pub use reference::{ReferenceDistribution, State};
pub use rng::RngStream;
