//! Certified PAC-Bayes bounds for control policies whose prior comes from a
//! generative model of environments.
//!
//! The crate is organized bottom-up:
//!
//! * [`bound`] - KL divergence, regularizer and the quadratic PAC-Bayes bound.
//! * [`simplex`] - minimization of the bound over discrete posteriors.
//! * [`envsim`] - a 2D corridor navigation simulator with ray-cast sensing and
//!   motion primitives.
//! * [`es`] - the seeded evolutionary-strategies trainer that maps a synthetic
//!   dataset to policy parameters.
//! * [`pipeline`] - end-to-end orchestration, artifact persistence, held-out
//!   evaluation and sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod digest;
pub mod envsim;
pub mod error;
pub mod es;
pub mod pipeline;
pub mod simplex;
pub mod streams;

pub use bound::{BoundReport, SimplexDistribution};
pub use error::{Error, Result};
