//! Likelihood inference when the nuisance (random-effects) part of a model is
//! misspecified.
//!
//! The crate covers group-symmetric pair parametrizations, marginal
//! likelihoods of doubly-stochastic models, checkers for the conditions under
//! which the interest-parameter MLE stays consistent, sandwich covariance,
//! parameter orthogonalization and Monte Carlo studies of all of the above.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod families;
pub mod group_core;
pub mod inference;
pub mod mixture_lik;
pub mod numerics;
pub mod rng;
pub mod scenarios;

pub use error::{MisfitError, Result};
