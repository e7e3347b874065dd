//! Bayesian sparse regression with hierarchical sparsity priors.
//!
//! Regression coefficients are arranged in levels (main effects,
//! interactions, spline bases, ...). Each coefficient has a conditional
//! variance `Psi` built from independent mean-one latent scales `eta`,
//! combined with products or averages of the scales of related,
//! lower-level coefficients. The crate provides the prior laws, design
//! construction, an MCMC sampler (conjugate Gibbs block, adaptive
//! random-walk Metropolis on log scales, parallel tempering), shrinkage
//! profiles, and a batch analysis layer.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod analysis;
pub mod design;
pub mod distributions;
pub mod error;
pub mod prior_graph;
pub mod quadrature;
pub mod sampler;
pub mod shrinkage;
pub mod special;

pub use error::{Error, Result};
