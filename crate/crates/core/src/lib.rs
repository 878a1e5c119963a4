//! Extended stochastic blockmodels for networks with a known block partition.
//!
//! Two models are supported: a degree-corrected Bernoulli blockmodel with node fixed
//! effects, and a Poisson blockmodel with block main effects and dyad covariates. Both
//! are fitted by maximum likelihood ([`glm`]) or by adaptive-lasso penalized likelihood
//! ([`penalty`]), and summarized as block-level reduced graphs ([`reduced_graph`]).
//!
//! Typical flow: [`graph_io`] loads edges, attributes and a partition; [`covariates`]
//! builds the dyad table; [`design::encode`] produces the constrained design matrix.

pub mod commands;
pub mod covariates;
pub mod design;
pub mod error;
pub mod glm;
pub mod graph_io;
pub mod penalty;
pub mod reduced_graph;
pub mod simulate;

pub use error::{Error, Result};
