//! Exact stochastic simulation and deterministic analysis of a diploid
//! birth-death population with a dominant, fitter allele `A` invading a
//! resident `aa` population.
//!
//! - [`model`]: parameters, genotype counts and the Mendelian rates.
//! - [`ssa`]: event-by-event simulation with stopping-time detection.
//! - [`ode`]: the large-population limit, its fixed points, center manifold and
//!   the algebraic decay of the heterozygote density.
//! - [`chains`]: hitting probabilities of 1-D birth-death chains and linear
//!   branching formulas.
//! - [`experiments`]: Monte Carlo and numerical experiments built on the above.
//! - [`config`] / [`cli`]: flat key-value configuration and command dispatch.

pub mod chains;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod ode;
pub mod ssa;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    AnalysisParams, DerivedQuantities, Genotype, ModelParams, PopCount, PopDensity, RateBundle,
};
