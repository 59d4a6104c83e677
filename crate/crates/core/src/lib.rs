//! Bayesian directional quantile regression.
//!
//! A directional quantile of a `k`-variate response `Y` is indexed by a unit
//! direction `u` and a depth `τ ∈ (0, 1)`. The response is projected onto `u`
//! and onto an orthonormal complement `Γ_u`; the quantile hyperplane is then the
//! check-loss regression of `uᵀY` on `Γ_uᵀY`, optional covariates and an
//! intercept. This crate estimates those hyperplanes with MCMC under an
//! asymmetric-Laplace working likelihood, turns families of them into
//! `τ`-quantile (Tukey depth) contours, and ships a simulation lab that checks
//! the estimators against Monte Carlo population values.
//!
//! Module map:
//!
//! - [`geometry`]: directions, complements, projections, the check loss.
//! - [`ald`]: asymmetric-Laplace density and the working likelihoods.
//! - [`samplers`]: GIG variates, Gibbs and Metropolis-Hastings samplers.
//! - [`optimize`]: frequentist check-loss fits (initializers and oracles).
//! - [`inference`]: posterior summaries, asymptotic intervals, diagnostics.
//! - [`contours`]: halfplane intersection, quantile contours, Tukey depth.
//! - [`priors`]: spherical-contour priors and implied-prior densities.
//! - [`simlab`]: data generating processes and the experiment drivers.

pub mod ald;
pub mod contours;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod optimize;
pub mod priors;
pub mod samplers;
pub mod seed;
pub mod simlab;
pub mod special;
pub mod tolerance;

pub use error::{Error, Result};
pub use geometry::{Dataset, Direction, GammaConvention, OrthoBasis, ProjectedData};
