//! Asymmetric Laplace density, the working likelihoods built from it, and the
//! normal–exponential mixture constants used by the Gibbs samplers.
//!
//! The scale is fixed at one in every likelihood; only [`ald_logpdf`] exposes
//! it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_loss, check_tau, project, Dataset, Direction, OrthoBasis, ProjectedData};
use crate::samplers::ConditionalDesign;

/// Parameters of a quantile hyperplane `λ_τ`.
///
/// As a flat vector the coordinates are ordered `(β_y, β_x, α)`; that is the
/// ordering of chains, priors and fits throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneParams {
    pub alpha: f64,
    pub beta_y: Vec<f64>,
    pub beta_x: Vec<f64>,
}

impl HyperplaneParams {
    pub fn new(alpha: f64, beta_y: Vec<f64>, beta_x: Vec<f64>) -> Result<Self> {
        let params = Self { alpha, beta_y, beta_x };
        if params.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("hyperplane parameters must be finite".into()));
        }
        Ok(params)
    }

    /// Horizontal hyperplane through `alpha` along `u`: all slopes zero.
    pub fn flat(alpha: f64, k: usize, p: usize) -> Self {
        Self { alpha, beta_y: vec![0.0; k - 1], beta_x: vec![0.0; p] }
    }

    pub fn dim(&self) -> usize {
        self.beta_y.len() + self.beta_x.len() + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.beta_y);
        v.extend_from_slice(&self.beta_x);
        v.push(self.alpha);
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec) for a response of dimension `k`.
    pub fn from_slice(theta: &[f64], k: usize) -> Result<Self> {
        if theta.len() < k {
            return Err(Error::Shape(format!(
                "theta has {} entries, need at least k = {k}",
                theta.len()
            )));
        }
        let d = theta.len();
        Self::new(theta[d - 1], theta[..k - 1].to_vec(), theta[k - 1..d - 1].to_vec())
    }

    /// Names matching the flat ordering, e.g. `beta_y1, beta_x1, alpha`.
    pub fn names(k: usize, p: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..k).map(|j| format!("beta_y{j}")).collect();
        names.extend((1..=p).map(|j| format!("beta_x{j}")));
        names.push("alpha".into());
        names
    }

    /// `α + β_yᵀ y_perp + β_xᵀ x` for one observation.
    pub fn fitted(&self, y_perp: &[f64], x: &[f64]) -> f64 {
        self.alpha
            + self.beta_y.iter().zip(y_perp).map(|(b, v)| b * v).sum::<f64>()
            + self.beta_x.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Constants of the representation `ε = ηW + γ√W·U`, `W ~ Exp(1)`,
/// `U ~ N(0, 1)`, for a standard asymmetric Laplace `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureConstants {
    pub eta: f64,
    pub gamma: f64,
}

impl MixtureConstants {
    pub fn gamma_sq(&self) -> f64 {
        self.gamma * self.gamma
    }
}

pub fn mixture_constants(tau: f64) -> Result<MixtureConstants> {
    check_tau(tau)?;
    let v = tau * (1.0 - tau);
    Ok(MixtureConstants { eta: (1.0 - 2.0 * tau) / v, gamma: (2.0 / v).sqrt() })
}

/// `log f(y | μ, σ, τ) = log[τ(1−τ)/σ] − ρ_τ(y−μ)/σ`.
pub fn ald_logpdf(y: f64, mu: f64, sigma: f64, tau: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {sigma}")));
    }
    check_tau(tau)?;
    Ok((tau * (1.0 - tau) / sigma).ln() - check_loss(y - mu, tau) / sigma)
}

/// CDF of the standard (`μ = 0`, `σ = 1`) asymmetric Laplace law.
pub fn ald_cdf(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        tau * ((1.0 - tau) * x).exp()
    } else {
        1.0 - (1.0 - tau) * (-tau * x).exp()
    }
}

/// Unconditional working log-likelihood: `Σᵢ log f(y_u[i] | α + β_yᵀy_perp[i] + β_xᵀx[i], 1, τ)`.
pub fn loglik_unconditional(
    proj: &ProjectedData,
    x: &DMatrix<f64>,
    theta: &HyperplaneParams,
    tau: f64,
) -> Result<f64> {
    check_tau(tau)?;
    let n = proj.n();
    if proj.y_perp.nrows() != n || x.nrows() != n {
        return Err(Error::Shape("projection and covariates disagree on n".into()));
    }
    if theta.beta_y.len() != proj.y_perp.ncols() || theta.beta_x.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "theta has ({}, {}) slopes, data has ({}, {}) columns",
            theta.beta_y.len(),
            theta.beta_x.len(),
            proj.y_perp.ncols(),
            x.ncols()
        )));
    }
    let log_norm = (tau * (1.0 - tau)).ln();
    let mut total = 0.0;
    for i in 0..n {
        let mut fitted = theta.alpha;
        for (j, b) in theta.beta_y.iter().enumerate() {
            fitted += b * proj.y_perp[(i, j)];
        }
        for (j, b) in theta.beta_x.iter().enumerate() {
            fitted += b * x[(i, j)];
        }
        total += log_norm - check_loss(proj.y_u[i] - fitted, tau);
    }
    Ok(total)
}

/// Kernel-weighted working log-likelihood of the conditional model:
/// `Σᵢ [log τ(1−τ) + log wᵢ − wᵢ ρ_τ(y_u[i] − θᵀ𝒳ᵢ)]`.
pub fn loglik_conditional(
    y_u: &DVector<f64>,
    design: &ConditionalDesign,
    theta: &[f64],
    weights: &[f64],
    tau: f64,
) -> Result<f64> {
    check_tau(tau)?;
    let z = design.regressors();
    let n = y_u.len();
    if z.nrows() != n || weights.len() != n {
        return Err(Error::Shape("responses, regressors and weights disagree on n".into()));
    }
    if theta.len() != z.ncols() {
        return Err(Error::Shape(format!(
            "theta has {} entries, design has {} regressors",
            theta.len(),
            z.ncols()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Domain(format!("kernel weights must be positive, got {w}")));
    }
    let log_norm = (tau * (1.0 - tau)).ln();
    let mut total = 0.0;
    for i in 0..n {
        let fitted: f64 = (0..z.ncols()).map(|j| z[(i, j)] * theta[j]).sum();
        total += log_norm + weights[i].ln() - weights[i] * check_loss(y_u[i] - fitted, tau);
    }
    Ok(total)
}

/// Aggregate log-likelihood over several directional quantiles; the blocks
/// share data but not parameters.
pub fn loglik_aggregate(
    data: &Dataset,
    thetas: &[HyperplaneParams],
    dirs: &[Direction],
    bases: &[OrthoBasis],
) -> Result<f64> {
    if thetas.is_empty() || thetas.len() != dirs.len() || dirs.len() != bases.len() {
        return Err(Error::Shape(format!(
            "need matching non-empty lists, got {} thetas, {} directions, {} bases",
            thetas.len(),
            dirs.len(),
            bases.len()
        )));
    }
    let mut total = 0.0;
    for ((theta, dir), basis) in thetas.iter().zip(dirs).zip(bases) {
        let proj = project(data, dir, basis)?;
        total += loglik_unconditional(&proj, data.x(), theta, dir.tau())?;
    }
    Ok(total)
}
