//! Prior elicitation.
//!
//! Spherical-contour priors centre the slope at zero and the intercept at the
//! signed distance from the median to the `τ`-contour. The implied-prior
//! densities describe what a normal prior on `(β_y, α)` says about the slope
//! and intercept of the hyperplane in the original coordinates.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_tau, OrthoBasis};
use crate::samplers::PriorSpec;
use crate::special::{erf, normal_quantile};
use crate::tolerance::BISECTION;

/// `Φ⁻¹(1 − τ)`: distance from the centre to the `τ`-contour of a standard
/// bivariate normal.
pub fn normal_radius(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 0.5) {
        return Err(Error::Domain(format!("normal radius needs 0 < tau < 0.5, got {tau}")));
    }
    Ok(normal_quantile(1.0 - tau))
}

/// Radius `r` of the `τ`-contour of the uniform distribution on the unit
/// disc: the root of `asin r + r√(1−r²) = π(½ − τ)`.
pub fn uniform_ball_radius(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 0.5) {
        return Err(Error::Domain(format!("uniform-ball radius needs 0 < tau < 0.5, got {tau}")));
    }
    let target = PI * (0.5 - tau);
    let f = |r: f64| r.asin() + r * (1.0 - r * r).sqrt() - target;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECTION {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family", content = "radius")]
pub enum RadiusFamily {
    StandardNormal,
    UniformBall,
    /// A directly elicited contour radius.
    CustomRadius(f64),
}

impl std::str::FromStr for RadiusFamily {
    type Err = Error;

    /// `standard-normal`, `uniform-ball` or `custom:<radius>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard-normal" | "normal" => Ok(RadiusFamily::StandardNormal),
            "uniform-ball" | "uniform" => Ok(RadiusFamily::UniformBall),
            other => {
                let r = other
                    .strip_prefix("custom:")
                    .and_then(|r| r.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown radius family `{other}`")))?;
                if !(r > 0.0) || !r.is_finite() {
                    return Err(Error::Config(format!("custom radius must be positive, got {r}")));
                }
                Ok(RadiusFamily::CustomRadius(r))
            }
        }
    }
}

impl RadiusFamily {
    /// Contour radius at depth `min(τ, 1−τ)`; zero at the median.
    pub fn radius(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let depth = tau.min(1.0 - tau);
        if depth == 0.5 {
            return Ok(0.0);
        }
        match self {
            RadiusFamily::StandardNormal => normal_radius(depth),
            RadiusFamily::UniformBall => uniform_ball_radius(depth),
            RadiusFamily::CustomRadius(r) => Ok(*r),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphericalPrior {
    pub tau: f64,
    pub family: RadiusFamily,
    pub radius: f64,
    pub prior: PriorSpec,
}

/// Prior on `(β_y, β_x, α)` centred on spherical contours: slopes have mean
/// zero and `α` has mean `−radius` below the median, `+radius` above it.
pub fn spherical_prior(
    tau: f64,
    family: RadiusFamily,
    k: usize,
    p: usize,
    alpha_variance: f64,
    beta_variance: f64,
) -> Result<SphericalPrior> {
    check_tau(tau)?;
    if k < 2 {
        return Err(Error::Shape("response dimension must be at least 2".into()));
    }
    if !(alpha_variance > 0.0) || !(beta_variance > 0.0) {
        return Err(Error::Domain("prior variances must be positive".into()));
    }
    let radius = family.radius(tau)?;
    let alpha = if tau < 0.5 {
        -radius
    } else if tau > 0.5 {
        radius
    } else {
        0.0
    };
    let d = k + p;
    let mut mean = vec![0.0; d];
    mean[d - 1] = alpha;
    let mut var = vec![beta_variance; d];
    var[d - 1] = alpha_variance;
    let prior = PriorSpec::new(DVector::from_vec(mean), DMatrix::from_diagonal(&DVector::from_vec(var)))?;
    Ok(SphericalPrior { tau, family, radius, prior })
}

/// Reciprocal-Gaussian law of the implied slope `φ` of a bivariate
/// hyperplane when `β_y ~ N(μ, σ²)`: `1/(φ − shift) ~ N(a, b²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedSlopePrior {
    pub a_underline: f64,
    pub b_underline: f64,
    /// Location of the pole, `−u⊥₁/u⊥₂`.
    pub shift: f64,
}

impl ImpliedSlopePrior {
    pub fn new(mu_beta: f64, sigma_beta: f64, u: [f64; 2], basis: &OrthoBasis) -> Result<Self> {
        if !(sigma_beta > 0.0) {
            return Err(Error::Domain(format!("slope prior sd must be positive, got {sigma_beta}")));
        }
        if basis.k() != 2 {
            return Err(Error::Unsupported("implied slope prior is bivariate".into()));
        }
        let (p1, p2) = (basis.gamma()[(0, 0)], basis.gamma()[(1, 0)]);
        if u[0].abs() < 1e-14 || p2.abs() < 1e-14 {
            return Err(Error::Unsupported("implied slope needs u1 != 0 and u2_perp != 0".into()));
        }
        Ok(Self {
            a_underline: mu_beta * u[0] * p2 - u[0] * u[1],
            b_underline: (u[0] * p2 * sigma_beta).abs(),
            shift: -p1 / p2,
        })
    }

    pub fn pdf(&self, phi: f64) -> f64 {
        let t = phi - self.shift;
        if t == 0.0 {
            return 0.0;
        }
        let b = self.b_underline;
        let z = (1.0 / t - self.a_underline) / b;
        (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * b * t * t)
    }

    /// The two stationary points `(m₁, m₂)` of the density.
    pub fn modes(&self) -> (f64, f64) {
        let (a, b2) = (self.a_underline, self.b_underline.powi(2));
        let root = (a * a + 8.0 * b2).sqrt();
        ((-a + root) / (4.0 * b2) + self.shift, (-a - root) / (4.0 * b2) + self.shift)
    }

    /// Mode-height ratio `f(m₁)/f(m₂)` evaluated with the closed form whose
    /// exponent is `a√(a²+8b²)/b⁴`.
    ///
    /// Direct evaluation gives the exponent `a√(a²+8b²)/(2b²)`, so this form
    /// agrees with [`mode_height_ratio_numeric`](Self::mode_height_ratio_numeric)
    /// only when `a = 0` or `b² = 2`.
    pub fn mode_height_ratio(&self) -> f64 {
        let (a, b2) = (self.a_underline, self.b_underline.powi(2));
        let root = (a * a + 8.0 * b2).sqrt();
        (a * a + a * root + 4.0 * b2) / (a * a - a * root + 4.0 * b2) * (a * root / (b2 * b2)).exp()
    }

    pub fn mode_height_ratio_numeric(&self) -> f64 {
        let (m1, m2) = self.modes();
        self.pdf(m1) / self.pdf(m2)
    }
}

/// Density of `R = (Z₁ + a)/(Z₂ + b)` with independent standard normals.
pub fn ratio_normals_pdf(phi: f64, a: f64, b: f64) -> f64 {
    let s = 1.0 + phi * phi;
    let c = (b + a * phi) / s.sqrt();
    let base = -(a * a + b * b) / 2.0;
    let tail = c * (0.5 * c * c + base).exp() * (PI / 2.0).sqrt() * erf(c * FRAC_1_SQRT_2);
    (base.exp() + tail) / (PI * s)
}

/// Parameters `(a, b, c, d)` with `W₁/W₂ = c·R + d`, `R = (Z₁ + a)/(Z₂ + b)`,
/// for `(W₁, W₂)` bivariate normal with means `θ`, sds `σ` and correlation `ρ`.
pub fn location_scale(theta1: f64, theta2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<(f64, f64, f64, f64)> {
    if !(sigma1 > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::Domain("standard deviations must be positive".into()));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    let q = (1.0 - rho * rho).sqrt();
    let b = theta2 / sigma2;
    let a = (theta1 / sigma1 - rho * b) / q;
    Ok((a, b, sigma1 / sigma2 * q, rho * sigma1 / sigma2))
}

/// Ratio-of-normals parameters of the implied intercept `α/(u₂ − β_y u⊥₂)`
/// under a bivariate normal prior on `(α, β_y)`.
pub fn implied_intercept_prior(
    alpha: (f64, f64),
    beta: (f64, f64),
    rho: f64,
    u: [f64; 2],
    basis: &OrthoBasis,
) -> Result<(f64, f64, f64, f64)> {
    let p2 = basis.gamma()[(1, 0)];
    if p2 == 0.0 {
        return Err(Error::Unsupported("implied intercept needs u2_perp != 0".into()));
    }
    // Cov(α, u₂ − β u⊥₂) = −u⊥₂ ρ σ_α σ_β, so the sign of u⊥₂ flips ρ.
    location_scale(alpha.0, u[1] - beta.0 * p2, alpha.1, beta.1 * p2.abs(), -rho * p2.signum())
}

/// Location and squared dispersion of the elliptical approximation to the
/// ratio-of-normals law; valid for `a < 2.256` and `b > 4`.
pub fn elliptical_approx(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a < 2.256 && b > 4.0) {
        return Err(Error::Domain(format!("elliptical approximation needs a < 2.256 and b > 4, got ({a}, {b})")));
    }
    let mu = a / (1.01 * b - 0.2713);
    let sigma_sq = (a * a + 1.0) / (b * b + 0.108 * b - 3.795) - mu * mu;
    Ok((mu, sigma_sq))
}

/// Number of strict local maxima of `f` on an evenly spaced grid.
pub fn count_modes(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> usize {
    let h = (hi - lo) / steps as f64;
    let vals: Vec<f64> = (0..=steps).map(|i| f(lo + i as f64 * h)).collect();
    vals.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
}

/// Numerical unimodal/bimodal classification of the ratio-of-normals density.
pub fn ratio_normals_modes(a: f64, b: f64) -> usize {
    let reach = 50.0 * (1.0 + a.abs() + b.abs());
    count_modes(|x| ratio_normals_pdf(x, a, b), -reach, reach, 400_000)
}
