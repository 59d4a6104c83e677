//! Frequentist check-loss fits.
//!
//! The check loss `ρ_τ(r) = ½|r| + (τ − ½)r` is smoothed by replacing `|r|`
//! with the Huber function `h_ε`, which is quadratic on `|r| ≤ ε`. Each
//! smoothed problem is solved by damped Newton with Armijo backtracking,
//! warm-started from the previous (larger) `ε`. The schedule runs
//! `ε = s·10⁻¹, …, s·10⁻⁸` where `s` is the standard deviation of the
//! response, so the final stage sits far below the resolution of the data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ald::HyperplaneParams;
use crate::error::{Error, Result};
use crate::geometry::{check_loss, check_tau, project, Dataset, Direction, OrthoBasis};
use crate::tolerance::RANK_RELATIVE;

const MAX_NEWTON: usize = 200;
const ARMIJO: f64 = 1e-4;
const STEP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Coefficients in regressor order; `(β_y, β_x, α)` for directional fits.
    pub theta: Vec<f64>,
    /// Mean check loss (unweighted) or weighted sum of check losses.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn params(&self, k: usize) -> Result<HyperplaneParams> {
        HyperplaneParams::from_slice(&self.theta, k)
    }
}

/// Exact check-loss objective at `theta`: the mean when `weights` is `None`,
/// otherwise `Σ wᵢ ρ_τ(rᵢ)`.
pub fn check_objective(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&[f64]>,
    tau: f64,
    theta: &[f64],
) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        let fitted: f64 = (0..z.ncols()).map(|j| z[(i, j)] * theta[j]).sum();
        let w = weights.map_or(1.0, |w| w[i]);
        total += w * check_loss(y[i] - fitted, tau);
    }
    if weights.is_none() {
        total / n as f64
    } else {
        total
    }
}

struct Smoothed<'a> {
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    w: &'a [f64],
    tau: f64,
    eps: f64,
}

impl Smoothed<'_> {
    fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.y - self.z * theta
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let r = self.residuals(theta);
        let (eps, tau) = (self.eps, self.tau);
        r.iter()
            .zip(self.w)
            .map(|(&r, &w)| {
                let huber = if r.abs() <= eps { r * r / (2.0 * eps) } else { r.abs() - eps / 2.0 };
                w * (0.5 * huber + (tau - 0.5) * r)
            })
            .sum()
    }

    /// Gradient and Hessian with respect to θ.
    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.z.ncols();
        let r = self.residuals(theta);
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for i in 0..r.len() {
            let w = self.w[i];
            if w == 0.0 {
                continue;
            }
            let psi = 0.5 * (r[i] / self.eps).clamp(-1.0, 1.0) + self.tau - 0.5;
            let curv = if r[i].abs() <= self.eps { 0.5 / self.eps } else { 0.0 };
            for a in 0..d {
                let za = self.z[(i, a)];
                g[a] -= w * psi * za;
                if curv > 0.0 {
                    for b in a..d {
                        h[(a, b)] += w * curv * za * self.z[(i, b)];
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        (g, h)
    }
}

fn weighted_gram(z: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let d = z.ncols();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..z.nrows() {
        for a in 0..d {
            for b in 0..d {
                g[(a, b)] += w[i] * z[(i, a)] * z[(i, b)];
            }
        }
    }
    g
}

/// Minimize the (weighted) check loss of `y` on the columns of `z`.
pub fn fit_check_loss(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&[f64]>,
    tau: f64,
) -> Result<FitResult> {
    check_tau(tau)?;
    let (n, d) = (z.nrows(), z.ncols());
    if y.len() != n {
        return Err(Error::Shape(format!("{} responses for {n} regressor rows", y.len())));
    }
    let ones;
    let w: &[f64] = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Shape(format!("{} weights for {n} rows", w.len())));
            }
            if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain(format!("invalid weight {bad}")));
            }
            w
        }
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let active = w.iter().filter(|v| **v > 0.0).count();
    if active <= d {
        return Err(Error::Rank(format!("{active} weighted observations for {d} parameters")));
    }
    let gram = weighted_gram(z, w);
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= RANK_RELATIVE * hi {
        return Err(Error::Rank(format!("design eigenvalues range over [{lo:e}, {hi:e}]")));
    }

    // Weighted least-squares start.
    let mut zwy = DVector::zeros(d);
    for i in 0..n {
        for a in 0..d {
            zwy[a] += w[i] * z[(i, a)] * y[i];
        }
    }
    let mut theta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&zwy))
        .ok_or_else(|| Error::Rank("design Gram matrix not positive definite".into()))?;

    let wsum: f64 = w.iter().sum();
    let ymean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let var = y.iter().zip(w).map(|(a, b)| b * (a - ymean).powi(2)).sum::<f64>() / wsum;
    let scale = if var > 0.0 { var.sqrt() } else { ymean.abs().max(1.0) };
    let gscale: f64 = (0..n).map(|i| w[i] * z.row(i).amax()).sum::<f64>().max(f64::MIN_POSITIVE);
    let gtol = 1e-10 * gscale;
    let gram_diag = DMatrix::from_diagonal(&gram.diagonal());

    let mut iterations = 0;
    let mut converged = false;
    for stage in 1..=8 {
        let stage_start = theta.clone();
        let eps = scale * 10f64.powi(-stage);
        let problem = Smoothed { z, y, w, tau, eps };
        let mut value = problem.value(&theta);
        let mut lambda = 1e-10 / eps;
        converged = false;
        for _ in 0..MAX_NEWTON {
            iterations += 1;
            let (g, h) = problem.derivatives(&theta);
            if g.amax() <= gtol {
                converged = true;
                break;
            }
            let mut moved = false;
            let mut tiny = false;
            for _ in 0..8 {
                let m = &h + &gram_diag * lambda;
                let Some(chol) = m.cholesky() else {
                    lambda *= 100.0;
                    continue;
                };
                let step = -chol.solve(&g);
                let slope = g.dot(&step);
                let mut t = 1.0;
                while t > 1e-10 {
                    let cand = &theta + &step * t;
                    let v = problem.value(&cand);
                    if v <= value + ARMIJO * t * slope {
                        tiny = (&cand - &theta).amax() <= STEP_TOL * (1.0 + theta.amax());
                        theta = cand;
                        value = v;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if moved {
                    lambda = (lambda * 0.1).max(1e-14 / eps);
                    break;
                }
                lambda *= 100.0;
            }
            if !moved || tiny {
                // No further descent at floating-point resolution.
                converged = true;
                break;
            }
        }
        // Later stages cannot move a fit that the last one left in place.
        if stage > 2 && (&theta - &stage_start).amax() <= STEP_TOL * (1.0 + theta.amax()) {
            break;
        }
    }
    let theta: Vec<f64> = theta.iter().copied().collect();
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("check-loss fit diverged".into()));
    }
    let objective = check_objective(z, y, weights, tau, &theta);
    Ok(FitResult { theta, objective, iterations, converged })
}

/// Directional quantile regression of `uᵀY` on `Γᵀ Y`, the covariates and an
/// intercept.
pub fn frequentist_fit(
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    let proj = project(data, dir, basis)?;
    let (n, k1, p) = (proj.n(), proj.y_perp.ncols(), data.p());
    let z = DMatrix::from_fn(n, k1 + p + 1, |i, j| {
        if j < k1 {
            proj.y_perp[(i, j)]
        } else if j < k1 + p {
            data.x()[(i, j - k1)]
        } else {
            1.0
        }
    });
    fit_check_loss(&z, &proj.y_u, weights, dir.tau())
}
