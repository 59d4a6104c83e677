//! Posterior summaries, asymptotic intervals for the location model,
//! subgradient diagnostics and chain health checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ald::HyperplaneParams;
use crate::error::{Error, Result};
use crate::geometry::{check_tau, project, Dataset, Direction, OrthoBasis};
use crate::samplers::Chain;
use crate::special::normal_quantile;
use crate::tolerance::SINGULAR_RELATIVE;

/// Fewest post-burn-in draws accepted by [`chain_diagnostics`].
pub const MIN_DIAGNOSTIC_DRAWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// The draw covariance was numerically singular; intervals in the
    /// degenerate directions have (near) zero width.
    pub singular: bool,
}

impl CiResult {
    pub fn covers(&self, truth: &[f64]) -> Vec<bool> {
        truth
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| l <= t && t <= u)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradReport {
    /// Fraction of observations strictly inside the lower halfspace.
    pub sg1: f64,
    /// `(1/n) Σ [y_perp; x]·1{H⁻}`.
    pub sg2: Vec<f64>,
    pub n: usize,
}

/// Componentwise mean of the post-burn-in draws.
pub fn posterior_mean(chain: &Chain) -> Result<Vec<f64>> {
    if chain.n_kept() == 0 {
        return Err(Error::TooShort("no post-burn-in draws".into()));
    }
    let kept = chain.kept();
    Ok((0..kept.ncols()).map(|j| kept.column(j).mean()).collect())
}

/// [`posterior_mean`] as hyperplane parameters for a `k`-variate response.
pub fn posterior_params(chain: &Chain, k: usize) -> Result<HyperplaneParams> {
    HyperplaneParams::from_slice(&posterior_mean(chain)?, k)
}

/// Covariance (`1/m` normalization) of the post-burn-in draws.
pub fn draw_covariance(chain: &Chain) -> Result<DMatrix<f64>> {
    let kept = chain.kept();
    let m = kept.nrows();
    if m == 0 {
        return Err(Error::TooShort("no post-burn-in draws".into()));
    }
    let mean = posterior_mean(chain)?;
    let d = kept.ncols();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..m {
        for a in 0..d {
            let da = kept[(i, a)] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (kept[(i, b)] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= m as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    Ok(cov)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between order statistics.
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed posterior-quantile interval.
pub fn naive_interval(chain: &Chain, level: f64) -> Result<CiResult> {
    check_level(level)?;
    let kept = chain.kept();
    let estimate = posterior_mean(chain)?;
    let cov = draw_covariance(chain)?;
    let a = (1.0 - level) / 2.0;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for j in 0..kept.ncols() {
        let mut col: Vec<f64> = kept.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, a));
        upper.push(quantile_sorted(&col, 1.0 - a));
    }
    Ok(CiResult {
        names: chain.names().to_vec(),
        std_error: (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect(),
        estimate,
        lower,
        upper,
        level,
        singular: is_singular(&cov),
    })
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(())
}

fn is_singular(cov: &DMatrix<f64>) -> bool {
    let eig = cov.clone().symmetric_eigenvalues();
    let hi = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    hi == 0.0 || eig.min() <= SINGULAR_RELATIVE * hi
}

/// Sandwich-corrected interval for the location model (no covariates).
///
/// With `θ = (α, β_y)`, `V = V^mcmc · Jᵀ V^c J · V^mcmc` where `V^mcmc` is `n`
/// times the draw covariance, `J = blockdiag(1, Γ_u)` of shape `(k+1) × k`,
/// and `V^c` is assembled from `1/n` moment estimators with the lower
/// halfspace evaluated at the posterior mean. Results are reported in chain
/// order `(β_y, α)`.
pub fn asymptotic_ci(
    chain: &Chain,
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    level: f64,
) -> Result<CiResult> {
    check_level(level)?;
    if data.p() > 0 {
        return Err(Error::Unsupported("asymptotic intervals are derived for the location model only (p = 0)".into()));
    }
    let k = data.k();
    if chain.dim() != k {
        return Err(Error::Shape(format!("chain has {} parameters, location model needs {k}", chain.dim())));
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::Shape("no observations".into()));
    }
    let tau = dir.tau();
    check_tau(tau)?;
    let estimate = posterior_mean(chain)?;
    let theta = HyperplaneParams::from_slice(&estimate, k)?;
    // Reorder draw covariance to (α, β_y).
    let cov_chain = draw_covariance(chain)?;
    let singular = is_singular(&cov_chain);
    let perm: Vec<usize> = std::iter::once(k - 1).chain(0..k - 1).collect();
    let v_mcmc = DMatrix::from_fn(k, k, |a, b| n as f64 * cov_chain[(perm[a], perm[b])]);

    let vc = moment_matrix(data, dir, basis, &theta)?;

    let mut j_u = DMatrix::zeros(k + 1, k);
    j_u[(0, 0)] = 1.0;
    j_u.view_mut((1, 1), (k, k - 1)).copy_from(basis.gamma());
    let v = &v_mcmc * j_u.transpose() * vc * &j_u * &v_mcmc;

    let z = normal_quantile(0.5 + level / 2.0);
    let mut std_error = vec![0.0; k];
    for (a, &c) in perm.iter().enumerate() {
        std_error[c] = (v[(a, a)].max(0.0) / n as f64).sqrt();
    }
    let lower = estimate.iter().zip(&std_error).map(|(e, s)| e - z * s).collect();
    let upper = estimate.iter().zip(&std_error).map(|(e, s)| e + z * s).collect();
    Ok(CiResult { names: chain.names().to_vec(), estimate, std_error, lower, upper, level, singular })
}

/// `V^c`: the `(k+1) × (k+1)` moment matrix of `(τ − 1{Y ∈ H⁻})·(1, Y)` with
/// `1/n` normalization. The top-left entry is `τ(1−τ)` by construction.
pub fn moment_matrix(
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    theta: &HyperplaneParams,
) -> Result<DMatrix<f64>> {
    let (n, k, tau) = (data.n(), data.k(), dir.tau());
    if n == 0 {
        return Err(Error::Shape("no observations".into()));
    }
    if data.p() > 0 {
        return Err(Error::Unsupported("moment matrix is defined for the location model only".into()));
    }
    let proj = project(data, dir, basis)?;
    let y = data.y();
    let mean_y: Vec<f64> = (0..k).map(|j| y.column(j).mean()).collect();
    let mut s: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let fitted = theta.fitted(&proj.y_perp.row(i).iter().copied().collect::<Vec<_>>(), &[]);
        let ind = if proj.y_u[i] - fitted < 0.0 { 1.0 } else { 0.0 };
        s.push(y.row(i).transpose() * (tau - ind));
    }
    let s_mean = s.iter().fold(DVector::zeros(k), |acc, v| acc + v) / n as f64;
    let mut vc = DMatrix::zeros(k + 1, k + 1);
    let t1 = tau * (1.0 - tau);
    vc[(0, 0)] = t1;
    for j in 0..k {
        vc[(0, j + 1)] = t1 * mean_y[j];
        vc[(j + 1, 0)] = t1 * mean_y[j];
    }
    for v in &s {
        let dv = v - &s_mean;
        for a in 0..k {
            for b in 0..k {
                vc[(a + 1, b + 1)] += dv[a] * dv[b] / n as f64;
            }
        }
    }

    Ok(vc)
}

/// Empirical subgradient statistics at `theta`. Membership in the lower
/// halfspace is strict: `y_u − β_yᵀ y_perp − β_xᵀ x − α < 0`.
pub fn subgradient_diagnostics(
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    theta: &HyperplaneParams,
) -> Result<SubgradReport> {
    let proj = project(data, dir, basis)?;
    let (n, k1, p) = (data.n(), data.k() - 1, data.p());
    if theta.beta_y.len() != k1 || theta.beta_x.len() != p {
        return Err(Error::Shape("theta does not match the data dimensions".into()));
    }
    let mut count = 0usize;
    let mut sg2 = vec![0.0; k1 + p];
    for i in 0..n {
        let yp: Vec<f64> = proj.y_perp.row(i).iter().copied().collect();
        let x: Vec<f64> = data.x().row(i).iter().copied().collect();
        if proj.y_u[i] - theta.fitted(&yp, &x) < 0.0 {
            count += 1;
            for (slot, v) in sg2.iter_mut().zip(yp.iter().chain(&x)) {
                *slot += v;
            }
        }
    }
    let nf = n.max(1) as f64;
    Ok(SubgradReport {
        sg1: count as f64 / nf,
        sg2: sg2.into_iter().map(|v| v / nf).collect(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum Ess {
    Value(f64),
    /// Zero variance: the effective sample size is undefined.
    Degenerate,
}

impl Ess {
    pub fn value(&self) -> Option<f64> {
        match self {
            Ess::Value(v) => Some(*v),
            Ess::Degenerate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub names: Vec<String>,
    /// Summed over chains.
    pub ess: Vec<Ess>,
    /// Split-R̂; NaN where the within-chain variance is zero.
    pub rhat: Vec<f64>,
    pub acceptance_rate: Vec<f64>,
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(x: &[f64]) -> Ess {
    let m = x.len();
    let mean = x.iter().sum::<f64>() / m as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..m - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / m as f64
    };
    let g0 = autocov(0);
    if !(g0 > 0.0) {
        return Ess::Degenerate;
    }
    let mut sum = 0.0;
    let mut t = 0;
    while 2 * t + 1 < m {
        let pair = autocov(2 * t) + autocov(2 * t + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        t += 1;
    }
    let tau_int = (-g0 + 2.0 * sum) / g0;
    Ess::Value(m as f64 / tau_int.max(1.0 / m as f64))
}

/// Split-R̂ over the post-burn-in draws of one or more chains.
pub fn split_rhat(columns: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in columns {
        let h = c.len() / 2;
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    let len = halves.iter().map(|h| h.len()).min().unwrap_or(0);
    if len < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h[..len].iter().sum::<f64>() / len as f64).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h[..len].iter().map(|v| (v - m).powi(2)).sum::<f64>() / (len - 1) as f64)
        .collect();
    let j = halves.len() as f64;
    let w = vars.iter().sum::<f64>() / j;
    let grand = means.iter().sum::<f64>() / j;
    let b = len as f64 * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (j - 1.0);
    if !(w > 0.0) {
        return f64::NAN;
    }
    let nf = len as f64;
    (((nf - 1.0) / nf * w + b / nf) / w).sqrt()
}

pub fn chain_diagnostics(chains: &[Chain]) -> Result<ChainDiagnostics> {
    let first = chains.first().ok_or_else(|| Error::TooShort("no chains".into()))?;
    let d = first.dim();
    for c in chains {
        if c.dim() != d {
            return Err(Error::Shape("chains have different widths".into()));
        }
        if c.n_kept() < MIN_DIAGNOSTIC_DRAWS {
            return Err(Error::TooShort(format!(
                "{} post-burn-in draws, need at least {MIN_DIAGNOSTIC_DRAWS}",
                c.n_kept()
            )));
        }
    }
    let kept: Vec<DMatrix<f64>> = chains.iter().map(Chain::kept).collect();
    let mut ess = Vec::with_capacity(d);
    let mut rhat = Vec::with_capacity(d);
    for j in 0..d {
        let cols: Vec<Vec<f64>> = kept.iter().map(|k| k.column(j).iter().copied().collect()).collect();
        let per: Vec<Ess> = cols.iter().map(|c| effective_sample_size(c)).collect();
        ess.push(if per.iter().any(|e| *e == Ess::Degenerate) {
            Ess::Degenerate
        } else {
            Ess::Value(per.iter().filter_map(Ess::value).sum())
        });
        rhat.push(split_rhat(&cols));
    }
    Ok(ChainDiagnostics {
        names: first.names().to_vec(),
        ess,
        rhat,
        acceptance_rate: chains.iter().map(Chain::acceptance_rate).collect(),
    })
}
