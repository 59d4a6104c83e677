use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::ald::{mixture_constants, HyperplaneParams, MixtureConstants};
use crate::error::{Error, Result};
use crate::geometry::{check_tau, project, Dataset, Direction, OrthoBasis, ProjectedData};
use crate::optimize::fit_check_loss;
use crate::seed::{rng_from_seed, Rng};
use crate::tolerance::LATENT_FLOOR;

use super::chain::{Chain, SamplerKind};
use super::design::{ConditionalDesign, KernelSpec};
use super::gig::sample_gig_half;
use super::prior::PriorSpec;
use super::McmcSettings;

/// Data of one regression block: responses, regressors `zᵢ` (rows) and
/// likelihood weights (all one outside the conditional model).
pub(crate) struct Block {
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub consts: MixtureConstants,
    pub tau: f64,
}

impl Block {
    pub fn unconditional(proj: &ProjectedData, x: &DMatrix<f64>, tau: f64) -> Result<Self> {
        let n = proj.n();
        let (k1, p) = (proj.y_perp.ncols(), x.ncols());
        let z = DMatrix::from_fn(n, k1 + p + 1, |i, j| {
            if j < k1 {
                proj.y_perp[(i, j)]
            } else if j < k1 + p {
                x[(i, j - k1)]
            } else {
                1.0
            }
        });
        Ok(Self { y: proj.y_u.clone(), z, weights: vec![1.0; n], consts: mixture_constants(tau)?, tau })
    }

    fn d(&self) -> usize {
        self.z.ncols()
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    /// Frequentist start, or the prior mean when there are too few rows to fit.
    fn initial(&self, prior: &PriorSpec) -> Result<DVector<f64>> {
        if self.n() <= self.d() {
            return Ok(prior.mean().clone());
        }
        let fit = fit_check_loss(&self.z, &self.y, Some(&self.weights), self.tau)?;
        Ok(DVector::from_vec(fit.theta))
    }

    /// Latent scales given θ: `V_i ~ GIG(½, √δ̂_i, √φ̂_i)`.
    fn draw_latent(&self, theta: &DVector<f64>, latent: &mut [f64], rng: &mut Rng) -> Result<()> {
        let g2 = self.consts.gamma_sq();
        let phi_unit = 2.0 + self.consts.eta * self.consts.eta / g2;
        for (i, slot) in latent.iter_mut().enumerate() {
            let w = self.weights[i];
            if w == 0.0 {
                // Zero-weight rows drop out of the likelihood entirely.
                *slot = 1.0;
                continue;
            }
            let r = self.y[i] - self.z.row(i).dot(&theta.transpose());
            let delta = w * r * r / g2;
            let phi = w * phi_unit;
            *slot = sample_gig_half(delta.sqrt(), phi.sqrt(), rng)?.max(LATENT_FLOOR);
        }
        Ok(())
    }

    /// Normal full conditional of θ given latent scales: mean and Cholesky
    /// factor of the precision.
    pub fn theta_conditional(
        &self,
        latent: &[f64],
        prior: &PriorSpec,
    ) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
        let d = self.d();
        let g2 = self.consts.gamma_sq();
        let mut prec = prior.precision().clone();
        let mut rhs = prior.precision_mean().clone();
        for i in 0..self.n() {
            let c = self.weights[i] / (g2 * latent[i]);
            let target = self.y[i] - self.consts.eta * latent[i];
            for a in 0..d {
                let za = self.z[(i, a)];
                rhs[a] += c * za * target;
                for b in a..d {
                    prec[(a, b)] += c * za * self.z[(i, b)];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                prec[(a, b)] = prec[(b, a)];
            }
        }
        let chol = Cholesky::new(prec.clone()).ok_or_else(|| {
            Error::Numerical(format!(
                "posterior precision not positive definite (diagonal {:?}, min latent {:e})",
                prec.diagonal().as_slice(),
                latent.iter().copied().fold(f64::INFINITY, f64::min)
            ))
        })?;
        let mean = chol.solve(&rhs);
        Ok((mean, chol))
    }

    fn draw_theta(&self, latent: &[f64], prior: &PriorSpec, rng: &mut Rng) -> Result<DVector<f64>> {
        let (mean, chol) = self.theta_conditional(latent, prior)?;
        let xi = DVector::from_fn(self.d(), |_, _| StandardNormal.sample(rng));
        let offset = chol
            .l()
            .transpose()
            .solve_upper_triangular(&xi)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let theta = mean + offset;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite draw of theta".into()));
        }
        Ok(theta)
    }
}

/// Two-step Gibbs sampler over one or more independent blocks sharing an RNG.
/// Each sweep updates block 1's latents and θ, then block 2's, and so on.
pub(crate) fn run_blocks(
    blocks: &[Block],
    priors: &[PriorSpec],
    inits: Vec<DVector<f64>>,
    settings: &McmcSettings,
    names: Vec<String>,
    kind: SamplerKind,
) -> Result<Chain> {
    settings.validate()?;
    let total: usize = blocks.iter().map(Block::d).sum();
    let mut rng = rng_from_seed(settings.seed);
    let mut draws = DMatrix::zeros(settings.n_draws, total);
    let mut thetas = inits;
    let mut latents: Vec<Vec<f64>> = blocks.iter().map(|b| vec![1.0; b.n()]).collect();
    for m in 0..settings.n_draws {
        let mut col = 0;
        for (bi, block) in blocks.iter().enumerate() {
            block.draw_latent(&thetas[bi], &mut latents[bi], &mut rng)?;
            thetas[bi] = block.draw_theta(&latents[bi], &priors[bi], &mut rng)?;
            for (j, v) in thetas[bi].iter().enumerate() {
                draws[(m, col + j)] = *v;
            }
            col += block.d();
        }
    }
    Chain::new(draws, names, settings.burn_in, settings.seed, kind, 1.0)
}

fn check_prior(prior: &PriorSpec, d: usize) -> Result<()> {
    if prior.dim() != d {
        return Err(Error::Shape(format!("prior has dimension {}, model needs {d}", prior.dim())));
    }
    Ok(())
}

fn init_vector(init: Option<&[f64]>, block: &Block, prior: &PriorSpec) -> Result<DVector<f64>> {
    match init {
        Some(v) if v.len() != block.d() => {
            Err(Error::Shape(format!("init has {} entries, model needs {}", v.len(), block.d())))
        }
        Some(v) => Ok(DVector::from_column_slice(v)),
        None => block.initial(prior),
    }
}

/// Gibbs sampler for the unconditional directional quantile model.
pub fn gibbs_unconditional(
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    prior: &PriorSpec,
    settings: &McmcSettings,
    init: Option<&HyperplaneParams>,
) -> Result<Chain> {
    let proj = project(data, dir, basis)?;
    let block = Block::unconditional(&proj, data.x(), dir.tau())?;
    check_prior(prior, block.d())?;
    let init = init.map(HyperplaneParams::to_vec);
    let start = init_vector(init.as_deref(), &block, prior)?;
    let names = HyperplaneParams::names(data.k(), data.p());
    run_blocks(&[block], std::slice::from_ref(prior), vec![start], settings, names, SamplerKind::GibbsUnconditional)
}

/// Gibbs sampler for a weighted regression on arbitrary regressors; the
/// conditional sampler computes kernel weights and delegates here.
pub fn gibbs_weighted(
    y_u: &DVector<f64>,
    design: &ConditionalDesign,
    weights: &[f64],
    tau: f64,
    prior: &PriorSpec,
    settings: &McmcSettings,
    init: Option<&[f64]>,
) -> Result<Chain> {
    check_tau(tau)?;
    let n = y_u.len();
    if weights.len() != n || design.regressors().nrows() != n {
        return Err(Error::Shape("responses, regressors and weights disagree on n".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain(format!("invalid likelihood weight {w}")));
    }
    let block = Block {
        y: y_u.clone(),
        z: design.regressors().clone(),
        weights: weights.to_vec(),
        consts: mixture_constants(tau)?,
        tau,
    };
    check_prior(prior, block.d())?;
    let start = init_vector(init, &block, prior)?;
    run_blocks(&[block], std::slice::from_ref(prior), vec![start], settings, design.names(), SamplerKind::GibbsConditional)
}

/// Gibbs sampler for the kernel-weighted conditional model at `design.x0()`.
/// Weights are `K_h(X_i − x0)` computed on the covariates.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_conditional(
    data: &Dataset,
    dir: &Direction,
    basis: &OrthoBasis,
    design: &ConditionalDesign,
    kernel: &KernelSpec,
    prior: &PriorSpec,
    settings: &McmcSettings,
    init: Option<&[f64]>,
) -> Result<Chain> {
    let proj = project(data, dir, basis)?;
    let weights = kernel.weights(data.x(), design.x0())?;
    gibbs_weighted(&proj.y_u, design, &weights, dir.tau(), prior, settings, init)
}

/// Joint sampler over several directional quantiles with a block-diagonal
/// prior on the stacked parameter vector `(θ₁, …, θ_M)`.
pub fn gibbs_simultaneous(
    data: &Dataset,
    dirs: &[Direction],
    bases: &[OrthoBasis],
    prior: &PriorSpec,
    settings: &McmcSettings,
    inits: Option<&[HyperplaneParams]>,
) -> Result<Chain> {
    if dirs.is_empty() || dirs.len() != bases.len() {
        return Err(Error::Shape(format!("{} directions but {} bases", dirs.len(), bases.len())));
    }
    if let Some(i) = inits {
        if i.len() != dirs.len() {
            return Err(Error::Shape("one init per direction required".into()));
        }
    }
    let d = data.k() + data.p();
    let sizes = vec![d; dirs.len()];
    check_prior(prior, d * dirs.len())?;
    if !prior.is_block_diagonal(&sizes) {
        return Err(Error::UnsupportedPrior(
            "simultaneous sampling needs a block-diagonal prior across directions".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(dirs.len());
    let mut priors = Vec::with_capacity(dirs.len());
    let mut starts = Vec::with_capacity(dirs.len());
    let mut names = Vec::new();
    for (m, (dir, basis)) in dirs.iter().zip(bases).enumerate() {
        let proj = project(data, dir, basis)?;
        let block = Block::unconditional(&proj, data.x(), dir.tau())?;
        let block_prior = prior.block(m * d, d)?;
        let init = inits.map(|i| i[m].to_vec());
        starts.push(init_vector(init.as_deref(), &block, &block_prior)?);
        priors.push(block_prior);
        blocks.push(block);
        let suffix = if dirs.len() > 1 { format!("[{m}]") } else { String::new() };
        names.extend(HyperplaneParams::names(data.k(), data.p()).into_iter().map(|s| s + &suffix));
    }
    run_blocks(&blocks, &priors, starts, settings, names, SamplerKind::GibbsSimultaneous)
}

/// Normal full conditional of θ with the latent scales held fixed, as
/// `(mean, covariance)`; exposed for checking the conjugate algebra.
pub fn theta_full_conditional(
    proj: &ProjectedData,
    x: &DMatrix<f64>,
    tau: f64,
    latent: &[f64],
    prior: &PriorSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let block = Block::unconditional(proj, x, tau)?;
    if latent.len() != block.n() {
        return Err(Error::Shape("one latent scale per observation required".into()));
    }
    check_prior(prior, block.d())?;
    let (mean, chol) = block.theta_conditional(latent, prior)?;
    Ok((mean, chol.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orthonormal_complement, GammaConvention};
    use crate::samplers::design::DesignKind;
    use rand::Rng as _;

    fn uniform_square(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
        Dataset::from_rows(&rows, None).unwrap()
    }

    fn settings(n_draws: usize, burn_in: usize, seed: u64) -> McmcSettings {
        McmcSettings { n_draws, burn_in, seed }
    }

    #[test]
    fn conjugate_update_matches_weighted_least_squares() {
        let proj = ProjectedData {
            y_u: DVector::from_vec(vec![0.4, -0.9]),
            y_perp: DMatrix::from_row_slice(2, 1, &[1.2, -0.3]),
        };
        let x = DMatrix::zeros(2, 0);
        let tau = 0.3;
        let latent = [0.7, 1.9];
        let prior = PriorSpec::new(
            DVector::from_vec(vec![0.5, -0.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]),
        )
        .unwrap();
        let (mean, cov) = theta_full_conditional(&proj, &x, tau, &latent, &prior).unwrap();

        // Independent hand assembly: weighted least squares with a Gaussian prior.
        let c = mixture_constants(tau).unwrap();
        let z = DMatrix::from_row_slice(2, 2, &[1.2, 1.0, -0.3, 1.0]);
        let wls = DMatrix::from_diagonal(&DVector::from_vec(
            latent.iter().map(|v| 1.0 / (c.gamma_sq() * v)).collect(),
        ));
        let target = DVector::from_vec(vec![0.4 - c.eta * latent[0], -0.9 - c.eta * latent[1]]);
        let p0 = prior.covariance().clone().try_inverse().unwrap();
        let post_prec = &p0 + z.transpose() * &wls * &z;
        let want_cov = post_prec.clone().try_inverse().unwrap();
        let want_mean = &want_cov * (&p0 * prior.mean() + z.transpose() * &wls * target);
        assert!((mean - want_mean).amax() < 1e-10);
        assert!((cov - want_cov).amax() < 1e-10);
    }

    #[test]
    fn no_data_returns_prior_draws() {
        let data = Dataset::empty(2, 0);
        let dir = Direction::new(vec![0.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let prior = PriorSpec::isotropic(vec![0.3, -1.0], 4.0).unwrap();
        let chain = gibbs_unconditional(&data, &dir, &basis, &prior, &settings(10_000, 0, 1), None).unwrap();
        let kept = chain.kept();
        for j in 0..2 {
            let mean = kept.column(j).mean();
            let se = (4.0f64 / 10_000.0).sqrt();
            assert!((mean - prior.mean()[j]).abs() < 3.0 * se, "coord {j}: {mean}");
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let data = uniform_square(200, 3);
        let dir = Direction::normalized(vec![1.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let prior = PriorSpec::weak(2, 1000.0).unwrap();
        let a = gibbs_unconditional(&data, &dir, &basis, &prior, &settings(200, 50, 9), None).unwrap();
        let b = gibbs_unconditional(&data, &dir, &basis, &prior, &settings(200, 50, 9), None).unwrap();
        let c = gibbs_unconditional(&data, &dir, &basis, &prior, &settings(200, 50, 10), None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.draws(), c.draws());
    }

    #[test]
    fn prior_dimension_mismatch() {
        let data = uniform_square(50, 3);
        let dir = Direction::new(vec![0.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let prior = PriorSpec::weak(3, 1000.0).unwrap();
        let err = gibbs_unconditional(&data, &dir, &basis, &prior, &settings(20, 5, 1), None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn unit_weight_conditional_equals_unconditional() {
        let data = uniform_square(150, 4);
        let dir = Direction::normalized(vec![1.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let prior = PriorSpec::weak(2, 1000.0).unwrap();
        let s = settings(300, 50, 21);
        let unc = gibbs_unconditional(&data, &dir, &basis, &prior, &s, None).unwrap();
        let proj = project(&data, &dir, &basis).unwrap();
        let design = ConditionalDesign::new(DesignKind::LocalConstant, &proj, data.x(), &[]).unwrap();
        let cond = gibbs_conditional(&data, &dir, &basis, &design, &KernelSpec::flat(), &prior, &s, None).unwrap();
        assert_eq!(unc.draws(), cond.draws());
    }

    #[test]
    fn simultaneous_singleton_matches_unconditional() {
        let data = uniform_square(150, 5);
        let dir = Direction::new(vec![0.0, 1.0], 0.3).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let prior = PriorSpec::weak(2, 1000.0).unwrap();
        let s = settings(200, 20, 8);
        let single = gibbs_unconditional(&data, &dir, &basis, &prior, &s, None).unwrap();
        let joint = gibbs_simultaneous(&data, &[dir], &[basis], &prior, &s, None).unwrap();
        assert_eq!(single.draws(), joint.draws());
    }

    #[test]
    fn simultaneous_rejects_coupled_prior() {
        let data = uniform_square(60, 5);
        let dir = Direction::new(vec![0.0, 1.0], 0.3).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let mut cov = DMatrix::identity(4, 4);
        cov[(0, 3)] = 0.2;
        cov[(3, 0)] = 0.2;
        let prior = PriorSpec::new(DVector::zeros(4), cov).unwrap();
        let err = gibbs_simultaneous(
            &data,
            &[dir.clone(), dir],
            &[basis.clone(), basis],
            &prior,
            &settings(20, 5, 1),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsupportedPrior(_)));
    }
}
