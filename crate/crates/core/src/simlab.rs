//! Data generating processes and Monte Carlo experiment drivers.
//!
//! Every replication draws its data and its chain from generators seeded by
//! `derive_seed(master, &[cell, replication])`, so tables are reproducible
//! bit for bit and independent of thread count. Cells are enumerated in the
//! order `dgp → direction → τ → n`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ald::HyperplaneParams;
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_complement, Dataset, Direction, GammaConvention, OrthoBasis};
use crate::inference::{asymptotic_ci, naive_interval, posterior_mean, subgradient_diagnostics};
use crate::optimize::frequentist_fit;
use crate::samplers::{gibbs_conditional, gibbs_unconditional, ConditionalDesign, DesignKind, KernelSpec, McmcSettings, PriorSpec};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Smallest Monte Carlo sample accepted by the oracles.
pub const MIN_ORACLE_SIZE: usize = 100_000;

const ORACLE_TAG: u64 = 0x0AC1E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DgpId {
    UniformSquare,
    UniformTriangle,
    BivariateNormal,
    NormalRegression,
}

impl TryFrom<u8> for DgpId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(DgpId::UniformSquare),
            2 => Ok(DgpId::UniformTriangle),
            3 => Ok(DgpId::BivariateNormal),
            4 => Ok(DgpId::NormalRegression),
            other => Err(Error::Config(format!("unknown DGP {other}; expected 1-4"))),
        }
    }
}

impl From<DgpId> for u8 {
    fn from(d: DgpId) -> u8 {
        d.index()
    }
}

impl DgpId {
    pub const ALL: [DgpId; 4] = [DgpId::UniformSquare, DgpId::UniformTriangle, DgpId::BivariateNormal, DgpId::NormalRegression];

    pub fn index(&self) -> u8 {
        match self {
            DgpId::UniformSquare => 1,
            DgpId::UniformTriangle => 2,
            DgpId::BivariateNormal => 3,
            DgpId::NormalRegression => 4,
        }
    }

    pub fn p(&self) -> usize {
        usize::from(*self == DgpId::NormalRegression)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpId::UniformSquare => "uniform-square",
            DgpId::UniformTriangle => "uniform-triangle",
            DgpId::BivariateNormal => "bivariate-normal",
            DgpId::NormalRegression => "normal-regression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    pub seed: u64,
}

fn normal_pair(rng: &mut Rng, l11: f64, l21: f64, l22: f64) -> [f64; 2] {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    [l11 * z1, l21 * z1 + l22 * z2]
}

/// Draw `n` rows of a DGP from `rng`.
pub fn dgp_draw(id: DgpId, n: usize, rng: &mut Rng) -> Dataset {
    let s3 = 3f64.sqrt();
    let mut y = DMatrix::zeros(n, 2);
    let mut x = DMatrix::zeros(n, id.p());
    for i in 0..n {
        let row = match id {
            DgpId::UniformSquare => [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
            DgpId::UniformTriangle => {
                let a = [-0.5, -0.5 / s3];
                let (e1, e2) = ([1.0, 0.0], [0.5, 1.5 / s3]);
                let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
                if r1 + r2 > 1.0 {
                    (r1, r2) = (1.0 - r1, 1.0 - r2);
                }
                [a[0] + r1 * e1[0] + r2 * e2[0], a[1] + r1 * e1[1] + r2 * e2[1]]
            }
            // Σ = [[1, 1.5], [1.5, 9]] = LLᵀ with L = [[1, 0], [1.5, √6.75]]
            DgpId::BivariateNormal => normal_pair(rng, 1.0, 1.5, 6.75f64.sqrt()),
            DgpId::NormalRegression => {
                // (X, Z₁, Z₂) with covariance [[4, 0, 2], [0, 1, 1.5], [2, 1.5, 9]].
                let e: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
                let xv = 2.0 * e[0];
                let z1 = e[1];
                let z2 = e[0] + 1.5 * e[1] + 5.75f64.sqrt() * e[2];
                x[(i, 0)] = xv;
                [z1, z2 + xv]
            }
        };
        y[(i, 0)] = row[0];
        y[(i, 1)] = row[1];
    }
    Dataset::new(y, x).expect("generated data are finite")
}

pub fn dgp_sample(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    Ok(dgp_draw(spec.id, spec.n, &mut rng_from_seed(spec.seed)))
}

fn check_oracle_size(mc_size: usize) -> Result<()> {
    if mc_size < MIN_ORACLE_SIZE {
        return Err(Error::Domain(format!("oracle sample {mc_size} below minimum {MIN_ORACLE_SIZE}")));
    }
    Ok(())
}

/// Population hyperplane of a DGP: the check-loss minimizer on a Monte Carlo
/// sample of size `mc_size`.
pub fn population_params_oracle(
    id: DgpId,
    dir: &Direction,
    basis: &OrthoBasis,
    mc_size: usize,
    seed: u64,
) -> Result<HyperplaneParams> {
    check_oracle_size(mc_size)?;
    let data = dgp_sample(&DgpSpec { id, n: mc_size, seed })?;
    frequentist_fit(&data, dir, basis, None)?.params(2)
}

/// Draw from `N((0, x0/2), [[1, 1.5], [1.5, 8]])`, the conditional law used
/// for the conditional-model oracle.
pub fn conditional_law_sample(x0: f64, n: usize, rng: &mut Rng) -> Dataset {
    let l22 = (8.0f64 - 2.25).sqrt();
    let mut y = DMatrix::zeros(n, 2);
    for i in 0..n {
        let [a, b] = normal_pair(rng, 1.0, 1.5, l22);
        y[(i, 0)] = a;
        y[(i, 1)] = b + x0 / 2.0;
    }
    Dataset::location(y).expect("generated data are finite")
}

/// Conditional-model population parameters `(α, β_y)` at `x0` (location
/// form, no covariate slope).
pub fn conditional_params_oracle(
    x0: f64,
    dir: &Direction,
    basis: &OrthoBasis,
    mc_size: usize,
    seed: u64,
) -> Result<HyperplaneParams> {
    check_oracle_size(mc_size)?;
    let data = conditional_law_sample(x0, mc_size, &mut rng_from_seed(seed));
    frequentist_fit(&data, dir, basis, None)?.params(2)
}

/// Memoized population oracles keyed by `(dgp, u, τ, convention)`.
pub struct OracleCache {
    mc_size: usize,
    seed: u64,
    values: Mutex<HashMap<(u8, [u64; 2], u64, u8, bool), HyperplaneParams>>,
}

impl OracleCache {
    pub fn new(mc_size: usize, seed: u64) -> Self {
        Self { mc_size, seed, values: Mutex::new(HashMap::new()) }
    }

    fn key(id: u8, dir: &Direction, convention: GammaConvention, conditional: bool) -> (u8, [u64; 2], u64, u8, bool) {
        let u = dir.u();
        (id, [u[0].to_bits(), u[1].to_bits()], dir.tau().to_bits(), convention as u8, conditional)
    }

    fn seed_for(&self, key: &(u8, [u64; 2], u64, u8, bool)) -> u64 {
        derive_seed(self.seed, &[ORACLE_TAG, key.0 as u64, key.1[0], key.1[1], key.2, key.4 as u64])
    }

    pub fn population(&self, id: DgpId, dir: &Direction, convention: GammaConvention) -> Result<HyperplaneParams> {
        let key = Self::key(id.index(), dir, convention, false);
        if let Some(v) = self.values.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let basis = orthonormal_complement(dir.u(), convention)?;
        let value = population_params_oracle(id, dir, &basis, self.mc_size, self.seed_for(&key))?;
        self.values.lock().expect("oracle cache poisoned").insert(key, value.clone());
        Ok(value)
    }

    pub fn conditional(&self, x0: f64, dir: &Direction, convention: GammaConvention) -> Result<HyperplaneParams> {
        let mut key = Self::key(0, dir, convention, true);
        key.1[0] ^= x0.to_bits().rotate_left(17);
        if let Some(v) = self.values.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let basis = orthonormal_complement(dir.u(), convention)?;
        let value = conditional_params_oracle(x0, dir, &basis, self.mc_size, self.seed_for(&key))?;
        self.values.lock().expect("oracle cache poisoned").insert(key, value.clone());
        Ok(value)
    }
}

/// Response drawn by the conditional experiment from the regression DGP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalResponse {
    /// `Y = Z`, so that `Y | X = x0` is exactly the law behind
    /// [`conditional_params_oracle`].
    #[default]
    Latent,
    /// `Y = Z + (0, X)`, the response of the unconditional experiments.
    Shifted,
}

impl std::str::FromStr for ConditionalResponse {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Self::Latent),
            "shifted" => Ok(Self::Shifted),
            other => Err(Error::Config(format!("unknown conditional response '{other}'; expected latent or shifted"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgps: Vec<DgpId>,
    pub directions: Vec<[f64; 2]>,
    pub taus: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    /// Draws, burn-in and the master seed.
    pub mcmc: McmcSettings,
    pub prior_variance: f64,
    pub oracle_mc_size: usize,
    pub convention: GammaConvention,
    pub level: f64,
    /// Conditioning value for the conditional experiment.
    pub x0: f64,
    pub design: DesignKind,
    pub conditional_response: ConditionalResponse,
}

impl ExperimentConfig {
    /// Full-scale settings: three sample sizes, 100 replications.
    pub fn full() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            dgps: DgpId::ALL.to_vec(),
            directions: vec![[s, s], [0.0, 1.0]],
            taus: vec![0.2],
            sample_sizes: vec![100, 1_000, 10_000],
            replications: 100,
            mcmc: McmcSettings { n_draws: 1_100, burn_in: 100, seed: 20_240_601 },
            prior_variance: 1000.0,
            oracle_mc_size: 1_000_000,
            convention: GammaConvention::Clockwise,
            level: 0.95,
            x0: 1.0,
            design: DesignKind::LocalConstant,
            conditional_response: ConditionalResponse::Latent,
        }
    }

    /// Reduced settings that run in minutes: `n ≤ 10³`, 25 replications.
    pub fn desk() -> Self {
        Self { sample_sizes: vec![100, 1_000], replications: 25, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.dgps.is_empty() || self.directions.is_empty() || self.taus.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::Config("dgps, directions, taus and sample sizes must be non-empty".into()));
        }
        self.mcmc.validate()?;
        check_oracle_size(self.oracle_mc_size)?;
        Ok(())
    }

    fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for &dgp in &self.dgps {
            for &u in &self.directions {
                for &tau in &self.taus {
                    let dir = Direction::normalized(u.to_vec(), tau)?;
                    let basis = orthonormal_complement(dir.u(), self.convention)?;
                    for &n in &self.sample_sizes {
                        cells.push(Cell { index: cells.len() as u64, dgp, dir: dir.clone(), basis: basis.clone(), n });
                    }
                }
            }
        }
        Ok(cells)
    }
}

struct Cell {
    index: u64,
    dgp: DgpId,
    dir: Direction,
    basis: OrthoBasis,
    n: usize,
}

/// One statistic of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dgp: u8,
    pub n: usize,
    pub u: [f64; 2],
    pub tau: f64,
    pub statistic: String,
    pub truth: f64,
    /// RMSE, or coverage frequency for coverage tables.
    pub value: f64,
    /// Coverage of the naive posterior-quantile interval (coverage tables).
    pub naive: Option<f64>,
    pub completed: usize,
    pub failed: usize,
    /// First failure message, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub kind: String,
    pub rows: Vec<TableRow>,
}

impl ExperimentTable {
    pub fn find(&self, dgp: u8, u: [f64; 2], n: usize, statistic: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| {
            r.dgp == dgp && r.n == n && r.statistic == statistic && (r.u[0] - u[0]).abs() < 1e-12 && (r.u[1] - u[1]).abs() < 1e-12
        })
    }

    /// Long format, one row per cell and statistic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dgp,n,u1,u2,tau,statistic,truth,value,naive,completed,failed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.dgp,
                r.n,
                r.u[0],
                r.u[1],
                r.tau,
                r.statistic,
                r.truth,
                r.value,
                r.naive.map_or(String::new(), |v| v.to_string()),
                r.completed,
                r.failed
            ));
        }
        out
    }

    /// Wide format for one direction and `τ`: one row per (statistic, n),
    /// one column per DGP, blank where a DGP has no such statistic.
    pub fn to_layout_csv(&self, u: [f64; 2], tau: f64) -> String {
        let mut dgps: Vec<u8> = self.rows.iter().map(|r| r.dgp).collect();
        dgps.sort_unstable();
        dgps.dedup();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.statistic.clone(), r.n);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let mut out = String::from("statistic,n");
        for d in &dgps {
            out.push_str(&format!(",dgp{d}"));
        }
        out.push('\n');
        for (stat, n) in keys {
            out.push_str(&format!("{stat},{n}"));
            for d in &dgps {
                let cell = self.rows.iter().find(|r| {
                    r.dgp == *d && r.n == n && r.statistic == stat && (r.u[0] - u[0]).abs() < 1e-12 && (r.u[1] - u[1]).abs() < 1e-12 && r.tau == tau
                });
                out.push(',');
                if let Some(c) = cell {
                    out.push_str(&c.value.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

struct Replicate {
    data: Dataset,
    chain: crate::samplers::Chain,
    estimate: Vec<f64>,
}

fn run_replicate(cfg: &ExperimentConfig, cell: &Cell, rep: u64) -> Result<Replicate> {
    let seed = derive_seed(cfg.mcmc.seed, &[cell.index, rep]);
    let data = dgp_sample(&DgpSpec { id: cell.dgp, n: cell.n, seed })?;
    let prior = PriorSpec::weak(data.k() + data.p(), cfg.prior_variance)?;
    let mcmc = cfg.mcmc.with_seed(derive_seed(seed, &[1]));
    let chain = gibbs_unconditional(&data, &cell.dir, &cell.basis, &prior, &mcmc, None)?;
    let estimate = posterior_mean(&chain)?;
    Ok(Replicate { data, chain, estimate })
}

struct Accumulator {
    sq: Vec<f64>,
    extra: Vec<f64>,
    completed: usize,
    failed: usize,
    failure: Option<String>,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self { sq: vec![0.0; d], extra: vec![0.0; d], completed: 0, failed: 0, failure: None }
    }

    fn fail(&mut self, e: &Error) {
        self.failed += 1;
        if self.failure.is_none() {
            self.failure = Some(e.to_string());
        }
    }
}

fn rows_from(cell: &Cell, names: &[String], truth: &[f64], acc: &Accumulator, coverage: bool) -> Vec<TableRow> {
    let u = [cell.dir.u()[0], cell.dir.u()[1]];
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let c = acc.completed.max(1) as f64;
            let (value, naive) = if coverage {
                (acc.sq[j] / c, Some(acc.extra[j] / c))
            } else {
                ((acc.sq[j] / c).sqrt(), None)
            };
            TableRow {
                dgp: cell.dgp.index(),
                n: cell.n,
                u,
                tau: cell.dir.tau(),
                statistic: name.clone(),
                truth: truth[j],
                value: if acc.completed == 0 { f64::NAN } else { value },
                naive,
                completed: acc.completed,
                failed: acc.failed,
                failure: acc.failure.clone(),
            }
        })
        .collect()
}

/// RMSE of posterior means against the population oracle.
pub fn rmse_experiment(cfg: &ExperimentConfig, oracles: &OracleCache) -> Result<ExperimentTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for cell in cfg.cells()? {
        let truth = oracles.population(cell.dgp, &cell.dir, cfg.convention)?.to_vec();
        let results: Vec<Result<Vec<f64>>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| run_replicate(cfg, &cell, rep).map(|r| r.estimate))
            .collect();
        let mut acc = Accumulator::new(truth.len());
        for r in results {
            match r {
                Ok(est) => {
                    acc.completed += 1;
                    for (j, (e, t)) in est.iter().zip(&truth).enumerate() {
                        acc.sq[j] += (e - t).powi(2);
                    }
                }
                Err(e) => acc.fail(&e),
            }
        }
        let names = HyperplaneParams::names(2, cell.dgp.p());
        rows.extend(rows_from(&cell, &names, &truth, &acc, false));
    }
    Ok(ExperimentTable { kind: "rmse".into(), rows })
}

/// Coverage of the asymptotic and naive intervals for the location DGPs
/// (covariate DGPs are skipped: the asymptotic interval is location-only).
pub fn coverage_experiment(cfg: &ExperimentConfig, oracles: &OracleCache) -> Result<ExperimentTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for cell in cfg.cells()?.into_iter().filter(|c| c.dgp.p() == 0) {
        let truth = oracles.population(cell.dgp, &cell.dir, cfg.convention)?.to_vec();
        let results: Vec<Result<(Vec<bool>, Vec<bool>)>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let r = run_replicate(cfg, &cell, rep)?;
                let asym = asymptotic_ci(&r.chain, &r.data, &cell.dir, &cell.basis, cfg.level)?;
                let naive = naive_interval(&r.chain, cfg.level)?;
                Ok((asym.covers(&truth), naive.covers(&truth)))
            })
            .collect();
        let mut acc = Accumulator::new(truth.len());
        for r in results {
            match r {
                Ok((a, b)) => {
                    acc.completed += 1;
                    for j in 0..truth.len() {
                        acc.sq[j] += f64::from(u8::from(a[j]));
                        acc.extra[j] += f64::from(u8::from(b[j]));
                    }
                }
                Err(e) => acc.fail(&e),
            }
        }
        let names = HyperplaneParams::names(2, 0);
        rows.extend(rows_from(&cell, &names, &truth, &acc, true));
    }
    Ok(ExperimentTable { kind: "coverage".into(), rows })
}

/// RMSE of the empirical subgradient statistics at the posterior mean. The
/// targets are `τ` for `sg1` and `τ·E[·] = 0` for the remaining statistics,
/// since every DGP has centred `y_perp` and covariates.
pub fn subgradient_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for cell in cfg.cells()? {
        let p = cell.dgp.p();
        let tau = cell.dir.tau();
        let results: Vec<Result<Vec<f64>>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let r = run_replicate(cfg, &cell, rep)?;
                let theta = HyperplaneParams::from_slice(&r.estimate, 2)?;
                let rep = subgradient_diagnostics(&r.data, &cell.dir, &cell.basis, &theta)?;
                let mut errs = vec![rep.sg1 - tau];
                errs.extend(rep.sg2.iter().copied());
                Ok(errs)
            })
            .collect();
        let mut acc = Accumulator::new(2 + p);
        for r in results {
            match r {
                Ok(errs) => {
                    acc.completed += 1;
                    for (j, e) in errs.iter().enumerate() {
                        acc.sq[j] += e * e;
                    }
                }
                Err(e) => acc.fail(&e),
            }
        }
        let mut names = vec!["sg1".to_string(), "sg2".to_string()];
        names.extend((1..=p).map(|j| format!("sg2_x{j}")));
        let mut truth = vec![tau, 0.0];
        truth.extend(std::iter::repeat_n(0.0, p));
        rows.extend(rows_from(&cell, &names, &truth, &acc, false));
    }
    Ok(ExperimentTable { kind: "subgradient".into(), rows })
}

/// Conditional-model RMSE at `cfg.x0` on the regression DGP: Gaussian kernel
/// with the rule-of-thumb bandwidth, posterior mean of `(β_y, α)` against the
/// conditional oracle. See [`ConditionalResponse`] for the response drawn.
pub fn conditional_experiment(cfg: &ExperimentConfig, oracles: &OracleCache) -> Result<ExperimentTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for cell in cfg.cells()?.into_iter().filter(|c| c.dgp == DgpId::NormalRegression) {
        let oracle = oracles.conditional(cfg.x0, &cell.dir, cfg.convention)?;
        let truth = oracle.to_vec();
        let results: Vec<Result<Vec<f64>>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.mcmc.seed, &[cell.index, rep]);
                let data = dgp_sample(&DgpSpec { id: cell.dgp, n: cell.n, seed })?;
                let data = match cfg.conditional_response {
                    ConditionalResponse::Shifted => data,
                    ConditionalResponse::Latent => latent_response(&data)?,
                };
                let kernel = KernelSpec::rule_of_thumb(data.x())?;
                let proj = crate::geometry::project(&data, &cell.dir, &cell.basis)?;
                let design = ConditionalDesign::new(cfg.design, &proj, data.x(), &[cfg.x0])?;
                let prior = PriorSpec::weak(design.q(), cfg.prior_variance)?;
                let mcmc = cfg.mcmc.with_seed(derive_seed(seed, &[1]));
                let chain = gibbs_conditional(&data, &cell.dir, &cell.basis, &design, &kernel, &prior, &mcmc, None)?;
                let mean = posterior_mean(&chain)?;
                Ok(vec![mean[design.beta_y_indices()[0]], mean[design.intercept_index()]])
            })
            .collect();
        let mut acc = Accumulator::new(2);
        for r in results {
            match r {
                Ok(est) => {
                    acc.completed += 1;
                    for (j, (e, t)) in est.iter().zip(&truth).enumerate() {
                        acc.sq[j] += (e - t).powi(2);
                    }
                }
                Err(e) => acc.fail(&e),
            }
        }
        let names = HyperplaneParams::names(2, 0);
        rows.extend(rows_from(&cell, &names, &truth, &acc, false));
    }
    Ok(ExperimentTable { kind: "conditional".into(), rows })
}

/// Undo the covariate shift of the regression DGP: `(Y₁, Y₂ − X)`.
pub fn latent_response(data: &Dataset) -> Result<Dataset> {
    if data.k() != 2 || data.p() != 1 {
        return Err(Error::Shape("latent response needs k = 2 and p = 1".into()));
    }
    let y = DMatrix::from_fn(data.n(), 2, |i, j| data.y()[(i, j)] - if j == 1 { data.x()[(i, 0)] } else { 0.0 });
    Dataset::new(y, data.x().clone())
}

/// Synthetic classroom-test fixture: two integer scores (reading, math) that
/// rise with one covariate (teacher experience, years), with correlated
/// heteroskedastic noise. Scores are integers so that ties occur.
pub fn star_like(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut y = DMatrix::zeros(n, 2);
    let mut x = DMatrix::zeros(n, 1);
    for i in 0..n {
        let exp = (rng.random::<f64>() * 25.0).floor();
        let scale = 1.0 + exp / 50.0;
        let [a, b] = normal_pair(&mut rng, 1.0, 0.7, (1.0f64 - 0.49).sqrt());
        y[(i, 0)] = (440.0 + 0.8 * exp + 30.0 * scale * a).round();
        y[(i, 1)] = (480.0 + 1.2 * exp + 40.0 * scale * b).round();
        x[(i, 0)] = exp;
    }
    Dataset::new(y, x)
}

/// Sample mean and covariance (`1/(n−1)`) of the responses.
pub fn response_moments(data: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
    let (n, k) = (data.n(), data.k());
    let y = data.y();
    let mean = DVector::from_fn(k, |j, _| y.column(j).mean());
    let cov = DMatrix::from_fn(k, k, |a, b| {
        (0..n).map(|i| (y[(i, a)] - mean[a]) * (y[(i, b)] - mean[b])).sum::<f64>() / (n - 1) as f64
    });
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_support_and_mean() {
        let n = 20_000;
        let d = dgp_sample(&DgpSpec { id: DgpId::UniformSquare, n, seed: 1 }).unwrap();
        assert!(d.y().iter().all(|v| v.abs() <= 0.5));
        let (mean, _) = response_moments(&d);
        assert!(mean.amax() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn triangle_support() {
        let d = dgp_sample(&DgpSpec { id: DgpId::UniformTriangle, n: 20_000, seed: 2 }).unwrap();
        let s3 = 3f64.sqrt();
        let corners = [[-0.5, -0.5 / s3], [0.5, -0.5 / s3], [0.0, 1.0 / s3]];
        for i in 0..d.n() {
            let p = [d.y()[(i, 0)], d.y()[(i, 1)]];
            for e in 0..3 {
                let (a, b) = (corners[e], corners[(e + 1) % 3]);
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                assert!(cross >= -1e-12);
            }
        }
        let (mean, _) = response_moments(&d);
        assert!(mean.amax() < 0.01);
    }

    #[test]
    fn normal_covariances() {
        let d = dgp_sample(&DgpSpec { id: DgpId::BivariateNormal, n: 100_000, seed: 3 }).unwrap();
        let (_, cov) = response_moments(&d);
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 9.0]);
        assert!((cov - want).amax() < 0.1);
        let d4 = dgp_sample(&DgpSpec { id: DgpId::NormalRegression, n: 100_000, seed: 4 }).unwrap();
        let (_, cov4) = response_moments(&d4);
        assert!((cov4[(1, 1)] / 17.0 - 1.0).abs() < 0.05);
        assert!((cov4[(0, 1)] - 1.5).abs() < 0.05);
        let xv = d4.x().column(0).iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((xv / 4.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn reproducible_and_invalid() {
        let a = dgp_sample(&DgpSpec { id: DgpId::UniformTriangle, n: 50, seed: 9 }).unwrap();
        let b = dgp_sample(&DgpSpec { id: DgpId::UniformTriangle, n: 50, seed: 9 }).unwrap();
        assert_eq!(a, b);
        assert!(DgpId::try_from(5).is_err());
        assert!(dgp_sample(&DgpSpec { id: DgpId::UniformSquare, n: 0, seed: 9 }).is_err());
    }

    #[test]
    fn oracle_rejects_small_samples() {
        let dir = Direction::new(vec![0.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Clockwise).unwrap();
        assert!(population_params_oracle(DgpId::UniformSquare, &dir, &basis, 1000, 1).is_err());
    }

    #[test]
    fn triangle_vertical_slope_is_zero() {
        let dir = Direction::new(vec![0.0, 1.0], 0.2).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Clockwise).unwrap();
        let t = population_params_oracle(DgpId::UniformTriangle, &dir, &basis, 200_000, 5).unwrap();
        assert!(t.beta_y[0].abs() < 0.02, "{}", t.beta_y[0]);
    }

    #[test]
    fn latent_response_matches_conditional_law() {
        // Z₂ | X has slope 2/4 on X and residual variance 9 − 1 = 8.
        let d = dgp_sample(&DgpSpec { id: DgpId::NormalRegression, n: 100_000, seed: 6 }).unwrap();
        let z = latent_response(&d).unwrap();
        let x = z.x().column(0);
        let y2 = z.y().column(1);
        let slope = x.dot(&y2) / x.dot(&x);
        let resid = (&y2 - x * slope).norm_squared() / 100_000.0;
        assert!((slope - 0.5).abs() < 0.02, "{slope}");
        assert!((resid / 8.0 - 1.0).abs() < 0.03, "{resid}");
    }

    #[test]
    fn star_fixture_has_ties() {
        let d = star_like(500, 1).unwrap();
        let mut col: Vec<f64> = d.y().column(0).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        assert!(col.windows(2).any(|w| w[0] == w[1]));
        assert_eq!(d.p(), 1);
    }
}
