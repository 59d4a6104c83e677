use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::{BLOCK_ZERO, SYMMETRY};

/// Multivariate normal prior `N(mean, covariance)` on a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct PriorSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<PriorRepr> for PriorSpec {
    type Error = Error;

    fn try_from(r: PriorRepr) -> Result<Self> {
        let d = r.mean.len();
        if r.covariance.len() != d || r.covariance.iter().any(|row| row.len() != d) {
            return Err(Error::Shape(format!("prior covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| r.covariance[i][j]);
        PriorSpec::new(DVector::from_vec(r.mean), cov)
    }
}

impl From<PriorSpec> for PriorRepr {
    fn from(p: PriorSpec) -> Self {
        let d = p.dim();
        PriorRepr {
            mean: p.mean.iter().copied().collect(),
            covariance: (0..d).map(|i| (0..d).map(|j| p.covariance[(i, j)]).collect()).collect(),
        }
    }
}

impl PriorSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Shape("prior dimension must be positive".into()));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Shape(format!(
                "prior mean has {d} entries but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("prior entries must be finite".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[(i, j)], covariance[(j, i)]);
                if (a - b).abs() > SYMMETRY * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Domain(format!("prior covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        let min_eig = covariance.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::Domain(format!(
                "prior covariance not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        let chol = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::Domain("prior covariance Cholesky failed".into()))?;
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        let precision_mean = &precision * &mean;
        Ok(Self { mean, covariance, precision, precision_mean, chol })
    }

    /// `N(mean, variance · I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_vec(mean), DMatrix::identity(d, d) * variance)
    }

    /// Zero-mean `N(0, variance · I)` of dimension `d`.
    pub fn weak(d: usize, variance: f64) -> Result<Self> {
        Self::isotropic(vec![0.0; d], variance)
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        if variances.len() != mean.len() {
            return Err(Error::Shape("variance list does not match mean".into()));
        }
        Self::new(DVector::from_vec(mean), DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub(crate) fn precision_mean(&self) -> &DVector<f64> {
        &self.precision_mean
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_column_slice(theta) - &self.mean;
        let solved = self.chol.l().solve_lower_triangular(&diff).unwrap_or(diff.clone());
        let log_det: f64 = (0..d).map(|i| self.chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
        -0.5 * (solved.norm_squared() + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.chol.l() * xi
    }

    /// Sub-prior on `start..start + len`.
    pub fn block(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.dim() || len == 0 {
            return Err(Error::Shape(format!("block {start}+{len} outside prior of dim {}", self.dim())));
        }
        Self::new(
            self.mean.rows(start, len).into_owned(),
            self.covariance.view((start, start), (len, len)).into_owned(),
        )
    }

    /// True when every covariance entry outside the given diagonal blocks is zero.
    pub fn is_block_diagonal(&self, sizes: &[usize]) -> bool {
        if sizes.iter().sum::<usize>() != self.dim() {
            return false;
        }
        let mut owner = Vec::with_capacity(self.dim());
        for (b, &s) in sizes.iter().enumerate() {
            owner.extend(std::iter::repeat_n(b, s));
        }
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| owner[i] == owner[j] || self.covariance[(i, j)].abs() <= BLOCK_ZERO))
    }

    /// Block-diagonal stacking of independent priors.
    pub fn stack(blocks: &[PriorSpec]) -> Result<Self> {
        let d: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        let mut at = 0;
        for b in blocks {
            mean.rows_mut(at, b.dim()).copy_from(&b.mean);
            cov.view_mut((at, at), (b.dim(), b.dim())).copy_from(&b.covariance);
            at += b.dim();
        }
        Self::new(mean, cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn validation() {
        assert!(PriorSpec::weak(3, 1000.0).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(PriorSpec::new(DVector::zeros(2), asym), Err(Error::Domain(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(PriorSpec::new(DVector::zeros(2), indefinite), Err(Error::Domain(_))));
        assert!(matches!(PriorSpec::new(DVector::zeros(3), DMatrix::identity(2, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn log_density_matches_univariate_formula() {
        let p = PriorSpec::isotropic(vec![1.0], 4.0).unwrap();
        let want = -0.5 * (0.25 + 4f64.ln() + (2.0 * std::f64::consts::PI).ln());
        assert!((p.log_density(&[2.0]) - want).abs() < 1e-12);
    }

    #[test]
    fn sampling_recovers_moments() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let p = PriorSpec::new(DVector::from_vec(vec![1.0, -1.0]), cov.clone()).unwrap();
        let mut rng = rng_from_seed(4);
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| p.sample(&mut rng)).collect();
        let mean = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 1.0).abs() < 0.02);
        let c01 = draws.iter().map(|d| (d[0] - mean[0]) * (d[1] - mean[1])).sum::<f64>() / n as f64;
        assert!((c01 - 0.6).abs() < 0.03);
    }

    #[test]
    fn blocks_and_stacking() {
        let a = PriorSpec::isotropic(vec![1.0, 2.0], 3.0).unwrap();
        let b = PriorSpec::isotropic(vec![-1.0], 5.0).unwrap();
        let s = PriorSpec::stack(&[a.clone(), b]).unwrap();
        assert!(s.is_block_diagonal(&[2, 1]));
        assert!(!s.is_block_diagonal(&[2, 2]));
        assert_eq!(s.block(0, 2).unwrap().mean(), a.mean());
        let mut cov = s.covariance().clone();
        cov[(0, 2)] = 0.1;
        cov[(2, 0)] = 0.1;
        let coupled = PriorSpec::new(s.mean().clone(), cov).unwrap();
        assert!(!coupled.is_block_diagonal(&[2, 1]));
        assert!(coupled.is_block_diagonal(&[3]));
    }

    #[test]
    fn serde_round_trip() {
        let p = PriorSpec::diagonal(vec![0.0, -0.84], &[10.0, 1.0]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: PriorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.mean(), p.mean());
        assert_eq!(back.covariance(), p.covariance());
    }
}
