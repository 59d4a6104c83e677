use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ProjectedData;
use crate::tolerance::KERNEL_MASS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    LocalConstant,
    LocalBilinear,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local-constant" | "constant" => Ok(DesignKind::LocalConstant),
            "local-bilinear" | "bilinear" => Ok(DesignKind::LocalBilinear),
            other => Err(Error::Config(format!("unknown design kind `{other}`"))),
        }
    }
}

/// Regressors of the kernel-weighted conditional model at `x0`.
///
/// Rows are `[y_perpᵀ, 1]` (local constant) or `[y_perpᵀ, 1] ⊗ [(X − x0)ᵀ, 1]`
/// (local bilinear). The intercept is the last coordinate in both, matching
/// the `(β_y, β_x, α)` ordering of unconditional fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDesign {
    kind: DesignKind,
    x0: Vec<f64>,
    k: usize,
    regressors: DMatrix<f64>,
}

impl ConditionalDesign {
    pub fn new(kind: DesignKind, proj: &ProjectedData, x: &DMatrix<f64>, x0: &[f64]) -> Result<Self> {
        let n = proj.n();
        let p = x.ncols();
        if x.nrows() != n {
            return Err(Error::Shape(format!("covariates have {} rows, projection has {n}", x.nrows())));
        }
        if x0.len() != p {
            return Err(Error::Shape(format!("x0 has {} entries, covariates have {p} columns", x0.len())));
        }
        let k = proj.y_perp.ncols() + 1;
        let regressors = match kind {
            DesignKind::LocalConstant => DMatrix::from_fn(n, k, |i, j| if j + 1 < k { proj.y_perp[(i, j)] } else { 1.0 }),
            DesignKind::LocalBilinear => {
                let q = k * (p + 1);
                DMatrix::from_fn(n, q, |i, c| {
                    let (a, b) = (c / (p + 1), c % (p + 1));
                    let left = if a + 1 < k { proj.y_perp[(i, a)] } else { 1.0 };
                    let right = if b < p { x[(i, b)] - x0[b] } else { 1.0 };
                    left * right
                })
            }
        };
        Ok(Self { kind, x0: x0.to_vec(), k, regressors })
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.regressors
    }

    pub fn q(&self) -> usize {
        self.regressors.ncols()
    }

    fn block(&self) -> usize {
        match self.kind {
            DesignKind::LocalConstant => 1,
            DesignKind::LocalBilinear => self.x0.len() + 1,
        }
    }

    /// Index of the intercept (the conditional `α` at `x0`).
    pub fn intercept_index(&self) -> usize {
        self.q() - 1
    }

    /// Indices of the `y_perp` slopes evaluated at `x0`.
    pub fn beta_y_indices(&self) -> Vec<usize> {
        let b = self.block();
        (0..self.k - 1).map(|j| j * b + b - 1).collect()
    }

    pub fn names(&self) -> Vec<String> {
        let p = self.x0.len();
        let left = |a: usize| if a + 1 < self.k { format!("y{}", a + 1) } else { "1".into() };
        match self.kind {
            DesignKind::LocalConstant => {
                let mut v: Vec<String> = (1..self.k).map(|j| format!("beta_y{j}")).collect();
                v.push("alpha".into());
                v
            }
            DesignKind::LocalBilinear => (0..self.q())
                .map(|c| {
                    let (a, b) = (c / (p + 1), c % (p + 1));
                    match (a + 1 < self.k, b < p) {
                        (false, false) => "alpha".into(),
                        (true, false) => format!("beta_y{}", a + 1),
                        (_, true) => format!("theta_{}_x{}", left(a), b + 1),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Product Gaussian kernel `Πⱼ φ(vⱼ/h)/h`.
    Gaussian,
    /// Weight one everywhere; the unweighted limit used for reductions.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: f64,
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth, kind: KernelKind::Gaussian })
    }

    pub fn flat() -> Self {
        Self { bandwidth: f64::INFINITY, kind: KernelKind::Flat }
    }

    /// `h = √(9 σ̂² n^{−1/5})` with `σ̂²` the unbiased variance of the
    /// covariates, averaged over columns.
    pub fn rule_of_thumb(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 2 || p == 0 {
            return Err(Error::Shape("bandwidth rule needs n >= 2 and at least one covariate".into()));
        }
        let mut var = 0.0;
        for j in 0..p {
            let col = x.column(j);
            let mean = col.mean();
            var += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        }
        var /= p as f64;
        Self::gaussian((9.0 * var * (n as f64).powf(-0.2)).sqrt())
    }

    pub fn weight(&self, x: &[f64], x0: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Flat => 1.0,
            KernelKind::Gaussian => {
                let h = self.bandwidth;
                let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
                x.iter().zip(x0).map(|(a, b)| norm * (-0.5 * ((a - b) / h).powi(2)).exp()).product()
            }
        }
    }

    /// `K_h(X_i − x0)` for every row; degenerate windows are rejected.
    pub fn weights(&self, x: &DMatrix<f64>, x0: &[f64]) -> Result<Vec<f64>> {
        if x.ncols() != x0.len() {
            return Err(Error::Shape(format!("x0 has {} entries, covariates have {} columns", x0.len(), x.ncols())));
        }
        let w: Vec<f64> = (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.weight(&row, x0)
            })
            .collect();
        let max = w.iter().copied().fold(0.0, f64::max);
        if !(max >= KERNEL_MASS) {
            return Err(Error::DegenerateWindow(format!(
                "largest kernel weight {max:e} at x0 = {x0:?} with bandwidth {}",
                self.bandwidth
            )));
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn proj() -> (ProjectedData, DMatrix<f64>) {
        let p = ProjectedData {
            y_u: DVector::from_vec(vec![0.5, -1.0]),
            y_perp: DMatrix::from_row_slice(2, 1, &[2.0, 3.0]),
        };
        (p, DMatrix::from_row_slice(2, 1, &[1.5, -0.5]))
    }

    #[test]
    fn local_constant_rows() {
        let (p, x) = proj();
        let d = ConditionalDesign::new(DesignKind::LocalConstant, &p, &x, &[1.0]).unwrap();
        assert_eq!(d.regressors(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 1.0]));
        assert_eq!(d.intercept_index(), 1);
        assert_eq!(d.beta_y_indices(), vec![0]);
    }

    #[test]
    fn local_bilinear_is_reversed_kronecker() {
        let (p, x) = proj();
        let d = ConditionalDesign::new(DesignKind::LocalBilinear, &p, &x, &[1.0]).unwrap();
        // [y, 1] ⊗ [x - x0, 1]
        let want = DMatrix::from_row_slice(2, 4, &[2.0 * 0.5, 2.0, 0.5, 1.0, 3.0 * -1.5, 3.0, -1.5, 1.0]);
        assert_eq!(d.regressors(), &want);
        assert_eq!(d.intercept_index(), 3);
        assert_eq!(d.beta_y_indices(), vec![1]);
        assert_eq!(d.names(), vec!["theta_y1_x1", "beta_y1", "theta_1_x1", "alpha"]);
        assert!(ConditionalDesign::new(DesignKind::LocalBilinear, &p, &x, &[]).is_err());
    }

    #[test]
    fn kernel_weights() {
        let k = KernelSpec::gaussian(2.0).unwrap();
        let w = k.weight(&[1.0], &[1.0]);
        assert!((w - 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
        let far = KernelSpec::gaussian(1e-3).unwrap();
        let x = DMatrix::from_row_slice(2, 1, &[5.0, 6.0]);
        assert!(matches!(far.weights(&x, &[0.0]), Err(Error::DegenerateWindow(_))));
        assert_eq!(KernelSpec::flat().weights(&x, &[0.0]).unwrap(), vec![1.0, 1.0]);
        assert!(KernelSpec::gaussian(0.0).is_err());
    }

    #[test]
    fn bandwidth_rule() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let var: f64 = 5.0 / 3.0;
        let h = KernelSpec::rule_of_thumb(&x).unwrap().bandwidth;
        assert!((h - (9.0 * var * 4f64.powf(-0.2)).sqrt()).abs() < 1e-14);
    }
}
