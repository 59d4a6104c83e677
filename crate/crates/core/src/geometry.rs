//! Directions, orthonormal complements, projections and the check loss.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tolerance;

/// Directional quantile index `τu`: a unit vector and a depth in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    u: Vec<f64>,
    tau: f64,
}

impl Direction {
    pub fn new(u: Vec<f64>, tau: f64) -> Result<Self> {
        if u.len() < 2 {
            return Err(Error::InvalidDirection(format!(
                "direction needs k >= 2 components, got {}",
                u.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDirection("non-finite component".into()));
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tolerance::UNIT_NORM {
            return Err(Error::InvalidDirection(format!(
                "|u| = {norm} is not 1 within {}",
                tolerance::UNIT_NORM
            )));
        }
        check_tau(tau)?;
        Ok(Self { u, tau })
    }

    /// Normalizes `v` before building the direction.
    pub fn normalized(v: Vec<f64>, tau: f64) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidDirection("cannot normalize a zero vector".into()));
        }
        Self::new(v.into_iter().map(|x| x / norm).collect(), tau)
    }

    /// Planar direction at `angle` radians from the first axis.
    pub fn from_angle(angle: f64, tau: f64) -> Result<Self> {
        Self::new(vec![angle.cos(), angle.sin()], tau)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    /// The vector `τu`.
    pub fn scaled(&self) -> Vec<f64> {
        self.u.iter().map(|v| v * self.tau).collect()
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { u: self.u.clone(), tau })
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// How the orthonormal complement `Γ_u` is chosen.
///
/// Estimates and contours do not depend on the choice, but chain coordinates
/// (the sign of `β_y`) do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    /// Householder reflection of the standard basis, each column signed so
    /// its first nonzero entry is positive. Any `k`.
    #[default]
    Householder,
    /// `Γ_u = (u₂, −u₁)`: `u` rotated clockwise by 90°. `k = 2` only.
    Clockwise,
    /// `Γ_u = (−u₂, u₁)`: `u` rotated counterclockwise by 90°. `k = 2` only.
    CounterClockwise,
}

impl std::str::FromStr for GammaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "householder" => Ok(Self::Householder),
            "clockwise" | "cw" => Ok(Self::Clockwise),
            "counterclockwise" | "counter-clockwise" | "ccw" => Ok(Self::CounterClockwise),
            other => Err(Error::Config(format!("unknown gamma convention {other:?}"))),
        }
    }
}

/// `Γ_u`: a `k × (k−1)` matrix completing `u` to an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    gamma: DMatrix<f64>,
}

impl OrthoBasis {
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn k(&self) -> usize {
        self.gamma.nrows()
    }

    /// Checks the basis is orthonormal and orthogonal to `dir`.
    pub fn matches(&self, dir: &Direction) -> Result<()> {
        let k = dir.k();
        if self.gamma.nrows() != k || self.gamma.ncols() + 1 != k {
            return Err(Error::Shape(format!(
                "basis is {}x{}, direction has k = {k}",
                self.gamma.nrows(),
                self.gamma.ncols()
            )));
        }
        let u = DVector::from_column_slice(dir.u());
        let dots = self.gamma.transpose() * &u;
        if dots.amax() > tolerance::ORTHONORMAL {
            return Err(Error::Shape("basis is not orthogonal to u".into()));
        }
        Ok(())
    }
}

/// Orthonormal complement of a unit vector.
///
/// The Householder reflection `H = I − 2vvᵀ/vᵀv` with `v = u + s·e₁`,
/// `s = sign(u₁)`, maps `e₁` to `−s·u`; its remaining columns are orthonormal
/// and orthogonal to `u`. Choosing the sign of `s` avoids cancellation when `u`
/// is close to `±e₁`.
pub fn orthonormal_complement(u: &[f64], convention: GammaConvention) -> Result<OrthoBasis> {
    let k = u.len();
    if k < 2 {
        return Err(Error::InvalidDirection("k must be at least 2".into()));
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > tolerance::UNIT_NORM {
        return Err(Error::InvalidDirection(format!("|u| = {norm} is not 1")));
    }
    let gamma = match convention {
        GammaConvention::Householder => householder_complement(u),
        GammaConvention::Clockwise | GammaConvention::CounterClockwise => {
            if k != 2 {
                return Err(Error::InvalidDirection(format!(
                    "{convention:?} convention is only defined for k = 2"
                )));
            }
            let sign = if convention == GammaConvention::Clockwise { 1.0 } else { -1.0 };
            DMatrix::from_column_slice(2, 1, &[sign * u[1], -sign * u[0]])
        }
    };
    Ok(OrthoBasis { gamma })
}

fn householder_complement(u: &[f64]) -> DMatrix<f64> {
    let k = u.len();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = DVector::from_column_slice(u);
    v[0] += s;
    let vtv = v.dot(&v);
    let mut gamma = DMatrix::zeros(k, k - 1);
    for col in 1..k {
        let factor = 2.0 * v[col] / vtv;
        for row in 0..k {
            let e = if row == col { 1.0 } else { 0.0 };
            gamma[(row, col - 1)] = e - factor * v[row];
        }
    }
    for mut column in gamma.column_iter_mut() {
        let first = column.iter().copied().find(|x| x.abs() > tolerance::SIGN_ZERO);
        if matches!(first, Some(x) if x < 0.0) {
            column.neg_mut();
        }
    }
    gamma
}

/// Responses `Y` (`n × k`) and covariates `X` (`n × p`, `p` may be zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::Shape("dataset needs at least one row".into()));
        }
        Self::build(y, x)
    }

    /// Location dataset (no covariates).
    pub fn location(y: DMatrix<f64>) -> Result<Self> {
        let n = y.nrows();
        Self::new(y, DMatrix::zeros(n, 0))
    }

    /// Builds from row slices.
    pub fn from_rows(y_rows: &[Vec<f64>], x_rows: Option<&[Vec<f64>]>) -> Result<Self> {
        let n = y_rows.len();
        let k = y_rows.first().map_or(0, Vec::len);
        if y_rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ragged response rows".into()));
        }
        let y = DMatrix::from_fn(n, k, |i, j| y_rows[i][j]);
        let x = match x_rows {
            None => DMatrix::zeros(n, 0),
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::Shape("covariate and response row counts differ".into()));
                }
                let p = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Shape("ragged covariate rows".into()));
                }
                DMatrix::from_fn(n, p, |i, j| rows[i][j])
            }
        };
        Self::new(y, x)
    }

    /// A dataset with no observations; samplers then return prior draws.
    pub fn empty(k: usize, p: usize) -> Self {
        Self { y: DMatrix::zeros(0, k), x: DMatrix::zeros(0, p) }
    }

    fn build(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.ncols() < 2 {
            return Err(Error::Shape(format!("need k >= 2 responses, got {}", y.ncols())));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "Y has {} rows but X has {}",
                y.nrows(),
                x.nrows()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite entries".into()));
        }
        Ok(Self { y, x })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let y = self.y.select_rows(rows);
        let x = self.x.select_rows(rows);
        if rows.is_empty() {
            return Ok(Self { y, x });
        }
        Self::new(y, x)
    }
}

/// Scalar projection `y_u = uᵀY` and orthogonal coordinates `Γ_uᵀY`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedData {
    pub y_u: DVector<f64>,
    pub y_perp: DMatrix<f64>,
}

impl ProjectedData {
    pub fn n(&self) -> usize {
        self.y_u.len()
    }
}

pub fn project(data: &Dataset, dir: &Direction, basis: &OrthoBasis) -> Result<ProjectedData> {
    if data.k() != dir.k() {
        return Err(Error::Shape(format!(
            "data has k = {}, direction has k = {}",
            data.k(),
            dir.k()
        )));
    }
    basis.matches(dir)?;
    let u = DVector::from_column_slice(dir.u());
    let y_u = data.y() * u;
    let y_perp = data.y() * basis.gamma();
    Ok(ProjectedData { y_u, y_perp })
}

/// Check loss `ρ_τ(x) = x(τ − 1{x < 0})`.
#[inline]
pub fn check_loss(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        x * (tau - 1.0)
    } else {
        x * tau
    }
}

/// `count` unit vectors at angles `2πj/count`, `j = 0..count`.
pub fn unit_directions(count: usize) -> Result<Vec<[f64; 2]>> {
    if count < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 directions to bound a polygon, got {count}"
        )));
    }
    Ok((0..count)
        .map(|j| {
            let angle = 2.0 * PI * j as f64 / count as f64;
            [angle.cos(), angle.sin()]
        })
        .collect())
}
