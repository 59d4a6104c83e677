//! Quantile regions for bivariate responses.
//!
//! Each directional hyperplane defines an upper halfplane
//! `{y : (u − Γ_u β_y)ᵀ y ≥ α + β_xᵀ x}`. The `τ`-quantile region is the
//! intersection of those halfplanes over a grid of directions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ald::HyperplaneParams;
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_complement, unit_directions, Dataset, Direction, GammaConvention, OrthoBasis};
use crate::inference::posterior_mean;
use crate::optimize::{fit_check_loss, frequentist_fit};
use crate::samplers::{
    gibbs_conditional, gibbs_simultaneous, gibbs_unconditional, ConditionalDesign, DesignKind, KernelSpec,
    McmcSettings, PriorSpec,
};
use crate::seed::derive_seed;
use crate::tolerance::{ORIENTATION, VERTEX_DEDUP, VERTEX_FEASIBILITY};

/// `{y : normal · y ≥ offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfplane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl Halfplane {
    pub fn new(normal: [f64; 2], offset: f64) -> Result<Self> {
        let norm = normal[0].hypot(normal[1]);
        if !(norm > 0.0) || !norm.is_finite() || !offset.is_finite() {
            return Err(Error::DegenerateHyperplane(format!("normal {normal:?}, offset {offset}")));
        }
        Ok(Self { normal, offset })
    }

    /// Signed distance from the boundary line; positive inside.
    pub fn signed_distance(&self, y: [f64; 2]) -> f64 {
        (self.normal[0] * y[0] + self.normal[1] * y[1] - self.offset) / self.normal[0].hypot(self.normal[1])
    }

    /// Angle between the boundary line and the direction orthogonal to `u`,
    /// i.e. between the normal and `u`.
    pub fn tilt_from(&self, u: [f64; 2]) -> f64 {
        let n = self.normal[0].hypot(self.normal[1]);
        let c = (self.normal[0] * u[0] + self.normal[1] * u[1]) / n;
        c.clamp(-1.0, 1.0).acos()
    }

    fn line(&self) -> Line {
        let n2 = self.normal[0] * self.normal[0] + self.normal[1] * self.normal[1];
        let p = [self.offset * self.normal[0] / n2, self.offset * self.normal[1] / n2];
        let d = [self.normal[1], -self.normal[0]];
        Line { p, d, angle: d[1].atan2(d[0]) }
    }
}

/// Upper halfplane of a directional hyperplane. Covariate terms are
/// evaluated at `x_eval`, which is required when `p > 0`.
pub fn to_upper_halfplane(
    theta: &HyperplaneParams,
    dir: &Direction,
    basis: &OrthoBasis,
    x_eval: Option<&[f64]>,
) -> Result<Halfplane> {
    if dir.k() != 2 {
        return Err(Error::Unsupported("contours are implemented for k = 2".into()));
    }
    basis.matches(dir)?;
    if theta.beta_y.len() != 1 {
        return Err(Error::Shape("bivariate hyperplane needs one beta_y".into()));
    }
    let shift = match (theta.beta_x.len(), x_eval) {
        (0, _) => 0.0,
        (p, Some(x)) if x.len() == p => theta.beta_x.iter().zip(x).map(|(b, v)| b * v).sum(),
        (p, Some(x)) => return Err(Error::Shape(format!("x_eval has {} entries, need {p}", x.len()))),
        (_, None) => return Err(Error::Shape("covariate value required for a model with covariates".into())),
    };
    slope_halfplane(dir, basis, theta.beta_y[0], theta.alpha + shift)
}

fn slope_halfplane(dir: &Direction, basis: &OrthoBasis, beta: f64, offset: f64) -> Result<Halfplane> {
    let u = dir.u();
    let g = basis.gamma();
    Halfplane::new([u[0] - g[(0, 0)] * beta, u[1] - g[(1, 0)] * beta], offset)
}

#[derive(Debug, Clone, Copy)]
struct Line {
    p: [f64; 2],
    d: [f64; 2],
    angle: f64,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

impl Line {
    /// Strictly right of the line, beyond the orientation slack.
    fn out(&self, r: [f64; 2]) -> bool {
        let scale = self.d[0].hypot(self.d[1]) * (1.0 + r[0].abs().max(r[1].abs()));
        cross(self.d, sub(r, self.p)) < -ORIENTATION * scale
    }

    fn intersect(&self, other: &Line) -> [f64; 2] {
        let denom = cross(self.d, other.d);
        let t = cross(sub(other.p, self.p), other.d) / denom;
        [self.p[0] + t * self.d[0], self.p[1] + t * self.d[1]]
    }
}

/// A convex polygon with counterclockwise vertices. No vertices means the
/// intersection was empty (or collapsed to a point or segment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPolygon {
    pub vertices: Vec<[f64; 2]>,
    pub tau: Option<f64>,
    pub n_directions: usize,
}

impl ContourPolygon {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        (0..v.len()).map(|i| cross(v[i], v[(i + 1) % v.len()])).sum::<f64>() / 2.0
    }

    pub fn centroid(&self) -> Option<[f64; 2]> {
        let a = self.area();
        if self.is_empty() || a == 0.0 {
            return None;
        }
        let v = &self.vertices;
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..v.len() {
            let (p, q) = (v[i], v[(i + 1) % v.len()]);
            let c = cross(p, q);
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        Some([cx / (6.0 * a), cy / (6.0 * a)])
    }

    /// Point-in-polygon with slack `tol` (distance outside each edge).
    pub fn contains(&self, y: [f64; 2], tol: f64) -> bool {
        let v = &self.vertices;
        if v.is_empty() {
            return false;
        }
        (0..v.len()).all(|i| {
            let e = sub(v[(i + 1) % v.len()], v[i]);
            cross(e, sub(y, v[i])) >= -tol * e[0].hypot(e[1])
        })
    }

    /// Every vertex of `self` lies in `other` (within `tol`).
    pub fn is_inside(&self, other: &ContourPolygon, tol: f64) -> bool {
        self.vertices.iter().all(|&v| other.contains(v, tol))
    }

    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let m = v.len();
        m >= 3
            && (0..m).all(|i| {
                let a = sub(v[(i + 1) % m], v[i]);
                let b = sub(v[(i + 2) % m], v[(i + 1) % m]);
                cross(a, b) >= -VERTEX_FEASIBILITY
            })
    }

    /// Vertex ring as CSV (`x,y`), first vertex repeated at the end.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for v in self.vertices.iter().chain(self.vertices.first()) {
            out.push_str(&format!("{},{}\n", v[0], v[1]));
        }
        out
    }

    /// GeoJSON feature with a single closed ring.
    pub fn to_geojson(&self) -> serde_json::Value {
        let ring: Vec<[f64; 2]> = self.vertices.iter().chain(self.vertices.first()).copied().collect();
        serde_json::json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": [ring] },
            "properties": { "tau": self.tau, "n_directions": self.n_directions, "empty": self.is_empty() },
        })
    }
}

fn empty_polygon(n: usize) -> ContourPolygon {
    ContourPolygon { vertices: Vec::new(), tau: None, n_directions: n }
}

/// Intersection of upper halfplanes.
///
/// Lines are sorted by direction angle and swept with a deque. A family whose
/// normals leave an angular gap of at least `π` cannot enclose a bounded
/// region and is rejected up front.
pub fn intersect_halfplanes(planes: &[Halfplane]) -> Result<ContourPolygon> {
    if planes.len() < 3 {
        return Err(Error::UnboundedRegion(format!("{} halfplanes cannot bound a region", planes.len())));
    }
    let mut lines: Vec<Line> = planes.iter().map(Halfplane::line).collect();
    lines.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    let mut gap: f64 = lines[0].angle + 2.0 * std::f64::consts::PI - lines[lines.len() - 1].angle;
    for w in lines.windows(2) {
        gap = gap.max(w[1].angle - w[0].angle);
    }
    if gap >= std::f64::consts::PI - 1e-12 {
        return Err(Error::UnboundedRegion(format!("largest angular gap between normals is {gap:.6} rad")));
    }

    let mut dq: std::collections::VecDeque<Line> = std::collections::VecDeque::new();
    for line in lines {
        while dq.len() > 1 && line.out(dq[dq.len() - 1].intersect(&dq[dq.len() - 2])) {
            dq.pop_back();
        }
        while dq.len() > 1 && line.out(dq[0].intersect(&dq[1])) {
            dq.pop_front();
        }
        if let Some(back) = dq.back() {
            let scale = back.d[0].hypot(back.d[1]) * line.d[0].hypot(line.d[1]);
            if cross(line.d, back.d).abs() <= ORIENTATION * scale {
                if line.d[0] * back.d[0] + line.d[1] * back.d[1] < 0.0 {
                    return Ok(empty_polygon(planes.len()));
                }
                if line.out(back.p) {
                    dq.pop_back();
                } else {
                    continue;
                }
            }
        }
        dq.push_back(line);
    }
    while dq.len() > 2 && dq[0].out(dq[dq.len() - 1].intersect(&dq[dq.len() - 2])) {
        dq.pop_back();
    }
    while dq.len() > 2 && dq[dq.len() - 1].out(dq[0].intersect(&dq[1])) {
        dq.pop_front();
    }
    if dq.len() < 3 {
        return Ok(empty_polygon(planes.len()));
    }

    let m = dq.len();
    let mut vertices: Vec<[f64; 2]> = Vec::with_capacity(m);
    for i in 0..m {
        let v = dq[i].intersect(&dq[(i + 1) % m]);
        if vertices.last().is_none_or(|w| (v[0] - w[0]).hypot(v[1] - w[1]) > VERTEX_DEDUP) {
            vertices.push(v);
        }
    }
    while vertices.len() > 1 {
        let (f, l) = (vertices[0], vertices[vertices.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) > VERTEX_DEDUP {
            break;
        }
        vertices.pop();
    }
    if vertices.len() < 3 {
        return Ok(empty_polygon(planes.len()));
    }
    let polygon = ContourPolygon { vertices, tau: None, n_directions: planes.len() };
    if polygon.area() <= 0.0 {
        return Ok(empty_polygon(planes.len()));
    }
    for v in &polygon.vertices {
        for h in planes {
            let slack = VERTEX_FEASIBILITY * (1.0 + h.offset.abs() / h.normal[0].hypot(h.normal[1]));
            if h.signed_distance(*v) < -slack {
                return Err(Error::Numerical(format!(
                    "vertex {v:?} violates halfplane {h:?} by {:e}",
                    -h.signed_distance(*v)
                )));
            }
        }
    }
    Ok(polygon)
}

/// Directional approximation of Tukey depth: the smallest fraction of
/// observations in a closed halfplane `{y : uᵀ(y − point) ≤ 0}` over the grid.
pub fn tukey_depth(point: [f64; 2], data: &Dataset, n_directions: usize) -> Result<f64> {
    if data.k() != 2 {
        return Err(Error::Unsupported("Tukey depth is implemented for k = 2".into()));
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::Shape("no observations".into()));
    }
    let y = data.y();
    let mut depth = f64::INFINITY;
    for u in unit_directions(n_directions)? {
        let c = u[0] * point[0] + u[1] * point[1];
        let count = (0..n).filter(|&i| u[0] * y[(i, 0)] + u[1] * y[(i, 1)] <= c).count();
        depth = depth.min(count as f64 / n as f64);
    }
    Ok(depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    BayesMean,
    Frequentist,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes-mean" | "bayes" => Ok(Estimator::BayesMean),
            "frequentist" => Ok(Estimator::Frequentist),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Per-direction estimation settings shared by contours and tubes.
#[derive(Debug, Clone)]
pub struct ContourSettings {
    pub estimator: Estimator,
    pub mcmc: McmcSettings,
    /// Prior for every direction; `None` means `N(0, prior_variance·I)`.
    pub prior: Option<PriorSpec>,
    pub prior_variance: f64,
    pub convention: GammaConvention,
    /// One joint chain over all directions instead of independent chains.
    pub simultaneous: bool,
}

impl Default for ContourSettings {
    fn default() -> Self {
        Self {
            estimator: Estimator::BayesMean,
            mcmc: McmcSettings::default(),
            prior: None,
            prior_variance: 1000.0,
            convention: GammaConvention::Householder,
            simultaneous: false,
        }
    }
}

impl ContourSettings {
    fn prior_for(&self, d: usize) -> Result<PriorSpec> {
        match &self.prior {
            Some(p) if p.dim() != d => Err(Error::Shape(format!("prior has dimension {}, need {d}", p.dim()))),
            Some(p) => Ok(p.clone()),
            None => PriorSpec::weak(d, self.prior_variance),
        }
    }
}

fn direction_grid(tau: f64, n_directions: usize, convention: GammaConvention) -> Result<Vec<(Direction, OrthoBasis)>> {
    unit_directions(n_directions)?
        .into_iter()
        .map(|u| {
            let dir = Direction::new(u.to_vec(), tau)?;
            let basis = orthonormal_complement(dir.u(), convention)?;
            Ok((dir, basis))
        })
        .collect()
}

/// Hyperplane estimates for every grid direction, in grid order.
pub fn directional_fits(
    data: &Dataset,
    tau: f64,
    n_directions: usize,
    settings: &ContourSettings,
) -> Result<Vec<(Direction, OrthoBasis, HyperplaneParams)>> {
    let grid = direction_grid(tau, n_directions, settings.convention)?;
    let k = data.k();
    let d = k + data.p();
    if settings.estimator == Estimator::BayesMean && settings.simultaneous {
        let prior = PriorSpec::stack(&vec![settings.prior_for(d)?; grid.len()])?;
        let dirs: Vec<Direction> = grid.iter().map(|g| g.0.clone()).collect();
        let bases: Vec<OrthoBasis> = grid.iter().map(|g| g.1.clone()).collect();
        let chain = gibbs_simultaneous(data, &dirs, &bases, &prior, &settings.mcmc, None)?;
        let mean = posterior_mean(&chain)?;
        return grid
            .into_iter()
            .enumerate()
            .map(|(m, (dir, basis))| Ok((dir, basis, HyperplaneParams::from_slice(&mean[m * d..(m + 1) * d], k)?)))
            .collect();
    }
    grid.into_par_iter()
        .enumerate()
        .map(|(m, (dir, basis))| {
            let theta = match settings.estimator {
                Estimator::Frequentist => frequentist_fit(data, &dir, &basis, None)?.params(k)?,
                Estimator::BayesMean => {
                    let mcmc = settings.mcmc.with_seed(derive_seed(settings.mcmc.seed, &[m as u64]));
                    let chain = gibbs_unconditional(data, &dir, &basis, &settings.prior_for(d)?, &mcmc, None)?;
                    HyperplaneParams::from_slice(&posterior_mean(&chain)?, k)?
                }
            };
            Ok((dir, basis, theta))
        })
        .collect()
}

/// `τ`-quantile region of a bivariate location model.
pub fn tau_contour(data: &Dataset, tau: f64, n_directions: usize, settings: &ContourSettings) -> Result<ContourPolygon> {
    if data.k() != 2 {
        return Err(Error::Unsupported("contours are implemented for k = 2".into()));
    }
    if data.p() > 0 {
        return Err(Error::Unsupported("use tube_slice for models with covariates".into()));
    }
    let fits = directional_fits(data, tau, n_directions, settings)?;
    let planes: Vec<Halfplane> = fits
        .iter()
        .map(|(dir, basis, theta)| to_upper_halfplane(theta, dir, basis, None))
        .collect::<Result<_>>()?;
    let mut polygon = intersect_halfplanes(&planes)?;
    polygon.tau = Some(tau);
    Ok(polygon)
}

/// Slice at `x0` of the conditional `τ`-quantile tube, fitted with the
/// kernel-weighted conditional model in every grid direction.
#[allow(clippy::too_many_arguments)]
pub fn tube_slice(
    data: &Dataset,
    tau: f64,
    x0: &[f64],
    kernel: &KernelSpec,
    kind: DesignKind,
    n_directions: usize,
    settings: &ContourSettings,
) -> Result<ContourPolygon> {
    if data.k() != 2 {
        return Err(Error::Unsupported("tubes are implemented for k = 2".into()));
    }
    if data.p() == 0 || x0.len() != data.p() {
        return Err(Error::Shape(format!("x0 must have {} entries and p must be positive", data.p())));
    }
    let grid = direction_grid(tau, n_directions, settings.convention)?;
    let weights = kernel.weights(data.x(), x0)?;
    let planes: Vec<Halfplane> = grid
        .into_par_iter()
        .enumerate()
        .map(|(m, (dir, basis))| {
            let proj = crate::geometry::project(data, &dir, &basis)?;
            let design = ConditionalDesign::new(kind, &proj, data.x(), x0)?;
            let theta = match settings.estimator {
                Estimator::Frequentist => fit_check_loss(design.regressors(), &proj.y_u, Some(&weights), tau)?.theta,
                Estimator::BayesMean => {
                    let mcmc = settings.mcmc.with_seed(derive_seed(settings.mcmc.seed, &[m as u64]));
                    let prior = settings.prior_for(design.q())?;
                    let chain = gibbs_conditional(data, &dir, &basis, &design, kernel, &prior, &mcmc, None)?;
                    posterior_mean(&chain)?
                }
            };
            let beta = theta[design.beta_y_indices()[0]];
            slope_halfplane(&dir, &basis, beta, theta[design.intercept_index()])
        })
        .collect::<Result<_>>()?;
    let mut polygon = intersect_halfplanes(&planes)?;
    polygon.tau = Some(tau);
    Ok(polygon)
}

/// Rotate every response by `angle` (counterclockwise).
pub fn rotate_data(data: &Dataset, angle: f64) -> Result<Dataset> {
    let (c, s) = (angle.cos(), angle.sin());
    let y = data.y();
    let rotated = DMatrix::from_fn(data.n(), 2, |i, j| {
        if j == 0 {
            c * y[(i, 0)] - s * y[(i, 1)]
        } else {
            s * y[(i, 0)] + c * y[(i, 1)]
        }
    });
    Dataset::new(rotated, data.x().clone())
}
