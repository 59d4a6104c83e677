//! Sampling through contours on generated data.

use dirquant::contours::{tau_contour, tukey_depth, ContourSettings, Estimator};
use dirquant::geometry::orthonormal_complement;
use dirquant::inference::posterior_mean;
use dirquant::optimize::frequentist_fit;
use dirquant::samplers::{gibbs_unconditional, McmcSettings, PriorSpec};
use dirquant::simlab::{dgp_sample, DgpId, DgpSpec};
use dirquant::{Dataset, Direction, GammaConvention};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spec(id: DgpId, n: usize, seed: u64) -> Dataset {
    dgp_sample(&DgpSpec { id, n, seed }).unwrap()
}

#[test]
fn posterior_mean_sits_near_the_frequentist_fit() {
    let data = spec(DgpId::BivariateNormal, 2000, 21);
    let dir = Direction::normalized(vec![1.0, 1.0], 0.3).unwrap();
    let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
    let freq = frequentist_fit(&data, &dir, &basis, None).unwrap().theta;
    let prior = PriorSpec::weak(2, 1000.0).unwrap();
    let chain = gibbs_unconditional(&data, &dir, &basis, &prior, &McmcSettings::new(2000, 300, 4).unwrap(), None).unwrap();
    let mean = posterior_mean(&chain).unwrap();
    for (m, f) in mean.iter().zip(&freq) {
        assert!((m - f).abs() < 0.05, "{mean:?} vs {freq:?}");
    }
}

#[test]
fn normal_contours_are_nested_circles() {
    let data = spec(DgpId::BivariateNormal, 4000, 8);
    // Whiten to a standard normal so the regions are discs of radius Φ⁻¹(1 − τ).
    let l22 = 6.75f64.sqrt();
    let y = DMatrix::from_fn(data.n(), 2, |i, j| {
        let (a, b) = (data.y()[(i, 0)], data.y()[(i, 1)]);
        if j == 0 {
            a
        } else {
            (b - 1.5 * a) / l22
        }
    });
    let white = Dataset::location(y).unwrap();
    let settings = ContourSettings { estimator: Estimator::Frequentist, ..Default::default() };
    let mut previous = None;
    for (tau, radius) in [(0.1, 1.2816), (0.25, 0.6745), (0.4, 0.2533)] {
        let poly = tau_contour(&white, tau, 24, &settings).unwrap();
        assert!(poly.is_convex());
        let c = poly.centroid().unwrap();
        assert!(c[0].hypot(c[1]) < 0.08, "centroid {c:?}");
        let area_radius = (poly.area() / std::f64::consts::PI).sqrt();
        assert!((area_radius - radius).abs() < 0.08, "tau {tau}: {area_radius} vs {radius}");
        let depth = tukey_depth(c, &white, 180).unwrap();
        assert!(depth > tau, "depth {depth} at tau {tau}");
        if let Some(outer) = &previous {
            assert!(poly.is_inside(outer, 1e-9));
        }
        previous = Some(poly);
    }
}

#[test]
fn bayes_contour_close_to_frequentist_contour() {
    let data = spec(DgpId::UniformSquare, 1500, 2);
    let freq = ContourSettings { estimator: Estimator::Frequentist, ..Default::default() };
    let bayes = ContourSettings { mcmc: McmcSettings::new(600, 100, 9).unwrap(), ..Default::default() };
    let a = tau_contour(&data, 0.2, 12, &freq).unwrap();
    let b = tau_contour(&data, 0.2, 12, &bayes).unwrap();
    assert!((a.area() - b.area()).abs() < 0.1 * a.area(), "{} vs {}", a.area(), b.area());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Translating the responses by s moves the intercept by uᵀs − βᵀΓᵀs and
    // leaves the slopes alone.
    #[test]
    fn fit_is_translation_equivariant(
        seed in 0u64..1000,
        angle in 0.0f64..std::f64::consts::TAU,
        tau in 0.1f64..0.5,
        sx in -5.0f64..5.0,
        sy in -5.0f64..5.0,
    ) {
        let data = spec(DgpId::BivariateNormal, 200, seed);
        let shifted = Dataset::location(DMatrix::from_fn(200, 2, |i, j| data.y()[(i, j)] + [sx, sy][j])).unwrap();
        let dir = Direction::from_angle(angle, tau).unwrap();
        let basis = orthonormal_complement(dir.u(), GammaConvention::Householder).unwrap();
        let a = frequentist_fit(&data, &dir, &basis, None).unwrap();
        let b = frequentist_fit(&shifted, &dir, &basis, None).unwrap();
        let u = dir.u();
        let g = basis.gamma();
        let us = u[0] * sx + u[1] * sy;
        let gs = g[(0, 0)] * sx + g[(1, 0)] * sy;
        prop_assert!((a.objective - b.objective).abs() < 1e-9 * (1.0 + a.objective));
        prop_assert!((a.theta[0] - b.theta[0]).abs() < 1e-6);
        prop_assert!((b.theta[1] - (a.theta[1] + us - a.theta[0] * gs)).abs() < 1e-6);
    }
}
