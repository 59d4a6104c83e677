use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Below this `a` is treated as exactly zero.
const A_ZERO: f64 = 1e-150;

/// Draw from the GIG law with index `½`, density `∝ x^{−1/2} exp(−(a²/x + b²x)/2)`.
///
/// Uses the identity `1/X ~ InverseGaussian(mean b/a, shape b²)` and the
/// Michael–Schucany–Haas transformation, written so that no root is taken of
/// a difference of nearly equal numbers. `a = 0` reduces to `χ²₁ / b²`.
/// `b = 0` is an improper law for this index and is rejected.
pub fn sample_gig_half<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("GIG parameters must be finite and nonnegative, got a={a}, b={b}")));
    }
    if b == 0.0 {
        return Err(Error::Domain("GIG(1/2) with b = 0 is improper".into()));
    }
    let z: f64 = StandardNormal.sample(rng);
    if a < A_ZERO {
        return Ok(z * z / (b * b));
    }
    let mu = b / a;
    let lambda = b * b;
    let t = mu * z * z / (2.0 * lambda);
    let s = 1.0 + t + t.sqrt() * (t + 2.0).sqrt();
    // Smaller inverse-Gaussian root is mu / s; accept it with prob mu / (mu + mu/s).
    let u: f64 = rng.random();
    let x = if u * (1.0 + 1.0 / s) <= 1.0 { s / mu } else { 1.0 / (mu * s) };
    Ok(x)
}

/// `E[X]` under GIG(½, a, b) via the Bessel recurrence for half-integer order.
pub fn gig_half_mean(a: f64, b: f64) -> f64 {
    let z = a * b;
    (a / b) * (1.0 + 1.0 / z)
}

/// `E[X²]` under GIG(½, a, b).
pub fn gig_half_second_moment(a: f64, b: f64) -> f64 {
    let z = a * b;
    (a / b).powi(2) * (1.0 + 3.0 / z + 3.0 / (z * z))
}
