//! Inverse Gaussian primitives.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::quad;

/// One draw from IG(mu, lambda) by the transformation method with a
/// chi-square root and a uniform acceptance branch.
///
/// The smaller root is evaluated as `mu * (r - s) / (r + s)` style ratio
/// rather than `mu + ... - sqrt(...)`, which loses every digit when the
/// chi-square draw is large relative to `lambda / mu`.
pub fn sample_ig<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0);
    let n: f64 = StandardNormal.sample(rng);
    let s = mu * n * n;
    // x1 = mu + mu s / (2 lambda) - mu/(2 lambda) sqrt(4 lambda s + s^2)
    //    = mu * 2 lambda / (2 lambda + s + sqrt(4 lambda s + s^2))
    let root = (4.0 * lambda * s + s * s).sqrt();
    let x1 = mu * (2.0 * lambda) / (2.0 * lambda + s + root);
    let u: f64 = rng.random();
    if u * (mu + x1) <= mu {
        x1
    } else {
        mu * mu / x1
    }
}

/// Density of IG(mu, lambda) at `y`.
pub fn ig_density(y: f64, mu: f64, lambda: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let d = y - mu;
    (lambda / (2.0 * std::f64::consts::PI * y * y * y)).sqrt() * (-lambda * d * d / (2.0 * mu * mu * y)).exp()
}

/// `E[Y^p]` for `Y ~ IG(1, lambda)` from the finite Bessel-polynomial sum
/// `sum_{k<p} (p-1+k)! / (k! (p-1-k)!) (2 lambda)^{-k}`. Returns `+inf` when
/// the sum overflows.
pub fn ig_moment(p: u32, lambda: f64) -> Result<f64> {
    if p == 0 {
        return invalid("moment order must be >= 1");
    }
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let n = p as f64;
    let x = 1.0 / (2.0 * lambda);
    let mut coeff = 1.0f64;
    let mut pow = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..p {
        let k = k as f64;
        coeff *= (n - 1.0 + k) * (n - k) / k;
        pow *= x;
        sum += coeff * pow;
        if !sum.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(sum)
}

/// Same moment by adaptive quadrature of the density; the independent oracle
/// for [`ig_moment`].
pub fn ig_moment_quadrature(p: i32, lambda: f64) -> Result<f64> {
    let f = |y: f64| y.powi(p) * ig_density(y, 1.0, lambda);
    let head = quad::integrate(f, 0.0, 1.0, 1e-13, 0.0)?;
    let tail = quad::integrate_to_infinity(f, 1.0, 1.0, 1e-13)?;
    Ok(head + tail)
}

/// `P(Z >= x)` for `Z ~ IG(1, lambda)` by quadrature.
pub fn ig_upper_tail(x: f64, lambda: f64) -> Result<f64> {
    quad::integrate_to_infinity(|y| ig_density(y, 1.0, lambda), x.max(0.0), 1.0, 1e-12)
}

/// `E[Z^2 1{Z >= a}]` for `Z ~ IG(1, lambda)` by quadrature.
pub fn ig_truncated_second_moment(a: f64, lambda: f64) -> Result<f64> {
    quad::integrate_to_infinity(|y| y * y * ig_density(y, 1.0, lambda), a.max(0.0), 1.0, 1e-12)
}
