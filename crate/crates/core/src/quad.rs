//! Adaptive Gauss-Kronrod (7/15) quadrature, used as an independent oracle
//! for closed-form moments and tail ratios.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrate `f` over `[a, b]`, bisecting the interval with the largest
/// Kronrod error estimate until the summed estimate drops below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let magnitude: f64 = parts.iter().map(|p| p.2.abs()).sum();
        let tol = abs_tol.max(rel_tol * total.abs()).max(64.0 * f64::EPSILON * magnitude);
        if !total.is_finite() {
            return Err(Error::Quadrature { lo: a, hi: b, estimate: err });
        }
        if err <= tol {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { lo: a, hi: b, estimate: err });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval exhausted at machine precision
            return Ok(total);
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Integrate over `[a, inf)` on doubling segments until three consecutive
/// segments contribute less than `rel_tol` of the running total.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, width: f64, rel_tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    let mut w = width;
    let mut quiet = 0;
    for _ in 0..200 {
        let part = integrate(&f, lo, lo + w, rel_tol * 0.1, 0.0)?;
        total += part;
        if part.abs() <= rel_tol * 1e-3 * total.abs() {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo += w;
        w *= 2.0;
    }
    Err(Error::Quadrature { lo: a, hi: f64::INFINITY, estimate: f64::NAN })
}
