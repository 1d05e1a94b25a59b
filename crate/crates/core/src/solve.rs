//! Bracketed root finding for monotone scalar functions whose evaluation can
//! fail.

use crate::error::{Error, Result};

/// Largest |x| explored while growing a bracket.
const BRACKET_CAP: f64 = 1.0e9;

/// Root of a nondecreasing `f`, searching outward from `[-1, 1]` by
/// doubling. Stops when `|f(x)| ≤ tol`; returns `(x, f(x))`.
pub fn increasing_root(mut f: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    while flo > 0.0 {
        if flo.abs() <= tol {
            return Ok((lo, flo));
        }
        hi = lo;
        fhi = flo;
        lo *= 2.0;
        if lo.abs() > BRACKET_CAP {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: flo,
            });
        }
        flo = f(lo)?;
    }
    while fhi < 0.0 {
        if fhi.abs() <= tol {
            return Ok((hi, fhi));
        }
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        if hi.abs() > BRACKET_CAP {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: fhi,
            });
        }
        fhi = f(hi)?;
    }
    bracketed_root(f, lo, hi, flo, fhi, tol)
}

/// Illinois false position with a bisection safeguard on `[lo, hi]`, where
/// `flo ≤ 0 ≤ fhi`.
pub fn bracketed_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    mut fhi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if flo.abs() <= tol {
        return Ok((lo, flo));
    }
    if fhi.abs() <= tol {
        return Ok((hi, fhi));
    }
    let mut side = 0i8;
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for it in 0..400 {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        let width = hi - lo;
        if !x.is_finite() || x <= lo + 0.01 * width || x >= hi - 0.01 * width || it % 4 == 3 {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() <= tol {
            return Ok((x, fx));
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    if best.1.abs() <= tol {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            iterations: 400,
            residual: best.1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_roots_far_from_origin() {
        let (x, _) = increasing_root(|x| Ok((x - 37.5).tanh()), 1e-14).unwrap();
        assert!((x - 37.5).abs() < 1e-12);
        let (x, _) = increasing_root(|x| Ok(x * x * x + 8.0), 1e-12).unwrap();
        assert!((x + 2.0).abs() < 1e-10);
    }

    #[test]
    fn propagates_errors() {
        let r = increasing_root(|_| Err(Error::EmptySet), 1e-9);
        assert_eq!(r, Err(Error::EmptySet));
    }
}
