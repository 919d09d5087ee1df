//! Safeguarded Newton–bisection for increasing functions.

use crate::error::{Error, Result};

/// Solve `f(x) = target` for increasing `f` on `[lo, hi]`.
///
/// Newton steps are taken from the current iterate and rejected whenever they
/// leave the bracket, in which case the step bisects. Stops when the bracket
/// is below `xtol` or the residual vanishes.
pub fn solve_increasing<F, D>(f: F, df: D, lo: f64, hi: f64, target: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let fa = f(a) - target;
    let fb = f(b) - target;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    // allow a few ulps of slack at the bracket ends
    let slack = 4.0 * f64::EPSILON * target.abs().max(f(a).abs()).max(f(b).abs());
    if fa > slack || fb < -slack {
        return Err(Error::NotBracketed { lo, hi, target });
    }
    if fa > 0.0 {
        return Ok(a);
    }
    if fb < 0.0 {
        return Ok(b);
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= xtol {
            break;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if x == a || x == b {
            break;
        }
    }
    Ok(x.clamp(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let x = solve_increasing(|x| x * x * x + x, |x| 3.0 * x * x + 1.0, -2.0, 2.0, 10.0, 1e-15).unwrap();
        assert!((x - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unbracketed_is_an_error() {
        assert!(solve_increasing(|x| x, |_| 1.0, 0.0, 1.0, 5.0, 1e-12).is_err());
    }

    #[test]
    fn flat_derivative_falls_back_to_bisection() {
        let x = solve_increasing(|x| x.powi(3), |x| 3.0 * x * x, -1.0, 1.0, 0.0, 1e-14).unwrap();
        assert!(x.abs() < 1e-4);
        assert!(x.powi(3).abs() < 1e-12);
    }
}
