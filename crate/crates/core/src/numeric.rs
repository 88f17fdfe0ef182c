//! Small scalar solvers shared by the economic routines.

use std::f64::consts::E;

/// Principal branch of the Lambert W function, `w·e^w = z` for `z ≥ −1/e`.
///
/// Returns `None` below the branch point.
pub fn lambert_w0(z: f64) -> Option<f64> {
    if z.is_nan() {
        return None;
    }
    let branch = -1.0 / E;
    if z < branch {
        // tolerate rounding right at the branch point
        if z > branch - 1e-15 {
            return Some(-1.0);
        }
        return None;
    }
    if z == 0.0 {
        return Some(0.0);
    }
    if z.is_infinite() {
        return Some(f64::INFINITY);
    }
    if z > 1e300 {
        return Some(lambert_w0_of_exp(z.ln()));
    }
    let mut w = if z < -0.25 {
        let p = (2.0 * (E * z + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        z.ln_1p() * (1.0 - z.ln_1p() / (2.0 + z.ln_1p()))
    } else {
        let l = z.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        // Halley step
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    Some(w)
}

/// `W0(e^l)`, i.e. the solution of `w + ln w = l`, usable when `e^l` would
/// overflow or underflow.
pub fn lambert_w0_of_exp(l: f64) -> f64 {
    if l < 600.0 && l > -600.0 {
        return lambert_w0(l.exp()).unwrap_or(0.0);
    }
    if l <= -600.0 {
        // W(z) ≈ z for tiny z
        return l.exp();
    }
    let mut w = l - l.ln();
    for _ in 0..64 {
        let f = w + w.ln() - l;
        let step = f / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

/// Bisection for the boundary of a monotone predicate on `[lo, hi]`.
///
/// `pred(lo)` must be false and `pred(hi)` true; returns the smallest point
/// (to `tol`) where the predicate holds.
pub fn bisect_predicate<F>(mut lo: f64, mut hi: f64, tol: f64, pred: F) -> f64
where
    F: Fn(f64) -> bool,
{
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w0_satisfies_defining_equation() {
        let zs = [
            -1.0 / E,
            -0.36,
            -0.3,
            -0.1,
            -1e-8,
            1e-12,
            0.5,
            1.0,
            E,
            10.0,
            1e3,
            1e10,
            1e100,
            1e305,
        ];
        for &z in &zs {
            let w = lambert_w0(z).unwrap();
            let back = w * w.exp();
            let scale = z.abs().max(1e-300);
            assert!(
                ((back - z) / scale).abs() < 1e-12 || (z < -0.367 && (w + 1.0).abs() < 1e-7),
                "z={z} w={w} back={back}"
            );
        }
        assert_eq!(lambert_w0(0.0), Some(0.0));
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert!(lambert_w0(-0.5).is_none());
    }

    #[test]
    fn w0_of_exp_matches_direct() {
        for l in [-50.0, -3.0, 0.0, 2.0, 30.0, 200.0] {
            let direct = lambert_w0(f64::exp(l)).unwrap();
            assert!((lambert_w0_of_exp(l) - direct).abs() <= 1e-12 * direct.max(1e-20));
        }
        let w = lambert_w0_of_exp(5000.0);
        assert!((w + w.ln() - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn bisection_finds_threshold() {
        let x = bisect_predicate(0.0, 10.0, 1e-12, |v| v * v >= 2.0);
        assert!((x - 2f64.sqrt()).abs() < 1e-11);
    }
}
