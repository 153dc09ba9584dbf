//! Scalar root finding and maximisation.

use crate::error::{Error, Result};

/// Bisection on a bracket with a sign change.
///
/// Stops once both `|f(x)|` and the bracket width are below `abs_tolerance`,
/// or the bracket can no longer be split. Returns the point with the
/// smallest residual seen.
pub fn bisect<F>(f: F, lower: f64, upper: f64, abs_tolerance: f64, max_iterations: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lower, upper);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NotBracketed { lower, upper });
    }
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..max_iterations {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if (fm.abs() < abs_tolerance && b - a < abs_tolerance) || mid <= a || mid >= b {
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(best.0)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
/// Returns the abscissa and value of the best point evaluated.
pub fn golden_section_max<F>(f: F, a: f64, b: f64, x_tolerance: f64, max_iterations: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iterations {
        if (b - a).abs() <= x_tolerance {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let ends = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    ends.into_iter().fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best })
}
