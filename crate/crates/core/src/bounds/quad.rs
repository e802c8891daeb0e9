//! Adaptive Simpson quadrature with Richardson correction.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 52;

/// Integrate `f` over `[a, b]` to tolerance `tol`, interpreted as absolute
/// for O(1) integrals and relative for larger ones so the recursion depth
/// stays bounded regardless of integrand scale.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    for (v, t) in [(fa, a), (fm, m), (fb, b)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "quadrature integrand",
                location: format!("t = {t}"),
            });
        }
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    for (v, t) in [(flm, lm), (frm, rm)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "quadrature integrand",
                location: format!("t = {t}"),
            });
        }
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Accept on tolerance, or when the interval is too narrow for f64 to
    // resolve further (the remaining discrepancy is rounding noise).
    if delta.abs() <= 15.0 * tol * (left + right).abs().max(1.0)
        || (b - a) <= f64::EPSILON * (a.abs() + b.abs()).max(1.0)
    {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Convergence(format!(
            "adaptive quadrature did not converge on [{a}, {b}]"
        )));
    }
    let child_tol = (0.5 * tol).max(1e-15);
    let lv = refine(f, a, m, fa, flm, fm, left, child_tol, depth + 1)?;
    let rv = refine(f, m, b, fm, frm, fb, right, child_tol, depth + 1)?;
    Ok(lv + rv)
}
