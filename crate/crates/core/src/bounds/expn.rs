//! Exponential integral `E_n(x) = ∫_1^∞ e^{-xt} t^{-n} dt` for integer and
//! real order.

use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 400;
const REL_EPS: f64 = 1e-15;

/// Integer-order exponential integral. Series below the switch point `x = 1`,
/// continued fraction above it.
pub fn expn(n: u32, x: f64) -> Result<f64> {
    if x < 0.0 || (x == 0.0 && n <= 1) {
        return Err(Error::Domain(format!(
            "E_{n}(x) requires x > 0 (x >= 0 for n >= 2), got x = {x}"
        )));
    }
    if n == 0 {
        return Ok((-x).exp() / x);
    }
    if x == 0.0 {
        return Ok(1.0 / (n as f64 - 1.0));
    }
    if x > 1.0 {
        expn_continued_fraction(n, x)
    } else {
        expn_series(n, x)
    }
}

/// Power series around x = 0:
/// `E_n(x) = (-x)^{n-1}/(n-1)! (ψ(n) - ln x) - Σ_{m≠n-1} (-x)^m /((m-n+1) m!)`
/// with `ψ(n) = -γ + Σ_{k=1}^{n-1} 1/k`.
fn expn_series(n: u32, x: f64) -> Result<f64> {
    let nm1 = n as i64 - 1;
    let mut sum = if nm1 == 0 {
        -x.ln() - EULER_GAMMA
    } else {
        1.0 / nm1 as f64
    };
    let mut power = 1.0; // (-x)^m / m!
    for m in 1..=MAX_TERMS {
        power *= -x / m as f64;
        let term = if m as i64 == nm1 {
            let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
            power * (psi - x.ln())
        } else {
            -power / (m as f64 - nm1 as f64)
        };
        sum += term;
        if term.abs() < sum.abs() * REL_EPS {
            return Ok(sum);
        }
    }
    Err(Error::Convergence(format!(
        "E_{n}({x}) series did not converge"
    )))
}

/// Modified Lentz evaluation of the continued fraction
/// `E_n(x) = e^{-x} / (x + n - 1·n/(x + n + 2 - 2(n+1)/(x + n + 4 - ...)))`.
fn expn_continued_fraction(n: u32, x: f64) -> Result<f64> {
    let nm1 = n as f64 - 1.0;
    let mut b = x + n as f64;
    let mut c = 1.0 / f64::MIN_POSITIVE;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_TERMS {
        let a = -(i as f64) * (nm1 + i as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < REL_EPS {
            return Ok(h * (-x).exp());
        }
    }
    Err(Error::Convergence(format!(
        "E_{n}({x}) continued fraction did not converge"
    )))
}

/// Real-order exponential integral `E_ν(x) = x^{ν-1} Γ(1-ν, x)`.
///
/// For ν < 1 the upper incomplete gamma argument `1-ν` is positive and the
/// identity applies directly. For larger ν the order is reduced to its
/// fractional base and raised with `ν E_{ν+1}(x) = e^{-x} - x E_ν(x)`.
pub fn expn_real(nu: f64, x: f64) -> Result<f64> {
    if !nu.is_finite() || !x.is_finite() {
        return Err(Error::Domain(format!(
            "E_nu requires finite arguments, got nu = {nu}, x = {x}"
        )));
    }
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "E_nu(x) for real nu requires x > 0, got x = {x}"
        )));
    }
    let rounded = nu.round();
    if (nu - rounded).abs() < 1e-9 && rounded >= 0.0 && rounded <= u32::MAX as f64 {
        return expn(rounded as u32, x);
    }
    if nu < 1.0 {
        let a = 1.0 - nu;
        return Ok(x.powf(nu - 1.0) * gamma_ur(a, x) * gamma(a));
    }
    let steps = nu.floor() as usize;
    let base = nu - steps as f64; // in (0, 1)
    let a = 1.0 - base;
    let mut value = x.powf(base - 1.0) * gamma_ur(a, x) * gamma(a);
    let ex = (-x).exp();
    for k in 0..steps {
        let order = base + k as f64;
        value = (ex - x * value) / order;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::quad::adaptive_simpson;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Quadrature oracle on the defining integral. Substituting `t = 1 + s`
    /// and factoring out `e^{-x}` keeps the integrand O(1) at the origin so
    /// the quadrature works in relative terms even when `E_nu(x)` is tiny.
    fn oracle(nu: f64, x: f64) -> f64 {
        let upper = (45.0 + 20.0 * nu.abs().max(1.0).ln()) / x;
        let tail = adaptive_simpson(
            &|s: f64| (-x * s).exp() * (1.0 + s).powf(-nu),
            0.0,
            upper,
            1e-12,
        )
        .unwrap();
        (-x).exp() * tail
    }

    #[test]
    fn e1_of_one_matches_quadrature() {
        let v = expn(1, 1.0).unwrap();
        assert_relative_eq!(v, oracle(1.0, 1.0), max_relative = 1e-10);
        assert_relative_eq!(v, 0.219_383_934_395_52, max_relative = 1e-10);
    }

    #[test]
    fn integer_orders_match_quadrature_on_both_branches() {
        for n in [1u32, 2, 3, 5, 8] {
            for &x in &[0.05, 0.4, 0.999, 1.0, 1.001, 2.5, 7.0, 20.0] {
                let v = expn(n, x).unwrap();
                assert_relative_eq!(v, oracle(n as f64, x), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn small_x_limit_is_one_over_n_minus_one() {
        assert_relative_eq!(expn(2, 1e-9).unwrap(), 1.0, max_relative = 1e-6);
        assert_relative_eq!(expn(5, 0.0).unwrap(), 0.25, max_relative = 1e-14);
        assert!(expn(1, 0.0).is_err());
        assert!(expn(3, -0.5).is_err());
    }

    #[test]
    fn recurrence_links_consecutive_orders() {
        // n E_{n+1}(x) = e^{-x} - x E_n(x), a cross-check independent of the
        // series/continued-fraction split.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1u32..8);
            let x = rng.gen_range(0.05..8.0);
            let lhs = n as f64 * expn(n + 1, x).unwrap();
            let rhs = (-x).exp() - x * expn(n, x).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
                "n={n} x={x}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn real_order_agrees_with_quadrature() {
        for &nu in &[-4.3, -1.7, -0.5, 0.3, 0.5, 1.5, 2.75, 4.5] {
            for &x in &[0.2, 1.0, 3.0] {
                let v = expn_real(nu, x).unwrap();
                assert_relative_eq!(v, oracle(nu, x), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn real_order_at_integers_matches_integer_path() {
        for n in [1u32, 2, 4] {
            for &x in &[0.3, 2.0] {
                assert_relative_eq!(
                    expn_real(n as f64, x).unwrap(),
                    expn(n, x).unwrap(),
                    max_relative = 1e-14
                );
            }
        }
    }
}
