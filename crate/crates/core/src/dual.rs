//! Scalar dual numbers for exact first derivatives of closed-form expressions.
//!
//! Used to differentiate ODE right-hand sides with respect to individual state
//! components: seeding `eps = 1.0` on one component and evaluating the
//! right-hand side yields one Jacobian column, exactly and without step-size
//! tuning. This is separate from the batched tangent propagation in [`crate::nn`],
//! which differentiates network outputs with respect to the time input.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    /// Constant with zero derivative part.
    pub fn constant(re: f64) -> Self {
        Dual { re, eps: 0.0 }
    }

    /// Variable seeded for differentiation.
    pub fn variable(re: f64) -> Self {
        Dual { re, eps: 1.0 }
    }

    pub fn powi(self, n: i32) -> Self {
        Dual {
            re: self.re.powi(n),
            eps: f64::from(n) * self.re.powi(n - 1) * self.eps,
        }
    }

    pub fn powf(self, p: f64) -> Self {
        Dual {
            re: self.re.powf(p),
            eps: p * self.re.powf(p - 1.0) * self.eps,
        }
    }

    pub fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual {
            re: r,
            eps: self.eps / (2.0 * r),
        }
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Dual {
            re: e,
            eps: e * self.eps,
        }
    }

    pub fn ln(self) -> Self {
        Dual {
            re: self.re.ln(),
            eps: self.eps / self.re,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.re / rhs.re,
            (self.eps * rhs.re - self.re * rhs.eps) / (rhs.re * rhs.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, rhs: f64) -> Dual {
        Dual::new(self.re + rhs, self.eps)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, rhs: f64) -> Dual {
        Dual::new(self.re - rhs, self.eps)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual::new(self.re * rhs, self.eps * rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, rhs: f64) -> Dual {
        Dual::new(self.re / rhs, self.eps / rhs)
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self * rhs.re, self * rhs.eps)
    }
}

impl Add<Dual> for f64 {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self + rhs.re, rhs.eps)
    }
}

impl Sub<Dual> for f64 {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self - rhs.re, -rhs.eps)
    }
}

impl Div<Dual> for f64 {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::constant(self) / rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn arithmetic_matches_finite_differences() {
        let f = |x: f64| (3.0 * x * x - 1.0 / x) * x.exp() + x.sqrt() * x.ln();
        let g = |x: Dual| (3.0 * x * x - 1.0 / x) * x.exp() + x.sqrt() * x.ln();
        for &x in &[0.3, 1.0, 2.7] {
            let d = g(Dual::variable(x));
            assert_relative_eq!(d.re, f(x), max_relative = 1e-14);
            assert_relative_eq!(d.eps, fd(f, x), max_relative = 1e-7);
        }
    }

    #[test]
    fn powers_and_quotients() {
        let g = |x: Dual| x.powi(3) / (x + 1.0) - x.powf(1.7);
        let f = |x: f64| x.powi(3) / (x + 1.0) - x.powf(1.7);
        let d = g(Dual::variable(1.4));
        assert_relative_eq!(d.eps, fd(f, 1.4), max_relative = 1e-7);
    }

    #[test]
    fn constants_carry_no_derivative() {
        let c = Dual::constant(5.0);
        let x = Dual::variable(2.0);
        assert_eq!((c * c).eps, 0.0);
        assert_eq!((c * x).eps, 5.0);
    }
}
