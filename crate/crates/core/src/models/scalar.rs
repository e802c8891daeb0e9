//! Scalar abstraction letting the right-hand sides run on plain floats or on
//! dual numbers for exact Jacobians.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::dual::Dual;

pub trait RhsScalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
}

impl RhsScalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
}

impl RhsScalar for Dual {
    fn value(&self) -> f64 {
        self.re
    }
}
