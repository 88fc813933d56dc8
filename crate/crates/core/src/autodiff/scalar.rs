//! A numeric interface shared by plain `f64` and tape variables, so vector
//! fields can be written once and evaluated either directly or under
//! differentiation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::Var;

pub trait Scalar:
    Clone
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
    /// A constant in the same context as `self`.
    fn lift(&self, c: f64) -> Self;
    fn tanh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    /// `max(x, 0)`; subgradient 0 at the kink.
    fn relu(&self) -> Self;
    fn max(&self, other: &Self) -> Self;
    fn min(&self, other: &Self) -> Self;
    /// `|x|^e`, 0 at x = 0.
    fn pow_abs(&self, e: &Self) -> Self;
    fn select_ge(&self, threshold: &Self, then: &Self, otherwise: &Self) -> Self;
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn relu(&self) -> Self {
        f64::max(*self, 0.0)
    }
    fn max(&self, other: &Self) -> Self {
        if *self > *other {
            *self
        } else {
            *other
        }
    }
    fn min(&self, other: &Self) -> Self {
        if *self < *other {
            *self
        } else {
            *other
        }
    }
    fn pow_abs(&self, e: &Self) -> Self {
        if *self == 0.0 {
            0.0
        } else {
            self.abs().powf(*e)
        }
    }
    fn select_ge(&self, threshold: &Self, then: &Self, otherwise: &Self) -> Self {
        if *self >= *threshold {
            *then
        } else {
            *otherwise
        }
    }
}

impl Scalar for Var {
    fn lift(&self, c: f64) -> Self {
        self.constant_like(c)
    }
    fn tanh(&self) -> Self {
        Var::tanh(self)
    }
    fn exp(&self) -> Self {
        Var::exp(self)
    }
    fn ln(&self) -> Self {
        Var::ln(self)
    }
    fn relu(&self) -> Self {
        Var::relu(self)
    }
    fn max(&self, other: &Self) -> Self {
        Var::max(self, other)
    }
    fn min(&self, other: &Self) -> Self {
        Var::min(self, other)
    }
    fn pow_abs(&self, e: &Self) -> Self {
        Var::pow_abs(self, e)
    }
    fn select_ge(&self, threshold: &Self, then: &Self, otherwise: &Self) -> Self {
        Var::select_ge(self, threshold, then, otherwise)
    }
}
