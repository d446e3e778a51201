use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type that every differentiable computation in the crate is written against.
///
/// Implemented by `f64` (plain evaluation), [`Dual`](super::Dual) (forward mode, nestable)
/// and [`Var`](super::Var) (reverse mode). Code generic over `Real` can be evaluated in any
/// of these, which is how the network, the kernels and the residual stencils share one
/// implementation across value, gradient and second-derivative passes.
pub trait Real:
    Copy
    + Debug
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
    /// A constant: every derivative part is zero.
    fn cst(value: f64) -> Self;

    /// The primal value with all derivative information dropped.
    fn value(&self) -> f64;

    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    /// `|x|` with derivative `+1` at the kink.
    fn abs(self) -> Self {
        if self.value() >= 0.0 {
            self
        } else {
            -self
        }
    }

    /// `max(x, 0)` with derivative `1` at the kink (right-sided).
    fn relu(self) -> Self {
        if self.value() >= 0.0 {
            self
        } else {
            Self::cst(0.0)
        }
    }

    /// Branch-selecting minimum. Ties resolve to `self`.
    fn min_by_value(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }

    /// Branch-selecting maximum. Ties resolve to `self`.
    fn max_by_value(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn cst(value: f64) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}
