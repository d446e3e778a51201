use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Real;

/// Forward-mode dual number `value + tangent·ε` with `ε² = 0`.
///
/// The component type is itself generic so that `Dual<Dual<f64>>` carries exact second
/// directional derivatives, and `Dual<Var>` composes forward mode with the reverse tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub tangent: T,
}

impl<T: Real> Dual<T> {
    pub fn new(value: T, tangent: T) -> Self {
        Self { value, tangent }
    }

    /// A variable seeded with unit tangent.
    pub fn variable(value: T) -> Self {
        Self {
            value,
            tangent: T::cst(1.0),
        }
    }

    pub fn constant(value: T) -> Self {
        Self {
            value,
            tangent: T::cst(0.0),
        }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Self {
            value: f,
            tangent: df * self.tangent,
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.tangent * rhs.value + self.value * rhs.tangent,
        )
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self::new(q, (self.tangent - q * rhs.tangent) / rhs.value)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.tangent)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self::new(self.value + rhs, self.tangent)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self::new(self.value - rhs, self.tangent)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.value * rhs, self.tangent * rhs)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        Self::new(self.value / rhs, self.tangent / rhs)
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(value: f64) -> Self {
        Self::constant(T::cst(value))
    }

    fn value(&self) -> f64 {
        self.value.value()
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.chain(t, -(t * t) + 1.0)
    }

    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, T::cst(0.5) / s)
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        self.chain(self.value.powi(n), self.value.powi(n - 1) * n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<Dual<f64>>;

    fn seed2(x: f64) -> D2 {
        Dual::new(Dual::variable(x), Dual::constant(1.0))
    }

    #[test]
    fn constant_has_zero_tangent() {
        let c = Dual::<f64>::cst(3.5);
        assert_eq!(c.tangent, 0.0);
        let x = Dual::variable(2.0);
        let y = x * c + c;
        assert_eq!(y.tangent, 3.5);
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::variable(2.0_f64);
        let y = (x * x) / (x + 1.0);
        // d/dx x²/(x+1) = (x² + 2x)/(x+1)²
        assert!((y.tangent - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn nested_second_derivative_of_polynomial() {
        let x = seed2(1.5);
        let y = x.powi(3);
        assert!((y.tangent.tangent - 9.0).abs() < 1e-14);
        assert!((y.value.tangent - 6.75).abs() < 1e-14);
    }

    #[test]
    fn nested_second_derivative_of_tanh_sin_exp() {
        let x0 = 0.3;
        let h = 1e-4;
        let fs: [fn(f64) -> f64; 4] = [f64::tanh, f64::sin, f64::exp, |v: f64| v.sqrt()];
        let gs: [fn(D2) -> D2; 4] = [Real::tanh, Real::sin, Real::exp, Real::sqrt];
        for (f, g) in fs.iter().zip(gs.iter()) {
            let fd = (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h);
            let ad = g(seed2(x0)).tangent.tangent;
            assert!((fd - ad).abs() < 1e-6, "fd={fd} ad={ad}");
        }
    }

    #[test]
    fn abs_is_right_sided_at_zero() {
        let y = Dual::variable(0.0_f64).abs();
        assert_eq!(y.tangent, 1.0);
        let z = Dual::variable(0.0_f64).relu();
        assert_eq!(z.tangent, 1.0);
        let w = Dual::variable(-1e-300_f64).relu();
        assert_eq!(w.tangent, 0.0);
    }
}
