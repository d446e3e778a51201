//! Differentiation engine.
//!
//! Reverse mode ([`Tape`]/[`Var`]) supplies parameter gradients of scalar losses; nested
//! forward mode ([`Dual`]) supplies exact second derivatives of a field with respect to its
//! input coordinates. Both plug into code written against the [`Real`] trait, so a single
//! generic implementation of a computation can be evaluated in either mode, or with the
//! modes composed (`Dual<Dual<Var>>` gives the parameter gradient of a second derivative).

mod dual;
mod real;
mod tape;

pub use dual::Dual;
pub use real::Real;
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("unregistered primitive `{0}`")]
    UnregisteredPrimitive(String),
}

/// A scalar function of a point, evaluable in any [`Real`] type.
pub trait ScalarField {
    fn eval<T: Real>(&self, point: &[T]) -> T;
}

/// Gradient of `f` at `params` by one reverse sweep over a fresh tape.
pub fn grad<F>(f: F, params: &[f64]) -> Vec<f64>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(params);
    let out = f(&vars);
    tape.gradient(out, &vars)
}

/// Value of a tape-generic function, evaluated without recording anything.
pub fn eval_value<F>(f: &F, params: &[f64]) -> f64
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let consts: Vec<Var<'_>> = params.iter().map(|&p| Var::constant(p)).collect();
    f(&consts).value()
}

/// Exact `∂²f/∂x_axis²` at `point`, by pushing a doubly nested dual through `f`.
pub fn second_derivative_in<F: ScalarField>(field: &F, point: &[f64], axis: usize) -> f64 {
    let lifted: Vec<f64> = point.to_vec();
    second_derivative_generic(|p| field.eval(p), &lifted, axis)
}

/// Second derivative along `axis` for a closure already generic over its inner scalar.
///
/// `T` may itself be a tape variable; the result then records how the second derivative
/// depends on whatever `T` depends on.
pub fn second_derivative_generic<T, F>(f: F, point: &[T], axis: usize) -> T
where
    T: Real,
    F: FnOnce(&[Dual<Dual<T>>]) -> Dual<Dual<T>>,
{
    let seeded: Vec<Dual<Dual<T>>> = point
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == axis {
                Dual::new(Dual::variable(v), Dual::constant(T::cst(1.0)))
            } else {
                Dual::constant(Dual::constant(v))
            }
        })
        .collect();
    f(&seeded).tangent.tangent
}

/// First derivative along `axis`.
pub fn derivative_in<F: ScalarField>(field: &F, point: &[f64], axis: usize) -> f64 {
    let seeded: Vec<Dual<f64>> = point
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == axis {
                Dual::variable(v)
            } else {
                Dual::constant(v)
            }
        })
        .collect();
    field.eval(&seeded).tangent
}

/// Relative error with a unit floor: `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Compares a reverse-mode gradient with central differences on the given components
/// and returns the worst [`relative_error`].
pub fn check_components<V>(value: V, gradient: &[f64], params: &[f64], h: f64, components: &[usize]) -> f64
where
    V: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut work = params.to_vec();
    let mut worst = 0.0_f64;
    for &i in components {
        let orig = work[i];
        work[i] = orig + h;
        let up = value(&work);
        work[i] = orig - h;
        let down = value(&work);
        work[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(gradient[i], fd));
    }
    worst
}

/// Worst component-wise relative error between the reverse-mode gradient of `f` and
/// central differences with step `h`.
pub fn grad_check<F>(f: F, params: &[f64], h: f64) -> f64
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let g = grad(&f, params);
    let all: Vec<usize> = (0..params.len()).collect();
    check_components(|p| eval_value(&f, p), &g, params, h, &all)
}
