//! Differential residual `D(Φ)` of the nonlocal model.
//!
//! The integral term is discretized as a stencil: a list of node positions `y_q(δ)` and
//! coefficients `c_q(δ)` such that the integral equals `Σ c_q (Φ(y_q) − Φ(x))`. Each smooth
//! piece of the integration domain is mapped affinely onto `[-1, 1]`, so `δ` only appears
//! through node positions and coefficients, and differentiating the stencil with respect to
//! `δ` reproduces the Leibniz rule including the moving-bound terms.

mod quadrature;

pub use quadrature::QuadratureRule;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Dual, Real, ScalarField};
use crate::kernels::KernelSpec;
use crate::network::NetworkParams;

#[derive(Debug, Error, PartialEq)]
pub enum NonlocalError {
    #[error("quadrature node count `{name}` must be at least 2, got {value}")]
    TooFewNodes { name: &'static str, value: usize },
    #[error("spatial domain [{lo}, {hi}] is empty")]
    EmptyDomain { lo: f64, hi: f64 },
    #[error("wave speed must be positive, got {0}")]
    WaveSpeed(f64),
}

/// Orientation of the integrand.
///
/// `Standard` integrates `C(x − y)(u(y) − u(x))`, which gives oscillatory waves with
/// `ω = √M(k)`. `Paper` integrates `C(x − y)(u(x) − u(y))` verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    Paper,
    #[default]
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    pub sign_convention: SignConvention,
    pub quad_nodes_1d: usize,
    pub quad_nodes_radial: usize,
    pub quad_nodes_angular: usize,
    pub wave_speed: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            sign_convention: SignConvention::Standard,
            quad_nodes_1d: 16,
            quad_nodes_radial: 8,
            quad_nodes_angular: 16,
            wave_speed: 1.0,
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<(), NonlocalError> {
        for (name, value) in [
            ("quad.nodes_1d", self.quad_nodes_1d),
            ("quad.radial", self.quad_nodes_radial),
            ("quad.angular", self.quad_nodes_angular),
        ] {
            if value < 2 {
                return Err(NonlocalError::TooFewNodes { name, value });
            }
        }
        if !(self.wave_speed.is_finite() && self.wave_speed > 0.0) {
            return Err(NonlocalError::WaveSpeed(self.wave_speed));
        }
        Ok(())
    }
}

/// Geometry and physics of one of the two supported settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim")]
pub enum Problem {
    /// 1D dynamics in `(x, t)` on `[lo, hi]`.
    #[serde(rename = "1")]
    Line { kernel: KernelSpec, domain: (f64, f64) },
    /// 2D stationary plate `[0, a] × [0, b]` in `(x, y)` with the sinusoidal load.
    #[serde(rename = "2")]
    Plate { a: f64, b: f64 },
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Line { .. } => 1,
            Problem::Plate { .. } => 2,
        }
    }
}

/// `f(x, y) = −0.05·sin(πx/a)·sin(πy/b)`.
pub fn plate_load(x: f64, y: f64, a: f64, b: f64) -> f64 {
    -0.05 * (PI * x / a).sin() * (PI * y / b).sin()
}

/// Quadrature nodes and coefficients of the integral term at one collocation point.
#[derive(Debug, Clone)]
pub struct Stencil<T> {
    pub nodes: Vec<[T; 2]>,
    pub coeffs: Vec<T>,
}

impl<T> Stencil<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The residual operator for one problem, with its quadrature rules prepared.
#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    problem: Problem,
    cfg: ResidualConfig,
    rule_1d: QuadratureRule,
    rule_radial: QuadratureRule,
    rule_angular: QuadratureRule,
}

impl NonlocalOperator {
    pub fn new(problem: Problem, cfg: ResidualConfig) -> Result<Self, NonlocalError> {
        cfg.validate()?;
        match &problem {
            Problem::Line { domain, .. } if !(domain.1 > domain.0) => {
                return Err(NonlocalError::EmptyDomain {
                    lo: domain.0,
                    hi: domain.1,
                })
            }
            Problem::Plate { a, b } if !(*a > 0.0 && *b > 0.0) => {
                return Err(NonlocalError::EmptyDomain { lo: 0.0, hi: a.min(*b) })
            }
            _ => {}
        }
        Ok(Self {
            rule_1d: QuadratureRule::gauss_legendre(cfg.quad_nodes_1d),
            rule_radial: QuadratureRule::gauss_legendre(cfg.quad_nodes_radial),
            rule_angular: QuadratureRule::gauss_legendre(cfg.quad_nodes_angular),
            problem,
            cfg,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &ResidualConfig {
        &self.cfg
    }

    /// Whether `D` contains `∂²Φ/∂t²` (1D dynamics) or not (2D statics).
    pub fn has_time_term(&self) -> bool {
        matches!(self.problem, Problem::Line { .. })
    }

    /// Input axis of the time coordinate.
    pub const TIME_AXIS: usize = 1;

    /// Constant part of `D` at a point: `−f(x, y)` for the plate, zero in 1D.
    pub fn offset(&self, center: [f64; 2]) -> f64 {
        match self.problem {
            Problem::Line { .. } => 0.0,
            Problem::Plate { a, b } => -plate_load(center[0], center[1], a, b),
        }
    }

    /// Builds the stencil at `center` for horizon `delta`.
    pub fn stencil<T: Real>(&self, center: [f64; 2], delta: T) -> Stencil<T> {
        match &self.problem {
            Problem::Line { kernel, domain } => self.line_stencil(kernel, *domain, center, delta),
            Problem::Plate { .. } => self.plate_stencil(center, delta),
        }
    }

    fn line_stencil<T: Real>(&self, kernel: &KernelSpec, domain: (f64, f64), center: [f64; 2], delta: T) -> Stencil<T> {
        let [x, t] = center;
        let sign = match self.cfg.sign_convention {
            SignConvention::Standard => -1.0,
            SignConvention::Paper => 1.0,
        };
        let pieces = kernel.smooth_pieces(x, delta, domain);
        let n = self.rule_1d.order();
        let mut nodes = Vec::with_capacity(pieces.len() * n);
        let mut coeffs = Vec::with_capacity(pieces.len() * n);
        for piece in pieces {
            let mid = (piece.lo + piece.hi) * 0.5;
            let half = (piece.hi - piece.lo) * 0.5;
            for (&s, &w) in self.rule_1d.nodes.iter().zip(&self.rule_1d.weights) {
                let y = mid + half * s;
                let c = kernel.eval_generic(T::cst(x) - y, delta);
                nodes.push([y, T::cst(t)]);
                coeffs.push(half * c * (sign * w));
            }
        }
        Stencil { nodes, coeffs }
    }

    fn plate_stencil<T: Real>(&self, center: [f64; 2], delta: T) -> Stencil<T> {
        let c2 = self.cfg.wave_speed * self.cfg.wave_speed;
        // −(6c²/(πδ³)) · (δ/2) · π = −3c²/δ²
        let scale = -(delta * delta).powi(-1) * (3.0 * c2);
        let nr = self.rule_radial.order();
        let na = self.rule_angular.order();
        let mut nodes = Vec::with_capacity(nr * na);
        let mut coeffs = Vec::with_capacity(nr * na);
        for (&sr, &wr) in self.rule_radial.nodes.iter().zip(&self.rule_radial.weights) {
            let xi = delta * (0.5 * (1.0 + sr));
            for (&sa, &wa) in self.rule_angular.nodes.iter().zip(&self.rule_angular.weights) {
                let phi = PI * (1.0 + sa);
                nodes.push([xi * phi.cos() + center[0], xi * phi.sin() + center[1]]);
                coeffs.push(scale * (wr * wa));
            }
        }
        Stencil { nodes, coeffs }
    }

    /// `D(Φ)` at `center`, generic in the scalar type of both `Φ` and `δ`.
    ///
    /// `phi` evaluates the field; `phi_tt` must be supplied when the problem has a time term.
    pub fn residual_generic<T, F>(&self, phi: F, phi_tt: Option<T>, center: [f64; 2], delta: T) -> T
    where
        T: Real,
        F: Fn(&[T]) -> T,
    {
        let stencil = self.stencil(center, delta);
        let phi_c = phi(&[T::cst(center[0]), T::cst(center[1])]);
        let mut acc = T::cst(self.offset(center));
        if self.has_time_term() {
            acc = acc + phi_tt.expect("time term required for the 1D residual");
        }
        for (node, &c) in stencil.nodes.iter().zip(&stencil.coeffs) {
            acc = acc + c * (phi(node) - phi_c);
        }
        acc
    }

    /// `D(Φ)` for any field evaluable at dual points.
    pub fn residual_of<F: ScalarField>(&self, field: &F, center: [f64; 2], delta: f64) -> f64 {
        let tt = if self.has_time_term() {
            Some(crate::autodiff::second_derivative_in(field, &center, Self::TIME_AXIS))
        } else {
            None
        };
        self.residual_generic(|p: &[f64]| field.eval(p), tt, center, delta)
    }

    /// `∂D(Φ)/∂δ` through node positions, coefficients and bounds.
    pub fn residual_delta_derivative_of<F: ScalarField>(&self, field: &F, center: [f64; 2], delta: f64) -> f64 {
        // Φ_tt does not depend on δ.
        let tt = self.has_time_term().then(|| Dual::constant(0.0));
        self.residual_generic(|p: &[Dual<f64>]| field.eval(p), tt, center, Dual::variable(delta))
            .tangent
    }
}

/// `D(Φ)(x, t)` for the network, with horizon `params.horizon()`.
pub fn residual_1d(
    params: &NetworkParams,
    x: f64,
    t: f64,
    kernel: &KernelSpec,
    cfg: &ResidualConfig,
    domain: (f64, f64),
) -> Result<f64, NonlocalError> {
    let op = NonlocalOperator::new(
        Problem::Line {
            kernel: *kernel,
            domain,
        },
        cfg.clone(),
    )?;
    Ok(op.residual_of(params, [x, t], params.horizon()))
}

/// `D(Φ)(x, y)` for the stationary plate.
pub fn residual_2d(
    params: &NetworkParams,
    x: f64,
    y: f64,
    cfg: &ResidualConfig,
    a: f64,
    b: f64,
) -> Result<f64, NonlocalError> {
    let op = NonlocalOperator::new(Problem::Plate { a, b }, cfg.clone())?;
    Ok(op.residual_of(params, [x, y], params.horizon()))
}

/// `∂D(Φ)/∂δ` at `(x, t)`.
pub fn residual_delta_derivative(
    params: &NetworkParams,
    x: f64,
    t: f64,
    kernel: &KernelSpec,
    cfg: &ResidualConfig,
    domain: (f64, f64),
) -> Result<f64, NonlocalError> {
    let op = NonlocalOperator::new(
        Problem::Line {
            kernel: *kernel,
            domain,
        },
        cfg.clone(),
    )?;
    Ok(op.residual_delta_derivative_of(params, [x, t], params.horizon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Architecture};

    struct Const(f64);
    impl ScalarField for Const {
        fn eval<T: Real>(&self, p: &[T]) -> T {
            p[0] * 0.0 + self.0
        }
    }

    struct Linear;
    impl ScalarField for Linear {
        fn eval<T: Real>(&self, p: &[T]) -> T {
            p[0] * 1.5 - 0.25
        }
    }

    struct Square;
    impl ScalarField for Square {
        fn eval<T: Real>(&self, p: &[T]) -> T {
            p[0] * p[0]
        }
    }

    struct Smooth;
    impl ScalarField for Smooth {
        fn eval<T: Real>(&self, p: &[T]) -> T {
            (p[0] * 0.7).sin() * (p[1] * 1.3).cos() + p[1] * p[1] * 0.5
        }
    }

    fn line(kernel: KernelSpec, domain: (f64, f64), sign: SignConvention) -> NonlocalOperator {
        NonlocalOperator::new(
            Problem::Line { kernel, domain },
            ResidualConfig {
                sign_convention: sign,
                ..ResidualConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ResidualConfig {
            quad_nodes_1d: 1,
            ..ResidualConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(NonlocalError::TooFewNodes { .. })));
    }

    #[test]
    fn stencil_integrates_kernel_mass() {
        let tent = line(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), SignConvention::Paper);
        let s = tent.stencil([0.0, 0.0], 1.0);
        let mass: f64 = s.coeffs.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let v = line(
            KernelSpec::vshape(0.6, 10.0).unwrap(),
            (-40.0, 40.0),
            SignConvention::Paper,
        );
        let s = v.stencil([0.0, 0.0], 10.0);
        let mass: f64 = s.coeffs.iter().sum();
        assert!((mass - 60.0).abs() < 1e-12);
    }

    #[test]
    fn constants_and_affine_fields_are_annihilated() {
        for sign in [SignConvention::Paper, SignConvention::Standard] {
            let op = line(KernelSpec::vshape(0.6, 10.0).unwrap(), (-40.0, 40.0), sign);
            assert_eq!(op.residual_of(&Const(3.0), [1.0, 0.3], 10.0), 0.0);
            assert!(op.residual_of(&Linear, [1.0, 0.3], 10.0).abs() < 1e-12);
            assert_eq!(op.residual_delta_derivative_of(&Const(3.0), [1.0, 0.3], 10.0), 0.0);
        }
    }

    #[test]
    fn tent_square_residual_is_one_sixth() {
        for x in [-1.3, 0.0, 0.4, 2.0] {
            let p = line(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), SignConvention::Paper);
            assert!((p.residual_of(&Square, [x, 0.0], 1.0) - 1.0 / 6.0).abs() < 1e-10);
            let s = line(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), SignConvention::Standard);
            assert!((s.residual_of(&Square, [x, 0.0], 1.0) + 1.0 / 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_derivative_matches_differences_for_tent() {
        let op = line(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), SignConvention::Standard);
        for x in [-0.7, 0.0, 1.9] {
            let ad = op.residual_delta_derivative_of(&Square, [x, 0.0], 1.0);
            let h = 1e-6;
            let fd =
                (op.residual_of(&Square, [x, 0.0], 1.0 + h) - op.residual_of(&Square, [x, 0.0], 1.0 - h)) / (2.0 * h);
            // −d/dδ (δ⁴/6) = −2δ³/3
            assert!((ad + 2.0 / 3.0).abs() < 1e-10, "{ad}");
            assert!(crate::autodiff::relative_error(ad, fd) < 1e-6);
        }
    }

    #[test]
    fn delta_derivative_with_clipped_bounds() {
        let kernels = [
            (KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), 3.6),
            (KernelSpec::vshape(0.6, 10.0).unwrap(), (-40.0, 40.0), 35.0),
            (KernelSpec::distributed(10.0, 1.0).unwrap(), (-10.0, 10.0), 0.5),
            (KernelSpec::distributed(10.0, 1.0).unwrap(), (-10.0, 10.0), -2.5),
        ];
        for (k, dom, x) in kernels {
            let op = line(k, dom, SignConvention::Standard);
            let d = k.delta().unwrap();
            let ad = op.residual_delta_derivative_of(&Smooth, [x, 0.4], d);
            let h = 1e-6;
            let fd = (op.residual_of(&Smooth, [x, 0.4], d + h) - op.residual_of(&Smooth, [x, 0.4], d - h)) / (2.0 * h);
            assert!(crate::autodiff::relative_error(ad, fd) < 1e-6, "{k:?}: {ad} vs {fd}");
        }
    }

    #[test]
    fn one_sided_derivative_at_bound_crossing() {
        // x + δ lands exactly on the domain edge.
        let op = line(
            KernelSpec::vshape(0.6, 1.0).unwrap(),
            (-4.0, 4.0),
            SignConvention::Standard,
        );
        let (x, d) = (3.0, 1.0);
        let ad = op.residual_delta_derivative_of(&Smooth, [x, 0.2], d);
        let h = 1e-7;
        let right = (op.residual_of(&Smooth, [x, 0.2], d + h) - op.residual_of(&Smooth, [x, 0.2], d)) / h;
        let left = (op.residual_of(&Smooth, [x, 0.2], d) - op.residual_of(&Smooth, [x, 0.2], d - h)) / h;
        assert!((ad - right).abs() < 1e-5 * (1.0 + right.abs()), "{ad} vs right {right}");
        assert!((left - right).abs() > 1e-3, "expected a kink: {left} vs {right}");
    }

    #[test]
    fn plate_load_values() {
        assert_eq!(plate_load(0.5, 0.5, 1.0, 1.0), -0.05);
        assert_eq!(plate_load(0.0, 0.3, 1.0, 1.0), 0.0);
        assert!((plate_load(0.25, 0.75, 1.0, 1.0) + 0.025).abs() < 1e-15);
    }

    #[test]
    fn zero_network_residual_is_minus_load() {
        let p = crate::network::NetworkParams::zeros(Architecture::default()).with_horizon(0.1);
        let r = residual_2d(&p, 0.5, 0.5, &ResidualConfig::default(), 1.0, 1.0).unwrap();
        assert!((r - 0.05).abs() < 1e-15);
    }

    #[test]
    fn plate_operator_approaches_laplacian() {
        // For Φ = sin(πx)sin(πy): −c²ΔΦ − f = 2π²Φ − f at small δ.
        struct Mode;
        impl ScalarField for Mode {
            fn eval<T: Real>(&self, p: &[T]) -> T {
                (p[0] * PI).sin() * (p[1] * PI).sin()
            }
        }
        let op = NonlocalOperator::new(Problem::Plate { a: 1.0, b: 1.0 }, ResidualConfig::default()).unwrap();
        let c = [0.3, 0.6];
        let local = 2.0 * PI * PI * Mode.eval(&c) - plate_load(c[0], c[1], 1.0, 1.0);
        let gaps: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&d| (op.residual_of(&Mode, c, d) - local).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-2);
    }

    #[test]
    fn network_residual_delta_derivative_matches_differences() {
        let arch = Architecture::new(2, 2, 10);
        let p = init_params(&arch, 17).with_horizon(1.0);
        let k = KernelSpec::tent(1.0).unwrap();
        let cfg = ResidualConfig::default();
        let ad = residual_delta_derivative(&p, 0.3, 0.5, &k, &cfg, (-4.0, 4.0)).unwrap();
        let h = 1e-6;
        let up = residual_1d(&p.clone().with_horizon(1.0 + h), 0.3, 0.5, &k, &cfg, (-4.0, 4.0)).unwrap();
        let dn = residual_1d(&p.clone().with_horizon(1.0 - h), 0.3, 0.5, &k, &cfg, (-4.0, 4.0)).unwrap();
        assert!(crate::autodiff::relative_error(ad, (up - dn) / (2.0 * h)) < 1e-6);
    }
}
