//! Stationary plate: load, mode denominators and the series solution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::nonlocal::{plate_load, QuadratureRule};

/// Plate `[0, a] × [0, b]` with wave speed `c` and true horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateProblem {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta_true: f64,
}

impl Default for PlateProblem {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            delta_true: 0.1,
        }
    }
}

/// `f(x, y) = −0.05·sin(πx/a)·sin(πy/b)`.
pub fn source_term_2d(x: f64, y: f64, a: f64, b: f64) -> f64 {
    plate_load(x, y, a, b)
}

/// `D_mn = ∫₀^{2π}∫₀^δ (1 − cos(m̄ξ cos φ)·cos(n̄ξ sin φ)) dξ dφ` with `m̄ = mπ/a`,
/// `n̄ = nπ/b`, by a 64 × 64 Gauss–Legendre product rule.
pub fn mode_denominator(m: usize, n: usize, delta: f64, a: f64, b: f64) -> f64 {
    let rule = QuadratureRule::gauss_legendre(64);
    let (mb, nb) = (m as f64 * PI / a, n as f64 * PI / b);
    rule.integrate(0.0, 2.0 * PI, |phi| {
        let (s, c) = phi.sin_cos();
        rule.integrate(0.0, delta, |xi| 1.0 - (mb * xi * c).cos() * (nb * xi * s).cos())
    })
}

/// Sine coefficient `(4/ab)∫∫ f sin(m̄x) sin(n̄y)` of the load. The load is the single
/// `(1, 1)` mode, so this is exact.
pub fn load_coefficient(m: usize, n: usize) -> f64 {
    if m == 1 && n == 1 {
        -0.05
    } else {
        0.0
    }
}

/// Series solution `θ(x, y) = Σ F_mn·(πδ³/(6c²))/D_mn · sin(m̄x)·sin(n̄y)` truncated at
/// `m ≤ m_max`, `n ≤ n_max`.
pub fn exact_solution_2d(x: f64, y: f64, delta: f64, m_max: usize, n_max: usize, plate: &PlateProblem) -> f64 {
    assert!(m_max >= 1 && n_max >= 1, "truncation must keep at least one mode");
    let mut sum = 0.0;
    for m in 1..=m_max {
        for n in 1..=n_max {
            let f = load_coefficient(m, n);
            if f == 0.0 {
                continue;
            }
            let d = mode_denominator(m, n, delta, plate.a, plate.b);
            let amp = f * (PI * delta.powi(3) / (6.0 * plate.c * plate.c)) / d;
            sum += amp * (m as f64 * PI * x / plate.a).sin() * (n as f64 * PI * y / plate.b).sin();
        }
    }
    sum
}

/// The exact solution with its one surviving mode precomputed, for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PlateSolution {
    plate: PlateProblem,
    amplitude: f64,
}

impl PlateSolution {
    pub fn new(plate: PlateProblem, delta: f64) -> Self {
        let d = mode_denominator(1, 1, delta, plate.a, plate.b);
        let amplitude = load_coefficient(1, 1) * (PI * delta.powi(3) / (6.0 * plate.c * plate.c)) / d;
        Self { plate, amplitude }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (PI * x / self.plate.a).sin() * (PI * y / self.plate.b).sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_examples() {
        assert_eq!(source_term_2d(0.5, 0.5, 1.0, 1.0), -0.05);
        assert_eq!(source_term_2d(0.0, 0.4, 1.0, 1.0), 0.0);
        assert!((source_term_2d(0.25, 0.75, 1.0, 1.0) + 0.025).abs() < 1e-15);
    }

    #[test]
    fn denominator_small_delta_asymptote() {
        for (m, n) in [(1, 1), (1, 2), (3, 2)] {
            let delta = 1e-3;
            let d = mode_denominator(m, n, delta, 1.0, 1.0);
            let mb2 = (m as f64 * PI).powi(2) + (n as f64 * PI).powi(2);
            let asym = PI * mb2 * delta.powi(3) / 6.0;
            assert!((d - asym).abs() / asym < 1e-4, "{m},{n}: {d} vs {asym}");
        }
    }

    #[test]
    fn edges_vanish_and_symmetry_holds() {
        let p = PlateProblem::default();
        assert_eq!(exact_solution_2d(0.0, 0.3, 0.1, 3, 3, &p), 0.0);
        let a = exact_solution_2d(0.2, 0.7, 0.1, 1, 1, &p);
        let b = exact_solution_2d(0.7, 0.2, 0.1, 1, 1, &p);
        assert!((a - b).abs() < 1e-18);
    }

    #[test]
    fn truncation_does_not_matter() {
        let p = PlateProblem::default();
        let a = exact_solution_2d(0.3, 0.6, 0.1, 1, 1, &p);
        let b = exact_solution_2d(0.3, 0.6, 0.1, 50, 50, &p);
        assert!((a - b).abs() < 1e-15);
        let s = PlateSolution::new(p, 0.1);
        assert_eq!(s.eval(0.3, 0.6), a);
    }

    /// `D₁₁ = 2π∫₀^δ (1 − J₀(√2·πξ)) dξ` from the angular Bessel identity, with the
    /// power series of `J₀` integrated term by term.
    fn bessel_denominator(delta: f64) -> f64 {
        let c = std::f64::consts::SQRT_2 * PI;
        let mut integral_j0 = 0.0;
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            let term =
                (-1.0_f64).powi(k) * (c / 2.0).powi(2 * k) * delta.powi(2 * k + 1) / (fact * fact * (2 * k + 1) as f64);
            integral_j0 += term;
        }
        2.0 * PI * (delta - integral_j0)
    }

    #[test]
    fn center_value_matches_bessel_oracle() {
        for delta in [0.1, 0.05, 0.01] {
            let v = exact_solution_2d(0.5, 0.5, delta, 1, 1, &PlateProblem::default());
            let oracle = -0.05 * (PI * delta.powi(3) / 6.0) / bessel_denominator(delta);
            assert!((v - oracle).abs() < 1e-12, "{delta}: {v} vs {oracle}");
        }
        // finite δ sits about 0.7% beyond the classical limit −0.05/(2π²)
        let v = exact_solution_2d(0.5, 0.5, 0.1, 1, 1, &PlateProblem::default());
        let limit = -0.05 / (2.0 * PI * PI);
        assert!((v / limit - 1.0).abs() < 0.01, "{v}");
    }
}
