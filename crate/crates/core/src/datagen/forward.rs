//! Dispersion relation and the method-of-lines forward solver for the 1D model.

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::kernels::KernelSpec;
use crate::nonlocal::{NonlocalOperator, Problem, QuadratureRule, ResidualConfig, SignConvention};

/// `(M(k), ω(k))` with `M(k) = ∫ (1 − cos kξ) C(ξ) dξ` over the kernel support.
///
/// The distributed family has unbounded support and is rejected; use
/// [`dispersion_truncated`] for it.
pub fn dispersion(kernel: &KernelSpec, k: f64) -> Result<(f64, f64), DatagenError> {
    let delta = kernel.delta().unwrap_or(0.0);
    let radius = kernel.support_radius(delta);
    if !radius.is_finite() {
        return Err(DatagenError::UnboundedSupport(kernel.name()));
    }
    Ok(dispersion_truncated(kernel, k, radius))
}

/// Dispersion integral restricted to `|ξ| ≤ radius`.
pub fn dispersion_truncated(kernel: &KernelSpec, k: f64, radius: f64) -> (f64, f64) {
    let rule = QuadratureRule::gauss_legendre(16);
    let delta = kernel.delta().unwrap_or(0.0);
    let mut breaks: Vec<f64> = kernel
        .kinks(delta)
        .into_iter()
        .filter(|&b| b > 0.0 && b < radius)
        .collect();
    breaks.insert(0, 0.0);
    breaks.push(radius);
    let mut m = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        // about one oscillation per sub-interval
        let pieces = ((k.abs() * (b - a)) / std::f64::consts::PI).ceil().max(1.0) as usize;
        m += rule.integrate_composite(a, b, pieces, |xi| (1.0 - (k * xi).cos()) * kernel.eval(xi));
    }
    let m = 2.0 * m.max(0.0);
    (m, m.sqrt())
}

/// A spatial profile used for initial displacement or velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude·exp(−((x − center)/width)²)`.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `amplitude·cos(k·x)`.
    Cosine {
        amplitude: f64,
        k: f64,
    },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-((x - center) / width).powi(2)).exp(),
            Profile::Cosine { amplitude, k } => amplitude * (k * x).cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Bonds are cut at the domain edge.
    #[default]
    Free,
    /// The domain is a circle of circumference `hi − lo`.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardProblem1D {
    /// Kernel at the true horizon.
    pub kernel: KernelSpec,
    pub domain: (f64, f64),
    pub t_final: f64,
    pub u0: Profile,
    pub v0: Profile,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub sign_convention: SignConvention,
    /// Internal spatial nodes; `None` picks a resolution from the horizon.
    #[serde(default)]
    pub fine_nodes: Option<usize>,
    /// Time step; `None` picks a stable one.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl ForwardProblem1D {
    /// Gaussian pulse at the domain centre with width `δ*/2`, at rest. Kernels without a
    /// horizon use a sixteenth of the domain.
    pub fn pulse(kernel: KernelSpec, domain: (f64, f64), t_final: f64) -> Self {
        let width = kernel.delta().map_or((domain.1 - domain.0) / 16.0, |d| 0.5 * d);
        Self {
            kernel,
            domain,
            t_final,
            u0: Profile::Gaussian {
                amplitude: 1.0,
                center: 0.5 * (domain.0 + domain.1),
                width,
            },
            v0: Profile::Zero,
            boundary: Boundary::Free,
            sign_convention: SignConvention::Standard,
            fine_nodes: None,
            dt: None,
        }
    }
}

/// Displacement on an output mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementGrid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// `u[j][i]` at `(xs[i], ts[j])`.
    pub u: Vec<Vec<f64>>,
}

impl DisplacementGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[j][i]
    }
}

/// Output mesh abscissae: cell centres of `nx` equal cells.
pub fn output_xs(domain: (f64, f64), nx: usize) -> Vec<f64> {
    let h = (domain.1 - domain.0) / nx as f64;
    (0..nx).map(|i| domain.0 + (i as f64 + 0.5) * h).collect()
}

/// Output times `jT/(nt − 1)`, starting at zero.
pub fn output_ts(t_final: f64, nt: usize) -> Vec<f64> {
    if nt <= 1 {
        return vec![0.0];
    }
    (0..nt).map(|j| j as f64 * t_final / (nt - 1) as f64).collect()
}

struct FineGrid {
    lo: f64,
    h: f64,
    n: usize,
    periodic: bool,
}

impl FineGrid {
    fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h
    }

    /// Indices and cubic Lagrange weights for interpolating at `y`.
    fn stencil(&self, y: f64) -> [(usize, f64); 4] {
        let s = (y - self.lo) / self.h;
        let base = if self.periodic {
            s.floor() as i64 - 1
        } else {
            (s.floor() as i64 - 1).clamp(0, self.n as i64 - 4)
        };
        let mut out = [(0usize, 0.0); 4];
        for (a, slot) in out.iter_mut().enumerate() {
            let ia = base + a as i64;
            let mut w = 1.0;
            for b in 0..4 {
                if b != a {
                    let ib = (base + b as i64) as f64;
                    w *= (s - ib) / (ia as f64 - ib);
                }
            }
            let idx = if self.periodic {
                ia.rem_euclid(self.n as i64) as usize
            } else {
                ia as usize
            };
            *slot = (idx, w);
        }
        out
    }

    fn interpolate(&self, u: &[f64], y: f64) -> f64 {
        self.stencil(y).iter().map(|&(i, w)| w * u[i]).sum()
    }
}

/// Dense discretization `A` of the nonlocal term on the fine grid, with `u'' = A u`.
struct Discretization {
    grid: FineGrid,
    a: Vec<f64>,
    /// `max_i |A_ii|`, the bond stiffness felt by the most connected node.
    stiffness: f64,
}

fn discretize(problem: &ForwardProblem1D) -> Result<Discretization, DatagenError> {
    let (lo, hi) = problem.domain;
    let width = hi - lo;
    let delta = problem.kernel.delta().unwrap_or(0.0);
    let radius = problem.kernel.support_radius(delta);
    let periodic = problem.boundary == Boundary::Periodic;
    if periodic && !(radius < 0.5 * width) {
        return Err(DatagenError::PeriodicSupport { radius, width });
    }
    let reach = if radius.is_finite() { radius } else { width };
    let n = problem
        .fine_nodes
        .unwrap_or_else(|| ((16.0 * width / reach.min(width)).ceil() as usize).clamp(401, 2001));
    if n < 8 {
        return Err(DatagenError::Mesh("at least 8 internal nodes are needed".into()));
    }
    let grid = if periodic {
        FineGrid {
            lo,
            h: width / n as f64,
            n,
            periodic,
        }
    } else {
        FineGrid {
            lo,
            h: width / (n - 1) as f64,
            n,
            periodic,
        }
    };
    // Stencils oriented as ∫C(x − y)(u(y) − u(x)); `SignConvention::Paper` flips the sign.
    let domain = if periodic { (lo - width, hi + width) } else { (lo, hi) };
    let op = NonlocalOperator::new(
        Problem::Line {
            kernel: problem.kernel,
            domain,
        },
        ResidualConfig {
            sign_convention: SignConvention::Paper,
            ..ResidualConfig::default()
        },
    )
    .map_err(|e| DatagenError::Mesh(e.to_string()))?;
    let orient = match problem.sign_convention {
        SignConvention::Standard => 1.0,
        SignConvention::Paper => -1.0,
    };
    let mut a = vec![0.0; n * n];
    let mut stiffness = 0.0_f64;
    for i in 0..n {
        let xi = grid.x(i);
        let st = op.stencil([xi, 0.0], delta);
        let row = &mut a[i * n..(i + 1) * n];
        let mut mass = 0.0;
        for (node, &c) in st.nodes.iter().zip(&st.coeffs) {
            for (j, w) in grid.stencil(node[0]) {
                row[j] += orient * c * w;
            }
            mass += c;
        }
        row[i] -= orient * mass;
        stiffness = stiffness.max(mass.abs());
    }
    Ok(Discretization { grid, a, stiffness })
}

fn apply(a: &[f64], u: &[f64], out: &mut [f64]) {
    let n = u.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        *o = row.iter().zip(u).map(|(r, v)| r * v).sum();
    }
}

/// Largest stable step for the problem: `0.5/√(∫C)`.
pub fn max_stable_dt(problem: &ForwardProblem1D) -> Result<f64, DatagenError> {
    let d = discretize(problem)?;
    Ok(0.5 / d.stiffness.max(f64::MIN_POSITIVE).sqrt())
}

/// Solves `u_tt = ∫C(x − y)(u(y) − u(x)) dy` by velocity Verlet and samples `u` on the
/// `nx × nt` output mesh.
pub fn forward_solve_1d(problem: &ForwardProblem1D, nx: usize, nt: usize) -> Result<DisplacementGrid, DatagenError> {
    if nx == 0 || nt == 0 {
        return Err(DatagenError::Mesh("output mesh counts must be positive".into()));
    }
    if !(problem.t_final >= 0.0) {
        return Err(DatagenError::Mesh("final time must be non-negative".into()));
    }
    let disc = discretize(problem)?;
    let n = disc.grid.n;
    let dt_limit = 0.5 / disc.stiffness.max(f64::MIN_POSITIVE).sqrt();
    let dt_max = match problem.dt {
        Some(dt) if dt > dt_limit => {
            return Err(DatagenError::Unstable {
                requested: dt,
                required: dt_limit,
            })
        }
        Some(dt) => dt,
        None => (0.5 * dt_limit).min(problem.t_final.max(1e-300) / 1000.0),
    };

    let xs = output_xs(problem.domain, nx);
    let ts = output_ts(problem.t_final, nt);
    let mut u: Vec<f64> = (0..n).map(|i| problem.u0.eval(disc.grid.x(i))).collect();
    let mut v: Vec<f64> = (0..n).map(|i| problem.v0.eval(disc.grid.x(i))).collect();
    let mut acc = vec![0.0; n];
    apply(&disc.a, &u, &mut acc);

    let sample = |u: &[f64]| xs.iter().map(|&x| disc.grid.interpolate(u, x)).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(ts.len());
    out.push(sample(&u));
    for w in ts.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / dt_max).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            for i in 0..n {
                v[i] += 0.5 * dt * acc[i];
                u[i] += dt * v[i];
            }
            apply(&disc.a, &u, &mut acc);
            for i in 0..n {
                v[i] += 0.5 * dt * acc[i];
            }
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(DatagenError::NonFinite { t: w[1] });
        }
        out.push(sample(&u));
    }
    Ok(DisplacementGrid { xs, ts, u: out })
}

/// Energy `½|v|² − ½ uᵀ A u` (grid-weighted) along a solve; used to check that the
/// integrator does not drift.
pub fn energy_history(problem: &ForwardProblem1D, samples: usize) -> Result<Vec<f64>, DatagenError> {
    let disc = discretize(problem)?;
    let n = disc.grid.n;
    let dt_limit = 0.5 / disc.stiffness.max(f64::MIN_POSITIVE).sqrt();
    let dt = problem.dt.unwrap_or(0.5 * dt_limit).min(dt_limit);
    let total = (problem.t_final / dt).ceil().max(1.0) as usize;
    let dt = problem.t_final / total as f64;
    let every = (total / samples.max(1)).max(1);
    let mut u: Vec<f64> = (0..n).map(|i| problem.u0.eval(disc.grid.x(i))).collect();
    let mut v: Vec<f64> = (0..n).map(|i| problem.v0.eval(disc.grid.x(i))).collect();
    let mut acc = vec![0.0; n];
    apply(&disc.a, &u, &mut acc);
    let energy = |u: &[f64], v: &[f64], acc: &[f64]| {
        let kinetic: f64 = v.iter().map(|x| x * x).sum();
        let potential: f64 = -u.iter().zip(acc).map(|(a, b)| a * b).sum::<f64>();
        0.5 * disc.grid.h * (kinetic + potential)
    };
    let mut out = vec![energy(&u, &v, &acc)];
    for step in 1..=total {
        for i in 0..n {
            v[i] += 0.5 * dt * acc[i];
            u[i] += dt * v[i];
        }
        apply(&disc.a, &u, &mut acc);
        for i in 0..n {
            v[i] += 0.5 * dt * acc[i];
        }
        if step % every == 0 {
            out.push(energy(&u, &v, &acc));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dispersion_vanishes_at_zero() {
        for k in [
            KernelSpec::tent(1.0).unwrap(),
            KernelSpec::vshape(0.6, 10.0).unwrap(),
            KernelSpec::gauss(1.0, 2.0).unwrap(),
        ] {
            assert_eq!(dispersion(&k, 0.0).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn tent_dispersion_closed_form() {
        // 2∫₀¹(1 − cos πξ)(1 − ξ)dξ = 1 − 4/π²
        let (m, w) = dispersion(&KernelSpec::tent(1.0).unwrap(), PI).unwrap();
        assert!((m - (1.0 - 4.0 / (PI * PI))).abs() < 1e-10, "{m}");
        assert!((w - m.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn vshape_dispersion_high_frequency_limit() {
        let k = KernelSpec::vshape(0.6, 2.0).unwrap();
        let (m, _) = dispersion(&k, 1e3).unwrap();
        let mass = 0.6 * 4.0;
        assert!((m - mass).abs() / mass < 1e-3, "{m}");
    }

    #[test]
    fn dispersion_is_even_and_nonnegative() {
        let k = KernelSpec::vshape(0.6, 10.0).unwrap();
        for kk in [0.1, 0.7, 3.0, 11.0] {
            let (a, _) = dispersion(&k, kk).unwrap();
            let (b, _) = dispersion(&k, -kk).unwrap();
            assert!(a >= 0.0);
            assert!((a - b).abs() < 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn distributed_needs_truncation() {
        let k = KernelSpec::distributed(10.0, 1.0).unwrap();
        assert!(matches!(dispersion(&k, 1.0), Err(DatagenError::UnboundedSupport(_))));
        let (m, _) = dispersion_truncated(&k, 1.0, 10.0);
        assert!(m > 0.0);
    }

    #[test]
    fn zero_and_constant_states_stay_put() {
        let mut p = ForwardProblem1D::pulse(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), 1.0);
        p.u0 = Profile::Zero;
        let g = forward_solve_1d(&p, 10, 5).unwrap();
        assert!(g.u.iter().flatten().all(|&v| v == 0.0));
        p.u0 = Profile::Constant { value: 2.5 };
        let g = forward_solve_1d(&p, 10, 5).unwrap();
        assert!(g.u.iter().flatten().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn output_mesh_shape() {
        let p = ForwardProblem1D::pulse(KernelSpec::tent(1.0).unwrap(), (-4.0, 4.0), 1.0);
        let g = forward_solve_1d(&p, 3, 2).unwrap();
        assert_eq!(g.xs.len(), 3);
        assert_eq!(g.ts, vec![0.0, 1.0]);
        assert_eq!(g.u.len(), 2);
        assert!((g.at(1, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plane_wave_follows_dispersion() {
        let kernel = KernelSpec::tent(1.0).unwrap();
        let k = PI;
        let mut p = ForwardProblem1D::pulse(kernel, (0.0, 4.0), 1.0);
        p.u0 = Profile::Cosine { amplitude: 1.0, k };
        p.boundary = Boundary::Periodic;
        let g = forward_solve_1d(&p, 40, 2).unwrap();
        let (_, w) = dispersion(&kernel, k).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &x) in g.xs.iter().enumerate() {
            let exact = (k * x).cos() * w.cos();
            num += (g.at(i, 1) - exact).powi(2);
            den += exact * exact;
        }
        assert!((num / den).sqrt() < 1e-2, "{}", (num / den).sqrt());
    }

    #[test]
    fn requested_step_above_limit_is_refused() {
        let mut p = ForwardProblem1D::pulse(KernelSpec::vshape(0.6, 10.0).unwrap(), (-40.0, 40.0), 1.0);
        p.dt = Some(1.0);
        match forward_solve_1d(&p, 5, 2) {
            Err(DatagenError::Unstable { required, .. }) => {
                assert!(required > 0.0 && required < 1.0);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn energy_has_no_secular_drift() {
        let p = ForwardProblem1D::pulse(KernelSpec::vshape(0.6, 10.0).unwrap(), (-40.0, 40.0), 1.0);
        let e = energy_history(&p, 50).unwrap();
        let e0 = e[0];
        let worst = e.iter().map(|v| (v - e0).abs() / e0).fold(0.0, f64::max);
        assert!(worst < 2.5e-2, "relative energy excursion {worst}");
        // no trend: first-half and second-half means agree
        let half = e.len() / 2;
        let m1 = e[..half].iter().sum::<f64>() / half as f64;
        let m2 = e[half..].iter().sum::<f64>() / (e.len() - half) as f64;
        assert!((m1 - m2).abs() / e0 < 5e-3, "secular drift {m1} -> {m2}");
    }
}
