//! Probes of the training dynamics: monotone convergence of δ, the sign indicator
//! `E[Φ·D(Φ)]`, gradient competition, the PL* ratio, the tangent-kernel spectrum and
//! loss stagnation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{BatchJet, JetAxis, NetworkParams};
use crate::training::{LossModel, LossVariant, TrainTrace};

/// Successive δ differences at or below this magnitude count as flat.
pub const MONOTONE_TOL: f64 = 1e-10;
/// Fraction of epochs treated as transient by default.
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.1;
/// Largest point count accepted by [`tangent_kernel_min_eig`].
pub const TANGENT_KERNEL_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("tangent kernel needs at most {limit} points, got {n}")]
    TooManyPoints { n: usize, limit: usize },
    #[error("no points to assemble a tangent kernel from")]
    NoPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
            Direction::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub converged: bool,
    /// Whether δ is monotone over every epoch after the transient.
    pub monotone: bool,
    /// First epoch from which δ stays monotone in `direction` to the end (the trace length
    /// when there is no direction).
    pub monotone_after: usize,
    pub direction: Direction,
    pub final_gap: f64,
}

/// Default transient length for a trace of `epochs` records.
pub fn default_transient(epochs: usize) -> usize {
    (epochs as f64 * DEFAULT_TRANSIENT_FRACTION).round() as usize
}

fn step_sign(d: f64) -> i8 {
    if d > MONOTONE_TOL {
        1
    } else if d < -MONOTONE_TOL {
        -1
    } else {
        0
    }
}

/// Inspects δ over the records after `transient`. The run converged when that stretch is
/// monotone and the final horizon is within `tol` of `delta_true`.
pub fn delta_monotonicity(trace: &TrainTrace, transient: usize, delta_true: f64, tol: f64) -> ConvergenceVerdict {
    let deltas = trace.deltas();
    let n = deltas.len();
    let final_gap = deltas.last().map_or(f64::INFINITY, |d| (d - delta_true).abs());
    let signs: Vec<i8> = deltas.windows(2).map(|w| step_sign(w[1] - w[0])).collect();
    let tail = signs.get(transient.min(signs.len())..).unwrap_or(&[]);
    let up = tail.iter().any(|&s| s > 0);
    let down = tail.iter().any(|&s| s < 0);
    let (direction, wanted) = match (up, down) {
        (true, false) => (Direction::Increasing, 1),
        (false, true) => (Direction::Decreasing, -1),
        _ => (Direction::None, 0),
    };
    let monotone = direction != Direction::None;
    let monotone_after = if monotone {
        // difference k sits between records k and k + 1
        signs.iter().rposition(|&s| s == -wanted).map_or(0, |k| k + 1)
    } else {
        n
    };
    ConvergenceVerdict {
        converged: monotone && final_gap <= tol,
        monotone,
        monotone_after,
        direction,
        final_gap,
    }
}

/// Mean of `Φᵢ·D(Φᵢ)` over interior points.
pub fn sign_indicator(params: &NetworkParams, model: &LossModel) -> f64 {
    model.evaluate(params, false).sign_indicator()
}

/// Fraction of records after `transient` whose sign indicator has the sign of the realized
/// δ step. Steps below [`MONOTONE_TOL`] are skipped; `None` if nothing is left.
pub fn sign_consistency(trace: &TrainTrace, delta_init: f64, transient: usize) -> Option<f64> {
    let mut prev = delta_init;
    let mut hits = 0usize;
    let mut total = 0usize;
    for (k, r) in trace.records.iter().enumerate() {
        let step = step_sign(r.delta - prev);
        prev = r.delta;
        if k < transient || step == 0 || r.sign_indicator == 0.0 {
            continue;
        }
        total += 1;
        if (r.sign_indicator > 0.0) == (step > 0) {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCompetition {
    /// `⟨∇R_s, ∇R_d⟩`.
    pub inner: f64,
    /// `⟨∇R_s, ∇R_d⟩ / L`, absent when `L = 0`.
    pub ratio: Option<f64>,
}

pub fn grad_competition(params: &NetworkParams, model: &LossModel, variant: LossVariant) -> GradCompetition {
    let r = model.evaluate(params, true);
    let inner: f64 = r
        .grad_s(variant)
        .iter()
        .zip(r.grad_d(variant))
        .map(|(a, b)| a * b)
        .sum();
    let loss = r.loss(variant);
    GradCompetition {
        inner,
        ratio: (loss > 0.0).then(|| inner / loss),
    }
}

/// `‖∇L‖² / L`, absent when `L = 0`.
pub fn pl_ratio(params: &NetworkParams, model: &LossModel, variant: LossVariant) -> Option<f64> {
    let r = model.evaluate(params, true);
    let loss = r.loss(variant);
    (loss > 0.0).then(|| r.grad(variant).iter().map(|g| g * g).sum::<f64>() / loss)
}

/// Smallest eigenvalue of `K = J·Jᵀ` with `J` the Jacobian of `Φ` at the data points with
/// respect to the network weights.
pub fn tangent_kernel_min_eig(params: &NetworkParams, model: &LossModel) -> Result<f64, DiagnosticsError> {
    tangent_kernel_min_eig_at(params, model.data_coords())
}

pub fn tangent_kernel_min_eig_at(params: &NetworkParams, points: &[[f64; 2]]) -> Result<f64, DiagnosticsError> {
    let k = tangent_kernel(params, points)?;
    let eig = SymmetricEigen::new(k);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// The Gram matrix of parameter-Jacobian rows.
pub fn tangent_kernel(params: &NetworkParams, points: &[[f64; 2]]) -> Result<DMatrix<f64>, DiagnosticsError> {
    let n = points.len();
    if n == 0 {
        return Err(DiagnosticsError::NoPoints);
    }
    if n > TANGENT_KERNEL_LIMIT {
        return Err(DiagnosticsError::TooManyPoints {
            n,
            limit: TANGENT_KERNEL_LIMIT,
        });
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let jet = BatchJet::forward(params, &flat, JetAxis::Value);
    let w = params.weights().len();
    let mut jac = DMatrix::zeros(n, w);
    let mut seed = vec![0.0; n];
    let mut g = vec![0.0; params.values().len()];
    for i in 0..n {
        seed.fill(0.0);
        seed[i] = 1.0;
        g.fill(0.0);
        jet.backward(params, &seed, None, &mut g, None);
        for (j, &v) in g[..w].iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(&jac * jac.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagnationFlags {
    pub data: bool,
    pub residual: bool,
}

/// Flags a loss column whose best value over the trailing `window` records improves on the
/// best value before it by less than 1%.
pub fn stagnation_detect(trace: &TrainTrace, window: usize) -> StagnationFlags {
    let n = trace.len();
    if window == 0 || window >= n {
        return StagnationFlags {
            data: false,
            residual: false,
        };
    }
    let flag = |col: Vec<f64>| {
        let before = col[..n - window].iter().copied().fold(f64::INFINITY, f64::min);
        let best = col[n - window..].iter().copied().fold(f64::INFINITY, f64::min);
        best > 0.99 * before
    };
    StagnationFlags {
        data: flag(trace.column(|r| r.r_s)),
        residual: flag(trace.column(|r| r.r_d)),
    }
}

/// Which loss component a Hessian estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Data,
    Residual,
}

/// Rough largest-magnitude Hessian eigenvalue of one loss component, by power iteration on
/// central differences of its gradient. For reporting only.
pub fn hessian_power_estimate(
    params: &NetworkParams,
    model: &LossModel,
    component: Component,
    iters: usize,
    h: f64,
) -> f64 {
    let grad = |p: &NetworkParams| {
        let r = model.evaluate(p, true);
        match component {
            Component::Data => r.grad_data,
            Component::Residual => r.grad_res,
        }
    };
    let n = params.values().len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let shifted = |s: f64| {
            let vals = params.values().iter().zip(&v).map(|(p, d)| p + s * h * d).collect();
            NetworkParams::from_values(params.arch().clone(), vals).expect("same architecture")
        };
        let gp = grad(&shifted(1.0));
        let gm = grad(&shifted(-1.0));
        let hv: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        lambda = hv.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = hv;
    }
    lambda
}
