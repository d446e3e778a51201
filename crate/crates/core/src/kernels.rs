//! Micromodulus functions `C(ξ)` and their supports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;

/// Number of standard deviations (in units of `1/√μ`) kept for the Gauss kernel.
/// `exp(-36)` is below `1e-15`.
pub const GAUSS_CUTOFF: f64 = 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel constant `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("distributed kernel requires lambda > delta (lambda = {lambda}, delta = {delta})")]
    DistributedOrder { lambda: f64, delta: f64 },
    #[error("the Gauss kernel has no horizon parameter")]
    NoHorizon,
}

/// One micromodulus family with its shape constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `λ·exp(-μξ²)`.
    Gauss { lambda: f64, mu: f64 },
    /// `λ|ξ|` on `|ξ| ≤ δ`, zero outside.
    #[serde(rename = "vshape")]
    VShape { lambda: f64, delta: f64 },
    /// `(|ξ| − λ + δ)/δ` on `|ξ| ≥ λ − δ`, zero inside.
    Distributed { lambda: f64, delta: f64 },
    /// `max{0, δ − |ξ|}`.
    Tent { delta: f64 },
}

/// A closed interval `[lo, hi]` whose endpoints may carry derivative information.
#[derive(Debug, Clone, Copy)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn len(&self) -> f64 {
        self.hi.value() - self.lo.value()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    pub fn values(&self) -> (f64, f64) {
        (self.lo.value(), self.hi.value())
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), KernelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(KernelError::NonPositive { name, value })
    }
}

impl KernelSpec {
    pub fn gauss(lambda: f64, mu: f64) -> Result<Self, KernelError> {
        positive("lambda", lambda)?;
        positive("mu", mu)?;
        Ok(Self::Gauss { lambda, mu })
    }

    pub fn vshape(lambda: f64, delta: f64) -> Result<Self, KernelError> {
        positive("lambda", lambda)?;
        positive("delta", delta)?;
        Ok(Self::VShape { lambda, delta })
    }

    pub fn distributed(lambda: f64, delta: f64) -> Result<Self, KernelError> {
        positive("lambda", lambda)?;
        positive("delta", delta)?;
        if lambda <= delta {
            return Err(KernelError::DistributedOrder { lambda, delta });
        }
        Ok(Self::Distributed { lambda, delta })
    }

    pub fn tent(delta: f64) -> Result<Self, KernelError> {
        positive("delta", delta)?;
        Ok(Self::Tent { delta })
    }

    /// Re-checks the constants, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            Self::Gauss { lambda, mu } => Self::gauss(lambda, mu).map(|_| ()),
            Self::VShape { lambda, delta } => Self::vshape(lambda, delta).map(|_| ()),
            Self::Distributed { lambda, delta } => Self::distributed(lambda, delta).map(|_| ()),
            Self::Tent { delta } => Self::tent(delta).map(|_| ()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gauss { .. } => "gauss",
            Self::VShape { .. } => "vshape",
            Self::Distributed { .. } => "distributed",
            Self::Tent { .. } => "tent",
        }
    }

    /// The horizon stored in this kernel, if the family has one.
    pub fn delta(&self) -> Option<f64> {
        match *self {
            Self::Gauss { .. } => None,
            Self::VShape { delta, .. } | Self::Distributed { delta, .. } | Self::Tent { delta } => Some(delta),
        }
    }

    /// Same family and shape constants with a different horizon. No-op for Gauss.
    pub fn with_delta(&self, delta: f64) -> Self {
        match *self {
            Self::Gauss { .. } => *self,
            Self::VShape { lambda, .. } => Self::VShape { lambda, delta },
            Self::Distributed { lambda, .. } => Self::Distributed { lambda, delta },
            Self::Tent { .. } => Self::Tent { delta },
        }
    }

    /// Exact piecewise value.
    pub fn eval(&self, xi: f64) -> f64 {
        let r = xi.abs();
        match *self {
            Self::Gauss { lambda, mu } => lambda * (-mu * xi * xi).exp(),
            Self::VShape { lambda, delta } => {
                if r <= delta {
                    lambda * r
                } else {
                    0.0
                }
            }
            Self::Distributed { lambda, delta } => {
                if r >= lambda - delta {
                    (r - lambda + delta) / delta
                } else {
                    0.0
                }
            }
            Self::Tent { delta } => (delta - r).max(0.0),
        }
    }

    /// Kernel value with the horizon promoted to a differentiable argument.
    ///
    /// V-shape uses the global rewrite `c_min(ξ) + c(δ)·[c(ξ) ≤ c(δ)]` with `c(ξ) = λ|ξ|` and
    /// `c_min(ξ) = min{c(ξ) − c(δ), 0}`; the distributed family uses `max{0, |ξ/δ| + (δ − λ)/δ}`
    /// and the tent `max{0, δ − |ξ|}`. All agree with [`eval`](Self::eval) at this kernel's own
    /// horizon. Kinks take the right-sided derivative.
    pub fn eval_smooth_in_delta<T: Real>(&self, xi: T, delta: T) -> Result<T, KernelError> {
        match *self {
            Self::Gauss { .. } => Err(KernelError::NoHorizon),
            _ => Ok(self.eval_generic(xi, delta)),
        }
    }

    /// Like [`eval_smooth_in_delta`](Self::eval_smooth_in_delta) but total: the Gauss kernel
    /// simply ignores `delta`.
    pub fn eval_generic<T: Real>(&self, xi: T, delta: T) -> T {
        let r = xi.abs();
        match *self {
            Self::Gauss { lambda, mu } => (xi * xi * (-mu)).exp() * lambda,
            Self::VShape { lambda, .. } => {
                let c_xi = r * lambda;
                let c_delta = delta.abs() * lambda;
                let c_min = (c_xi - c_delta).min_by_value(T::cst(0.0));
                if c_xi.value() <= c_delta.value() {
                    c_min + c_delta
                } else {
                    c_min
                }
            }
            Self::Distributed { lambda, .. } => ((r - lambda) / delta + 1.0).relu(),
            Self::Tent { .. } => (delta - r).relu(),
        }
    }

    /// Half-width of the region where the kernel is (numerically) nonzero, measured from
    /// `ξ = 0`. Infinite for the distributed family, whose support grows outward.
    pub fn support_radius(&self, delta: f64) -> f64 {
        match *self {
            Self::Gauss { mu, .. } => GAUSS_CUTOFF / mu.sqrt(),
            Self::VShape { .. } | Self::Tent { .. } => delta,
            Self::Distributed { .. } => f64::INFINITY,
        }
    }

    /// `{y : C(x − y) ≠ 0} ∩ [domain.0, domain.1]` as a list of intervals, with endpoints
    /// expressed as functions of `delta` so that derivatives flow through the bounds.
    ///
    /// Where a bound coincides with the domain edge the edge wins, which yields the
    /// right-sided derivative in `delta`.
    pub fn integration_domain<T: Real>(&self, x: f64, delta: T, domain: (f64, f64)) -> Vec<Interval<T>> {
        let (lo, hi) = domain;
        let clip = |a: T, b: T| -> Option<Interval<T>> {
            let lo_b = T::cst(lo).max_by_value(a);
            let hi_b = T::cst(hi).min_by_value(b);
            let iv = Interval { lo: lo_b, hi: hi_b };
            (!iv.is_empty()).then_some(iv)
        };
        match *self {
            Self::Gauss { mu, .. } => {
                let r = GAUSS_CUTOFF / mu.sqrt();
                clip(T::cst(x - r), T::cst(x + r)).into_iter().collect()
            }
            Self::VShape { .. } | Self::Tent { .. } => clip(-delta + x, delta + x).into_iter().collect(),
            Self::Distributed { lambda, .. } => {
                let inner = -delta + lambda;
                if inner.value() <= 0.0 {
                    return clip(T::cst(lo), T::cst(hi)).into_iter().collect();
                }
                let mut out = Vec::with_capacity(2);
                if let Some(left) = clip(T::cst(lo), -inner + x) {
                    out.push(left);
                }
                if let Some(right) = clip(inner + x, T::cst(hi)) {
                    out.push(right);
                }
                out
            }
        }
    }

    /// [`integration_domain`](Self::integration_domain) further split at interior kinks of
    /// `C(x − ·)`, so the integrand is smooth on every returned piece.
    pub fn smooth_pieces<T: Real>(&self, x: f64, delta: T, domain: (f64, f64)) -> Vec<Interval<T>> {
        let mut pieces = Vec::with_capacity(4);
        let split_at_center = !matches!(self, Self::Gauss { .. });
        for iv in self.integration_domain(x, delta, domain) {
            let (a, b) = iv.values();
            if split_at_center && a < x && x < b {
                pieces.push(Interval {
                    lo: iv.lo,
                    hi: T::cst(x),
                });
                pieces.push(Interval {
                    lo: T::cst(x),
                    hi: iv.hi,
                });
            } else {
                pieces.push(iv);
            }
        }
        pieces
    }

    /// Kink locations of `C(ξ)` in `ξ ≥ 0` (used for splitting quadrature).
    pub fn kinks(&self, delta: f64) -> Vec<f64> {
        match *self {
            Self::Gauss { .. } => vec![],
            Self::VShape { .. } | Self::Tent { .. } => vec![0.0, delta],
            Self::Distributed { lambda, .. } => vec![0.0, (lambda - delta).max(0.0)],
        }
    }
}
