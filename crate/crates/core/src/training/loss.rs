//! Loss assembly over a collocation set.
//!
//! The data term and the residual term touch disjoint network evaluations, so their
//! gradients come out separately from one pass. Work is cut into chunks that are
//! evaluated independently and reduced in a fixed order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Dual, Real};
use crate::datagen::{CollocationSet, Role};
use crate::network::{forward_with, Architecture, BatchJet, JetAxis, NetworkParams};
use crate::nonlocal::{NonlocalError, NonlocalOperator, Problem, ResidualConfig};
use crate::parallel::{map_ordered, Execution};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("dataset has dimension {data} but the problem has dimension {problem}")]
    Dimension { data: usize, problem: usize },
    #[error("dataset has no data points")]
    Empty,
    #[error(transparent)]
    Operator(#[from] NonlocalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// `½Σ|Φ − u|² + ½Σ|D(Φ)|²`.
    #[default]
    MeanSquared,
    /// `√Σ|Φ − u|² + √Σ|D(Φ)|²`.
    EuclideanNorm,
}

impl LossVariant {
    /// Loss component from a sum of squares.
    pub fn component(self, sum_sq: f64) -> f64 {
        match self {
            LossVariant::MeanSquared => 0.5 * sum_sq,
            LossVariant::EuclideanNorm => sum_sq.sqrt(),
        }
    }

    /// Factor turning `∇(½S)` into the gradient of [`component`](Self::component). Zero
    /// when a norm component vanishes.
    pub fn gradient_scale(self, sum_sq: f64) -> f64 {
        match self {
            LossVariant::MeanSquared => 1.0,
            LossVariant::EuclideanNorm if sum_sq > 0.0 => 1.0 / sum_sq.sqrt(),
            LossVariant::EuclideanNorm => 0.0,
        }
    }
}

/// Sums of squares, their half-sum gradients and per-point residual information.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    /// `Σ|Φ − u|²` over data points plus `Σ|Φ(p) + Φ(p′)|²` over ghost pairs.
    pub sum_sq_data: f64,
    /// `Σ|D(Φ)|²` over interior points.
    pub sum_sq_res: f64,
    /// `∇θ ½·sum_sq_data` (empty when gradients were not requested).
    pub grad_data: Vec<f64>,
    /// `∇θ ½·sum_sq_res`, including the horizon component.
    pub grad_res: Vec<f64>,
    /// `D(Φ)` at each evaluated interior point.
    pub residuals: Vec<f64>,
    /// `Φ` at each evaluated interior point.
    pub phi_interior: Vec<f64>,
}

impl LossReport {
    pub fn r_s(&self, variant: LossVariant) -> f64 {
        variant.component(self.sum_sq_data)
    }

    pub fn r_d(&self, variant: LossVariant) -> f64 {
        variant.component(self.sum_sq_res)
    }

    pub fn loss(&self, variant: LossVariant) -> f64 {
        self.r_s(variant) + self.r_d(variant)
    }

    pub fn grad_s(&self, variant: LossVariant) -> Vec<f64> {
        let k = variant.gradient_scale(self.sum_sq_data);
        self.grad_data.iter().map(|g| g * k).collect()
    }

    pub fn grad_d(&self, variant: LossVariant) -> Vec<f64> {
        let k = variant.gradient_scale(self.sum_sq_res);
        self.grad_res.iter().map(|g| g * k).collect()
    }

    /// `∇L` for the chosen variant.
    pub fn grad(&self, variant: LossVariant) -> Vec<f64> {
        let ks = variant.gradient_scale(self.sum_sq_data);
        let kd = variant.gradient_scale(self.sum_sq_res);
        self.grad_data
            .iter()
            .zip(&self.grad_res)
            .map(|(a, b)| ks * a + kd * b)
            .collect()
    }

    /// Mean of `Φᵢ·D(Φᵢ)` over interior points; zero without interior points.
    pub fn sign_indicator(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        let s: f64 = self.phi_interior.iter().zip(&self.residuals).map(|(p, d)| p * d).sum();
        s / self.residuals.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.sum_sq_data.is_finite()
            && self.sum_sq_res.is_finite()
            && self.grad_data.iter().chain(&self.grad_res).all(|g| g.is_finite())
    }

    fn absorb(&mut self, part: Partial) {
        self.sum_sq_data += part.sum_sq_data;
        self.sum_sq_res += part.sum_sq_res;
        if let Some(g) = part.grad_data {
            add_into(&mut self.grad_data, &g);
        }
        if let Some(g) = part.grad_res {
            add_into(&mut self.grad_res, &g);
        }
        self.residuals.extend(part.residuals);
        self.phi_interior.extend(part.phi);
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

#[derive(Default)]
struct Partial {
    sum_sq_data: f64,
    sum_sq_res: f64,
    grad_data: Option<Vec<f64>>,
    grad_res: Option<Vec<f64>>,
    residuals: Vec<f64>,
    phi: Vec<f64>,
}

enum Task<'a> {
    Data(&'a [usize]),
    Pairs(&'a [usize]),
    Residual(&'a [usize]),
}

/// Which items of the model to evaluate.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub data: Vec<usize>,
    pub pairs: Vec<usize>,
    pub interior: Vec<usize>,
}

/// A collocation set bound to its residual operator.
#[derive(Debug, Clone)]
pub struct LossModel {
    op: NonlocalOperator,
    data: Vec<[f64; 2]>,
    targets: Vec<f64>,
    pairs: Vec<([f64; 2], [f64; 2])>,
    interior: Vec<[f64; 2]>,
    /// For each data point, its index among interior points.
    interior_of_data: Vec<Option<usize>>,
    execution: Execution,
    data_chunk: usize,
    node_chunk: usize,
}

impl LossModel {
    pub fn new(problem: Problem, cfg: ResidualConfig, set: &CollocationSet) -> Result<Self, LossError> {
        if set.dim != problem.dim() {
            return Err(LossError::Dimension {
                data: set.dim,
                problem: problem.dim(),
            });
        }
        let op = NonlocalOperator::new(problem, cfg)?;
        let mut data = Vec::new();
        let mut targets = Vec::new();
        let mut interior = Vec::new();
        let mut interior_of_data = Vec::new();
        for p in set.data_points() {
            data.push(p.coords);
            targets.push(p.target);
            if p.role == Role::Interior {
                interior_of_data.push(Some(interior.len()));
                interior.push(p.coords);
            } else {
                interior_of_data.push(None);
            }
        }
        if data.is_empty() && set.ghost_pairs().is_empty() {
            return Err(LossError::Empty);
        }
        let pairs = set
            .ghost_pairs()
            .into_iter()
            .map(|(i, j)| (set.points[i].coords, set.points[j].coords))
            .collect();
        Ok(Self {
            op,
            data,
            targets,
            pairs,
            interior,
            interior_of_data,
            execution: Execution::default(),
            data_chunk: 256,
            node_chunk: 512,
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn operator(&self) -> &NonlocalOperator {
        &self.op
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn pair_len(&self) -> usize {
        self.pairs.len()
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn data_coords(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn interior_coords(&self) -> &[[f64; 2]] {
        &self.interior
    }

    /// Every item.
    pub fn full_selection(&self) -> Selection {
        Selection {
            data: (0..self.data.len()).collect(),
            pairs: (0..self.pairs.len()).collect(),
            interior: (0..self.interior.len()).collect(),
        }
    }

    /// Number of SGD samples: data points followed by ghost pairs.
    pub fn sample_count(&self) -> usize {
        self.data.len() + self.pairs.len()
    }

    /// Items touched by one SGD sample: the data point and, if it is interior, its residual;
    /// or one ghost pair.
    pub fn sample_selection(&self, sample: usize) -> Selection {
        if sample < self.data.len() {
            Selection {
                data: vec![sample],
                pairs: vec![],
                interior: self.interior_of_data[sample].into_iter().collect(),
            }
        } else {
            Selection {
                data: vec![],
                pairs: vec![sample - self.data.len()],
                interior: vec![],
            }
        }
    }

    /// Full-batch evaluation.
    pub fn evaluate(&self, params: &NetworkParams, with_grad: bool) -> LossReport {
        self.evaluate_selection(params, &self.full_selection(), with_grad)
    }

    pub fn evaluate_selection(&self, params: &NetworkParams, sel: &Selection, with_grad: bool) -> LossReport {
        let res_chunk = self.residual_chunk(params);
        let mut tasks = Vec::new();
        tasks.extend(sel.data.chunks(self.data_chunk).map(Task::Data));
        tasks.extend(sel.pairs.chunks(self.data_chunk / 2).map(Task::Pairs));
        tasks.extend(sel.interior.chunks(res_chunk).map(Task::Residual));
        let parts = map_ordered(self.execution, &tasks, |task| match task {
            Task::Data(idx) => self.data_task(params, idx, with_grad),
            Task::Pairs(idx) => self.pair_task(params, idx, with_grad),
            Task::Residual(idx) => self.residual_task(params, idx, with_grad),
        });
        let n = params.values().len();
        let mut report = LossReport {
            grad_data: if with_grad { vec![0.0; n] } else { vec![] },
            grad_res: if with_grad { vec![0.0; n] } else { vec![] },
            ..LossReport::default()
        };
        for part in parts {
            report.absorb(part);
        }
        report
    }

    fn residual_chunk(&self, params: &NetworkParams) -> usize {
        let per_point = self
            .interior
            .first()
            .map_or(1, |&c| self.op.stencil(c, params.horizon()).len().max(1));
        (self.node_chunk / per_point).max(1)
    }

    fn data_task(&self, params: &NetworkParams, idx: &[usize], with_grad: bool) -> Partial {
        let pts: Vec<f64> = idx.iter().flat_map(|&i| self.data[i]).collect();
        let jet = BatchJet::forward(params, &pts, JetAxis::Value);
        let err: Vec<f64> = idx
            .iter()
            .zip(&jet.value)
            .map(|(&i, &phi)| phi - self.targets[i])
            .collect();
        let mut part = Partial {
            sum_sq_data: err.iter().map(|e| e * e).sum(),
            ..Partial::default()
        };
        if with_grad {
            let mut g = vec![0.0; params.values().len()];
            jet.backward(params, &err, None, &mut g, None);
            part.grad_data = Some(g);
        }
        part
    }

    fn pair_task(&self, params: &NetworkParams, idx: &[usize], with_grad: bool) -> Partial {
        let m = idx.len();
        let mut pts = Vec::with_capacity(4 * m);
        for &k in idx {
            pts.extend(self.pairs[k].0);
        }
        for &k in idx {
            pts.extend(self.pairs[k].1);
        }
        let jet = BatchJet::forward(params, &pts, JetAxis::Value);
        let sums: Vec<f64> = (0..m).map(|k| jet.value[k] + jet.value[m + k]).collect();
        let mut part = Partial {
            sum_sq_data: sums.iter().map(|s| s * s).sum(),
            ..Partial::default()
        };
        if with_grad {
            let seeds: Vec<f64> = sums.iter().chain(&sums).copied().collect();
            let mut g = vec![0.0; params.values().len()];
            jet.backward(params, &seeds, None, &mut g, None);
            part.grad_data = Some(g);
        }
        part
    }

    fn residual_task(&self, params: &NetworkParams, idx: &[usize], with_grad: bool) -> Partial {
        let delta = params.horizon();
        let time = self.op.has_time_term();
        let centers: Vec<f64> = idx.iter().flat_map(|&i| self.interior[i]).collect();
        let jet_c = BatchJet::forward(
            params,
            &centers,
            if time {
                JetAxis::Second(NonlocalOperator::TIME_AXIS)
            } else {
                JetAxis::Value
            },
        );

        let mut nodes = Vec::new();
        let mut node_tangent = Vec::new();
        let mut coeff = Vec::new();
        let mut coeff_tangent = Vec::new();
        let mut owner = Vec::with_capacity(idx.len() + 1);
        owner.push(0);
        for &i in idx {
            let st = self.op.stencil(self.interior[i], Dual::variable(delta));
            for (node, c) in st.nodes.iter().zip(&st.coeffs) {
                nodes.extend([node[0].value, node[1].value]);
                node_tangent.extend([node[0].tangent, node[1].tangent]);
                coeff.push(c.value);
                coeff_tangent.push(c.tangent);
            }
            owner.push(coeff.len());
        }
        let jet_n = BatchJet::forward(params, &nodes, JetAxis::Value);

        let mut residuals = Vec::with_capacity(idx.len());
        let mut ddelta_coeff = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let phi_c = jet_c.value[k];
            let mut d = self.op.offset(self.interior[i]);
            if time {
                d += jet_c.second[k];
            }
            let mut dc = 0.0;
            for q in owner[k]..owner[k + 1] {
                let diff = jet_n.value[q] - phi_c;
                d += coeff[q] * diff;
                dc += coeff_tangent[q] * diff;
            }
            ddelta_coeff += d * dc;
            residuals.push(d);
        }

        let mut part = Partial {
            sum_sq_res: residuals.iter().map(|d| d * d).sum(),
            phi: jet_c.value.clone(),
            ..Partial::default()
        };
        if with_grad {
            let n = params.values().len();
            let mut g = vec![0.0; n];
            let mut node_seed = vec![0.0; coeff.len()];
            let mut center_seed = vec![0.0; idx.len()];
            for (k, &d) in residuals.iter().enumerate() {
                let mut mass = 0.0;
                for q in owner[k]..owner[k + 1] {
                    node_seed[q] = d * coeff[q];
                    mass += coeff[q];
                }
                center_seed[k] = -d * mass;
            }
            let mut node_adj = vec![0.0; nodes.len()];
            jet_n.backward(params, &node_seed, None, &mut g, Some(&mut node_adj));
            let second_seed = time.then(|| residuals.clone());
            jet_c.backward(params, &center_seed, second_seed.as_deref(), &mut g, None);
            let motion: f64 = node_adj.iter().zip(&node_tangent).map(|(a, t)| a * t).sum();
            g[n - 1] = ddelta_coeff + motion;
            part.grad_res = Some(g);
        }
        part.residuals = residuals;
        part
    }

    /// Both loss components computed generically in the scalar type of `theta`
    /// (weights followed by the horizon). With tape variables this yields the reverse-mode
    /// gradient by a route independent of the batched passes.
    pub fn loss_generic<T: Real>(&self, arch: &Architecture, theta: &[T], variant: LossVariant) -> (T, T) {
        let delta = theta[theta.len() - 1];
        let phi = |p: &[T]| forward_with(arch, |i| theta[i], p);
        let lift = |p: [f64; 2]| [T::cst(p[0]), T::cst(p[1])];

        let mut s_data = T::cst(0.0);
        for (p, &u) in self.data.iter().zip(&self.targets) {
            let e = phi(&lift(*p)) - u;
            s_data = s_data + e * e;
        }
        for (p, q) in &self.pairs {
            let s = phi(&lift(*p)) + phi(&lift(*q));
            s_data = s_data + s * s;
        }

        let mut s_res = T::cst(0.0);
        for &c in &self.interior {
            let tt = self.op.has_time_term().then(|| {
                crate::autodiff::second_derivative_generic(
                    |p| forward_with(arch, |i| Dual::constant(Dual::constant(theta[i])), p),
                    &lift(c),
                    NonlocalOperator::TIME_AXIS,
                )
            });
            let d = self.op.residual_generic(phi, tt, c, delta);
            s_res = s_res + d * d;
        }

        let comp = |s: T| match variant {
            LossVariant::MeanSquared => s * 0.5,
            LossVariant::EuclideanNorm => {
                if s.value() > 0.0 {
                    s.sqrt()
                } else {
                    T::cst(0.0)
                }
            }
        };
        (comp(s_data), comp(s_res))
    }
}
