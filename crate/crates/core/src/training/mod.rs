//! Optimizers, learning-rate schedules and the epoch loop.

mod loss;
mod trace;

pub use loss::{LossError, LossModel, LossReport, LossVariant, Selection};
pub use trace::{TraceError, TraceRecord, TrainTrace, TRACE_HEADER};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        eta0: f64,
    },
    /// Polynomial decay from `eta0` to `eta_end` restarted every `cycle_epochs`.
    CyclicPolynomial {
        eta0: f64,
        eta_end: f64,
        cycle_epochs: usize,
        degree: u32,
    },
    /// Half-cosine from `eta0` to zero over `decay_steps`, after an optional linear warmup.
    Cosine {
        eta0: f64,
        decay_steps: usize,
        #[serde(default)]
        warmup: usize,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant { eta0: 1e-2 }
    }
}

impl Schedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant { eta0 } => eta0,
            Schedule::CyclicPolynomial {
                eta0,
                eta_end,
                cycle_epochs,
                degree,
            } => {
                let frac = (epoch % cycle_epochs) as f64 / cycle_epochs as f64;
                eta_end + (eta0 - eta_end) * (1.0 - frac).powi(degree as i32)
            }
            Schedule::Cosine {
                eta0,
                decay_steps,
                warmup,
            } => {
                if epoch < warmup {
                    return eta0 * (epoch + 1) as f64 / warmup as f64;
                }
                let step = (epoch - warmup).min(decay_steps) as f64;
                eta0 * 0.5 * (1.0 + (PI * step / decay_steps as f64).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let bad = |what: &str| Err(format!("schedule: {what}"));
        match *self {
            Schedule::Constant { eta0 } if !(eta0 > 0.0) => bad("eta0 must be positive"),
            Schedule::CyclicPolynomial {
                eta0,
                eta_end,
                cycle_epochs,
                ..
            } => {
                if !(eta0 > 0.0 && eta_end > 0.0) {
                    bad("eta0 and eta_end must be positive")
                } else if cycle_epochs == 0 {
                    bad("cycle_epochs must be at least 1")
                } else {
                    Ok(())
                }
            }
            Schedule::Cosine { eta0, decay_steps, .. } => {
                if !(eta0 > 0.0) {
                    bad("eta0 must be positive")
                } else if decay_steps == 0 {
                    bad("decay_steps must be at least 1")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Full-batch Adam; one update per epoch.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Per-sample SGD; one epoch is one shuffled pass over all samples.
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, then the horizon is clamped positive.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    gradient: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((w, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(gradient)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w -= lr * mh / (vh.sqrt() + eps);
    }
    params.project_horizon();
}

/// `θ ← θ − η·g`, then the horizon is clamped positive.
pub fn descent_step(params: &mut NetworkParams, gradient: &[f64], lr: f64) {
    for (w, g) in params.values_mut().iter_mut().zip(gradient) {
        *w -= lr * g;
    }
    params.project_horizon();
}

/// One step on the sample `½|Φᵢ − uᵢ|² + ½|D(Φᵢ)|²` (a ghost pair counts as one sample).
pub fn sgd_step(model: &LossModel, params: &mut NetworkParams, lr: f64, sample: usize) {
    let r = model.evaluate_selection(params, &model.sample_selection(sample), true);
    let g = r.grad(LossVariant::MeanSquared);
    descent_step(params, &g, lr);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub loss_variant: LossVariant,
    pub schedule: Schedule,
    /// Seeds sample shuffling for SGD.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            optimizer: Optimizer::default(),
            loss_variant: LossVariant::MeanSquared,
            schedule: Schedule::default(),
            seed: 0,
        }
    }
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: TrainTrace,
    /// Final parameters, or the last finite ones after an abort.
    pub params: NetworkParams,
    pub abort: Option<Abort>,
}

/// Runs `config.epochs` epochs from `init`.
///
/// Row `n` of the trace holds the losses, `∂L/∂δ`, the sign indicator and the gradient
/// competition ratio evaluated at the parameters entering epoch `n`, together with the
/// horizon after that epoch's update. `δ_row − δ_previous` is the realized step.
pub fn train(config: &TrainConfig, model: &LossModel, init: NetworkParams) -> TrainOutcome {
    train_with(config, model, init, |_, _| {})
}

/// [`train`] with a callback invoked after each recorded epoch.
pub fn train_with<F>(config: &TrainConfig, model: &LossModel, init: NetworkParams, mut on_epoch: F) -> TrainOutcome
where
    F: FnMut(&TraceRecord, &NetworkParams),
{
    let variant = config.loss_variant;
    let mut params = init;
    let mut trace = TrainTrace::default();
    let mut adam = AdamState::new(params.values().len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..model.sample_count()).collect();

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        let report = model.evaluate(&params, true);
        if !report.is_finite() {
            return abort(trace, params, epoch, "loss or gradient is not finite");
        }
        let grad = report.grad(variant);
        let gs = report.grad_s(variant);
        let gd = report.grad_d(variant);
        let loss = report.loss(variant);
        let inner: f64 = gs.iter().zip(&gd).map(|(a, b)| a * b).sum();
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        let (competition, pl) = if loss > 0.0 {
            (inner / loss, norm2 / loss)
        } else {
            (f64::NAN, f64::NAN)
        };

        let before = params.clone();
        match config.optimizer {
            Optimizer::Adam { beta1, beta2, eps } => adam_step(&mut adam, &mut params, &grad, lr, beta1, beta2, eps),
            Optimizer::Sgd => {
                order.shuffle(&mut rng);
                for &s in &order {
                    sgd_step(model, &mut params, lr, s);
                }
            }
        }
        if !params.is_finite() {
            return abort(trace, before, epoch, "parameters became non-finite");
        }

        let record = TraceRecord {
            epoch,
            delta: params.horizon(),
            lr,
            r_s: report.r_s(variant),
            r_d: report.r_d(variant),
            loss,
            dl_ddelta: grad[grad.len() - 1],
            sign_indicator: report.sign_indicator(),
            grad_competition: competition,
            pl_ratio: pl,
        };
        on_epoch(&record, &params);
        trace.records.push(record);
    }
    TrainOutcome {
        trace,
        params,
        abort: None,
    }
}

fn abort(trace: TrainTrace, params: NetworkParams, epoch: usize, reason: &str) -> TrainOutcome {
    TrainOutcome {
        trace,
        params,
        abort: Some(Abort {
            epoch,
            reason: reason.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_collocation, ForwardProblem1D, Generator, MeshSpec};
    use crate::kernels::KernelSpec;
    use crate::network::{init_params, Architecture, InputMap};
    use crate::nonlocal::{Problem, ResidualConfig};

    #[test]
    fn schedule_examples() {
        let c = Schedule::Constant { eta0: 1e-2 };
        assert_eq!(c.lr_at(0), 1e-2);
        assert_eq!(c.lr_at(777), 1e-2);
        let p = Schedule::CyclicPolynomial {
            eta0: 1e-2,
            eta_end: 1e-4,
            cycle_epochs: 100,
            degree: 3,
        };
        assert_eq!(p.lr_at(0), 1e-2);
        assert_eq!(p.lr_at(100), 1e-2);
        assert_eq!(p.lr_at(300), 1e-2);
        assert!((p.lr_at(50) - (1e-4 + (1e-2 - 1e-4) * 0.125)).abs() < 1e-18);
        let k = Schedule::Cosine {
            eta0: 1e-3,
            decay_steps: 1000,
            warmup: 0,
        };
        assert_eq!(k.lr_at(0), 1e-3);
        assert!(k.lr_at(1000).abs() < 1e-19);
        assert!(k.lr_at(5000).abs() < 1e-19);
        assert!((k.lr_at(500) - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn cyclic_schedule_is_periodic_and_non_increasing_per_cycle() {
        let p = Schedule::CyclicPolynomial {
            eta0: 1e-2,
            eta_end: 1e-4,
            cycle_epochs: 100,
            degree: 3,
        };
        for e in 0..300 {
            assert_eq!(p.lr_at(e), p.lr_at(e + 100));
            assert!(p.lr_at(e) > 0.0);
            if (e + 1) % 100 != 0 {
                assert!(p.lr_at(e + 1) <= p.lr_at(e));
            }
        }
    }

    #[test]
    fn cosine_warmup_ramps_linearly() {
        let k = Schedule::Cosine {
            eta0: 1.0,
            decay_steps: 10,
            warmup: 4,
        };
        assert_eq!(k.lr_at(0), 0.25);
        assert_eq!(k.lr_at(3), 1.0);
        assert_eq!(k.lr_at(4), 1.0);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let arch = Architecture::new(2, 1, 1);
        let mut p = NetworkParams::zeros(arch);
        let n = p.values().len();
        let mut st = AdamState::new(n);
        let g = vec![1.0; n];
        adam_step(&mut st, &mut p, &g, 1e-2, 0.9, 0.999, 1e-8);
        assert!((p.values()[0] + 1e-2 / (1.0 + 1e-8)).abs() < 1e-16);
        assert!((p.horizon() - (1.0 - 1e-2 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut p = init_params(&Architecture::new(2, 1, 3), 1);
        let n = p.values().len();
        let mut st = AdamState::new(n);
        adam_step(&mut st, &mut p, &vec![0.5; n], 1e-3, 0.9, 0.999, 1e-8);
        let before = p.clone();
        let m0 = st.m.clone();
        adam_step(&mut st, &mut p, &vec![0.0; n], 1e-3, 0.9, 0.999, 1e-8);
        // the moment still pushes; with zero moments nothing moves
        assert!(st.m.iter().zip(&m0).all(|(a, b)| (a - 0.9 * b).abs() < 1e-18));
        let mut q = before.clone();
        let mut fresh = AdamState::new(n);
        adam_step(&mut fresh, &mut q, &vec![0.0; n], 1e-3, 0.9, 0.999, 1e-8);
        assert_eq!(q.values(), before.values());
    }

    #[test]
    fn adam_steady_state_moves_by_lr_times_sign() {
        let mut p = NetworkParams::zeros(Architecture::new(2, 1, 1));
        let n = p.values().len();
        let g: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 3.0 } else { -0.2 }).collect();
        let mut st = AdamState::new(n);
        for _ in 0..5000 {
            adam_step(&mut st, &mut p, &g, 1e-4, 0.9, 0.999, 1e-8);
        }
        let before = p.values().to_vec();
        adam_step(&mut st, &mut p, &g, 1e-4, 0.9, 0.999, 1e-8);
        for ((a, b), gi) in p.values().iter().zip(&before).zip(&g) {
            let step = a - b;
            assert!((step + 1e-4 * gi.signum()).abs() < 1e-8, "{step}");
        }
    }

    #[test]
    fn horizon_is_projected_positive() {
        let mut p = NetworkParams::zeros(Architecture::new(2, 1, 1)).with_horizon(0.5);
        let n = p.values().len();
        let mut g = vec![0.0; n];
        g[n - 1] = 10.0;
        descent_step(&mut p, &g, 1.0);
        assert!(p.horizon() > 0.0);
    }

    fn toy_model() -> LossModel {
        let k = KernelSpec::tent(1.0).unwrap();
        let gen = Generator::Line(ForwardProblem1D::pulse(k, (-4.0, 4.0), 1.0));
        let set = build_collocation(
            &gen,
            &MeshSpec {
                nx: 8,
                ny: 4,
                ghosts_per_edge: 0,
            },
            0,
        )
        .unwrap();
        LossModel::new(
            Problem::Line {
                kernel: k,
                domain: (-4.0, 4.0),
            },
            ResidualConfig::default(),
            &set,
        )
        .unwrap()
    }

    fn toy_init() -> NetworkParams {
        let arch = Architecture::new(2, 2, 6).with_input_map(InputMap::from_box(&[(-4.0, 4.0), (0.0, 1.0)]));
        init_params(&arch, 11).with_horizon(1.1)
    }

    #[test]
    fn zero_epochs_leave_init() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &toy_model(), toy_init());
        assert!(out.trace.records.is_empty());
        assert_eq!(out.params.values(), toy_init().values());
    }

    #[test]
    fn small_steps_decrease_the_loss() {
        let cfg = TrainConfig {
            epochs: 10,
            optimizer: Optimizer::Sgd,
            schedule: Schedule::Constant { eta0: 1e-3 },
            ..TrainConfig::default()
        };
        let out = train(&cfg, &toy_model(), toy_init());
        let l: Vec<f64> = out.trace.records.iter().map(|r| r.loss).collect();
        assert!(l.windows(2).all(|w| w[1] < w[0]), "{l:?}");
    }

    #[test]
    fn per_sample_steps_average_to_the_full_batch_step() {
        let m = toy_model();
        let p = toy_init();
        let eta = 1e-4;
        let full = m.evaluate(&p, true).grad(LossVariant::MeanSquared);
        let n = m.sample_count() as f64;
        let mut mean = vec![0.0; full.len()];
        for s in 0..m.sample_count() {
            let mut q = p.clone();
            sgd_step(&m, &mut q, eta, s);
            for ((acc, a), b) in mean.iter_mut().zip(q.values()).zip(p.values()) {
                *acc += (a - b) / n;
            }
        }
        for (d, g) in mean.iter().zip(&full) {
            assert!((d + eta * g / n).abs() < 1e-13 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&cfg, &toy_model(), toy_init());
        let b = train(&cfg, &toy_model(), toy_init());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params.values(), b.params.values());
    }

    #[test]
    fn non_finite_state_aborts_with_partial_trace() {
        let cfg = TrainConfig {
            epochs: 5,
            schedule: Schedule::Constant { eta0: f64::INFINITY },
            ..TrainConfig::default()
        };
        let out = train(&cfg, &toy_model(), toy_init());
        let abort = out.abort.expect("should abort");
        assert_eq!(abort.epoch, 0);
        assert!(out.params.is_finite());
        assert!(out.trace.records.is_empty());
    }
}
