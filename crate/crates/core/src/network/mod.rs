//! Fully connected tanh network `Φ(x; θ̂)` and the trainable horizon `δ`.
//!
//! All trainable numbers live in one flat vector: for each affine layer the weight matrix
//! in row-major order followed by its bias, and the horizon last. The horizon never enters
//! `Φ`; it is only read by the residual operator.

mod batch;

pub use batch::{BatchJet, JetAxis};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Real, ScalarField};

/// Lower bound applied to the horizon after every optimizer step.
pub const DELTA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("input has {got} coordinates, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, architecture needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("architecture dimensions must be positive")]
    EmptyLayer,
    #[error("input map has {got} entries for {expected} inputs")]
    InputMap { expected: usize, got: usize },
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }
}

/// Fixed affine rescaling of the inputs, `x' = (x − center)·scale`, applied before the
/// first layer. Not trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputMap {
    /// Maps the box `[lo_i, hi_i]` onto `[-1, 1]` per coordinate.
    pub fn from_box(bounds: &[(f64, f64)]) -> Self {
        let center = bounds.iter().map(|&(a, b)| 0.5 * (a + b)).collect();
        let scale = bounds
            .iter()
            .map(|&(a, b)| if b > a { 2.0 / (b - a) } else { 1.0 })
            .collect();
        Self { center, scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub input_map: Option<InputMap>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_layers: 8,
            hidden_width: 20,
            activation: Activation::Tanh,
            input_map: None,
        }
    }
}

/// Position of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_dim,
            hidden_layers,
            hidden_width,
            ..Self::default()
        }
    }

    pub fn with_input_map(mut self, map: InputMap) -> Self {
        self.input_map = Some(map);
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(NetworkError::EmptyLayer);
        }
        if let Some(m) = &self.input_map {
            if m.center.len() != self.input_dim || m.scale.len() != self.input_dim {
                return Err(NetworkError::InputMap {
                    expected: self.input_dim,
                    got: m.center.len().min(m.scale.len()),
                });
            }
        }
        Ok(())
    }

    /// `[N_0, N_1, …, N_L]` with `N_0` the input dimension and `N_L = 1`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_layers + 2);
        d.push(self.input_dim);
        d.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        d.push(1);
        d
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let dims = self.dims();
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let shape = LayerShape {
                    rows,
                    cols,
                    weight_offset: offset,
                    bias_offset: offset + rows * cols,
                };
                offset += rows * cols + rows;
                shape
            })
            .collect()
    }

    /// `P(N)`: weights and biases only.
    pub fn weight_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `P(N) + 1`, including the horizon.
    pub fn param_count(&self) -> usize {
        self.weight_count() + 1
    }

    /// Scale factor applied to input coordinate `axis` before the first layer.
    pub fn input_scale(&self, axis: usize) -> f64 {
        self.input_map.as_ref().map_or(1.0, |m| m.scale[axis])
    }

    fn map_input<T: Real>(&self, point: &[T]) -> Vec<T> {
        match &self.input_map {
            None => point.to_vec(),
            Some(m) => point
                .iter()
                .zip(m.center.iter().zip(&m.scale))
                .map(|(&x, (&c, &s))| (x - c) * s)
                .collect(),
        }
    }
}

/// Forward pass with parameters supplied through an accessor so the same code serves
/// plain, forward-mode and taped parameter types.
pub fn forward_with<T, W>(arch: &Architecture, weight: W, point: &[T]) -> T
where
    T: Real,
    W: Fn(usize) -> T,
{
    let layers = arch.layers();
    let last = layers.len() - 1;
    let mut act = arch.map_input(point);
    let mut next = Vec::with_capacity(arch.hidden_width.max(1));
    for (l, shape) in layers.iter().enumerate() {
        next.clear();
        for r in 0..shape.rows {
            let row = shape.weight_offset + r * shape.cols;
            let mut z = weight(shape.bias_offset + r);
            for (c, &a) in act.iter().enumerate() {
                z = z + weight(row + c) * a;
            }
            next.push(if l == last { z } else { arch.activation.apply(z) });
        }
        std::mem::swap(&mut act, &mut next);
    }
    act[0]
}

/// All trainable quantities `θ = (θ̂, δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self, NetworkError> {
        arch.validate()?;
        let expected = arch.param_count();
        if values.len() != expected {
            return Err(NetworkError::ParamCount {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { arch, values })
    }

    /// Every weight and bias zero, horizon 1.
    pub fn zeros(arch: Architecture) -> Self {
        let mut values = vec![0.0; arch.param_count()];
        *values.last_mut().unwrap() = 1.0;
        Self { arch, values }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn horizon(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn set_horizon(&mut self, delta: f64) {
        *self.values.last_mut().unwrap() = delta;
    }

    pub fn with_horizon(mut self, delta: f64) -> Self {
        self.set_horizon(delta);
        self
    }

    /// `δ ← max(δ, DELTA_FLOOR)`.
    pub fn project_horizon(&mut self) {
        let d = self.horizon();
        if d.is_nan() || d < DELTA_FLOOR {
            self.set_horizon(DELTA_FLOOR);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `Φ(point; θ̂)`.
    pub fn realize(&self, point: &[f64]) -> Result<f64, NetworkError> {
        self.check_point(point.len())?;
        Ok(forward_with(&self.arch, |i| self.values[i], point))
    }

    /// `Φ` evaluated at a point carrying derivative information.
    pub fn realize_at<T: Real>(&self, point: &[T]) -> T {
        assert_eq!(point.len(), self.arch.input_dim, "network input dimension");
        forward_with(&self.arch, |i| T::cst(self.values[i]), point)
    }

    /// `∂Φ/∂δ`, by reverse mode over every parameter including `δ`.
    pub fn dphi_ddelta(&self, point: &[f64]) -> Result<f64, NetworkError> {
        self.check_point(point.len())?;
        let arch = &self.arch;
        let g = crate::autodiff::grad(
            |theta| {
                let p: Vec<_> = point.iter().map(|&v| crate::autodiff::Var::constant(v)).collect();
                forward_with(arch, |i| theta[i], &p)
            },
            &self.values,
        );
        Ok(*g.last().unwrap())
    }

    /// `‖W⁽ᴸ⁾‖₁ + |b⁽ᴸ⁾|`, an upper bound on `|Φ|`.
    pub fn output_bound(&self) -> f64 {
        let out = *self.arch.layers().last().unwrap();
        let w: f64 = self.values[out.weight_offset..out.bias_offset]
            .iter()
            .map(|v| v.abs())
            .sum();
        w + self.values[out.bias_offset].abs()
    }

    fn check_point(&self, len: usize) -> Result<(), NetworkError> {
        if len != self.arch.input_dim {
            return Err(NetworkError::DimensionMismatch {
                expected: self.arch.input_dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Text checkpoint: a shape header followed by one value per line, horizon last.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        s.push_str("peri-pinn-checkpoint 1\n");
        s.push_str(&format!(
            "arch {} {} {} {}\n",
            self.arch.input_dim,
            self.arch.hidden_layers,
            self.arch.hidden_width,
            match self.arch.activation {
                Activation::Tanh => "tanh",
            }
        ));
        match &self.arch.input_map {
            None => s.push_str("input_map none\n"),
            Some(m) => {
                s.push_str("input_map");
                for (c, k) in m.center.iter().zip(&m.scale) {
                    s.push_str(&format!(" {c:?} {k:?}"));
                }
                s.push('\n');
            }
        }
        let dims: Vec<String> = self.arch.dims().iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("dims {}\n", dims.join(" ")));
        s.push_str(&format!("count {}\n", self.values.len()));
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetworkError> {
        let err = |line: usize, msg: &str| NetworkError::Checkpoint {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (n, magic) = next("header")?;
        if magic != "peri-pinn-checkpoint 1" {
            return Err(err(n, "unrecognised header"));
        }
        let (n, arch_line) = next("arch line")?;
        let f: Vec<&str> = arch_line.split_whitespace().collect();
        if f.len() != 5 || f[0] != "arch" || f[4] != "tanh" {
            return Err(err(n, "expected `arch <in> <layers> <width> tanh`"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| err(n, &e.to_string()));
        let mut arch = Architecture::new(parse_usize(f[1])?, parse_usize(f[2])?, parse_usize(f[3])?);

        let (n, map_line) = next("input_map line")?;
        let f: Vec<&str> = map_line.split_whitespace().collect();
        if f.first() != Some(&"input_map") {
            return Err(err(n, "expected `input_map`"));
        }
        if f.get(1) != Some(&"none") {
            let nums: Result<Vec<f64>, _> = f[1..].iter().map(|s| s.parse::<f64>()).collect();
            let nums = nums.map_err(|e| err(n, &e.to_string()))?;
            if nums.len() != 2 * arch.input_dim {
                return Err(err(n, "input_map needs a center and scale per input"));
            }
            arch.input_map = Some(InputMap {
                center: nums.iter().step_by(2).copied().collect(),
                scale: nums.iter().skip(1).step_by(2).copied().collect(),
            });
        }

        let (n, dims_line) = next("dims line")?;
        let dims: Vec<String> = arch.dims().iter().map(|d| d.to_string()).collect();
        if dims_line != format!("dims {}", dims.join(" ")) {
            return Err(err(n, "dims do not match the arch line"));
        }
        let (n, count_line) = next("count line")?;
        let count = count_line
            .strip_prefix("count ")
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| err(n, "expected `count <n>`"))?;
        let mut values = Vec::with_capacity(count);
        for (n, l) in lines.by_ref() {
            if l.is_empty() {
                continue;
            }
            values.push(l.parse::<f64>().map_err(|e| err(n, &e.to_string()))?);
        }
        if values.len() != count {
            return Err(err(0, &format!("expected {count} values, found {}", values.len())));
        }
        Self::from_values(arch, values)
    }
}

impl ScalarField for NetworkParams {
    fn eval<T: Real>(&self, point: &[T]) -> T {
        self.realize_at(point)
    }
}

/// Glorot-normal weights on every layer (output included), zero biases, horizon 1.
pub fn init_params(arch: &Architecture, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(arch.clone());
    for shape in arch.layers() {
        let std = (2.0 / (shape.rows + shape.cols) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        for w in &mut params.values[shape.weight_offset..shape.bias_offset] {
            *w = normal.sample(&mut rng);
        }
    }
    params
}
