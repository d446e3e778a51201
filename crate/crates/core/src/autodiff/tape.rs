use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{AutodiffError, Real};

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
    arity: u8,
}

/// Wengert list for scalar reverse-mode differentiation.
///
/// Every primitive appends one record holding the indices of its inputs and the local
/// partial derivatives evaluated at the forward values. Replaying the records backwards
/// accumulates adjoints. A tape belongs to a single evaluation; concurrent evaluations
/// each build their own.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`]. Constants carry no tape and no node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.index, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

const REGISTERED: &[&str] = &["neg", "tanh", "sin", "cos", "exp", "sqrt", "abs", "relu", "square"];

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every record; handles created before the reset must not be used afterwards.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
    }

    /// Registers an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [0; 2],
            partials: [0.0; 2],
            arity: 0,
        });
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Applies a unary primitive looked up by name.
    pub fn apply<'t>(&'t self, name: &str, x: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let y = match name {
            "neg" => -x,
            "tanh" => x.tanh(),
            "sin" => x.sin(),
            "cos" => x.cos(),
            "exp" => x.exp(),
            "sqrt" => x.sqrt(),
            "abs" => x.abs(),
            "relu" => x.relu(),
            "square" => x.square(),
            other => return Err(AutodiffError::UnregisteredPrimitive(other.to_string())),
        };
        debug_assert!(REGISTERED.contains(&name));
        Ok(y)
    }

    /// Names accepted by [`Tape::apply`].
    pub fn registered_primitives() -> &'static [&'static str] {
        REGISTERED
    }

    /// Adjoints of every recorded node with respect to `output`.
    pub fn adjoints(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.tape.is_none() {
            return adj;
        }
        adj[output.index as usize] = 1.0;
        for i in (0..=output.index as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..node.arity as usize {
                adj[node.parents[k] as usize] += a * node.partials[k];
            }
        }
        adj
    }

    /// Gradient of `output` with respect to the given inputs.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Vec<f64> {
        let adj = self.adjoints(output);
        inputs
            .iter()
            .map(|v| match v.tape {
                Some(_) => adj[v.index as usize],
                None => 0.0,
            })
            .collect()
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape exceeds u32 records");
        nodes.push(node);
        index
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: 0,
            value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(tape) => {
                let index = tape.push(Node {
                    parents: [self.index, 0],
                    partials: [partial, 0.0],
                    arity: 1,
                });
                Var {
                    tape: Some(tape),
                    index,
                    value,
                }
            }
        }
    }

    fn binary(self, rhs: Self, value: f64, dl: f64, dr: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(value),
            (Some(_), None) => self.unary(value, dl),
            (None, Some(_)) => rhs.unary(value, dr),
            (Some(tape), Some(other)) => {
                debug_assert!(std::ptr::eq(tape, other), "mixing vars of different tapes");
                let index = tape.push(Node {
                    parents: [self.index, rhs.index],
                    partials: [dl, dr],
                    arity: 2,
                });
                Var {
                    tape: Some(tape),
                    index,
                    value,
                }
            }
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl Real for Var<'_> {
    fn cst(value: f64) -> Self {
        Var::constant(value)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Var::constant(1.0);
        }
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    fn square(self) -> Self {
        self.unary(self.value * self.value, 2.0 * self.value)
    }
}
