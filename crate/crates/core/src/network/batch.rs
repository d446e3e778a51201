//! Batched forward and reverse passes over many input points at once.
//!
//! Activations are kept as `features × batch` matrices so each layer is one matrix
//! product. Optionally a second-order jet along one input axis is carried alongside
//! (value, first and second derivative), which yields `∂²Φ/∂x_axis²` for every column and,
//! in the reverse pass, the parameter gradient of any linear functional of value and
//! second derivative. The reverse pass can also return input adjoints, used for the
//! chain through horizon-dependent quadrature node positions.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

use super::NetworkParams;

/// Which derivative jet to propagate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetAxis {
    /// Values only.
    Value,
    /// Value plus first and second derivatives along this input coordinate.
    Second(usize),
}

struct Hidden {
    y: Array2<f64>,
    zd: Option<Array2<f64>>,
    zdd: Option<Array2<f64>>,
    yd: Option<Array2<f64>>,
    ydd: Option<Array2<f64>>,
}

/// Recorded forward pass; consumed by [`BatchJet::backward`].
pub struct BatchJet {
    jet: JetAxis,
    input: Array2<f64>,
    hidden: Vec<Hidden>,
    /// `Φ` per point.
    pub value: Vec<f64>,
    /// `∂²Φ/∂x_axis²` per point (empty for [`JetAxis::Value`]).
    pub second: Vec<f64>,
}

fn weight_view<'a>(theta: &'a [f64], rows: usize, cols: usize, off: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &theta[off..off + rows * cols]).expect("layer shape")
}

fn affine(w: &ArrayView2<f64>, bias: &[f64], a: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros((w.nrows(), a.ncols()));
    general_mat_mul(1.0, w, a, 0.0, &mut z);
    for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(bias) {
        row += b;
    }
    z
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn matmul(w: &ArrayView2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros((w.nrows(), a.ncols()));
    general_mat_mul(1.0, w, a, 0.0, &mut z);
    z
}

fn matmul_t(w: &ArrayView2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros((w.ncols(), g.ncols()));
    general_mat_mul(1.0, &w.t(), g, 0.0, &mut z);
    z
}

impl BatchJet {
    /// Runs the network over `points` (row-major, `n × input_dim`).
    pub fn forward(params: &NetworkParams, points: &[f64], jet: JetAxis) -> Self {
        let arch = params.arch();
        let d = arch.input_dim;
        assert_eq!(points.len() % d, 0, "point buffer not a multiple of input_dim");
        let n = points.len() / d;
        let theta = params.values();
        let layers = arch.layers();

        let mut input = Array2::zeros((d, n));
        for j in 0..n {
            for i in 0..d {
                let x = points[j * d + i];
                input[[i, j]] = match &arch.input_map {
                    None => x,
                    Some(m) => (x - m.center[i]) * m.scale[i],
                };
            }
        }

        let mut hidden: Vec<Hidden> = Vec::with_capacity(layers.len() - 1);
        let mut value = Vec::new();
        let mut second = Vec::new();
        for (l, shape) in layers.iter().enumerate() {
            let w = weight_view(theta, shape.rows, shape.cols, shape.weight_offset);
            let bias = &theta[shape.bias_offset..shape.bias_offset + shape.rows];
            let a_prev = if l == 0 { &input } else { &hidden[l - 1].y };
            let z = affine(&w, bias, a_prev);
            let (zd, zdd) = match jet {
                JetAxis::Value => (None, None),
                JetAxis::Second(axis) => {
                    if l == 0 {
                        let s = arch.input_scale(axis);
                        let col = w.column(axis).to_owned() * s;
                        let zd = col
                            .insert_axis(Axis(1))
                            .broadcast((shape.rows, n))
                            .expect("broadcast")
                            .to_owned();
                        (Some(zd), Some(Array2::zeros((shape.rows, n))))
                    } else {
                        let prev = &hidden[l - 1];
                        let zd = matmul(&w, prev.yd.as_ref().unwrap());
                        let zdd = matmul(&w, prev.ydd.as_ref().unwrap());
                        (Some(zd), Some(zdd))
                    }
                }
            };
            if l + 1 == layers.len() {
                value = z.row(0).to_vec();
                if let Some(zdd) = &zdd {
                    second = zdd.row(0).to_vec();
                }
            } else {
                let y = z.mapv(f64::tanh);
                let (yd, ydd) =
                    match (&zd, &zdd) {
                        (Some(zd), Some(zdd)) => {
                            let mut yd = Array2::zeros(y.raw_dim());
                            let mut ydd = Array2::zeros(y.raw_dim());
                            Zip::from(&mut yd).and(&mut ydd).and(&y).and(zd).and(zdd).for_each(
                                |yd, ydd, &y, &zd, &zdd| {
                                    let s = 1.0 - y * y;
                                    *yd = s * zd;
                                    *ydd = s * zdd - 2.0 * y * s * zd * zd;
                                },
                            );
                            (Some(yd), Some(ydd))
                        }
                        _ => (None, None),
                    };
                hidden.push(Hidden { y, zd, zdd, yd, ydd });
            }
        }
        Self {
            jet,
            input,
            hidden,
            value,
            second,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `Σ_j seed_value[j]·Φ_j + seed_second[j]·∂²Φ_j`.
    ///
    /// When `input_adjoint` is given (length `n × input_dim`, row-major) it receives the
    /// gradient of the same functional with respect to each point's raw coordinates; this is
    /// only supported for [`JetAxis::Value`]. `grad` covers the weights; the horizon slot, if
    /// present, is left untouched.
    pub fn backward(
        &self,
        params: &NetworkParams,
        seed_value: &[f64],
        seed_second: Option<&[f64]>,
        grad: &mut [f64],
        input_adjoint: Option<&mut [f64]>,
    ) {
        let n = self.len();
        assert_eq!(seed_value.len(), n);
        let arch = params.arch();
        let theta = params.values();
        let layers = arch.layers();
        let order2 = matches!(self.jet, JetAxis::Second(_));
        assert!(
            seed_second.is_none() || order2,
            "second-derivative seed needs a second-order forward pass"
        );
        assert!(
            input_adjoint.is_none() || !order2,
            "input adjoints are only produced by value passes"
        );

        let mut ybar = Array2::from_shape_vec((1, n), seed_value.to_vec()).unwrap();
        let mut ydbar: Option<Array2<f64>> = None;
        let mut yddbar: Option<Array2<f64>> = seed_second.map(|s| Array2::from_shape_vec((1, n), s.to_vec()).unwrap());

        for l in (0..layers.len()).rev() {
            let shape = layers[l];
            let (zbar, zdbar, zddbar) = if l + 1 == layers.len() {
                (ybar, None, yddbar)
            } else {
                let h = &self.hidden[l];
                match (order2, &yddbar) {
                    (true, Some(yddb)) => {
                        let zd = slice(h.zd.as_ref().unwrap());
                        let zdd = slice(h.zdd.as_ref().unwrap());
                        let y = slice(&h.y);
                        let yb = slice(&ybar);
                        let ydb = ydbar.as_ref().map(slice);
                        let yddb = slice(yddb);
                        let len = y.len();
                        let mut zbar = vec![0.0; len];
                        let mut zdbar = vec![0.0; len];
                        let mut zddbar = vec![0.0; len];
                        for k in 0..len {
                            let (y, zd, zdd) = (y[k], zd[k], zdd[k]);
                            let s = 1.0 - y * y;
                            let ydb = ydb.map_or(0.0, |v| v[k]);
                            zddbar[k] = s * yddb[k];
                            zdbar[k] = s * ydb - 4.0 * y * s * zd * yddb[k];
                            zbar[k] = s
                                * (yb[k]
                                    - 2.0 * y * zd * ydb
                                    - (2.0 * y * zdd + 2.0 * (s - 2.0 * y * y) * zd * zd) * yddb[k]);
                        }
                        let dim = h.y.raw_dim();
                        (
                            Array2::from_shape_vec(dim, zbar).unwrap(),
                            Some(Array2::from_shape_vec(dim, zdbar).unwrap()),
                            Some(Array2::from_shape_vec(dim, zddbar).unwrap()),
                        )
                    }
                    _ => {
                        let mut zbar = ybar;
                        Zip::from(&mut zbar).and(&h.y).for_each(|zb, &y| *zb *= 1.0 - y * y);
                        (zbar, None, None)
                    }
                }
            };

            let a_prev = if l == 0 { &self.input } else { &self.hidden[l - 1].y };
            {
                let (wpart, rest) = grad[shape.weight_offset..].split_at_mut(shape.rows * shape.cols);
                let mut wbar = ArrayViewMut2::from_shape((shape.rows, shape.cols), wpart).unwrap();
                general_mat_mul(1.0, &zbar, &a_prev.t(), 1.0, &mut wbar);
                if let Some(zdb) = &zdbar {
                    if l == 0 {
                        if let JetAxis::Second(axis) = self.jet {
                            let s = arch.input_scale(axis);
                            for (r, row) in zdb.axis_iter(Axis(0)).enumerate() {
                                wbar[[r, axis]] += s * row.sum();
                            }
                        }
                    } else {
                        let ad = self.hidden[l - 1].yd.as_ref().unwrap();
                        general_mat_mul(1.0, zdb, &ad.t(), 1.0, &mut wbar);
                    }
                }
                if let (Some(zddb), true) = (&zddbar, l > 0) {
                    let add = self.hidden[l - 1].ydd.as_ref().unwrap();
                    general_mat_mul(1.0, zddb, &add.t(), 1.0, &mut wbar);
                }
                for (b, row) in rest[..shape.rows].iter_mut().zip(zbar.axis_iter(Axis(0))) {
                    *b += row.sum();
                }
            }

            let w = weight_view(theta, shape.rows, shape.cols, shape.weight_offset);
            if l > 0 {
                ybar = matmul_t(&w, &zbar);
                ydbar = zdbar.map(|g| matmul_t(&w, &g));
                yddbar = zddbar.map(|g| matmul_t(&w, &g));
            } else if let Some(adj) = input_adjoint {
                let d = shape.cols;
                assert_eq!(adj.len(), n * d);
                let xbar = matmul_t(&w, &zbar);
                for j in 0..n {
                    for i in 0..d {
                        adj[j * d + i] = xbar[[i, j]] * arch.input_scale(i);
                    }
                }
                break;
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad, second_derivative_generic, second_derivative_in, Var};
    use crate::network::{forward_with, init_params, Architecture, InputMap};

    fn small_arch() -> Architecture {
        Architecture::new(2, 3, 7).with_input_map(InputMap::from_box(&[(-4.0, 4.0), (0.0, 1.0)]))
    }

    fn points() -> Vec<f64> {
        vec![0.3, 0.1, -1.7, 0.9, 2.2, 0.45, -3.9, 0.0]
    }

    #[test]
    fn batch_matches_scalar_forward() {
        let p = init_params(&small_arch(), 4);
        let pts = points();
        let jet = BatchJet::forward(&p, &pts, JetAxis::Second(1));
        for j in 0..4 {
            let pt = &pts[2 * j..2 * j + 2];
            assert!((jet.value[j] - p.realize(pt).unwrap()).abs() < 1e-14);
            let d2 = second_derivative_in(&p, pt, 1);
            assert!((jet.second[j] - d2).abs() < 1e-12 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn backward_matches_tape_for_value_and_second_derivative() {
        let arch = small_arch();
        let p = init_params(&arch, 8);
        let pts = points();
        let sv = [0.7, -1.1, 0.4, 2.0];
        let ss = [1.3, 0.2, -0.8, 0.5];
        let jet = BatchJet::forward(&p, &pts, JetAxis::Second(1));
        let mut g = vec![0.0; p.values().len()];
        jet.backward(&p, &sv, Some(&ss), &mut g, None);

        let reference = grad(
            |theta| {
                let mut acc = Var::constant(0.0);
                for j in 0..4 {
                    let pt: Vec<Var> = pts[2 * j..2 * j + 2].iter().map(|&v| Var::constant(v)).collect();
                    let v = forward_with(&arch, |i| theta[i], &pt);
                    let d2 = second_derivative_generic(
                        |q| {
                            forward_with(
                                &arch,
                                |i| crate::autodiff::Dual::constant(crate::autodiff::Dual::constant(theta[i])),
                                q,
                            )
                        },
                        &pt,
                        1,
                    );
                    acc = acc + v * sv[j] + d2 * ss[j];
                }
                acc
            },
            p.values(),
        );
        for (a, b) in g.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn input_adjoint_is_spatial_gradient() {
        let arch = small_arch();
        let p = init_params(&arch, 2);
        let pts = points();
        let jet = BatchJet::forward(&p, &pts, JetAxis::Value);
        let seed = [1.0, -2.0, 0.5, 3.0];
        let mut g = vec![0.0; p.values().len()];
        let mut adj = vec![0.0; pts.len()];
        jet.backward(&p, &seed, None, &mut g, Some(&mut adj));
        let h = 1e-6;
        for j in 0..4 {
            for i in 0..2 {
                let mut up = pts[2 * j..2 * j + 2].to_vec();
                let mut dn = up.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (p.realize(&up).unwrap() - p.realize(&dn).unwrap()) / (2.0 * h) * seed[j];
                assert!((adj[2 * j + i] - fd).abs() < 1e-7, "{} vs {fd}", adj[2 * j + i]);
            }
        }
    }

    #[test]
    fn value_backward_matches_tape() {
        let arch = Architecture::new(2, 2, 5);
        let p = init_params(&arch, 3);
        let pts = points();
        let seed = [0.5, 0.25, -1.0, 2.0];
        let jet = BatchJet::forward(&p, &pts, JetAxis::Value);
        let mut g = vec![0.0; p.values().len()];
        jet.backward(&p, &seed, None, &mut g, None);
        let reference = grad(
            |theta| {
                let mut acc = Var::constant(0.0);
                for j in 0..4 {
                    let pt: Vec<Var> = pts[2 * j..2 * j + 2].iter().map(|&v| Var::constant(v)).collect();
                    acc = acc + forward_with(&arch, |i| theta[i], &pt) * seed[j];
                }
                acc
            },
            p.values(),
        );
        for (a, b) in g.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
        }
    }
}
