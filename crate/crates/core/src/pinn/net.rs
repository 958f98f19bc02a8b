//! Multilayer perceptron with a batched forward pass that can carry input
//! derivatives, and the matching reverse pass.
//!
//! A batch of `B` inputs is a `3 x B` matrix. In [`Channels::Laplacian`] mode
//! each layer works on a stacked `width x 7B` matrix holding, in column
//! blocks, the value, the three first derivatives `d/dx_i` and the three
//! pure second derivatives `d2/dx_i2`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::rowdy::RowdyActivationParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Rowdy(RowdyActivationParams),
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn param_count(&self) -> usize {
        let rowdy = match &self.activation {
            Activation::Rowdy(p) => 2 * p.terms(),
            Activation::Identity => 0,
        };
        self.weights.len() + self.biases.len() + rowdy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::InvalidConfig("network has no layers".into()))?;
        if first.input_dim() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "first layer takes {} inputs, expected 3",
                first.input_dim()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.output_dim() {
                return Err(Error::ShapeMismatch(format!("layer {i} bias length mismatch")));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::ShapeMismatch(format!("layer {i} does not chain")));
            }
        }
        if !matches!(layers.last().map(|l| &l.activation), Some(Activation::Identity)) {
            return Err(Error::InvalidConfig("final layer must be linear".into()));
        }
        Ok(MlpParams { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Same shape with every trainable entry zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.weights.fill(0.0);
            layer.biases.fill(0.0);
            if let Activation::Rowdy(p) = &mut layer.activation {
                p.n.iter_mut().for_each(|v| *v = 0.0);
                p.alpha.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    /// Per layer: weights (row-major), biases, `n`, `alpha`.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            out.extend(layer.biases.iter());
            if let Activation::Rowdy(p) = &layer.activation {
                out.extend(&p.n);
                out.extend(&p.alpha);
            }
        }
    }

    /// Inverse of [`MlpParams::write_flat`]; returns the unread tail.
    pub fn read_flat<'a>(&mut self, mut flat: &'a [f64]) -> Result<&'a [f64]> {
        if flat.len() < self.param_count() {
            return Err(Error::ShapeMismatch("parameter vector too short".into()));
        }
        let mut take = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for d in dst {
                *d = flat[0];
                flat = &flat[1..];
            }
        };
        for layer in &mut self.layers {
            take(&mut layer.weights.iter_mut());
            take(&mut layer.biases.iter_mut());
            if let Activation::Rowdy(p) = &mut layer.activation {
                take(&mut p.n.iter_mut());
                take(&mut p.alpha.iter_mut());
            }
        }
        Ok(flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Value,
    Laplacian,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Value => 1,
            Channels::Laplacian => 7,
        }
    }
}

/// Intermediate matrices kept for the reverse pass.
pub struct Tape {
    channels: Channels,
    batch: usize,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

fn stacked_input(x: ArrayView2<f64>, channels: Channels) -> Array2<f64> {
    let b = x.ncols();
    let mut a = Array2::zeros((3, channels.count() * b));
    a.slice_mut(s![.., ..b]).assign(&x);
    if channels == Channels::Laplacian {
        for i in 0..3 {
            a.slice_mut(s![i, (1 + i) * b..(2 + i) * b]).fill(1.0);
        }
    }
    a
}

fn activate(pre: &Array2<f64>, activation: &Activation, channels: Channels, b: usize) -> Array2<f64> {
    let params = match activation {
        Activation::Identity => return pre.clone(),
        Activation::Rowdy(p) => p,
    };
    let mut out = Array2::zeros(pre.raw_dim());
    for (u, a) in pre.outer_iter().zip(out.outer_iter_mut()) {
        let u = u.as_slice().expect("standard layout");
        let a = a.into_slice().expect("standard layout");
        for j in 0..b {
            let d = params.derivatives(u[j]);
            a[j] = d[0];
            if channels == Channels::Laplacian {
                for i in 0..3 {
                    let ug = u[(1 + i) * b + j];
                    let uh = u[(4 + i) * b + j];
                    a[(1 + i) * b + j] = d[1] * ug;
                    a[(4 + i) * b + j] = d[2] * ug * ug + d[1] * uh;
                }
            }
        }
    }
    out
}

/// Forward pass over a `3 x B` batch. Returns the stacked `K x CB` output.
pub fn forward_batch(
    net: &MlpParams,
    x: ArrayView2<f64>,
    channels: Channels,
    keep_tape: bool,
) -> (Array2<f64>, Option<Tape>) {
    let b = x.ncols();
    let mut a = stacked_input(x, channels);
    let mut tape = keep_tape.then(|| Tape {
        channels,
        batch: b,
        inputs: Vec::with_capacity(net.layers.len()),
        pre: Vec::with_capacity(net.layers.len()),
    });
    for layer in &net.layers {
        let mut u = Array2::zeros((layer.output_dim(), a.ncols()));
        general_mat_mul(1.0, &layer.weights, &a, 0.0, &mut u);
        u.slice_mut(s![.., ..b])
            .axis_iter_mut(Axis(1))
            .for_each(|mut col| col += &layer.biases);
        let next = activate(&u, &layer.activation, channels, b);
        if let Some(t) = tape.as_mut() {
            t.inputs.push(a);
            t.pre.push(u);
        }
        a = next;
    }
    (a, tape)
}

/// Reverse pass: accumulates into `grad` the gradient of a scalar whose
/// adjoint with respect to the stacked output is `out_adj`.
pub fn backward_batch(net: &MlpParams, tape: &Tape, out_adj: Array2<f64>, grad: &mut MlpParams) {
    let b = tape.batch;
    let lap = tape.channels == Channels::Laplacian;
    let mut adj = out_adj;
    for (l, layer) in net.layers.iter().enumerate().rev() {
        let u = &tape.pre[l];
        let g = &mut grad.layers[l];
        let pre_adj = match &layer.activation {
            Activation::Identity => adj,
            Activation::Rowdy(p) => {
                let mut ubar = Array2::zeros(u.raw_dim());
                let (gn, galpha) = match &mut g.activation {
                    Activation::Rowdy(gp) => (&mut gp.n, &mut gp.alpha),
                    Activation::Identity => unreachable!("gradient shape mirrors the network"),
                };
                for ((urow, arow), ubrow) in u.outer_iter().zip(adj.outer_iter()).zip(ubar.outer_iter_mut()) {
                    let u = urow.as_slice().expect("standard layout");
                    let abar = arow.as_slice().expect("standard layout");
                    let ubar = ubrow.into_slice().expect("standard layout");
                    for j in 0..b {
                        let x = u[j];
                        let d = p.derivatives(x);
                        let (mut g1, mut g2) = (0.0, 0.0);
                        if lap {
                            for i in 0..3 {
                                let (ug, uh) = (u[(1 + i) * b + j], u[(4 + i) * b + j]);
                                let (ag, ah) = (abar[(1 + i) * b + j], abar[(4 + i) * b + j]);
                                g1 += ag * ug + ah * uh;
                                g2 += ah * ug * ug;
                                ubar[(1 + i) * b + j] = ag * d[1] + 2.0 * ah * d[2] * ug;
                                ubar[(4 + i) * b + j] = ah * d[1];
                            }
                        }
                        let a0 = abar[j];
                        ubar[j] = a0 * d[1] + g1 * d[2] + g2 * d[3];
                        for w in 0..p.terms() {
                            let (n, al) = (p.n[w], p.alpha[w]);
                            let (sn, cs) = (al * x).sin_cos();
                            gn[w] += a0 * sn + g1 * al * cs - g2 * al * al * sn;
                            galpha[w] += n
                                * (a0 * x * cs + g1 * (cs - al * x * sn)
                                    - g2 * (2.0 * al * sn + al * al * x * cs));
                        }
                    }
                }
                ubar
            }
        };
        general_mat_mul(1.0, &pre_adj, &tape.inputs[l].t(), 1.0, &mut g.weights);
        g.biases += &pre_adj.slice(s![.., ..b]).sum_axis(Axis(1));
        if l > 0 {
            let mut next = Array2::zeros((layer.input_dim(), pre_adj.ncols()));
            general_mat_mul(1.0, &layer.weights.t(), &pre_adj, 0.0, &mut next);
            adj = next;
        } else {
            break;
        }
    }
}

/// Splits a stacked Laplacian-mode output into value and Laplacian (`K x B`).
pub fn value_and_laplacian(out: &Array2<f64>, b: usize) -> (Array2<f64>, Array2<f64>) {
    let value = out.slice(s![.., ..b]).to_owned();
    let lap = &out.slice(s![.., 4 * b..5 * b]) + &out.slice(s![.., 5 * b..6 * b]) + &out.slice(s![.., 6 * b..7 * b]);
    (value, lap)
}
