use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar};

/// One layer of a [`NeuralNet`](super::NeuralNet).
///
/// Input channel counts are inferred from the shape flowing into the layer,
/// so a spec only carries what the layer adds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution along time: `[c, t] -> [filters, t - kernel + 1]`.
    Conv1D { filters: usize, kernel: usize },
    /// Fully connected map on a 1-D input.
    Dense { units: usize },
    /// Dense map over the channel axis shared by every time step: `[c, t] -> [units, t]`.
    PositionwiseDense { units: usize },
    /// Non-overlapping max pooling along time; a trailing remainder is dropped.
    MaxPool1D { pool: usize },
    /// Inverted dropout, active only in training mode.
    Dropout { rate: f64 },
    Flatten,
    ReLU,
    Softmax,
    Sigmoid,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1D { .. } => "Conv1D",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::PositionwiseDense { .. } => "PositionwiseDense",
            LayerSpec::MaxPool1D { .. } => "MaxPool1D",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::Softmax => "Softmax",
            LayerSpec::Sigmoid => "Sigmoid",
        }
    }

    pub(crate) fn label(&self, index: usize) -> String {
        format!("#{index} {}", self.name())
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::shape(self.label(index), what));
        match *self {
            LayerSpec::Conv1D { filters, kernel } if filters == 0 || kernel == 0 => {
                bad("filters and kernel length must be at least 1")
            }
            LayerSpec::Dense { units } | LayerSpec::PositionwiseDense { units } if units == 0 => {
                bad("units must be at least 1")
            }
            LayerSpec::MaxPool1D { pool } if pool == 0 => bad("pool length must be at least 1"),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad("drop rate must lie in [0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Output shape for `input`, or a shape error naming layer `index`.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        self.validate(index)?;
        let err = |detail: String| Err(Error::shape(self.label(index), detail));
        match *self {
            LayerSpec::Conv1D { filters, kernel } => match input {
                [_, t] if *t >= kernel => Ok(vec![filters, t - kernel + 1]),
                [_, t] => err(format!("time length {t} shorter than kernel {kernel}")),
                _ => err(format!("expects [channels, time] input, got {input:?}")),
            },
            LayerSpec::PositionwiseDense { units } => match input {
                [_, t] => Ok(vec![units, *t]),
                _ => err(format!("expects [channels, time] input, got {input:?}")),
            },
            LayerSpec::MaxPool1D { pool } => match input {
                [c, t] if *t >= pool => Ok(vec![*c, t / pool]),
                [_, t] => err(format!("time length {t} shorter than pool {pool}")),
                _ => err(format!("expects [channels, time] input, got {input:?}")),
            },
            LayerSpec::Dense { units } => match input {
                [_] => Ok(vec![units]),
                _ => err(format!("expects a 1-D input, got {input:?}")),
            },
            LayerSpec::Softmax => match input {
                [_] => Ok(input.to_vec()),
                _ => err(format!("expects a 1-D input, got {input:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dropout { .. } | LayerSpec::ReLU | LayerSpec::Sigmoid => Ok(input.to_vec()),
        }
    }

    /// Shapes of (weight, bias) for parameterised layers, empty otherwise.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv1D { filters, kernel } => {
                vec![vec![filters, input[0], kernel], vec![filters]]
            }
            LayerSpec::Dense { units } => vec![vec![units, input[0]], vec![units]],
            LayerSpec::PositionwiseDense { units } => vec![vec![units, input[0]], vec![units]],
            _ => Vec::new(),
        }
    }

    /// Fan-in used by the He-uniform initialiser.
    pub(crate) fn fan_in(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Conv1D { kernel, .. } => input[0] * kernel,
            _ => input[0],
        }
    }
}

#[inline]
fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn conv1d_forward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    weight: &[S],
    bias: &[S],
    kernel: usize,
    out: &mut [S],
) {
    let (channels, len) = (in_shape[0], in_shape[1]);
    let out_len = len - kernel + 1;
    for (f, o) in out.chunks_exact_mut(out_len).enumerate() {
        o.fill(bias[f]);
        for c in 0..channels {
            let x = &input[c * len..(c + 1) * len];
            let w = &weight[(f * channels + c) * kernel..][..kernel];
            for (k, &wk) in w.iter().enumerate() {
                axpy(o, wk, &x[k..k + out_len]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    weight: &[S],
    kernel: usize,
    grad_out: &[S],
    grad_in: &mut [S],
    param_grads: Option<(&mut [S], &mut [S])>,
) {
    let (channels, len) = (in_shape[0], in_shape[1]);
    let out_len = len - kernel + 1;
    let mut param_grads = param_grads;
    for (f, g) in grad_out.chunks_exact(out_len).enumerate() {
        if let Some((gw, gb)) = param_grads.as_mut() {
            gb[f] += g.iter().copied().sum();
            for c in 0..channels {
                let x = &input[c * len..(c + 1) * len];
                let gwf = &mut gw[(f * channels + c) * kernel..][..kernel];
                for (k, gwk) in gwf.iter_mut().enumerate() {
                    *gwk += dot(g, &x[k..k + out_len]);
                }
            }
        }
        for c in 0..channels {
            let gx = &mut grad_in[c * len..(c + 1) * len];
            let w = &weight[(f * channels + c) * kernel..][..kernel];
            for (k, &wk) in w.iter().enumerate() {
                axpy(&mut gx[k..k + out_len], wk, g);
            }
        }
    }
}

pub(crate) fn dense_forward<S: Scalar>(input: &[S], weight: &[S], bias: &[S], out: &mut [S]) {
    let n = input.len();
    for (u, o) in out.iter_mut().enumerate() {
        *o = bias[u] + dot(&weight[u * n..(u + 1) * n], input);
    }
}

pub(crate) fn dense_backward<S: Scalar>(
    input: &[S],
    weight: &[S],
    grad_out: &[S],
    grad_in: &mut [S],
    param_grads: Option<(&mut [S], &mut [S])>,
) {
    let n = input.len();
    match param_grads {
        Some((gw, gb)) => {
            for (u, &g) in grad_out.iter().enumerate() {
                gb[u] += g;
                if g != S::zero() {
                    axpy(&mut gw[u * n..(u + 1) * n], g, input);
                    axpy(grad_in, g, &weight[u * n..(u + 1) * n]);
                }
            }
        }
        None => {
            for (u, &g) in grad_out.iter().enumerate() {
                if g != S::zero() {
                    axpy(grad_in, g, &weight[u * n..(u + 1) * n]);
                }
            }
        }
    }
}

pub(crate) fn positionwise_forward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    weight: &[S],
    bias: &[S],
    out: &mut [S],
) {
    let (channels, len) = (in_shape[0], in_shape[1]);
    for (u, o) in out.chunks_exact_mut(len).enumerate() {
        o.fill(bias[u]);
        for c in 0..channels {
            axpy(o, weight[u * channels + c], &input[c * len..(c + 1) * len]);
        }
    }
}

pub(crate) fn positionwise_backward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    weight: &[S],
    grad_out: &[S],
    grad_in: &mut [S],
    param_grads: Option<(&mut [S], &mut [S])>,
) {
    let (channels, len) = (in_shape[0], in_shape[1]);
    let mut param_grads = param_grads;
    for (u, g) in grad_out.chunks_exact(len).enumerate() {
        if let Some((gw, gb)) = param_grads.as_mut() {
            gb[u] += g.iter().copied().sum();
            for c in 0..channels {
                gw[u * channels + c] += dot(g, &input[c * len..(c + 1) * len]);
            }
        }
        for c in 0..channels {
            axpy(&mut grad_in[c * len..(c + 1) * len], weight[u * channels + c], g);
        }
    }
}

/// Writes the pooled maxima and the flat input index each came from.
pub(crate) fn maxpool_forward<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    pool: usize,
    out: &mut [S],
    argmax: &mut [usize],
) {
    let (channels, len) = (in_shape[0], in_shape[1]);
    let out_len = len / pool;
    for c in 0..channels {
        for t in 0..out_len {
            let start = c * len + t * pool;
            let mut best = start;
            for i in start + 1..start + pool {
                if input[i] > input[best] {
                    best = i;
                }
            }
            out[c * out_len + t] = input[best];
            argmax[c * out_len + t] = best;
        }
    }
}

pub(crate) fn softmax<S: Scalar>(input: &[S], out: &mut [S]) {
    let max = input.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for (o, &x) in out.iter_mut().zip(input) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `sigmoid(x) * (1 - sigmoid(x))`, evaluated as `e / (1 + e)^2` with `e = exp(-|x|)`.
#[inline]
pub(crate) fn sigmoid_slope<S: Scalar>(x: S) -> S {
    let e = (-x.abs()).exp();
    let d = S::one() + e;
    e / (d * d)
}
