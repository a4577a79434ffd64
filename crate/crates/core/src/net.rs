//! Dense feedforward networks with hand-written reverse-mode gradients.
//!
//! A [`DenseNet`] is a chain of affine layers, each followed by a pointwise
//! activation. Weights are stored `input_dim × output_dim` row-major, so a
//! batch `X` (rows are samples) maps to `act(X·W + b)`.
//!
//! Every mutation of the parameters assigns the network a fresh *stamp*.
//! Caches computed from a network (see [`crate::assign::RealSet`]) remember
//! the stamp they were built against and refuse to be used once it moves.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.2;

/// Below this many multiply-adds a layer runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Rows per parallel task in the dense kernels.
const ROW_BLOCK: usize = 64;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Identity,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`, given the output `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }
}

/// One affine map followed by an activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    input_dim: usize,
    output_dim: usize,
    /// `input_dim × output_dim`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    /// `weights` must be an `input_dim × output_dim` matrix.
    pub fn new(weights: Tensor, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "layer weights must be 2-D, got {:?}",
                weights.shape()
            )));
        }
        let (input_dim, output_dim) = (weights.shape()[0], weights.shape()[1]);
        if bias.len() != output_dim {
            return Err(Error::Dimension {
                expected: output_dim,
                got: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer bias".into()));
        }
        Ok(Self {
            input_dim,
            output_dim,
            weights: weights.into_data(),
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let weights = (0..input_dim * output_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            input_dim,
            output_dim,
            weights,
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `z = x·W + b` for a batch of `rows` inputs.
    fn affine(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (din, dout) = (self.input_dim, self.output_dim);
        let mut out = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        if din == 0 || dout == 0 || rows == 0 {
            return out;
        }
        let kernel = |(o, xr): (&mut [f64], &[f64])| {
            let n = o.len() / dout;
            gemm(n, din, dout, xr, (din, 1), &self.weights, (dout, 1), o, (dout, 1), 1.0);
        };
        if rows * din * dout >= PAR_THRESHOLD {
            out.par_chunks_mut(ROW_BLOCK * dout)
                .zip(x.par_chunks(ROW_BLOCK * din))
                .for_each(kernel);
        } else {
            kernel((&mut out, x));
        }
        out
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` is the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pub pre_activations: Vec<Vec<f64>>,
    pub rows: usize,
}

impl ForwardTrace {
    /// Output of the last layer, row-major.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Parameter slices in the order `w0, b0, w1, b1, …`.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&g| g == 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|g| g.is_finite()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            stamp: self.stamp,
        }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::Dimension {
                    expected: pair[0].output_dim,
                    got: pair[1].input_dim,
                });
            }
        }
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    /// Builds `sizes[0] → sizes[1] → … → sizes[last]` with `hidden` after
    /// every layer except the last, which uses `head`.
    pub fn glorot<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        head: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Invalid(
                "a network needs at least an input and an output size".into(),
            ));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let act = if l + 1 == n { head } else { hidden };
                Layer::glorot(sizes[l], sizes[l + 1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    /// Identifies the current parameter values; changes on every update.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameter slices in the order `w0, b0, w1, b1, …`.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter access. Marks the network as changed.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut rest = flat;
        for s in self.param_slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(x.rows())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let rows = self.check_input(x)?;
        let mut a = x.data().to_vec();
        for layer in &self.layers {
            let mut z = layer.affine(&a, rows);
            let act = layer.activation;
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(Tensor::from_parts_unchecked(
            vec![rows, self.output_dim()],
            a,
        ))
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<ForwardTrace> {
        let rows = self.check_input(x)?;
        let mut activations = vec![x.data().to_vec()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.affine(activations.last().unwrap(), rows);
            let act = layer.activation;
            let a = z.iter().map(|&v| act.apply(v)).collect();
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
            rows,
        })
    }

    /// Gradients of `Σ upstream ∘ forward(x)` with respect to the parameters.
    pub fn backward_params(&self, x: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        self.backward_impl(x, upstream, false).map(|(g, _)| g)
    }

    /// As [`Self::backward_params`], reusing a trace of this network's
    /// forward pass instead of recomputing it.
    pub fn backward_params_traced(&self, trace: &ForwardTrace, upstream: &Tensor) -> Result<Gradients> {
        let layers_match = trace.activations.len() == self.layers.len() + 1
            && trace.pre_activations.len() == self.layers.len()
            && self.layers.iter().zip(&trace.pre_activations).all(|(l, z)| z.len() == trace.rows * l.output_dim)
            && trace.activations[0].len() == trace.rows * self.input_dim();
        if !layers_match {
            return Err(Error::Shape("forward trace does not match the network".into()));
        }
        self.backward_from(trace, upstream, false).map(|(g, _)| g)
    }

    /// Gradient of `Σ upstream ∘ forward(x)` with respect to `x`.
    pub fn backward_input(&self, x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        let (_, dx) = self.backward_impl(x, upstream, true)?;
        let dx = dx.expect("input gradient requested");
        Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), dx))
    }

    /// Parameter and input gradients from a single pass.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Gradients, Tensor)> {
        let (g, dx) = self.backward_impl(x, upstream, true)?;
        let dx = dx.expect("input gradient requested");
        Ok((g, Tensor::from_parts_unchecked(x.shape().to_vec(), dx)))
    }

    fn backward_impl(
        &self,
        x: &Tensor,
        upstream: &Tensor,
        want_input: bool,
    ) -> Result<(Gradients, Option<Vec<f64>>)> {
        self.check_input(x)?;
        let trace = self.forward_trace(x)?;
        self.backward_from(&trace, upstream, want_input)
    }

    fn backward_from(
        &self,
        trace: &ForwardTrace,
        upstream: &Tensor,
        want_input: bool,
    ) -> Result<(Gradients, Option<Vec<f64>>)> {
        let rows = trace.rows;
        if upstream.rows() != rows || upstream.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient must be {rows}×{}, got {:?}",
                self.output_dim(),
                upstream.shape()
            )));
        }
        let mut grads = Gradients::zeros_like(self);

        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = upstream.data().to_vec();
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let (din, dout) = (layer.input_dim, layer.output_dim);
            let z = &trace.pre_activations[l];
            let a = &trace.activations[l + 1];
            for ((d, &zv), &av) in delta.iter_mut().zip(z).zip(a) {
                *d *= layer.activation.derivative(zv, av);
            }

            let input = &trace.activations[l];
            accumulate_weight_grad(&mut grads.weights[l], input, &delta, rows, din, dout);
            let db = &mut grads.biases[l];
            for dr in delta.chunks_exact(dout.max(1)).take(rows) {
                for (b, d) in db.iter_mut().zip(dr) {
                    *b += d;
                }
            }

            if l == 0 && !want_input {
                break;
            }
            delta = propagate_to_input(&layer.weights, &delta, rows, din, dout);
        }
        let dx = want_input.then_some(delta);
        Ok((grads, dx))
    }
}

/// `dW[k, :] += Σ_b input[b, k] · delta[b, :]`, split over blocks of `k`.
fn accumulate_weight_grad(
    dw: &mut [f64],
    input: &[f64],
    delta: &[f64],
    rows: usize,
    din: usize,
    dout: usize,
) {
    if din == 0 || dout == 0 || rows == 0 {
        return;
    }
    let kernel = |(blk, g): (usize, &mut [f64])| {
        let k0 = blk * ROW_BLOCK;
        let n = g.len() / dout;
        // inputᵀ restricted to columns k0..k0+n
        gemm(n, rows, dout, &input[k0..], (1, din), delta, (dout, 1), g, (dout, 1), 1.0);
    };
    if rows * din * dout >= PAR_THRESHOLD {
        dw.par_chunks_mut(ROW_BLOCK * dout).enumerate().for_each(kernel);
    } else {
        dw.chunks_mut(ROW_BLOCK * dout).enumerate().for_each(kernel);
    }
}

/// `delta · Wᵀ`.
fn propagate_to_input(w: &[f64], delta: &[f64], rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * din];
    if din == 0 || dout == 0 || rows == 0 {
        return out;
    }
    let kernel = |(o, dr): (&mut [f64], &[f64])| {
        let n = o.len() / din;
        gemm(n, dout, din, dr, (dout, 1), w, (1, dout), o, (din, 1), 0.0);
    };
    if rows * din * dout >= PAR_THRESHOLD {
        out.par_chunks_mut(ROW_BLOCK * din)
            .zip(delta.par_chunks(ROW_BLOCK * dout))
            .for_each(kernel);
    } else {
        kernel((&mut out, delta));
    }
    out
}

/// `c ← a·b + beta·c` for an `m×k` matrix `a` and a `k×n` matrix `b`, each
/// given with `(row, column)` strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, c: usize, rs: usize, cs: usize| (r - 1) * rs + (c - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len(), "gemm: lhs out of bounds");
    assert!(k == 0 || last(k, n, rsb, csb) < b.len(), "gemm: rhs out of bounds");
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: output out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
