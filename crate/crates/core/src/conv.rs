//! 3×3 valid cross-correlation layers with explicit backward passes.
//!
//! Forward and backward both lower to a single matrix product over an
//! im2col buffer, so a whole image costs three GEMMs per layer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `[out_features, in_features, 3, 3]`
    pub weights: Tensor,
    /// `[out_features]`
    pub bias: Tensor,
    pub activation: Activation,
}

/// What a forward call has to remember for its backward call.
#[derive(Clone, Debug)]
pub struct ConvTrace {
    input: Tensor,
    output: Tensor,
}

impl ConvTrace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

/// Per-layer parameter gradients, kept apart from the layer so that
/// independent passes can accumulate into private buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvGrads {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f32) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.bias.iter_mut().for_each(|b| *b *= factor);
    }
}

impl ConvLayer {
    pub fn zeros(in_features: usize, out_features: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(&[out_features, in_features, KERNEL, KERNEL]),
            bias: Tensor::zeros(&[out_features]),
            activation,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        in_features: usize,
        out_features: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_features, out_features, activation);
        let bound = 1.0 / ((in_features * TAPS) as f32).sqrt();
        for w in layer.weights.values_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let shape = weights.shape();
        if shape.len() != 4 || shape[2] != KERNEL || shape[3] != KERNEL {
            return Err(Error::shape("[out, in, 3, 3]", format!("{shape:?}")));
        }
        bias.expect_shape(&[shape[0]])?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let shape = input.shape();
        if shape.len() != 3 || shape[0] != self.in_features() || shape[1] < KERNEL || shape[2] < KERNEL {
            return Err(Error::shape(
                format!("[{}, H>=3, W>=3]", self.in_features()),
                format!("{shape:?}"),
            ));
        }
        Ok((shape[0], shape[1], shape[2]))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_traced(input).map(|t| t.output)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<ConvTrace> {
        let (c, h, w) = self.check_input(input)?;
        let (oh, ow) = (h - 2, w - 2);
        let p = oh * ow;
        let k = c * TAPS;
        let m = self.out_features();

        let mut out = vec![0.0f32; m * p];
        for (row, b) in out.chunks_exact_mut(p).zip(self.bias.values()) {
            row.iter_mut().for_each(|x| *x = *b);
        }
        let mut col = Vec::new();
        for (y0, rows) in strips(k, oh, ow) {
            let n = rows * ow;
            im2col(input.values(), c, h, w, y0, rows, &mut col);
            // out[m, strip] += W[m,k] * col[k, strip]
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    self.weights.values().as_ptr(),
                    k as isize,
                    1,
                    col.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    out.as_mut_ptr().add(y0 * ow),
                    p as isize,
                    1,
                );
            }
        }
        if self.activation == Activation::Relu {
            out.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        Ok(ConvTrace {
            input: input.clone(),
            output: Tensor::from_vec(&[m, oh, ow], out)?,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the traced input.
    pub fn backward(&self, trace: &ConvTrace, grad_out: &Tensor, grads: &mut ConvGrads) -> Result<Tensor> {
        grad_out.expect_shape(trace.output.shape())?;
        let (c, h, w) = self.check_input(&trace.input)?;
        let (oh, ow) = (h - 2, w - 2);
        let p = oh * ow;
        let k = c * TAPS;
        let m = self.out_features();

        let mut gy = grad_out.values().to_vec();
        if self.activation == Activation::Relu {
            for (g, y) in gy.iter_mut().zip(trace.output.values()) {
                if *y <= 0.0 {
                    *g = 0.0;
                }
            }
        }

        for (gb, row) in grads.bias.iter_mut().zip(gy.chunks_exact(p)) {
            *gb += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
        }

        let mut grad_in = vec![0.0f32; c * h * w];
        let mut col = Vec::new();
        let mut dcol = Vec::new();
        for (y0, rows) in strips(k, oh, ow) {
            let n = rows * ow;
            im2col(trace.input.values(), c, h, w, y0, rows, &mut col);
            let gy_strip = gy[y0 * ow..].as_ptr();
            // dW[m,k] += gy[m, strip] * col^T[strip, k]
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    n,
                    k,
                    1.0,
                    gy_strip,
                    p as isize,
                    1,
                    col.as_ptr(),
                    1,
                    n as isize,
                    1.0,
                    grads.weights.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            // dcol[k, strip] = W^T[k,m] * gy[m, strip]
            dcol.clear();
            dcol.resize(k * n, 0.0);
            unsafe {
                matrixmultiply::sgemm(
                    k,
                    m,
                    n,
                    1.0,
                    self.weights.values().as_ptr(),
                    1,
                    k as isize,
                    gy_strip,
                    p as isize,
                    1,
                    0.0,
                    dcol.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            col2im(&dcol, c, h, w, y0, rows, &mut grad_in);
        }
        Tensor::from_vec(&[c, h, w], grad_in)
    }
}

/// Output-row strips `(first_row, rows)` sized so one im2col strip stays
/// around a megafloat.
fn strips(k: usize, oh: usize, ow: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = ((1 << 20) / (k * ow).max(1)).clamp(1, oh.max(1));
    (0..oh).step_by(step).map(move |y0| (y0, step.min(oh - y0)))
}

/// Convenience wrapper matching the free-function form of the layer primitive.
pub fn conv2d_valid(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    layer.forward(input)
}

/// Unfolds output rows `y0..y0 + rows` into `col[k, rows * ow]`.
fn im2col(input: &[f32], c: usize, h: usize, w: usize, y0: usize, rows: usize, col: &mut Vec<f32>) {
    let ow = w - 2;
    let n = rows * ow;
    col.clear();
    col.resize(c * TAPS * n, 0.0);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dst = &mut col[((ch * TAPS) + ky * KERNEL + kx) * n..][..n];
                for y in 0..rows {
                    let src = &plane[(y0 + y + ky) * w + kx..][..ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adds a `[k, rows * ow]` column strip back into the `[c, h, w]` image.
fn col2im(col: &[f32], c: usize, h: usize, w: usize, y0: usize, rows: usize, out: &mut [f32]) {
    let ow = w - 2;
    let n = rows * ow;
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let src = &col[((ch * TAPS) + ky * KERNEL + kx) * n..][..n];
                for y in 0..rows {
                    let dst = &mut plane[(y0 + y + ky) * w + kx..][..ow];
                    for (d, s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}
