//! Siamese embedding tower: a stack of 3×3 conv layers mapping an image
//! band to one unit-length descriptor per interior pixel.
//!
//! Descriptor `k` of a band belongs to the `s×s` patch whose left edge is
//! column `k`, i.e. the patch centered on image column `k + (s - 1) / 2`.
//! Because the tower is fully convolutional, a whole image can be embedded
//! in one pass and every row of the result equals the corresponding band
//! embedding.

use rand::Rng;

use crate::conv::{Activation, ConvGrads, ConvLayer, ConvTrace};
use crate::error::{Error, Result};
use crate::norm::{l2_normalize_backward, l2_normalize_in_place};
use crate::tensor::Tensor;

pub const FEATURES: usize = 64;
pub const STANDARDIZE_SIGMA_GUARD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingNetwork {
    layers: Vec<ConvLayer>,
    patch_size: usize,
}

pub type NetworkGrads = Vec<ConvGrads>;

/// A borrowed run of `count` descriptors of width `dim`.
#[derive(Clone, Copy, Debug)]
pub struct LineRef<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> LineRef<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::shape(format!("multiple of {dim} values"), format!("{}", data.len())));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self, k: usize) -> &'a [f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Descriptors of one image line, `[count, dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorLine {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl DescriptorLine {
    pub fn from_descriptors(descriptors: &[Vec<f32>]) -> Result<Self> {
        let dim = descriptors.first().map_or(0, Vec::len);
        if descriptors.iter().any(|d| d.len() != dim) {
            return Err(Error::shape(format!("descriptors of width {dim}"), "ragged descriptors"));
        }
        Ok(Self {
            dim,
            data: descriptors.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn descriptor(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn view(&self) -> LineRef<'_> {
        LineRef {
            data: &self.data,
            dim: self.dim,
        }
    }
}

/// Descriptors for every center row of an image, `[rows, cols, dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorImage {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl DescriptorImage {
    pub fn line(&self, row: usize) -> LineRef<'_> {
        let stride = self.cols * self.dim;
        LineRef {
            data: &self.data[row * stride..(row + 1) * stride],
            dim: self.dim,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..*self
        }
    }

    pub fn line_mut(&mut self, row: usize) -> &mut [f32] {
        let stride = self.cols * self.dim;
        &mut self.data[row * stride..(row + 1) * stride]
    }
}

/// Recorded forward pass of one embedding call.
#[derive(Debug, Default)]
pub struct EmbeddingTape {
    traces: Vec<ConvTrace>,
    norms: Vec<f64>,
    output: Option<DescriptorImage>,
}

impl EmbeddingNetwork {
    /// `(patch_size - 1) / 2` layers of `features` channels, ReLU between
    /// layers and no activation on the last one.
    pub fn random<R: Rng + ?Sized>(patch_size: usize, features: usize, rng: &mut R) -> Result<Self> {
        let depth = depth_for_patch(patch_size)?;
        let layers = (0..depth)
            .map(|l| {
                let input = if l == 0 { 1 } else { features };
                let act = if l + 1 == depth {
                    Activation::None
                } else {
                    Activation::Relu
                };
                ConvLayer::random(input, features, act, rng)
            })
            .collect();
        Ok(Self { layers, patch_size })
    }

    pub fn from_layers(patch_size: usize, layers: Vec<ConvLayer>) -> Result<Self> {
        let depth = depth_for_patch(patch_size)?;
        if layers.len() != depth {
            return Err(Error::shape(format!("{depth} layers"), format!("{} layers", layers.len())));
        }
        let mut input = 1;
        for (l, layer) in layers.iter().enumerate() {
            if layer.in_features() != input {
                return Err(Error::shape(
                    format!("layer {l} with {input} input features"),
                    format!("{}", layer.in_features()),
                ));
            }
            let want = if l + 1 == depth {
                Activation::None
            } else {
                Activation::Relu
            };
            if layer.activation != want {
                return Err(Error::Config(format!("layer {l} must use {want:?}")));
            }
            input = layer.out_features();
        }
        Ok(Self { layers, patch_size })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn half_patch(&self) -> usize {
        (self.patch_size - 1) / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, ConvLayer::out_features)
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(l, layer)| {
                [
                    (format!("layer{l}.weights"), &mut layer.weights),
                    (format!("layer{l}.bias"), &mut layer.bias),
                ]
            })
            .collect()
    }

    pub fn zero_grads(&self) -> NetworkGrads {
        self.layers.iter().map(ConvGrads::zeros_like).collect()
    }

    /// Moves `grads` into the parameters' gradient buffers (after zeroing them).
    pub fn load_grads(&mut self, grads: &NetworkGrads) -> Result<()> {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights.zero_grad();
            layer.bias.zero_grad();
            layer.weights.accumulate_grad(&g.weights)?;
            layer.bias.accumulate_grad(&g.bias)?;
        }
        Ok(())
    }

    /// Embeds a `[1, patch_size, W]` band into `W - patch_size + 1` descriptors.
    pub fn embed_line(&self, band: &Tensor) -> Result<DescriptorLine> {
        let shape = band.shape();
        if shape.len() != 3 || shape[0] != 1 || shape[1] != self.patch_size || shape[2] < self.patch_size {
            return Err(Error::shape(
                format!("[1, {}, W>={}]", self.patch_size, self.patch_size),
                format!("{shape:?}"),
            ));
        }
        let image = self.embed_image(band)?;
        Ok(DescriptorLine {
            dim: image.dim,
            data: image.data,
        })
    }

    /// Embeds a whole `[1, H, W]` image: row `r` of the result is the
    /// embedding of the band centered on image row `r + (patch_size - 1) / 2`.
    pub fn embed_image(&self, image: &Tensor) -> Result<DescriptorImage> {
        let mut tape = EmbeddingTape::default();
        tape.forward(self, image)?;
        Ok(tape.output.take().expect("forward sets output"))
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != 1 || shape[1] < self.patch_size || shape[2] < self.patch_size {
            return Err(Error::shape(
                format!("[1, H>={p}, W>={p}]", p = self.patch_size),
                format!("{shape:?}"),
            ));
        }
        Ok(())
    }
}

impl EmbeddingTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(&self) -> Option<&DescriptorImage> {
        self.output.as_ref()
    }

    pub fn forward(&mut self, net: &EmbeddingNetwork, image: &Tensor) -> Result<&DescriptorImage> {
        net.check_image(image)?;
        self.traces.clear();
        let mut x = image.clone();
        for layer in &net.layers {
            let trace = layer.forward_traced(&x)?;
            x = trace.output().clone();
            self.traces.push(trace);
        }
        // [dim, rows, cols] -> [rows, cols, dim], then normalize each descriptor
        let (dim, rows, cols) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let plane = rows * cols;
        let mut data = vec![0.0f32; x.len()];
        for (c, channel) in x.values().chunks_exact(plane).enumerate() {
            for (p, v) in channel.iter().enumerate() {
                data[p * dim + c] = *v;
            }
        }
        self.norms = data.chunks_exact_mut(dim).map(l2_normalize_in_place).collect();
        self.output = Some(DescriptorImage { rows, cols, dim, data });
        Ok(self.output.as_ref().unwrap())
    }

    /// Back-propagates a gradient on the normalized descriptors into
    /// `grads`. Fails if no forward pass has been recorded.
    pub fn backward(&self, net: &EmbeddingNetwork, grad_out: &DescriptorImage, grads: &mut NetworkGrads) -> Result<()> {
        let out = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("backward called before any forward pass".into()))?;
        if self.traces.len() != net.layers.len() || grads.len() != net.layers.len() {
            return Err(Error::State("tape does not belong to this network".into()));
        }
        if (grad_out.rows, grad_out.cols, grad_out.dim) != (out.rows, out.cols, out.dim) {
            return Err(Error::shape(
                format!("[{}, {}, {}]", out.rows, out.cols, out.dim),
                format!("[{}, {}, {}]", grad_out.rows, grad_out.cols, grad_out.dim),
            ));
        }
        let (dim, plane) = (out.dim, out.rows * out.cols);
        let mut g = vec![0.0f32; dim * plane];
        for (p, ((y, go), norm)) in out
            .data
            .chunks_exact(dim)
            .zip(grad_out.data.chunks_exact(dim))
            .zip(&self.norms)
            .enumerate()
        {
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            let dx = l2_normalize_backward(y, *norm, go);
            for (c, v) in dx.into_iter().enumerate() {
                g[c * plane + p] = v;
            }
        }
        let mut grad = Tensor::from_vec(&[dim, out.rows, out.cols], g)?;
        for ((layer, trace), lg) in net.layers.iter().zip(&self.traces).zip(grads.iter_mut()).rev() {
            grad = layer.backward(trace, &grad, lg)?;
        }
        Ok(())
    }
}

pub fn depth_for_patch(patch_size: usize) -> Result<usize> {
    if patch_size < 3 || patch_size.is_multiple_of(2) {
        return Err(Error::Config(format!("patch size must be odd and >= 3, got {patch_size}")));
    }
    Ok((patch_size - 1) / 2)
}

/// Zero mean, unit variance; the standard deviation is floored at
/// [`STANDARDIZE_SIGMA_GUARD`].
pub fn standardize(values: &[f32]) -> Vec<f32> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt().max(STANDARDIZE_SIGMA_GUARD);
    values.iter().map(|&v| ((v as f64 - mean) / sigma) as f32).collect()
}
