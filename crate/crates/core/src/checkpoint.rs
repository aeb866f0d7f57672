//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "SSDMCKPT"
//! version  u32      1
//! layers   u32
//! features u32
//! patch    u32
//! then per layer: weights [out, in, 3, 3] as f32, bias [out] as f32
//! ```

use std::path::Path;

use crate::conv::{Activation, ConvLayer, KERNEL};
use crate::data::{read_file, write_file};
use crate::embedding::{depth_for_patch, EmbeddingNetwork};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SSDMCKPT";
pub const VERSION: u32 = 1;
const MAX_FEATURES: usize = 4096;

pub fn encode(net: &EmbeddingNetwork) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for v in [VERSION, net.layers().len() as u32, net.feature_dim() as u32, net.patch_size() as u32] {
        out.extend(v.to_le_bytes());
    }
    for layer in net.layers() {
        for v in layer.weights.values().iter().chain(layer.bias.values()) {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.pos, format!("truncated checkpoint: need {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.pos, "parameter count overflow"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingNetwork> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
    }
    let layers = r.u32()? as usize;
    let features = r.u32()? as usize;
    let patch = r.u32()? as usize;
    let depth = depth_for_patch(patch).map_err(|e| Error::format(20, e.to_string()))?;
    if layers != depth {
        return Err(Error::format(
            12,
            format!("{layers} layers do not match patch size {patch}"),
        ));
    }
    if features == 0 || features > MAX_FEATURES {
        return Err(Error::format(16, format!("feature count {features} out of range")));
    }
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let input = if l == 0 { 1 } else { features };
        let weights = r.floats(features * input * KERNEL * KERNEL)?;
        let bias = r.floats(features)?;
        let act = if l + 1 == layers {
            Activation::None
        } else {
            Activation::Relu
        };
        out.push(ConvLayer::from_parts(
            Tensor::from_vec(&[features, input, KERNEL, KERNEL], weights)?,
            Tensor::from_vec(&[features], bias)?,
            act,
        )?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos, "trailing bytes after checkpoint"));
    }
    EmbeddingNetwork::from_layers(patch, out)
}

pub fn save(net: &EmbeddingNetwork, path: &Path) -> Result<()> {
    write_file(path, &encode(net))
}

pub fn load(path: &Path) -> Result<EmbeddingNetwork> {
    decode(&read_file(path)?).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
