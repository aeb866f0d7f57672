//! Stereo pairs, line triplets and ground truth.
//!
//! Ground truth is only ever returned as [`GroundTruthDisparity`], which no
//! loss accepts.

pub mod ground_truth;
pub mod manifest;
pub mod pfm;
pub mod pgm;
pub mod png_io;
pub mod sampling;

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use ground_truth::{load_ground_truth, GroundTruthDisparity, GtFormat, Occlusion};
pub use manifest::{Manifest, ManifestEntry};
pub use sampling::{sample_line_triplets, sample_rows, LineTriplet, RowSampling, TripletRows};

/// Integer gray samples as stored in a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawGray {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(
                format!("{}x{} pixels", width, height),
                format!("{} pixels", pixels.len()),
            ));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// `[1, H, W]` tensor of the pixels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, self.height, self.width], self.pixels.clone()).expect("consistent dims")
    }

    /// `[1, 2 * half + 1, W]` band centered on `center_row`.
    pub fn band(&self, center_row: usize, half: usize) -> Result<Tensor> {
        if center_row < half || center_row + half >= self.height {
            return Err(Error::Sampling(format!(
                "band around row {center_row} leaves the {}-row image",
                self.height
            )));
        }
        let rows = 2 * half + 1;
        let start = (center_row - half) * self.width;
        Tensor::from_vec(&[1, rows, self.width], self.pixels[start..start + rows * self.width].to_vec())
    }

    /// 8-bit quantization for storage.
    pub fn to_raw8(&self) -> RawGray {
        RawGray {
            width: self.width,
            height: self.height,
            max_value: 255,
            samples: self
                .pixels
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u16)
                .collect(),
        }
    }
}

impl From<&RawGray> for GrayImage {
    fn from(raw: &RawGray) -> Self {
        let scale = 1.0 / raw.max_value as f32;
        GrayImage {
            width: raw.width,
            height: raw.height,
            pixels: raw.samples.iter().map(|&s| s as f32 * scale).collect(),
        }
    }
}

/// Decodes PGM or PNG, chosen by magic bytes.
pub fn decode_gray(bytes: &[u8]) -> Result<RawGray> {
    if bytes.starts_with(b"\x89PNG") {
        png_io::decode(bytes)
    } else if bytes.starts_with(b"P5") {
        pgm::decode(bytes)
    } else {
        Err(Error::format(0, "unrecognized raster format (expected PGM or PNG)"))
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

pub fn load_raw_gray(path: &Path) -> Result<RawGray> {
    decode_gray(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn load_gray_image(path: &Path) -> Result<GrayImage> {
    load_raw_gray(path).map(|raw| GrayImage::from(&raw))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StereoPair {
    pub id: String,
    pub left: GrayImage,
    pub right: GrayImage,
    pub d_max: usize,
}

impl StereoPair {
    pub fn new(id: impl Into<String>, left: GrayImage, right: GrayImage, d_max: usize) -> Result<Self> {
        if (left.width, left.height) != (right.width, right.height) {
            return Err(Error::Rectification(format!(
                "left is {}x{}, right is {}x{}",
                left.width, left.height, right.width, right.height
            )));
        }
        if d_max >= left.width {
            return Err(Error::Config(format!("d_max {d_max} >= image width {}", left.width)));
        }
        Ok(Self {
            id: id.into(),
            left,
            right,
            d_max,
        })
    }

    pub fn width(&self) -> usize {
        self.left.width
    }

    pub fn height(&self) -> usize {
        self.left.height
    }
}

pub fn load_stereo_pair(left_path: &Path, right_path: &Path, d_max: usize) -> Result<StereoPair> {
    let left = load_gray_image(left_path)?;
    let right = load_gray_image(right_path)?;
    let id = left_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    StereoPair::new(id, left, right, d_max)
}
