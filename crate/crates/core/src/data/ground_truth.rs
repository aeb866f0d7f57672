//! Ground-truth disparity maps, read for evaluation only.
//!
//! Occlusion masks live in a companion raster next to the disparity file
//! (`<stem>.occ.pgm` or `<stem>.occ.png`): 255 visible, 128 occluded,
//! anything else unknown.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{decode_gray, pfm, read_file, RawGray};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtFormat {
    /// 16-bit PNG holding `disparity * 256`, 0 for unknown.
    Uint16PngX256,
    /// Float map, non-finite for unknown.
    Pfm,
}

impl fmt::Display for GtFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GtFormat::Uint16PngX256 => "png16",
            GtFormat::Pfm => "pfm",
        })
    }
}

impl FromStr for GtFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png16" | "uint16_png_x256" | "png" => Ok(GtFormat::Uint16PngX256),
            "pfm" => Ok(GtFormat::Pfm),
            other => Err(Error::Config(format!("unknown ground-truth format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occlusion {
    Visible,
    Occluded,
    Unknown,
}

impl Occlusion {
    pub fn from_mask_value(v: u16, max_value: u16) -> Self {
        let scaled = (v as u32 * 255 + max_value as u32 / 2) / max_value as u32;
        match scaled {
            255 => Occlusion::Visible,
            128 => Occlusion::Occluded,
            _ => Occlusion::Unknown,
        }
    }

    pub fn mask_value(self) -> u8 {
        match self {
            Occlusion::Visible => 255,
            Occlusion::Occluded => 128,
            Occlusion::Unknown => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthDisparity {
    pub width: usize,
    pub height: usize,
    /// Disparity in pixels; meaningless where `known` is false.
    pub values: Vec<f32>,
    pub known: Vec<bool>,
    pub occlusion: Vec<Occlusion>,
}

impl GroundTruthDisparity {
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Known disparity at a pixel that is not marked occluded.
    pub fn evaluable(&self, row: usize, col: usize) -> Option<f32> {
        let k = self.idx(row, col);
        (self.known[k] && self.occlusion[k] != Occlusion::Occluded).then_some(self.values[k])
    }

    pub fn from_uint16(raw: &RawGray) -> Self {
        let values = raw.samples.iter().map(|&s| s as f32 / 256.0).collect();
        let known = raw.samples.iter().map(|&s| s != 0).collect();
        Self {
            width: raw.width,
            height: raw.height,
            values,
            known,
            occlusion: vec![Occlusion::Unknown; raw.width * raw.height],
        }
    }

    pub fn from_float_map(map: &pfm::FloatMap) -> Self {
        Self {
            width: map.width,
            height: map.height,
            known: map.values.iter().map(|v| v.is_finite()).collect(),
            values: map.values.clone(),
            occlusion: vec![Occlusion::Unknown; map.width * map.height],
        }
    }

    pub fn to_uint16(&self) -> Vec<u16> {
        self.values
            .iter()
            .zip(&self.known)
            .map(|(&v, &k)| if k { (v * 256.0).round().clamp(1.0, 65535.0) as u16 } else { 0 })
            .collect()
    }

    pub fn occlusion_mask(&self) -> RawGray {
        RawGray {
            width: self.width,
            height: self.height,
            max_value: 255,
            samples: self.occlusion.iter().map(|o| o.mask_value() as u16).collect(),
        }
    }
}

pub fn decode_ground_truth(bytes: &[u8], format: GtFormat) -> Result<GroundTruthDisparity> {
    match format {
        GtFormat::Uint16PngX256 => {
            let raw = decode_gray(bytes)?;
            if raw.max_value != 65535 {
                return Err(Error::format(0, "disparity PNG must be 16-bit"));
            }
            Ok(GroundTruthDisparity::from_uint16(&raw))
        }
        GtFormat::Pfm => pfm::decode(bytes).map(|m| GroundTruthDisparity::from_float_map(&m)),
    }
}

pub fn companion_mask_paths(gt_path: &Path) -> [PathBuf; 2] {
    let stem = gt_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = gt_path.parent().unwrap_or(Path::new(""));
    [dir.join(format!("{stem}.occ.pgm")), dir.join(format!("{stem}.occ.png"))]
}

pub fn load_ground_truth(path: &Path, format: GtFormat) -> Result<GroundTruthDisparity> {
    let bytes = read_file(path)?;
    let mut gt = decode_ground_truth(&bytes, format).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    if let Some(mask_path) = companion_mask_paths(path).into_iter().find(|p| p.exists()) {
        let mask = decode_gray(&read_file(&mask_path)?)?;
        if (mask.width, mask.height) != (gt.width, gt.height) {
            return Err(Error::Rectification(format!(
                "occlusion mask {} does not match disparity size",
                mask_path.display()
            )));
        }
        gt.occlusion = mask
            .samples
            .iter()
            .map(|&v| Occlusion::from_mask_value(v, mask.max_value))
            .collect();
    }
    Ok(gt)
}
