//! Portable float map. Only single-channel (`Pf`) maps are decoded for
//! disparity; three-channel (`PF`) maps keep their first channel.
//! Rows are stored bottom-to-top; a negative scale means little-endian.

use crate::error::{Error, Result};

use super::pgm::{payload_len, HeaderReader};

#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    /// Top-to-bottom, row-major.
    pub values: Vec<f32>,
}

pub fn decode(bytes: &[u8]) -> Result<FloatMap> {
    let mut r = HeaderReader::new(bytes);
    let channels = match r.token()? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(0, format!("not a float map (magic `{other}`)"))),
    };
    let width: usize = r.number("width")?;
    let height: usize = r.number("height")?;
    let scale_at = r.pos;
    let scale: f64 = r.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(scale_at, "scale must be finite and non-zero"));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(scale_at, "empty map"));
    }
    r.end_of_header()?;
    let little = scale < 0.0;
    let need = payload_len(width, height, 4 * channels, r.pos)?;
    let data = &bytes[r.pos..];
    if data.len() < need {
        return Err(Error::format(
            bytes.len(),
            format!("truncated float data: need {need} bytes, have {}", data.len()),
        ));
    }
    let mut values = vec![0.0f32; width * height];
    for (k, chunk) in data[..need].chunks_exact(4 * channels).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (k / width, k % width);
        values[(height - 1 - file_row) * width + col] = v;
    }
    Ok(FloatMap { width, height, values })
}

/// Little-endian single-channel map.
pub fn encode(map: &FloatMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    for row in map.values.chunks_exact(map.width).rev() {
        for v in row {
            out.extend(v.to_le_bytes());
        }
    }
    out
}
