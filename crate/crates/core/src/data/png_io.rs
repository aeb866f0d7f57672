use std::io::Cursor;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

use super::RawGray;

/// Largest decoded frame accepted, in bytes. Headers are checked against it
/// before the frame buffer is allocated.
pub const MAX_FRAME_BYTES: usize = 256 << 20;

fn png_error(e: png::DecodingError) -> Error {
    Error::format(0, format!("png: {e}"))
}

/// Decodes any PNG to gray samples. Color is reduced with ITU-R 601 luma
/// and alpha is dropped. 16-bit images keep their full range.
pub fn decode(bytes: &[u8]) -> Result<RawGray> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let size = reader
        .output_buffer_size()
        .filter(|&n| n <= MAX_FRAME_BYTES)
        .ok_or_else(|| Error::format(0, "png: image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::format(0, "png: unexpanded palette")),
    };
    let wide = info.bit_depth == BitDepth::Sixteen;
    let max_value: u16 = if wide { 65535 } else { 255 };
    let bps = if wide { 2 } else { 1 };
    let sample = |k: usize| -> u16 {
        if wide {
            u16::from_be_bytes([buf[2 * k], buf[2 * k + 1]])
        } else {
            buf[k] as u16
        }
    };
    let pixels = width * height;
    if buf.len() < pixels * channels * bps {
        return Err(Error::format(0, "png: short frame"));
    }
    let samples = (0..pixels)
        .map(|p| {
            let base = p * channels;
            if channels >= 3 {
                let (r, g, b) = (sample(base) as f64, sample(base + 1) as f64, sample(base + 2) as f64);
                (0.299 * r + 0.587 * g + 0.114 * b).round().min(max_value as f64) as u16
            } else {
                sample(base)
            }
        })
        .collect();
    Ok(RawGray {
        width,
        height,
        max_value,
        samples,
    })
}

/// 16-bit grayscale PNG.
pub fn encode_gray16(width: usize, height: usize, samples: &[u16]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(ColorType::Grayscale);
        enc.set_depth(BitDepth::Sixteen);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::format(0, format!("png encode: {e}")))?;
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::format(0, format!("png encode: {e}")))?;
    }
    Ok(out)
}
