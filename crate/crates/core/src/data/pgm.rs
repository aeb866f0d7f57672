//! Binary portable graymap (`P5`), 8 or 16 bits per sample.

use crate::error::{Error, Result};

use super::RawGray;

/// Byte cursor over a netpbm-style header.
pub(super) struct HeaderReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> HeaderReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next whitespace-delimited token.
    pub fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, "unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::format(start, "non-ASCII header token"))
    }

    pub fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let at = self.pos;
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::format(at, format!("invalid {what} `{tok}`")))
    }

    /// Consumes the single whitespace byte that ends a header.
    pub fn end_of_header(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::format(self.pos, "missing whitespace after header")),
        }
    }
}

/// Checked `width * height * bytes_per_sample`.
pub(super) fn payload_len(width: usize, height: usize, bytes_per_sample: usize, at: usize) -> Result<usize> {
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bytes_per_sample))
        .ok_or_else(|| Error::format(at, "image dimensions overflow"))
}

pub fn decode(bytes: &[u8]) -> Result<RawGray> {
    let mut r = HeaderReader::new(bytes);
    if r.token()? != "P5" {
        return Err(Error::format(0, "not a binary graymap (expected `P5`)"));
    }
    let width: usize = r.number("width")?;
    let height: usize = r.number("height")?;
    let max_at = r.pos;
    let max_value: u32 = r.number("maxval")?;
    if max_value == 0 || max_value > 65535 {
        return Err(Error::format(max_at, format!("maxval {max_value} out of range")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(max_at, "empty image"));
    }
    r.end_of_header()?;
    let bps = if max_value < 256 { 1 } else { 2 };
    let need = payload_len(width, height, bps, r.pos)?;
    let data = &bytes[r.pos..];
    if data.len() < need {
        return Err(Error::format(
            bytes.len(),
            format!("truncated pixel data: need {need} bytes, have {}", data.len()),
        ));
    }
    let samples: Vec<u16> = if bps == 1 {
        data[..need].iter().map(|&b| b as u16).collect()
    } else {
        data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(pos) = samples.iter().position(|&s| s as u32 > max_value) {
        return Err(Error::format(r.pos + pos * bps, "sample exceeds maxval"));
    }
    Ok(RawGray {
        width,
        height,
        max_value: max_value as u16,
        samples,
    })
}

pub fn encode(img: &RawGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.max_value).into_bytes();
    if img.max_value < 256 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        out.extend(img.samples.iter().flat_map(|s| s.to_be_bytes()));
    }
    out
}
