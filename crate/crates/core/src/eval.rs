//! Winner-take-all disparity and its bad-pixel rate, plus similarity
//! matrix rendering.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use crate::data::{pgm, write_file, GroundTruthDisparity, RawGray};
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_THRESHOLD: f32 = 3.0;

/// Band argmax per reference row, as disparity `i - j`. Lowest `j` wins
/// ties; rows without VALID entries get `None`.
pub fn wta_disparity(s: &SimilarityMatrix) -> Vec<Option<usize>> {
    (0..s.dim()).map(|i| s.row_argmax(i).map(|(j, _)| i - j)).collect()
}

/// Predicted disparities in image coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    /// `None` where the pixel has no descriptor.
    pub values: Vec<Option<f32>>,
    /// Image columns that carry a descriptor; a pixel whose true match
    /// falls outside this range cannot be matched.
    pub descriptor_cols: Range<usize>,
}

impl DisparityMap {
    pub fn empty(width: usize, height: usize, half_patch: usize) -> Self {
        Self {
            width,
            height,
            values: vec![None; width * height],
            descriptor_cols: half_patch..width.saturating_sub(half_patch),
        }
    }

    /// Stores the WTA result of one line; descriptor `k` lands on column
    /// `k + half_patch`.
    pub fn set_line(&mut self, row: usize, line: &[Option<usize>]) {
        let base = self.descriptor_cols.start;
        for (k, d) in line.iter().enumerate() {
            if base + k < self.width {
                self.values[row * self.width + base + k] = d.map(|d| d as f32);
            }
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        self.values[row * self.width + col]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineStats {
    pub row: usize,
    pub errors: usize,
    pub evaluated: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WtaReport {
    /// `None` when nothing was evaluable.
    pub error_rate: Option<f64>,
    pub errors: usize,
    pub evaluated_pixels: usize,
    /// Known, non-occluded pixels skipped because they or their match lack
    /// a descriptor.
    pub border_excluded: usize,
    pub per_line: Vec<LineStats>,
}

impl WtaReport {
    pub fn merge(&mut self, other: &WtaReport) {
        self.errors += other.errors;
        self.evaluated_pixels += other.evaluated_pixels;
        self.border_excluded += other.border_excluded;
        self.per_line.extend(other.per_line.iter().cloned());
        self.error_rate = rate(self.errors, self.evaluated_pixels);
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let rate = self.error_rate.map_or("undefined".to_string(), |r| format!("{r:.4}"));
        format!(
            "wta_error={rate}\nerrors={}\nevaluated_pixels={}\nborder_excluded={}\n",
            self.errors, self.evaluated_pixels, self.border_excluded
        )
    }
}

impl fmt::Display for WtaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>12}", "metric", "value")?;
        writeln!(f, "{:<18} {:>12}", "------", "-----")?;
        match self.error_rate {
            Some(r) => writeln!(f, "{:<18} {:>11.2}%", "WTA error", 100.0 * r)?,
            None => writeln!(f, "{:<18} {:>12}", "WTA error", "undefined")?,
        }
        writeln!(f, "{:<18} {:>12}", "bad pixels", self.errors)?;
        writeln!(f, "{:<18} {:>12}", "evaluated pixels", self.evaluated_pixels)?;
        writeln!(f, "{:<18} {:>12}", "border excluded", self.border_excluded)
    }
}

fn rate(errors: usize, evaluated: usize) -> Option<f64> {
    (evaluated > 0).then(|| errors as f64 / evaluated as f64)
}

/// Counts pixels whose prediction is off by strictly more than `threshold`
/// among known, non-occluded pixels that have a descriptor and whose
/// true match has one too.
pub fn wta_error_rate(pred: &DisparityMap, gt: &GroundTruthDisparity, threshold: f32) -> Result<WtaReport> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::shape(
            format!("{}x{} ground truth", pred.width, pred.height),
            format!("{}x{}", gt.width, gt.height),
        ));
    }
    let mut report = WtaReport::default();
    for row in 0..pred.height {
        let mut line = LineStats {
            row,
            ..LineStats::default()
        };
        let mut has_prediction = false;
        for col in 0..pred.width {
            let p = pred.get(row, col);
            has_prediction |= p.is_some();
            let Some(truth) = gt.evaluable(row, col) else {
                continue;
            };
            let match_col = col as f32 - truth;
            let matchable = match_col >= pred.descriptor_cols.start as f32 && match_col < pred.descriptor_cols.end as f32;
            match p {
                Some(d) if matchable => {
                    line.evaluated += 1;
                    if (d - truth).abs() > threshold {
                        line.errors += 1;
                    }
                }
                _ => report.border_excluded += 1,
            }
        }
        if has_prediction {
            report.errors += line.errors;
            report.evaluated_pixels += line.evaluated;
            report.per_line.push(line);
        }
    }
    report.error_rate = rate(report.errors, report.evaluated_pixels);
    Ok(report)
}

/// Dark = similar: VALID `[min, max]` maps to `[255, 0]`, BANNED is 255.
/// A constant matrix renders its VALID cells at 0.
pub fn render_similarity(s: &SimilarityMatrix) -> RawGray {
    let (lo, hi) = s.valid_range().unwrap_or((0.0, 0.0));
    let span = hi - lo;
    let n = s.dim();
    let mut samples = vec![255u16; n * n];
    for i in 0..n {
        for j in s.band_cols(i) {
            if let Some(v) = s.get(i, j) {
                samples[i * n + j] = if span > 0.0 {
                    (255.0 * (hi - v) / span).round() as u16
                } else {
                    0
                };
            }
        }
    }
    RawGray {
        width: n,
        height: n,
        max_value: 255,
        samples,
    }
}

pub fn dump_similarity_image(s: &SimilarityMatrix, out_path: &Path) -> Result<()> {
    write_file(out_path, &pgm::encode(&render_similarity(s)))
}
