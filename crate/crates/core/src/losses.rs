//! Semi-supervised hinge objectives on similarity matrices.
//!
//! None of these see ground truth. Each returns a scalar together with its
//! subgradient with respect to the matrix entries; a hinge sitting exactly
//! at its kink counts as inactive.

use std::fmt;
use std::str::FromStr;

use crate::dp::MatchPath;
use crate::error::{Error, Result};
use crate::similarity::{
    mask_col_maxima, mask_row_maxima, suppress_path_neighborhood, SimilarityGrad, SimilarityMatrix, ValidityRanges,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Mil,
    Contrastive,
    MilContrastive,
    ContrastiveDp,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Mil,
        Method::Contrastive,
        Method::MilContrastive,
        Method::ContrastiveDp,
    ];

    /// Whether the method needs the negative line.
    pub fn uses_negatives(self) -> bool {
        matches!(self, Method::Mil | Method::MilContrastive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mil => "mil",
            Method::Contrastive => "contrastive",
            Method::MilContrastive => "mil-contrastive",
            Method::ContrastiveDp => "contrastive-dp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mil" => Ok(Method::Mil),
            "contrastive" => Ok(Method::Contrastive),
            "mil-contrastive" => Ok(Method::MilContrastive),
            "contrastive-dp" => Ok(Method::ContrastiveDp),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub mu: f64,
    pub t_sup: usize,
    pub t_occ: usize,
    pub method: Method,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mu: 0.2,
            t_sup: 2,
            t_occ: 3,
            method: Method::ContrastiveDp,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if self.t_occ < 1 {
            return Err(Error::Config("t_occ must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss value, gradients and diagnostics for one line triplet.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// Gradient w.r.t. the reference/positive matrix.
    pub grad_rp: SimilarityGrad,
    /// Gradient w.r.t. the reference/negative matrix (MIL terms only).
    pub grad_rn: Option<SimilarityGrad>,
    /// Gradient w.r.t. the negative/positive matrix (MIL terms only).
    pub grad_np: Option<SimilarityGrad>,
    /// Rows or columns skipped because suppression left no competitor.
    pub suppressed: usize,
    /// Set when a path-based loss had no kept cells to average over.
    pub degenerate: bool,
}

impl LossOutput {
    fn zero(dim: usize) -> Self {
        Self {
            value: 0.0,
            grad_rp: SimilarityGrad::zeros(dim),
            grad_rn: None,
            grad_np: None,
            suppressed: 0,
            degenerate: false,
        }
    }

    fn merge(mut self, other: LossOutput) -> Self {
        fn add(a: Option<SimilarityGrad>, b: Option<SimilarityGrad>) -> Option<SimilarityGrad> {
            match (a, b) {
                (Some(mut x), Some(y)) => {
                    x.add_assign(&y);
                    Some(x)
                }
                (x, y) => x.or(y),
            }
        }
        self.value += other.value;
        self.grad_rp.add_assign(&other.grad_rp);
        self.grad_rn = add(self.grad_rn, other.grad_rn);
        self.grad_np = add(self.grad_np, other.grad_np);
        self.suppressed += other.suppressed;
        self.degenerate |= other.degenerate;
        self
    }
}

fn check_compatible(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<()> {
    if a.dim() != b.dim() || a.d_max() != b.d_max() {
        return Err(Error::shape(
            format!("W = {}, d_max = {}", a.dim(), a.d_max()),
            format!("W = {}, d_max = {}", b.dim(), b.d_max()),
        ));
    }
    Ok(())
}

fn check_ranges(s: &SimilarityMatrix, ranges: &ValidityRanges) -> Result<()> {
    if ranges.rows.is_empty() || ranges.cols.is_empty() {
        return Err(Error::Config("empty validity ranges (W <= d_max)".into()));
    }
    if ranges.rows.end > s.dim() || ranges.cols.end > s.dim() {
        return Err(Error::Config("validity ranges exceed the matrix".into()));
    }
    Ok(())
}

/// Best positive match of each guaranteed row (column) against the best
/// match on the negative line.
pub fn mil_loss(
    s_rp: &SimilarityMatrix,
    s_rn: &SimilarityMatrix,
    s_np: &SimilarityMatrix,
    ranges: &ValidityRanges,
    mu: f64,
) -> Result<LossOutput> {
    check_compatible(s_rp, s_rn)?;
    check_compatible(s_rp, s_np)?;
    check_ranges(s_rp, ranges)?;
    let dim = s_rp.dim();
    let mut out = LossOutput::zero(dim);
    let mut g_rn = SimilarityGrad::zeros(dim);
    let mut g_np = SimilarityGrad::zeros(dim);

    let w_row = 1.0 / ranges.rows.len() as f64;
    for i in ranges.rows.clone() {
        let (Some((jp, vp)), Some((jn, vn))) = (s_rp.row_argmax(i), s_rn.row_argmax(i)) else {
            out.suppressed += 1;
            continue;
        };
        let h = vn - vp + mu;
        if h > 0.0 {
            out.value += w_row * h;
            out.grad_rp.add(i, jp, -w_row);
            g_rn.add(i, jn, w_row);
        }
    }
    let w_col = 1.0 / ranges.cols.len() as f64;
    for j in ranges.cols.clone() {
        let (Some((ip, vp)), Some((in_, vn))) = (s_rp.col_argmax(j), s_np.col_argmax(j)) else {
            out.suppressed += 1;
            continue;
        };
        let h = vn - vp + mu;
        if h > 0.0 {
            out.value += w_col * h;
            out.grad_rp.add(ip, j, -w_col);
            g_np.add(in_, j, w_col);
        }
    }
    out.grad_rn = Some(g_rn);
    out.grad_np = Some(g_np);
    Ok(out)
}

/// Best match of each guaranteed row (column) against the best match left
/// after suppressing the maximum and its `t_sup` neighbours.
pub fn contrastive_loss(s_rp: &SimilarityMatrix, ranges: &ValidityRanges, mu: f64, t_sup: usize) -> Result<LossOutput> {
    check_ranges(s_rp, ranges)?;
    let mut out = LossOutput::zero(s_rp.dim());
    let rows_masked = mask_row_maxima(s_rp, t_sup);
    let cols_masked = mask_col_maxima(s_rp, t_sup);

    let w_row = 1.0 / ranges.rows.len() as f64;
    for i in ranges.rows.clone() {
        let (Some((jb, vb)), Some((js, vs))) = (s_rp.row_argmax(i), rows_masked.row_argmax(i)) else {
            out.suppressed += 1;
            continue;
        };
        debug_assert_ne!(jb, js);
        let h = vs - vb + mu;
        if h > 0.0 {
            out.value += w_row * h;
            out.grad_rp.add(i, jb, -w_row);
            out.grad_rp.add(i, js, w_row);
        }
    }
    let w_col = 1.0 / ranges.cols.len() as f64;
    for j in ranges.cols.clone() {
        let (Some((ib, vb)), Some((is, vs))) = (s_rp.col_argmax(j), cols_masked.col_argmax(j)) else {
            out.suppressed += 1;
            continue;
        };
        debug_assert_ne!(ib, is);
        let h = vs - vb + mu;
        if h > 0.0 {
            out.value += w_col * h;
            out.grad_rp.add(ib, j, -w_col);
            out.grad_rp.add(is, j, w_col);
        }
    }
    Ok(out)
}

pub fn mil_contrastive_loss(
    s_rp: &SimilarityMatrix,
    s_rn: &SimilarityMatrix,
    s_np: &SimilarityMatrix,
    ranges: &ValidityRanges,
    mu: f64,
    t_sup: usize,
) -> Result<LossOutput> {
    let mil = mil_loss(s_rp, s_rn, s_np, ranges, mu)?;
    let contrastive = contrastive_loss(s_rp, ranges, mu, t_sup)?;
    Ok(mil.merge(contrastive))
}

/// Each kept path cell against the best competitor in its row and in its
/// column once the path's `t_sup` neighbourhood is masked out, averaged
/// over kept cells. The path is treated as a constant.
pub fn contrastive_dp_loss(s_rp: &SimilarityMatrix, path: &MatchPath, mu: f64, t_sup: usize) -> Result<LossOutput> {
    let mut out = LossOutput::zero(s_rp.dim());
    let cells = path.kept_cells();
    if cells.is_empty() {
        out.degenerate = true;
        return Ok(out);
    }
    let masked = suppress_path_neighborhood(s_rp, &cells, t_sup)?;
    let w = 1.0 / cells.len() as f64;
    for &(i, j) in &cells {
        let Some(v) = s_rp.get(i, j) else {
            return Err(Error::Contract(format!("path cell ({i}, {j}) is not VALID")));
        };
        match masked.row_argmax(i) {
            Some((k, c)) if c - v + mu > 0.0 => {
                out.value += w * (c - v + mu);
                out.grad_rp.add(i, j, -w);
                out.grad_rp.add(i, k, w);
            }
            Some(_) => {}
            None => out.suppressed += 1,
        }
        match masked.col_argmax(j) {
            Some((l, c)) if c - v + mu > 0.0 => {
                out.value += w * (c - v + mu);
                out.grad_rp.add(i, j, -w);
                out.grad_rp.add(l, j, w);
            }
            Some(_) => {}
            None => out.suppressed += 1,
        }
    }
    Ok(out)
}
