//! Banded cosine-similarity matrices between two descriptor lines.
//!
//! Entry `(i, j)` compares descriptor `i` of the first line with descriptor
//! `j` of the second and is VALID only inside the disparity band
//! `0 <= i - j <= d_max`. Everything else is BANNED: it carries the
//! [`BANNED_VALUE`] sentinel and loses every max against a VALID entry.

use crate::embedding::LineRef;
use crate::error::{Error, Result};

/// Arithmetic stand-in for a masked entry. Finite so that sums stay finite.
pub const BANNED_VALUE: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    dim: usize,
    d_max: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

/// Reference rows and positive columns that always contain a correct match:
/// rows `d_max..W` and columns `0..W - d_max` (0-based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityRanges {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

impl ValidityRanges {
    pub fn new(dim: usize, d_max: usize) -> Result<Self> {
        if d_max >= dim {
            return Err(Error::Config(format!(
                "d_max = {d_max} leaves no guaranteed rows for {dim} descriptors"
            )));
        }
        Ok(Self {
            rows: d_max..dim,
            cols: 0..dim - d_max,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Dense gradient of a scalar with respect to every matrix entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGrad {
    dim: usize,
    values: Vec<f64>,
}

impl SimilarityGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn add(&mut self, i: usize, j: usize, delta: f64) {
        self.values[i * self.dim + j] += delta;
    }

    pub fn add_assign(&mut self, other: &SimilarityGrad) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SimilarityMatrix {
    /// Builds a matrix whose band entries come from `f(i, j)`.
    pub fn from_fn(dim: usize, d_max: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 || d_max >= dim {
            return Err(Error::Config(format!("need 0 <= d_max < W, got d_max = {d_max}, W = {dim}")));
        }
        let mut m = Self {
            dim,
            d_max,
            values: vec![BANNED_VALUE; dim * dim],
            valid: vec![false; dim * dim],
        };
        for i in 0..dim {
            for j in m.band_cols(i) {
                m.values[i * dim + j] = f(i, j);
                m.valid[i * dim + j] = true;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.dim && j <= i && i - j <= self.d_max
    }

    /// Columns of row `i` inside the band.
    pub fn band_cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.d_max)..(i + 1).min(self.dim)
    }

    /// Rows of column `j` inside the band.
    pub fn band_rows(&self, j: usize) -> std::ops::Range<usize> {
        j..(j + self.d_max + 1).min(self.dim)
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.dim + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_valid(i, j).then(|| self.values[i * self.dim + j])
    }

    /// Arithmetic value: the entry if VALID, [`BANNED_VALUE`] otherwise.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.is_valid(i, j) {
            self.values[i * self.dim + j]
        } else {
            BANNED_VALUE
        }
    }

    /// Raw storage, including whatever sits under BANNED entries.
    pub fn raw_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[i * self.dim + j]
    }

    pub fn ban(&mut self, i: usize, j: usize) {
        self.valid[i * self.dim + j] = false;
        self.values[i * self.dim + j] = BANNED_VALUE;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Largest VALID entry of row `i`, lowest column on ties.
    pub fn row_argmax(&self, i: usize) -> Option<(usize, f64)> {
        argmax(self.band_cols(i).filter_map(|j| self.get(i, j).map(|v| (j, v))))
    }

    /// Largest VALID entry of column `j`, lowest row on ties.
    pub fn col_argmax(&self, j: usize) -> Option<(usize, f64)> {
        argmax(self.band_rows(j).filter_map(|i| self.get(i, j).map(|v| (i, v))))
    }

    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

fn argmax(entries: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    entries.fold(None, |best, (k, v)| match best {
        Some((_, bv)) if bv >= v => best,
        _ => Some((k, v)),
    })
}

/// `S[i][j] = a_i . b_j` over the band only (`W (d_max + 1)` dot products).
pub fn build_banded_similarity(a: LineRef<'_>, b: LineRef<'_>, d_max: usize) -> Result<SimilarityMatrix> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::shape(
            format!("{} descriptors of width {}", a.len(), a.dim()),
            format!("{} descriptors of width {}", b.len(), b.dim()),
        ));
    }
    SimilarityMatrix::from_fn(a.len(), d_max, |i, j| dot(a.descriptor(i), b.descriptor(j)))
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Bans each row's maximum and every VALID entry within `t_sup` columns of it.
pub fn mask_row_maxima(s: &SimilarityMatrix, t_sup: usize) -> SimilarityMatrix {
    let mut out = s.clone();
    for i in 0..s.dim {
        if let Some((jstar, _)) = s.row_argmax(i) {
            for j in s.band_cols(i) {
                if j.abs_diff(jstar) <= t_sup {
                    out.ban(i, j);
                }
            }
        }
    }
    out
}

/// Bans each column's maximum and every VALID entry within `t_sup` rows of it.
pub fn mask_col_maxima(s: &SimilarityMatrix, t_sup: usize) -> SimilarityMatrix {
    let mut out = s.clone();
    for j in 0..s.dim {
        if let Some((istar, _)) = s.col_argmax(j) {
            for i in s.band_rows(j) {
                if i.abs_diff(istar) <= t_sup {
                    out.ban(i, j);
                }
            }
        }
    }
    out
}

/// For each path cell `(i, j)`, bans row `i` within `t_sup` columns of `j`
/// and column `j` within `t_sup` rows of `i`.
pub fn suppress_path_neighborhood(
    s: &SimilarityMatrix,
    cells: &[(usize, usize)],
    t_sup: usize,
) -> Result<SimilarityMatrix> {
    let mut out = s.clone();
    for &(i, j) in cells {
        if !s.in_band(i, j) {
            return Err(Error::Contract(format!("path cell ({i}, {j}) lies outside the band")));
        }
        for jj in s.band_cols(i) {
            if jj.abs_diff(j) <= t_sup {
                out.ban(i, jj);
            }
        }
        for ii in s.band_rows(j) {
            if ii.abs_diff(i) <= t_sup {
                out.ban(ii, j);
            }
        }
    }
    Ok(out)
}
