//! Line-triplet sampling: a reference band from the left image, the band
//! on the same row of the right image, and a band from another right-image
//! row at least one patch height away.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::StereoPair;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSampling {
    /// Every valid center row once, in order.
    Exhaustive,
    /// `n` rows drawn uniformly with replacement.
    Random(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripletRows {
    pub row: usize,
    pub negative_row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineTriplet {
    pub row: usize,
    pub negative_row: usize,
    pub reference_band: Tensor,
    pub positive_band: Tensor,
    pub negative_band: Tensor,
}

/// Draws center rows and their negatives for an image of `height` rows.
pub fn sample_rows(height: usize, patch_size: usize, seed: u64, mode: RowSampling) -> Result<Vec<TripletRows>> {
    if height < 3 * patch_size {
        return Err(Error::Sampling(format!(
            "image height {height} is below 3 x patch size ({patch_size})"
        )));
    }
    let half = patch_size / 2;
    let (lo, hi) = (half, height - half); // valid center rows: lo..hi
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = match mode {
        RowSampling::Exhaustive => (lo..hi).collect(),
        RowSampling::Random(n) => (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    };
    Ok(rows
        .into_iter()
        .map(|row| TripletRows {
            row,
            negative_row: draw_negative(row, lo, hi, patch_size, &mut rng),
        })
        .collect())
}

fn draw_negative(row: usize, lo: usize, hi: usize, gap: usize, rng: &mut ChaCha8Rng) -> usize {
    // candidates: lo..=row-gap and row+gap..hi
    let below = (row + 1).saturating_sub(lo + gap);
    let above = hi.saturating_sub(row + gap);
    let k = rng.random_range(0..below + above);
    if k < below {
        lo + k
    } else {
        row + gap + (k - below)
    }
}

pub fn sample_line_triplets(
    pair: &StereoPair,
    patch_size: usize,
    seed: u64,
    mode: RowSampling,
) -> Result<Vec<LineTriplet>> {
    let half = patch_size / 2;
    sample_rows(pair.height(), patch_size, seed, mode)?
        .into_iter()
        .map(|t| {
            Ok(LineTriplet {
                row: t.row,
                negative_row: t.negative_row,
                reference_band: pair.left.band(t.row, half)?,
                positive_band: pair.right.band(t.row, half)?,
                negative_band: pair.right.band(t.negative_row, half)?,
            })
        })
        .collect()
}
