//! Semi-supervised deep patch metrics for rectified stereo.
//!
//! A siamese convolutional tower embeds image lines; cosine similarities
//! between a reference line and lines of the other view form banded
//! matrices; hinge losses built only from stereo constraints (epipolar
//! band, uniqueness, continuity, ordering) train the tower without any
//! ground-truth disparity. The strongest objective anchors itself on the
//! maximum-average monotone path through the band, found by dynamic
//! programming with the current metric.
//!
//! Module map:
//! - [`tensor`], [`conv`], [`norm`], [`adam`], [`checkpoint`]: numeric core.
//! - [`embedding`]: the tower and its dense line/image embedding.
//! - [`similarity`]: banded matrices and masking.
//! - [`losses`]: MIL, CONTRASTIVE, MIL-CONTRASTIVE, CONTRASTIVE-DP.
//! - [`dp`]: maximum-average paths and occlusion filtering.
//! - [`data`]: images, ground truth, manifests, line triplets.
//! - [`eval`]: WTA disparity and error rate, matrix rendering.
//! - [`pipeline`], [`train`], [`synth`]: end-to-end drivers.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod data;
pub mod dp;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod losses;
pub mod norm;
pub mod pipeline;
pub mod similarity;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
