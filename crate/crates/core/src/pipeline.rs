//! The fixed per-image graph: embed both views, build one set of banded
//! matrices per line triplet, evaluate the loss, and push gradients back
//! through the similarity dot products and the embedding tower.

use crate::data::{GrayImage, StereoPair, TripletRows};
use crate::dp::{filter_occluded_segments, max_average_path, MatchPath};
use crate::embedding::{standardize, DescriptorImage, EmbeddingNetwork, EmbeddingTape, LineRef, NetworkGrads};
use crate::error::{Error, Result};
use crate::eval::{wta_disparity, DisparityMap};
use crate::losses::{contrastive_dp_loss, contrastive_loss, mil_contrastive_loss, mil_loss, LossConfig, LossOutput, Method};
use crate::similarity::{build_banded_similarity, SimilarityGrad, SimilarityMatrix, ValidityRanges};
use crate::tensor::Tensor;

/// `[1, H, W]` tensor of the image standardized to zero mean, unit variance.
pub fn prepare_image(img: &GrayImage) -> Tensor {
    Tensor::from_vec(&[1, img.height, img.width], standardize(&img.pixels)).expect("consistent dims")
}

/// Which image supplies the negative lines.
#[derive(Clone, Copy, Debug)]
pub enum NegativeSource<'a> {
    /// Rows of the positive (right) image itself.
    SamePair,
    /// Rows of another standardized right image.
    Other(&'a Tensor),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub mean_loss: f64,
    pub lines: usize,
    pub suppressed: usize,
    pub degenerate_lines: usize,
}

/// Adds `scale * dL/dS` into the descriptor gradients of both lines.
fn backprop_similarity(
    grad: &SimilarityGrad,
    s: &SimilarityMatrix,
    a: LineRef<'_>,
    b: LineRef<'_>,
    scale: f64,
    grad_a: &mut [f32],
    grad_b: &mut [f32],
) {
    let dim = a.dim();
    for i in 0..s.dim() {
        for j in s.band_cols(i) {
            let g = grad.get(i, j) * scale;
            if g == 0.0 {
                continue;
            }
            let (ai, bj) = (a.descriptor(i), b.descriptor(j));
            for d in 0..dim {
                grad_a[i * dim + d] += (g * bj[d] as f64) as f32;
                grad_b[j * dim + d] += (g * ai[d] as f64) as f32;
            }
        }
    }
}

/// Current-metric match path with occlusion runs marked.
pub fn estimate_matches(s_rp: &SimilarityMatrix, t_occ: usize) -> Result<MatchPath> {
    Ok(filter_occluded_segments(&max_average_path(s_rp)?, t_occ))
}

/// Loss of one line triplet given its descriptor lines.
pub fn line_loss(
    reference: LineRef<'_>,
    positive: LineRef<'_>,
    negative: LineRef<'_>,
    d_max: usize,
    cfg: &LossConfig,
) -> Result<(LossOutput, [SimilarityMatrix; 3])> {
    let s_rp = build_banded_similarity(reference, positive, d_max)?;
    let ranges = ValidityRanges::new(s_rp.dim(), d_max)?;
    let (out, s_rn, s_np) = match cfg.method {
        Method::Mil | Method::MilContrastive => {
            let s_rn = build_banded_similarity(reference, negative, d_max)?;
            let s_np = build_banded_similarity(negative, positive, d_max)?;
            let out = if cfg.method == Method::Mil {
                mil_loss(&s_rp, &s_rn, &s_np, &ranges, cfg.mu)?
            } else {
                mil_contrastive_loss(&s_rp, &s_rn, &s_np, &ranges, cfg.mu, cfg.t_sup)?
            };
            (out, s_rn, s_np)
        }
        Method::Contrastive => (
            contrastive_loss(&s_rp, &ranges, cfg.mu, cfg.t_sup)?,
            s_rp.clone(),
            s_rp.clone(),
        ),
        Method::ContrastiveDp => {
            let path = estimate_matches(&s_rp, cfg.t_occ)?;
            (contrastive_dp_loss(&s_rp, &path, cfg.mu, cfg.t_sup)?, s_rp.clone(), s_rp.clone())
        }
    };
    Ok((out, [s_rp, s_rn, s_np]))
}

/// One minibatch: every listed triplet of one stereo pair. Returns the mean
/// line loss and its gradient with respect to the network parameters.
pub fn minibatch_gradients(
    net: &EmbeddingNetwork,
    left: &Tensor,
    right: &Tensor,
    negatives: NegativeSource<'_>,
    rows: &[TripletRows],
    d_max: usize,
    cfg: &LossConfig,
) -> Result<(BatchStats, NetworkGrads)> {
    if rows.is_empty() {
        return Err(Error::Sampling("empty minibatch".into()));
    }
    let half = net.half_patch();
    let mut tape_l = EmbeddingTape::new();
    let mut tape_r = EmbeddingTape::new();
    let mut tape_n = EmbeddingTape::new();
    let dl = tape_l.forward(net, left)?.clone();
    let dr = tape_r.forward(net, right)?.clone();
    let dn: Option<DescriptorImage> = match (cfg.method.uses_negatives(), negatives) {
        (true, NegativeSource::Other(img)) => Some(tape_n.forward(net, img)?.clone()),
        _ => None,
    };
    let mut gl = dl.zeros_like();
    let mut gr = dr.zeros_like();
    let mut gn = dn.as_ref().map(DescriptorImage::zeros_like);

    let scale = 1.0 / rows.len() as f64;
    let mut stats = BatchStats::default();
    let descriptor_row = |r: usize, rows: usize| {
        r.checked_sub(half)
            .filter(|&k| k < rows)
            .ok_or_else(|| Error::Sampling(format!("row {r} has no descriptors")))
    };

    for t in rows {
        let ri = descriptor_row(t.row, dl.rows)?;
        let neg_img = dn.as_ref().unwrap_or(&dr);
        let ni = descriptor_row(t.negative_row, neg_img.rows)?;
        let (a, b, n) = (dl.line(ri), dr.line(ri), neg_img.line(ni));
        let (out, [s_rp, s_rn, s_np]) = line_loss(a, b, n, d_max, cfg)?;
        stats.mean_loss += out.value * scale;
        stats.suppressed += out.suppressed;
        stats.degenerate_lines += usize::from(out.degenerate);
        stats.lines += 1;

        // Reference and positive lines.
        let mut ga = vec![0.0f32; a.len() * a.dim()];
        let mut gb = vec![0.0f32; b.len() * b.dim()];
        let mut gneg = vec![0.0f32; n.len() * n.dim()];
        backprop_similarity(&out.grad_rp, &s_rp, a, b, scale, &mut ga, &mut gb);
        if let Some(g) = &out.grad_rn {
            backprop_similarity(g, &s_rn, a, n, scale, &mut ga, &mut gneg);
        }
        if let Some(g) = &out.grad_np {
            backprop_similarity(g, &s_np, n, b, scale, &mut gneg, &mut gb);
        }
        add_into(gl.line_mut(ri), &ga);
        add_into(gr.line_mut(ri), &gb);
        if out.grad_rn.is_some() || out.grad_np.is_some() {
            match gn.as_mut() {
                Some(g) => add_into(g.line_mut(ni), &gneg),
                None => add_into(gr.line_mut(ni), &gneg),
            }
        }
    }

    let mut grads = net.zero_grads();
    tape_l.backward(net, &gl, &mut grads)?;
    tape_r.backward(net, &gr, &mut grads)?;
    if let Some(g) = &gn {
        tape_n.backward(net, g, &mut grads)?;
    }
    Ok((stats, grads))
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// WTA disparities for every row of a pair that has descriptors.
pub fn predict_disparities(net: &EmbeddingNetwork, pair: &StereoPair) -> Result<DisparityMap> {
    let dl = net.embed_image(&prepare_image(&pair.left))?;
    let dr = net.embed_image(&prepare_image(&pair.right))?;
    let half = net.half_patch();
    let mut map = DisparityMap::empty(pair.width(), pair.height(), half);
    for r in 0..dl.rows {
        let s = build_banded_similarity(dl.line(r), dr.line(r), pair.d_max)?;
        map.set_line(r + half, &wta_disparity(&s));
    }
    Ok(map)
}

/// `S^{r+}` of a single image row.
pub fn row_similarity(net: &EmbeddingNetwork, pair: &StereoPair, row: usize) -> Result<SimilarityMatrix> {
    let half = net.half_patch();
    let left = GrayImage::new(pair.width(), pair.height(), prepare_image(&pair.left).into_values())?;
    let right = GrayImage::new(pair.width(), pair.height(), prepare_image(&pair.right).into_values())?;
    let a = net.embed_line(&left.band(row, half)?)?;
    let b = net.embed_line(&right.band(row, half)?)?;
    build_banded_similarity(a.view(), b.view(), pair.d_max)
}
