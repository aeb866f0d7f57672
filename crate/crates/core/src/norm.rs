//! L2 normalization of descriptor vectors, so that a dot product of two
//! outputs is their cosine similarity.

/// Vectors shorter than this normalize to zero instead of blowing up.
pub const NORM_EPS: f64 = 1e-8;

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

pub fn l2_normalize(v: &[f32]) -> Vec<f32> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out);
    out
}

/// Normalizes in place and returns the pre-normalization norm.
pub fn l2_normalize_in_place(v: &mut [f32]) -> f64 {
    let norm = l2_norm(v);
    if norm < NORM_EPS {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    }
    norm
}

/// Gradient through `y = x / |x|` given the output `y`, the input norm and
/// the output gradient: `(g - y (y . g)) / |x|`. Zero below the guard.
pub fn l2_normalize_backward(normalized: &[f32], norm: f64, grad_out: &[f32]) -> Vec<f32> {
    if norm < NORM_EPS {
        return vec![0.0; grad_out.len()];
    }
    let proj: f64 = normalized
        .iter()
        .zip(grad_out)
        .map(|(&y, &g)| y as f64 * g as f64)
        .sum();
    normalized
        .iter()
        .zip(grad_out)
        .map(|(&y, &g)| ((g as f64 - y as f64 * proj) / norm) as f32)
        .collect()
}
