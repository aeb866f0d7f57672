use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdm::dp::{filter_occluded_segments, max_average_path, validate_path, MatchPath};
use ssdm::losses::{contrastive_dp_loss, contrastive_loss, mil_contrastive_loss, mil_loss, LossOutput};
use ssdm::similarity::{mask_col_maxima, mask_row_maxima, suppress_path_neighborhood, SimilarityMatrix, ValidityRanges};

/// Number of randomized calls in the seeded sweep.
pub const SWEEP_CALLS: usize = 10_000;

pub fn random_matrix(rng: &mut impl Rng) -> SimilarityMatrix {
    let dim = rng.random_range(2..=14);
    let d_max = rng.random_range(1..dim.min(6));
    let mut s = SimilarityMatrix::from_fn(dim, d_max, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    // sprinkle pre-existing bans so masking sees partially BANNED input
    if rng.random_bool(0.3) {
        for _ in 0..rng.random_range(0..dim) {
            let i = rng.random_range(0..dim);
            let cols = s.band_cols(i);
            let j = rng.random_range(cols);
            s.ban(i, j);
        }
    }
    s
}

/// Masking only bans: nothing becomes VALID, no VALID value changes, and
/// nothing outside the band is touched.
pub fn check_mask(before: &SimilarityMatrix, after: &SimilarityMatrix) -> Result<(), String> {
    if after.dim() != before.dim() || after.d_max() != before.d_max() {
        return Err("mask changed the matrix shape".into());
    }
    for i in 0..before.dim() {
        for j in 0..before.dim() {
            if after.is_valid(i, j) {
                if !before.is_valid(i, j) {
                    return Err(format!("({i}, {j}) became VALID"));
                }
                if after.get(i, j) != before.get(i, j) {
                    return Err(format!("({i}, {j}) changed value"));
                }
            }
            if !before.in_band(i, j) && after.is_valid(i, j) {
                return Err(format!("({i}, {j}) outside the band is VALID"));
            }
        }
    }
    Ok(())
}

pub fn check_loss(s: &SimilarityMatrix, out: &LossOutput) -> Result<(), String> {
    if !(out.value >= 0.0) || !out.value.is_finite() {
        return Err(format!("loss {} is negative or not finite", out.value));
    }
    let grads = [Some(&out.grad_rp), out.grad_rn.as_ref(), out.grad_np.as_ref()];
    if out.value == 0.0 && grads.iter().flatten().any(|g| !g.is_zero()) {
        return Err("zero loss with non-zero gradient".into());
    }
    for g in grads.iter().flatten() {
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                if !s.in_band(i, j) && g.get(i, j) != 0.0 {
                    return Err(format!("gradient at ({i}, {j}) outside the band"));
                }
            }
        }
    }
    Ok(())
}

pub fn check_filter(path: &MatchPath, t_occ: usize) -> Result<(), String> {
    let f = filter_occluded_segments(path, t_occ);
    if f.cells != path.cells || f.mean_energy != path.mean_energy {
        return Err("filtering altered the path".into());
    }
    if filter_occluded_segments(&f, t_occ) != f {
        return Err("filtering is not idempotent".into());
    }
    // every dropped cell was entered by a straight step inside a long run
    for (n, &kept) in f.kept.iter().enumerate() {
        let (i, j) = f.cells[n];
        if !kept {
            if n == 0 {
                return Err("start cell dropped".into());
            }
            let (pi, pj) = f.cells[n - 1];
            if (i - pi, j - pj) == (1, 1) {
                return Err(format!("diagonal cell ({i}, {j}) dropped"));
            }
        }
    }
    // every straight run longer than t_occ is fully dropped, shorter ones kept
    let mut n = 1;
    while n < f.cells.len() {
        let step = |k: usize| (f.cells[k].0 - f.cells[k - 1].0, f.cells[k].1 - f.cells[k - 1].1);
        let s0 = step(n);
        let start = n;
        while n < f.cells.len() && step(n) == s0 {
            n += 1;
        }
        if s0 != (1, 1) {
            let want = n - start <= t_occ;
            if f.kept[start..n].iter().any(|&k| k != want) {
                return Err(format!("run of {} straight steps mis-marked", n - start));
            }
        }
    }
    Ok(())
}

/// One randomized call of a randomly chosen primitive.
pub fn sweep_call(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let s = random_matrix(rng);
    let t_sup = rng.random_range(0..=3);
    let mu = rng.random_range(0.0..0.5);
    let ranges = ValidityRanges::new(s.dim(), s.d_max()).unwrap();
    match rng.random_range(0..7) {
        0 => check_mask(&s, &mask_row_maxima(&s, t_sup)),
        1 => check_mask(&s, &mask_col_maxima(&s, t_sup)),
        2 => {
            let cells: Vec<_> = (0..rng.random_range(0..4))
                .map(|_| {
                    let i = rng.random_range(0..s.dim());
                    (i, rng.random_range(s.band_cols(i)))
                })
                .collect();
            let out = suppress_path_neighborhood(&s, &cells, t_sup).map_err(|e| e.to_string())?;
            check_mask(&s, &out)?;
            if cells.iter().any(|&(i, j)| out.is_valid(i, j)) {
                return Err("suppressed cell left VALID".into());
            }
            Ok(())
        }
        3 => {
            let clean = SimilarityMatrix::from_fn(s.dim(), s.d_max(), |i, j| s.get(i, j).unwrap_or(-1.0)).unwrap();
            let path = max_average_path(&clean).map_err(|e| e.to_string())?;
            validate_path(&clean, &path).map_err(|e| e.to_string())?;
            check_filter(&path, rng.random_range(0..5))
        }
        4 => {
            let n = || SimilarityMatrix::from_fn(s.dim(), s.d_max(), |_, _| 0.0).unwrap();
            let (rn, np) = (n(), n());
            check_loss(&s, &mil_loss(&s, &rn, &np, &ranges, mu).map_err(|e| e.to_string())?)
        }
        5 => check_loss(&s, &contrastive_loss(&s, &ranges, mu, t_sup).map_err(|e| e.to_string())?),
        _ => {
            let clean = SimilarityMatrix::from_fn(s.dim(), s.d_max(), |i, j| s.get(i, j).unwrap_or(-1.0)).unwrap();
            let path = filter_occluded_segments(&max_average_path(&clean).map_err(|e| e.to_string())?, 3);
            check_loss(&clean, &contrastive_dp_loss(&clean, &path, mu, t_sup).map_err(|e| e.to_string())?)?;
            let rn = random_matrix_like(&clean, rng);
            let np = random_matrix_like(&clean, rng);
            check_loss(&clean, &mil_contrastive_loss(&clean, &rn, &np, &ranges, mu, t_sup).map_err(|e| e.to_string())?)
        }
    }
}

fn random_matrix_like(s: &SimilarityMatrix, rng: &mut ChaCha8Rng) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(s.dim(), s.d_max(), |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// `calls` randomized calls; the first violation is reported.
pub fn sweep(calls: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for call in 0..calls {
        sweep_call(&mut rng).map_err(|e| format!("call {call}: {e}"))?;
    }
    Ok(())
}
