use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdm::dp::{brute_force_path_oracle, max_average_path, validate_path};
use ssdm::similarity::SimilarityMatrix;

pub const MEAN_TOL: f64 = 1e-9;

pub fn random_matrix(dim: usize, d_max: usize, rng: &mut ChaCha8Rng) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(dim, d_max, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// Best mean over monotone band paths from row 0 to the last row, by a DP
/// that tracks path length explicitly: `best[len][cell]` is the largest sum
/// of a `len`-cell path ending at `cell`. Shares no code with the library.
pub fn length_indexed_oracle(s: &SimilarityMatrix) -> f64 {
    let (w, d) = (s.dim(), s.d_max());
    let in_band = |i: usize, j: usize| j <= i && i - j <= d;
    let max_len = 2 * w;
    let idx = |i: usize, j: usize| i * w + j;
    let mut prev = vec![f64::NEG_INFINITY; w * w];
    // a path starts in row 0, where the band admits only column 0
    prev[idx(0, 0)] = s.value(0, 0);
    let mut best_mean = if w == 1 { s.value(0, 0) } else { f64::NEG_INFINITY };
    for len in 2..=max_len {
        let mut cur = vec![f64::NEG_INFINITY; w * w];
        for i in 0..w {
            for j in 0..w {
                if !in_band(i, j) {
                    continue;
                }
                let mut from = f64::NEG_INFINITY;
                for (pi, pj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j)] {
                    // the path stops at its first last-row cell
                    if pi < w && pj < w && in_band(pi, pj) && pi + 1 < w && pj + 1 < w {
                        from = from.max(prev[idx(pi, pj)]);
                    }
                }
                if from > f64::NEG_INFINITY {
                    cur[idx(i, j)] = from + s.value(i, j);
                }
            }
        }
        for j in 0..w {
            let v = cur[idx(w - 1, j)];
            if v > f64::NEG_INFINITY {
                best_mean = best_mean.max(v / len as f64);
            }
        }
        prev = cur;
    }
    best_mean
}

/// Random `W <= 8`, `d_max <= 4` matrices: the fast matcher, the library's
/// exhaustive search and the length-indexed oracle agree on the best mean,
/// and both returned paths satisfy every path invariant.
pub fn exhaustive_agreement(cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let dim = rng.random_range(2..=8);
        let d_max = rng.random_range(1..=4.min(dim - 1));
        let s = random_matrix(dim, d_max, &mut rng);
        let fast = max_average_path(&s).unwrap();
        let brute = brute_force_path_oracle(&s).unwrap();
        validate_path(&s, &fast).unwrap();
        validate_path(&s, &brute).unwrap();
        assert!(
            (fast.mean_energy - brute.mean_energy).abs() <= MEAN_TOL,
            "case {case}: {} vs {}",
            fast.mean_energy,
            brute.mean_energy
        );
        assert!((fast.mean_energy - length_indexed_oracle(&s)).abs() <= MEAN_TOL, "case {case}");
    }
}

