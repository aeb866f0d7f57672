//! Maximum-average monotone paths through a banded similarity matrix.
//!
//! A path starts in row 0, moves only right `(0, 1)`, down `(1, 0)` or
//! diagonally `(1, 1)`, stays inside the band, and stops the first time it
//! touches the last row or last column. The objective is the mean of the
//! visited entries, which is a ratio; it is solved by Dinkelbach iteration
//! over a max-sum DP on `S - lambda`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

/// Stopping tolerance on the Dinkelbach residual and on lambda.
pub const DINKELBACH_TOL: f64 = 1e-9;
pub const DINKELBACH_MAX_ITERS: usize = 200;
/// Largest matrix the exhaustive oracle agrees to enumerate.
pub const ORACLE_MAX_DIM: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MatchPath {
    /// `(reference index, positive index)`, both 0-based.
    pub cells: Vec<(usize, usize)>,
    pub mean_energy: f64,
    pub kept: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Start,
    Diagonal,
    Right,
    Down,
}

/// Per-solve diagnostics of the Dinkelbach loop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DinkelbachTrace {
    pub lambdas: Vec<f64>,
}

impl MatchPath {
    fn from_cells(s: &SimilarityMatrix, cells: Vec<(usize, usize)>) -> Self {
        let mean_energy = mean_of(s, &cells);
        let kept = vec![true; cells.len()];
        Self {
            cells,
            mean_energy,
            kept,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn kept_cells(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .zip(&self.kept)
            .filter(|(_, &k)| k)
            .map(|(&c, _)| c)
            .collect()
    }

    /// One `i j kept` line per cell.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (&(i, j), &k) in self.cells.iter().zip(&self.kept) {
            let _ = writeln!(out, "{i} {j} {}", u8::from(k));
        }
        out
    }
}

fn mean_of(s: &SimilarityMatrix, cells: &[(usize, usize)]) -> f64 {
    if cells.is_empty() {
        return f64::NAN;
    }
    cells.iter().map(|&(i, j)| s.value(i, j)).sum::<f64>() / cells.len() as f64
}

fn start_cols(s: &SimilarityMatrix) -> std::ops::Range<usize> {
    0..s.d_max().max(1).min(s.dim())
}

fn is_terminal(s: &SimilarityMatrix, i: usize, j: usize) -> bool {
    i + 1 == s.dim() || j + 1 == s.dim()
}

/// Band-indexed DP table: slot `(i, i - j)`.
struct BandTable {
    width: usize,
    score: Vec<f64>,
    step: Vec<Step>,
}

impl BandTable {
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (i - j)
    }
}

/// Max-sum path on `S - lambda`. Returns the cells and the achieved sum.
fn max_sum_path(s: &SimilarityMatrix, lambda: f64) -> Option<(Vec<(usize, usize)>, f64)> {
    let dim = s.dim();
    let width = s.d_max() + 1;
    let mut table = BandTable {
        width,
        score: vec![f64::NEG_INFINITY; dim * width],
        step: vec![Step::Start; dim * width],
    };
    let starts = start_cols(s);

    for i in 0..dim {
        for j in s.band_cols(i) {
            let own = s.value(i, j) - lambda;
            let mut best = f64::NEG_INFINITY;
            let mut how = Step::Start;
            // predecessor preference: diagonal, right, down, fresh start
            let mut consider = |pi: usize, pj: usize, st: Step, table: &BandTable| {
                if s.in_band(pi, pj) && !is_terminal(s, pi, pj) {
                    let v = table.score[table.slot(pi, pj)];
                    if v > best {
                        best = v;
                        how = st;
                    }
                }
            };
            if i > 0 && j > 0 {
                consider(i - 1, j - 1, Step::Diagonal, &table);
            }
            if j > 0 {
                consider(i, j - 1, Step::Right, &table);
            }
            if i > 0 {
                consider(i - 1, j, Step::Down, &table);
            }
            if i == 0 && starts.contains(&j) && 0.0 > best {
                best = 0.0;
                how = Step::Start;
            }
            if best > f64::NEG_INFINITY {
                let slot = table.slot(i, j);
                table.score[slot] = best + own;
                table.step[slot] = how;
            }
        }
    }

    let mut end: Option<((usize, usize), f64)> = None;
    for i in 0..dim {
        for j in s.band_cols(i) {
            if !is_terminal(s, i, j) {
                continue;
            }
            let v = table.score[table.slot(i, j)];
            if v > f64::NEG_INFINITY && end.is_none_or(|(_, bv)| v > bv) {
                end = Some(((i, j), v));
            }
        }
    }
    let ((mut i, mut j), total) = end?;
    let mut cells = vec![(i, j)];
    loop {
        match table.step[table.slot(i, j)] {
            Step::Start => break,
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::Right => j -= 1,
            Step::Down => i -= 1,
        }
        cells.push((i, j));
    }
    cells.reverse();
    Some((cells, total))
}

/// Best mean-energy path, with the Dinkelbach lambda sequence.
pub fn max_average_path_traced(s: &SimilarityMatrix) -> Result<(MatchPath, DinkelbachTrace)> {
    let has_start = start_cols(s).any(|j| s.is_valid(0, j));
    if !has_start {
        return Err(Error::Matcher("no VALID start cell in row 0".into()));
    }
    let mut trace = DinkelbachTrace::default();
    let (mut cells, _) = max_sum_path(s, 0.0).ok_or_else(|| Error::Matcher("no feasible path".into()))?;
    let mut lambda = mean_of(s, &cells);
    trace.lambdas.push(lambda);

    for _ in 0..DINKELBACH_MAX_ITERS {
        let (candidate, residual) =
            max_sum_path(s, lambda).ok_or_else(|| Error::Matcher("no feasible path".into()))?;
        let mean = mean_of(s, &candidate);
        if residual <= DINKELBACH_TOL || mean - lambda <= DINKELBACH_TOL {
            if mean >= lambda {
                cells = candidate;
            }
            break;
        }
        cells = candidate;
        lambda = mean;
        trace.lambdas.push(lambda);
    }

    let path = MatchPath::from_cells(s, cells);
    if let Some(&(i, j)) = path.cells.iter().find(|&&(i, j)| !s.is_valid(i, j)) {
        return Err(Error::Matcher(format!("every feasible path crosses masked cell ({i}, {j})")));
    }
    Ok((path, trace))
}

pub fn max_average_path(s: &SimilarityMatrix) -> Result<MatchPath> {
    max_average_path_traced(s).map(|(p, _)| p)
}

/// Exhaustive enumeration of every feasible path; the first path found with
/// the strictly highest mean wins. Exponential, so limited to small `W`.
pub fn brute_force_path_oracle(s: &SimilarityMatrix) -> Result<MatchPath> {
    if s.dim() > ORACLE_MAX_DIM {
        return Err(Error::Config(format!(
            "oracle refuses W = {} (limit {ORACLE_MAX_DIM})",
            s.dim()
        )));
    }
    struct Search<'a> {
        s: &'a SimilarityMatrix,
        stack: Vec<(usize, usize)>,
        sum: f64,
        best: Option<(f64, Vec<(usize, usize)>)>,
    }
    impl Search<'_> {
        fn visit(&mut self, i: usize, j: usize) {
            self.stack.push((i, j));
            self.sum += self.s.value(i, j);
            if is_terminal(self.s, i, j) {
                let mean = self.sum / self.stack.len() as f64;
                if self.best.as_ref().is_none_or(|(b, _)| mean > *b) {
                    self.best = Some((mean, self.stack.clone()));
                }
            } else {
                for (ni, nj) in [(i + 1, j + 1), (i, j + 1), (i + 1, j)] {
                    if self.s.in_band(ni, nj) {
                        self.visit(ni, nj);
                    }
                }
            }
            self.sum -= self.s.value(i, j);
            self.stack.pop();
        }
    }
    let mut search = Search {
        s,
        stack: Vec::new(),
        sum: 0.0,
        best: None,
    };
    for j in start_cols(s) {
        if s.in_band(0, j) {
            search.visit(0, j);
        }
    }
    let (_, cells) = search.best.ok_or_else(|| Error::Matcher("no feasible path".into()))?;
    Ok(MatchPath::from_cells(s, cells))
}

/// Checks every structural path invariant against `s`.
pub fn validate_path(s: &SimilarityMatrix, path: &MatchPath) -> Result<()> {
    let fail = |m: String| Err(Error::Contract(m));
    let Some(&(i0, j0)) = path.cells.first() else {
        return fail("empty path".into());
    };
    if path.kept.len() != path.cells.len() {
        return fail("kept mask length differs from path length".into());
    }
    if i0 != 0 || !start_cols(s).contains(&j0) {
        return fail(format!("path starts at ({i0}, {j0})"));
    }
    for (n, &(i, j)) in path.cells.iter().enumerate() {
        if !s.in_band(i, j) {
            return fail(format!("cell ({i}, {j}) outside the band"));
        }
        let terminal = is_terminal(s, i, j);
        let last = n + 1 == path.cells.len();
        if terminal != last {
            return fail(format!("cell ({i}, {j}): path must end exactly on the boundary"));
        }
        if n > 0 {
            let (pi, pj) = path.cells[n - 1];
            let step = (i.wrapping_sub(pi), j.wrapping_sub(pj));
            if !matches!(step, (0, 1) | (1, 0) | (1, 1)) {
                return fail(format!("illegal step ({pi}, {pj}) -> ({i}, {j})"));
            }
        }
    }
    let mean = mean_of(s, &path.cells);
    if (mean - path.mean_energy).abs() > 1e-9 * mean.abs().max(1.0) {
        return fail(format!("mean_energy {} but cells average {mean}", path.mean_energy));
    }
    Ok(())
}

/// Marks as not kept every cell of a maximal horizontal or vertical run
/// that enters more than `t_occ` cells.
pub fn filter_occluded_segments(path: &MatchPath, t_occ: usize) -> MatchPath {
    let mut out = path.clone();
    out.kept = vec![true; path.cells.len()];
    let step_of = |n: usize| {
        let (pi, pj) = path.cells[n - 1];
        let (i, j) = path.cells[n];
        (i - pi, j - pj)
    };
    let mut n = 1;
    while n < path.cells.len() {
        let step = step_of(n);
        if step == (1, 1) {
            n += 1;
            continue;
        }
        let start = n;
        while n < path.cells.len() && step_of(n) == step {
            n += 1;
        }
        if n - start > t_occ {
            out.kept[start..n].iter_mut().for_each(|k| *k = false);
        }
    }
    out
}

/// Disparity `i - j` per reference index from the first kept cell of each
/// row; rows without kept cells stay `None`.
pub fn path_to_disparities(path: &MatchPath, dim: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; dim];
    for (&(i, j), &k) in path.cells.iter().zip(&path.kept) {
        if k && i < dim && out[i].is_none() {
            out[i] = Some(i - j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_path(n: usize) -> MatchPath {
        MatchPath {
            cells: (0..n).map(|k| (k, k)).collect(),
            mean_energy: 0.0,
            kept: vec![true; n],
        }
    }

    #[test]
    fn one_by_one() {
        let s = SimilarityMatrix::from_fn(1, 0, |_, _| 0.42).unwrap();
        let p = max_average_path(&s).unwrap();
        assert_eq!(p.cells, vec![(0, 0)]);
        assert_eq!(p.mean_energy, 0.42);
        assert_eq!(brute_force_path_oracle(&s).unwrap().cells, p.cells);
    }

    #[test]
    fn three_by_three_example() {
        let vals = [[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let s = SimilarityMatrix::from_fn(3, 2, |i, j| vals[i][j]).unwrap();
        let oracle = brute_force_path_oracle(&s).unwrap();
        assert_eq!(oracle.cells, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(oracle.mean_energy, 2.0);
        let p = max_average_path(&s).unwrap();
        assert_eq!(p.cells, oracle.cells);
        assert!((p.mean_energy - 2.0).abs() < 1e-12);
        assert_eq!(path_to_disparities(&p, 3), vec![Some(0), Some(0), Some(0)]);
    }

    #[test]
    fn constant_matrix_mean() {
        let s = SimilarityMatrix::from_fn(7, 3, |_, _| -0.3).unwrap();
        let p = max_average_path(&s).unwrap();
        assert!((p.mean_energy + 0.3).abs() < 1e-12);
        validate_path(&s, &p).unwrap();
    }

    #[test]
    fn dominant_diagonal() {
        let s = SimilarityMatrix::from_fn(6, 3, |i, j| if i == j { 0.9 } else { -0.5 }).unwrap();
        let want: Vec<_> = (0..6).map(|k| (k, k)).collect();
        assert_eq!(max_average_path(&s).unwrap().cells, want);
        assert_eq!(brute_force_path_oracle(&s).unwrap().cells, want);
    }

    #[test]
    fn oracle_refuses_large_matrices() {
        let s = SimilarityMatrix::from_fn(13, 2, |_, _| 0.0).unwrap();
        assert!(matches!(brute_force_path_oracle(&s), Err(Error::Config(_))));
    }

    #[test]
    fn masked_start_is_matcher_error() {
        let mut s = SimilarityMatrix::from_fn(4, 2, |_, _| 0.1).unwrap();
        s.ban(0, 0);
        assert!(matches!(max_average_path(&s), Err(Error::Matcher(_))));
    }

    #[test]
    fn diagonal_path_keeps_everything() {
        let p = filter_occluded_segments(&diag_path(6), 1);
        assert!(p.kept.iter().all(|&k| k));
    }

    #[test]
    fn long_horizontal_run_is_dropped() {
        // two vertical runs of 3, then a horizontal run of 5 in row 8
        let mut cells = vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 1), (5, 1), (6, 1), (7, 1), (8, 2)];
        cells.extend((3..=7).map(|j| (8, j)));
        cells.extend([(9, 8), (10, 9)]);
        let path = MatchPath {
            kept: vec![true; cells.len()],
            cells,
            mean_energy: 0.0,
        };
        let s = SimilarityMatrix::from_fn(11, 7, |_, _| 0.0).unwrap();
        assert!(path.cells.iter().all(|&(i, j)| s.in_band(i, j)));
        let f = filter_occluded_segments(&path, 3);
        let mut want = vec![true; 9];
        want.extend([false; 5]);
        want.extend([true; 2]);
        assert_eq!(f.kept, want);
        let g = filter_occluded_segments(&path, 11);
        assert!(g.kept.iter().all(|&k| k));
        let h = filter_occluded_segments(&path, 2);
        assert_eq!(h.kept.iter().filter(|&&k| !k).count(), 11);
    }

    #[test]
    fn vertical_step_increments_disparity() {
        let path = MatchPath {
            cells: vec![(0, 0), (1, 0), (2, 1), (3, 2)],
            kept: vec![true; 4],
            mean_energy: 0.0,
        };
        assert_eq!(path_to_disparities(&path, 4), vec![Some(0), Some(1), Some(1), Some(1)]);
    }

    #[test]
    fn dump_format() {
        let mut p = diag_path(2);
        p.kept[1] = false;
        assert_eq!(p.dump(), "0 0 1\n1 1 0\n");
    }

    #[test]
    fn validator_rejects_bad_paths() {
        let s = SimilarityMatrix::from_fn(4, 2, |_, _| 0.0).unwrap();
        let mut p = diag_path(4);
        assert!(validate_path(&s, &p).is_ok());
        p.cells[2] = (3, 2);
        assert!(validate_path(&s, &p).is_err());
        let short = diag_path(3);
        assert!(validate_path(&s, &short).is_err());
    }
}
