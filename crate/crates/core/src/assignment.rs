//! Maximum-similarity bipartite matching.
//!
//! `hungarian_max` is the production solver; `brute_force_max` enumerates
//! every injection and exists as an oracle for tests. Both share one
//! contract: maximize the summed similarity over assignments of
//! `min(rows, cols)` pairs, break ties toward the lexicographically smallest
//! sorted pair list, then drop pairs whose similarity is `<= floor`.

use crate::error::{Error, Result};

/// Dense row-major matrix; rows index detections, columns index tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix"));
        }
        Ok(SimilarityMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, found: bad.len() });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SimilarityMatrix { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Adds `shift` to every entry.
    pub fn shifted(&self, shift: f64) -> Self {
        SimilarityMatrix { values: self.values.iter().map(|v| v + shift).collect(), ..self.clone() }
    }
}

/// One-to-one pairing of rows and columns. Pairs are sorted by row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Matching {
            pairs,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    /// Summed similarity of the pairs, accumulated in row order.
    pub fn total(&self, m: &SimilarityMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| m.get(r, c)).sum()
    }

    fn apply_floor(self, m: &SimilarityMatrix, floor: f64) -> Self {
        let pairs = self.pairs.into_iter().filter(|&(r, c)| m.get(r, c) > floor).collect();
        Matching::from_pairs(pairs, m.rows, m.cols)
    }
}

/// Tolerance under which two assignment totals are considered tied.
fn tie_tolerance(m: &SimilarityMatrix) -> f64 {
    let scale = m.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    1e-9 * (1.0 + scale * m.rows.min(m.cols) as f64)
}

/// Optimal assignment via the Hungarian method with row/column potentials.
///
/// Runs in `O(rows² · cols)` per solve; ties are resolved by re-solving
/// the residual problem while fixing rows in order, which keeps the
/// selection identical to the exhaustive oracle.
pub fn hungarian_max(m: &SimilarityMatrix, floor: f64) -> Matching {
    if m.rows == 0 || m.cols == 0 {
        return Matching::from_pairs(Vec::new(), m.rows, m.cols);
    }
    let all_rows: Vec<usize> = (0..m.rows).collect();
    let mut avail: Vec<usize> = (0..m.cols).collect();
    let (best, first_pass) = solve_subproblem(m, &all_rows, &avail);
    let tol = tie_tolerance(m);

    let mut pairs = Vec::with_capacity(m.rows.min(m.cols));
    let mut acc = 0.0;
    for r in 0..m.rows {
        if avail.is_empty() {
            break;
        }
        let rest = &all_rows[r + 1..];
        let mut choice: Option<Option<usize>> = None;
        for (k, &c) in avail.iter().enumerate() {
            let mut others = avail.clone();
            others.remove(k);
            let cand = acc + m.get(r, c) + solve_subproblem(m, rest, &others).0;
            if cand >= best - tol {
                choice = Some(Some(c));
                break;
            }
        }
        if choice.is_none() && rest.len() >= avail.len() {
            let cand = acc + solve_subproblem(m, rest, &avail).0;
            if cand >= best - tol {
                choice = Some(None);
            }
        }
        // Only reachable through float round-off; fall back to the plain solve.
        let choice = choice.unwrap_or_else(|| first_pass.iter().find(|p| p.0 == r).map(|p| p.1));
        if let Some(c) = choice {
            acc += m.get(r, c);
            pairs.push((r, c));
            avail.retain(|&x| x != c);
        }
    }
    Matching::from_pairs(pairs, m.rows, m.cols).apply_floor(m, floor)
}

/// Maximum total similarity over `min(|rows|, |cols|)`-pair assignments
/// restricted to the given index subsets, plus the pairs achieving it.
fn solve_subproblem(m: &SimilarityMatrix, rows: &[usize], cols: &[usize]) -> (f64, Vec<(usize, usize)>) {
    if rows.is_empty() || cols.is_empty() {
        return (0.0, Vec::new());
    }
    let transposed = rows.len() > cols.len();
    let (short, long) = if transposed { (cols, rows) } else { (rows, cols) };
    let cost = |i: usize, j: usize| {
        let (r, c) = if transposed { (long[j], short[i]) } else { (short[i], long[j]) };
        -m.get(r, c)
    };
    let assign = min_cost_assignment(short.len(), long.len(), cost);
    let mut total = 0.0;
    let mut pairs = Vec::with_capacity(short.len());
    for (i, &j) in assign.iter().enumerate() {
        let (r, c) = if transposed { (long[j], short[i]) } else { (short[i], long[j]) };
        total += m.get(r, c);
        pairs.push((r, c));
    }
    (total, pairs)
}

/// Shortest-augmenting-path Hungarian algorithm for `n <= m`.
/// Returns the column assigned to each of the `n` rows.
fn min_cost_assignment(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-based with a sentinel column 0, following the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Exhaustive search over all injections; test oracle for `hungarian_max`.
pub fn brute_force_max(m: &SimilarityMatrix, floor: f64) -> Result<Matching> {
    let k = m.rows.min(m.cols);
    if k > 8 {
        return Err(Error::TooLarge(k));
    }
    if k == 0 {
        return Ok(Matching::from_pairs(Vec::new(), m.rows, m.cols));
    }
    // Enumeration order is lexicographic in the sorted pair list: for each
    // row, columns ascending, then "row unmatched".
    let mut all = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; m.cols];
    enumerate(m, 0, k, &mut current, &mut used, &mut all);
    let totals: Vec<f64> = all.iter().map(|p| p.iter().map(|&(r, c)| m.get(r, c)).sum()).collect();
    let best = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tolerance(m);
    let idx = totals.iter().position(|&t| t >= best - tol).expect("at least one injection");
    Ok(Matching::from_pairs(all.swap_remove(idx), m.rows, m.cols).apply_floor(m, floor))
}

fn enumerate(
    m: &SimilarityMatrix,
    row: usize,
    needed: usize,
    current: &mut Vec<(usize, usize)>,
    used: &mut [bool],
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if current.len() == needed {
        out.push(current.clone());
        return;
    }
    if row == m.rows {
        return;
    }
    for c in 0..m.cols {
        if !used[c] {
            used[c] = true;
            current.push((row, c));
            enumerate(m, row + 1, needed, current, used, out);
            current.pop();
            used[c] = false;
        }
    }
    if m.rows - row > needed - current.len() {
        enumerate(m, row + 1, needed, current, used, out);
    }
}
