//! Rectangular linear assignment: optimal (Hungarian) and threshold-greedy.
//!
//! Forbidden pairs carry the finite [`SENTINEL`] cost and never appear in a
//! returned [`Assignment`].

use std::fmt;

use crate::error::{Error, Result};

/// Cost of a forbidden pair.
pub const SENTINEL: f64 = 1e18;

#[derive(Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CostMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = self
                .row(r)
                .iter()
                .map(|&c| {
                    if is_forbidden(c) {
                        "inf".into()
                    } else {
                        format!("{c:.4}")
                    }
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

pub fn is_forbidden(cost: f64) -> bool {
    cost >= SENTINEL
}

impl CostMatrix {
    /// A matrix with every pair forbidden.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![SENTINEL; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::forbidden(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidInput("ragged cost matrix".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v)?;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Store a cost. `+∞` and anything at or above the sentinel become the sentinel.
    pub fn set(&mut self, r: usize, c: usize, cost: f64) -> Result<()> {
        if cost.is_nan() || cost == f64::NEG_INFINITY {
            return Err(Error::InvalidInput(format!(
                "invalid cost {cost} at ({r}, {c})"
            )));
        }
        self.data[r * self.cols + c] = if cost >= SENTINEL { SENTINEL } else { cost };
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::forbidden(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }
}

/// A partial matching between rows and columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            pairs,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    pub fn total_cost(&self, m: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| m.get(r, c)).sum()
    }

    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// Minimum-cost matching of size `min(rows, cols)` over admissible pairs.
///
/// Forbidden entries are replaced by a penalty large enough that using one
/// more of them never pays off, then stripped from the result. The effect is
/// a maximum-cardinality matching over admissible pairs, with minimum cost
/// among those.
pub fn solve_hungarian(m: &CostMatrix) -> Assignment {
    if m.rows() == 0 || m.cols() == 0 {
        return Assignment::from_pairs(Vec::new(), m.rows(), m.cols());
    }
    if m.rows() > m.cols() {
        let t = solve_hungarian(&m.transpose());
        let pairs = t.pairs.into_iter().map(|(c, r)| (r, c)).collect();
        return Assignment::from_pairs(pairs, m.rows(), m.cols());
    }

    let (n, k) = (m.rows(), m.cols());
    let finite = m.data.iter().copied().filter(|&c| !is_forbidden(c));
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c), hi.max(c))
    });
    if lo > hi {
        return Assignment::from_pairs(Vec::new(), n, k);
    }
    let penalty = hi + (n as f64 + 1.0) * (hi - lo + 1.0);
    let cost = |r: usize, c: usize| {
        let v = m.get(r, c);
        if is_forbidden(v) {
            penalty
        } else {
            v
        }
    };

    // Shortest augmenting path with potentials, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
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
            for j in 0..=k {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let pairs = (1..=k)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .filter(|&(r, c)| !is_forbidden(m.get(r, c)))
        .collect();
    Assignment::from_pairs(pairs, n, k)
}

/// Repeatedly take the cheapest remaining pair until none costs less than
/// `threshold`. Ties go to the lowest row, then the lowest column.
pub fn solve_greedy(m: &CostMatrix, threshold: f64) -> Assignment {
    let mut candidates: Vec<(f64, usize, usize)> = (0..m.rows())
        .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
        .map(|(r, c)| (m.get(r, c), r, c))
        .filter(|&(cost, _, _)| !is_forbidden(cost) && cost < threshold)
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut row_used = vec![false; m.rows()];
    let mut col_used = vec![false; m.cols()];
    let mut pairs = Vec::new();
    for (_, r, c) in candidates {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            pairs.push((r, c));
        }
    }
    Assignment::from_pairs(pairs, m.rows(), m.cols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_min(m: &CostMatrix) -> f64 {
        fn go(m: &CostMatrix, r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if r == m.rows() {
                *best = best.min(acc);
                return;
            }
            for c in 0..m.cols() {
                if !used[c] {
                    used[c] = true;
                    go(m, r + 1, used, acc + m.get(r, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(m, 0, &mut vec![false; m.cols()], 0.0, &mut best);
        best
    }

    fn is_partial_matching(a: &Assignment, rows: usize, cols: usize) -> bool {
        let mut r_seen = vec![false; rows];
        let mut c_seen = vec![false; cols];
        for &(r, c) in &a.pairs {
            if r_seen[r] || c_seen[c] {
                return false;
            }
            r_seen[r] = true;
            c_seen[c] = true;
        }
        a.unmatched_rows.len() + a.pairs.len() == rows
            && a.unmatched_cols.len() + a.pairs.len() == cols
    }

    #[test]
    fn diagonal_optimum() {
        let m = CostMatrix::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let a = solve_hungarian(&m);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost(&m), 0.0);
    }

    #[test]
    fn all_forbidden_gives_nothing() {
        let m = CostMatrix::forbidden(3, 4);
        let a = solve_hungarian(&m);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1, 2]);
        assert!(solve_greedy(&m, f64::MAX).pairs.is_empty());
    }

    #[test]
    fn empty_matrices() {
        assert!(solve_hungarian(&CostMatrix::forbidden(0, 3))
            .pairs
            .is_empty());
        assert_eq!(
            solve_hungarian(&CostMatrix::forbidden(2, 0)).unmatched_rows,
            vec![0, 1]
        );
    }

    #[test]
    fn forbidden_entries_are_avoided_when_possible() {
        let m =
            CostMatrix::from_rows(&[vec![1.0, f64::INFINITY], vec![2.0, f64::INFINITY]]).unwrap();
        let a = solve_hungarian(&m);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_rows, vec![1]);
    }

    #[test]
    fn three_by_three_integer_cases() {
        let cases = [
            [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]],
            [[7.0, 3.0, 9.0], [1.0, 8.0, 2.0], [6.0, 4.0, 5.0]],
            [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]],
        ];
        for case in cases {
            let m = CostMatrix::from_rows(&case.map(|r| r.to_vec())).unwrap();
            assert_eq!(solve_hungarian(&m).total_cost(&m), brute_force_min(&m));
        }
    }

    #[test]
    fn greedy_examples() {
        let m = CostMatrix::from_rows(&[vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        assert_eq!(solve_greedy(&m, 5.0).pairs, vec![(0, 0), (1, 1)]);

        let m = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 100.0]]).unwrap();
        let g = solve_greedy(&m, 50.0);
        assert_eq!(g.pairs, vec![(0, 0)]);
        assert_eq!(g.unmatched_rows, vec![1]);
        assert_eq!(solve_hungarian(&m).total_cost(&m), 4.0);

        let m = CostMatrix::from_rows(&[vec![3.0; 3], vec![3.0; 3]]).unwrap();
        assert_eq!(solve_greedy(&m, 10.0).pairs, vec![(0, 0), (1, 1)]);
    }

    proptest! {
        #[test]
        fn hungarian_is_optimal(rows in 1usize..6, cols in 1usize..6, seed in proptest::collection::vec(0u32..100, 36)) {
            let data: Vec<Vec<f64>> = (0..rows)
                .map(|r| (0..cols).map(|c| seed[r * 6 + c] as f64 / 7.0).collect())
                .collect();
            let m = CostMatrix::from_rows(&data).unwrap();
            let a = solve_hungarian(&m);
            prop_assert!(is_partial_matching(&a, rows, cols));
            prop_assert_eq!(a.pairs.len(), rows.min(cols));
            let best = if rows <= cols { brute_force_min(&m) } else { brute_force_min(&m.transpose()) };
            prop_assert!((a.total_cost(&m) - best).abs() < 1e-9);

            let t = solve_hungarian(&m.transpose());
            prop_assert!((t.total_cost(&m.transpose()) - best).abs() < 1e-9);
        }

        #[test]
        fn greedy_is_a_matching_below_threshold(rows in 0usize..6, cols in 0usize..6, seed in proptest::collection::vec(0u32..100, 36), threshold in 0.0f64..15.0) {
            let data: Vec<Vec<f64>> = (0..rows)
                .map(|r| (0..cols).map(|c| {
                    let v = seed[r * 6 + c];
                    if v > 90 { f64::INFINITY } else { v as f64 / 7.0 }
                }).collect())
                .collect();
            let m = if rows == 0 { CostMatrix::forbidden(0, cols) } else { CostMatrix::from_rows(&data).unwrap() };
            let g = solve_greedy(&m, threshold);
            prop_assert!(is_partial_matching(&g, rows, cols));
            prop_assert!(g.pairs.iter().all(|&(r, c)| m.get(r, c) < threshold));
            let h = solve_hungarian(&m);
            prop_assert!(is_partial_matching(&h, rows, cols));
            prop_assert!(h.pairs.iter().all(|&(r, c)| !is_forbidden(m.get(r, c))));
        }
    }
}
