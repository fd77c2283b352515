//! Maximum-score bipartite assignment (Hungarian method, shortest
//! augmenting paths with potentials), O(n³).
//!
//! Forbidden entries are priced so that every forbidden edge costs more than
//! any difference in total feasible score; the solver therefore first
//! maximises the number of feasible links, then their total score. Links
//! landing on forbidden or padding cells are dropped from the result.

use crate::scoring::AssociationMatrix;

/// Returns `(row, col)` links sorted by row.
pub fn hungarian(scores: &AssociationMatrix) -> Vec<(usize, usize)> {
    let (rows, cols) = (scores.rows(), scores.cols());
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }

    let mut smin = f64::INFINITY;
    let mut smax = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            if let Some(s) = scores.get(r, c).filter(|s| s.is_finite()) {
                smin = smin.min(s);
                smax = smax.max(s);
            }
        }
    }
    if smin > smax {
        return Vec::new();
    }
    let range = smax - smin;
    let forbidden = (n as f64 + 1.0) * (range + 1.0);
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            match scores.get(r, c) {
                Some(s) if s.is_finite() => smax - s,
                _ => forbidden,
            }
        } else {
            forbidden
        }
    };

    // 1-based potentials; way[j] is the previous column on the path.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
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
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut links: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let (r, c) = (row_of[j] - 1, j - 1);
            (r < rows && c < cols && scores.get(r, c).is_some_and(f64::is_finite)).then_some((r, c))
        })
        .collect();
    links.sort_unstable();
    links
}

/// Sum of scores over `links`.
pub fn total_score(scores: &AssociationMatrix, links: &[(usize, usize)]) -> f64 {
    links.iter().filter_map(|&(r, c)| scores.get(r, c)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[Option<f64>]]) -> AssociationMatrix {
        let c = rows.first().map_or(0, |r| r.len());
        AssociationMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
    }

    /// Exhaustive search: maximise feasible link count, then total score.
    fn brute_force(m: &AssociationMatrix) -> (usize, f64) {
        fn go(m: &AssociationMatrix, r: usize, used: &mut Vec<bool>, count: usize, sum: f64, best: &mut (usize, f64)) {
            if r == m.rows() {
                if count > best.0 || (count == best.0 && sum > best.1) {
                    *best = (count, sum);
                }
                return;
            }
            go(m, r + 1, used, count, sum, best);
            for c in 0..m.cols() {
                if !used[c] {
                    if let Some(s) = m.get(r, c) {
                        used[c] = true;
                        go(m, r + 1, used, count + 1, sum + s, best);
                        used[c] = false;
                    }
                }
            }
        }
        let mut best = (0, f64::NEG_INFINITY);
        go(m, 0, &mut vec![false; m.cols()], 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    #[test]
    fn small_examples() {
        let m = matrix(&[&[Some(1.0), Some(0.0)], &[Some(0.0), Some(1.0)]]);
        assert_eq!(hungarian(&m), vec![(0, 0), (1, 1)]);
        let m = matrix(&[&[Some(0.0), Some(1.0)], &[Some(1.0), Some(0.0)]]);
        assert_eq!(hungarian(&m), vec![(0, 1), (1, 0)]);
        assert!(hungarian(&AssociationMatrix::new(0, 3)).is_empty());
        assert!(hungarian(&AssociationMatrix::new(2, 2)).is_empty());
    }

    #[test]
    fn forbidden_and_rectangular() {
        // the only feasible cell of row 1 is column 0, so row 0 must yield it
        let m = matrix(&[&[Some(0.9), Some(0.1), None], &[Some(0.5), None, None]]);
        assert_eq!(hungarian(&m), vec![(0, 1), (1, 0)]);
        let m = matrix(&[&[Some(-3.0)], &[Some(2.0)], &[None]]);
        assert_eq!(hungarian(&m), vec![(1, 0)]);
    }

    #[test]
    fn random_six_by_six_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let m = AssociationMatrix::from_fn(6, 6, |_, _| {
                (rng.random::<f64>() > 0.2).then(|| rng.random_range(-1.0..1.0))
            });
            let links = hungarian(&m);
            let (count, sum) = brute_force(&m);
            assert_eq!(links.len(), count);
            assert!((total_score(&m, &links) - sum).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn rectangular_matches_oracle(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = AssociationMatrix::from_fn(rows, cols, |_, _| {
                (rng.random::<f64>() > 0.3).then(|| rng.random_range(-2.0..2.0))
            });
            let links = hungarian(&m);
            let (count, sum) = brute_force(&m);
            prop_assert_eq!(links.len(), count);
            prop_assert!((total_score(&m, &links) - sum).abs() < 1e-9);
            let mut cs: Vec<_> = links.iter().map(|l| l.1).collect();
            cs.sort_unstable();
            cs.dedup();
            prop_assert_eq!(cs.len(), links.len());
        }

        #[test]
        fn shift_invariant(seed in any::<u64>(), k in -8i32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // integer scores keep the shift exact
            let m = AssociationMatrix::from_fn(5, 4, |_, _| {
                (rng.random::<f64>() > 0.25).then(|| rng.random_range(-50i32..50) as f64)
            });
            let shifted = AssociationMatrix::from_fn(5, 4, |r, c| m.get(r, c).map(|s| s + k as f64));
            let a = hungarian(&m);
            let b = hungarian(&shifted);
            prop_assert_eq!(a, b);
        }
    }
}
