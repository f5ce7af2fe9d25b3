//! Pure-variable detection: the PureVar/Merge sweep over a covariance matrix.

use nalgebra::DMatrix;

use crate::error::{EssRegError, Result};
use crate::model::PurePartition;

/// Tuning for pure-variable detection.
#[derive(Debug, Clone, PartialEq)]
pub struct PureVarConfig {
    pub delta: f64,
    /// Candidate deltas for cross-validation, strictly increasing.
    pub delta_grid: Option<Vec<f64>>,
    pub rng_seed: u64,
}

impl PureVarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(EssRegError::InvalidInput("delta must be positive".into()));
        }
        if let Some(grid) = &self.delta_grid {
            if grid.iter().any(|d| !(*d > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(EssRegError::InvalidInput(
                    "delta grid must be positive and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Folds `group` into `collection`: the first existing group that intersects
/// it is replaced by the intersection; otherwise `group` is appended.
pub fn merge(group: &[usize], collection: &mut Vec<Vec<usize>>) -> Result<()> {
    if group.is_empty() {
        return Err(EssRegError::InvalidInput("cannot merge an empty group".into()));
    }
    for existing in collection.iter_mut() {
        if existing.iter().any(|i| group.contains(i)) {
            existing.retain(|i| group.contains(i));
            if existing.is_empty() {
                return Err(EssRegError::InvariantViolation);
            }
            return Ok(());
        }
    }
    let mut g = group.to_vec();
    g.sort_unstable();
    collection.push(g);
    Ok(())
}

/// Estimates the partition of pure variables from a covariance matrix.
///
/// Only off-diagonal entries are read. Rows are visited in ascending order,
/// which fixes the output in the presence of exact ties.
pub fn pure_var(sigma_hat: &DMatrix<f64>, delta: f64) -> Result<PurePartition> {
    let p = sigma_hat.nrows();
    if sigma_hat.ncols() != p || p < 2 {
        return Err(EssRegError::InvalidInput(
            "covariance must be square with p >= 2".into(),
        ));
    }
    if !(delta >= 0.0) {
        return Err(EssRegError::InvalidInput("delta must be nonnegative".into()));
    }
    if sigma_hat.iter().any(|v| !v.is_finite()) {
        return Err(EssRegError::InvalidInput("covariance has non-finite entries".into()));
    }
    let abs = |i: usize, j: usize| sigma_hat[(i, j)].abs();
    let row_max: Vec<f64> = (0..p)
        .map(|i| {
            (0..p)
                .filter(|&j| j != i)
                .map(|j| abs(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let tol = 2.0 * delta;

    let mut collection: Vec<Vec<usize>> = Vec::new();
    let mut candidates = Vec::with_capacity(p);
    for i in 0..p {
        candidates.clear();
        candidates.extend((0..p).filter(|&l| l != i && row_max[i] <= abs(i, l) + tol));
        let pure = candidates
            .iter()
            .all(|&j| (abs(i, j) - row_max[j]).abs() <= tol);
        if pure {
            let mut group = candidates.clone();
            group.push(i);
            group.sort_unstable();
            merge(&group, &mut collection)?;
        }
    }
    if collection.is_empty() {
        return Err(EssRegError::EmptyPartition);
    }
    PurePartition::new(collection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy5_sigma;
    use proptest::prelude::*;

    #[test]
    fn merge_intersects_first_overlap() {
        let mut c = vec![vec![2, 4]];
        merge(&[1, 2, 3], &mut c).unwrap();
        assert_eq!(c, vec![vec![2]]);
    }

    #[test]
    fn merge_appends_disjoint() {
        let mut c = vec![vec![1, 2]];
        merge(&[5, 6], &mut c).unwrap();
        assert_eq!(c, vec![vec![1, 2], vec![5, 6]]);
        let mut empty = Vec::new();
        merge(&[1], &mut empty).unwrap();
        assert_eq!(empty, vec![vec![1]]);
        assert!(merge(&[], &mut empty).is_err());
    }

    #[test]
    fn toy5_population_recovers_two_groups() {
        let part = pure_var(&toy5_sigma(0.1), 0.0).unwrap();
        assert_eq!(part.groups(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(part.k_hat(), 2);
    }

    #[test]
    fn identity_collapses_to_one_group() {
        let part = pure_var(&DMatrix::identity(6, 6), 0.1).unwrap();
        assert_eq!(part.k_hat(), 1);
        assert_eq!(part.groups()[0], (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn block_diagonal_gives_blocks() {
        let mut s = DMatrix::identity(4, 4);
        s[(0, 1)] = 0.9;
        s[(1, 0)] = 0.9;
        s[(2, 3)] = 0.9;
        s[(3, 2)] = 0.9;
        let part = pure_var(&s, 0.05).unwrap();
        assert_eq!(part.groups(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn only_mutual_maxima_survive() {
        // Row maxima 0.9, 0.95, 0.95: only 1 <-> 2 agree.
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.5, 0.9, 1.0, 0.95, 0.5, 0.95, 1.0]);
        assert_eq!(pure_var(&s, 0.0).unwrap().groups(), &[vec![1, 2]]);
        let s2 = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.9, 0.1, 0.1, //
                0.9, 1.0, 0.95, 0.1, //
                0.1, 0.95, 1.0, 0.97, //
                0.1, 0.1, 0.97, 1.0,
            ],
        );
        assert_eq!(pure_var(&s2, 0.0).unwrap().groups(), &[vec![2, 3]]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(pure_var(&DMatrix::identity(1, 1), 0.1).is_err());
        assert!(pure_var(&DMatrix::identity(3, 3), -0.1).is_err());
        assert!(pure_var(&DMatrix::zeros(2, 3), 0.1).is_err());
    }

    fn sym_matrix(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, p * p).prop_map(move |v| {
            let m = DMatrix::from_vec(p, p, v);
            (&m + m.transpose()) * 0.5
        })
    }

    proptest! {
        #[test]
        fn groups_are_disjoint(s in sym_matrix(9), delta in 0.0f64..0.3) {
            if let Ok(part) = pure_var(&s, delta) {
                let mut all: Vec<usize> = part.groups().iter().flatten().copied().collect();
                let total = all.len();
                all.sort_unstable();
                all.dedup();
                prop_assert_eq!(all.len(), total);
                prop_assert!(part.groups().iter().all(|g| !g.is_empty()));
            }
        }

        #[test]
        fn diagonal_is_ignored(s in sym_matrix(8), diag in proptest::collection::vec(-5.0f64..5.0, 8), delta in 0.0f64..0.3) {
            let mut t = s.clone();
            for (i, d) in diag.iter().enumerate() {
                t[(i, i)] = *d;
            }
            prop_assert_eq!(pure_var(&s, delta), pure_var(&t, delta));
        }
    }
}
