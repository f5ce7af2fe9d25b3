//! Matching estimated factors to true ones up to a signed permutation.

use nalgebra::DVector;

use crate::error::{EssRegError, Result};

/// Minimum-cost assignment of rows to distinct columns (rows <= cols), via
/// the O(n^2 m) shortest augmenting path method. Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Assignment of estimated coordinates to true ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `(estimated index, true index, sign)` triples.
    pub pairs: Vec<(usize, usize, f64)>,
    /// True when the overlap matching was ambiguous and the exact minimum over
    /// signed permutations was used instead.
    pub exact_fallback: bool,
}

impl Alignment {
    pub fn estimated_for_true(&self, a: usize) -> Option<(usize, f64)> {
        self.pairs
            .iter()
            .find(|&&(_, t, _)| t == a)
            .map(|&(k, _, s)| (k, s))
    }

    /// Sum of squared differences over matched pairs whose true index passes `keep`.
    pub fn squared_error(
        &self,
        beta_hat: &DVector<f64>,
        beta_true: &DVector<f64>,
        keep: impl Fn(usize) -> bool,
    ) -> (f64, usize) {
        self.pairs
            .iter()
            .filter(|&&(_, a, _)| keep(a))
            .fold((0.0, 0), |(ss, c), &(k, a, s)| {
                (ss + (beta_hat[k] - s * beta_true[a]).powi(2), c + 1)
            })
    }
}

/// Solves a rectangular assignment by transposing when there are more rows
/// than columns. Returns `(row, col)` pairs.
fn assign_pairs(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= cols {
        hungarian(cost).into_iter().enumerate().collect()
    } else {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        hungarian(&t)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    }
}

/// Matches estimated groups to true groups by maximal pure-set overlap and
/// takes signs from the majority of matched pure rows. When K_hat = K and
/// the overlap is not decisive (a matched pair shares no rows or its sign
/// vote is tied), the exact minimiser of `||beta_hat - P beta||` over signed
/// permutations is used.
pub fn align(
    beta_hat: &DVector<f64>,
    beta_true: &DVector<f64>,
    groups_hat: &[Vec<usize>],
    signs_hat: &[f64],
    groups_true: &[Vec<usize>],
    signs_true: &[f64],
) -> Result<Alignment> {
    let kh = groups_hat.len();
    let kt = groups_true.len();
    if beta_hat.len() != kh || beta_true.len() != kt {
        return Err(EssRegError::InvalidInput(
            "beta and group counts disagree".into(),
        ));
    }
    let overlap: Vec<Vec<f64>> = groups_hat
        .iter()
        .map(|gh| {
            groups_true
                .iter()
                .map(|gt| gh.iter().filter(|i| gt.contains(i)).count() as f64)
                .collect()
        })
        .collect();
    let any_overlap = overlap.iter().flatten().any(|&c| c > 0.0);
    if !any_overlap {
        return Err(EssRegError::NoOverlap);
    }
    let neg: Vec<Vec<f64>> = overlap
        .iter()
        .map(|r| r.iter().map(|c| -c).collect())
        .collect();
    let mut pairs = Vec::new();
    let mut ambiguous = false;
    for (k, a) in assign_pairs(&neg) {
        if overlap[k][a] == 0.0 {
            ambiguous = true;
            continue;
        }
        let vote: f64 = groups_hat[k]
            .iter()
            .filter(|i| groups_true[a].contains(i))
            .map(|&i| signs_hat[i] * signs_true[i])
            .sum();
        if vote == 0.0 {
            ambiguous = true;
        }
        pairs.push((k, a, if vote < 0.0 { -1.0 } else { 1.0 }));
    }
    if ambiguous && kh == kt {
        return Ok(exact_alignment(beta_hat, beta_true));
    }
    if pairs.is_empty() {
        return Err(EssRegError::NoOverlap);
    }
    pairs.sort_by_key(|&(k, _, _)| k);
    Ok(Alignment {
        pairs,
        exact_fallback: false,
    })
}

/// Exact minimiser of `||beta_hat - P beta||_2` over signed permutations
/// (equal lengths). The objective separates over matched pairs, so it is a
/// linear assignment with cost `min_s (beta_hat_k - s beta_a)^2`.
pub fn exact_alignment(beta_hat: &DVector<f64>, beta_true: &DVector<f64>) -> Alignment {
    let k = beta_hat.len();
    let pair_cost = |i: usize, a: usize| {
        let plus = (beta_hat[i] - beta_true[a]).powi(2);
        let minus = (beta_hat[i] + beta_true[a]).powi(2);
        if plus <= minus {
            (plus, 1.0)
        } else {
            (minus, -1.0)
        }
    };
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|a| pair_cost(i, a).0).collect())
        .collect();
    let pairs = hungarian(&cost)
        .into_iter()
        .enumerate()
        .map(|(i, a)| (i, a, pair_cost(i, a).1))
        .collect();
    Alignment {
        pairs,
        exact_fallback: true,
    }
}

/// Alignment for error metrics: the exact minimiser over signed permutations
/// when K_hat = K, the overlap matching otherwise. Fails with `NoOverlap`
/// when no estimated group meets a true one.
pub fn error_alignment(
    beta_hat: &DVector<f64>,
    beta_true: &DVector<f64>,
    groups_hat: &[Vec<usize>],
    signs_hat: &[f64],
    groups_true: &[Vec<usize>],
    signs_true: &[f64],
) -> Result<Alignment> {
    let al = align(beta_hat, beta_true, groups_hat, signs_hat, groups_true, signs_true)?;
    if beta_hat.len() == beta_true.len() {
        Ok(exact_alignment(beta_hat, beta_true))
    } else {
        Ok(al)
    }
}

/// Aligned l2 distance between `beta_hat` and `beta_true` on matched coordinates.
pub fn aligned_error(
    beta_hat: &DVector<f64>,
    beta_true: &DVector<f64>,
    groups_hat: &[Vec<usize>],
    signs_hat: &[f64],
    groups_true: &[Vec<usize>],
    signs_true: &[f64],
) -> Result<f64> {
    let al = error_alignment(beta_hat, beta_true, groups_hat, signs_hat, groups_true, signs_true)?;
    Ok(al.squared_error(beta_hat, beta_true, |_| true).0.sqrt())
}
