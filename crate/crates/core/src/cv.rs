//! Data-splitting cross-validation for the pure-variable tolerance.

use log::debug;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{EssRegError, Result};
use crate::estimation::{estimate_a_pure, estimate_sigma_z, AnchorRule};
use crate::model::{center, delta_rate, sample_covariance, Dataset, PurePartition};
use crate::par::Execution;
use crate::partition::pure_var;

/// A CV grid. Multipliers are scored at `c * sqrt(log(p v n_half) / n_half)`
/// on the split and mapped to `c * sqrt(log(p v n) / n)` for the full sample,
/// so the selected tolerance matches the noise level of the data it is used on.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaGrid {
    Absolute(Vec<f64>),
    Multipliers(Vec<f64>),
}

impl DeltaGrid {
    /// The default grid on the full-sample scale, used as is on the split.
    pub fn default_for(n: usize, p: usize) -> Self {
        DeltaGrid::Absolute(default_grid(n, p))
    }

    fn is_empty(&self) -> bool {
        match self {
            DeltaGrid::Absolute(g) | DeltaGrid::Multipliers(g) => g.is_empty(),
        }
    }

    /// `(delta on the fitting half, delta on the full sample)` pairs.
    fn resolve(&self, n_half: usize, n: usize, p: usize) -> Vec<(f64, f64)> {
        match self {
            DeltaGrid::Absolute(g) => g.iter().map(|&d| (d, d)).collect(),
            DeltaGrid::Multipliers(g) => {
                let (rh, rf) = (delta_rate(n_half as f64, p as f64), delta_rate(n as f64, p as f64));
                g.iter().map(|&c| (c * rh, c * rf)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRecord {
    /// Tolerance for the full sample.
    pub delta: f64,
    /// Tolerance used on the fitting half.
    pub split_delta: f64,
    /// `None` when pure_var failed at this delta.
    pub k_hat: Option<usize>,
    pub cv_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub records: Vec<CvRecord>,
    pub chosen_delta: f64,
}

impl CvReport {
    pub fn chosen(&self) -> &CvRecord {
        self.records
            .iter()
            .find(|r| r.delta == self.chosen_delta)
            .expect("chosen delta is on the grid")
    }
}

/// 30 log-spaced multipliers in `[0.05, 3]` times `sqrt(log(p v n) / n)`.
pub fn default_grid(n: usize, p: usize) -> Vec<f64> {
    log_grid(n, p, 0.05, 3.0, 30).expect("valid default grid")
}

/// `points` log-spaced multipliers in `[lo, hi]` times `sqrt(log(p v n) / n)`.
pub fn log_grid(n: usize, p: usize, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(EssRegError::InvalidInput(
            "grid needs 0 < lo < hi and at least two points".into(),
        ));
    }
    let rate = delta_rate(n as f64, p as f64);
    Ok(log_spaced(lo, hi, points).into_iter().map(|c| c * rate).collect())
}

pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points.max(2) - 1) as f64).exp())
        .collect()
}

/// Score of a fixed partition: the held-out covariance restricted to the
/// pure set against `A_I Sigma_Z A_I'` fitted on the other half, off-diagonal
/// Frobenius norm scaled by `sqrt(|I|(|I| - 1))`. Infinite for partitions
/// with a singleton group.
pub fn cv_score_partition(
    sigma_holdout: &DMatrix<f64>,
    sigma_fit: &DMatrix<f64>,
    partition: &PurePartition,
) -> f64 {
    if partition.check_min_size().is_err() {
        return f64::INFINITY;
    }
    let Ok(loadings) = estimate_a_pure(sigma_fit, partition, AnchorRule::FirstIndex, 0) else {
        return f64::INFINITY;
    };
    let Ok(sz) = estimate_sigma_z(sigma_fit, &loadings) else {
        return f64::INFINITY;
    };
    let member = partition.membership(sigma_fit.nrows());
    let pure = partition.pure_set();
    let mut ss = 0.0;
    for &i in &pure {
        let gi = member[i].expect("pure index");
        for &j in &pure {
            if i == j {
                continue;
            }
            let gj = member[j].expect("pure index");
            let w = loadings.signs[i] * loadings.signs[j] * sz[(gi, gj)];
            ss += (sigma_holdout[(i, j)] - w).powi(2);
        }
    }
    let size = pure.len() as f64;
    ss.sqrt() / (size * (size - 1.0)).sqrt()
}

/// Scores every grid point with `sigma_fit` driving the partition and
/// `sigma_holdout` as the reference. Ties go to the smaller delta.
pub fn cv_select_from_covariances(
    sigma_holdout: &DMatrix<f64>,
    sigma_fit: &DMatrix<f64>,
    grid: &[f64],
    exec: Execution,
) -> Result<CvReport> {
    let pairs: Vec<(f64, f64)> = grid.iter().map(|&d| (d, d)).collect();
    select_pairs(sigma_holdout, sigma_fit, &pairs, exec)
}

fn select_pairs(
    sigma_holdout: &DMatrix<f64>,
    sigma_fit: &DMatrix<f64>,
    grid: &[(f64, f64)],
    exec: Execution,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(EssRegError::InvalidInput("delta grid is empty".into()));
    }
    if sigma_holdout.shape() != sigma_fit.shape() {
        return Err(EssRegError::InvalidInput("covariance shapes differ".into()));
    }
    let records = exec.map_slice(grid, |&(split_delta, delta)| match pure_var(sigma_fit, split_delta) {
        Ok(part) => CvRecord {
            delta,
            split_delta,
            k_hat: Some(part.k_hat()),
            cv_score: cv_score_partition(sigma_holdout, sigma_fit, &part),
        },
        Err(_) => CvRecord {
            delta,
            split_delta,
            k_hat: None,
            cv_score: f64::INFINITY,
        },
    });
    let mut best: Option<&CvRecord> = None;
    for r in &records {
        if r.cv_score.is_finite() && best.is_none_or(|b| r.cv_score < b.cv_score || (r.cv_score == b.cv_score && r.delta < b.delta)) {
            best = Some(r);
        }
    }
    let chosen_delta = best.ok_or(EssRegError::AllGridFailed)?.delta;
    for r in &records {
        debug!("cv delta={:.5} k_hat={:?} score={:.6}", r.delta, r.k_hat, r.cv_score);
    }
    Ok(CvReport {
        records,
        chosen_delta,
    })
}

/// Splits rows uniformly at random into two halves (the first one takes the
/// extra row when n is odd) and re-centers each.
pub fn split_halves(dataset: &Dataset, rng_seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.n();
    if n < 4 {
        return Err(EssRegError::InvalidInput("cross-validation needs n >= 4".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let cut = n.div_ceil(2);
    let mut first = idx[..cut].to_vec();
    let mut second = idx[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((
        center(&dataset.select_rows(&first)),
        center(&dataset.select_rows(&second)),
    ))
}

/// Picks delta on `grid` by data splitting. The first half is held out; the
/// second drives pure_var and the factor covariance.
pub fn cv_select_delta(
    dataset: &Dataset,
    grid: &DeltaGrid,
    rng_seed: u64,
    exec: Execution,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(EssRegError::InvalidInput("delta grid is empty".into()));
    }
    let (h1, h2) = split_halves(dataset, rng_seed)?;
    let s1 = sample_covariance(&h1)?.sigma_hat;
    let s2 = sample_covariance(&h2)?.sigma_hat;
    let pairs = grid.resolve(h2.n(), dataset.n(), dataset.p());
    select_pairs(&s1, &s2, &pairs, exec)
}
