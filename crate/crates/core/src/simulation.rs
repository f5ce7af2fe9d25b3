//! Synthetic data generation, seeded replication sweeps and evaluation metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::align::{align, exact_alignment, Alignment};
use crate::cv::{cv_select_delta, DeltaGrid};
use crate::error::{EssRegError, Result};
use crate::estimation::{estimate_beta_oracle, EstimationConfig};
use crate::inference::{
    confidence_interval, variance_uk, variance_vk_general, UkMode,
};
use crate::model::{
    center, delta_default, sample_covariance, ClipCounts, Dataset, PurePartition, SimulationTruth,
    VarianceFormula,
};
use crate::par::Execution;
use crate::pipeline::{fit_summary, fit_with_partition, FitConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaZKind {
    /// Diagonal from 2.5 to 3 in equal steps, off-diagonal
    /// `(-1)^(i+j) min(d_i, d_j) 0.3^|i-j|`.
    DecayingAr,
    /// `scale * I`.
    IdentityScaled,
    /// `scale * (-1)^(i+j) rho^|i-j|`.
    ArRho(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaKind {
    Unif13,
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaKind {
    Unif13,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub sigma_z_kind: SigmaZKind,
    pub sigma_z_scale: f64,
    pub gamma_kind: GammaKind,
    pub beta_kind: BetaKind,
    pub sigma_sq: f64,
    pub weak_column_theta: Option<f64>,
    pub weak_column_count: usize,
    /// Rows with `|A_jk| >= 1 - threshold` (and not pure) count as quasi-pure.
    pub quasi_pure_threshold: f64,
    /// Independent random signs on the non-pure loadings.
    pub signed_loadings: bool,
    /// Redraw non-pure rows whose largest absolute loading exceeds this cap,
    /// keeping them well separated from the pure rows.
    pub max_nonpure_loading: Option<f64>,
    pub rng_seed: u64,
}

impl DgpConfig {
    /// The main-table design: AR factor covariance, Unif(1,3) noise and beta.
    pub fn standard(n: usize, p: usize, k: usize, m: usize) -> Self {
        Self {
            n,
            p,
            k,
            m,
            sigma_z_kind: SigmaZKind::DecayingAr,
            sigma_z_scale: 1.0,
            gamma_kind: GammaKind::Unif13,
            beta_kind: BetaKind::Unif13,
            sigma_sq: 1.0,
            weak_column_theta: None,
            weak_column_count: 0,
            quasi_pure_threshold: 0.1,
            signed_loadings: true,
            max_nonpure_loading: None,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EssRegError::InvalidInput(m.into()));
        if self.n < 2 || self.p < 2 || self.k < 1 || self.m < 1 {
            return bad("need n, p >= 2 and k, m >= 1");
        }
        if self.k * self.m > self.p {
            return bad("k * m must not exceed p");
        }
        if self.weak_column_count > self.k {
            return bad("weak column count exceeds k");
        }
        if let Some(t) = self.weak_column_theta {
            if !(0.0..=1.0).contains(&t) {
                return bad("theta must lie in [0, 1]");
            }
        }
        if !(self.sigma_z_scale > 0.0) || !(self.sigma_sq >= 0.0) {
            return bad("scales must be positive");
        }
        if let SigmaZKind::ArRho(r) = self.sigma_z_kind {
            if !(r.abs() < 1.0) {
                return bad("|rho| must be below 1");
            }
        }
        if let GammaKind::Scalar(g) = self.gamma_kind {
            if !(g >= 0.0) {
                return bad("noise variance must be nonnegative");
            }
        }
        if let Some(cap) = self.max_nonpure_loading {
            // a row of support >= 2 always has some draw with max share below 0.6
            if !(cap > 0.6 && cap <= 1.0) || self.k < 2 {
                return bad("loading cap must lie in (0.6, 1] and needs k >= 2");
            }
        }
        if let BetaKind::Fixed(b) = &self.beta_kind {
            if b.len() != self.k {
                return bad("fixed beta must have length k");
            }
        }
        Ok(())
    }
}

pub fn sigma_z_matrix(kind: &SigmaZKind, scale: f64, k: usize) -> DMatrix<f64> {
    let sign = |i: usize, j: usize| if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
    match kind {
        SigmaZKind::DecayingAr => {
            let d: Vec<f64> = (0..k)
                .map(|i| {
                    if k == 1 {
                        2.5
                    } else {
                        2.5 + 0.5 * i as f64 / (k - 1) as f64
                    }
                })
                .collect();
            DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    d[i]
                } else {
                    sign(i, j) * d[i].min(d[j]) * 0.3f64.powi((i as i32 - j as i32).abs())
                }
            })
        }
        SigmaZKind::IdentityScaled => DMatrix::identity(k, k) * scale,
        SigmaZKind::ArRho(rho) => DMatrix::from_fn(k, k, |i, j| {
            scale * sign(i, j) * rho.powi((i as i32 - j as i32).abs())
        }),
    }
}

/// Draws A, Gamma and beta. Pure rows come first, `m` per factor.
pub fn generate_truth_with_rng<R: Rng + ?Sized>(
    config: &DgpConfig,
    rng: &mut R,
) -> Result<SimulationTruth> {
    config.validate()?;
    let (p, k, m) = (config.p, config.k, config.m);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let one_three = Uniform::new(1.0, 3.0).expect("valid range");

    let mut a = DMatrix::zeros(p, k);
    for f in 0..k {
        for r in 0..m {
            a[(f * m + r, f)] = 1.0;
        }
    }
    for j in k * m..p {
        loop {
            a.row_mut(j).fill(0.0);
            let size = if k == 1 { 1 } else { rng.random_range(2..=k) };
            let support = sample(rng, k, size);
            let mut l1 = 0.0;
            for c in support.iter() {
                let v: f64 = unit.sample(rng);
                let s = if config.signed_loadings && rng.random_bool(0.5) { -1.0 } else { 1.0 };
                a[(j, c)] = s * v;
                l1 += v;
            }
            if l1 > 1.0 {
                a.row_mut(j).scale_mut(1.0 / l1);
            }
            match config.max_nonpure_loading {
                Some(cap) if a.row(j).amax() > cap => continue,
                _ => break,
            }
        }
    }
    if let Some(theta) = config.weak_column_theta {
        for c in (k - config.weak_column_count)..k {
            for j in 0..p {
                if !rng.random_bool(theta) {
                    a[(j, c)] = 0.0;
                }
            }
        }
    }

    let sigma_z = sigma_z_matrix(&config.sigma_z_kind, config.sigma_z_scale, k);
    let gamma = DVector::from_fn(p, |_, _| match config.gamma_kind {
        GammaKind::Unif13 => one_three.sample(rng),
        GammaKind::Scalar(g) => g,
    });
    let beta = match &config.beta_kind {
        BetaKind::Unif13 => DVector::from_fn(k, |_, _| one_three.sample(rng)),
        BetaKind::Fixed(b) => DVector::from_column_slice(b),
    };

    let partition: Vec<Vec<usize>> = (0..k)
        .map(|f| {
            (0..p)
                .filter(|&j| {
                    a[(j, f)].abs() == 1.0 && (0..k).all(|c| c == f || a[(j, c)] == 0.0)
                })
                .collect()
        })
        .collect();
    let assumption_holds = partition.iter().all(|g| g.len() >= 2);
    let lambda_k = kth_eigenvalue(&a, &sigma_z);
    let rho_bar_sq = rho_bar_sq(&a, &partition, config.quasi_pure_threshold);

    Ok(SimulationTruth {
        a_true: a,
        sigma_z_true: sigma_z,
        gamma_true: gamma,
        beta_true: beta,
        sigma_sq_true: config.sigma_sq,
        partition_true: partition,
        lambda_k,
        rho_bar_sq,
        assumption_holds,
    })
}

pub fn generate_truth(config: &DgpConfig) -> Result<SimulationTruth> {
    generate_truth_with_rng(config, &mut ChaCha8Rng::seed_from_u64(config.rng_seed))
}

/// K-th largest eigenvalue of `A Sigma_Z A'`, computed from the K x K matrix
/// `L' A'A L` with `Sigma_Z = L L'`.
fn kth_eigenvalue(a: &DMatrix<f64>, sigma_z: &DMatrix<f64>) -> f64 {
    let k = a.ncols();
    let Some(chol) = sigma_z.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    let inner = l.transpose() * a.tr_mul(a) * &l;
    let eig = SymmetricEigen::new(inner);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals.get(k - 1).copied().unwrap_or(0.0)
}

fn rho_bar_sq(a: &DMatrix<f64>, partition: &[Vec<usize>], threshold: f64) -> f64 {
    let pure: Vec<bool> = {
        let mut v = vec![false; a.nrows()];
        partition.iter().flatten().for_each(|&i| v[i] = true);
        v
    };
    partition
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let j1 = (0..a.nrows())
                .filter(|&j| !pure[j] && a[(j, k)].abs() >= 1.0 - threshold)
                .count() as f64;
            let denom = g.len() as f64 + j1;
            if denom == 0.0 {
                0.0
            } else {
                (j1 / denom).powi(2)
            }
        })
        .sum()
}

/// Draws `n` rows: `X = Z A' + W`, `y = Z beta + eps`. Returns the
/// (uncentered) dataset and Z.
pub fn sample_dataset_with_rng<R: Rng + ?Sized>(
    truth: &SimulationTruth,
    n: usize,
    rng: &mut R,
) -> Result<(Dataset, DMatrix<f64>)> {
    let k = truth.k();
    let p = truth.p();
    let chol = truth
        .sigma_z_true
        .clone()
        .cholesky()
        .ok_or(EssRegError::SingularSigmaZ)?;
    let g = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(rng));
    let z = g * chol.l().transpose();
    let noise_sd: Vec<f64> = truth.gamma_true.iter().map(|v| v.sqrt()).collect();
    let w = DMatrix::from_fn(n, p, |_, j| {
        let e: f64 = StandardNormal.sample(rng);
        e * noise_sd[j]
    });
    let sigma = truth.sigma_sq_true.sqrt();
    let eps = DVector::from_fn(n, |_, _| {
        let e: f64 = StandardNormal.sample(rng);
        e * sigma
    });
    let x = &z * truth.a_true.transpose() + w;
    let y = &z * &truth.beta_true + eps;
    Ok((Dataset::new(x, y)?, z))
}

pub fn sample_dataset(
    truth: &SimulationTruth,
    n: usize,
    rng_seed: u64,
) -> Result<(Dataset, DMatrix<f64>)> {
    sample_dataset_with_rng(truth, n, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Independent generator for replication `r`: the seed picks the key and the
/// replication index picks the stream.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeltaChoice {
    /// Cross-validation on the default grid, per replication.
    Cv,
    CvGrid(DeltaGrid),
    Fixed(f64),
    /// `c * sqrt(log(p v n) / n)`.
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dgp: DgpConfig,
    pub reps: usize,
    pub delta: DeltaChoice,
    pub level: f64,
    pub estimation: EstimationConfig,
    /// Draw a fresh truth (A, Gamma, thinning, beta) in every replication.
    pub regenerate_truth: bool,
    /// Skip pure_var and estimate with the true partition.
    pub oracle_partition: bool,
    pub exec: Execution,
}

impl ExperimentConfig {
    pub fn new(dgp: DgpConfig, reps: usize) -> Self {
        Self {
            dgp,
            reps,
            delta: DeltaChoice::Cv,
            level: 0.95,
            estimation: EstimationConfig::default(),
            regenerate_truth: true,
            oracle_partition: false,
            exec: Execution::default(),
        }
    }

    /// Error metrics cover true factors outside the thinned columns.
    fn tracked(&self, a: usize) -> bool {
        a < self.dgp.k - self.dgp.weak_column_count
    }
}

/// Per-estimator values; `None` when the estimator failed or had no matched
/// coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimatorValues {
    pub main: Option<f64>,
    pub a_based: Option<f64>,
    pub i_based: Option<f64>,
    pub naive: Option<f64>,
    pub oracle: Option<f64>,
}

impl EstimatorValues {
    pub const NAMES: [&'static str; 5] = ["beta_hat", "beta_A", "beta_I", "beta_naive", "beta_oracle"];

    pub fn get(&self, idx: usize) -> Option<f64> {
        [self.main, self.a_based, self.i_based, self.naive, self.oracle][idx]
    }
}

/// Interval for the coordinate matched to the first true factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRecord {
    pub covered: bool,
    pub length: f64,
    pub variance: f64,
    /// `sqrt(n / V) (beta_hat_1 - beta_1)` on the true sign.
    pub standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub k_hat: usize,
    pub delta: f64,
    /// Aligned l2 distance on matched, tracked coordinates.
    pub l2: EstimatorValues,
    /// Squared distance divided by the number of matched, tracked coordinates.
    pub mse: EstimatorValues,
    pub ci_main: Option<CoverageRecord>,
    pub ci_i_based: Option<CoverageRecord>,
    pub exact_alignment: bool,
    pub clip_counts: ClipCounts,
    pub ridge_t: f64,
    pub elapsed_ms: f64,
}

/// l2 and per-coordinate squared error. With K_hat = K the error is the
/// minimum over signed permutations of each estimate; otherwise the overlap
/// matching decides which coordinates are compared.
fn stats(al: &Alignment, est: &DVector<f64>, truth: &DVector<f64>, keep: &dyn Fn(usize) -> bool) -> (Option<f64>, Option<f64>) {
    let (ss, c) = if est.len() == truth.len() {
        exact_alignment(est, truth).squared_error(est, truth, keep)
    } else {
        al.squared_error(est, truth, keep)
    };
    if c == 0 {
        (None, None)
    } else {
        (Some(ss.sqrt()), Some(ss / c as f64))
    }
}

/// One replication: draw, fit, score every estimator and build intervals.
pub fn run_replication(
    config: &ExperimentConfig,
    fixed_truth: Option<&SimulationTruth>,
    r: usize,
) -> Result<ReplicationResult> {
    let start = Instant::now();
    let mut rng = replication_rng(config.dgp.rng_seed, r as u64);
    let owned;
    let truth = match fixed_truth {
        Some(t) => t,
        None => {
            owned = generate_truth_with_rng(&config.dgp, &mut rng)?;
            &owned
        }
    };
    let n = config.dgp.n;
    let (raw, z) = sample_dataset_with_rng(truth, n, &mut rng)?;
    let cv_seed = rng.next_u64();
    let data = center(&raw);
    let summary = sample_covariance(&data)?;
    let delta = match config.delta {
        _ if config.oracle_partition => 0.0,
        DeltaChoice::Fixed(d) => d,
        DeltaChoice::Rate(c) => delta_default(n, data.p(), c),
        DeltaChoice::Cv => {
            cv_select_delta(&data, &DeltaGrid::default_for(n, data.p()), cv_seed, Execution::Sequential)?
                .chosen_delta
        }
        DeltaChoice::CvGrid(ref grid) => {
            cv_select_delta(&data, grid, cv_seed, Execution::Sequential)?.chosen_delta
        }
    };
    let fit_cfg = FitConfig {
        delta: crate::pipeline::DeltaMode::Fixed(delta),
        estimation: config.estimation.clone(),
        competitors: true,
        exec: Execution::Sequential,
    };
    let out = if config.oracle_partition {
        let part = PurePartition::new(truth.partition_true.clone())?;
        fit_with_partition(&summary, part, delta, Some(&data), &fit_cfg)?
    } else {
        fit_summary(&summary, delta, Some(&data), &fit_cfg)?
    };
    let model = &out.model;
    let beta_hat = model.beta();
    let signs_true = truth.pure_signs();
    let al = align(
        &beta_hat,
        &truth.beta_true,
        model.partition.groups(),
        &model.pure_signs,
        &truth.partition_true,
        &signs_true,
    )?;
    let keep = |a: usize| config.tracked(a);
    let bt = &truth.beta_true;
    let comp = &model.competitors;
    let vec_of = |v: &Option<Vec<f64>>| v.as_ref().map(|x| DVector::from_column_slice(x));

    let mut l2 = EstimatorValues::default();
    let mut mse = EstimatorValues::default();
    (l2.main, mse.main) = stats(&al, &beta_hat, bt, &keep);
    if let Some(b) = vec_of(&comp.beta_a) {
        (l2.a_based, mse.a_based) = stats(&al, &b, bt, &keep);
    }
    if let Some(b) = vec_of(&comp.beta_i) {
        (l2.i_based, mse.i_based) = stats(&al, &b, bt, &keep);
    }
    if let Some(b) = vec_of(&comp.beta_naive) {
        (l2.naive, mse.naive) = stats(&al, &b, bt, &keep);
    }
    // oracle regression on the true factors that were matched
    let mut matched: Vec<usize> = al.pairs.iter().map(|&(_, a, _)| a).collect();
    matched.sort_unstable();
    if !matched.is_empty() {
        // center directly: a single matched factor is too narrow for a Dataset
        let mut zs = z.select_columns(&matched);
        for mut col in zs.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let yc = data.y.add_scalar(-data.y.mean());
        match estimate_beta_oracle(&zs, &yc) {
            Ok(b) => {
                let truth_sub = DVector::from_iterator(matched.len(), matched.iter().map(|&a| bt[a]));
                let (ss, c) = matched
                    .iter()
                    .enumerate()
                    .filter(|&(_, &a)| keep(a))
                    .fold((0.0, 0), |(ss, c), (i, _)| (ss + (b[i] - truth_sub[i]).powi(2), c + 1));
                if c > 0 {
                    l2.oracle = Some(ss.sqrt());
                    mse.oracle = Some(ss / c as f64);
                }
            }
            Err(e) => debug!("oracle failed in rep {r}: {e}"),
        }
    }

    let (mut ci_main, mut ci_i_based) = (None, None);
    if let Some((k, s)) = al.estimated_for_true(0) {
        let inputs = out.variance_inputs()?;
        let target = s * bt[0];
        let record = |estimate: f64, v: Result<f64>, formula| -> Option<CoverageRecord> {
            let v = v.ok()?;
            let rep = confidence_interval(k, estimate, v, n, config.level, formula).ok()?;
            Some(CoverageRecord {
                covered: rep.covers(target),
                length: rep.length(),
                variance: v,
                standardized: s * (estimate - target) / rep.std_error,
            })
        };
        ci_main = record(beta_hat[k], variance_vk_general(&inputs, k), VarianceFormula::General);
        if let Some(bi) = vec_of(&comp.beta_i) {
            ci_i_based = record(bi[k], variance_uk(&inputs, k, UkMode::Pooled), VarianceFormula::IBased);
        }
    }

    Ok(ReplicationResult {
        rep: r,
        k_hat: model.k_hat(),
        delta,
        l2,
        mse,
        ci_main,
        ci_i_based,
        exact_alignment: al.exact_fallback,
        clip_counts: model.clip_counts.clone(),
        ridge_t: model.ridge_t,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Means over successful replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub reps: usize,
    pub failures: usize,
    pub failure_codes: BTreeMap<String, usize>,
    pub mean_l2: EstimatorValues,
    pub mean_mse: EstimatorValues,
    pub coverage: Option<f64>,
    pub mean_ci_length: Option<f64>,
    pub coverage_i_based: Option<f64>,
    pub mean_ci_length_i_based: Option<f64>,
    pub mean_k_hat: f64,
    pub k_hat_histogram: BTreeMap<usize, usize>,
    /// Fraction of successful replications with K_hat = K.
    pub k_correct: f64,
    pub standardized: Vec<f64>,
    pub mean_variance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub replications: Vec<std::result::Result<ReplicationResult, (usize, EssRegError)>>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    pub fn successes(&self) -> impl Iterator<Item = &ReplicationResult> {
        self.replications.iter().filter_map(|r| r.as_ref().ok())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

pub fn aggregate(k: usize, results: &[std::result::Result<ReplicationResult, (usize, EssRegError)>]) -> Aggregate {
    let ok: Vec<&ReplicationResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut failure_codes = BTreeMap::new();
    for (_, e) in results.iter().filter_map(|r| r.as_ref().err()) {
        *failure_codes.entry(e.code().to_string()).or_insert(0) += 1;
    }
    let per = |f: &dyn Fn(&ReplicationResult) -> &EstimatorValues| EstimatorValues {
        main: mean(ok.iter().filter_map(|r| f(r).main)),
        a_based: mean(ok.iter().filter_map(|r| f(r).a_based)),
        i_based: mean(ok.iter().filter_map(|r| f(r).i_based)),
        naive: mean(ok.iter().filter_map(|r| f(r).naive)),
        oracle: mean(ok.iter().filter_map(|r| f(r).oracle)),
    };
    let mut hist = BTreeMap::new();
    for r in &ok {
        *hist.entry(r.k_hat).or_insert(0) += 1;
    }
    let main_ci: Vec<&CoverageRecord> = ok.iter().filter_map(|r| r.ci_main.as_ref()).collect();
    let i_ci: Vec<&CoverageRecord> = ok.iter().filter_map(|r| r.ci_i_based.as_ref()).collect();
    Aggregate {
        reps: results.len(),
        failures: results.len() - ok.len(),
        failure_codes,
        mean_l2: per(&|r| &r.l2),
        mean_mse: per(&|r| &r.mse),
        coverage: mean(main_ci.iter().map(|c| f64::from(u8::from(c.covered)))),
        mean_ci_length: mean(main_ci.iter().map(|c| c.length)),
        coverage_i_based: mean(i_ci.iter().map(|c| f64::from(u8::from(c.covered)))),
        mean_ci_length_i_based: mean(i_ci.iter().map(|c| c.length)),
        mean_k_hat: mean(ok.iter().map(|r| r.k_hat as f64)).unwrap_or(f64::NAN),
        k_correct: mean(ok.iter().map(|r| f64::from(u8::from(r.k_hat == k)))).unwrap_or(0.0),
        k_hat_histogram: hist,
        standardized: main_ci.iter().map(|c| c.standardized).collect(),
        mean_variance: mean(main_ci.iter().map(|c| c.variance)),
    }
}

/// Runs `config.reps` independent replications. Failed replications are
/// recorded with their error and excluded from the means.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.dgp.validate()?;
    if config.reps == 0 {
        return Err(EssRegError::InvalidInput("reps must be at least 1".into()));
    }
    let fixed = if config.regenerate_truth {
        None
    } else {
        Some(generate_truth(&config.dgp)?)
    };
    let replications = config.exec.map_range(config.reps, |r| {
        run_replication(config, fixed.as_ref(), r).map_err(|e| {
            warn!("replication {r} failed: {} ({e})", e.code());
            (r, e)
        })
    });
    let aggregate = aggregate(config.dgp.k, &replications);
    Ok(ExperimentResult {
        config: config.clone(),
        replications,
        aggregate,
    })
}
