//! End-to-end fit: partition, loadings, Theta, beta, noise variances and the
//! competitor estimates.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::cv::{cv_select_delta, CvReport, DeltaGrid};
use crate::error::{EssRegError, Result};
use crate::estimation::{self, EstimationConfig, GammaForA, PureLoadings};
use crate::inference::{estimate_sigma_sq, VarianceInputs};
use crate::model::{
    center, sample_covariance, ClipCounts, CompetitorEstimates, CovarianceSummary, Dataset,
    EstimatorKind, FittedModel, PurePartition,
};
use crate::par::Execution;
use crate::partition::pure_var;

/// How delta is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaMode {
    Fixed(f64),
    /// Cross-validation on `grid` (the default grid when `None`).
    Cv { grid: Option<DeltaGrid>, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub delta: DeltaMode,
    pub estimation: EstimationConfig,
    pub competitors: bool,
    pub exec: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            delta: DeltaMode::Cv {
                grid: None,
                seed: 0,
            },
            estimation: EstimationConfig::default(),
            competitors: true,
            exec: Execution::default(),
        }
    }
}

/// A fit plus the intermediate quantities inference needs.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: FittedModel,
    pub loadings: PureLoadings,
    pub h_hat: DVector<f64>,
    pub cv: Option<CvReport>,
}

impl FitOutput {
    pub fn variance_inputs(&self) -> Result<VarianceInputs> {
        let m = &self.model;
        VarianceInputs::new(
            m.theta_hat.clone(),
            m.sigma_z_hat.clone(),
            m.beta(),
            DVector::from_column_slice(&m.tau_sq_hat),
            m.sigma_sq_hat,
            m.partition.clone(),
            self.h_hat.clone(),
        )
    }
}

/// Estimates everything downstream of a given partition from second moments.
/// `dataset` (centered) is only used by the naive competitor.
pub fn fit_with_partition(
    summary: &CovarianceSummary,
    partition: PurePartition,
    delta: f64,
    dataset: Option<&Dataset>,
    config: &FitConfig,
) -> Result<FitOutput> {
    let cfg = &config.estimation;
    cfg.validate()?;
    let sigma = &summary.sigma_hat;
    let loadings = estimation::estimate_a_pure(sigma, &partition, cfg.anchor_rule, cfg.rng_seed)?;
    let sigma_z = estimation::estimate_sigma_z(sigma, &loadings)?;
    let (gamma, gamma_clipped) = estimation::estimate_gamma_pure(sigma, &sigma_z, &loadings);
    let theta = estimation::estimate_theta(sigma, &gamma, &loadings);
    let (beta, ridge_t) = estimation::estimate_beta(&theta, &summary.sigma_xy_hat, cfg)?;
    let a_full = estimation::estimate_a_nonpure_dantzig(
        &sigma_z,
        sigma,
        &loadings,
        cfg.dantzig_c,
        summary.n,
        config.exec,
    )?;
    let (tau_sq, _) = estimation::estimate_tau_sq(sigma, &a_full, &sigma_z);
    let h_hat = loadings.group_average(&summary.sigma_xy_hat);
    let (sigma_sq, sigma_clipped) = estimate_sigma_sq(summary.yy_hat, &beta, &h_hat, &sigma_z);
    if gamma_clipped > 0 || sigma_clipped {
        warn!("clipped {gamma_clipped} noise variances and sigma^2 clipped = {sigma_clipped}");
    }

    let competitors = if config.competitors {
        competitor_estimates(summary, &loadings, &sigma_z, &a_full, &tau_sq, dataset, cfg)
    } else {
        CompetitorEstimates::default()
    };

    let model = FittedModel {
        a_hat: a_full,
        sigma_z_hat: sigma_z,
        gamma_hat: gamma.as_slice().to_vec(),
        theta_hat: theta,
        beta_hat: beta.as_slice().to_vec(),
        sigma_sq_hat: sigma_sq,
        tau_sq_hat: tau_sq.as_slice().to_vec(),
        pure_signs: loadings.signs.clone(),
        partition,
        estimator_kind: EstimatorKind::Main,
        ridge_t,
        clip_counts: ClipCounts {
            gamma: gamma_clipped,
            sigma_sq: usize::from(sigma_clipped),
        },
        delta,
        n: summary.n,
        standardized: false,
        competitors,
    };
    Ok(FitOutput {
        model,
        loadings,
        h_hat,
        cv: None,
    })
}

fn competitor_estimates(
    summary: &CovarianceSummary,
    loadings: &PureLoadings,
    sigma_z: &DMatrix<f64>,
    a_full: &DMatrix<f64>,
    tau_sq: &DVector<f64>,
    dataset: Option<&Dataset>,
    cfg: &EstimationConfig,
) -> CompetitorEstimates {
    let keep = |name: &str, r: Result<DVector<f64>>| match r {
        Ok(v) => Some(v.as_slice().to_vec()),
        Err(e) => {
            warn!("{name} estimator failed: {e}");
            None
        }
    };
    let beta_a = match cfg.gamma_for_a {
        GammaForA::Diagonal => estimation::estimate_beta_a(
            a_full,
            &summary.sigma_hat,
            tau_sq,
            &summary.sigma_xy_hat,
        ),
        GammaForA::FullResidual => {
            estimation::estimate_beta_a_tilde(a_full, sigma_z, &summary.sigma_xy_hat)
        }
    };
    CompetitorEstimates {
        beta_a: keep("A-based", beta_a),
        beta_i: keep(
            "I-based",
            estimation::estimate_beta_i(sigma_z, loadings, &summary.sigma_xy_hat),
        ),
        beta_naive: dataset.and_then(|d| keep("naive", estimation::estimate_beta_naive(d, a_full))),
    }
}

/// Fits from second moments with a fixed delta.
pub fn fit_summary(
    summary: &CovarianceSummary,
    delta: f64,
    dataset: Option<&Dataset>,
    config: &FitConfig,
) -> Result<FitOutput> {
    let partition = pure_var(&summary.sigma_hat, delta)?;
    fit_with_partition(summary, partition, delta, dataset, config)
}

/// Full pipeline on raw data: centering (when needed), delta selection and
/// estimation.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<FitOutput> {
    let owned;
    let data = if dataset.centered {
        dataset
    } else {
        owned = center(dataset);
        &owned
    };
    let summary = sample_covariance(data)?;
    let (delta, cv) = match &config.delta {
        DeltaMode::Fixed(d) => {
            if !(*d >= 0.0) {
                return Err(EssRegError::InvalidInput("delta must be nonnegative".into()));
            }
            (*d, None)
        }
        DeltaMode::Cv { grid, seed } => {
            let grid = grid
                .clone()
                .unwrap_or_else(|| DeltaGrid::default_for(data.n(), data.p()));
            let report = cv_select_delta(data, &grid, *seed, config.exec)?;
            info!("cross-validation chose delta = {:.6}", report.chosen_delta);
            (report.chosen_delta, Some(report))
        }
    };
    let mut out = fit_summary(&summary, delta, Some(data), config)?;
    out.cv = cv;
    info!(
        "K_hat = {}, group sizes = {:?}, ridge t = {}",
        out.model.k_hat(),
        out.model.partition.group_sizes(),
        out.model.ridge_t
    );
    Ok(out)
}

/// Rebuilds the pure loadings and `h` of a stored model against (centered)
/// data, for inference on a saved fit.
pub fn restore(model: &FittedModel, summary: &CovarianceSummary) -> Result<FitOutput> {
    if summary.p() != model.p() {
        return Err(EssRegError::InvalidInput(format!(
            "model has p = {} but data has p = {}",
            model.p(),
            summary.p()
        )));
    }
    let loadings = PureLoadings {
        partition: model.partition.clone(),
        signs: model.pure_signs.clone(),
    };
    let h_hat = loadings.group_average(&summary.sigma_xy_hat);
    Ok(FitOutput {
        model: model.clone(),
        loadings,
        h_hat,
        cv: None,
    })
}
