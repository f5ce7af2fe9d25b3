//! Residual variance, plug-in asymptotic variances and confidence intervals.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{EssRegError, Result};
use crate::linalg;
use crate::model::{InferenceReport, PurePartition, VarianceFormula};

/// Largest relative spread `(max - min) / mean` tolerated by the formulas that
/// assume equal group sizes and a scalar noise variance.
pub const HOMOGENEITY_TOL: f64 = 0.10;

/// `yy - 2 beta'h + beta' Sigma_Z beta`, clipped at zero. The flag reports
/// whether clipping happened.
pub fn estimate_sigma_sq(
    yy_hat: f64,
    beta_hat: &DVector<f64>,
    h_hat: &DVector<f64>,
    sigma_z_hat: &DMatrix<f64>,
) -> (f64, bool) {
    let v = yy_hat - 2.0 * beta_hat.dot(h_hat) + beta_hat.dot(&(sigma_z_hat * beta_hat));
    (v.max(0.0), v < 0.0)
}

/// Simplified-formula variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplifiedMode {
    Full,
    LargeSignal,
}

/// How the I-based variance handles heterogeneous plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UkMode {
    /// Reject inputs that fail the homogeneity gate.
    #[default]
    Strict,
    /// Use the mean group size and the mean noise variance over the pure set.
    Pooled,
}

/// Plug-in quantities shared by every variance formula.
#[derive(Debug, Clone)]
pub struct VarianceInputs {
    pub theta_hat: DMatrix<f64>,
    pub sigma_z_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    /// `(Theta'Theta)^-1`
    pub gram_inv: DMatrix<f64>,
    /// `(Theta'Theta)^-1 Theta'`, K x p
    pub theta_plus: DMatrix<f64>,
    pub beta_hat: DVector<f64>,
    pub tau_sq_hat: DVector<f64>,
    pub sigma_sq_hat: f64,
    pub partition: PurePartition,
    pub h_hat: DVector<f64>,
}

impl VarianceInputs {
    pub fn new(
        theta_hat: DMatrix<f64>,
        sigma_z_hat: DMatrix<f64>,
        beta_hat: DVector<f64>,
        tau_sq_hat: DVector<f64>,
        sigma_sq_hat: f64,
        partition: PurePartition,
        h_hat: DVector<f64>,
    ) -> Result<Self> {
        let (p, k) = theta_hat.shape();
        if sigma_z_hat.shape() != (k, k)
            || beta_hat.len() != k
            || h_hat.len() != k
            || tau_sq_hat.len() != p
            || partition.k_hat() != k
            || partition.max_index().is_some_and(|i| i >= p)
        {
            return Err(EssRegError::InvalidInput(
                "variance inputs have inconsistent dimensions".into(),
            ));
        }
        partition.check_min_size()?;
        let omega_hat = linalg::inverse(&sigma_z_hat).ok_or(EssRegError::SingularSigmaZ)?;
        let mut gram = theta_hat.tr_mul(&theta_hat);
        linalg::symmetrize(&mut gram);
        let gram_inv = linalg::spd_inverse(&gram).ok_or(EssRegError::SingularGram)?;
        let theta_plus = &gram_inv * theta_hat.transpose();
        Ok(Self {
            theta_hat,
            sigma_z_hat,
            omega_hat,
            gram_inv,
            theta_plus,
            beta_hat,
            tau_sq_hat,
            sigma_sq_hat,
            partition,
            h_hat,
        })
    }

    pub fn k(&self) -> usize {
        self.beta_hat.len()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k >= self.k() {
            return Err(EssRegError::InvalidInput(format!(
                "coordinate {k} out of range for K = {}",
                self.k()
            )));
        }
        Ok(())
    }

    /// Common group size and noise variance when both pass the homogeneity
    /// gate (sizes over groups, noise variances over all coordinates).
    pub fn homogeneous_parameters(&self) -> Result<(f64, f64)> {
        let sizes: Vec<f64> = self
            .partition
            .group_sizes()
            .into_iter()
            .map(|s| s as f64)
            .collect();
        let m = spread_checked(&sizes, "group sizes")?;
        let tau = spread_checked(self.tau_sq_hat.as_slice(), "noise variances")?;
        Ok((m, tau))
    }

    /// Mean group size and mean noise variance over the pure set.
    pub fn pooled_parameters(&self) -> (f64, f64) {
        let groups = self.partition.groups();
        let total: usize = groups.iter().map(|g| g.len()).sum();
        let m = total as f64 / groups.len() as f64;
        let tau = groups
            .iter()
            .flatten()
            .map(|&i| self.tau_sq_hat[i])
            .sum::<f64>()
            / total as f64;
        (m, tau)
    }

    /// `sum_{i in group} (Theta+_{k i})^2`
    fn theta_plus_group_sq(&self, k: usize, group: &[usize]) -> f64 {
        group.iter().map(|&i| self.theta_plus[(k, i)].powi(2)).sum()
    }
}

fn spread_checked(values: &[f64], what: &str) -> Result<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if mean > 0.0 {
        (max - min) / mean
    } else if max == min {
        0.0
    } else {
        f64::INFINITY
    };
    if spread > HOMOGENEITY_TOL {
        return Err(EssRegError::HeterogeneousInputs(format!(
            "{what} spread {spread:.3} exceeds {HOMOGENEITY_TOL}; use the general formula"
        )));
    }
    Ok(mean)
}

/// Plug-in asymptotic variance of `sqrt(n) beta_hat_k` with per-coordinate
/// noise variances and arbitrary group sizes.
pub fn variance_vk_general(inputs: &VarianceInputs, k: usize) -> Result<f64> {
    inputs.check_k(k)?;
    let groups = inputs.partition.groups();
    let tau = &inputs.tau_sq_hat;
    let beta = &inputs.beta_hat;

    let mut first = inputs.sigma_sq_hat;
    for (l, g) in groups.iter().enumerate() {
        let m = g.len() as f64;
        let s: f64 = g.iter().map(|&i| tau[i]).sum();
        first += beta[l].powi(2) * s / (m * m);
    }

    let row = inputs.theta_plus.row(k);
    let noise: f64 = row.iter().zip(tau.iter()).map(|(t, g)| t * t * g).sum();
    let second = inputs.omega_hat[(k, k)] + noise;

    let mut correction = 0.0;
    for (l, g) in groups.iter().enumerate() {
        let m = g.len() as f64;
        let s: f64 = g.iter().map(|&i| tau[i]).sum();
        let inner: f64 = g
            .iter()
            .map(|&i| tau[i] * ((s - tau[i]) / ((m - 1.0) * (m - 1.0)) - s / (m * m)))
            .sum();
        let delta_tau = beta[l].powi(2) * inner;
        correction += delta_tau / m * inputs.theta_plus_group_sq(k, g);
    }
    Ok(first * second + correction)
}

/// Plug-in variance assuming equal group sizes and a scalar noise variance.
pub fn variance_vk_simplified(
    inputs: &VarianceInputs,
    k: usize,
    mode: SimplifiedMode,
) -> Result<f64> {
    inputs.check_k(k)?;
    let (m, tau) = inputs.homogeneous_parameters()?;
    let beta = &inputs.beta_hat;
    let lead = inputs.sigma_sq_hat + tau * beta.norm_squared() / m;
    let omega_kk = inputs.omega_hat[(k, k)];
    match mode {
        SimplifiedMode::LargeSignal => Ok(lead * omega_kk),
        SimplifiedMode::Full => {
            let bracket = omega_kk + tau * inputs.gram_inv[(k, k)];
            let minor: f64 = inputs
                .partition
                .groups()
                .iter()
                .enumerate()
                .map(|(a, g)| beta[a].powi(2) * inputs.theta_plus_group_sq(k, g))
                .sum();
            Ok(lead * bracket + tau * tau / (m * (m - 1.0)) * minor)
        }
    }
}

/// Plug-in asymptotic variance of `sqrt(n) beta_I_k`.
pub fn variance_uk(inputs: &VarianceInputs, k: usize, mode: UkMode) -> Result<f64> {
    inputs.check_k(k)?;
    let (m, tau) = match mode {
        UkMode::Strict => inputs.homogeneous_parameters()?,
        UkMode::Pooled => inputs.pooled_parameters(),
    };
    let beta = &inputs.beta_hat;
    let omega = &inputs.omega_hat;
    let row_sq = omega.row(k).norm_squared();
    let lead = inputs.sigma_sq_hat + tau * beta.norm_squared() / m;
    let cross: f64 = (0..inputs.k())
        .map(|a| beta[a].powi(2) * omega[(k, a)].powi(2))
        .sum();
    Ok(lead * (omega[(k, k)] + tau * row_sq / m) + tau * tau / (m * m * (m - 1.0)) * cross)
}

/// Two-sided `z_{(1+level)/2}` normal quantile.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 * (1.0 + level))
}

/// Wald interval `beta_k +- z sqrt(variance / n)`.
pub fn confidence_interval(
    coordinate: usize,
    estimate: f64,
    variance: f64,
    n: usize,
    level: f64,
    formula: VarianceFormula,
) -> Result<InferenceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EssRegError::InvalidInput("level must lie in (0, 1)".into()));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(EssRegError::NonpositiveVariance(variance));
    }
    if n == 0 {
        return Err(EssRegError::InvalidInput("n must be positive".into()));
    }
    let std_error = (variance / n as f64).sqrt();
    let half = normal_quantile(level) * std_error;
    Ok(InferenceReport {
        coordinate,
        estimate,
        variance,
        std_error,
        z_stat: estimate / std_error,
        ci_lower: estimate - half,
        ci_upper: estimate + half,
        level,
        variance_formula: formula,
    })
}

/// Variance of coordinate `k` under `formula`. The I-based formula uses the
/// strict homogeneity gate.
pub fn variance(inputs: &VarianceInputs, k: usize, formula: VarianceFormula) -> Result<f64> {
    match formula {
        VarianceFormula::General => variance_vk_general(inputs, k),
        VarianceFormula::Simplified => variance_vk_simplified(inputs, k, SimplifiedMode::Full),
        VarianceFormula::LargeSignal => {
            variance_vk_simplified(inputs, k, SimplifiedMode::LargeSignal)
        }
        VarianceFormula::IBased => variance_uk(inputs, k, UkMode::Strict),
    }
}

/// Reports for every coordinate. `estimates` is the estimator the variance
/// belongs to (beta_hat, or the I-based estimate for [`VarianceFormula::IBased`]).
pub fn report_all(
    inputs: &VarianceInputs,
    estimates: &DVector<f64>,
    n: usize,
    level: f64,
    formula: VarianceFormula,
) -> Result<Vec<InferenceReport>> {
    (0..inputs.k())
        .map(|k| {
            let v = variance(inputs, k, formula)?;
            confidence_interval(k, estimates[k], v, n, level, formula)
        })
        .collect()
}
