//! Shared domain types and the covariance primitives every stage consumes.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EssRegError, Result};

/// Observed design `x` (n x p) and response `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub centered: bool,
    /// Column names of `x`, when the data came from a file.
    pub feature_names: Option<Vec<String>>,
    pub response_name: Option<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(EssRegError::InvalidInput(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 || x.ncols() < 2 {
            return Err(EssRegError::InvalidInput(format!(
                "need n >= 2 and p >= 2, got n = {}, p = {}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(EssRegError::InvalidInput("non-finite value in data".into()));
        }
        Ok(Self {
            x,
            y,
            centered: false,
            feature_names: None,
            response_name: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Keeps only the given rows, in order. The result is not centered.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        Dataset {
            x,
            y,
            centered: false,
            feature_names: self.feature_names.clone(),
            response_name: self.response_name.clone(),
        }
    }

    /// Checks the centered flag against the data: every column mean must be
    /// within 1e-10 of zero relative to the column scale.
    pub fn is_mean_zero(&self) -> bool {
        let n = self.n() as f64;
        let col_ok = |c: nalgebra::DVectorView<f64>| {
            let mean = c.sum() / n;
            let scale = c.amax().max(1.0);
            mean.abs() <= 1e-10 * scale
        };
        self.x.column_iter().all(|c| col_ok(c.into())) && col_ok(self.y.column(0).into())
    }
}

/// What [`center_with_report`] found while centering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CenterReport {
    pub constant_columns: Vec<usize>,
    pub constant_response: bool,
}

/// Subtracts column means from `x` and `y`.
pub fn center(dataset: &Dataset) -> Dataset {
    center_with_report(dataset).0
}

pub fn center_with_report(dataset: &Dataset) -> (Dataset, CenterReport) {
    let n = dataset.n() as f64;
    let mut out = dataset.clone();
    let mut report = CenterReport::default();
    for (j, mut col) in out.x.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        if col.iter().all(|&v| v == 0.0) {
            report.constant_columns.push(j);
        }
    }
    let ymean = out.y.sum() / n;
    out.y.add_scalar_mut(-ymean);
    report.constant_response = out.y.iter().all(|&v| v == 0.0);
    for &j in &report.constant_columns {
        warn!("column {j} is constant; it is identically zero after centering");
    }
    if report.constant_response {
        warn!("response is constant; it is identically zero after centering");
    }
    out.centered = true;
    (out, report)
}

/// Rescales every column of `x` to unit variance (divisor n). Constant
/// columns are left untouched. Centers first if needed.
pub fn standardize(dataset: &Dataset) -> Dataset {
    let mut out = if dataset.centered {
        dataset.clone()
    } else {
        center(dataset)
    };
    let n = out.n() as f64;
    for mut col in out.x.column_iter_mut() {
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col.scale_mut(1.0 / sd);
        }
    }
    out
}

/// Sample second moments of a centered dataset, all with divisor `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    /// n^-1 X'X
    pub sigma_hat: DMatrix<f64>,
    /// n^-1 X'y
    pub sigma_xy_hat: DVector<f64>,
    /// n^-1 y'y
    pub yy_hat: f64,
    pub n: usize,
}

impl CovarianceSummary {
    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }
}

pub fn sample_covariance(dataset: &Dataset) -> Result<CovarianceSummary> {
    if !dataset.centered {
        return Err(EssRegError::InvalidInput(
            "sample_covariance requires a centered dataset".into(),
        ));
    }
    let n = dataset.n() as f64;
    let mut sigma_hat = dataset.x.tr_mul(&dataset.x) / n;
    // tr_mul is symmetric only up to rounding
    let p = sigma_hat.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = sigma_hat[(i, j)];
            sigma_hat[(j, i)] = v;
        }
    }
    let sigma_xy_hat = dataset.x.tr_mul(&dataset.y) / n;
    let yy_hat = dataset.y.norm_squared() / n;
    Ok(CovarianceSummary {
        sigma_hat,
        sigma_xy_hat,
        yy_hat,
        n: dataset.n(),
    })
}

/// `c * sqrt(log(max(p, n)) / n)`.
pub fn delta_default(n: usize, p: usize, c: f64) -> f64 {
    delta_rate(n as f64, p as f64) * c
}

pub(crate) fn delta_rate(n: f64, p: f64) -> f64 {
    (n.max(p).ln() / n).sqrt()
}

/// Estimated number of factors and the ordered pure-variable groups.
///
/// Groups are kept in discovery order; indices inside a group are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PurePartition {
    groups: Vec<Vec<usize>>,
}

impl PurePartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut groups = groups;
        let mut seen = std::collections::HashSet::new();
        for g in groups.iter_mut() {
            if g.is_empty() {
                return Err(EssRegError::InvariantViolation);
            }
            g.sort_unstable();
            for &i in g.iter() {
                if !seen.insert(i) {
                    return Err(EssRegError::InvalidInput(format!(
                        "index {i} appears in more than one group"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn k_hat(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Union of all groups, ascending.
    pub fn pure_set(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.groups.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Group index of every variable in `0..p`, `None` for non-pure ones.
    pub fn membership(&self, p: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; p];
        for (k, g) in self.groups.iter().enumerate() {
            for &i in g {
                if i < p {
                    out[i] = Some(k);
                }
            }
        }
        out
    }

    pub fn max_index(&self) -> Option<usize> {
        self.groups.iter().flatten().copied().max()
    }

    pub fn check_min_size(&self) -> Result<()> {
        match self.groups.iter().position(|g| g.len() < 2) {
            Some(k) => Err(EssRegError::GroupTooSmall(k)),
            None => Ok(()),
        }
    }
}

/// Which estimator produced `beta_hat` in a [`FittedModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Main,
    ABased,
    IBased,
    Naive,
    Oracle,
}

/// Number of negative plug-in variances that were clipped to zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipCounts {
    pub gamma: usize,
    pub sigma_sq: usize,
}

/// Competitor estimates computed alongside the main fit. `None` when that
/// estimator failed (the failure is logged, the fit itself still succeeds).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompetitorEstimates {
    pub beta_a: Option<Vec<f64>>,
    pub beta_i: Option<Vec<f64>>,
    pub beta_naive: Option<Vec<f64>>,
}

/// Everything produced by a fit. Matrices serialize as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    #[serde(with = "rows")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub sigma_z_hat: DMatrix<f64>,
    /// Diagonal of Gamma-hat restricted to the pure set (zero elsewhere).
    pub gamma_hat: Vec<f64>,
    #[serde(with = "rows")]
    pub theta_hat: DMatrix<f64>,
    pub beta_hat: Vec<f64>,
    pub sigma_sq_hat: f64,
    /// Noise variances for every coordinate, from the full loading matrix.
    pub tau_sq_hat: Vec<f64>,
    pub partition: PurePartition,
    /// Sign (+1/-1) of the pure loading for each variable, 0 for non-pure.
    pub pure_signs: Vec<f64>,
    pub estimator_kind: EstimatorKind,
    pub ridge_t: f64,
    pub clip_counts: ClipCounts,
    pub delta: f64,
    pub n: usize,
    /// Columns of x were scaled to unit variance before fitting.
    #[serde(default)]
    pub standardized: bool,
    pub competitors: CompetitorEstimates,
}

impl FittedModel {
    pub fn k_hat(&self) -> usize {
        self.partition.k_hat()
    }

    pub fn p(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        let p = m.a_hat.nrows();
        let k = m.a_hat.ncols();
        let consistent = m.sigma_z_hat.shape() == (k, k)
            && m.theta_hat.shape() == (p, k)
            && m.beta_hat.len() == k
            && m.gamma_hat.len() == p
            && m.tau_sq_hat.len() == p
            && m.pure_signs.len() == p
            && m.partition.k_hat() == k
            && m.partition.max_index().map_or(true, |i| i < p);
        if !consistent {
            return Err(EssRegError::Parse(
                "model dimensions are inconsistent".into(),
            ));
        }
        Ok(m)
    }
}

/// Selects the variance formula behind an [`InferenceReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceFormula {
    General,
    Simplified,
    LargeSignal,
    IBased,
}

impl VarianceFormula {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceFormula::General => "general",
            VarianceFormula::Simplified => "simplified",
            VarianceFormula::LargeSignal => "large-signal",
            VarianceFormula::IBased => "i-based",
        }
    }
}

impl std::str::FromStr for VarianceFormula {
    type Err = EssRegError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Self::General),
            "simplified" => Ok(Self::Simplified),
            "large-signal" => Ok(Self::LargeSignal),
            "i-based" => Ok(Self::IBased),
            other => Err(EssRegError::InvalidInput(format!(
                "unknown variance formula '{other}'"
            ))),
        }
    }
}

/// Per-coordinate inference summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub coordinate: usize,
    pub estimate: f64,
    pub variance: f64,
    pub std_error: f64,
    pub z_stat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub variance_formula: VarianceFormula,
}

impl InferenceReport {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }

    pub fn length(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }
}

/// Ground truth behind a simulated dataset, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub a_true: DMatrix<f64>,
    pub sigma_z_true: DMatrix<f64>,
    pub gamma_true: DVector<f64>,
    pub beta_true: DVector<f64>,
    pub sigma_sq_true: f64,
    /// Pure rows per factor. Groups may be shorter than 2 (or empty) when
    /// weak-column thinning removed pure loadings.
    pub partition_true: Vec<Vec<usize>>,
    /// K-th eigenvalue of A Sigma_Z A'.
    pub lambda_k: f64,
    pub rho_bar_sq: f64,
    /// True when every factor still has at least two pure rows.
    pub assumption_holds: bool,
}

impl SimulationTruth {
    pub fn k(&self) -> usize {
        self.a_true.ncols()
    }

    pub fn p(&self) -> usize {
        self.a_true.nrows()
    }

    /// A Sigma_Z A' + diag(Gamma).
    pub fn population_sigma(&self) -> DMatrix<f64> {
        let mut s = &self.a_true * &self.sigma_z_true * self.a_true.transpose();
        for i in 0..self.p() {
            s[(i, i)] += self.gamma_true[i];
        }
        s
    }

    /// Cov(X, Y) = A Sigma_Z beta.
    pub fn population_sigma_xy(&self) -> DVector<f64> {
        &self.a_true * &self.sigma_z_true * &self.beta_true
    }

    /// Var(Y) = beta' Sigma_Z beta + sigma^2.
    pub fn population_yy(&self) -> f64 {
        (self.beta_true.transpose() * &self.sigma_z_true * &self.beta_true)[(0, 0)]
            + self.sigma_sq_true
    }

    /// The population second moments packaged like a sample summary.
    pub fn population_summary(&self, n: usize) -> CovarianceSummary {
        CovarianceSummary {
            sigma_hat: self.population_sigma(),
            sigma_xy_hat: self.population_sigma_xy(),
            yy_hat: self.population_yy(),
            n,
        }
    }

    /// Sign of the pure loading for each row (0 for non-pure rows).
    pub fn pure_signs(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.p()];
        for (k, g) in self.partition_true.iter().enumerate() {
            for &i in g {
                s[i] = self.a_true[(i, k)].signum();
            }
        }
        s
    }
}

pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(
            nrows,
            ncols,
            rows.into_iter().flatten(),
        ))
    }
}
