//! Plug-in estimation of the factor covariance, loadings, Theta and beta,
//! plus the competitor estimators used for comparison.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EssRegError, Result};
use crate::linalg;
use crate::lp;
use crate::model::{delta_rate, Dataset, PurePartition};
use crate::par::Execution;

/// How the anchor row of each pure group is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorRule {
    /// Smallest index in the group.
    #[default]
    FirstIndex,
    /// Uniformly at random under the configured seed.
    SeededRandom,
}

/// Noise covariance used by the A-based competitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaForA {
    /// Diagonal plug-in `Sigma_ii - A_i' Sigma_Z A_i`, clipped at zero.
    #[default]
    Diagonal,
    /// Full residual `Sigma - A Sigma_Z A'`; collapses to `Sigma_Z^-1 (A'A)^-1 A' Sigma_xy`.
    FullResidual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    /// Ridge added to Theta'Theta when it is ill-conditioned; 0 selects the
    /// automatic value `1e-8 * trace / K`.
    pub ridge_t: f64,
    pub cond_threshold: f64,
    pub dantzig_c: f64,
    pub anchor_rule: AnchorRule,
    pub rng_seed: u64,
    pub gamma_for_a: GammaForA,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            ridge_t: 0.0,
            cond_threshold: 1e10,
            dantzig_c: 0.5,
            anchor_rule: AnchorRule::FirstIndex,
            rng_seed: 0,
            gamma_for_a: GammaForA::Diagonal,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_t >= 0.0) {
            return Err(EssRegError::InvalidInput("ridge_t must be >= 0".into()));
        }
        if !(self.cond_threshold > 1.0) {
            return Err(EssRegError::InvalidInput("cond_threshold must exceed 1".into()));
        }
        if !(self.dantzig_c > 0.0) {
            return Err(EssRegError::InvalidInput("dantzig_c must be positive".into()));
        }
        Ok(())
    }
}

/// Signed unit loadings of the pure variables.
///
/// Row `i` of the pure block is `signs[i] * e_{group(i)}`; non-pure rows carry
/// sign 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PureLoadings {
    pub partition: PurePartition,
    pub signs: Vec<f64>,
}

impl PureLoadings {
    pub fn k(&self) -> usize {
        self.partition.k_hat()
    }

    pub fn p(&self) -> usize {
        self.signs.len()
    }

    /// The |I| x K block, rows ordered as [`PurePartition::pure_set`].
    pub fn matrix(&self) -> DMatrix<f64> {
        let pure = self.partition.pure_set();
        let member = self.partition.membership(self.p());
        let mut m = DMatrix::zeros(pure.len(), self.k());
        for (r, &i) in pure.iter().enumerate() {
            m[(r, member[i].expect("pure index"))] = self.signs[i];
        }
        m
    }

    /// p x K matrix with pure rows filled in and zeros elsewhere.
    pub fn full_rows(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p(), self.k());
        for (k, g) in self.partition.groups().iter().enumerate() {
            for &i in g {
                m[(i, k)] = self.signs[i];
            }
        }
        m
    }

    /// `(A_I'A_I)^-1 A_I' v_I`: signed group averages of a p-vector.
    pub fn group_average(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.k(),
            self.partition.groups().iter().map(|g| {
                g.iter().map(|&i| self.signs[i] * v[i]).sum::<f64>() / g.len() as f64
            }),
        )
    }
}

/// Picks an anchor per group and signs the remaining members by their
/// covariance with the anchor.
pub fn estimate_a_pure(
    sigma_hat: &DMatrix<f64>,
    partition: &PurePartition,
    anchor_rule: AnchorRule,
    rng_seed: u64,
) -> Result<PureLoadings> {
    let p = sigma_hat.nrows();
    if partition.max_index().is_some_and(|i| i >= p) {
        return Err(EssRegError::InvalidInput("partition index out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut signs = vec![0.0; p];
    for g in partition.groups() {
        let anchor = match anchor_rule {
            AnchorRule::FirstIndex => g[0],
            AnchorRule::SeededRandom => *g.choose(&mut rng).expect("nonempty group"),
        };
        signs[anchor] = 1.0;
        for &j in g.iter().filter(|&&j| j != anchor) {
            let s = sigma_hat[(anchor, j)];
            if s == 0.0 {
                return Err(EssRegError::ZeroCovariance(anchor, j));
            }
            signs[j] = s.signum();
        }
    }
    Ok(PureLoadings {
        partition: partition.clone(),
        signs,
    })
}

/// Factor covariance from within-group and between-group averages.
pub fn estimate_sigma_z(sigma_hat: &DMatrix<f64>, loadings: &PureLoadings) -> Result<DMatrix<f64>> {
    loadings.partition.check_min_size()?;
    let groups = loadings.partition.groups();
    let k = groups.len();
    let s = &loadings.signs;
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ga = &groups[a];
        let m = ga.len() as f64;
        let mut diag = 0.0;
        for &i in ga {
            for &j in ga {
                if i != j {
                    diag += sigma_hat[(i, j)].abs();
                }
            }
        }
        out[(a, a)] = diag / (m * (m - 1.0));
        for b in (a + 1)..k {
            let gb = &groups[b];
            let mut acc = 0.0;
            for &i in ga {
                for &j in gb {
                    acc += s[i] * s[j] * sigma_hat[(i, j)];
                }
            }
            let v = acc / (m * gb.len() as f64);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Noise variances of the pure variables; zero for non-pure coordinates.
/// Returns the vector and the number of negative values clipped to zero.
pub fn estimate_gamma_pure(
    sigma_hat: &DMatrix<f64>,
    sigma_z_hat: &DMatrix<f64>,
    loadings: &PureLoadings,
) -> (DVector<f64>, usize) {
    let mut gamma = DVector::zeros(loadings.p());
    let mut clipped = 0;
    for (k, g) in loadings.partition.groups().iter().enumerate() {
        for &i in g {
            // A_i = +-e_k, so the quadratic form is [Sigma_Z]_kk
            let v = sigma_hat[(i, i)] - sigma_z_hat[(k, k)];
            if v < 0.0 {
                clipped += 1;
            }
            gamma[i] = v.max(0.0);
        }
    }
    (gamma, clipped)
}

/// `Theta = (Sigma_{.I} - Gamma_{.I}) A_I (A_I'A_I)^-1`.
pub fn estimate_theta(
    sigma_hat: &DMatrix<f64>,
    gamma_hat: &DVector<f64>,
    loadings: &PureLoadings,
) -> DMatrix<f64> {
    let p = sigma_hat.nrows();
    let groups = loadings.partition.groups();
    let mut theta = DMatrix::zeros(p, groups.len());
    for (k, g) in groups.iter().enumerate() {
        let inv_m = 1.0 / g.len() as f64;
        let mut col = theta.column_mut(k);
        for &i in g {
            let s = loadings.signs[i] * inv_m;
            col.axpy(s, &sigma_hat.column(i), 1.0);
            col[i] -= s * gamma_hat[i];
        }
    }
    theta
}

/// `(Theta'Theta + t I)^-1 Theta' Sigma_xy`, with `t = 0` unless
/// Theta'Theta is ill-conditioned. Returns the estimate and the `t` applied.
pub fn estimate_beta(
    theta_hat: &DMatrix<f64>,
    sigma_xy_hat: &DVector<f64>,
    config: &EstimationConfig,
) -> Result<(DVector<f64>, f64)> {
    let (gram, t) = regularized_gram(theta_hat, config);
    let rhs = theta_hat.tr_mul(sigma_xy_hat);
    let beta = linalg::spd_solve(&gram, &rhs)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or(EssRegError::SingularAfterRidge(t))?;
    if t > 0.0 && linalg::spd_condition(&gram) > 1e15 {
        return Err(EssRegError::SingularAfterRidge(t));
    }
    Ok((beta, t))
}

/// Theta'Theta plus the ridge the fit would apply.
pub fn regularized_gram(theta_hat: &DMatrix<f64>, config: &EstimationConfig) -> (DMatrix<f64>, f64) {
    let mut gram = theta_hat.tr_mul(theta_hat);
    linalg::symmetrize(&mut gram);
    let k = gram.nrows();
    let cond = linalg::spd_condition(&gram);
    let t = if cond <= config.cond_threshold {
        0.0
    } else if config.ridge_t > 0.0 {
        config.ridge_t
    } else {
        1e-8 * gram.trace() / k as f64
    };
    if t > 0.0 {
        debug!("Theta'Theta condition {cond:.3e}; adding ridge t = {t:.3e}");
        for i in 0..k {
            gram[(i, i)] += t;
        }
    }
    (gram, t)
}

/// Dantzig-type estimate of the non-pure loading rows, stacked with the pure
/// rows into the full p x K loading matrix.
///
/// Row `j` solves `min ||b||_1` subject to
/// `||Sigma_Z b - (A_I'A_I)^-1 A_I' Sigma_{I j}||_inf <= c sqrt(log(p v n) / n)`.
pub fn estimate_a_nonpure_dantzig(
    sigma_z_hat: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    loadings: &PureLoadings,
    c: f64,
    n: usize,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    if !(c > 0.0) {
        return Err(EssRegError::InvalidInput("Dantzig constant must be positive".into()));
    }
    let p = sigma_hat.nrows();
    let radius = c * delta_rate(n as f64, p as f64);
    dantzig_rows(sigma_z_hat, sigma_hat, loadings, radius, exec)
}

/// Same as [`estimate_a_nonpure_dantzig`] with an explicit constraint radius.
pub fn dantzig_rows(
    sigma_z_hat: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    loadings: &PureLoadings,
    radius: f64,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    let p = sigma_hat.nrows();
    let member = loadings.partition.membership(p);
    let nonpure: Vec<usize> = (0..p).filter(|&j| member[j].is_none()).collect();
    let rows = exec.map_slice(&nonpure, |&j| {
        let target = loadings.group_average(&sigma_hat.column(j).into_owned());
        dantzig_solve(sigma_z_hat, &target, radius).map_err(|e| match e {
            lp::LpError::Unbounded => EssRegError::LpUnbounded(j),
            _ => EssRegError::LpInfeasible(j),
        })
    });
    let mut a = loadings.full_rows();
    for (&j, row) in nonpure.iter().zip(rows) {
        let row = row?;
        a.row_mut(j).copy_from(&row.transpose());
    }
    Ok(a)
}

/// `argmin ||b||_1  s.t.  ||S b - target||_inf <= radius`, as an LP in
/// `b = u - v` with `u, v >= 0`.
pub fn dantzig_solve(
    s: &DMatrix<f64>,
    target: &DVector<f64>,
    radius: f64,
) -> std::result::Result<DVector<f64>, lp::LpError> {
    let k = s.nrows();
    if target.iter().all(|&v| v.abs() <= radius) {
        return Ok(DVector::zeros(k));
    }
    let mut a = DMatrix::zeros(2 * k, 2 * k);
    let mut b = vec![0.0; 2 * k];
    for i in 0..k {
        for j in 0..k {
            let v = s[(i, j)];
            a[(i, j)] = v;
            a[(i, k + j)] = -v;
            a[(k + i, j)] = -v;
            a[(k + i, k + j)] = v;
        }
        b[i] = target[i] + radius;
        b[k + i] = radius - target[i];
    }
    let cost = vec![1.0; 2 * k];
    let sol = lp::minimize(&cost, &a, &b)?;
    Ok(DVector::from_iterator(k, (0..k).map(|i| sol.x[i] - sol.x[k + i])))
}

/// Noise variances `Sigma_ii - A_i' Sigma_Z A_i` for every coordinate,
/// clipped at zero. Returns the vector and the clip count.
pub fn estimate_tau_sq(
    sigma_hat: &DMatrix<f64>,
    a_full: &DMatrix<f64>,
    sigma_z_hat: &DMatrix<f64>,
) -> (DVector<f64>, usize) {
    let p = sigma_hat.nrows();
    let az = a_full * sigma_z_hat;
    let mut clipped = 0;
    let tau = DVector::from_iterator(
        p,
        (0..p).map(|i| {
            let v = sigma_hat[(i, i)] - az.row(i).dot(&a_full.row(i));
            if v < 0.0 {
                clipped += 1;
            }
            v.max(0.0)
        }),
    );
    (tau, clipped)
}

/// `[B'(Sigma - Gamma)B]^-1 B' Sigma_xy` with `B = A(A'A)^-1`.
pub fn estimate_beta_a(
    a_full: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    tau_sq: &DVector<f64>,
    sigma_xy_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ata = a_full.tr_mul(a_full);
    let ata_inv = linalg::inverse(&ata).ok_or(EssRegError::SingularGram)?;
    let b = a_full * ata_inv;
    let mut resid = sigma_hat.clone();
    for i in 0..resid.nrows() {
        resid[(i, i)] -= tau_sq[i];
    }
    let mut inner = b.tr_mul(&(resid * &b));
    linalg::symmetrize(&mut inner);
    let rhs = b.tr_mul(sigma_xy_hat);
    inner
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or(EssRegError::SingularInner)
}

/// `Sigma_Z^-1 (A'A)^-1 A' Sigma_xy`, the A-based estimate when Gamma is the
/// full residual `Sigma - A Sigma_Z A'`.
pub fn estimate_beta_a_tilde(
    a_full: &DMatrix<f64>,
    sigma_z_hat: &DMatrix<f64>,
    sigma_xy_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ata = a_full.tr_mul(a_full);
    let h = ata
        .lu()
        .solve(&a_full.tr_mul(sigma_xy_hat))
        .ok_or(EssRegError::SingularGram)?;
    sigma_z_hat
        .clone()
        .lu()
        .solve(&h)
        .ok_or(EssRegError::SingularSigmaZ)
}

/// `Sigma_Z^-1 (A_I'A_I)^-1 A_I' Sigma_{I,y}`.
pub fn estimate_beta_i(
    sigma_z_hat: &DMatrix<f64>,
    loadings: &PureLoadings,
    sigma_xy_hat: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = loadings.group_average(sigma_xy_hat);
    let (min, _) = linalg::sym_eig_range(sigma_z_hat);
    if !(min > 0.0) {
        return Err(EssRegError::SingularSigmaZ);
    }
    linalg::spd_solve(sigma_z_hat, &h).ok_or(EssRegError::SingularSigmaZ)
}

/// OLS of y on the weighted cluster averages `X A (A'A)^-1`.
pub fn estimate_beta_naive(dataset: &Dataset, a_full: &DMatrix<f64>) -> Result<DVector<f64>> {
    let ata = a_full.tr_mul(a_full);
    let ata_inv = linalg::inverse(&ata).ok_or(EssRegError::SingularGram)?;
    let xbar = &dataset.x * (a_full * ata_inv);
    linalg::ols(&xbar, &dataset.y).ok_or(EssRegError::SingularGram)
}

/// OLS of y on the latent factors themselves.
pub fn estimate_beta_oracle(z_true: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    linalg::ols(z_true, y).ok_or(EssRegError::SingularGram)
}

/// Best linear predictor of the factors: `X Theta (Theta' Sigma Theta)^-1 Theta'Theta`.
pub fn predict_z_blp(
    dataset: &Dataset,
    theta_hat: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut middle = theta_hat.tr_mul(&(sigma_hat * theta_hat));
    linalg::symmetrize(&mut middle);
    let (min, max) = linalg::sym_eig_range(&middle);
    if !(min > max * 1e-14) {
        return Err(EssRegError::SingularMiddle);
    }
    let middle_inv = linalg::spd_inverse(&middle).ok_or(EssRegError::SingularMiddle)?;
    Ok(&dataset.x * theta_hat * middle_inv * theta_hat.tr_mul(theta_hat))
}
