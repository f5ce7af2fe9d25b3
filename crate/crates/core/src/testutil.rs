//! Shared fixtures for unit tests.

use nalgebra::{DMatrix, DVector};

use crate::model::SimulationTruth;

/// Five variables on two factors: two pure rows each plus one mixed row.
pub fn toy5_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5, 0.5])
}

pub fn toy5_sigma_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])
}

pub fn toy5_beta() -> DVector<f64> {
    DVector::from_column_slice(&[1.0, -2.0])
}

pub fn toy5_truth(gamma: f64) -> SimulationTruth {
    SimulationTruth {
        a_true: toy5_a(),
        sigma_z_true: toy5_sigma_z(),
        gamma_true: DVector::from_element(5, gamma),
        beta_true: toy5_beta(),
        sigma_sq_true: 0.25,
        partition_true: vec![vec![0, 1], vec![2, 3]],
        lambda_k: f64::NAN,
        rho_bar_sq: f64::NAN,
        assumption_holds: true,
    }
}

pub fn toy5_sigma(gamma: f64) -> DMatrix<f64> {
    toy5_truth(gamma).population_sigma()
}

pub fn toy5_sigma_xy() -> DVector<f64> {
    toy5_truth(0.1).population_sigma_xy()
}

#[test]
fn toy5_cross_covariance_by_hand() {
    let expected = DVector::from_column_slice(&[0.6, 0.6, -1.8, -1.8, -0.6]);
    assert!((toy5_sigma_xy() - expected).norm() < 1e-14);
}
