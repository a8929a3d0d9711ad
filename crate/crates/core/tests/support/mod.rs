//! Independent oracles and random generators shared by the integration
//! tests. Everything here works in covariance form with dense matrices and
//! shares no numerical code with the library.

#![allow(dead_code)]

/// Declares each check as a test and lists them all for the acceptance
/// runner, which calls the same functions outside the test harness.
#[allow(unused_macros)]
macro_rules! checks {
    ($($name:ident),* $(,)?) => {
        #[allow(dead_code)]
        pub fn checks() -> Vec<(&'static str, fn())> {
            vec![$((stringify!($name), $name as fn())),*]
        }

        #[cfg(test)]
        mod tests {
            $(
                #[test]
                fn $name() {
                    super::$name()
                }
            )*
        }
    };
}

pub mod bayes;
pub mod dense;
pub mod random_density;
pub mod target_filter;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmbm_core::models::{BirthComponent, BirthModel, ClutterModel, MeasurementModel, Models, MotionModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * normal(rng))
}

/// Random symmetric positive definite matrix with eigenvalues of order
/// `scale`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n, 1.0);
    (&a * a.transpose() / n as f64 + DMatrix::identity(n, n)) * scale
}

pub fn gaussian_pdf(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = z.len() as f64;
    let d = z - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let q = (d.transpose() * inv * &d)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(n) * cov.determinant()).sqrt()
}

pub fn log_gaussian_pdf(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = z.len() as f64;
    let d = z - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let q = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (q + cov.determinant().ln() + n * (2.0 * std::f64::consts::PI).ln())
}

/// Constant velocity models over a `[-half, half]^2` region.
pub fn cv_models(ps: f64, pd: f64, clutter_rate: f64, half: f64, births: &[(f64, [f64; 4], f64)]) -> Models {
    Models {
        motion: MotionModel::constant_velocity(1.0, 1.0, ps).unwrap(),
        measurement: MeasurementModel::position(DMatrix::identity(2, 2) * 4.0, pd).unwrap(),
        birth: BirthModel::new(
            births
                .iter()
                .map(|&(w, m, s)| BirthComponent {
                    weight: w,
                    mean: DVector::from_row_slice(&m),
                    cov: DMatrix::from_diagonal(&DVector::from_vec(vec![s * s, s * s, 1.0, 1.0])),
                })
                .collect(),
        )
        .unwrap(),
        clutter: ClutterModel::new(clutter_rate, vec![(-half, half), (-half, half)]).unwrap(),
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn matrix_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| close(*x, *y, tol))
}

pub fn vector_close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| close(*x, *y, tol))
}
