//! Covariance-form Kalman filter and Rauch-Tung-Striebel smoother.

use nalgebra::{DMatrix, DVector};

/// What happens at one time step of a linear-Gaussian state-space model.
/// The first step has no transition.
#[derive(Debug, Clone)]
pub struct Step {
    pub transition: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// `(H, R, z)` applied in order.
    pub updates: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>,
}

pub struct Smoothed {
    pub filtered: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub smoothed_means: Vec<DVector<f64>>,
}

pub fn kalman_predict(m: &DVector<f64>, p: &DMatrix<f64>, f: &DMatrix<f64>, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (f * m, f * p * f.transpose() + q)
}

pub fn kalman_update(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = h * p * h.transpose() + r;
    let k = p * h.transpose() * s.try_inverse().expect("invertible innovation covariance");
    let m = m + &k * (z - h * m);
    let n = p.nrows();
    let p = (DMatrix::identity(n, n) - &k * h) * p;
    let p = (&p + p.transpose()) * 0.5;
    (m, p)
}

/// Forward filter and backward smoother over `steps`, starting from
/// `N(m0, p0)` at the first step.
pub fn rts(m0: &DVector<f64>, p0: &DMatrix<f64>, steps: &[Step]) -> Smoothed {
    let mut filtered = Vec::with_capacity(steps.len());
    let mut predicted = Vec::with_capacity(steps.len());
    let (mut m, mut p) = (m0.clone(), p0.clone());
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            let (f, q) = s.transition.as_ref().expect("transition after the first step");
            (m, p) = kalman_predict(&m, &p, f, q);
        }
        predicted.push((m.clone(), p.clone()));
        for (h, r, z) in &s.updates {
            (m, p) = kalman_update(&m, &p, h, r, z);
        }
        filtered.push((m.clone(), p.clone()));
    }
    let n = steps.len();
    let mut smoothed_means = vec![DVector::zeros(m0.len()); n];
    smoothed_means[n - 1] = filtered[n - 1].0.clone();
    for i in (0..n - 1).rev() {
        let (f, _) = steps[i + 1].transition.as_ref().unwrap();
        let (mf, pf) = &filtered[i];
        let (mp, pp) = &predicted[i + 1];
        let g = pf * f.transpose() * pp.clone().try_inverse().expect("invertible prediction");
        smoothed_means[i] = mf + g * (&smoothed_means[i + 1] - mp);
    }
    Smoothed {
        filtered,
        smoothed_means,
    }
}
