//! Linear-Gaussian motion and measurement models, PPP birth and uniform
//! clutter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{spd_inverse, symmetrize, InfoGaussian};
use crate::trajectory::{MixtureComponent, TrajectoryMixture};

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in [0, 1], got {p}")))
    }
}

/// `x_k = F x_{k-1} + q`, `q ~ N(0, Q)`, with constant survival probability.
#[derive(Debug, Clone)]
pub struct MotionModel {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub survival_prob: f64,
    q_inv: DMatrix<f64>,
}

impl MotionModel {
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>, survival_prob: f64) -> Result<Self> {
        if !f.is_square() || q.shape() != f.shape() {
            return Err(Error::Dimension("F and Q must be square and of equal size".into()));
        }
        check_probability(survival_prob, "survival probability")?;
        let q = symmetrize(&q);
        let q_inv = spd_inverse(&q, "process noise")?;
        Ok(Self {
            f,
            q,
            survival_prob,
            q_inv,
        })
    }

    /// Two-dimensional constant velocity model with state `[px, py, vx, vy]`
    /// driven by continuous white-noise acceleration of intensity `sigma_v^2`.
    pub fn constant_velocity(dt: f64, sigma_v: f64, survival_prob: f64) -> Result<Self> {
        let mut f = DMatrix::identity(4, 4);
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let s2 = sigma_v * sigma_v;
        let (a, b, c) = (s2 * dt.powi(3) / 3.0, s2 * dt.powi(2) / 2.0, s2 * dt);
        let mut q = DMatrix::zeros(4, 4);
        for i in 0..2 {
            q[(i, i)] = a;
            q[(i, i + 2)] = b;
            q[(i + 2, i)] = b;
            q[(i + 2, i + 2)] = c;
        }
        Self::new(f, q, survival_prob)
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }
}

/// `z = H x + r`, `r ~ N(0, R)`, with constant detection probability.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub detection_prob: f64,
    r_inv: DMatrix<f64>,
    htrh: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>, detection_prob: f64) -> Result<Self> {
        if !r.is_square() || r.nrows() != h.nrows() {
            return Err(Error::Dimension("R must be square with as many rows as H".into()));
        }
        check_probability(detection_prob, "detection probability")?;
        let r = symmetrize(&r);
        let r_inv = spd_inverse(&r, "measurement noise")?;
        let htrh = symmetrize(&(h.transpose() * &r_inv * &h));
        Ok(Self {
            h,
            r,
            detection_prob,
            r_inv,
            htrh,
        })
    }

    /// Position-only measurement of a `[px, py, vx, vy]` state.
    pub fn position(r: DMatrix<f64>, detection_prob: f64) -> Result<Self> {
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        Self::new(h, r, detection_prob)
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    /// `Hᵀ R⁻¹ H`.
    pub fn htrh(&self) -> &DMatrix<f64> {
        &self.htrh
    }

    /// `Hᵀ R⁻¹ z`.
    pub fn htrz(&self, z: &DVector<f64>) -> DVector<f64> {
        self.h.transpose() * (&self.r_inv * z)
    }
}

/// One Gaussian term of the birth intensity.
#[derive(Debug, Clone)]
pub struct BirthComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Per-step PPP birth intensity.
#[derive(Debug, Clone, Default)]
pub struct BirthModel {
    pub components: Vec<BirthComponent>,
}

impl BirthModel {
    pub fn new(components: Vec<BirthComponent>) -> Result<Self> {
        for c in &components {
            if !(c.weight >= 0.0) {
                return Err(Error::Config("birth weights must be nonnegative".into()));
            }
            if c.cov.nrows() != c.mean.len() || !c.cov.is_square() {
                return Err(Error::Dimension("birth covariance does not match its mean".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn total_rate(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Intensity of trajectories born at `k`: one single-step component
    /// with `(birth, end) = (k, k)` per birth term.
    pub fn birth_intensity_at(&self, k: usize) -> Result<TrajectoryMixture> {
        let mut out = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let g = InfoGaussian::from_moments(&c.mean, &c.cov)?;
            out.push(MixtureComponent::new(c.weight, k, k, g));
        }
        Ok(TrajectoryMixture::new(out))
    }
}

/// Uniform clutter over an axis-aligned box in measurement space.
#[derive(Debug, Clone)]
pub struct ClutterModel {
    /// Intensity per unit measurement volume.
    pub rate: f64,
    /// `(low, high)` per measurement dimension.
    pub region: Vec<(f64, f64)>,
}

impl ClutterModel {
    pub fn new(rate: f64, region: Vec<(f64, f64)>) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::Config("clutter rate must be nonnegative".into()));
        }
        if region.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("region bounds must be ordered".into()));
        }
        Ok(Self { rate, region })
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.len() == self.region.len() && self.region.iter().zip(z.iter()).all(|(&(lo, hi), &v)| lo <= v && v <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.region.iter().map(|&(lo, hi)| hi - lo).product()
    }

    /// Expected number of clutter measurements per scan.
    pub fn expected_count(&self) -> f64 {
        self.rate * self.volume()
    }

    pub fn clutter_density(&self, z: &DVector<f64>) -> f64 {
        if self.contains(z) {
            self.rate
        } else {
            0.0
        }
    }
}

/// Everything a tracker or the simulator needs to know about the world.
#[derive(Debug, Clone)]
pub struct Models {
    pub motion: MotionModel,
    pub measurement: MeasurementModel,
    pub birth: BirthModel,
    pub clutter: ClutterModel,
}

impl Models {
    pub fn validate(&self) -> Result<()> {
        let n = self.motion.dim();
        if self.measurement.state_dim() != n {
            return Err(Error::Dimension("measurement model and motion model disagree on the state size".into()));
        }
        if self.clutter.region.len() != self.measurement.meas_dim() {
            return Err(Error::Dimension("clutter region does not match the measurement size".into()));
        }
        if self.birth.components.iter().any(|c| c.mean.len() != n) {
            return Err(Error::Dimension("birth components do not match the state size".into()));
        }
        Ok(())
    }
}
