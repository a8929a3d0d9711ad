//! Random PMBM densities over trajectories for property tests.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pmbm_core::density::{Bernoulli, GlobalHypothesis, MeasurementRef, PmbmDensity, Track};
use pmbm_core::gaussian::InfoGaussian;
use pmbm_core::models::Models;
use pmbm_core::trajectory::{MixtureComponent, TrajectoryMixture};

/// Sizes of a random density.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub time: usize,
    pub max_tracks: usize,
    pub max_leaves: usize,
    pub max_components: usize,
    pub max_hypotheses: usize,
    /// Allow components that ended before `time`.
    pub dead: bool,
}

/// Gaussian over `birth..=end` under the motion model, started from a
/// random state and occasionally measured.
pub fn random_sequence(rng: &mut ChaCha8Rng, models: &Models, birth: usize, end: usize) -> InfoGaussian {
    let n = models.motion.dim();
    let mean = super::random_vector(rng, n, 20.0);
    let cov = super::random_spd(rng, n, 10.0);
    let mut g = InfoGaussian::from_moments(&mean, &cov).unwrap();
    let m = &models.measurement;
    for t in birth..=end {
        if t > birth {
            g = g.predict(&models.motion.f, models.motion.q_inv()).unwrap();
        }
        if rng.random_bool(0.7) {
            let z = m.h.clone() * g.marginal_last_step().unwrap().0 + super::random_vector(rng, m.meas_dim(), 2.0);
            g = g.update(&m.h, m.r_inv(), &z).unwrap();
        }
    }
    g
}

/// Normalized mixture with distinct `(birth, end)` keys.
pub fn random_mixture(rng: &mut ChaCha8Rng, models: &Models, k: usize, count: usize, dead: bool) -> TrajectoryMixture {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for _ in 0..count * 4 {
        if keys.len() == count {
            break;
        }
        let end = if dead { rng.random_range(0..=k) } else { k };
        let birth = rng.random_range(0..=end);
        if !keys.contains(&(birth, end)) {
            keys.push((birth, end));
        }
    }
    let raw: Vec<f64> = keys.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    TrajectoryMixture::new(
        keys.iter()
            .zip(&raw)
            .map(|(&(b, e), w)| MixtureComponent::new(w / sum, b, e, random_sequence(rng, models, b, e)))
            .collect(),
    )
}

pub fn random_leaf(rng: &mut ChaCha8Rng, models: &Models, shape: &Shape, id: MeasurementRef) -> Bernoulli {
    let log_weight = rng.random_range(-4.0..0.0);
    if rng.random_bool(0.15) {
        let mut b = Bernoulli::non_existent();
        b.log_weight = log_weight;
        return b;
    }
    let count = rng.random_range(1..=shape.max_components);
    Bernoulli {
        existence: if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.01..1.0) },
        density: random_mixture(rng, models, shape.time, count, shape.dead),
        history: vec![id],
        log_weight,
    }
}

/// A density at `shape.time` with random tracks, leaves and normalized
/// global hypotheses over distinct leaf vectors.
pub fn random_density(rng: &mut ChaCha8Rng, models: &Models, shape: &Shape) -> PmbmDensity {
    let k = shape.time;
    let mut d = PmbmDensity::empty();
    d.time = Some(k);
    let n_undetected = rng.random_range(0..=3);
    d.undetected = TrajectoryMixture::new(
        (0..n_undetected)
            .map(|_| {
                let end = if shape.dead { rng.random_range(0..=k) } else { k };
                let birth = rng.random_range(0..=end);
                MixtureComponent::new(rng.random_range(0.001..0.5), birth, end, random_sequence(rng, models, birth, end))
            })
            .collect(),
    );
    let n_tracks = rng.random_range(0..=shape.max_tracks);
    for i in 0..n_tracks {
        let id = MeasurementRef::new(0, i);
        let leaves = rng.random_range(1..=shape.max_leaves);
        d.tracks.push(Track {
            id,
            leaves: (0..leaves).map(|_| random_leaf(rng, models, shape, id)).collect(),
        });
    }
    let mut vectors: Vec<Vec<usize>> = Vec::new();
    for _ in 0..shape.max_hypotheses * 4 {
        if vectors.len() == shape.max_hypotheses {
            break;
        }
        let v: Vec<usize> = d.tracks.iter().map(|t| rng.random_range(0..t.leaves.len())).collect();
        if !vectors.contains(&v) {
            vectors.push(v);
        }
    }
    vectors.shuffle(rng);
    d.hypotheses = vectors
        .into_iter()
        .map(|leaves| GlobalHypothesis {
            log_weight: rng.random_range(-3.0..0.0),
            leaves,
        })
        .collect();
    d.normalize();
    d
}

pub fn random_scan(rng: &mut ChaCha8Rng, models: &Models, max: usize) -> Vec<DVector<f64>> {
    let m = rng.random_range(0..=max);
    (0..m).map(|_| super::random_vector(rng, models.measurement.meas_dim(), 25.0)).collect()
}
