//! Single trajectories and mixture densities over trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::InfoGaussian;

/// A trajectory: birth time, end time and one state per step in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub birth_time: usize,
    pub end_time: usize,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(birth_time: usize, states: Vec<DVector<f64>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Dimension("a trajectory needs at least one state".into()));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("trajectory states differ in dimension".into()));
        }
        Ok(Self {
            birth_time,
            end_time: birth_time + states.len() - 1,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn exists_at(&self, t: usize) -> bool {
        self.birth_time <= t && t <= self.end_time
    }

    pub fn state_at(&self, t: usize) -> Option<&DVector<f64>> {
        if self.exists_at(t) {
            self.states.get(t - self.birth_time)
        } else {
            None
        }
    }

    /// The part of the trajectory inside `[from, to]`, if any.
    pub fn clip(&self, from: usize, to: usize) -> Option<Trajectory> {
        let b = self.birth_time.max(from);
        let e = self.end_time.min(to);
        if b > e {
            return None;
        }
        let states = self.states[b - self.birth_time..=e - self.birth_time].to_vec();
        Some(Trajectory {
            birth_time: b,
            end_time: e,
            states,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.birth_time <= self.end_time
            && self.states.len() == self.end_time - self.birth_time + 1
            && self.states.iter().all(|s| s.len() == self.dim())
    }
}

/// One term of a trajectory mixture: a weight, a `(birth, end)` pair and a
/// Gaussian over the state sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub birth_time: usize,
    pub end_time: usize,
    pub gaussian: InfoGaussian,
}

impl MixtureComponent {
    pub fn new(weight: f64, birth_time: usize, end_time: usize, gaussian: InfoGaussian) -> Self {
        Self {
            weight,
            birth_time,
            end_time,
            gaussian,
        }
    }

    /// Whether the trajectory is still going at time `k`.
    pub fn is_live(&self, k: usize) -> bool {
        self.end_time == k
    }

    /// First time step covered by the sequence density. Equals the birth
    /// time unless the sequence was truncated to a window.
    pub fn window_start(&self) -> usize {
        self.end_time + 1 - self.gaussian.len()
    }

    pub fn key(&self) -> (usize, usize) {
        (self.birth_time, self.end_time)
    }
}

/// How a mixture is interpreted when pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureKind {
    /// A probability density: weights sum to one.
    Density,
    /// A PPP intensity: nonnegative weights with free total mass.
    Intensity,
}

/// Weighted mixture over `(birth, end)` pairs with Gaussian sequence
/// densities. Used both for Bernoulli densities and for PPP intensities.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryMixture {
    pub components: Vec<MixtureComponent>,
}

impl TrajectoryMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Self {
        Self { components }
    }

    pub fn single(gaussian: InfoGaussian, birth_time: usize, end_time: usize) -> Self {
        Self::new(vec![MixtureComponent::new(1.0, birth_time, end_time, gaussian)])
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// Set integral of the mixture: the sum of its weights, since every
    /// sequence density integrates to one.
    pub fn set_integral_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Total weight of components still alive at `k`.
    pub fn live_weight(&self, k: usize) -> f64 {
        self.components.iter().filter(|c| c.is_live(k)).map(|c| c.weight).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.set_integral_weight() - 1.0).abs() <= tol
    }

    /// Rescales weights to sum to one. Returns the previous total.
    pub fn normalize(&mut self) -> f64 {
        let total = self.set_integral_weight();
        if total > 0.0 {
            for c in &mut self.components {
                c.weight /= total;
            }
        }
        total
    }

    pub fn has_distinct_keys(&self) -> bool {
        let mut keys: Vec<_> = self.components.iter().map(|c| c.key()).collect();
        keys.sort_unstable();
        keys.windows(2).all(|w| w[0] != w[1])
    }

    /// Index of the highest-weight component; earliest index wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.components.iter().enumerate() {
            if best.is_none_or(|b| c.weight > self.components[b].weight) {
                best = Some(i);
            }
        }
        best
    }

    /// Drops components below `weight_threshold`, then keeps at most
    /// `max_components` of the heaviest. Densities are renormalized; for
    /// intensities the dropped mass is simply lost.
    pub fn prune(&self, weight_threshold: f64, max_components: usize, kind: MixtureKind) -> Result<Self> {
        if self.components.is_empty() {
            return Ok(self.clone());
        }
        let mut order: Vec<usize> = (0..self.components.len())
            .filter(|&i| self.components[i].weight >= weight_threshold)
            .collect();
        order.sort_by(|&a, &b| {
            self.components[b]
                .weight
                .total_cmp(&self.components[a].weight)
                .then(a.cmp(&b))
        });
        order.truncate(max_components);
        if order.is_empty() && kind == MixtureKind::Density {
            return Err(Error::EmptyAfterPrune);
        }
        // Keep the original relative order of survivors.
        order.sort_unstable();
        let mut out = Self::new(order.into_iter().map(|i| self.components[i].clone()).collect());
        if kind == MixtureKind::Density {
            out.normalize();
        }
        Ok(out)
    }
}
