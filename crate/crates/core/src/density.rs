//! Bernoulli components, track tables, global hypotheses and the PMBM
//! density itself.
//!
//! Single-trajectory and global hypothesis weights are stored as natural
//! logarithms. Mixture weights inside a density are plain probabilities.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::{log_add_exp, normalize_log_weights};
use crate::trajectory::TrajectoryMixture;

/// A measurement reference `(time, index within the scan)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementRef {
    pub time: usize,
    pub index: usize,
}

impl MeasurementRef {
    pub fn new(time: usize, index: usize) -> Self {
        Self { time, index }
    }
}

/// Tracks are identified by the measurement that started them.
pub type TrackId = MeasurementRef;

/// One single-trajectory hypothesis: a trajectory Bernoulli with its
/// association history and hypothesis weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bernoulli {
    pub existence: f64,
    pub density: TrajectoryMixture,
    /// Measurements associated to this hypothesis, in time order.
    pub history: Vec<MeasurementRef>,
    #[serde(with = "crate::logmath::serde_log_weight")]
    pub log_weight: f64,
}

impl Bernoulli {
    /// The "does not exist" leaf: existence zero, unit weight, no density.
    pub fn non_existent() -> Self {
        Self {
            existence: 0.0,
            density: TrajectoryMixture::default(),
            history: Vec::new(),
            log_weight: 0.0,
        }
    }

    /// Placeholder for a hypothesis whose weight is exactly zero. It keeps
    /// hypothesis numbering total but can never be selected.
    pub fn infeasible(history: Vec<MeasurementRef>) -> Self {
        Self {
            existence: 0.0,
            density: TrajectoryMixture::default(),
            history,
            log_weight: f64::NEG_INFINITY,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.log_weight > f64::NEG_INFINITY
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        (0.0..=1.0).contains(&self.existence) && (self.existence == 0.0 || self.density.is_normalized(tol))
    }
}

/// A hypothesis tree rooted at one measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub leaves: Vec<Bernoulli>,
}

/// One leaf choice per track, with its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalHypothesis {
    pub log_weight: f64,
    pub leaves: Vec<usize>,
}

/// Poisson multi-Bernoulli mixture over sets of trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmbmDensity {
    /// Time of the last prediction or update; `None` before the first step.
    pub time: Option<usize>,
    /// PPP intensity of trajectories that have never been detected.
    pub undetected: TrajectoryMixture,
    pub tracks: Vec<Track>,
    pub hypotheses: Vec<GlobalHypothesis>,
}

impl Default for PmbmDensity {
    fn default() -> Self {
        Self::empty()
    }
}

impl PmbmDensity {
    /// No undetected intensity, no tracks, a single empty global hypothesis.
    pub fn empty() -> Self {
        Self {
            time: None,
            undetected: TrajectoryMixture::default(),
            tracks: Vec::new(),
            hypotheses: vec![GlobalHypothesis {
                log_weight: 0.0,
                leaves: Vec::new(),
            }],
        }
    }

    /// Normalizes global hypothesis weights to exp-sum one.
    pub fn normalize(&mut self) {
        let mut w: Vec<f64> = self.hypotheses.iter().map(|h| h.log_weight).collect();
        normalize_log_weights(&mut w);
        for (h, w) in self.hypotheses.iter_mut().zip(w) {
            h.log_weight = w;
        }
    }

    /// Index of the most probable global hypothesis.
    pub fn best_hypothesis(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, h) in self.hypotheses.iter().enumerate() {
            if best.is_none_or(|b| h.log_weight > self.hypotheses[b].log_weight) {
                best = Some(i);
            }
        }
        best
    }

    pub fn leaf_count(&self) -> usize {
        self.tracks.iter().map(|t| t.leaves.len()).sum()
    }

    /// Merges global hypotheses with identical leaf vectors by adding their
    /// weights. Order of first occurrence is kept.
    pub fn merge_duplicate_hypotheses(&mut self) {
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut merged: Vec<GlobalHypothesis> = Vec::with_capacity(self.hypotheses.len());
        for h in self.hypotheses.drain(..) {
            match index.get(&h.leaves) {
                Some(&i) => merged[i].log_weight = log_add_exp(merged[i].log_weight, h.log_weight),
                None => {
                    index.insert(h.leaves.clone(), merged.len());
                    merged.push(h);
                }
            }
        }
        self.hypotheses = merged;
    }

    /// Checks structural invariants.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::Config("density has no global hypotheses".into()));
        }
        for h in &self.hypotheses {
            if h.leaves.len() != self.tracks.len() {
                return Err(Error::Config("global hypothesis does not cover every track".into()));
            }
            for (t, &l) in self.tracks.iter().zip(&h.leaves) {
                if l >= t.leaves.len() {
                    return Err(Error::Config("global hypothesis references a missing leaf".into()));
                }
            }
        }
        for t in &self.tracks {
            for b in &t.leaves {
                if b.is_feasible() && !b.is_valid(tol) {
                    return Err(Error::Config(format!("invalid Bernoulli in track {:?}", t.id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One Gaussian term of a target (single-time) density.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Bernoulli over a single target state.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBernoulli {
    pub existence: f64,
    /// Normalized mixture; empty when `existence == 0`.
    pub components: Vec<TargetComponent>,
}

impl TargetBernoulli {
    /// Moment-matched single Gaussian, if the density is defined.
    pub fn collapsed(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let first = self.components.first()?;
        let n = first.mean.len();
        let mut mean = DVector::zeros(n);
        for c in &self.components {
            mean += &c.mean * c.weight;
        }
        let mut cov = DMatrix::zeros(n, n);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += (&c.cov + &d * d.transpose()) * c.weight;
        }
        Some((mean, cov))
    }
}

/// Marginalizes a trajectory Bernoulli onto the target state at time `k`.
///
/// The existence becomes `r` times the probability that the trajectory is
/// still alive at `k`; the density mixes the final-step marginals of the
/// live components. When `collapse` is set the mixture is moment-matched
/// into one Gaussian.
pub fn marginalize_to_target(b: &Bernoulli, k: usize, collapse: bool) -> Result<TargetBernoulli> {
    let live: Vec<_> = b.density.components.iter().filter(|c| c.is_live(k)).collect();
    let live_mass: f64 = live.iter().map(|c| c.weight).sum();
    let existence = b.existence * live_mass;
    if existence <= 0.0 {
        return Ok(TargetBernoulli {
            existence: 0.0,
            components: Vec::new(),
        });
    }
    let mut components = Vec::with_capacity(live.len());
    for c in live {
        let (mean, cov) = c.gaussian.marginal_last_step()?;
        components.push(TargetComponent {
            weight: c.weight / live_mass,
            mean,
            cov,
        });
    }
    let mut out = TargetBernoulli { existence, components };
    if collapse {
        if let Some((mean, cov)) = out.collapsed() {
            out.components = vec![TargetComponent { weight: 1.0, mean, cov }];
        }
    }
    Ok(out)
}
