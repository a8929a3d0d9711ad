//! Recursive trackers: predict, update and prune once per scan.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::association::{prune_density, PruneConfig};
use crate::density::PmbmDensity;
use crate::error::Result;
use crate::estimation::{extract_trajectories, TrajectoryEstimate};
use crate::models::Models;
use crate::par::Parallelism;
use crate::predict::{predict_all_with, predict_current_with, PredictOptions};
use crate::update::{update, UpdateOptions};

/// Which posterior is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Set of current trajectories.
    Current,
    /// Set of all trajectories.
    #[default]
    All,
    /// Target filter: the current-trajectories recursion with every
    /// sequence density cut to its final step after each update.
    Filter,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "current" => Ok(Variant::Current),
            "all" => Ok(Variant::All),
            "filter" => Ok(Variant::Filter),
            _ => Err(format!("unknown tracker variant `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub variant: Variant,
    /// Run the recursion without gating, floors, hypothesis caps or pruning.
    pub exact: bool,
    pub update: UpdateOptions,
    pub prune: PruneConfig,
    /// Drop ended mixture components lighter than this in the
    /// all-trajectories prediction.
    pub dead_weight_threshold: Option<f64>,
    /// Existence threshold of the estimator.
    pub existence_threshold: f64,
    pub parallel: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::All,
            exact: false,
            update: UpdateOptions::default(),
            prune: PruneConfig::default(),
            dead_weight_threshold: None,
            existence_threshold: 0.5,
            parallel: true,
        }
    }
}

impl TrackerConfig {
    pub fn parallelism(&self) -> Parallelism {
        if self.parallel {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }

    /// Update options with exact mode and the parallelism flag applied.
    pub fn effective_update(&self) -> UpdateOptions {
        let mut u = if self.exact { UpdateOptions::exact() } else { self.update.clone() };
        u.parallelism = self.parallelism();
        u
    }

    pub fn effective_prune(&self) -> PruneConfig {
        if self.exact {
            PruneConfig::exact()
        } else {
            self.prune.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prune.validate()?;
        if !(0.0..=1.0).contains(&self.existence_threshold) {
            return Err(crate::Error::Config("existence threshold must lie in [0, 1]".into()));
        }
        if self.update.k_best == 0 {
            return Err(crate::Error::Config("k_best must be positive".into()));
        }
        if let Some(p) = self.update.gate_probability {
            if !(0.0..1.0).contains(&p) {
                return Err(crate::Error::Config("gate probability must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// A PMBM tracker fed one scan at a time, starting at time 0.
#[derive(Debug, Clone)]
pub struct Tracker {
    models: Models,
    config: TrackerConfig,
    density: PmbmDensity,
    next_time: usize,
}

impl Tracker {
    pub fn new(models: Models, config: TrackerConfig) -> Result<Self> {
        models.validate()?;
        config.validate()?;
        Ok(Self {
            models,
            config,
            density: PmbmDensity::empty(),
            next_time: 0,
        })
    }

    pub fn density(&self) -> &PmbmDensity {
        &self.density
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    /// Time of the last processed scan.
    pub fn time(&self) -> Option<usize> {
        self.density.time
    }

    /// Processes the scan of the next time step.
    pub fn step(&mut self, zs: &[DVector<f64>]) -> Result<()> {
        let k = self.next_time;
        let m = &self.models;
        let popts = PredictOptions {
            dead_weight_threshold: if self.config.exact { None } else { self.config.dead_weight_threshold },
            parallelism: self.config.parallelism(),
        };
        let predicted = match self.config.variant {
            Variant::Current | Variant::Filter => predict_current_with(&self.density, &m.motion, &m.birth, k, &popts)?,
            Variant::All => predict_all_with(&self.density, &m.motion, &m.birth, k, &popts)?,
        };
        let updated = update(
            &predicted,
            zs,
            &m.measurement,
            &m.clutter,
            k,
            &self.config.effective_update(),
        )?;
        let mut posterior = prune_density(&updated, &self.config.effective_prune());
        if self.config.variant == Variant::Filter {
            cut_to_final_step(&mut posterior)?;
        }
        self.density = posterior;
        self.next_time = k + 1;
        Ok(())
    }

    pub fn estimates(&self) -> Result<Vec<TrajectoryEstimate>> {
        extract_trajectories(&self.density, self.config.existence_threshold)
    }
}

fn cut_to_final_step(d: &mut PmbmDensity) -> Result<()> {
    for c in &mut d.undetected.components {
        c.gaussian = c.gaussian.truncate(1)?;
    }
    for t in &mut d.tracks {
        for b in &mut t.leaves {
            for c in &mut b.density.components {
                c.gaussian = c.gaussian.truncate(1)?;
            }
        }
    }
    Ok(())
}
