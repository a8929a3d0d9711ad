//! Experiment configuration file.
//!
//! A single JSON document with the sections `models`, `scenario`,
//! `tracker`, `metrics` and `output`. Any value can be overridden by a
//! dotted path, e.g. `tracker.update.k_best=5`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::{GospaParams, TrajMetricParams};
use crate::models::{BirthComponent, BirthModel, ClutterModel, MeasurementModel, Models, MotionModel};
use crate::simulator::ScenarioSpec;
use crate::tracker::TrackerConfig;

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what}: ragged matrix")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    /// Acceleration noise of the constant velocity model.
    pub sigma_v: f64,
    pub survival_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub noise_cov: Vec<Vec<f64>>,
    pub detection_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterConfig {
    /// Clutter intensity per unit area.
    pub rate: f64,
    pub region: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Two-dimensional constant velocity targets observed in position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    #[serde(default = "unit")]
    pub dt: f64,
    pub motion: MotionConfig,
    pub measurement: MeasurementConfig,
    pub clutter: ClutterConfig,
    pub birth: Vec<BirthConfig>,
}

fn unit() -> f64 {
    1.0
}

impl ModelsConfig {
    pub fn build(&self) -> Result<Models> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        let motion = MotionModel::constant_velocity(self.dt, self.motion.sigma_v, self.motion.survival_prob)?;
        let measurement = MeasurementModel::position(
            rows_to_matrix(&self.measurement.noise_cov, "measurement.noise_cov")?,
            self.measurement.detection_prob,
        )?;
        let clutter = ClutterModel::new(self.clutter.rate, self.clutter.region.clone())?;
        let birth = BirthModel::new(
            self.birth
                .iter()
                .map(|b| {
                    Ok(BirthComponent {
                        weight: b.weight,
                        mean: DVector::from_vec(b.mean.clone()),
                        cov: rows_to_matrix(&b.cov, "birth.cov")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let models = Models {
            motion,
            measurement,
            birth,
            clutter,
        };
        models.validate()?;
        Ok(models)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Trajectory metric over `[0, k]` at every step `k`.
    #[default]
    Trajectory,
    /// GOSPA between the current states at every step.
    Gospa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub kind: MetricKind,
    pub c: f64,
    pub p: f64,
    pub gamma: f64,
    /// Leading state components compared by the metrics.
    pub position_dims: Option<usize>,
    /// Divide the trajectory metric at step `k` by the window length `k + 1`.
    pub normalize_by_time: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::Trajectory,
            c: 100.0,
            p: 1.0,
            gamma: 20.0,
            position_dims: Some(2),
            normalize_by_time: true,
        }
    }
}

impl MetricsConfig {
    pub fn traj_params(&self) -> Result<TrajMetricParams> {
        TrajMetricParams::new(self.c, self.p, self.gamma)
    }

    pub fn gospa_params(&self) -> Result<GospaParams> {
        GospaParams::new(self.c, self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateOutput {
    None,
    /// Estimates after the last scan only.
    #[default]
    Final,
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub estimates: EstimateOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: ModelsConfig,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(s)?)
    }

    /// Reads a configuration file and applies `path=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        let models = self.models.build()?;
        self.scenario.validate(&models)?;
        self.tracker.validate()?;
        self.metrics.traj_params()?;
        Ok(())
    }
}

/// Sets the value at a dotted path. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` in `{path}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}` does not lead to an object"))),
        };
    }
    Err(Error::Config("empty override path".into()))
}
