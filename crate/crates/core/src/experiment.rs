//! Monte Carlo experiments: simulate, track, score.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{EstimateOutput, ExperimentConfig, MetricKind, MetricsConfig};
use crate::density::TrackId;
use crate::error::Result;
use crate::estimation::TrajectoryEstimate;
use crate::metrics::{gospa, traj_metric, MetricDecomposition};
use crate::models::Models;
use crate::par::map_range;
use crate::simulator::{simulate, Simulation};
use crate::tracker::{Tracker, Variant};
use crate::trajectory::Trajectory;

/// Metric decomposition of one run at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run: usize,
    pub time: usize,
    pub metric: MetricDecomposition,
}

/// One estimated trajectory as written to the estimates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub run: usize,
    /// Time at which the estimate was extracted.
    pub time: usize,
    pub track: TrackId,
    pub birth: usize,
    pub end: usize,
    /// Time of the first state in `states`.
    pub start: usize,
    /// Concatenated state vectors.
    pub states: Vec<f64>,
}

impl EstimateRecord {
    fn new(run: usize, time: usize, e: &TrajectoryEstimate) -> Self {
        Self {
            run,
            time,
            track: e.track,
            birth: e.birth_time,
            end: e.end_time(),
            start: e.trajectory.birth_time,
            states: e.trajectory.states.iter().flat_map(|s| s.iter().copied()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub metrics: Vec<MetricRow>,
    pub estimates: Vec<EstimateRecord>,
    /// Wall-clock seconds of each tracker step.
    pub step_seconds: Vec<f64>,
    pub truth_target_steps: usize,
    pub estimate_target_steps: usize,
}

fn project(s: &DVector<f64>, dims: Option<usize>) -> DVector<f64> {
    match dims {
        Some(d) if d < s.len() => s.rows(0, d).into_owned(),
        _ => s.clone(),
    }
}

fn project_traj(t: &Trajectory, dims: Option<usize>) -> Trajectory {
    Trajectory {
        birth_time: t.birth_time,
        end_time: t.end_time,
        states: t.states.iter().map(|s| project(s, dims)).collect(),
    }
}

/// Scores the estimates available after step `k`.
///
/// The trajectory metric compares against the truth the variant targets:
/// all trajectories up to `k`, the trajectories alive at `k`, or (for the
/// filter) the states at `k`.
pub fn score_step(
    truth: &[Trajectory],
    est: &[Trajectory],
    variant: Variant,
    k: usize,
    cfg: &MetricsConfig,
) -> Result<MetricDecomposition> {
    let dims = cfg.position_dims;
    match cfg.kind {
        MetricKind::Gospa => {
            let xs: Vec<_> = truth.iter().filter_map(|t| t.state_at(k)).map(|s| project(s, dims)).collect();
            let ys: Vec<_> = est.iter().filter_map(|t| t.state_at(k)).map(|s| project(s, dims)).collect();
            gospa(&xs, &ys, &cfg.gospa_params()?)
        }
        MetricKind::Trajectory => {
            let lo = if variant == Variant::Filter { k } else { 0 };
            let keep = |t: &&Trajectory| variant == Variant::All || t.exists_at(k);
            let xs: Vec<_> = truth.iter().filter(keep).map(|t| project_traj(t, dims)).collect();
            let ys: Vec<_> = est.iter().filter(keep).map(|t| project_traj(t, dims)).collect();
            let d = traj_metric(&xs, &ys, &cfg.traj_params()?, lo..=k)?;
            Ok(if cfg.normalize_by_time { d.scale(1.0 / (k - lo + 1) as f64) } else { d })
        }
    }
}

/// Simulates and tracks run `run` of the experiment.
pub fn run_one(cfg: &ExperimentConfig, models: &Models, run: usize) -> Result<RunResult> {
    let Simulation { truth, frames } = simulate(models, &cfg.scenario, cfg.models.dt, run as u64)?;
    let mut tracker = Tracker::new(models.clone(), cfg.tracker.clone())?;
    let variant = cfg.tracker.variant;
    let mut out = RunResult {
        run,
        metrics: Vec::with_capacity(frames.len()),
        estimates: Vec::new(),
        step_seconds: Vec::with_capacity(frames.len()),
        truth_target_steps: truth.iter().map(|t| t.len()).sum(),
        estimate_target_steps: 0,
    };
    let last = frames.len() - 1;
    for (k, zs) in frames.iter().enumerate() {
        let t0 = Instant::now();
        tracker.step(zs)?;
        out.step_seconds.push(t0.elapsed().as_secs_f64());
        let est = tracker.estimates()?;
        out.estimate_target_steps += est.iter().filter(|e| e.trajectory.exists_at(k)).count();
        let trajs: Vec<Trajectory> = est.iter().map(|e| e.trajectory.clone()).collect();
        let metric = score_step(&truth, &trajs, variant, k, &cfg.metrics)?;
        out.metrics.push(MetricRow { run, time: k, metric });
        let keep = match cfg.output.estimates {
            EstimateOutput::None => false,
            EstimateOutput::Final => k == last,
            EstimateOutput::EveryStep => true,
        };
        if keep {
            out.estimates.extend(est.iter().map(|e| EstimateRecord::new(run, k, e)));
        }
    }
    Ok(out)
}

/// Runs every Monte Carlo run, concurrently when the tracker is configured
/// as parallel. Results are ordered by run index.
pub fn run_many(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let models = cfg.models.build()?;
    map_range(cfg.tracker.parallelism(), cfg.scenario.runs, |r| run_one(cfg, &models, r))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl TimingSummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean: 0.0,
                p50: 0.0,
                p90: 0.0,
                p99: 0.0,
                max: 0.0,
            };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        // Nearest-rank percentile.
        let pct = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: pct(0.5),
            p90: pct(0.9),
            p99: pct(0.99),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: Variant,
    pub runs: usize,
    pub steps: usize,
    /// Metric summed over the time steps, averaged over runs.
    pub mean_summed: MetricDecomposition,
    /// Metric averaged over time steps and runs.
    pub mean_per_step: MetricDecomposition,
    /// Missed and false target-steps implied by the cardinality costs.
    pub missed_target_steps: Option<f64>,
    pub false_target_steps: Option<f64>,
    pub truth_target_steps: usize,
    pub estimate_target_steps: usize,
    /// Wall-clock seconds per tracker step over all runs.
    pub step_seconds: TimingSummary,
}

pub fn summarize(cfg: &ExperimentConfig, results: &[RunResult]) -> Summary {
    let runs = results.len();
    let steps = cfg.scenario.duration;
    let total = results
        .iter()
        .flat_map(|r| &r.metrics)
        .fold(MetricDecomposition::default(), |acc, row| acc.add(&row.metric));
    let runs_f = runs.max(1) as f64;
    let mean_summed = total.scale(1.0 / runs_f);
    let mean_per_step = total.scale(1.0 / (runs_f * steps.max(1) as f64));
    // Under GOSPA each missed or false target-step costs c^p / 2. The
    // trajectory metric re-scores the whole window at every step, so it
    // yields no per-step counts.
    let (missed_target_steps, false_target_steps) = if cfg.metrics.kind == MetricKind::Gospa {
        let unit = cfg.metrics.c.powf(cfg.metrics.p) / 2.0;
        (Some(total.missed / unit), Some(total.false_ / unit))
    } else {
        (None, None)
    };
    let timings: Vec<f64> = results.iter().flat_map(|r| r.step_seconds.iter().copied()).collect();
    Summary {
        variant: cfg.tracker.variant,
        runs,
        steps,
        mean_summed,
        mean_per_step,
        missed_target_steps,
        false_target_steps,
        truth_target_steps: results.iter().map(|r| r.truth_target_steps).sum(),
        estimate_target_steps: results.iter().map(|r| r.estimate_target_steps).sum(),
        step_seconds: TimingSummary::from_samples(&timings),
    }
}

/// Metric rows as CSV with nine significant digits.
pub fn metrics_csv(results: &[RunResult]) -> String {
    let mut s = String::from("run,time,total,location,missed,false,switch\n");
    for row in results.iter().flat_map(|r| &r.metrics) {
        let m = &row.metric;
        s.push_str(&format!(
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            row.run, row.time, m.total, m.location, m.missed, m.false_, m.switch
        ));
    }
    s
}
