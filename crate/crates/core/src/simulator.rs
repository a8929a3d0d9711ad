//! Ground truth and measurement generation.
//!
//! Every run draws from a `ChaCha8Rng` seeded with `seed + run`, so
//! results are bit-identical across platforms for a given configuration.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::cholesky;
use crate::models::Models;
use crate::trajectory::Trajectory;

/// A position at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: usize,
    pub position: Vec<f64>,
}

/// A target whose life span is fixed in advance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedTarget {
    /// Deterministic piecewise-linear motion through the waypoints. The
    /// state is position followed by velocity.
    Waypoints { waypoints: Vec<Waypoint> },
    /// Starts in `state` at `birth` and follows the motion model, with
    /// process noise, until `end`.
    Initial { birth: usize, end: usize, state: Vec<f64> },
}

/// How true targets appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    Scripted { targets: Vec<ScriptedTarget> },
    /// Births from the birth intensity of the models; deaths from the
    /// survival probability.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Number of time steps, `0..duration`.
    pub duration: usize,
    pub truth: TruthSpec,
    /// Run `r` uses the random stream `seed + r`.
    #[serde(default)]
    pub seed: u64,
    /// Number of Monte Carlo runs.
    #[serde(default = "one")]
    pub runs: usize,
}

fn one() -> usize {
    1
}

impl ScenarioSpec {
    pub fn validate(&self, models: &Models) -> Result<()> {
        if self.duration == 0 || self.runs == 0 {
            return Err(Error::Config("scenario duration and run count must be positive".into()));
        }
        let n = models.motion.dim();
        if let TruthSpec::Scripted { targets } = &self.truth {
            for t in targets {
                match t {
                    ScriptedTarget::Waypoints { waypoints } => {
                        if waypoints.is_empty() || waypoints.windows(2).any(|w| w[0].time >= w[1].time) {
                            return Err(Error::Config("waypoint times must be strictly increasing".into()));
                        }
                        if waypoints.iter().any(|w| 2 * w.position.len() != n) {
                            return Err(Error::Config("waypoint positions must have half the state size".into()));
                        }
                    }
                    ScriptedTarget::Initial { birth, end, state } => {
                        if birth > end || state.len() != n {
                            return Err(Error::Config("scripted target has an invalid life span or state".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Simulated truth and measurements of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub truth: Vec<Trajectory>,
    /// Measurements per time step, in random order.
    pub frames: Vec<Vec<DVector<f64>>>,
}

fn sample_gaussian(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol_l: &DMatrix<f64>) -> DVector<f64> {
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol_l * e
}

fn lower_factor(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, what)?.l())
}

fn waypoint_states(waypoints: &[Waypoint], dt: f64) -> (usize, Vec<DVector<f64>>) {
    let start = waypoints[0].time;
    let end = waypoints[waypoints.len() - 1].time;
    let d = waypoints[0].position.len();
    let mut states = Vec::with_capacity(end - start + 1);
    for t in start..=end {
        // Segment containing t; the final waypoint reuses the last segment.
        let seg = waypoints
            .windows(2)
            .position(|w| w[0].time <= t && t < w[1].time)
            .unwrap_or(waypoints.len().saturating_sub(2));
        let mut s = DVector::zeros(2 * d);
        if waypoints.len() == 1 {
            s.rows_mut(0, d).copy_from(&DVector::from_column_slice(&waypoints[0].position));
        } else {
            let (a, b) = (&waypoints[seg], &waypoints[seg + 1]);
            let span = (b.time - a.time) as f64;
            let u = (t as f64 - a.time as f64) / span;
            for i in 0..d {
                s[i] = a.position[i] + u * (b.position[i] - a.position[i]);
                s[d + i] = (b.position[i] - a.position[i]) / (span * dt);
            }
        }
        states.push(s);
    }
    (start, states)
}

/// Runs the scenario once. `run` selects the random stream.
pub fn simulate(models: &Models, spec: &ScenarioSpec, dt: f64, run: u64) -> Result<Simulation> {
    models.validate()?;
    spec.validate(models)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(run));
    let motion = &models.motion;
    let meas = &models.measurement;
    let q_l = lower_factor(&motion.q, "process noise")?;
    let r_l = lower_factor(&meas.r, "measurement noise")?;
    let birth_l = models
        .birth
        .components
        .iter()
        .map(|c| lower_factor(&c.cov, "birth covariance"))
        .collect::<Result<Vec<_>>>()?;
    let t_end = spec.duration;

    struct Target {
        birth: usize,
        states: Vec<DVector<f64>>,
        /// Last time step for scripted targets; `None` for stochastic ones.
        end: Option<usize>,
        /// Whether the state is propagated by the motion model.
        moving: bool,
    }

    let mut targets: Vec<Target> = Vec::new();
    let mut pending: Vec<(usize, usize, DVector<f64>)> = Vec::new();
    if let TruthSpec::Scripted { targets: scripted } = &spec.truth {
        for t in scripted {
            match t {
                ScriptedTarget::Waypoints { waypoints } => {
                    let (birth, mut states) = waypoint_states(waypoints, dt);
                    if birth < t_end {
                        states.truncate(t_end - birth);
                        targets.push(Target {
                            birth,
                            states,
                            end: None,
                            moving: false,
                        });
                    }
                }
                ScriptedTarget::Initial { birth, end, state } => {
                    pending.push((*birth, *end, DVector::from_column_slice(state)));
                }
            }
        }
    }
    let stochastic_death = matches!(spec.truth, TruthSpec::Poisson);

    let mut frames = Vec::with_capacity(t_end);
    for k in 0..t_end {
        // Survival and motion.
        for t in targets.iter_mut().filter(|t| t.moving) {
            let alive_before = t.birth + t.states.len() == k;
            if !alive_before {
                continue;
            }
            let survives = match t.end {
                Some(e) => k <= e,
                None => !stochastic_death || rng.random_bool(motion.survival_prob),
            };
            if survives {
                let next = sample_gaussian(&mut rng, &(&motion.f * t.states.last().unwrap()), &q_l);
                t.states.push(next);
            } else {
                t.moving = false;
            }
        }

        // Births.
        if stochastic_death {
            for (c, l) in models.birth.components.iter().zip(&birth_l) {
                if c.weight <= 0.0 {
                    continue;
                }
                let n: f64 = Poisson::new(c.weight).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
                for _ in 0..n as usize {
                    targets.push(Target {
                        birth: k,
                        states: vec![sample_gaussian(&mut rng, &c.mean, l)],
                        end: None,
                        moving: true,
                    });
                }
            }
        }
        for (birth, end, state) in pending.iter().filter(|p| p.0 == k) {
            targets.push(Target {
                birth: *birth,
                states: vec![state.clone()],
                end: Some(*end),
                moving: true,
            });
        }

        // Measurements.
        let mut frame = Vec::new();
        for t in &targets {
            if t.birth <= k && k < t.birth + t.states.len() && rng.random_bool(meas.detection_prob) {
                frame.push(sample_gaussian(&mut rng, &(&meas.h * &t.states[k - t.birth]), &r_l));
            }
        }
        let expected = models.clutter.expected_count();
        if expected > 0.0 {
            let n: f64 = Poisson::new(expected).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
            for _ in 0..n as usize {
                frame.push(DVector::from_iterator(
                    models.clutter.region.len(),
                    models.clutter.region.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)),
                ));
            }
        }
        frame.shuffle(&mut rng);
        frames.push(frame);
    }

    let truth = targets
        .into_iter()
        .map(|t| Trajectory::new(t.birth, t.states))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation { truth, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BirthModel, ClutterModel, MeasurementModel, MotionModel};

    fn models(pd: f64, rate: f64) -> Models {
        Models {
            motion: MotionModel::constant_velocity(1.0, 0.5, 0.99).unwrap(),
            measurement: MeasurementModel::position(DMatrix::identity(2, 2) * 100.0, pd).unwrap(),
            birth: BirthModel::default(),
            clutter: ClutterModel::new(rate, vec![(-1000.0, 1000.0), (-1000.0, 1000.0)]).unwrap(),
        }
    }

    fn one_target() -> ScenarioSpec {
        ScenarioSpec {
            duration: 20,
            truth: TruthSpec::Scripted {
                targets: vec![ScriptedTarget::Waypoints {
                    waypoints: vec![
                        Waypoint {
                            time: 0,
                            position: vec![0.0, 0.0],
                        },
                        Waypoint {
                            time: 10,
                            position: vec![100.0, 0.0],
                        },
                        Waypoint {
                            time: 19,
                            position: vec![100.0, 90.0],
                        },
                    ],
                }],
            },
            seed: 3,
            runs: 1,
        }
    }

    #[test]
    fn perfect_detection_without_clutter() {
        let sim = simulate(&models(1.0, 0.0), &one_target(), 1.0, 0).unwrap();
        assert_eq!(sim.truth.len(), 1);
        assert_eq!(sim.truth[0].len(), 20);
        assert!(sim.frames.iter().all(|f| f.len() == 1));
        assert_eq!(sim.truth[0].states[5][0], 50.0);
        assert_eq!(sim.truth[0].states[5][2], 10.0);
        assert_eq!(sim.truth[0].states[15][3], 10.0);
    }

    #[test]
    fn reproducible() {
        let a = simulate(&models(0.9, 1e-6), &one_target(), 1.0, 4).unwrap();
        let b = simulate(&models(0.9, 1e-6), &one_target(), 1.0, 4).unwrap();
        assert_eq!(a, b);
        let c = simulate(&models(0.9, 1e-6), &one_target(), 1.0, 5).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn scripted_initial_target_lives_exactly() {
        let spec = ScenarioSpec {
            duration: 30,
            truth: TruthSpec::Scripted {
                targets: vec![ScriptedTarget::Initial {
                    birth: 4,
                    end: 12,
                    state: vec![0.0, 0.0, 1.0, 1.0],
                }],
            },
            seed: 1,
            runs: 1,
        };
        let sim = simulate(&models(1.0, 0.0), &spec, 1.0, 0).unwrap();
        assert_eq!((sim.truth[0].birth_time, sim.truth[0].end_time), (4, 12));
        let counts: Vec<usize> = sim.frames.iter().map(|f| f.len()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 9);
    }
}
