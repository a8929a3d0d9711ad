//! Prediction for the current-trajectories and all-trajectories trackers.

use crate::density::{Bernoulli, PmbmDensity, Track};
use crate::error::{Error, Result};
use crate::models::{BirthModel, MotionModel};
use crate::par::{map_vec, Parallelism};
use crate::trajectory::{MixtureComponent, TrajectoryMixture};

/// Knobs shared by both predictions.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredictOptions {
    /// In the all-trajectories prediction, drop dead mixture components
    /// lighter than this and renormalize. `None` keeps everything.
    pub dead_weight_threshold: Option<f64>,
    pub parallelism: Parallelism,
}

fn check_time(d: &PmbmDensity, k: usize) -> Result<bool> {
    match d.time {
        None => Ok(false),
        Some(t) if t + 1 == k => Ok(true),
        Some(t) => Err(Error::Config(format!("cannot predict from time {t} to time {k}"))),
    }
}

fn extend(c: &MixtureComponent, weight: f64, motion: &MotionModel, k: usize) -> Result<MixtureComponent> {
    Ok(MixtureComponent::new(
        weight,
        c.birth_time,
        k,
        c.gaussian.predict(&motion.f, motion.q_inv())?,
    ))
}

/// Current-trajectories transition of a mixture: every component is alive
/// at `k - 1` and is extended to `k`. Weights are multiplied by `scale`.
fn extend_current(m: &TrajectoryMixture, motion: &MotionModel, k: usize, scale: f64) -> Result<TrajectoryMixture> {
    let mut out = Vec::with_capacity(m.len());
    for c in &m.components {
        debug_assert!(c.is_live(k - 1), "current-trajectories mixture holds a dead component");
        if !c.is_live(k - 1) {
            continue;
        }
        out.push(extend(c, c.weight * scale, motion, k)?);
    }
    Ok(TrajectoryMixture::new(out))
}

/// All-trajectories transition of a mixture: dead components persist, each
/// component alive at `k - 1` splits into an ended copy weighted `1 - P_S`
/// and an extended copy weighted `P_S`. Zero-weight branches are omitted.
fn extend_all(m: &TrajectoryMixture, motion: &MotionModel, k: usize) -> Result<TrajectoryMixture> {
    let ps = motion.survival_prob;
    let mut out = Vec::with_capacity(2 * m.len());
    for c in &m.components {
        if !c.is_live(k - 1) {
            out.push(c.clone());
            continue;
        }
        let dead = c.weight * (1.0 - ps);
        if dead > 0.0 {
            let mut d = c.clone();
            d.weight = dead;
            out.push(d);
        }
        let live = c.weight * ps;
        if live > 0.0 {
            out.push(extend(c, live, motion, k)?);
        }
    }
    Ok(TrajectoryMixture::new(out))
}

fn prune_dead(m: TrajectoryMixture, k: usize, threshold: f64) -> TrajectoryMixture {
    let mut out = TrajectoryMixture::new(
        m.components
            .into_iter()
            .filter(|c| c.is_live(k) || c.weight >= threshold)
            .collect(),
    );
    out.normalize();
    out
}

fn map_tracks<F>(tracks: Vec<Track>, mode: Parallelism, f: F) -> Result<Vec<Track>>
where
    F: Fn(&Bernoulli) -> Result<Bernoulli> + Send + Sync,
{
    map_vec(mode, tracks, |t| {
        let leaves = t.leaves.iter().map(&f).collect::<Result<Vec<_>>>()?;
        Ok(Track { id: t.id, leaves })
    })
    .into_iter()
    .collect()
}

fn append_birth(d: &mut PmbmDensity, birth: &BirthModel, k: usize) -> Result<()> {
    d.undetected.components.extend(birth.birth_intensity_at(k)?.components);
    d.time = Some(k);
    Ok(())
}

/// Prediction of the current-trajectories tracker.
pub fn predict_current(d: &PmbmDensity, motion: &MotionModel, birth: &BirthModel, k: usize) -> Result<PmbmDensity> {
    predict_current_with(d, motion, birth, k, &PredictOptions::default())
}

pub fn predict_current_with(
    d: &PmbmDensity,
    motion: &MotionModel,
    birth: &BirthModel,
    k: usize,
    opts: &PredictOptions,
) -> Result<PmbmDensity> {
    let mut out = d.clone();
    if check_time(d, k)? {
        let ps = motion.survival_prob;
        out.undetected = extend_current(&d.undetected, motion, k, ps)?;
        out.tracks = map_tracks(d.tracks.clone(), opts.parallelism, |b| {
            if b.density.is_empty() {
                return Ok(b.clone());
            }
            Ok(Bernoulli {
                existence: b.existence * ps,
                density: extend_current(&b.density, motion, k, 1.0)?,
                history: b.history.clone(),
                log_weight: b.log_weight,
            })
        })?;
    }
    append_birth(&mut out, birth, k)?;
    Ok(out)
}

/// Prediction of the all-trajectories tracker.
pub fn predict_all(d: &PmbmDensity, motion: &MotionModel, birth: &BirthModel, k: usize) -> Result<PmbmDensity> {
    predict_all_with(d, motion, birth, k, &PredictOptions::default())
}

pub fn predict_all_with(
    d: &PmbmDensity,
    motion: &MotionModel,
    birth: &BirthModel,
    k: usize,
    opts: &PredictOptions,
) -> Result<PmbmDensity> {
    let mut out = d.clone();
    if check_time(d, k)? {
        out.undetected = extend_all(&d.undetected, motion, k)?;
        out.tracks = map_tracks(d.tracks.clone(), opts.parallelism, |b| {
            if b.density.is_empty() {
                return Ok(b.clone());
            }
            let mut density = extend_all(&b.density, motion, k)?;
            if let Some(t) = opts.dead_weight_threshold {
                density = prune_dead(density, k, t);
            }
            Ok(Bernoulli {
                existence: b.existence,
                density,
                history: b.history.clone(),
                log_weight: b.log_weight,
            })
        })?;
    }
    append_birth(&mut out, birth, k)?;
    Ok(out)
}
