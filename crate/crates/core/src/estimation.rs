//! Trajectory estimates and target-space marginals of a PMBM density.

use serde::{Deserialize, Serialize};

use crate::density::{marginalize_to_target, PmbmDensity, TargetBernoulli, TargetComponent, TrackId};
use crate::error::Result;
use crate::trajectory::Trajectory;

/// One estimated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub track: TrackId,
    /// Estimated birth time. The recovered states may start later when the
    /// sequence density was truncated to a window.
    pub birth_time: usize,
    pub trajectory: Trajectory,
}

impl TrajectoryEstimate {
    pub fn end_time(&self) -> usize {
        self.trajectory.end_time
    }
}

/// Estimates from the most probable global hypothesis: every selected leaf
/// with existence at least `r_threshold` contributes the mean sequence of
/// its heaviest mixture component.
pub fn extract_trajectories(d: &PmbmDensity, r_threshold: f64) -> Result<Vec<TrajectoryEstimate>> {
    let Some(best) = d.best_hypothesis() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (t, &l) in d.tracks.iter().zip(&d.hypotheses[best].leaves) {
        let b = &t.leaves[l];
        if b.existence <= 0.0 || b.existence < r_threshold {
            continue;
        }
        let Some(j) = b.density.argmax() else {
            continue;
        };
        let c = &b.density.components[j];
        let states = c.gaussian.recover_mean_blocks()?;
        out.push(TrajectoryEstimate {
            track: t.id,
            birth_time: c.birth_time,
            trajectory: Trajectory::new(c.window_start(), states)?,
        });
    }
    Ok(out)
}

/// Target-space PMBM: the same track and hypothesis structure with every
/// leaf marginalized onto the state at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPmbm {
    /// Undetected intensity of targets alive at `k`.
    pub undetected: Vec<TargetComponent>,
    pub tracks: Vec<Vec<TargetBernoulli>>,
    /// `(log weight, leaf per track)`.
    pub hypotheses: Vec<(f64, Vec<usize>)>,
}

pub fn marginalize_density(d: &PmbmDensity, k: usize, collapse: bool) -> Result<TargetPmbm> {
    let mut undetected = Vec::new();
    for c in d.undetected.components.iter().filter(|c| c.is_live(k)) {
        let (mean, cov) = c.gaussian.marginal_last_step()?;
        undetected.push(TargetComponent {
            weight: c.weight,
            mean,
            cov,
        });
    }
    let tracks = d
        .tracks
        .iter()
        .map(|t| {
            t.leaves
                .iter()
                .map(|b| marginalize_to_target(b, k, collapse))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetPmbm {
        undetected,
        tracks,
        hypotheses: d.hypotheses.iter().map(|h| (h.log_weight, h.leaves.clone())).collect(),
    })
}
