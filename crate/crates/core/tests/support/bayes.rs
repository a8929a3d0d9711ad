//! Exhaustive Bayes posterior over measurement partitions.
//!
//! Every measurement either is clutter or comes from one trajectory, and a
//! trajectory produces at most one measurement per scan. A data
//! association is therefore a partition of all measurements into cells with
//! at most one measurement per time step. A cell's weight integrates over
//! the birth component, birth time and end time of the trajectory that
//! produced exactly those detections; a singleton cell may also be clutter.
//! Undetected trajectories contribute a factor shared by all partitions.

use std::collections::BTreeSet;

use nalgebra::DVector;

use pmbm_core::models::Models;

use super::dense::{kalman_predict, kalman_update};
use super::gaussian_pdf;

pub type Cell = Vec<(usize, usize)>;

#[derive(Debug, Clone)]
pub struct Association {
    /// Cells sorted by their first measurement.
    pub cells: Vec<Cell>,
    /// Normalized posterior probability.
    pub probability: f64,
    /// Probability that the cell's trajectory exists, per cell.
    pub existence_all: Vec<f64>,
    /// Probability that the cell's trajectory exists and is alive at the
    /// final time, per cell.
    pub existence_current: Vec<f64>,
}

/// Integrated target likelihood of a cell: `(all end times, end time = K)`.
fn cell_mass(models: &Models, frames: &[Vec<DVector<f64>>], cell: &Cell) -> (f64, f64) {
    let last_time = frames.len() - 1;
    let (ps, pd) = (models.motion.survival_prob, models.measurement.detection_prob);
    let (f, q) = (&models.motion.f, &models.motion.q);
    let (h, r) = (&models.measurement.h, &models.measurement.r);
    let first = cell[0].0;
    let last = cell[cell.len() - 1].0;
    let mut total = 0.0;
    let mut alive = 0.0;
    for b in &models.birth.components {
        for birth in 0..=first {
            for end in last..=last_time {
                let mut w = b.weight * ps.powi((end - birth) as i32);
                if end < last_time {
                    w *= 1.0 - ps;
                }
                let (mut m, mut p) = (b.mean.clone(), b.cov.clone());
                for t in birth..=end {
                    if t > birth {
                        (m, p) = kalman_predict(&m, &p, f, q);
                    }
                    match cell.iter().find(|(ct, _)| *ct == t) {
                        Some(&(_, j)) => {
                            let z = &frames[t][j];
                            w *= pd * gaussian_pdf(z, &(h * &m), &(h * &p * h.transpose() + r));
                            (m, p) = kalman_update(&m, &p, h, r, z);
                        }
                        None => w *= 1.0 - pd,
                    }
                }
                total += w;
                if end == last_time {
                    alive += w;
                }
            }
        }
    }
    (total, alive)
}

fn partitions(items: &[(usize, usize)], at: usize, current: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
    if at == items.len() {
        out.push(current.clone());
        return;
    }
    let item = items[at];
    for i in 0..current.len() {
        if current[i].iter().all(|(t, _)| *t != item.0) {
            current[i].push(item);
            partitions(items, at + 1, current, out);
            current[i].pop();
        }
    }
    current.push(vec![item]);
    partitions(items, at + 1, current, out);
    current.pop();
}

/// Posterior over all associations of `frames` (scans at times `0..`).
pub fn posterior(models: &Models, frames: &[Vec<DVector<f64>>]) -> Vec<Association> {
    let items: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(t, f)| (0..f.len()).map(move |j| (t, j)))
        .collect();
    let mut all = Vec::new();
    partitions(&items, 0, &mut Vec::new(), &mut all);

    let mut out = Vec::with_capacity(all.len());
    for mut cells in all {
        cells.iter_mut().for_each(|c| c.sort());
        cells.sort();
        let mut weight = 1.0;
        let mut existence_all = Vec::new();
        let mut existence_current = Vec::new();
        for c in &cells {
            let (target, alive) = cell_mass(models, frames, c);
            let clutter = if c.len() == 1 {
                let (t, j) = c[0];
                models.clutter.clutter_density(&frames[t][j])
            } else {
                0.0
            };
            let w = target + clutter;
            weight *= w;
            existence_all.push(target / w);
            existence_current.push(alive / w);
        }
        out.push(Association {
            cells,
            probability: weight,
            existence_all,
            existence_current,
        });
    }
    let sum: f64 = out.iter().map(|a| a.probability).sum();
    for a in &mut out {
        a.probability /= sum;
    }
    out
}

/// Key identifying an association regardless of cell order.
pub fn key(cells: &[Cell]) -> BTreeSet<Cell> {
    cells.iter().cloned().collect()
}
