//! Global hypothesis management: gating, per-parent assignment problems,
//! k-best child hypotheses and density pruning.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::assignment::murty;
use crate::density::{Bernoulli, GlobalHypothesis, PmbmDensity};
use crate::error::{Error, Result};
use crate::logmath::{log_add_exp, normalize_log_weights};
use crate::models::MeasurementModel;
use crate::par::{map_slice, Parallelism};
use crate::trajectory::{MixtureComponent, MixtureKind};

/// Chi-square gate size for a given probability mass and measurement
/// dimension, e.g. `chi_square_gate(0.999, 2) ≈ 13.816`.
pub fn chi_square_gate(prob: f64, dim: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) || dim == 0 {
        return Err(Error::Config(format!("invalid gate: probability {prob}, dimension {dim}")));
    }
    let chi = ChiSquared::new(dim as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(chi.inverse_cdf(prob))
}

/// True iff `z` lies within squared Mahalanobis distance `gamma` of the
/// predicted measurement of the heaviest component alive at `k`.
pub fn gate(b: &Bernoulli, z: &DVector<f64>, meas: &MeasurementModel, gamma: f64, k: usize) -> Result<bool> {
    if gamma == f64::INFINITY {
        return Ok(true);
    }
    let best = b
        .density
        .components
        .iter()
        .filter(|c| c.is_live(k))
        .fold(None::<&MixtureComponent>, |acc, c| match acc {
            Some(a) if a.weight >= c.weight => Some(a),
            _ => Some(c),
        });
    let Some(c) = best else {
        return Ok(false);
    };
    let innov = c.gaussian.innovation(&meas.h, &meas.r)?;
    Ok(innov.mahalanobis2(z) <= gamma)
}

/// Data association under one parent global hypothesis.
///
/// Rows are measurements. Column `i < n` is track `i` (through the leaf the
/// parent selects for it); column `n + j` is the new-track / clutter column
/// of measurement `j`, feasible only for row `j`. Costs are negative log
/// weight ratios relative to the all-missed child.
#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    /// Log weight of the child in which every track is missed and every
    /// measurement goes to its own new-track column with cost zero.
    pub base_log_weight: f64,
    pub cost: DMatrix<f64>,
    /// Leaf index of the missed-detection child of each track.
    pub miss_leaves: Vec<usize>,
    /// `det_leaves[j][i]`: leaf of track `i` updated with measurement `j`.
    pub det_leaves: Vec<Vec<Option<usize>>>,
    /// Track created by measurement `j`, if one was created.
    pub new_track_of_row: Vec<Option<usize>>,
    /// Total number of tracks after the update.
    pub total_tracks: usize,
}

impl AssignmentProblem {
    pub fn rows(&self) -> usize {
        self.cost.nrows()
    }

    pub fn tracks(&self) -> usize {
        self.miss_leaves.len()
    }

    /// Leaf vector of the child given by `assignment[row] = column`.
    pub fn child_leaves(&self, assignment: &[usize]) -> Vec<usize> {
        let n = self.tracks();
        let mut leaves = vec![0usize; self.total_tracks];
        leaves[..n].copy_from_slice(&self.miss_leaves);
        for (j, &c) in assignment.iter().enumerate() {
            if c < n {
                leaves[c] = self.det_leaves[j][c].expect("assignment uses a gated pair");
            } else if let Some(t) = self.new_track_of_row[j] {
                leaves[t] = 1;
            }
        }
        leaves
    }

    /// Every valid association map with its cost, by exhaustive search.
    pub fn enumerate(&self) -> Vec<(f64, Vec<usize>)> {
        fn rec(p: &AssignmentProblem, j: usize, used: &mut [bool], cur: &mut Vec<usize>, cost: f64, out: &mut Vec<(f64, Vec<usize>)>) {
            if j == p.rows() {
                out.push((cost, cur.clone()));
                return;
            }
            for c in 0..p.cost.ncols() {
                let cj = p.cost[(j, c)];
                if used[c] || !cj.is_finite() {
                    continue;
                }
                used[c] = true;
                cur.push(c);
                rec(p, j + 1, used, cur, cost + cj, out);
                cur.pop();
                used[c] = false;
            }
        }
        let mut out = Vec::new();
        rec(self, 0, &mut vec![false; self.cost.ncols()], &mut Vec::new(), 0.0, &mut out);
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

#[derive(PartialEq)]
struct PairKey(f64, usize, usize);

impl Eq for PairKey {}

impl PartialOrd for PairKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PairKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
            .then_with(|| other.2.cmp(&self.2))
    }
}

/// The `k` smallest pairwise sums of two ascending lists.
fn merge_k_best(a: &[(f64, Vec<usize>)], b: &[(f64, Vec<usize>)], k: usize) -> Vec<(f64, Vec<usize>)> {
    let mut out = Vec::new();
    if a.is_empty() || b.is_empty() {
        return out;
    }
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(PairKey(a[0].0 + b[0].0, 0, 0));
    seen.insert((0, 0));
    while let Some(PairKey(c, i, j)) = heap.pop() {
        let mut merged = a[i].1.clone();
        for (x, y) in merged.iter_mut().zip(&b[j].1) {
            if *y != usize::MAX {
                *x = *y;
            }
        }
        out.push((c, merged));
        if out.len() >= k {
            break;
        }
        for (ni, nj) in [(i + 1, j), (i, j + 1)] {
            if ni < a.len() && nj < b.len() && seen.insert((ni, nj)) {
                heap.push(PairKey(a[ni].0 + b[nj].0, ni, nj));
            }
        }
    }
    out
}

/// K cheapest assignments of one problem. Rows that share no track column
/// are solved independently and their solution lists combined.
pub fn k_best_assignments(p: &AssignmentProblem, k: usize) -> Vec<(f64, Vec<usize>)> {
    let m = p.rows();
    let n = p.tracks();
    if m == 0 {
        return vec![(0.0, Vec::new())];
    }
    let mut parent: Vec<usize> = (0..m).collect();
    for i in 0..n {
        let mut first = None;
        for j in 0..m {
            if p.cost[(j, i)].is_finite() {
                match first {
                    None => first = Some(j),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<usize, usize> = HashMap::new();
    for j in 0..m {
        let r = find(&mut parent, j);
        let g = *group_of.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(j);
    }

    let mut acc: Vec<(f64, Vec<usize>)> = vec![(0.0, vec![usize::MAX; m])];
    for rows in groups {
        let mut cols: Vec<usize> = (0..n).filter(|&i| rows.iter().any(|&j| p.cost[(j, i)].is_finite())).collect();
        cols.extend(rows.iter().map(|&j| n + j));
        let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| p.cost[(rows[r], cols[c])]);
        let solved: Vec<(f64, Vec<usize>)> = murty(&sub, k)
            .into_iter()
            .map(|(c, a)| {
                let mut full = vec![usize::MAX; m];
                for (r, &col) in a.iter().enumerate() {
                    full[rows[r]] = cols[col];
                }
                (c, full)
            })
            .collect();
        acc = merge_k_best(&acc, &solved, k);
        if acc.is_empty() {
            break;
        }
    }
    acc
}

/// Up to `k` best children over all parents, sorted by weight (descending)
/// with ties broken by leaf vector. Children with identical leaf vectors
/// are merged by adding their weights.
pub fn k_best_global(problems: &[AssignmentProblem], k: usize, mode: Parallelism) -> Vec<GlobalHypothesis> {
    let per_parent = map_slice(mode, problems, |p| {
        k_best_assignments(p, k)
            .into_iter()
            .map(|(c, a)| GlobalHypothesis {
                log_weight: p.base_log_weight - c,
                leaves: p.child_leaves(&a),
            })
            .filter(|h| h.log_weight > f64::NEG_INFINITY)
            .collect::<Vec<_>>()
    });
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut pool: Vec<GlobalHypothesis> = Vec::new();
    for h in per_parent.into_iter().flatten() {
        match index.get(&h.leaves) {
            Some(&i) => pool[i].log_weight = log_add_exp(pool[i].log_weight, h.log_weight),
            None => {
                index.insert(h.leaves.clone(), pool.len());
                pool.push(h);
            }
        }
    }
    sort_hypotheses(&mut pool);
    pool.truncate(k);
    pool
}

fn sort_hypotheses(h: &mut [GlobalHypothesis]) {
    h.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight).then_with(|| a.leaves.cmp(&b.leaves)));
}

/// Pruning and capping thresholds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    /// Global hypotheses lighter than this fraction of the heaviest are dropped.
    pub hypothesis_ratio: f64,
    pub max_hypotheses: usize,
    /// Tracks whose existence is below this under every hypothesis are dropped.
    pub recycle_threshold: f64,
    /// Move the live mass of dropped tracks into the undetected intensity.
    pub recycle: bool,
    pub max_undetected: usize,
    pub undetected_weight_threshold: f64,
    /// Live mixture components of a Bernoulli density lighter than this are
    /// dropped. Components that already ended are never touched here.
    pub mixture_weight_threshold: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            hypothesis_ratio: 1e-4,
            max_hypotheses: 200,
            recycle_threshold: 1e-3,
            recycle: false,
            max_undetected: 50,
            undetected_weight_threshold: 1e-10,
            mixture_weight_threshold: 1e-6,
        }
    }
}

impl PruneConfig {
    /// Keeps everything except exactly-zero weights.
    pub fn exact() -> Self {
        Self {
            hypothesis_ratio: 0.0,
            max_hypotheses: usize::MAX,
            recycle_threshold: 0.0,
            recycle: false,
            max_undetected: usize::MAX,
            undetected_weight_threshold: 0.0,
            mixture_weight_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.hypothesis_ratio,
            self.recycle_threshold,
            self.undetected_weight_threshold,
            self.mixture_weight_threshold,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) || self.max_hypotheses == 0 {
            return Err(Error::Config("pruning thresholds must be nonnegative and max_hypotheses positive".into()));
        }
        Ok(())
    }
}

fn prune_bernoulli_mixture(b: &mut Bernoulli, k: usize, threshold: f64) {
    if threshold <= 0.0 || b.density.len() < 2 {
        return;
    }
    let before = b.density.len();
    b.density
        .components
        .retain(|c| !c.is_live(k) || c.weight >= threshold);
    if b.density.is_empty() {
        return;
    }
    if b.density.len() != before {
        b.density.normalize();
    }
}

/// Drops global hypotheses below the ratio floor and beyond the cap.
fn prune_hypotheses(out: &mut PmbmDensity, cfg: &PruneConfig) {
    sort_hypotheses(&mut out.hypotheses);
    let max_lw = out.hypotheses.first().map_or(0.0, |h| h.log_weight);
    let floor = max_lw + cfg.hypothesis_ratio.ln();
    out.hypotheses.retain(|h| h.log_weight >= floor && h.log_weight > f64::NEG_INFINITY);
    out.hypotheses.truncate(cfg.max_hypotheses);
}

/// Removes tracks that are negligible under every hypothesis, moving their
/// live mass into the undetected intensity when recycling is on.
fn recycle_tracks(out: &mut PmbmDensity, cfg: &PruneConfig, k: usize) {
    let n = out.tracks.len();
    let mut keep = vec![true; n];
    if cfg.recycle_threshold > 0.0 {
        for (i, t) in out.tracks.iter().enumerate() {
            keep[i] = out
                .hypotheses
                .iter()
                .any(|h| t.leaves[h.leaves[i]].existence >= cfg.recycle_threshold);
        }
    }
    if keep.iter().any(|&x| !x) {
        if cfg.recycle {
            let mut w: Vec<f64> = out.hypotheses.iter().map(|h| h.log_weight).collect();
            normalize_log_weights(&mut w);
            for (i, t) in out.tracks.iter().enumerate().filter(|(i, _)| !keep[*i]) {
                for (h, lw) in out.hypotheses.iter().zip(&w) {
                    let b = &t.leaves[h.leaves[i]];
                    let scale = lw.exp() * b.existence;
                    if scale <= 0.0 {
                        continue;
                    }
                    for c in b.density.components.iter().filter(|c| c.is_live(k)) {
                        let mut c = c.clone();
                        c.weight *= scale;
                        out.undetected.components.push(c);
                    }
                }
            }
        }
        out.tracks = std::mem::take(&mut out.tracks)
            .into_iter()
            .zip(&keep)
            .filter(|(_, &kp)| kp)
            .map(|(t, _)| t)
            .collect();
        for h in &mut out.hypotheses {
            h.leaves = h.leaves.iter().zip(&keep).filter(|(_, &kp)| kp).map(|(&l, _)| l).collect();
        }
        out.merge_duplicate_hypotheses();
        sort_hypotheses(&mut out.hypotheses);
    }
}

/// Prunes a posterior density. See [`PruneConfig`] for the individual steps.
pub fn prune_density(d: &PmbmDensity, cfg: &PruneConfig) -> PmbmDensity {
    let k = d.time.unwrap_or(0);
    let mut out = d.clone();

    // Recycling can merge hypotheses and shift their weights, so pruning and
    // recycling repeat until neither removes anything.
    loop {
        let before = (out.hypotheses.len(), out.tracks.len());
        out.normalize();
        prune_hypotheses(&mut out, cfg);
        recycle_tracks(&mut out, cfg, k);
        if (out.hypotheses.len(), out.tracks.len()) == before {
            break;
        }
    }
    out.normalize();

    // Unreferenced leaves.
    for (i, t) in out.tracks.iter_mut().enumerate() {
        let mut used: Vec<usize> = out.hypotheses.iter().map(|h| h.leaves[i]).collect();
        used.sort_unstable();
        used.dedup();
        if used.len() == t.leaves.len() {
            continue;
        }
        let mut remap = vec![usize::MAX; t.leaves.len()];
        let old = std::mem::take(&mut t.leaves);
        for (new, &l) in used.iter().enumerate() {
            remap[l] = new;
        }
        t.leaves = old
            .into_iter()
            .enumerate()
            .filter(|(l, _)| remap[*l] != usize::MAX)
            .map(|(_, b)| b)
            .collect();
        for h in &mut out.hypotheses {
            h.leaves[i] = remap[h.leaves[i]];
        }
    }

    for t in &mut out.tracks {
        for b in &mut t.leaves {
            prune_bernoulli_mixture(b, k, cfg.mixture_weight_threshold);
        }
    }

    out.undetected.components.retain(|c| c.weight > 0.0);
    if let Ok(p) = out.undetected.prune(cfg.undetected_weight_threshold, cfg.max_undetected, MixtureKind::Intensity) {
        out.undetected = p;
    }
    out
}
