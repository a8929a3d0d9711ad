//! GOSPA on sets of states and the assignment-based trajectory metric with
//! switching cost.
//!
//! Decompositions are reported in the `p`-th power domain, so that
//! `location + missed + false_ (+ switch) == total^p`. For `p = 1` the two
//! coincide.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::ops::RangeInclusive;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GospaParams {
    pub c: f64,
    pub p: f64,
}

impl GospaParams {
    pub fn new(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0) || !(p >= 1.0) {
            return Err(Error::Metric(format!("need c > 0 and p >= 1, got c = {c}, p = {p}")));
        }
        Ok(Self { c, p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajMetricParams {
    pub c: f64,
    pub p: f64,
    pub gamma: f64,
}

impl TrajMetricParams {
    pub fn new(c: f64, p: f64, gamma: f64) -> Result<Self> {
        GospaParams::new(c, p)?;
        if !(gamma >= 0.0) {
            return Err(Error::Metric(format!("switch cost must be nonnegative, got {gamma}")));
        }
        Ok(Self { c, p, gamma })
    }

    /// Cut-off 100, order 1, switch cost 20.
    pub fn standard() -> Self {
        Self {
            c: 100.0,
            p: 1.0,
            gamma: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDecomposition {
    pub total: f64,
    pub location: f64,
    pub missed: f64,
    pub false_: f64,
    pub switch: f64,
}

impl MetricDecomposition {
    fn finish(mut self, p: f64) -> Self {
        let sum = self.location + self.missed + self.false_ + self.switch;
        self.total = sum.max(0.0).powf(1.0 / p);
        self
    }

    /// Component-wise sum; `total` is added as is.
    pub fn add(&self, o: &Self) -> Self {
        Self {
            total: self.total + o.total,
            location: self.location + o.location,
            missed: self.missed + o.missed,
            false_: self.false_ + o.false_,
            switch: self.switch + o.switch,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            total: self.total * s,
            location: self.location * s,
            missed: self.missed * s,
            false_: self.false_ * s,
            switch: self.switch * s,
        }
    }
}

fn dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

/// GOSPA with `alpha = 2`.
pub fn gospa(truth: &[DVector<f64>], est: &[DVector<f64>], params: &GospaParams) -> Result<MetricDecomposition> {
    let dim = truth.first().or(est.first()).map_or(0, |v| v.len());
    if truth.iter().chain(est).any(|v| v.len() != dim) {
        return Err(Error::Metric("points differ in dimension".into()));
    }
    let (c, p) = (params.c, params.p);
    let half = c.powf(p) / 2.0;
    let mut out = MetricDecomposition::default();
    if truth.is_empty() || est.is_empty() {
        out.missed = half * truth.len() as f64;
        out.false_ = half * est.len() as f64;
        return Ok(out.finish(p));
    }
    let cost = nalgebra::DMatrix::from_fn(truth.len(), est.len(), |i, j| dist(&truth[i], &est[j]).min(c).powf(p));
    let (_, rows) = hungarian(&cost).ok_or_else(|| Error::Metric("assignment failed".into()))?;
    let mut matched_est = vec![false; est.len()];
    for (i, &j) in rows.iter().enumerate() {
        if j == usize::MAX {
            out.missed += half;
            continue;
        }
        let d = dist(&truth[i], &est[j]);
        if d < c {
            out.location += d.powf(p);
            matched_est[j] = true;
        } else {
            out.missed += half;
        }
    }
    out.false_ = half * matched_est.iter().filter(|&&m| !m).count() as f64;
    Ok(out.finish(p))
}

/// Partial injections from `nx` items into `ny` items, with the graph in
/// which neighbors differ by exactly one pair.
struct InjectionGraph {
    states: Vec<Vec<u8>>,
    neighbors: Vec<Vec<u32>>,
}

const NONE: u8 = u8::MAX;

impl InjectionGraph {
    fn count(nx: usize, ny: usize) -> u128 {
        let mut total: u128 = 0;
        let mut term: u128 = 1;
        for r in 0..=nx.min(ny) {
            if r > 0 {
                // term = C(nx, r) C(ny, r) r!
                term = term * ((nx - r + 1) as u128) * ((ny - r + 1) as u128) / (r as u128);
            }
            total += term;
        }
        total
    }

    fn new(nx: usize, ny: usize) -> Self {
        fn rec(x: usize, nx: usize, ny: usize, used: &mut Vec<bool>, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if x == nx {
                out.push(cur.clone());
                return;
            }
            cur.push(NONE);
            rec(x + 1, nx, ny, used, cur, out);
            cur.pop();
            for y in 0..ny {
                if !used[y] {
                    used[y] = true;
                    cur.push(y as u8);
                    rec(x + 1, nx, ny, used, cur, out);
                    cur.pop();
                    used[y] = false;
                }
            }
        }
        let mut states = Vec::new();
        rec(0, nx, ny, &mut vec![false; ny], &mut Vec::new(), &mut states);
        let index: HashMap<&[u8], u32> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i as u32)).collect();
        let mut neighbors = Vec::with_capacity(states.len());
        for s in &states {
            let mut used = vec![false; ny];
            for &y in s.iter().filter(|&&y| y != NONE) {
                used[y as usize] = true;
            }
            let mut nb = Vec::new();
            let mut t = s.clone();
            for x in 0..nx {
                if s[x] != NONE {
                    t[x] = NONE;
                    nb.push(index[t.as_slice()]);
                } else {
                    for y in (0..ny).filter(|&y| !used[y]) {
                        t[x] = y as u8;
                        nb.push(index[t.as_slice()]);
                    }
                }
                t[x] = s[x];
            }
            neighbors.push(nb);
        }
        Self { states, neighbors }
    }
}

/// Costs at one time step.
struct StepCosts {
    /// `pair[x][y]`: cost of assigning truth `x` to estimate `y`.
    pair: Vec<Vec<f64>>,
    x_alone: Vec<f64>,
    y_alone: Vec<f64>,
}

fn step_costs(truth: &[Trajectory], est: &[Trajectory], t: usize, c: f64, p: f64) -> StepCosts {
    let half = c.powf(p) / 2.0;
    let xs: Vec<_> = truth.iter().map(|x| x.state_at(t)).collect();
    let ys: Vec<_> = est.iter().map(|y| y.state_at(t)).collect();
    let pair = xs
        .iter()
        .map(|x| {
            ys.iter()
                .map(|y| match (x, y) {
                    (Some(a), Some(b)) => dist(a, b).min(c).powf(p),
                    (None, None) => 0.0,
                    _ => half,
                })
                .collect()
        })
        .collect();
    StepCosts {
        pair,
        x_alone: xs.iter().map(|x| if x.is_some() { half } else { 0.0 }).collect(),
        y_alone: ys.iter().map(|y| if y.is_some() { half } else { 0.0 }).collect(),
    }
}

fn state_cost(s: &[u8], sc: &StepCosts) -> f64 {
    let mut used = vec![false; sc.y_alone.len()];
    let mut total = 0.0;
    for (x, &y) in s.iter().enumerate() {
        if y == NONE {
            total += sc.x_alone[x];
        } else {
            used[y as usize] = true;
            total += sc.pair[x][y as usize];
        }
    }
    for (y, &u) in used.iter().enumerate() {
        if !u {
            total += sc.y_alone[y];
        }
    }
    total
}

/// Largest number of partial injections solved exactly; larger problems
/// use the linear-programming relaxation.
pub const EXACT_STATE_LIMIT: u128 = 20_000;

/// Trajectory metric over the time window `window`.
pub fn traj_metric(
    truth: &[Trajectory],
    est: &[Trajectory],
    params: &TrajMetricParams,
    window: RangeInclusive<usize>,
) -> Result<MetricDecomposition> {
    if window.is_empty() {
        return Err(Error::Metric("empty time window".into()));
    }
    let (lo, hi) = (*window.start(), *window.end());
    let clip = |v: &[Trajectory]| -> Vec<Trajectory> { v.iter().filter_map(|t| t.clip(lo, hi)).collect() };
    let truth = clip(truth);
    let est = clip(est);
    if truth.iter().chain(&est).any(|t| !t.is_valid()) {
        return Err(Error::Metric("invalid trajectory".into()));
    }
    if InjectionGraph::count(truth.len(), est.len()) <= EXACT_STATE_LIMIT && truth.len().max(est.len()) < NONE as usize {
        Ok(traj_metric_exact(&truth, &est, params, lo, hi))
    } else {
        traj_metric_lp(&truth, &est, params, lo, hi)
    }
}

fn traj_metric_exact(truth: &[Trajectory], est: &[Trajectory], params: &TrajMetricParams, lo: usize, hi: usize) -> MetricDecomposition {
    let (c, p) = (params.c, params.p);
    let w = params.gamma.powf(p) / 2.0;
    let g = InjectionGraph::new(truth.len(), est.len());
    let s_count = g.states.len();
    let steps = hi - lo + 1;

    let mut value: Vec<f64> = vec![0.0; s_count];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(steps);
    let mut heap = BinaryHeap::new();
    for (ti, t) in (lo..=hi).enumerate() {
        let sc = step_costs(truth, est, t, c, p);
        let mut from: Vec<u32> = (0..s_count as u32).collect();
        if ti > 0 {
            // Relax value(s) = min_s' value(s') + w |s Δ s'| by Dijkstra over
            // the one-pair-change graph.
            let mut best = value.clone();
            heap.clear();
            for (i, &v) in best.iter().enumerate() {
                heap.push(Reverse((OrdF64(v), i as u32)));
            }
            while let Some(Reverse((OrdF64(v), i))) = heap.pop() {
                if v > best[i as usize] {
                    continue;
                }
                for &j in &g.neighbors[i as usize] {
                    let nv = v + w;
                    if nv < best[j as usize] {
                        best[j as usize] = nv;
                        from[j as usize] = from[i as usize];
                        heap.push(Reverse((OrdF64(nv), j)));
                    }
                }
            }
            value = best;
        }
        for (s, v) in value.iter_mut().enumerate() {
            let base = if ti == 0 { 0.0 } else { *v };
            *v = base + state_cost(&g.states[s], &sc);
        }
        if ti > 0 {
            back.push(from);
        }
    }

    // Recover the optimal assignment sequence.
    let mut s = (0..s_count).min_by(|&a, &b| value[a].total_cmp(&value[b]).then(a.cmp(&b))).unwrap();
    let mut path = vec![s; steps];
    for ti in (1..steps).rev() {
        s = back[ti - 1][s] as usize;
        path[ti - 1] = s;
    }

    let half = c.powf(p) / 2.0;
    let mut out = MetricDecomposition::default();
    for (ti, t) in (lo..=hi).enumerate() {
        let state = &g.states[path[ti]];
        let mut used = vec![false; est.len()];
        for (x, &y) in state.iter().enumerate() {
            let xs = truth[x].state_at(t);
            if y == NONE {
                if xs.is_some() {
                    out.missed += half;
                }
                continue;
            }
            used[y as usize] = true;
            match (xs, est[y as usize].state_at(t)) {
                (Some(a), Some(b)) => {
                    let d = dist(a, b);
                    if d < c {
                        out.location += d.powf(p);
                    } else {
                        out.missed += half;
                        out.false_ += half;
                    }
                }
                (Some(_), None) => out.missed += half,
                (None, Some(_)) => out.false_ += half,
                (None, None) => {}
            }
        }
        for (y, e) in est.iter().enumerate() {
            if !used[y] && e.exists_at(t) {
                out.false_ += half;
            }
        }
        if ti > 0 {
            let prev = &g.states[path[ti - 1]];
            let changed = state
                .iter()
                .zip(prev)
                .map(|(&a, &b)| if a == b { 0 } else { (a != NONE) as usize + (b != NONE) as usize })
                .sum::<usize>();
            out.switch += w * changed as f64;
        }
    }
    out.finish(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Linear-programming relaxation of the trajectory metric.
fn traj_metric_lp(truth: &[Trajectory], est: &[Trajectory], params: &TrajMetricParams, lo: usize, hi: usize) -> Result<MetricDecomposition> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};

    let (c, p) = (params.c, params.p);
    let w = params.gamma.powf(p) / 2.0;
    let (nx, ny) = (truth.len(), est.len());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut pair_vars = Vec::new();
    for t in lo..=hi {
        let sc = step_costs(truth, est, t, c, p);
        let pv: Vec<Vec<_>> = (0..nx)
            .map(|x| (0..ny).map(|y| lp.add_var(sc.pair[x][y], (0.0, 1.0))).collect())
            .collect();
        let xv: Vec<_> = (0..nx).map(|x| lp.add_var(sc.x_alone[x], (0.0, 1.0))).collect();
        let yv: Vec<_> = (0..ny).map(|y| lp.add_var(sc.y_alone[y], (0.0, 1.0))).collect();
        for x in 0..nx {
            let mut e: Vec<_> = pv[x].iter().map(|&v| (v, 1.0)).collect();
            e.push((xv[x], 1.0));
            lp.add_constraint(e.as_slice(), ComparisonOp::Eq, 1.0);
        }
        for y in 0..ny {
            let mut e: Vec<_> = (0..nx).map(|x| (pv[x][y], 1.0)).collect();
            e.push((yv[y], 1.0));
            lp.add_constraint(e.as_slice(), ComparisonOp::Eq, 1.0);
        }
        pair_vars.push(pv);
    }
    let mut switch_vars = Vec::new();
    if w > 0.0 {
        for k in 1..pair_vars.len() {
            for x in 0..nx {
                for y in 0..ny {
                    let e = lp.add_var(w, (0.0, f64::INFINITY));
                    let (a, b) = (pair_vars[k][x][y], pair_vars[k - 1][x][y]);
                    lp.add_constraint(&[(e, 1.0), (a, -1.0), (b, 1.0)], ComparisonOp::Ge, 0.0);
                    lp.add_constraint(&[(e, 1.0), (a, 1.0), (b, -1.0)], ComparisonOp::Ge, 0.0);
                    switch_vars.push(e);
                }
            }
        }
    }
    let sol = lp.solve().map_err(|e| Error::Metric(format!("linear program failed: {e}")))?;

    let half = c.powf(p) / 2.0;
    let mut out = MetricDecomposition::default();
    for (k, t) in (lo..=hi).enumerate() {
        let mut y_mass = vec![0.0; ny];
        for x in 0..nx {
            let xs = truth[x].state_at(t);
            let mut x_mass = 0.0;
            for y in 0..ny {
                let v = sol[pair_vars[k][x][y]];
                x_mass += v;
                y_mass[y] += v;
                match (xs, est[y].state_at(t)) {
                    (Some(a), Some(b)) => {
                        let d = dist(a, b);
                        if d < c {
                            out.location += v * d.powf(p);
                        } else {
                            out.missed += v * half;
                            out.false_ += v * half;
                        }
                    }
                    (Some(_), None) => out.missed += v * half,
                    (None, Some(_)) => out.false_ += v * half,
                    (None, None) => {}
                }
            }
            if xs.is_some() {
                out.missed += (1.0 - x_mass).max(0.0) * half;
            }
        }
        for y in 0..ny {
            if est[y].exists_at(t) {
                out.false_ += (1.0 - y_mass[y]).max(0.0) * half;
            }
        }
    }
    out.switch = switch_vars.iter().map(|&e| sol[e] * w).sum();
    Ok(out.finish(p))
}

/// GOSPA between the states alive at each time of `window`, summed over
/// time. Returns the per-step decompositions.
pub fn gospa_over_time(
    truth: &[Trajectory],
    est: &[Trajectory],
    params: &GospaParams,
    window: RangeInclusive<usize>,
) -> Result<Vec<MetricDecomposition>> {
    window
        .map(|t| {
            let xs: Vec<_> = truth.iter().filter_map(|x| x.state_at(t).cloned()).collect();
            let ys: Vec<_> = est.iter().filter_map(|y| y.state_at(t).cloned()).collect();
            gospa(&xs, &ys, params)
        })
        .collect()
}
