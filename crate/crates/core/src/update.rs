//! Measurement update of a PMBM density over trajectories.
//!
//! Every prior leaf spawns one missed-detection leaf and one detection leaf
//! per measurement; every measurement starts a new track with a
//! "does not exist" leaf and a "detected" leaf. Global hypotheses are then
//! rebuilt from per-parent assignment problems.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::association::{chi_square_gate, k_best_global, AssignmentProblem};
use crate::density::{Bernoulli, MeasurementRef, PmbmDensity, Track};
use crate::error::{Error, Result};
use crate::gaussian::Innovation;
use crate::logmath::{log_add_exp, log_sum_exp, ln_or_neg_inf};
use crate::models::{ClutterModel, MeasurementModel};
use crate::par::{map_vec, Parallelism};
use crate::trajectory::{MixtureComponent, TrajectoryMixture};

/// Approximation knobs of the update.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateOptions {
    /// Probability mass of the chi-square validation gate. `None` disables
    /// gating.
    pub gate_probability: Option<f64>,
    /// A new track is only started if its detected-leaf weight exceeds the
    /// clutter intensity by this factor. `None` keeps every new track.
    pub new_track_floor_ratio: Option<f64>,
    /// Number of global hypotheses kept per update.
    pub k_best: usize,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            gate_probability: Some(0.999),
            new_track_floor_ratio: Some(1.0 + 1e-4),
            k_best: 20,
            parallelism: Parallelism::default(),
        }
    }
}

impl UpdateOptions {
    /// The recursion without approximations: no gate, no floor, all
    /// hypotheses.
    pub fn exact() -> Self {
        Self {
            gate_probability: None,
            new_track_floor_ratio: None,
            k_best: usize::MAX,
            parallelism: Parallelism::default(),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.gate_probability.is_none() && self.new_track_floor_ratio.is_none()
    }
}

/// Missed-detection reweighting of a normalized mixture. Returns the
/// nondetection mass and the posterior mixture; the posterior is empty when
/// the mass is zero.
pub fn mixture_miss_update(f: &TrajectoryMixture, detection_prob: f64, k: usize) -> (f64, TrajectoryMixture) {
    let factor = |c: &MixtureComponent| if c.is_live(k) { 1.0 - detection_prob } else { 1.0 };
    let mass: f64 = f.components.iter().map(|c| c.weight * factor(c)).sum();
    if mass <= 0.0 {
        return (0.0, TrajectoryMixture::default());
    }
    let comps = f
        .components
        .iter()
        .filter_map(|c| {
            let w = c.weight * factor(c) / mass;
            (w > 0.0).then(|| {
                let mut c = c.clone();
                c.weight = w;
                c
            })
        })
        .collect();
    (mass, TrajectoryMixture::new(comps))
}

/// Live components with their log weights and predicted measurements.
struct LivePrep<'a> {
    items: Vec<(&'a MixtureComponent, f64, Innovation)>,
    /// Index into `items` of the heaviest component, used for gating.
    best: Option<usize>,
}

impl<'a> LivePrep<'a> {
    fn new(f: &'a TrajectoryMixture, meas: &MeasurementModel, k: usize) -> Result<Self> {
        let mut items: Vec<(&MixtureComponent, f64, Innovation)> = Vec::new();
        let mut best: Option<usize> = None;
        for c in f.components.iter().filter(|c| c.is_live(k) && c.weight > 0.0) {
            let innov = c.gaussian.innovation(&meas.h, &meas.r)?;
            if best.is_none_or(|b: usize| c.weight > items[b].0.weight) {
                best = Some(items.len());
            }
            items.push((c, c.weight.ln(), innov));
        }
        Ok(Self { items, best })
    }

    fn gated_in(&self, z: &DVector<f64>, gamma: Option<f64>) -> bool {
        match (gamma, self.best) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(g), Some(b)) => self.items[b].2.mahalanobis2(z) <= g,
        }
    }

    /// `ln Σ w_c N(z; ...)` and the measurement-updated, normalized mixture.
    fn detect(&self, meas: &MeasurementModel, z: &DVector<f64>) -> (f64, TrajectoryMixture) {
        if self.items.is_empty() {
            return (f64::NEG_INFINITY, TrajectoryMixture::default());
        }
        let terms: Vec<f64> = self.items.iter().map(|(_, lw, inn)| lw + inn.log_pdf(z)).collect();
        let total = log_sum_exp(terms.iter().copied());
        if total == f64::NEG_INFINITY {
            return (total, TrajectoryMixture::default());
        }
        let htrz = meas.htrz(z);
        let comps = self
            .items
            .iter()
            .zip(&terms)
            .map(|((c, _, _), t)| {
                MixtureComponent::new(
                    (t - total).exp(),
                    c.birth_time,
                    c.end_time,
                    c.gaussian.update_with(meas.htrh(), &htrz),
                )
            })
            .collect();
        (total, TrajectoryMixture::new(comps))
    }
}

/// Detection update of a normalized mixture: returns
/// `ln(P_D Σ_live w_c N(z; H m_c, H P_c Hᵀ + R))` and the posterior, which
/// keeps only the live components. Without live components the log
/// likelihood is `-inf` and the posterior empty.
pub fn mixture_detect_update(
    f: &TrajectoryMixture,
    meas: &MeasurementModel,
    z: &DVector<f64>,
    k: usize,
) -> Result<(f64, TrajectoryMixture)> {
    if z.len() != meas.meas_dim() {
        return Err(Error::Dimension("measurement size".into()));
    }
    let prep = LivePrep::new(f, meas, k)?;
    let (ll, post) = prep.detect(meas, z);
    Ok((ll + ln_or_neg_inf(meas.detection_prob), post))
}

/// Leaves of one track after the update, and their bookkeeping.
struct Expanded {
    leaves: Vec<Bernoulli>,
    /// Per prior leaf: index of the missed-detection leaf.
    miss_idx: Vec<usize>,
    /// Per prior leaf: log weight gained by missing it.
    miss_delta: Vec<f64>,
    /// Per prior leaf and measurement: detection leaf and its log weight
    /// relative to the missed-detection leaf.
    det: Vec<Vec<Option<(usize, f64)>>>,
}

fn miss_leaf(b: &Bernoulli, pd: f64, k: usize) -> Bernoulli {
    if b.existence <= 0.0 || b.density.is_empty() {
        return b.clone();
    }
    let r = b.existence;
    let (mass, density) = mixture_miss_update(&b.density, pd, k);
    let factor = 1.0 - r + r * mass;
    let existence = if mass > 0.0 { r * mass / factor } else { 0.0 };
    Bernoulli {
        existence,
        density,
        history: b.history.clone(),
        log_weight: b.log_weight + factor.max(f64::MIN_POSITIVE).ln(),
    }
}

fn expand_track(
    track: &Track,
    zs: &[DVector<f64>],
    meas: &MeasurementModel,
    k: usize,
    gamma: Option<f64>,
    exact: bool,
) -> Result<Expanded> {
    let pd = meas.detection_prob;
    let ln_pd = ln_or_neg_inf(pd);
    let h = track.leaves.len();
    let m = zs.len();
    let mut out = Expanded {
        leaves: Vec::with_capacity(h * (1 + m)),
        miss_idx: Vec::with_capacity(h),
        miss_delta: Vec::with_capacity(h),
        det: Vec::with_capacity(h),
    };
    for b in &track.leaves {
        let miss = miss_leaf(b, pd, k);
        out.miss_idx.push(out.leaves.len());
        out.miss_delta.push(miss.log_weight - b.log_weight);
        let miss_lw = miss.log_weight;
        out.leaves.push(miss);

        let prep = if b.existence > 0.0 && b.is_feasible() {
            Some(LivePrep::new(&b.density, meas, k)?)
        } else {
            None
        };
        let mut row = Vec::with_capacity(m);
        for (j, z) in zs.iter().enumerate() {
            let mut history = b.history.clone();
            history.push(MeasurementRef::new(k, j));
            let detected = prep.as_ref().filter(|p| p.gated_in(z, gamma)).and_then(|p| {
                let (ll, density) = p.detect(meas, z);
                let lw = b.log_weight + b.existence.ln() + ln_pd + ll;
                (lw > f64::NEG_INFINITY).then_some((lw, density))
            });
            match detected {
                Some((lw, density)) => {
                    row.push(Some((out.leaves.len(), lw - miss_lw)));
                    out.leaves.push(Bernoulli {
                        existence: 1.0,
                        density,
                        history,
                        log_weight: lw,
                    });
                }
                None => {
                    row.push(None);
                    if exact {
                        out.leaves.push(Bernoulli::infeasible(history));
                    }
                }
            }
        }
        out.det.push(row);
    }
    Ok(out)
}

/// Measurement update at time `k`. The result is not pruned.
pub fn update(
    d: &PmbmDensity,
    zs: &[DVector<f64>],
    meas: &MeasurementModel,
    clutter: &ClutterModel,
    k: usize,
    opts: &UpdateOptions,
) -> Result<PmbmDensity> {
    if d.time != Some(k) {
        return Err(Error::Config(format!("update at time {k} needs a density predicted to {k}")));
    }
    if let Some(z) = zs.iter().find(|z| z.len() != meas.meas_dim()) {
        return Err(Error::Dimension(format!(
            "measurement of size {} for a model of size {}",
            z.len(),
            meas.meas_dim()
        )));
    }
    let pd = meas.detection_prob;
    let exact = opts.is_exact();
    let gamma = match opts.gate_probability {
        Some(p) => Some(chi_square_gate(p, meas.meas_dim())?),
        None => None,
    };
    let n = d.tracks.len();
    let m = zs.len();

    let expanded: Vec<Expanded> = map_vec(opts.parallelism, d.tracks.iter().collect(), |t| {
        expand_track(t, zs, meas, k, gamma, exact)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // New tracks, one per measurement unless clutter-dominated.
    let undetected = LivePrep::new(&d.undetected, meas, k)?;
    let ln_pd = ln_or_neg_inf(pd);
    let mut new_tracks = Vec::new();
    let mut new_track_of_row = Vec::with_capacity(m);
    let mut new_lw = Vec::with_capacity(m);
    for (j, z) in zs.iter().enumerate() {
        let ln_fa = ln_or_neg_inf(clutter.clutter_density(z));
        let (ll, density) = undetected.detect(meas, z);
        let ln_target = ll + ln_pd;
        let lw = log_add_exp(ln_fa, ln_target);
        let existence = if ln_target == f64::NEG_INFINITY { 0.0 } else { (ln_target - lw).exp() };
        let lw = lw.max(f64::MIN_POSITIVE.ln());
        new_lw.push(lw);
        let skip = !exact
            && (existence <= 0.0 || opts.new_track_floor_ratio.is_some_and(|ratio| ln_fa.is_finite() && lw - ln_fa < ratio.ln()));
        if skip {
            new_track_of_row.push(None);
            continue;
        }
        new_track_of_row.push(Some(n + new_tracks.len()));
        let id = MeasurementRef::new(k, j);
        new_tracks.push(Track {
            id,
            leaves: vec![
                Bernoulli::non_existent(),
                Bernoulli {
                    existence,
                    density: if existence > 0.0 { density } else { TrajectoryMixture::default() },
                    history: vec![id],
                    log_weight: lw,
                },
            ],
        });
    }
    let total_tracks = n + new_tracks.len();

    let problems: Vec<AssignmentProblem> = d
        .hypotheses
        .iter()
        .map(|h| {
            let mut base = h.log_weight;
            let mut miss_leaves = Vec::with_capacity(n);
            let mut cost = nalgebra::DMatrix::from_element(m, n + m, f64::INFINITY);
            let mut det_leaves = vec![vec![None; n]; m];
            for (i, e) in expanded.iter().enumerate() {
                let l = h.leaves[i];
                base += e.miss_delta[l];
                miss_leaves.push(e.miss_idx[l]);
                for (j, det) in e.det[l].iter().enumerate() {
                    if let Some((leaf, delta)) = *det {
                        cost[(j, i)] = -delta;
                        det_leaves[j][i] = Some(leaf);
                    }
                }
            }
            for j in 0..m {
                cost[(j, n + j)] = -new_lw[j];
            }
            AssignmentProblem {
                base_log_weight: base,
                cost,
                miss_leaves,
                det_leaves,
                new_track_of_row: new_track_of_row.clone(),
                total_tracks,
            }
        })
        .collect();
    let hypotheses = k_best_global(&problems, opts.k_best.max(1), opts.parallelism);
    if hypotheses.is_empty() {
        return Err(Error::Config("update produced no feasible global hypothesis".into()));
    }

    let mut tracks: Vec<Track> = d
        .tracks
        .iter()
        .zip(expanded)
        .map(|(t, e)| Track { id: t.id, leaves: e.leaves })
        .collect();
    tracks.extend(new_tracks);

    let undetected = TrajectoryMixture::new(
        d.undetected
            .components
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.is_live(k) {
                    c.weight *= 1.0 - pd;
                }
                c
            })
            .collect(),
    );

    let mut out = PmbmDensity {
        time: Some(k),
        undetected,
        tracks,
        hypotheses,
    };
    out.normalize();
    Ok(out)
}
