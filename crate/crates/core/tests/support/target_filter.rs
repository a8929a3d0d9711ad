//! Target-space PMBM filter on single-time Gaussian mixtures, without
//! hypothesis management: it predicts and updates every leaf of every
//! track and leaves the choice of global hypotheses to the caller.

use nalgebra::{DMatrix, DVector};

use pmbm_core::estimation::TargetPmbm;
use pmbm_core::models::Models;

use super::dense::{kalman_predict, kalman_update};
use super::log_gaussian_pdf;

#[derive(Debug, Clone)]
pub struct Comp {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Leaf {
    pub existence: f64,
    pub comps: Vec<Comp>,
    pub log_weight: f64,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub undetected: Vec<Comp>,
    pub tracks: Vec<Vec<Leaf>>,
}

impl FilterState {
    /// Copies a marginalized tracker density; `log_weights[i][l]` are the
    /// leaf weights of the tracker.
    pub fn from_marginal(m: &TargetPmbm, log_weights: &[Vec<f64>]) -> Self {
        let conv = |c: &pmbm_core::density::TargetComponent| Comp {
            weight: c.weight,
            mean: c.mean.clone(),
            cov: c.cov.clone(),
        };
        Self {
            undetected: m.undetected.iter().map(conv).collect(),
            tracks: m
                .tracks
                .iter()
                .zip(log_weights)
                .map(|(t, lw)| {
                    t.iter()
                        .zip(lw)
                        .map(|(b, &lw)| Leaf {
                            existence: b.existence,
                            comps: b.components.iter().map(conv).collect(),
                            log_weight: lw,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn predict(&self, models: &Models) -> Self {
        let (f, q) = (&models.motion.f, &models.motion.q);
        let ps = models.motion.survival_prob;
        let predict_comp = |c: &Comp, scale: f64| {
            let (mean, cov) = kalman_predict(&c.mean, &c.cov, f, q);
            Comp {
                weight: c.weight * scale,
                mean,
                cov,
            }
        };
        let mut undetected: Vec<Comp> = self.undetected.iter().map(|c| predict_comp(c, ps)).collect();
        undetected.extend(models.birth.components.iter().map(|b| Comp {
            weight: b.weight,
            mean: b.mean.clone(),
            cov: b.cov.clone(),
        }));
        let tracks = self
            .tracks
            .iter()
            .map(|t| {
                t.iter()
                    .map(|l| {
                        if l.comps.is_empty() {
                            return l.clone();
                        }
                        Leaf {
                            existence: l.existence * ps,
                            comps: l.comps.iter().map(|c| predict_comp(c, 1.0)).collect(),
                            log_weight: l.log_weight,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { undetected, tracks }
    }

    /// Missed-detection leaf followed by one detection leaf per
    /// measurement, for every prior leaf; then one two-leaf track per
    /// measurement.
    pub fn update(&self, models: &Models, zs: &[DVector<f64>]) -> Self {
        let pd = models.measurement.detection_prob;
        let (h, r) = (&models.measurement.h, &models.measurement.r);
        // log(w N(z; Hm, HPH' + R)) and the updated component, per component.
        let detect = |comps: &[Comp], z: &DVector<f64>| -> (f64, Vec<Comp>) {
            let lls: Vec<f64> = comps
                .iter()
                .map(|c| c.weight.ln() + log_gaussian_pdf(z, &(h * &c.mean), &(h * &c.cov * h.transpose() + r)))
                .collect();
            let max = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = lls.iter().map(|l| (l - max).exp()).sum();
            let total = max + sum.ln();
            let out = comps
                .iter()
                .zip(&lls)
                .map(|(c, l)| {
                    let (mean, cov) = kalman_update(&c.mean, &c.cov, h, r, z);
                    Comp {
                        weight: (l - total).exp(),
                        mean,
                        cov,
                    }
                })
                .collect();
            (total, out)
        };

        let mut tracks: Vec<Vec<Leaf>> = Vec::new();
        for t in &self.tracks {
            let mut leaves = Vec::new();
            for l in t {
                if l.comps.is_empty() || l.existence == 0.0 {
                    leaves.push(l.clone());
                } else {
                    let factor = 1.0 - l.existence * pd;
                    leaves.push(Leaf {
                        existence: l.existence * (1.0 - pd) / factor,
                        comps: l.comps.clone(),
                        log_weight: l.log_weight + factor.ln(),
                    });
                }
                for z in zs {
                    if l.comps.is_empty() || l.existence == 0.0 {
                        leaves.push(Leaf {
                            existence: 0.0,
                            comps: Vec::new(),
                            log_weight: f64::NEG_INFINITY,
                        });
                        continue;
                    }
                    let (ll, comps) = detect(&l.comps, z);
                    leaves.push(Leaf {
                        existence: 1.0,
                        comps,
                        log_weight: l.log_weight + (l.existence * pd).ln() + ll,
                    });
                }
            }
            tracks.push(leaves);
        }
        for z in zs {
            let clutter = models.clutter.clutter_density(z);
            let (ll, comps) = detect(&self.undetected, z);
            let target = pd * ll.exp();
            tracks.push(vec![
                Leaf {
                    existence: 0.0,
                    comps: Vec::new(),
                    log_weight: 0.0,
                },
                Leaf {
                    existence: target / (clutter + target),
                    comps,
                    log_weight: (clutter + target).ln(),
                },
            ]);
        }
        let undetected = self
            .undetected
            .iter()
            .map(|c| Comp {
                weight: c.weight * (1.0 - pd),
                ..c.clone()
            })
            .collect();
        Self { undetected, tracks }
    }
}
