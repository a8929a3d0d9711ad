#[macro_use]
mod support;

use proptest::prelude::*;

use pmbm_core::density::PmbmDensity;
use pmbm_core::models::Models;
use pmbm_core::predict::{predict_all, predict_current};
use support::dense::kalman_predict;
use support::random_density::{random_density, Shape};
use support::{matrix_close, vector_close};

fn models(ps: f64) -> Models {
    support::cv_models(ps, 0.9, 1e-4, 100.0, &[(0.2, [0.0, 0.0, 1.0, 0.0], 30.0), (0.05, [50.0, 0.0, 0.0, 0.0], 10.0)])
}

fn shape(time: usize, dead: bool) -> Shape {
    Shape {
        time,
        max_tracks: 3,
        max_leaves: 3,
        max_components: 3,
        max_hypotheses: 4,
        dead,
    }
}

fn same_structure(a: &PmbmDensity, b: &PmbmDensity) -> bool {
    a.hypotheses == b.hypotheses
        && a.tracks.len() == b.tracks.len()
        && a.tracks.iter().zip(&b.tracks).all(|(x, y)| x.id == y.id && x.leaves.len() == y.leaves.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    fn current_prediction_scales_existence(seed in any::<u64>(), k in 0usize..5, ps in 0.05f64..1.0) {
        let m = models(ps);
        let mut rng = support::rng(seed);
        let d = random_density(&mut rng, &m, &shape(k, false));
        let p = predict_current(&d, &m.motion, &m.birth, k + 1).unwrap();
        prop_assert_eq!(p.time, Some(k + 1));
        prop_assert!(same_structure(&d, &p));
        for (t, u) in d.tracks.iter().zip(&p.tracks) {
            for (a, b) in t.leaves.iter().zip(&u.leaves) {
                prop_assert_eq!(b.existence, a.existence * ps);
                prop_assert_eq!(b.log_weight, a.log_weight);
                prop_assert_eq!(&b.history, &a.history);
                prop_assert_eq!(a.density.len(), b.density.len());
                for (x, y) in a.density.components.iter().zip(&b.density.components) {
                    prop_assert_eq!(y.weight, x.weight);
                    prop_assert_eq!(y.key(), (x.birth_time, k + 1));
                    prop_assert_eq!(y.gaussian.len(), x.gaussian.len() + 1);
                    let (m0, p0) = x.gaussian.marginal_last_step().unwrap();
                    let (m1, p1) = kalman_predict(&m0, &p0, &m.motion.f, &m.motion.q);
                    let (gm, gp) = y.gaussian.marginal_last_step().unwrap();
                    prop_assert!(vector_close(&gm, &m1, 1e-9) && matrix_close(&gp, &p1, 1e-9));
                }
            }
        }
        let old = d.undetected.len();
        prop_assert_eq!(p.undetected.len(), old + m.birth.components.len());
        for (x, y) in d.undetected.components.iter().zip(&p.undetected.components) {
            prop_assert_eq!(y.weight, x.weight * ps);
            prop_assert_eq!(y.key(), (x.birth_time, k + 1));
        }
        for (b, y) in m.birth.components.iter().zip(&p.undetected.components[old..]) {
            prop_assert_eq!(y.weight, b.weight);
            prop_assert_eq!(y.key(), (k + 1, k + 1));
        }
    }

    fn all_prediction_keeps_existence_and_mass(seed in any::<u64>(), k in 0usize..5, ps in 0.05f64..1.0) {
        let m = models(ps);
        let mut rng = support::rng(seed);
        let d = random_density(&mut rng, &m, &shape(k, true));
        let p = predict_all(&d, &m.motion, &m.birth, k + 1).unwrap();
        prop_assert!(same_structure(&d, &p));
        for (t, u) in d.tracks.iter().zip(&p.tracks) {
            for (a, b) in t.leaves.iter().zip(&u.leaves) {
                prop_assert_eq!(b.existence, a.existence);
                prop_assert_eq!(b.log_weight, a.log_weight);
                let before: f64 = a.density.components.iter().map(|c| c.weight).sum();
                let after: f64 = b.density.components.iter().map(|c| c.weight).sum();
                prop_assert!((before - after).abs() <= 1e-12, "{} vs {}", before, after);
                // Live components split into an ended and an extended copy.
                let live_before: f64 = a.density.components.iter().filter(|c| c.is_live(k)).map(|c| c.weight).sum();
                let live_after: f64 = b.density.components.iter().filter(|c| c.is_live(k + 1)).map(|c| c.weight).sum();
                prop_assert!((live_after - ps * live_before).abs() <= 1e-12);
                prop_assert!(b.density.has_distinct_keys());
            }
        }
        let mass = |d: &PmbmDensity| d.undetected.components.iter().map(|c| c.weight).sum::<f64>();
        prop_assert!((mass(&p) - mass(&d) - m.birth.total_rate()).abs() <= 1e-12);
    }

    fn hypothesis_counts_are_preserved(seed in any::<u64>(), k in 0usize..4) {
        let m = models(0.9);
        let mut rng = support::rng(seed);
        for dead in [false, true] {
            let d = random_density(&mut rng, &m, &shape(k, dead));
            let p = if dead {
                predict_all(&d, &m.motion, &m.birth, k + 1).unwrap()
            } else {
                predict_current(&d, &m.motion, &m.birth, k + 1).unwrap()
            };
            prop_assert_eq!(p.hypotheses.len(), d.hypotheses.len());
            prop_assert_eq!(p.leaf_count(), d.leaf_count());
            p.validate(1e-9).unwrap();
        }
    }
}

fn prediction_rejects_time_gaps() {
    let m = models(0.9);
    let mut rng = support::rng(0);
    let d = random_density(&mut rng, &m, &shape(2, false));
    assert!(predict_current(&d, &m.motion, &m.birth, 4).is_err());
    assert!(predict_all(&d, &m.motion, &m.birth, 2).is_err());
}

checks![
    current_prediction_scales_existence,
    all_prediction_keeps_existence_and_mass,
    hypothesis_counts_are_preserved,
    prediction_rejects_time_gaps,
];
