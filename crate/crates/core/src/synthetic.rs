//! Seeded synthetic event populations for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cdm::{Cdm, Event};

/// Shape of a generic synthetic population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_events: usize,
    /// Fraction of events whose final risk is high.
    pub high_fraction: f64,
    /// Fraction of low events stored at the -30 floor.
    pub floor_fraction: f64,
    pub n_missions: usize,
    pub min_cdms: usize,
    pub max_cdms: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_events: 1000,
            high_fraction: 0.0207,
            floor_fraction: 0.5,
            n_missions: 8,
            min_cdms: 3,
            max_cdms: 20,
        }
    }
}

const OBJECT_TYPES: [&str; 4] = ["PAYLOAD", "DEBRIS", "ROCKET BODY", "UNKNOWN"];

fn attributes(rng: &mut ChaCha8Rng, cdm: &mut Cdm, mission: &str, kind: &str) {
    cdm.mission_id = Some(mission.to_string());
    cdm.c_object_type = Some(kind.to_string());
    cdm.t_span = Some(rng.random_range(0.1..30.0));
    cdm.miss_distance = Some(rng.random_range(50.0..60_000.0));
    cdm.relative_speed = Some(rng.random_range(100.0..15_000.0));
    cdm.max_risk_estimate = Some(rng.random_range(-10.0..-2.0));
    cdm.max_risk_scaling = Some(rng.random_range(0.0..50.0));
    cdm.mahalanobis_distance = Some(rng.random_range(0.0..200.0));
    cdm.c_position_covariance_det = Some(rng.random_range(0.0..1e9));
    cdm.c_obs_used = Some(rng.random_range(0..500) as f64);
}

/// Generates events whose CDMs span roughly seven days down to under one
/// day before TCA, with exactly `round(high_fraction * n_events)` high
/// final risks.
pub fn synthetic_events(config: &SyntheticConfig, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_high = (config.high_fraction * config.n_events as f64).round() as usize;
    let high = rand::seq::index::sample(&mut rng, config.n_events, n_high.min(config.n_events));
    let mut is_high = vec![false; config.n_events];
    for i in high {
        is_high[i] = true;
    }
    (0..config.n_events)
        .map(|i| {
            let mission = format!("m{}", rng.random_range(0..config.n_missions.max(1)));
            let kind = OBJECT_TYPES[rng.random_range(0..OBJECT_TYPES.len())];
            let n = rng.random_range(config.min_cdms.max(1)..=config.max_cdms.max(config.min_cdms.max(1)));
            let final_r: f64 = if is_high[i] {
                rng.random_range(-6.0..-2.5)
            } else if rng.random::<f64>() < config.floor_fraction {
                -30.0
            } else {
                rng.random_range(-20.0..-6.0)
            };
            let first = rng.random_range(5.0..7.0);
            let last = rng.random_range(0.05..0.95);
            let mut cdms = Vec::with_capacity(n);
            let step = if n > 1 { (first - last) / (n - 1) as f64 } else { 0.0 };
            for j in 0..n {
                let tca = first - step * j as f64;
                let r = if j + 1 == n {
                    final_r
                } else {
                    (final_r + rng.random_range(-2.0..2.0)).clamp(-30.0, 0.0)
                };
                let mut c = Cdm::new(tca, r);
                attributes(&mut rng, &mut c, &mission, kind);
                cdms.push(c);
            }
            Event::new(format!("{i}"), cdms).expect("generated events are valid")
        })
        .collect()
}

/// Names of the informative features in [`learnable_events`].
pub const LEARNABLE_FEATURES: [&str; 3] = ["feat_a", "feat_b", "feat_c"];

/// Events whose risk change `h = r - r_-2` is a noisy linear function of
/// three features on the latest CDM before the cutoff. Latest known risks
/// sit near the high-risk threshold, so predicting `h` changes the
/// classification of many events.
pub fn learnable_events(n_events: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_events)
        .map(|i| {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let noise = rng.random_range(-0.15..0.15);
            let h = 1.6 * x[0] - 1.0 * x[1] + 0.6 * x[2] + noise;
            let r2: f64 = rng.random_range(-8.0..-4.0);
            let mission = format!("m{}", i % 4);
            let mut early = Cdm::new(rng.random_range(4.0..6.0), (r2 + rng.random_range(-1.0..1.0)).clamp(-30.0, 0.0));
            let mut latest = Cdm::new(rng.random_range(2.0..3.5), r2);
            let mut last = Cdm::new(rng.random_range(0.1..0.9), (r2 + h).clamp(-30.0, 0.0));
            for c in [&mut early, &mut latest, &mut last] {
                attributes(&mut rng, c, &mission, OBJECT_TYPES[i % 4]);
            }
            for (name, v) in LEARNABLE_FEATURES.iter().zip(x) {
                latest.features.insert(name.to_string(), v);
            }
            Event::new(format!("L{i}"), vec![early, latest, last]).expect("generated events are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::{final_risk, RiskClass};
    use crate::splitting::{is_eligible, EligibilityRule};

    #[test]
    fn population_shape() {
        let cfg = SyntheticConfig {
            n_events: 500,
            high_fraction: 0.1,
            ..Default::default()
        };
        let ev = synthetic_events(&cfg, 1);
        assert_eq!(ev.len(), 500);
        let highs = ev.iter().filter(|e| RiskClass::of(final_risk(e).unwrap()).is_high()).count();
        assert_eq!(highs, 50);
        let rule = EligibilityRule::default();
        assert!(ev.iter().all(|e| is_eligible(e, &rule)));
        assert_eq!(ev, synthetic_events(&cfg, 1));
        assert_ne!(ev, synthetic_events(&cfg, 2));
    }

    #[test]
    fn learnable_delta() {
        for e in learnable_events(50, 3) {
            let latest = e.latest_cdm_before(2.0).unwrap();
            let x: Vec<f64> = LEARNABLE_FEATURES.iter().map(|n| latest.value(n).unwrap()).collect();
            let h = e.last().risk.unwrap() - latest.risk.unwrap();
            let lin = 1.6 * x[0] - x[1] + 0.6 * x[2];
            assert!((h - lin).abs() <= 0.15 + 1e-12);
        }
    }
}
