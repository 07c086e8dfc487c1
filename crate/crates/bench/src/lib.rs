//! Fixtures shared by the benchmarks in `benches/`.

use conjunct_core::predictors::lrp_predict;
use conjunct_core::splitting::{crop_eligible, SplitItem};
use conjunct_core::synthetic::{learnable_events, synthetic_events, SyntheticConfig};
use conjunct_core::{final_risk, CroppedEvent, EligibilityRule, Event, PredictionSet, RiskMap};

/// A synthetic population of `n` events at the dataset's high-risk rate.
pub fn population(n: usize, seed: u64) -> Vec<Event> {
    let cfg = SyntheticConfig {
        n_events: n,
        ..Default::default()
    };
    synthetic_events(&cfg, seed)
}

/// Final risks and LRP predictions over a population.
pub fn scoring_inputs(events: &[Event]) -> (RiskMap, PredictionSet) {
    let truth = events
        .iter()
        .map(|e| (e.event_id().to_string(), final_risk(e).expect("synthetic risks")))
        .collect();
    let cropped = crop_eligible(events, &EligibilityRule::default());
    let inputs: Vec<Event> = cropped.iter().map(|c| c.inputs().clone()).collect();
    (truth, lrp_predict(&inputs).expect("cutoff CDM present"))
}

pub fn split_items(events: &[Event]) -> Vec<SplitItem> {
    events.iter().map(|e| SplitItem::from_event(e).expect("synthetic risks")).collect()
}

pub fn learnable(n: usize, seed: u64) -> Vec<CroppedEvent> {
    crop_eligible(&learnable_events(n, seed), &EligibilityRule::default())
}

/// Per-event minimum miss distance.
pub fn miss_distances(events: &[Event]) -> Vec<f64> {
    events
        .iter()
        .filter_map(|e| e.cdms().iter().filter_map(|c| c.miss_distance).reduce(f64::min))
        .collect()
}
