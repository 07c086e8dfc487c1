//! Test-set eligibility, CDM cropping, visible/hold-out sampling and
//! stratified shuffle splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{final_risk, CdmError, Event, RiskClass, RiskMap};
use crate::scoring::{competition_loss, PredictionSet, ScoreError, ScoreOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("event {0} is not eligible for the test set")]
    NotEligible(String),
    #[error("split leaves an empty side ({n_train} train, {n_test} test)")]
    DegenerateSplit { n_train: usize, n_test: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Cdm(#[from] CdmError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Constraints an event must satisfy to appear in the test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EligibilityRule {
    pub min_cdms: usize,
    /// The last CDM must be strictly closer to TCA than this.
    pub last_cdm_max_tca: f64,
    /// The first CDM must be at least this far from TCA.
    pub first_cdm_min_tca: f64,
    /// Inputs keep only CDMs at least this far from TCA.
    pub crop_below: f64,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        EligibilityRule {
            min_cdms: 2,
            last_cdm_max_tca: 1.0,
            first_cdm_min_tca: 2.0,
            crop_below: 2.0,
        }
    }
}

impl EligibilityRule {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.min_cdms < 2 {
            return Err(SplitError::InvalidParameter("min_cdms must be at least 2".into()));
        }
        if self.crop_below < self.last_cdm_max_tca {
            return Err(SplitError::InvalidParameter(
                "crop_below must not be below last_cdm_max_tca".into(),
            ));
        }
        Ok(())
    }
}

pub fn is_eligible(event: &Event, rule: &EligibilityRule) -> bool {
    event.len() >= rule.min_cdms
        && event.last().time_to_tca < rule.last_cdm_max_tca
        && event.first().time_to_tca >= rule.first_cdm_min_tca
        && !event.cdms_before(rule.crop_below).is_empty()
}

/// A test event as seen by a predictor: the CDMs available before the
/// crop plus the withheld final risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CroppedEvent {
    inputs: Event,
    target_risk: f64,
}

impl CroppedEvent {
    pub fn inputs(&self) -> &Event {
        &self.inputs
    }

    pub fn event_id(&self) -> &str {
        self.inputs.event_id()
    }

    pub fn target_risk(&self) -> f64 {
        self.target_risk
    }

    pub fn target_class(&self) -> RiskClass {
        RiskClass::of(self.target_risk)
    }
}

pub fn crop_for_test(event: &Event, rule: &EligibilityRule) -> Result<CroppedEvent, SplitError> {
    if !is_eligible(event, rule) {
        return Err(SplitError::NotEligible(event.event_id().to_string()));
    }
    let target_risk = final_risk(event)?;
    let kept = event.cdms_before(rule.crop_below).to_vec();
    let inputs = Event::new(event.event_id(), kept)?.with_manoeuvre_epoch(event.manoeuvre_epoch());
    Ok(CroppedEvent { inputs, target_risk })
}

/// Crops every eligible event, silently skipping the rest.
pub fn crop_eligible(events: &[Event], rule: &EligibilityRule) -> Vec<CroppedEvent> {
    events
        .iter()
        .filter_map(|e| crop_for_test(e, rule).ok())
        .collect()
}

/// Label used for stratification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitItem {
    pub event_id: String,
    pub class: RiskClass,
    pub mission_id: Option<String>,
}

impl SplitItem {
    pub fn from_cropped(e: &CroppedEvent) -> Self {
        SplitItem {
            event_id: e.event_id().to_string(),
            class: e.target_class(),
            mission_id: e.inputs().mission_id().map(str::to_string),
        }
    }

    pub fn from_event(e: &Event) -> Result<Self, CdmError> {
        Ok(SplitItem {
            event_id: e.event_id().to_string(),
            class: RiskClass::of(final_risk(e)?),
            mission_id: e.mission_id().map(str::to_string),
        })
    }
}

/// How a split was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Eligible events split stratified by risk class; ineligible events
    /// always train.
    Official {
        eligibility: EligibilityRule,
        test_size: f64,
        p_high: f64,
        p_low: f64,
    },
    Stratified {
        test_size: f64,
        stratify_missions: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub visible: Option<BTreeSet<String>>,
    pub seed: u64,
    pub rule: SplitRule,
}

impl DataSplit {
    pub fn check_partition(&self) -> bool {
        self.train.is_disjoint(&self.test)
            && self.visible.as_ref().is_none_or(|v| v.is_subset(&self.test))
    }

    pub fn test_size(&self) -> f64 {
        match self.rule {
            SplitRule::Official { test_size, .. } | SplitRule::Stratified { test_size, .. } => test_size,
        }
    }
}

/// Rounds half away from zero, which `f64::round` already does.
fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Shuffle split that keeps the high-risk proportion on both sides.
///
/// Each stratum receives `round(test_size * n)` test events; if the sum
/// differs from `round(test_size * N)` the largest stratum absorbs the
/// difference.
pub fn stratified_shuffle_split(
    items: &[SplitItem],
    test_size: f64,
    seed: u64,
    stratify_missions: bool,
) -> Result<DataSplit, SplitError> {
    if !(test_size > 0.0 && test_size < 1.0) {
        return Err(SplitError::InvalidParameter(format!("test_size {test_size} not in (0, 1)")));
    }
    let mut strata: BTreeMap<(RiskClass, Option<&str>), Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it.event_id.as_str()) {
            return Err(SplitError::InvalidParameter(format!("duplicate event id {}", it.event_id)));
        }
        let mission = if stratify_missions { it.mission_id.as_deref() } else { None };
        strata.entry((it.class, mission)).or_default().push(&it.event_id);
    }
    for ids in strata.values_mut() {
        ids.sort_unstable();
    }
    let mut quotas: Vec<usize> = strata.values().map(|v| round_count(test_size * v.len() as f64)).collect();
    let wanted = round_count(test_size * items.len() as f64) as i64;
    let diff = wanted - quotas.iter().sum::<usize>() as i64;
    if diff != 0 {
        let largest = strata
            .values()
            .enumerate()
            .max_by_key(|(i, v)| (v.len(), usize::MAX - i))
            .map(|(i, _)| i)
            .expect("non-empty");
        let n = strata.values().nth(largest).unwrap().len() as i64;
        quotas[largest] = (quotas[largest] as i64 + diff).clamp(0, n) as usize;
    }
    let n_test: usize = quotas.iter().sum();
    if n_test == 0 || n_test == items.len() {
        return Err(SplitError::DegenerateSplit {
            n_train: items.len() - n_test,
            n_test,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    for (ids, quota) in strata.values().zip(quotas) {
        let chosen: BTreeSet<usize> = index::sample(&mut rng, ids.len(), quota).into_iter().collect();
        for (i, id) in ids.iter().enumerate() {
            if chosen.contains(&i) {
                test.insert(id.to_string());
            } else {
                train.insert(id.to_string());
            }
        }
    }
    Ok(DataSplit {
        train,
        test,
        visible: None,
        seed,
        rule: SplitRule::Stratified {
            test_size,
            stratify_missions,
        },
    })
}

/// Outcome of drawing a visible subset.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleSample {
    pub ids: BTreeSet<String>,
    /// Set when a class with a positive proportion had no events.
    pub empty_class: bool,
}

fn ceil_count(p: f64, n: usize) -> usize {
    // Tolerance keeps e.g. 0.7 * 10 from rounding up to 8.
    ((p * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
}

/// Samples `ceil(p_high * N_high)` high-risk and `ceil(p_low * N_low)`
/// low-risk ids uniformly without replacement.
pub fn sample_visible(
    truth: &RiskMap,
    p_high: f64,
    p_low: f64,
    seed: u64,
) -> Result<VisibleSample, SplitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_visible_with(truth, p_high, p_low, &mut rng)
}

fn sample_visible_with<R: Rng>(
    truth: &RiskMap,
    p_high: f64,
    p_low: f64,
    rng: &mut R,
) -> Result<VisibleSample, SplitError> {
    for p in [p_high, p_low] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SplitError::InvalidParameter(format!("proportion {p} not in (0, 1]")));
        }
    }
    let (mut high, mut low) = (Vec::new(), Vec::new());
    for (id, &r) in truth {
        if RiskClass::of(r).is_high() {
            high.push(id);
        } else {
            low.push(id);
        }
    }
    let mut ids = BTreeSet::new();
    for (class, p) in [(&high, p_high), (&low, p_low)] {
        let k = ceil_count(p, class.len());
        for i in index::sample(rng, class.len(), k) {
            ids.insert(class[i].clone());
        }
    }
    Ok(VisibleSample {
        ids,
        empty_class: high.is_empty() || low.is_empty(),
    })
}

/// Grid and repetition count for the visible-subset experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub p_high: Vec<f64>,
    pub p_low: Vec<f64>,
    pub draws: usize,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        let steps: Vec<f64> = (5..=9).map(|i| i as f64 / 10.0).collect();
        SensitivityGrid {
            p_high: steps.clone(),
            p_low: steps,
            draws: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub p_low: f64,
    pub p_high: f64,
    /// Mean of `|L(visible) - L(full)| / L(full)` over the draws.
    pub mean_relative_change: f64,
}

/// Scores the full test set and `draws` random visible subsets per grid
/// cell, reporting the mean relative score change.
pub fn visible_sensitivity_experiment(
    truth: &RiskMap,
    preds: &PredictionSet,
    grid: &SensitivityGrid,
    seed: u64,
) -> Result<Vec<SensitivityCell>, SplitError> {
    if grid.draws == 0 {
        return Err(SplitError::InvalidParameter("draws must be positive".into()));
    }
    let opts = ScoreOptions::default();
    let full = competition_loss(truth, preds, opts)?.loss_value()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(grid.p_high.len() * grid.p_low.len());
    for &p_low in &grid.p_low {
        for &p_high in &grid.p_high {
            let mut acc = 0.0;
            for _ in 0..grid.draws {
                let vis = sample_visible_with(truth, p_high, p_low, &mut rng)?;
                let t = crate::scoring::restrict(truth, &vis.ids);
                let l = competition_loss(&t, &preds.subset(&vis.ids), opts)?.loss_value()?;
                acc += (l - full).abs() / full;
            }
            out.push(SensitivityCell {
                p_low,
                p_high,
                mean_relative_change: acc / grid.draws as f64,
            });
        }
    }
    Ok(out)
}

/// The nineteen test fractions 0.05, 0.10, ..., 0.95.
pub fn default_test_sizes() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Seed of the `index`-th virtual competition.
pub fn competition_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// One stratified split per virtual competition, each with a test fraction
/// drawn uniformly from `test_sizes`.
pub fn virtual_competition_splits(
    items: &[SplitItem],
    test_sizes: &[f64],
    n_competitions: usize,
    seed: u64,
    stratify_missions: bool,
) -> Result<Vec<DataSplit>, SplitError> {
    if n_competitions == 0 || test_sizes.is_empty() {
        return Err(SplitError::InvalidParameter(
            "need at least one competition and one test size".into(),
        ));
    }
    (0..n_competitions as u64)
        .map(|i| virtual_competition_split(items, test_sizes, seed, i, stratify_missions))
        .collect()
}

/// The `index`-th split of [`virtual_competition_splits`], computed alone.
pub fn virtual_competition_split(
    items: &[SplitItem],
    test_sizes: &[f64],
    seed: u64,
    index: u64,
    stratify_missions: bool,
) -> Result<DataSplit, SplitError> {
    if test_sizes.is_empty() {
        return Err(SplitError::InvalidParameter("no test sizes".into()));
    }
    let s = competition_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let ts = test_sizes[rng.random_range(0..test_sizes.len())];
    stratified_shuffle_split(items, ts, rng.random(), stratify_missions).map(|mut split| {
        split.seed = s;
        split
    })
}

/// Test fraction drawn for the `index`-th virtual competition.
pub fn competition_test_size(test_sizes: &[f64], seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(competition_seed(seed, index));
    test_sizes[rng.random_range(0..test_sizes.len())]
}

/// Split reproducing the competition procedure: eligible events are divided
/// stratified by class, ineligible events go to train, and a visible subset
/// of the test set is drawn.
pub fn official_split(
    events: &[Event],
    rule: &EligibilityRule,
    test_size: f64,
    p_high: f64,
    p_low: f64,
    seed: u64,
) -> Result<(DataSplit, RiskMap), SplitError> {
    rule.validate()?;
    let mut truth = RiskMap::new();
    let mut eligible = Vec::new();
    let mut ineligible = BTreeSet::new();
    for e in events {
        let r = final_risk(e)?;
        truth.insert(e.event_id().to_string(), r);
        if is_eligible(e, rule) {
            eligible.push(SplitItem {
                event_id: e.event_id().to_string(),
                class: RiskClass::of(r),
                mission_id: e.mission_id().map(str::to_string),
            });
        } else {
            ineligible.insert(e.event_id().to_string());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = stratified_shuffle_split(&eligible, test_size, rng.random(), false)?;
    split.train.extend(ineligible);
    let test_truth = crate::scoring::restrict(&truth, &split.test);
    let visible = sample_visible_with(&test_truth, p_high, p_low, &mut rng)?;
    split.visible = Some(visible.ids);
    split.seed = seed;
    split.rule = SplitRule::Official {
        eligibility: *rule,
        test_size,
        p_high,
        p_low,
    };
    Ok((split, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::Cdm;
    use proptest::prelude::*;

    fn event(tcas: &[f64]) -> Event {
        Event::new("e", tcas.iter().map(|&t| Cdm::new(t, -7.0)).collect()).unwrap()
    }

    fn brute_eligible(e: &Event) -> bool {
        let tcas: Vec<f64> = e.cdms().iter().map(|c| c.time_to_tca).collect();
        let enough = tcas.len() >= 2;
        let last_close = tcas.iter().cloned().fold(f64::INFINITY, f64::min) < 1.0;
        let first = tcas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let survives = tcas.iter().filter(|&&t| t >= 2.0).count() >= 1;
        enough && last_close && first >= 2.0 && survives
    }

    #[test]
    fn eligibility_examples() {
        let rule = EligibilityRule::default();
        assert!(is_eligible(&event(&[3.0, 2.5, 0.4]), &rule));
        assert!(!is_eligible(&event(&[3.0, 1.5]), &rule));
        assert!(!is_eligible(&event(&[0.5]), &rule));
        assert!(!is_eligible(&event(&[1.9, 0.5]), &rule));
        assert!(is_eligible(&event(&[2.0, 0.999]), &rule));
        assert!(!is_eligible(&event(&[2.0, 1.0]), &rule));
    }

    #[test]
    fn rule_validation() {
        assert!(EligibilityRule::default().validate().is_ok());
        let bad = EligibilityRule { min_cdms: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EligibilityRule { crop_below: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn crop_keeps_target() {
        let e = Event::new(
            "x",
            vec![Cdm::new(3.0, -8.0), Cdm::new(2.2, -6.5), Cdm::new(1.5, -6.0), Cdm::new(0.5, -5.0)],
        )
        .unwrap();
        let c = crop_for_test(&e, &EligibilityRule::default()).unwrap();
        assert_eq!(c.inputs().len(), 2);
        assert_eq!(c.target_risk(), -5.0);
        assert!(matches!(
            crop_for_test(&event(&[1.5, 0.5]), &EligibilityRule::default()),
            Err(SplitError::NotEligible(_))
        ));
    }

    fn items(n_high: usize, n_low: usize) -> Vec<SplitItem> {
        (0..n_high + n_low)
            .map(|i| SplitItem {
                event_id: format!("{i:05}"),
                class: if i < n_high { RiskClass::High } else { RiskClass::Low },
                mission_id: Some((i % 3).to_string()),
            })
            .collect()
    }

    #[test]
    fn stratified_small() {
        let s = stratified_shuffle_split(&items(2, 2), 0.5, 1, false).unwrap();
        assert!(s.check_partition());
        assert_eq!(s.test.len(), 2);
        let highs = s.test.iter().filter(|id| id.as_str() < "00002").count();
        assert_eq!(highs, 1);
    }

    #[test]
    fn stratified_degenerate() {
        assert!(matches!(
            stratified_shuffle_split(&items(0, 3), 0.1, 1, false),
            Err(SplitError::DegenerateSplit { .. })
        ));
        assert!(stratified_shuffle_split(&items(1, 3), 1.0, 1, false).is_err());
    }

    #[test]
    fn stratified_reference_counts() {
        let it = items(216, 10244);
        let s = stratified_shuffle_split(&it, 0.2, 7, false).unwrap();
        let highs = s.test.iter().filter(|id| id.as_str() < "00216").count();
        assert_eq!(highs, 43);
        assert_eq!(s.test.len(), 2092);
    }

    #[test]
    fn mission_stratification_balances_missions() {
        let it = items(30, 300);
        let s = stratified_shuffle_split(&it, 0.5, 3, true).unwrap();
        for m in 0..3 {
            let total = it.iter().filter(|i| i.mission_id.as_deref() == Some(&m.to_string())).count();
            let in_test = it
                .iter()
                .filter(|i| i.mission_id.as_deref() == Some(&m.to_string()) && s.test.contains(&i.event_id))
                .count();
            assert!((in_test as f64 - total as f64 / 2.0).abs() <= 1.0);
        }
    }

    fn truth(n_high: usize, n_low: usize) -> RiskMap {
        (0..n_high + n_low)
            .map(|i| (format!("{i:04}"), if i < n_high { -5.0 } else { -9.0 }))
            .collect()
    }

    #[test]
    fn visible_counts() {
        let t = truth(10, 100);
        let v = sample_visible(&t, 0.9, 0.9, 4).unwrap();
        let highs = v.ids.iter().filter(|id| t[*id] >= -6.0).count();
        assert_eq!((highs, v.ids.len() - highs), (9, 90));
        assert_eq!(sample_visible(&truth(150, 0), 0.9, 0.5, 1).unwrap().ids.len(), 135);
        let all = sample_visible(&t, 1.0, 1.0, 4).unwrap();
        assert_eq!(all.ids.len(), t.len());
        assert_eq!(sample_visible(&t, 0.7, 0.3, 11).unwrap(), sample_visible(&t, 0.7, 0.3, 11).unwrap());
        assert_eq!(ceil_count(0.7, 10), 7);
    }

    #[test]
    fn visible_empty_class_warns() {
        let v = sample_visible(&truth(0, 20), 0.9, 0.5, 4).unwrap();
        assert!(v.empty_class);
        assert_eq!(v.ids.len(), 10);
        assert!(sample_visible(&truth(1, 1), 0.0, 0.5, 1).is_err());
    }

    #[test]
    fn competition_splits() {
        let it = items(20, 400);
        let a = virtual_competition_splits(&it, &default_test_sizes(), 30, 5, false).unwrap();
        let b = virtual_competition_splits(&it, &default_test_sizes(), 30, 5, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(virtual_competition_splits(&it, &[0.2], 1, 5, false).unwrap().len(), 1);
        assert_eq!(default_test_sizes().len(), 19);
        assert_eq!(default_test_sizes()[3], 0.2);
    }

    #[test]
    fn competition_test_size_frequencies() {
        // Expected count per size for 10000 draws over 19 sizes is ~526.
        let it = items(4, 40);
        let splits = virtual_competition_splits(&it, &default_test_sizes(), 10_000, 99, false).unwrap();
        let mut counts = BTreeMap::new();
        for s in &splits {
            *counts.entry((s.test_size() * 100.0).round() as i64).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 19);
        for (_, c) in counts {
            assert!((c as f64 - 10_000.0 / 19.0).abs() < 90.0, "{c}");
        }
    }

    proptest! {
        #[test]
        fn eligibility_matches_brute_force(
            tcas in proptest::collection::btree_set(0u32..700, 1..8)
        ) {
            let e = event(&tcas.iter().map(|&t| t as f64 / 100.0).collect::<Vec<_>>());
            prop_assert_eq!(is_eligible(&e, &EligibilityRule::default()), brute_eligible(&e));
        }

        #[test]
        fn crop_never_leaks(tcas in proptest::collection::btree_set(0u32..700, 1..10)) {
            let e = event(&tcas.iter().map(|&t| t as f64 / 100.0).collect::<Vec<_>>());
            if let Ok(c) = crop_for_test(&e, &EligibilityRule::default()) {
                prop_assert!(c.inputs().cdms().iter().all(|x| x.time_to_tca >= 2.0));
            }
        }

        #[test]
        fn stratification_error_within_one(
            n_high in 1usize..60, n_low in 1usize..600, ts in 1usize..20, seed in any::<u64>()
        ) {
            let test_size = ts as f64 / 20.0;
            let it = items(n_high, n_low);
            if let Ok(s) = stratified_shuffle_split(&it, test_size, seed, false) {
                prop_assert!(s.check_partition());
                prop_assert_eq!(s.train.len() + s.test.len(), it.len());
                let frac = n_high as f64 / it.len() as f64;
                let hi = |set: &BTreeSet<String>| set.iter().filter(|id| id.as_str() < format!("{n_high:05}").as_str()).count();
                prop_assert!((hi(&s.test) as f64 - frac * s.test.len() as f64).abs() <= 1.0);
                prop_assert!((hi(&s.train) as f64 - frac * s.train.len() as f64).abs() <= 1.0);
            }
        }
    }
}
