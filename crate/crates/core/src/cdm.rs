//! Conjunction data messages, events and elementary risk semantics.
//!
//! Risks are always carried as `log10` collision probabilities. A value of
//! `-30` is the conventional "negligible" marker and is stored as ordinary
//! data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// log10 risk at or above which an event counts as high risk.
pub const HIGH_RISK_THRESHOLD: f64 = -6.0;

/// Lowest admissible log10 risk.
pub const RISK_FLOOR: f64 = -30.0;

/// Cutoff (days before TCA) for the latest risk known to operators.
pub const DEFAULT_CUTOFF_DAYS: f64 = 2.0;

/// Event-id to log10 risk, ordered by id.
pub type RiskMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdmError {
    #[error("no CDM of the event carries a risk value")]
    NoRisk,
    #[error("no CDM at or before {cutoff} days to TCA")]
    NoCdmBeforeCutoff { cutoff: f64 },
    #[error("event has no CDMs")]
    EmptyEvent,
    #[error("duplicate time_to_tca {time_to_tca} in event {event_id}")]
    DuplicateTimestamp { event_id: String, time_to_tca: f64 },
    #[error("CDMs of event {event_id} disagree on mission_id")]
    MixedMission { event_id: String },
    #[error("invalid value for {field}: {value}")]
    InvalidField { field: &'static str, value: f64 },
}

/// High/low risk label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskClass {
    High,
    Low,
}

impl RiskClass {
    /// Labels a log10 risk; the threshold itself is high risk.
    pub fn of(risk: f64) -> Self {
        if risk >= HIGH_RISK_THRESHOLD {
            RiskClass::High
        } else {
            RiskClass::Low
        }
    }

    pub fn is_high(self) -> bool {
        self == RiskClass::High
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskClass::High => f.write_str("high"),
            RiskClass::Low => f.write_str("low"),
        }
    }
}

/// One conjunction data message.
///
/// The attributes used by the published rules are named fields; every other
/// numeric attribute lives in `features`. An attribute that was not reported
/// is `None` (or absent from the map), never imputed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cdm {
    /// Days between CDM creation and closest approach.
    pub time_to_tca: f64,
    pub risk: Option<f64>,
    pub mission_id: Option<String>,
    pub c_object_type: Option<String>,
    /// Target size in metres.
    pub t_span: Option<f64>,
    /// Metres.
    pub miss_distance: Option<f64>,
    pub max_risk_estimate: Option<f64>,
    pub max_risk_scaling: Option<f64>,
    pub mahalanobis_distance: Option<f64>,
    pub c_position_covariance_det: Option<f64>,
    pub c_obs_used: Option<f64>,
    /// m/s.
    pub relative_speed: Option<f64>,
    pub features: BTreeMap<String, f64>,
    /// Absolute creation epoch in days, present only before anonymization.
    #[serde(default)]
    pub creation_epoch: Option<f64>,
}

/// Names of the numeric attributes stored as named [`Cdm`] fields.
pub const NAMED_NUMERIC: [&str; 10] = [
    "time_to_tca",
    "risk",
    "t_span",
    "miss_distance",
    "max_risk_estimate",
    "max_risk_scaling",
    "mahalanobis_distance",
    "c_position_covariance_det",
    "c_obs_used",
    "relative_speed",
];

impl Cdm {
    pub fn new(time_to_tca: f64, risk: f64) -> Self {
        Cdm {
            time_to_tca,
            risk: Some(risk),
            ..Default::default()
        }
    }

    /// Looks up any numeric attribute by its schema name.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "time_to_tca" => Some(self.time_to_tca),
            "risk" => self.risk,
            "t_span" => self.t_span,
            "miss_distance" => self.miss_distance,
            "max_risk_estimate" => self.max_risk_estimate,
            "max_risk_scaling" => self.max_risk_scaling,
            "mahalanobis_distance" => self.mahalanobis_distance,
            "c_position_covariance_det" => self.c_position_covariance_det,
            "c_obs_used" => self.c_obs_used,
            "relative_speed" => self.relative_speed,
            other => self.features.get(other).copied(),
        }
    }

    /// Sets a numeric attribute by schema name. `None` clears it.
    pub fn set_value(&mut self, name: &str, value: Option<f64>) {
        let slot = match name {
            "time_to_tca" => {
                self.time_to_tca = value.unwrap_or(f64::NAN);
                return;
            }
            "risk" => &mut self.risk,
            "t_span" => &mut self.t_span,
            "miss_distance" => &mut self.miss_distance,
            "max_risk_estimate" => &mut self.max_risk_estimate,
            "max_risk_scaling" => &mut self.max_risk_scaling,
            "mahalanobis_distance" => &mut self.mahalanobis_distance,
            "c_position_covariance_det" => &mut self.c_position_covariance_det,
            "c_obs_used" => &mut self.c_obs_used,
            "relative_speed" => &mut self.relative_speed,
            other => {
                match value {
                    Some(v) => self.features.insert(other.to_string(), v),
                    None => self.features.remove(other),
                };
                return;
            }
        };
        *slot = value;
    }

    /// Names of every numeric attribute that is present on this CDM.
    pub fn present_numeric(&self) -> impl Iterator<Item = &str> + '_ {
        NAMED_NUMERIC
            .iter()
            .copied()
            .filter(|n| self.value(n).is_some())
            .chain(self.features.keys().map(String::as_str))
    }

    pub fn risk_class(&self) -> Option<RiskClass> {
        self.risk.map(RiskClass::of)
    }

    pub fn validate(&self) -> Result<(), CdmError> {
        let tca = self.time_to_tca;
        if !tca.is_finite() || tca < 0.0 {
            return Err(CdmError::InvalidField {
                field: "time_to_tca",
                value: tca,
            });
        }
        if let Some(r) = self.risk {
            if !r.is_finite() || !(RISK_FLOOR..=0.0).contains(&r) {
                return Err(CdmError::InvalidField { field: "risk", value: r });
            }
        }
        for (field, v) in [
            ("miss_distance", self.miss_distance),
            ("relative_speed", self.relative_speed),
            ("t_span", self.t_span),
        ] {
            if let Some(v) = v {
                if v.is_nan() || v < 0.0 {
                    return Err(CdmError::InvalidField { field, value: v });
                }
            }
        }
        Ok(())
    }
}

/// Time series of CDMs for one close approach, ordered by decreasing
/// `time_to_tca` (oldest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    event_id: String,
    cdms: Vec<Cdm>,
    manoeuvre_epoch: Option<f64>,
    /// Absolute TCA epoch in days, present only before anonymization.
    #[serde(default)]
    tca_epoch: Option<f64>,
}

impl Event {
    /// Validates and orders the CDMs. Two CDMs with the same `time_to_tca`
    /// are rejected.
    pub fn new(event_id: impl Into<String>, mut cdms: Vec<Cdm>) -> Result<Self, CdmError> {
        let event_id = event_id.into();
        if cdms.is_empty() {
            return Err(CdmError::EmptyEvent);
        }
        for cdm in &cdms {
            cdm.validate()?;
        }
        cdms.sort_by(|a, b| b.time_to_tca.total_cmp(&a.time_to_tca));
        if let Some(w) = cdms.windows(2).find(|w| w[0].time_to_tca == w[1].time_to_tca) {
            return Err(CdmError::DuplicateTimestamp {
                event_id,
                time_to_tca: w[0].time_to_tca,
            });
        }
        let mission = &cdms[0].mission_id;
        if cdms.iter().any(|c| &c.mission_id != mission) {
            return Err(CdmError::MixedMission { event_id });
        }
        Ok(Event {
            event_id,
            cdms,
            manoeuvre_epoch: None,
            tca_epoch: None,
        })
    }

    pub fn with_manoeuvre_epoch(mut self, epoch: Option<f64>) -> Self {
        self.manoeuvre_epoch = epoch;
        self
    }

    pub fn with_tca_epoch(mut self, epoch: Option<f64>) -> Self {
        self.tca_epoch = epoch;
        self
    }

    pub fn event_id(&self) -> &str {
        &self.event_id
    }

    pub fn cdms(&self) -> &[Cdm] {
        &self.cdms
    }

    pub fn manoeuvre_epoch(&self) -> Option<f64> {
        self.manoeuvre_epoch
    }

    pub fn tca_epoch(&self) -> Option<f64> {
        self.tca_epoch
    }

    pub fn mission_id(&self) -> Option<&str> {
        self.cdms[0].mission_id.as_deref()
    }

    /// Earliest CDM (largest `time_to_tca`).
    pub fn first(&self) -> &Cdm {
        &self.cdms[0]
    }

    /// Most recent CDM (smallest `time_to_tca`).
    pub fn last(&self) -> &Cdm {
        self.cdms.last().expect("event is non-empty")
    }

    pub fn len(&self) -> usize {
        self.cdms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn into_parts(self) -> (String, Vec<Cdm>, Option<f64>, Option<f64>) {
        (self.event_id, self.cdms, self.manoeuvre_epoch, self.tca_epoch)
    }

    pub(crate) fn from_parts_unchecked(
        event_id: String,
        cdms: Vec<Cdm>,
        manoeuvre_epoch: Option<f64>,
        tca_epoch: Option<f64>,
    ) -> Self {
        debug_assert!(!cdms.is_empty());
        Event {
            event_id,
            cdms,
            manoeuvre_epoch,
            tca_epoch,
        }
    }

    /// CDMs released at least `cutoff` days before TCA.
    pub fn cdms_before(&self, cutoff: f64) -> &[Cdm] {
        let end = self.cdms.partition_point(|c| c.time_to_tca >= cutoff);
        &self.cdms[..end]
    }

    /// Most recent CDM at least `cutoff` days before TCA that carries a risk.
    pub fn latest_cdm_before(&self, cutoff: f64) -> Result<&Cdm, CdmError> {
        self.cdms_before(cutoff)
            .iter()
            .rev()
            .find(|c| c.risk.is_some())
            .ok_or(CdmError::NoCdmBeforeCutoff { cutoff })
    }
}

/// Risk of the most recent CDM that reports one.
pub fn final_risk(event: &Event) -> Result<f64, CdmError> {
    event
        .cdms()
        .iter()
        .rev()
        .find_map(|c| c.risk)
        .ok_or(CdmError::NoRisk)
}

/// Risk of the most recent CDM at least `cutoff` days before TCA.
pub fn latest_known_risk(event: &Event, cutoff: f64) -> Result<f64, CdmError> {
    event
        .latest_cdm_before(cutoff)
        .map(|c| c.risk.expect("filtered on presence"))
}

/// Summary of the risk series before the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesFeatures {
    pub number_cdms: usize,
    pub mean_risk_cdms: f64,
    /// Population standard deviation.
    pub std_risk_cdms: f64,
}

pub fn derived_series_features(event: &Event, cutoff: f64) -> Result<SeriesFeatures, CdmError> {
    let risks: Vec<f64> = event
        .cdms_before(cutoff)
        .iter()
        .filter_map(|c| c.risk)
        .collect();
    if risks.is_empty() {
        return Err(CdmError::NoCdmBeforeCutoff { cutoff });
    }
    let n = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / n;
    let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(SeriesFeatures {
        number_cdms: risks.len(),
        mean_risk_cdms: mean,
        std_risk_cdms: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(points: &[(f64, f64)]) -> Event {
        Event::new(
            "e",
            points.iter().map(|&(t, r)| Cdm::new(t, r)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn final_risk_takes_last_cdm() {
        assert_eq!(final_risk(&event(&[(4.0, -8.0), (3.0, -7.0), (0.5, -5.0)])), Ok(-5.0));
        assert_eq!(final_risk(&event(&[(1.0, -30.0)])), Ok(-30.0));
        assert_eq!(final_risk(&event(&[(3.0, -6.2), (0.2, -5.9)])), Ok(-5.9));
    }

    #[test]
    fn final_risk_without_any_risk() {
        let mut c = Cdm::new(1.0, 0.0);
        c.risk = None;
        let e = Event::new("e", vec![c]).unwrap();
        assert_eq!(final_risk(&e), Err(CdmError::NoRisk));
    }

    #[test]
    fn latest_known_risk_filters_on_cutoff() {
        let e = event(&[(4.0, -8.0), (2.5, -6.5), (0.5, -5.0)]);
        assert_eq!(latest_known_risk(&e, 2.0), Ok(-6.5));
        assert_eq!(latest_known_risk(&event(&[(3.0, -7.0)]), 2.0), Ok(-7.0));
        assert_eq!(
            latest_known_risk(&event(&[(1.9, -7.0), (0.3, -6.0)]), 2.0),
            Err(CdmError::NoCdmBeforeCutoff { cutoff: 2.0 })
        );
    }

    #[test]
    fn cutoff_is_inclusive() {
        let e = event(&[(2.0, -7.0), (0.5, -5.0)]);
        assert_eq!(latest_known_risk(&e, 2.0), Ok(-7.0));
    }

    #[test]
    fn series_features() {
        let f = derived_series_features(&event(&[(5.0, -8.0), (3.0, -6.0), (0.1, -1.0)]), 2.0).unwrap();
        assert_eq!((f.number_cdms, f.mean_risk_cdms, f.std_risk_cdms), (2, -7.0, 1.0));
        let f = derived_series_features(&event(&[(2.5, -5.0)]), 2.0).unwrap();
        assert_eq!((f.number_cdms, f.mean_risk_cdms, f.std_risk_cdms), (1, -5.0, 0.0));
        let f = derived_series_features(&event(&[(4.0, -30.0), (3.0, -30.0), (2.0, -30.0)]), 2.0).unwrap();
        assert_eq!((f.number_cdms, f.mean_risk_cdms, f.std_risk_cdms), (3, -30.0, 0.0));
    }

    #[test]
    fn event_rejects_ties_and_sorts() {
        let err = Event::new("x", vec![Cdm::new(1.0, -7.0), Cdm::new(1.0, -6.0)]).unwrap_err();
        assert!(matches!(err, CdmError::DuplicateTimestamp { .. }));
        let e = Event::new("x", vec![Cdm::new(0.5, -7.0), Cdm::new(3.0, -6.0)]).unwrap();
        assert_eq!(e.first().time_to_tca, 3.0);
        assert_eq!(e.last().time_to_tca, 0.5);
    }

    #[test]
    fn event_rejects_mixed_missions_and_bad_values() {
        let mut a = Cdm::new(3.0, -7.0);
        a.mission_id = Some("1".into());
        let mut b = Cdm::new(1.0, -7.0);
        b.mission_id = Some("2".into());
        assert!(matches!(Event::new("x", vec![a, b]), Err(CdmError::MixedMission { .. })));
        assert!(Event::new("x", vec![Cdm::new(-1.0, -7.0)]).is_err());
        assert!(Event::new("x", vec![Cdm::new(1.0, 0.5)]).is_err());
        assert!(Event::new("x", vec![]).is_err());
    }

    #[test]
    fn threshold_is_high() {
        assert_eq!(RiskClass::of(-6.0), RiskClass::High);
        assert_eq!(RiskClass::of(-6.000_001), RiskClass::Low);
    }

    #[test]
    fn value_lookup_covers_named_and_generic() {
        let mut c = Cdm::new(2.0, -7.0);
        c.set_value("miss_distance", Some(120.0));
        c.set_value("c_sigma_t", Some(3.5));
        assert_eq!(c.value("miss_distance"), Some(120.0));
        assert_eq!(c.value("c_sigma_t"), Some(3.5));
        assert_eq!(c.value("nope"), None);
        let names: Vec<_> = c.present_numeric().collect();
        assert_eq!(names, ["time_to_tca", "risk", "miss_distance", "c_sigma_t"]);
    }

    proptest! {
        #[test]
        fn zero_cutoff_equals_final_risk(
            pts in proptest::collection::btree_map(0u32..5000, -30.0f64..0.0, 1..20)
        ) {
            let cdms = pts.iter().map(|(t, r)| Cdm::new(*t as f64 / 100.0, *r)).collect();
            let e = Event::new("p", cdms).unwrap();
            prop_assert_eq!(latest_known_risk(&e, 0.0).unwrap(), final_risk(&e).unwrap());
        }

        #[test]
        fn series_features_ignore_order(
            pts in proptest::collection::btree_map(200u32..5000, -30.0f64..0.0, 1..20)
        ) {
            let cdms: Vec<Cdm> = pts.iter().map(|(t, r)| Cdm::new(*t as f64 / 100.0, *r)).collect();
            let mut rev = cdms.clone();
            rev.reverse();
            let a = derived_series_features(&Event::new("p", cdms).unwrap(), 2.0).unwrap();
            let b = derived_series_features(&Event::new("p", rev).unwrap(), 2.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
