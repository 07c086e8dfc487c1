//! Baseline and rule-based risk predictors, plus the delta-target regressor
//! harness.
//!
//! Every predictor only looks at CDMs released at least [`DEFAULT_CUTOFF_DAYS`]
//! before TCA, so it can be handed either cropped or full events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{
    derived_series_features, final_risk, latest_known_risk, Cdm, CdmError, Event, RiskClass,
    DEFAULT_CUTOFF_DAYS, HIGH_RISK_THRESHOLD,
};
use crate::scoring::{PredictionSet, DEFAULT_CLIP_EPSILON};
use crate::splitting::CroppedEvent;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("event {event_id}: {source}")]
    Event {
        event_id: String,
        #[source]
        source: CdmError,
    },
    #[error("event {event_id}: step {step} needs missing attribute {attribute}")]
    MissingFeature {
        event_id: String,
        step: u8,
        attribute: &'static str,
    },
    #[error("predictor used before fit")]
    Unfitted,
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("quantile transform needs at least two finite training values")]
    EmptyTraining,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("classifier: {0}")]
    Classifier(String),
}

fn on_event(event: &Event) -> impl FnOnce(CdmError) -> PredictError + '_ {
    move |source| PredictError::Event {
        event_id: event.event_id().to_string(),
        source,
    }
}

/// A risk forecaster. `fit` must be called before `predict_event` for
/// predictors with learned state; afterwards the predictor is read-only.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&mut self, _train: &[CroppedEvent]) -> Result<(), PredictError> {
        Ok(())
    }

    fn predict_event(&self, event: &Event) -> Result<f64, PredictError>;

    fn predict(&self, events: &[Event]) -> Result<PredictionSet, PredictError> {
        predict_all(self, events)
    }
}

/// Runs a predictor over any sequence of events.
pub fn predict_all<'a, P: Predictor + ?Sized>(
    predictor: &P,
    events: impl IntoIterator<Item = &'a Event>,
) -> Result<PredictionSet, PredictError> {
    events
        .into_iter()
        .map(|e| Ok((e.event_id().to_string(), predictor.predict_event(e)?)))
        .collect::<Result<BTreeMap<_, _>, _>>()
        .map(|values| PredictionSet {
            values,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
        })
}

fn r_minus_2(event: &Event) -> Result<f64, PredictError> {
    latest_known_risk(event, DEFAULT_CUTOFF_DAYS).map_err(on_event(event))
}

const LRP_LOW: f64 = HIGH_RISK_THRESHOLD - DEFAULT_CLIP_EPSILON;

/// Constant prediction of -5.
#[derive(Debug, Clone, Default)]
pub struct Crp;

impl Predictor for Crp {
    fn name(&self) -> &str {
        "crp"
    }

    fn predict_event(&self, _event: &Event) -> Result<f64, PredictError> {
        Ok(-5.0)
    }
}

pub fn crp_predict(events: &[Event]) -> PredictionSet {
    Crp.predict(events).expect("constant predictor cannot fail")
}

/// Latest known risk, clipped to -6.001 below the threshold.
#[derive(Debug, Clone, Default)]
pub struct Lrp;

impl Predictor for Lrp {
    fn name(&self) -> &str {
        "lrp"
    }

    fn predict_event(&self, event: &Event) -> Result<f64, PredictError> {
        let r = r_minus_2(event)?;
        Ok(if r >= HIGH_RISK_THRESHOLD { r } else { LRP_LOW })
    }
}

pub fn lrp_predict(events: &[Event]) -> Result<PredictionSet, PredictError> {
    Lrp.predict(events)
}

/// Unclipped naive forecast: the latest known risk itself.
pub fn naive_forecast(events: &[Event]) -> Result<PredictionSet, PredictError> {
    predict_all(&DeltaPredictor::new(ZeroDelta, FeatureSet::Named(vec![])), events)
}

fn default_steps() -> BTreeSet<u8> {
    (0..=6).collect()
}

/// Parameters of the threshold cascade. Steps 0-2 promote borderline
/// low-risk events, 3-5 force events low, 6 clips high risks and 7 applies
/// per-event manual overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub step0_threshold: f64,
    pub step0_output: f64,
    pub step1_threshold: f64,
    pub step1_output: f64,
    pub step2_threshold: f64,
    pub step2_output: f64,
    pub safe_output: f64,
    pub safe_object_type: String,
    pub t_span_cutoff: f64,
    pub miss_distance_cutoff: f64,
    pub clip_lower: f64,
    pub clip_upper: f64,
    pub enabled_steps: BTreeSet<u8>,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            step0_threshold: -6.04,
            step0_output: -5.95,
            step1_threshold: -6.40,
            step1_output: -5.60,
            step2_threshold: -7.30,
            step2_output: -5.00,
            safe_output: -6.00001,
            safe_object_type: "PAYLOAD".into(),
            t_span_cutoff: 0.5,
            miss_distance_cutoff: 30000.0,
            clip_lower: -4.00,
            clip_upper: -3.50,
            enabled_steps: default_steps(),
            overrides: BTreeMap::new(),
        }
    }
}

impl CascadeConfig {
    pub fn with_steps(steps: &[u8]) -> Self {
        CascadeConfig {
            enabled_steps: steps.iter().copied().collect(),
            ..Default::default()
        }
    }

    pub fn enabled(&self, step: u8) -> bool {
        self.enabled_steps.contains(&step)
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        let ordered = HIGH_RISK_THRESHOLD > self.step0_threshold
            && self.step0_threshold > self.step1_threshold
            && self.step1_threshold > self.step2_threshold;
        if !ordered {
            return Err(PredictError::InvalidConfig(
                "promotion thresholds must be strictly decreasing below -6".into(),
            ));
        }
        if !(HIGH_RISK_THRESHOLD <= self.clip_lower && self.clip_lower < self.clip_upper) {
            return Err(PredictError::InvalidConfig("clip bounds must satisfy -6 <= lower < upper".into()));
        }
        if let Some(s) = self.enabled_steps.iter().find(|&&s| s > 7) {
            return Err(PredictError::InvalidConfig(format!("unknown step {s}")));
        }
        Ok(())
    }
}

/// Which cascade branch produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CascadeRule {
    /// Steps 3, 4 or 5.
    Safe(u8),
    /// Steps 0, 1 or 2.
    Promote(u8),
    /// Low risk with no applicable promotion.
    Low,
    /// Step 6, lower band.
    ClipLower,
    /// Step 6, upper band.
    ClipUpper,
    PassThrough,
    Override,
}

/// Evaluates the cascade for one latest-known risk and the CDM it came from.
pub fn sesc_cascade_rule(
    r2: f64,
    cdm: &Cdm,
    config: &CascadeConfig,
    event_id: &str,
) -> Result<(CascadeRule, f64), PredictError> {
    if r2 < HIGH_RISK_THRESHOLD {
        let missing = |step, attribute| PredictError::MissingFeature {
            event_id: event_id.to_string(),
            step,
            attribute,
        };
        if config.enabled(3) {
            let kind = cdm.c_object_type.as_deref().ok_or_else(|| missing(3, "c_object_type"))?;
            if kind.trim().eq_ignore_ascii_case(&config.safe_object_type) {
                return Ok((CascadeRule::Safe(3), config.safe_output));
            }
        }
        if config.enabled(4) {
            let span = cdm.t_span.ok_or_else(|| missing(4, "t_span"))?;
            if span < config.t_span_cutoff {
                return Ok((CascadeRule::Safe(4), config.safe_output));
            }
        }
        if config.enabled(5) {
            let dist = cdm.miss_distance.ok_or_else(|| missing(5, "miss_distance"))?;
            if dist > config.miss_distance_cutoff {
                return Ok((CascadeRule::Safe(5), config.safe_output));
            }
        }
        let band = if r2 >= config.step0_threshold {
            Some((0, config.step0_output))
        } else if r2 >= config.step1_threshold {
            Some((1, config.step1_output))
        } else if r2 >= config.step2_threshold {
            Some((2, config.step2_output))
        } else {
            None
        };
        return Ok(match band {
            Some((step, out)) if config.enabled(step) => (CascadeRule::Promote(step), out),
            _ => (CascadeRule::Low, config.safe_output),
        });
    }
    if config.enabled(6) {
        if r2 >= config.clip_upper {
            return Ok((CascadeRule::ClipUpper, config.clip_upper));
        }
        if r2 >= config.clip_lower {
            return Ok((CascadeRule::ClipLower, config.clip_lower));
        }
    }
    Ok((CascadeRule::PassThrough, r2))
}

/// Threshold cascade predictor.
#[derive(Debug, Clone, Default)]
pub struct SescCascade {
    pub config: CascadeConfig,
}

impl SescCascade {
    pub fn new(config: CascadeConfig) -> Result<Self, PredictError> {
        config.validate()?;
        Ok(SescCascade { config })
    }

    pub fn rule_for(&self, event: &Event) -> Result<(CascadeRule, f64), PredictError> {
        if self.config.enabled(7) {
            if let Some(&v) = self.config.overrides.get(event.event_id()) {
                return Ok((CascadeRule::Override, v));
            }
        }
        let cdm = event
            .latest_cdm_before(DEFAULT_CUTOFF_DAYS)
            .map_err(on_event(event))?;
        let r2 = cdm.risk.expect("latest_cdm_before filters on risk");
        sesc_cascade_rule(r2, cdm, &self.config, event.event_id())
    }
}

impl Predictor for SescCascade {
    fn name(&self) -> &str {
        "sesc"
    }

    fn predict_event(&self, event: &Event) -> Result<f64, PredictError> {
        self.rule_for(event).map(|(_, v)| v)
    }
}

pub fn sesc_cascade_predict(events: &[Event], config: &CascadeConfig) -> Result<PredictionSet, PredictError> {
    SescCascade::new(config.clone())?.predict(events)
}

/// Feature names of the anomaly classifier input, in vector order.
pub const MAGPIES_FEATURES: [&str; 10] = [
    "time_to_tca",
    "max_risk_estimate",
    "max_risk_scaling",
    "mahalanobis_distance",
    "miss_distance",
    "c_position_covariance_det",
    "c_obs_used",
    "number_CDMs",
    "mean_risk_CDMs",
    "std_risk_CDMs",
];

/// Fixed-width feature vector with explicit missing entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<Option<f64>>);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        MAGPIES_FEATURES
            .iter()
            .position(|n| *n == name)
            .and_then(|i| self.0[i])
    }
}

/// Seven attributes of the latest CDM before the cutoff plus the count,
/// mean and standard deviation of the risks before the cutoff.
pub fn magpies_features(event: &Event) -> Result<FeatureVector, PredictError> {
    let cdm = event
        .latest_cdm_before(DEFAULT_CUTOFF_DAYS)
        .map_err(on_event(event))?;
    let series = derived_series_features(event, DEFAULT_CUTOFF_DAYS).map_err(on_event(event))?;
    let mut v: Vec<Option<f64>> = MAGPIES_FEATURES[..7].iter().map(|n| cdm.value(n)).collect();
    v.push(Some(series.number_cdms as f64));
    v.push(Some(series.mean_risk_cdms));
    v.push(Some(series.std_risk_cdms));
    Ok(FeatureVector(v))
}

/// Decides whether a low latest-risk event will end high.
pub trait AnomalyClassifier: Send + Sync {
    /// Labelled examples: `true` marks an anomalous (low-to-high) event.
    fn fit(&mut self, _examples: &[(FeatureVector, bool)]) -> Result<(), PredictError> {
        Ok(())
    }

    fn is_anomalous(&self, features: &FeatureVector) -> Result<bool, PredictError>;
}

#[derive(Debug, Clone, Default)]
pub struct NeverAnomalous;

impl AnomalyClassifier for NeverAnomalous {
    fn is_anomalous(&self, _features: &FeatureVector) -> Result<bool, PredictError> {
        Ok(false)
    }
}

/// Per-feature standardization by training mean and standard deviation;
/// missing entries map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<Option<f64>>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; width];
        let mut scale = vec![1.0; width];
        for j in 0..width {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[j]).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| match v {
                Some(x) if x.is_finite() => (x - self.mean[j]) / self.scale[j],
                _ => 0.0,
            })
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Indices of the `k` nearest rows; ties broken by row index.
fn nearest(rows: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, r)| (sq_dist(r, query), i)).collect();
    let k = k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
    }
    d.into_iter().map(|(_, i)| i).collect()
}

/// k-nearest-neighbour vote over standardized features.
#[derive(Debug, Clone)]
pub struct KnnAnomalyClassifier {
    k: usize,
    scaler: Option<Standardizer>,
    rows: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl KnnAnomalyClassifier {
    pub fn new(k: usize) -> Self {
        KnnAnomalyClassifier {
            k: k.max(1),
            scaler: None,
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }
}

impl AnomalyClassifier for KnnAnomalyClassifier {
    fn fit(&mut self, examples: &[(FeatureVector, bool)]) -> Result<(), PredictError> {
        let raw: Vec<Vec<Option<f64>>> = examples.iter().map(|(f, _)| f.0.clone()).collect();
        let scaler = Standardizer::fit(&raw);
        self.rows = raw.iter().map(|r| scaler.transform(r)).collect();
        self.labels = examples.iter().map(|(_, l)| *l).collect();
        self.scaler = Some(scaler);
        Ok(())
    }

    fn is_anomalous(&self, features: &FeatureVector) -> Result<bool, PredictError> {
        let scaler = self.scaler.as_ref().ok_or(PredictError::Unfitted)?;
        if self.rows.is_empty() {
            return Ok(false);
        }
        let q = scaler.transform(&features.0);
        let idx = nearest(&self.rows, &q, self.k);
        let votes = idx.iter().filter(|&&i| self.labels[i]).count();
        Ok(2 * votes > idx.len())
    }
}

/// Equal-weight majority over member classifiers; ties are non-anomalous.
#[derive(Default)]
pub struct MajorityVote {
    pub members: Vec<Box<dyn AnomalyClassifier>>,
}

impl AnomalyClassifier for MajorityVote {
    fn fit(&mut self, examples: &[(FeatureVector, bool)]) -> Result<(), PredictError> {
        self.members.iter_mut().try_for_each(|m| m.fit(examples))
    }

    fn is_anomalous(&self, features: &FeatureVector) -> Result<bool, PredictError> {
        let mut votes = 0;
        for m in &self.members {
            votes += usize::from(m.is_anomalous(features)?);
        }
        Ok(2 * votes > self.members.len())
    }
}

/// Default prediction for events flagged anomalous.
pub const DEFAULT_ANOMALOUS_VALUE: f64 = -5.35;

/// Latest risk when high, otherwise `-6.001` or the anomalous value
/// depending on the classifier.
pub struct MagpiesRule {
    pub classifier: Box<dyn AnomalyClassifier>,
    pub anomalous_value: f64,
}

impl MagpiesRule {
    pub fn new(classifier: Box<dyn AnomalyClassifier>) -> Self {
        MagpiesRule {
            classifier,
            anomalous_value: DEFAULT_ANOMALOUS_VALUE,
        }
    }
}

impl Predictor for MagpiesRule {
    fn name(&self) -> &str {
        "magpies"
    }

    /// Sets the anomalous value to the mean final risk of the training
    /// high-risk events and trains the classifier on the events whose latest
    /// known risk is low.
    fn fit(&mut self, train: &[CroppedEvent]) -> Result<(), PredictError> {
        let highs: Vec<f64> = train
            .iter()
            .map(CroppedEvent::target_risk)
            .filter(|&r| RiskClass::of(r).is_high())
            .collect();
        if !highs.is_empty() {
            self.anomalous_value = highs.iter().sum::<f64>() / highs.len() as f64;
        }
        let mut examples = Vec::new();
        for e in train {
            let r2 = r_minus_2(e.inputs())?;
            if r2 < HIGH_RISK_THRESHOLD {
                examples.push((magpies_features(e.inputs())?, e.target_class().is_high()));
            }
        }
        self.classifier.fit(&examples)
    }

    fn predict_event(&self, event: &Event) -> Result<f64, PredictError> {
        magpies_value(event, self.classifier.as_ref(), self.anomalous_value)
    }
}

fn magpies_value(event: &Event, classifier: &dyn AnomalyClassifier, anomalous_value: f64) -> Result<f64, PredictError> {
    let r2 = r_minus_2(event)?;
    if r2 >= HIGH_RISK_THRESHOLD {
        return Ok(r2);
    }
    let anomalous = classifier.is_anomalous(&magpies_features(event)?)?;
    Ok(if anomalous { anomalous_value } else { LRP_LOW })
}

pub fn magpies_rule_predict(
    events: &[Event],
    classifier: &dyn AnomalyClassifier,
    anomalous_value: f64,
) -> Result<PredictionSet, PredictError> {
    events
        .iter()
        .map(|e| Ok((e.event_id().to_string(), magpies_value(e, classifier, anomalous_value)?)))
        .collect::<Result<BTreeMap<_, _>, _>>()
        .map(|values| PredictionSet {
            values,
            ..Default::default()
        })
}

/// Change between the latest known risk and the final risk.
pub fn delta_target(event: &Event) -> Result<f64, PredictError> {
    let r = final_risk(event).map_err(on_event(event))?;
    Ok(r - r_minus_2(event)?)
}

/// Empirical-CDF encoding with linear interpolation between sorted
/// training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransform {
    sorted: Vec<f64>,
}

impl QuantileTransform {
    pub fn fit(values: &[f64]) -> Result<Self, PredictError> {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 2 {
            return Err(PredictError::EmptyTraining);
        }
        sorted.sort_by(f64::total_cmp);
        Ok(QuantileTransform { sorted })
    }

    fn span(&self) -> f64 {
        (self.sorted.len() - 1) as f64
    }

    /// Position of `x` in `[0, 1]`. Repeated training values map to the
    /// middle of their run.
    pub fn apply(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let lo = s.partition_point(|&v| v < x);
        let hi = s.partition_point(|&v| v <= x);
        let pos = if hi > lo {
            (lo + hi - 1) as f64 / 2.0
        } else if lo == 0 {
            0.0
        } else if lo == s.len() {
            self.span()
        } else {
            let (a, b) = (s[lo - 1], s[lo]);
            (lo - 1) as f64 + (x - a) / (b - a)
        };
        pos / self.span()
    }

    /// Pseudo-inverse of [`apply`](Self::apply).
    pub fn invert(&self, u: f64) -> f64 {
        let s = &self.sorted;
        let mut pos = u.clamp(0.0, 1.0) * self.span();
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            pos = nearest;
        }
        let i = (pos.floor() as usize).min(s.len() - 1);
        let frac = pos - i as f64;
        if frac == 0.0 || i + 1 == s.len() {
            s[i]
        } else {
            s[i] + frac * (s[i + 1] - s[i])
        }
    }
}

/// Learns the change `h = r - r_-2` from feature rows.
pub trait DeltaRegressor: Send + Sync {
    fn fit(&mut self, rows: &[Vec<Option<f64>>], deltas: &[f64]) -> Result<(), PredictError>;
    fn predict_delta(&self, row: &[Option<f64>]) -> Result<f64, PredictError>;
}

/// Always predicts no change.
#[derive(Debug, Clone, Default)]
pub struct ZeroDelta;

impl DeltaRegressor for ZeroDelta {
    fn fit(&mut self, _rows: &[Vec<Option<f64>>], _deltas: &[f64]) -> Result<(), PredictError> {
        Ok(())
    }

    fn predict_delta(&self, _row: &[Option<f64>]) -> Result<f64, PredictError> {
        Ok(0.0)
    }
}

/// Averages the quantile-encoded targets of the `k` nearest training rows
/// and decodes the mean.
#[derive(Debug, Clone)]
pub struct KnnDeltaRegressor {
    k: usize,
    scaler: Option<Standardizer>,
    transform: Option<QuantileTransform>,
    rows: Vec<Vec<f64>>,
    encoded: Vec<f64>,
}

impl KnnDeltaRegressor {
    pub fn new(k: usize) -> Self {
        KnnDeltaRegressor {
            k: k.max(1),
            scaler: None,
            transform: None,
            rows: Vec::new(),
            encoded: Vec::new(),
        }
    }
}

impl DeltaRegressor for KnnDeltaRegressor {
    fn fit(&mut self, rows: &[Vec<Option<f64>>], deltas: &[f64]) -> Result<(), PredictError> {
        if rows.is_empty() {
            return Err(PredictError::EmptyTrainSet);
        }
        let transform = QuantileTransform::fit(deltas)?;
        let scaler = Standardizer::fit(rows);
        self.rows = rows.iter().map(|r| scaler.transform(r)).collect();
        self.encoded = deltas.iter().map(|&h| transform.apply(h)).collect();
        self.scaler = Some(scaler);
        self.transform = Some(transform);
        Ok(())
    }

    fn predict_delta(&self, row: &[Option<f64>]) -> Result<f64, PredictError> {
        let (scaler, transform) = match (&self.scaler, &self.transform) {
            (Some(s), Some(t)) => (s, t),
            _ => return Err(PredictError::Unfitted),
        };
        let q = scaler.transform(row);
        let idx = nearest(&self.rows, &q, self.k);
        let mean = idx.iter().map(|&i| self.encoded[i]).sum::<f64>() / idx.len() as f64;
        Ok(transform.invert(mean))
    }
}

/// Attributes fed to a delta regressor, read from the latest CDM before
/// the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Named(Vec<String>),
    /// Every numeric attribute seen in the training data.
    AllNumeric,
}

/// Wraps a [`DeltaRegressor`] into a [`Predictor`] emitting `r_-2 + h`.
pub struct DeltaPredictor<R> {
    pub regressor: R,
    features: FeatureSet,
    resolved: Option<Vec<String>>,
    name: String,
}

impl<R: DeltaRegressor> DeltaPredictor<R> {
    pub fn new(regressor: R, features: FeatureSet) -> Self {
        let resolved = match &features {
            FeatureSet::Named(n) => Some(n.clone()),
            FeatureSet::AllNumeric => None,
        };
        DeltaPredictor {
            regressor,
            features,
            resolved,
            name: "delta".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.resolved.as_deref()
    }

    fn row(names: &[String], cdm: &Cdm) -> Vec<Option<f64>> {
        names.iter().map(|n| cdm.value(n)).collect()
    }
}

impl<R: DeltaRegressor> Predictor for DeltaPredictor<R> {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&mut self, train: &[CroppedEvent]) -> Result<(), PredictError> {
        if train.is_empty() {
            return Err(PredictError::EmptyTrainSet);
        }
        let mut latest = Vec::with_capacity(train.len());
        let mut deltas = Vec::with_capacity(train.len());
        for e in train {
            let cdm = e
                .inputs()
                .latest_cdm_before(DEFAULT_CUTOFF_DAYS)
                .map_err(on_event(e.inputs()))?;
            deltas.push(e.target_risk() - cdm.risk.expect("filtered on risk"));
            latest.push(cdm);
        }
        let names = match &self.features {
            FeatureSet::Named(n) => n.clone(),
            FeatureSet::AllNumeric => latest
                .iter()
                .flat_map(|c| c.present_numeric())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .map(str::to_string)
                .collect(),
        };
        let rows: Vec<_> = latest.iter().map(|c| Self::row(&names, c)).collect();
        self.regressor.fit(&rows, &deltas)?;
        self.resolved = Some(names);
        Ok(())
    }

    fn predict_event(&self, event: &Event) -> Result<f64, PredictError> {
        let names = self.resolved.as_deref().ok_or(PredictError::Unfitted)?;
        let cdm = event
            .latest_cdm_before(DEFAULT_CUTOFF_DAYS)
            .map_err(on_event(event))?;
        let h = self.regressor.predict_delta(&Self::row(names, cdm))?;
        Ok(cdm.risk.expect("filtered on risk") + h)
    }
}

/// Serializable description of a predictor, used to build fresh instances
/// per data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PredictorSpec {
    Crp,
    Lrp,
    Sesc { config: CascadeConfig },
    Magpies { k: usize },
    Knn { k: usize, features: FeatureSet },
    ZeroDelta,
}

impl PredictorSpec {
    pub fn knn(k: usize) -> Self {
        PredictorSpec::Knn {
            k,
            features: FeatureSet::AllNumeric,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictorSpec::Crp => "crp",
            PredictorSpec::Lrp => "lrp",
            PredictorSpec::Sesc { .. } => "sesc",
            PredictorSpec::Magpies { .. } => "magpies",
            PredictorSpec::Knn { .. } => "knn",
            PredictorSpec::ZeroDelta => "zero_delta",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Predictor>, PredictError> {
        Ok(match self {
            PredictorSpec::Crp => Box::new(Crp),
            PredictorSpec::Lrp => Box::new(Lrp),
            PredictorSpec::Sesc { config } => Box::new(SescCascade::new(config.clone())?),
            PredictorSpec::Magpies { k } => Box::new(MagpiesRule::new(Box::new(KnnAnomalyClassifier::new(*k)))),
            PredictorSpec::Knn { k, features } => {
                Box::new(DeltaPredictor::new(KnnDeltaRegressor::new(*k), features.clone()).named("knn"))
            }
            PredictorSpec::ZeroDelta => Box::new(DeltaPredictor::new(ZeroDelta, FeatureSet::Named(vec![])).named("zero_delta")),
        })
    }
}
