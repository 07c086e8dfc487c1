//! Competition metric: F-beta over the whole set, MSE over true high-risk
//! events, and their ratio `L = MSE_HR / F2`.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cdm::{RiskClass, RiskMap, HIGH_RISK_THRESHOLD};

/// Margin below the threshold used for clipped low-risk predictions.
pub const DEFAULT_CLIP_EPSILON: f64 = 0.001;

pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("non-finite risk value {0}")]
    NonFinite(f64),
    #[error("prediction ids do not match truth ids ({missing} missing, {extra} unexpected)")]
    IdMismatch { missing: usize, extra: usize },
    #[error("no true high-risk events in the scored set")]
    NoHighRiskEvents,
    #[error("F-beta is zero, loss undefined")]
    ZeroF2,
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("prediction file: {0}")]
    Io(String),
}

pub fn classify(risk: f64) -> Result<RiskClass, ScoreError> {
    if !risk.is_finite() {
        return Err(ScoreError::NonFinite(risk));
    }
    Ok(RiskClass::of(risk))
}

/// Predicted log10 risks keyed by event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub values: RiskMap,
    pub clip_epsilon: f64,
}

impl Default for PredictionSet {
    fn default() -> Self {
        PredictionSet {
            values: RiskMap::new(),
            clip_epsilon: DEFAULT_CLIP_EPSILON,
        }
    }
}

impl FromIterator<(String, f64)> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        PredictionSet {
            values: iter.into_iter().collect(),
            ..Default::default()
        }
    }
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    /// Restricts the set to the given ids.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> PredictionSet {
        PredictionSet {
            values: ids
                .into_iter()
                .filter_map(|id| self.values.get(id).map(|v| (id.clone(), *v)))
                .collect(),
            clip_epsilon: self.clip_epsilon,
        }
    }

    /// Writes `event_id,predicted_risk` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ScoreError> {
        self.write_csv_to(std::fs::File::create(path).map_err(io_err)?)
    }

    pub fn write_csv_to<W: io::Write>(&self, w: W) -> Result<(), ScoreError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["event_id", "predicted_risk"]).map_err(csv_err)?;
        for (id, v) in &self.values {
            wr.write_record([id.as_str(), &v.to_string()]).map_err(csv_err)?;
        }
        wr.flush().map_err(io_err)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, ScoreError> {
        Self::read_csv_from(std::fs::File::open(path).map_err(io_err)?)
    }

    pub fn read_csv_from<R: io::Read>(r: R) -> Result<Self, ScoreError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ScoreError::Io(format!("missing column {name}")))
        };
        let (id_col, risk_col) = (col("event_id")?, col("predicted_risk")?);
        let mut values = RiskMap::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let id = rec.get(id_col).unwrap_or_default().trim().to_string();
            let raw = rec.get(risk_col).unwrap_or_default().trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| ScoreError::Io(format!("row {}: bad predicted_risk {raw:?}", i + 2)))?;
            if values.insert(id.clone(), v).is_some() {
                return Err(ScoreError::Io(format!("duplicate event_id {id}")));
            }
        }
        Ok(values.into_iter().collect())
    }
}

fn io_err(e: io::Error) -> ScoreError {
    ScoreError::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> ScoreError {
    ScoreError::Io(e.to_string())
}

/// Replaces every low-risk prediction by `-6 - epsilon`.
pub fn clip_predictions(preds: &PredictionSet, epsilon: f64) -> PredictionSet {
    let floor = HIGH_RISK_THRESHOLD - epsilon;
    PredictionSet {
        values: preds
            .values
            .iter()
            .map(|(id, &v)| (id.clone(), if v < HIGH_RISK_THRESHOLD { floor } else { v }))
            .collect(),
        clip_epsilon: epsilon,
    }
}

/// Confusion counts with high risk as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn record(&mut self, truth: RiskClass, pred: RiskClass) {
        match (truth, pred) {
            (RiskClass::High, RiskClass::High) => self.tp += 1,
            (RiskClass::High, RiskClass::Low) => self.fn_ += 1,
            (RiskClass::Low, RiskClass::High) => self.fp += 1,
            (RiskClass::Low, RiskClass::Low) => self.tn += 1,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_ids(truth: &RiskMap, preds: &PredictionSet) -> Result<(), ScoreError> {
    if truth.len() == preds.values.len() && truth.keys().eq(preds.values.keys()) {
        return Ok(());
    }
    let missing = truth.keys().filter(|k| !preds.values.contains_key(*k)).count();
    let extra = preds.values.keys().filter(|k| !truth.contains_key(*k)).count();
    Err(ScoreError::IdMismatch { missing, extra })
}

pub fn confusion(truth: &RiskMap, preds: &PredictionSet) -> Result<ConfusionCounts, ScoreError> {
    check_ids(truth, preds)?;
    let mut counts = ConfusionCounts::default();
    for ((_, &r), (_, &p)) in truth.iter().zip(&preds.values) {
        counts.record(classify(r)?, classify(p)?);
    }
    Ok(counts)
}

/// F-beta score; zero when there are no true positives.
pub fn f_beta(counts: &ConfusionCounts, beta: f64) -> f64 {
    if counts.tp == 0 {
        return 0.0;
    }
    let (p, q) = (counts.precision(), counts.recall());
    let b2 = beta * beta;
    (1.0 + b2) * p * q / (b2 * p + q)
}

/// Mean squared log-risk error over the true high-risk events.
pub fn mse_hr(truth: &RiskMap, preds: &PredictionSet) -> Result<f64, ScoreError> {
    check_ids(truth, preds)?;
    let mut sum = 0.0;
    let mut n_high = 0u64;
    for ((_, &r), (_, &p)) in truth.iter().zip(&preds.values) {
        classify(p)?;
        if classify(r)?.is_high() {
            sum += (r - p).powi(2);
            n_high += 1;
        }
    }
    if n_high == 0 {
        return Err(ScoreError::NoHighRiskEvents);
    }
    Ok(sum / n_high as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub clip: bool,
    pub clip_epsilon: f64,
    pub beta: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            clip: true,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            beta: DEFAULT_BETA,
        }
    }
}

impl ScoreOptions {
    pub fn raw() -> Self {
        ScoreOptions {
            clip: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub beta: f64,
    pub f_beta: f64,
    pub mse_hr: f64,
    /// `mse_hr / f_beta`; serialized as `"undefined"` when `f_beta` is zero.
    #[serde(serialize_with = "ser_loss", deserialize_with = "de_loss")]
    pub loss: Option<f64>,
    pub n_high: u64,
    pub clipped: bool,
}

impl ScoreReport {
    /// The loss, or `ZeroF2` when it is undefined.
    pub fn loss_value(&self) -> Result<f64, ScoreError> {
        self.loss.ok_or(ScoreError::ZeroF2)
    }

    /// `1 / F-beta`, undefined at zero.
    pub fn inverse_f_beta(&self) -> Option<f64> {
        (self.f_beta > 0.0).then(|| 1.0 / self.f_beta)
    }
}

fn ser_loss<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("undefined"),
    }
}

fn de_loss<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(Some(x)),
        Raw::Text(t) if t == "undefined" => Ok(None),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected loss {t:?}"))),
    }
}

/// Full score of a prediction set.
///
/// A zero F-beta yields a report whose `loss` is `None`; call
/// [`ScoreReport::loss_value`] to turn that into [`ScoreError::ZeroF2`].
pub fn competition_loss(
    truth: &RiskMap,
    preds: &PredictionSet,
    opts: ScoreOptions,
) -> Result<ScoreReport, ScoreError> {
    if !(opts.beta > 0.0) {
        return Err(ScoreError::InvalidBeta(opts.beta));
    }
    let clipped;
    let preds = if opts.clip {
        clipped = clip_predictions(preds, opts.clip_epsilon);
        &clipped
    } else {
        preds
    };
    let counts = confusion(truth, preds)?;
    let mse = mse_hr(truth, preds)?;
    let fb = f_beta(&counts, opts.beta);
    Ok(ScoreReport {
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        beta: opts.beta,
        f_beta: fb,
        mse_hr: mse,
        loss: (fb > 0.0).then(|| mse / fb),
        n_high: counts.tp + counts.fn_,
        clipped: opts.clip,
    })
}

/// Ground-truth risks restricted to a set of ids.
pub fn restrict<'a>(truth: &RiskMap, ids: impl IntoIterator<Item = &'a String>) -> RiskMap {
    ids.into_iter()
        .filter_map(|id| truth.get(id).map(|v| (id.clone(), *v)))
        .collect::<BTreeMap<_, _>>()
}
