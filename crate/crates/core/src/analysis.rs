//! Statistics for the generalization study and the dataset diagnostics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::cdm::{final_risk, Event, HIGH_RISK_THRESHOLD, RISK_FLOOR};
use crate::predictors::{Lrp, PredictError, Predictor, PredictorSpec};
use crate::scoring::{competition_loss, ScoreError, ScoreOptions, ScoreReport};
use crate::splitting::{competition_test_size, default_test_sizes, virtual_competition_split, CroppedEvent, SplitError, SplitItem};
use crate::RiskMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} is not positive: {value}")]
    NonPositiveSample { index: usize, value: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("only {available} significant components, {requested} requested")]
    RankDeficient { requested: usize, available: usize },
    #[error("all relevance weights are zero")]
    AllZeroWeights,
    #[error("model {model}: invalid weight {weight}")]
    InvalidWeight { model: String, weight: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("io: {0}")]
    Io(String),
}

impl From<io::Error> for AnalysisError {
    fn from(e: io::Error) -> Self {
        AnalysisError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for AnalysisError {
    fn from(e: serde_json::Error) -> Self {
        AnalysisError::Io(e.to_string())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; `None` below two values.
fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// 1-based ranks; ties receive the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite value".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| AnalysisError::DegenerateInput("constant input".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub dof: usize,
}

/// Two-sided p-value of Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    beta_reg(dof / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Paired Student t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite difference".into()));
    }
    let sd = sample_std(&d).expect("n >= 2");
    if sd == 0.0 {
        return Err(AnalysisError::DegenerateInput("differences have zero variance".into()));
    }
    let n = d.len();
    let t = mean(&d) / (sd / (n as f64).sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided(t, (n - 1) as f64),
        dof: n - 1,
    })
}

/// Options of a virtual-competition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_competitions: usize,
    pub test_sizes: Vec<f64>,
    pub stratify_missions: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_competitions: 10_000,
            test_sizes: default_test_sizes(),
            stratify_missions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    pub train: ScoreReport,
    pub test: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionResult {
    pub split_id: u64,
    pub seed: u64,
    pub test_size: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub lrp: ModelScores,
    pub models: Vec<ModelScores>,
}

/// One line of a results file: either the scores of a split or the reason
/// it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CompetitionOutcome {
    Ok(CompetitionResult),
    Failed {
        split_id: u64,
        seed: u64,
        test_size: f64,
        error: String,
    },
}

impl CompetitionOutcome {
    pub fn result(&self) -> Option<&CompetitionResult> {
        match self {
            CompetitionOutcome::Ok(r) => Some(r),
            CompetitionOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Error)]
enum SplitFailure {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("{0}")]
    Score(#[from] ScoreError),
}

fn score_model(
    p: &dyn Predictor,
    train: &[CroppedEvent],
    test: &[CroppedEvent],
    train_truth: &RiskMap,
    test_truth: &RiskMap,
) -> Result<ModelScores, SplitFailure> {
    let opts = ScoreOptions::default();
    let pt = crate::predictors::predict_all(p, train.iter().map(CroppedEvent::inputs))?;
    let ps = crate::predictors::predict_all(p, test.iter().map(CroppedEvent::inputs))?;
    Ok(ModelScores {
        model: p.name().to_string(),
        train: competition_loss(train_truth, &pt, opts)?,
        test: competition_loss(test_truth, &ps, opts)?,
    })
}

fn run_one(
    events: &[CroppedEvent],
    by_id: &HashMap<&str, usize>,
    items: &[SplitItem],
    specs: &[PredictorSpec],
    config: &SimulationConfig,
    seed: u64,
    index: u64,
) -> Result<CompetitionResult, SplitFailure> {
    let split = virtual_competition_split(items, &config.test_sizes, seed, index, config.stratify_missions)?;
    let pick = |ids: &BTreeSet<String>| -> Vec<CroppedEvent> { ids.iter().map(|id| events[by_id[id.as_str()]].clone()).collect() };
    let train = pick(&split.train);
    let test = pick(&split.test);
    let truth = |v: &[CroppedEvent]| -> RiskMap { v.iter().map(|e| (e.event_id().to_string(), e.target_risk())).collect() };
    let (train_truth, test_truth) = (truth(&train), truth(&test));
    let lrp = score_model(&Lrp, &train, &test, &train_truth, &test_truth)?;
    let mut models = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut p = spec.build()?;
        p.fit(&train)?;
        models.push(score_model(p.as_ref(), &train, &test, &train_truth, &test_truth)?);
    }
    Ok(CompetitionResult {
        split_id: index,
        seed: split.seed,
        test_size: split.test_size(),
        n_train: train.len(),
        n_test: test.len(),
        lrp,
        models,
    })
}

/// Fits and scores every predictor on `config.n_competitions` stratified
/// splits. The output is ordered by split id and does not depend on
/// `parallelism`.
pub fn run_virtual_competitions(
    events: &[CroppedEvent],
    specs: &[PredictorSpec],
    config: &SimulationConfig,
    seed: u64,
    parallelism: usize,
) -> Result<Vec<CompetitionOutcome>, AnalysisError> {
    if specs.is_empty() {
        return Err(AnalysisError::InvalidInput("no predictors".into()));
    }
    if config.test_sizes.is_empty() || config.test_sizes.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(AnalysisError::InvalidInput("test sizes must lie in (0, 1)".into()));
    }
    for s in specs {
        s.build()?;
    }
    let items: Vec<SplitItem> = events.iter().map(SplitItem::from_cropped).collect();
    let by_id: HashMap<&str, usize> = events.iter().enumerate().map(|(i, e)| (e.event_id(), i)).collect();
    if by_id.len() != events.len() {
        return Err(AnalysisError::InvalidInput("duplicate event ids".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| AnalysisError::Io(e.to_string()))?;
    let out = pool.install(|| {
        (0..config.n_competitions as u64)
            .into_par_iter()
            .map(|i| match run_one(events, &by_id, &items, specs, config, seed, i) {
                Ok(r) => CompetitionOutcome::Ok(r),
                Err(e) => CompetitionOutcome::Failed {
                    split_id: i,
                    seed: crate::splitting::competition_seed(seed, i),
                    test_size: competition_test_size(&config.test_sizes, seed, i),
                    error: e.to_string(),
                },
            })
            .collect()
    });
    Ok(out)
}

pub fn write_results_jsonl<W: io::Write>(mut w: W, results: &[CompetitionOutcome]) -> Result<(), AnalysisError> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results_jsonl<R: io::BufRead>(r: R) -> Result<Vec<CompetitionOutcome>, AnalysisError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Metrics compared between train and test; lower is better for all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MseHr,
    InverseF2,
    Loss,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::MseHr, Metric::InverseF2, Metric::Loss];

    pub fn of(self, r: &ScoreReport) -> Option<f64> {
        match self {
            Metric::MseHr => Some(r.mse_hr),
            Metric::InverseF2 => r.inverse_f_beta(),
            Metric::Loss => r.loss,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::MseHr => "mse_hr",
            Metric::InverseF2 => "inv_f2",
            Metric::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Mean and sample std of the per-competition train/test Spearman
    /// correlation across models.
    pub spearman_mean: Option<f64>,
    pub spearman_std: Option<f64>,
    pub spearman_count: usize,
    /// Percentage of models strictly better than LRP on both train and test.
    pub outperform_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub test_size: f64,
    pub competitions: usize,
    pub failed: usize,
    /// Fewer than two successful competitions in the cell.
    pub empty_cell: bool,
    pub metrics: Vec<MetricSummary>,
    /// Normalized 1/F2 gain over LRP in percent, pooled over models.
    pub gain_train_mean: Option<f64>,
    pub gain_train_std: Option<f64>,
    pub gain_test_mean: Option<f64>,
    pub gain_test_std: Option<f64>,
    /// Paired test of model against LRP test 1/F2.
    pub paired_t: Option<TTest>,
}

/// `(LRP - model) / LRP` in percent.
pub fn normalized_gain(lrp: f64, model: f64) -> f64 {
    (lrp - model) / lrp * 100.0
}

/// Per-test-size summary of a set of competitions. Rows follow
/// `test_sizes`; sizes seen in the results but not listed are appended.
pub fn aggregate_competitions(results: &[CompetitionOutcome], test_sizes: &[f64]) -> Vec<AggregateRow> {
    let key = |t: f64| (t * 1e9).round() as i64;
    let mut order: Vec<f64> = test_sizes.to_vec();
    let mut cells: BTreeMap<i64, (Vec<&CompetitionResult>, usize)> = BTreeMap::new();
    for t in test_sizes {
        cells.entry(key(*t)).or_default();
    }
    for r in results {
        let t = match r {
            CompetitionOutcome::Ok(c) => c.test_size,
            CompetitionOutcome::Failed { test_size, .. } => *test_size,
        };
        if !cells.contains_key(&key(t)) {
            order.push(t);
        }
        let cell = cells.entry(key(t)).or_default();
        match r {
            CompetitionOutcome::Ok(c) => cell.0.push(c),
            CompetitionOutcome::Failed { .. } => cell.1 += 1,
        }
    }
    let mut seen = BTreeSet::new();
    order
        .into_iter()
        .filter(|t| seen.insert(key(*t)))
        .map(|t| {
            let (comps, failed) = &cells[&key(t)];
            aggregate_cell(t, comps, *failed)
        })
        .collect()
}

fn aggregate_cell(test_size: f64, comps: &[&CompetitionResult], failed: usize) -> AggregateRow {
    let mut metrics = Vec::new();
    for m in Metric::ALL {
        let mut rhos = Vec::new();
        let (mut better, mut total) = (0usize, 0usize);
        for c in comps {
            let pairs: Vec<(f64, f64)> = c
                .models
                .iter()
                .filter_map(|s| Some((m.of(&s.train)?, m.of(&s.test)?)))
                .collect();
            if pairs.len() >= 2 {
                let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                if let Ok(rho) = spearman(&x, &y) {
                    rhos.push(rho);
                }
            }
            for s in &c.models {
                total += 1;
                let beats = |model: Option<f64>, lrp: Option<f64>| match (model, lrp) {
                    (Some(a), Some(b)) => a < b,
                    (Some(_), None) => true,
                    _ => false,
                };
                if beats(m.of(&s.train), m.of(&c.lrp.train)) && beats(m.of(&s.test), m.of(&c.lrp.test)) {
                    better += 1;
                }
            }
        }
        metrics.push(MetricSummary {
            metric: m,
            spearman_mean: (!rhos.is_empty()).then(|| mean(&rhos)),
            spearman_std: sample_std(&rhos),
            spearman_count: rhos.len(),
            outperform_pct: (total > 0).then(|| better as f64 / total as f64 * 100.0),
        });
    }
    let (mut g_train, mut g_test, mut t_model, mut t_lrp) = (vec![], vec![], vec![], vec![]);
    for c in comps {
        let lrp_tr = c.lrp.train.inverse_f_beta();
        let lrp_te = c.lrp.test.inverse_f_beta();
        for s in &c.models {
            if let (Some(l), Some(v)) = (lrp_tr, s.train.inverse_f_beta()) {
                g_train.push(normalized_gain(l, v));
            }
            if let (Some(l), Some(v)) = (lrp_te, s.test.inverse_f_beta()) {
                g_test.push(normalized_gain(l, v));
                t_model.push(v);
                t_lrp.push(l);
            }
        }
    }
    AggregateRow {
        test_size,
        competitions: comps.len(),
        failed,
        empty_cell: comps.len() < 2,
        metrics,
        gain_train_mean: (!g_train.is_empty()).then(|| mean(&g_train)),
        gain_train_std: sample_std(&g_train),
        gain_test_mean: (!g_test.is_empty()).then(|| mean(&g_test)),
        gain_test_std: sample_std(&g_test),
        paired_t: paired_t_test(&t_model, &t_lrp).ok(),
    }
}

/// Gain feature relevance of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRecord {
    pub model: String,
    pub gains: BTreeMap<String, f64>,
    /// Fractional test-set 1/F2 gain over LRP.
    pub weight: f64,
    /// Whether the model beat LRP's 1/F2 on both train and test.
    #[serde(default = "yes")]
    pub outperforms_lrp: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub feature: String,
    pub rank: usize,
    pub mean_pct: f64,
    pub std_pct: f64,
}

/// Weighted mean and weighted standard deviation (`sum w (x - mean)^2 /
/// sum w`) of per-model gain percentages, ranked by descending mean.
pub fn feature_relevance_aggregate(
    records: &[RelevanceRecord],
    include_all: bool,
) -> Result<Vec<RelevanceRow>, AnalysisError> {
    let selected: Vec<&RelevanceRecord> = records.iter().filter(|r| include_all || r.outperforms_lrp).collect();
    if selected.is_empty() {
        return Err(AnalysisError::InvalidInput("no relevance records selected".into()));
    }
    let mut features = BTreeSet::new();
    let mut normalized = Vec::with_capacity(selected.len());
    for r in &selected {
        if !(r.weight.is_finite() && r.weight >= 0.0) {
            return Err(AnalysisError::InvalidWeight { model: r.model.clone(), weight: r.weight });
        }
        if r.gains.values().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(AnalysisError::InvalidInput(format!("model {}: gains must be non-negative", r.model)));
        }
        let total: f64 = r.gains.values().sum();
        if total <= 0.0 {
            return Err(AnalysisError::InvalidInput(format!("model {}: gains sum to zero", r.model)));
        }
        features.extend(r.gains.keys().cloned());
        normalized.push(r.gains.iter().map(|(k, g)| (k.clone(), g / total * 100.0)).collect::<BTreeMap<_, _>>());
    }
    let wsum: f64 = selected.iter().map(|r| r.weight).sum();
    if wsum <= 0.0 {
        return Err(AnalysisError::AllZeroWeights);
    }
    let mut rows: Vec<RelevanceRow> = features
        .into_iter()
        .map(|f| {
            let vals: Vec<f64> = normalized.iter().map(|n| n.get(&f).copied().unwrap_or(0.0)).collect();
            let m = selected.iter().zip(&vals).map(|(r, v)| r.weight * v).sum::<f64>() / wsum;
            let var = selected.iter().zip(&vals).map(|(r, v)| r.weight * (v - m).powi(2)).sum::<f64>() / wsum;
            RelevanceRow {
                feature: f,
                rank: 0,
                mean_pct: m,
                std_pct: var.sqrt(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean_pct.total_cmp(&a.mean_pct).then_with(|| a.feature.cmp(&b.feature)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub gamma: f64,
    pub iterations: usize,
}

/// Default tail-weighting exponent.
pub const DEFAULT_WEIBULL_GAMMA: f64 = 2.0;

const WEIBULL_MAX_ITER: usize = 200;

/// Weighted maximum-likelihood Weibull fit. Sample `i` gets weight
/// `(1 - F(x_i))^gamma` with `F` the empirical CDF at its average rank, so
/// larger `gamma` favours the left tail; `gamma = 0` is the plain MLE.
pub fn weibull_fit(samples: &[f64], gamma: f64) -> Result<WeibullFit, AnalysisError> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("gamma {gamma}")));
    }
    if samples.len() < 10 {
        return Err(AnalysisError::TooFewSamples { needed: 10, got: samples.len() });
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(AnalysisError::NonPositiveSample { index, value });
    }
    let n = samples.len() as f64;
    let w: Vec<f64> = if gamma == 0.0 {
        vec![1.0; samples.len()]
    } else {
        average_ranks(samples).iter().map(|r| (1.0 - (r - 0.5) / n).powf(gamma)).collect()
    };
    let wsum: f64 = w.iter().sum();
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let center = w.iter().zip(&logs).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let u: Vec<f64> = logs.iter().map(|l| l - center).collect();
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if umax <= 0.0 {
        return Err(AnalysisError::NoConvergence { iterations: 0 });
    }

    // g(k) = 1/k - E_k[u] with E_k weighted by w e^{ku}; strictly decreasing.
    // Returns (g, g', log of sum w e^{k(u - umax)}).
    let eval = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (wi, ui) in w.iter().zip(&u) {
            let e = wi * (k * (ui - umax)).exp();
            s0 += e;
            s1 += e * ui;
            s2 += e * ui * ui;
        }
        let m1 = s1 / s0;
        let var = (s2 / s0 - m1 * m1).max(0.0);
        (1.0 / k - m1, -1.0 / (k * k) - var, s0.ln())
    };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while eval(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(AnalysisError::NoConvergence { iterations: 0 });
        }
    }
    let mut k = if lo == 0.0 { 0.5 * hi } else { 0.5 * (lo + hi) };
    for it in 1..=WEIBULL_MAX_ITER {
        let (g, dg, _) = eval(k);
        if g > 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - g / dg;
        let next = if newton > lo && newton < hi && dg < 0.0 { newton } else { 0.5 * (lo + hi) };
        let done = (next - k).abs() <= 1e-9 * next || g == 0.0;
        k = next;
        if done {
            let (_, _, log_s0) = eval(k);
            let log_scale = center + umax + (log_s0 - wsum.ln()) / k;
            return Ok(WeibullFit {
                shape: k,
                scale: log_scale.exp(),
                gamma,
                iterations: it,
            });
        }
    }
    Err(AnalysisError::NoConvergence { iterations: WEIBULL_MAX_ITER })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Unit-norm principal axes, largest variance first. The entry with the
    /// largest magnitude of each axis is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Standardized rows projected on the components.
    pub projections: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
}

const PCA_MAX_ITER: usize = 10_000;

/// Principal components of mean-imputed, standardized columns by power
/// iteration with deflation.
pub fn pca(x: &[Vec<Option<f64>>], k: usize) -> Result<PcaResult, AnalysisError> {
    let n = x.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: n });
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(AnalysisError::InvalidInput("ragged matrix".into()));
    }
    if k == 0 || k > d {
        return Err(AnalysisError::InvalidInput(format!("k = {k} with {d} columns")));
    }
    let mut means = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let vals: Vec<f64> = x.iter().filter_map(|r| r[j]).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            continue;
        }
        means[j] = mean(&vals);
        let sd = sample_std(&vals).unwrap_or(0.0);
        if sd > 0.0 {
            scales[j] = sd;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| match v {
                    Some(v) if v.is_finite() => (v - means[j]) / scales[j],
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    // Imputed entries shift the column mean slightly; re-center exactly.
    let zmeans: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let z: Vec<Vec<f64>> = z.into_iter().map(|r| r.iter().zip(&zmeans).map(|(v, m)| v - m).collect()).collect();

    let mut cov = vec![vec![0.0; d]; d];
    for r in &z {
        for a in 0..d {
            for b in a..d {
                cov[a][b] += r[a] * r[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= (n - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    if trace <= 0.0 {
        return Err(AnalysisError::RankDeficient { requested: k, available: 0 });
    }

    let matvec = |m: &[Vec<f64>], v: &[f64]| -> Vec<f64> { m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut deflated = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 + 1.0) * 1e-3 * (c as f64 + 1.0)).collect();
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITER {
            for prev in &components {
                let p = dot(&v, prev);
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= p * b);
            }
            let norm = dot(&v, &v).sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            let mut w = matvec(&deflated, &v);
            for prev in &components {
                let p = dot(&w, prev);
                w.iter_mut().zip(prev).for_each(|(a, b)| *a -= p * b);
            }
            let new_lambda = dot(&v, &w);
            let wn = dot(&w, &w).sqrt();
            if wn <= 1e-300 {
                lambda = 0.0;
                break;
            }
            let next: Vec<f64> = w.iter().map(|a| a / wn).collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let settled = (new_lambda - lambda).abs() <= 1e-15 * trace;
            v = next;
            lambda = new_lambda;
            if delta < 1e-14 && settled {
                break;
            }
        }
        if lambda <= 1e-10 * trace {
            return Err(AnalysisError::RankDeficient { requested: k, available: c });
        }
        // Final re-orthonormalization and sign convention.
        for prev in &components {
            let p = dot(&v, prev);
            v.iter_mut().zip(prev).for_each(|(a, b)| *a -= p * b);
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let lead = v.iter().copied().fold(0.0_f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        let lambda = dot(&v, &matvec(&cov, &v));
        for a in 0..d {
            for b in 0..d {
                deflated[a][b] -= lambda * v[a] * v[b];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let projections = z
        .iter()
        .map(|r| components.iter().map(|c| dot(r, c)).collect())
        .collect();
    Ok(PcaResult {
        explained_variance_ratio: eigenvalues.iter().map(|l| l / trace).collect(),
        components,
        eigenvalues,
        projections,
        column_means: means,
        column_scales: scales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// Values below `lower`.
    pub underflow: u64,
    /// Values at or above the upper edge.
    pub overflow: u64,
}

impl Histogram {
    pub fn upper(&self) -> f64 {
        self.lower + self.bin_width * self.counts.len() as f64
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let lo = self.lower + self.bin_width * i as f64;
        (lo, lo + self.bin_width)
    }
}

/// Histogram of values over `[lower, upper)` with half-open bins.
pub fn histogram(values: &[f64], bin_width: f64, lower: f64, upper: f64) -> Result<Histogram, AnalysisError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) || !(upper > lower) {
        return Err(AnalysisError::InvalidInput("need bin_width > 0 and upper > lower".into()));
    }
    let nbins = ((upper - lower) / bin_width - 1e-9).ceil().max(1.0) as usize;
    let mut h = Histogram {
        lower,
        bin_width,
        counts: vec![0; nbins],
        underflow: 0,
        overflow: 0,
    };
    for &v in values {
        if v < lower {
            h.underflow += 1;
        } else {
            let i = ((v - lower) / bin_width).floor() as usize;
            if i < nbins {
                h.counts[i] += 1;
            } else {
                h.overflow += 1;
            }
        }
    }
    Ok(h)
}

/// Histogram of the final risks of `events`.
pub fn risk_histogram(events: &[Event], bin_width: f64, lower: f64, upper: f64) -> Result<Histogram, AnalysisError> {
    let risks = events
        .iter()
        .map(final_risk)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    histogram(&risks, bin_width, lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub events: usize,
    pub at_least_minus4: usize,
    pub at_least_minus5: usize,
    pub high_risk: usize,
    pub at_floor: usize,
}

/// Counts of final risks `>= -4`, `>= -5`, `>= -6` and `<= -30`.
pub fn threshold_counts(risks: &[f64]) -> ThresholdCounts {
    ThresholdCounts {
        events: risks.len(),
        at_least_minus4: risks.iter().filter(|&&r| r >= -4.0).count(),
        at_least_minus5: risks.iter().filter(|&&r| r >= -5.0).count(),
        high_risk: risks.iter().filter(|&&r| r >= HIGH_RISK_THRESHOLD).count(),
        at_floor: risks.iter().filter(|&&r| r <= RISK_FLOOR).count(),
    }
}
