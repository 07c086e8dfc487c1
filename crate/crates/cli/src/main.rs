//! `conjunct`: batch driver for ingestion, splitting, prediction, scoring,
//! virtual competitions and the analysis tables.

mod output;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use conjunct_core::analysis::{self, CompetitionOutcome, RelevanceRecord, SimulationConfig};
use conjunct_core::ingest::{self, AssemblyConfig, DatasetSchema};
use conjunct_core::predictors::{predict_all, CascadeConfig, FeatureSet, PredictorSpec};
use conjunct_core::scoring::{competition_loss, restrict, PredictionSet, ScoreOptions};
use conjunct_core::splitting::{
    self, crop_eligible, crop_for_test, is_eligible, CroppedEvent, DataSplit, EligibilityRule, SensitivityGrid,
    SplitItem, SplitRule,
};
use conjunct_core::{Event, RiskMap};

use output::{create, emit, emit_meta, Envelope};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{} exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] conjunct_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

macro_rules! core_err {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
core_err!(
    conjunct_core::IngestError,
    conjunct_core::SplitError,
    conjunct_core::ScoreError,
    conjunct_core::PredictError,
    conjunct_core::AnalysisError,
    conjunct_core::CdmError
);

#[derive(Parser)]
#[command(name = "conjunct", version, about = "Collision-risk forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a dataset CSV and/or KVN directory into an event store.
    Ingest(IngestArgs),
    /// Partition events into train and test sets.
    Split(SplitArgs),
    /// Fit a model on the train side of a split and predict the test side.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Score(ScoreArgs),
    /// Run seeded virtual competitions.
    Simulate(SimulateArgs),
    /// Analysis tables as CSV.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset CSV; defaults to $CONJUNCT_DATASET.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    kvn_dir: Option<PathBuf>,
    /// CSV of `event_id,epoch` manoeuvre epochs in days to TCA.
    #[arg(long)]
    manoeuvres: Option<PathBuf>,
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    prob_floor: f64,
    #[arg(long, default_value_t = 0.0)]
    speed_tolerance: f64,
    /// Store events as read, without the assembly filters.
    #[arg(long)]
    no_filters: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitMode {
    Official,
    Stratified,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_enum, default_value = "official")]
    mode: SplitMode,
    #[arg(long, default_value_t = 0.2)]
    test_size: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    p_high: f64,
    #[arg(long, default_value_t = 0.9)]
    p_low: f64,
    #[arg(long)]
    stratify_missions: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Crp,
    Lrp,
    Sesc,
    Magpies,
    Knn,
    ZeroDelta,
}

#[derive(Args)]
struct ModelOpts {
    /// Neighbours for knn and magpies.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated knn features; default is every numeric attribute.
    #[arg(long)]
    features: Option<String>,
    /// Cascade configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-event overrides (`event_id,predicted_risk`), enabling step 7.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

impl ModelOpts {
    fn spec(&self, model: ModelArg) -> Result<PredictorSpec, CliError> {
        Ok(match model {
            ModelArg::Crp => PredictorSpec::Crp,
            ModelArg::Lrp => PredictorSpec::Lrp,
            ModelArg::ZeroDelta => PredictorSpec::ZeroDelta,
            ModelArg::Magpies => PredictorSpec::Magpies { k: self.k },
            ModelArg::Knn => PredictorSpec::Knn {
                k: self.k,
                features: match &self.features {
                    Some(list) => FeatureSet::Named(list.split(',').map(|s| s.trim().to_string()).collect()),
                    None => FeatureSet::AllNumeric,
                },
            },
            ModelArg::Sesc => {
                let mut config: CascadeConfig = match &self.config {
                    Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
                    None => CascadeConfig::default(),
                };
                if let Some(p) = &self.overrides {
                    config.overrides.extend(PredictionSet::read_csv(p)?.values);
                    config.enabled_steps.insert(7);
                }
                config.validate()?;
                PredictorSpec::Sesc { config }
            }
        })
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    opts: ModelOpts,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Subset {
    Test,
    Visible,
}

#[derive(Args)]
struct ScoreArgs {
    /// split.json from `split`, or a JSON object of event id to risk.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    no_clip: bool,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Side of a split.json to score against.
    #[arg(long, value_enum, default_value = "test")]
    subset: Subset,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Comma-separated models (crp, lrp, sesc, magpies, knn, zero_delta).
    #[arg(long, default_value = "lrp,knn")]
    models: String,
    /// Comma-separated test fractions; default 0.05..0.95 step 0.05.
    #[arg(long)]
    test_sizes: Option<String>,
    #[arg(long)]
    stratify_missions: bool,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[command(flatten)]
    opts: ModelOpts,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-test-size aggregation of a results file.
    Correlation {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        test_sizes: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Weighted gain-relevance ranking from JSON or JSONL records.
    Relevance {
        #[arg(long)]
        records: PathBuf,
        /// Keep models that did not beat LRP.
        #[arg(long)]
        include_all: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Tail-weighted Weibull fit of closest-approach distances.
    Weibull {
        /// Uses the smallest miss_distance of each event.
        #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
        events: Option<PathBuf>,
        /// CSV whose first column holds the samples.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long, default_value_t = analysis::DEFAULT_WEIBULL_GAMMA)]
        gamma: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Principal components of the final-CDM attributes.
    Pca {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Also write per-event projections here.
        #[arg(long)]
        projections: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Histogram of final risks.
    Histogram {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        upper: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score stability of LRP on random visible subsets of the test set.
    Visible {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value_t = 200)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": kind(&e), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn kind(e: &CliError) -> &'static str {
    match e {
        CliError::Exists(_) => "output_exists",
        CliError::Input(_) => "input",
        CliError::Core(_) => "data",
        CliError::Io(_) => "io",
        CliError::Json(_) | CliError::Csv(_) => "format",
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Split(a) => split_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
    }
}

fn load_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let (events, _) = ingest::read_events_bin(BufReader::new(File::open(path)?))?;
    Ok(events)
}

#[derive(Deserialize)]
struct SplitFile {
    split: DataSplit,
    truth: RiskMap,
}

fn load_split(path: &Path) -> Result<SplitFile, CliError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| CliError::Input(format!("bad number {t:?}"))))
        .collect()
}

fn ingest_cmd(a: IngestArgs) -> Result<(), CliError> {
    let csv_path = a.csv.or_else(|| std::env::var_os("CONJUNCT_DATASET").map(PathBuf::from));
    if csv_path.is_none() && a.kvn_dir.is_none() {
        return Err(CliError::Input("no input: pass --csv or --kvn-dir, or set CONJUNCT_DATASET".into()));
    }
    let mut events = Vec::new();
    if let Some(p) = &csv_path {
        events = ingest::read_dataset_csv(p, &DatasetSchema::default())?.0;
    }
    if let Some(dir) = &a.kvn_dir {
        let known: BTreeSet<String> = events.iter().map(|e| e.event_id().to_string()).collect();
        for e in ingest::read_kvn_dir(dir)? {
            if known.contains(e.event_id()) {
                return Err(CliError::Input(format!("event {} present in both CSV and KVN input", e.event_id())));
            }
            events.push(e);
        }
    }
    let manoeuvres = match &a.manoeuvres {
        Some(p) => ingest::read_manoeuvres(p)?,
        None => BTreeMap::new(),
    };
    let config = AssemblyConfig {
        prob_floor: a.prob_floor,
        speed_tolerance: a.speed_tolerance,
    };
    let cdms_read = events.iter().map(Event::len).sum();
    let (events, report) = if a.no_filters {
        let report = ingest::AssemblyReport {
            events_read: events.len(),
            cdms_read,
            events_kept: events.len(),
            cdms_kept: cdms_read,
            ..Default::default()
        };
        (events, report)
    } else {
        ingest::assemble_database(events, &manoeuvres, config)
    };
    ingest::write_events_bin(create(&a.out.out, a.out.force)?, &events, &report)?;

    #[derive(Serialize)]
    struct Cfg {
        config: AssemblyConfig,
        filters: bool,
        manoeuvres: usize,
    }
    let env = Envelope::new(
        "ingest",
        &Cfg {
            config,
            filters: !a.no_filters,
            manoeuvres: manoeuvres.len(),
        },
        None,
    );
    emit(&env, serde_json::json!({ "assembly": report }), None, false)
}

fn split_cmd(a: SplitArgs) -> Result<(), CliError> {
    let events = load_events(&a.events)?;
    let rule = EligibilityRule::default();
    let (split, truth) = match a.mode {
        SplitMode::Official => splitting::official_split(&events, &rule, a.test_size, a.p_high, a.p_low, a.seed)?,
        SplitMode::Stratified => {
            let cropped = crop_eligible(&events, &rule);
            let items: Vec<SplitItem> = cropped.iter().map(SplitItem::from_cropped).collect();
            let split = splitting::stratified_shuffle_split(&items, a.test_size, a.seed, a.stratify_missions)?;
            let truth = cropped.iter().map(|c| (c.event_id().to_string(), c.target_risk())).collect();
            (split, truth)
        }
    };
    #[derive(Serialize)]
    struct Cfg {
        mode: SplitMode,
        test_size: f64,
        p_high: f64,
        p_low: f64,
        stratify_missions: bool,
    }
    let env = Envelope::new(
        "split",
        &Cfg {
            mode: a.mode,
            test_size: a.test_size,
            p_high: a.p_high,
            p_low: a.p_low,
            stratify_missions: a.stratify_missions,
        },
        Some(a.seed),
    );
    #[derive(Serialize)]
    struct Body<'a> {
        n_events: usize,
        n_train: usize,
        n_test: usize,
        split: &'a DataSplit,
        truth: &'a RiskMap,
    }
    let body = Body {
        n_events: events.len(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        split: &split,
        truth: &truth,
    };
    emit(&env, body, Some(&a.out.out), a.out.force)
}

fn eligibility_of(split: &DataSplit) -> EligibilityRule {
    match split.rule {
        SplitRule::Official { eligibility, .. } => eligibility,
        SplitRule::Stratified { .. } => EligibilityRule::default(),
    }
}

/// Train events that can be cropped, and all test events cropped.
fn split_sides(events: &[Event], split: &DataSplit) -> Result<(Vec<CroppedEvent>, Vec<CroppedEvent>), CliError> {
    let rule = eligibility_of(split);
    let by_id: HashMap<&str, &Event> = events.iter().map(|e| (e.event_id(), e)).collect();
    let get = |id: &String| {
        by_id
            .get(id.as_str())
            .copied()
            .ok_or_else(|| CliError::Input(format!("event {id} of the split is not in the event store")))
    };
    let mut train = Vec::new();
    for id in &split.train {
        let e = get(id)?;
        if is_eligible(e, &rule) {
            train.push(crop_for_test(e, &rule)?);
        }
    }
    let test = split
        .test
        .iter()
        .map(|id| Ok(crop_for_test(get(id)?, &rule)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((train, test))
}

fn predict_cmd(a: PredictArgs) -> Result<(), CliError> {
    let events = load_events(&a.events)?;
    let sf = load_split(&a.split)?;
    let spec = a.opts.spec(a.model)?;
    let (train, test) = split_sides(&events, &sf.split)?;
    let mut p = spec.build()?;
    p.fit(&train)?;
    let preds = predict_all(p.as_ref(), test.iter().map(CroppedEvent::inputs))?;
    let mut w = create(&a.out.out, a.out.force)?;
    preds.write_csv_to(&mut w)?;
    w.flush()?;
    let env = Envelope::new("predict", &spec, Some(sf.split.seed));
    emit_meta(
        &env,
        serde_json::json!({ "model": spec, "n_train": train.len(), "n_test": test.len() }),
        &a.out.out,
        a.out.force,
    )
}

fn score_cmd(a: ScoreArgs) -> Result<(), CliError> {
    let raw: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(&a.truth)?))?;
    let (truth, seed, subset) = if raw.get("truth").is_some() {
        let sf: SplitFile = serde_json::from_value(raw)?;
        let ids = match a.subset {
            Subset::Test => sf.split.test.clone(),
            Subset::Visible => sf
                .split
                .visible
                .clone()
                .ok_or_else(|| CliError::Input("split has no visible subset".into()))?,
        };
        (restrict(&sf.truth, &ids), Some(sf.split.seed), Some(a.subset))
    } else {
        (serde_json::from_value::<RiskMap>(raw)?, None, None)
    };
    let preds = PredictionSet::read_csv(&a.preds)?;
    let opts = ScoreOptions {
        clip: !a.no_clip,
        beta: a.beta,
        ..Default::default()
    };
    let report = competition_loss(&truth, &preds, opts)?;
    #[derive(Serialize)]
    struct Cfg {
        clip: bool,
        beta: f64,
        clip_epsilon: f64,
        subset: Option<Subset>,
    }
    let env = Envelope::new(
        "score",
        &Cfg {
            clip: opts.clip,
            beta: opts.beta,
            clip_epsilon: opts.clip_epsilon,
            subset,
        },
        seed,
    );
    emit(
        &env,
        serde_json::json!({ "n_events": truth.len(), "report": report }),
        a.out.as_deref(),
        a.force,
    )
}

fn parse_models(list: &str, opts: &ModelOpts) -> Result<Vec<PredictorSpec>, CliError> {
    list.split(',')
        .map(|m| {
            let model = ModelArg::from_str(m.trim(), true).map_err(|_| CliError::Input(format!("unknown model {m:?}")))?;
            opts.spec(model)
        })
        .collect()
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), CliError> {
    let events = load_events(&a.events)?;
    let cropped = crop_eligible(&events, &EligibilityRule::default());
    let specs = parse_models(&a.models, &a.opts)?;
    let config = SimulationConfig {
        n_competitions: a.n,
        test_sizes: match &a.test_sizes {
            Some(s) => parse_list(s)?,
            None => splitting::default_test_sizes(),
        },
        stratify_missions: a.stratify_missions,
    };
    let results = analysis::run_virtual_competitions(&cropped, &specs, &config, a.seed, a.parallelism)?;
    let mut w = create(&a.out.out, a.out.force)?;
    analysis::write_results_jsonl(&mut w, &results)?;
    w.flush()?;
    let failed = results.iter().filter(|r| r.result().is_none()).count();
    let env = Envelope::new("simulate", &(&config, &specs), Some(a.seed));
    emit_meta(
        &env,
        serde_json::json!({
            "n_events": cropped.len(),
            "competitions": results.len(),
            "failed": failed,
            "models": specs,
            "config": config,
        }),
        &a.out.out,
        a.out.force,
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn read_relevance(path: &Path) -> Result<Vec<RelevanceRecord>, CliError> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn read_samples(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(0).unwrap_or_default().trim();
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {} // header
            Err(_) => return Err(CliError::Input(format!("row {}: bad sample {cell:?}", i + 1))),
        }
    }
    Ok(out)
}

fn analyze_cmd(cmd: AnalyzeCommand) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Correlation { results, test_sizes, out } => {
            let res: Vec<CompetitionOutcome> = analysis::read_results_jsonl(BufReader::new(File::open(&results)?))?;
            let sizes = match &test_sizes {
                Some(s) => parse_list(s)?,
                None => splitting::default_test_sizes(),
            };
            let rows = analysis::aggregate_competitions(&res, &sizes);
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            let mut header = vec!["test_size".to_string(), "competitions".into(), "failed".into(), "empty_cell".into()];
            for m in analysis::Metric::ALL {
                for s in ["spearman_mean", "spearman_std", "outperform_pct"] {
                    header.push(format!("{}_{s}", m.label()));
                }
            }
            header.extend(
                ["gain_train_mean", "gain_train_std", "gain_test_mean", "gain_test_std", "t", "p"].map(String::from),
            );
            wr.write_record(&header)?;
            for r in &rows {
                let mut rec = vec![
                    r.test_size.to_string(),
                    r.competitions.to_string(),
                    r.failed.to_string(),
                    r.empty_cell.to_string(),
                ];
                for m in &r.metrics {
                    rec.extend([fmt_opt(m.spearman_mean), fmt_opt(m.spearman_std), fmt_opt(m.outperform_pct)]);
                }
                rec.extend([
                    fmt_opt(r.gain_train_mean),
                    fmt_opt(r.gain_train_std),
                    fmt_opt(r.gain_test_mean),
                    fmt_opt(r.gain_test_std),
                    fmt_opt(r.paired_t.map(|t| t.t)),
                    fmt_opt(r.paired_t.map(|t| t.p)),
                ]);
                wr.write_record(&rec)?;
            }
            wr.flush()?;
            let env = Envelope::new("analyze correlation", &sizes, None);
            emit_meta(&env, serde_json::json!({ "results": res.len(), "std": "sample (n-1)" }), &out.out, out.force)
        }
        AnalyzeCommand::Relevance { records, include_all, out } => {
            let recs = read_relevance(&records)?;
            let rows = analysis::feature_relevance_aggregate(&recs, include_all)?;
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            wr.write_record(["feature", "rank", "mean_pct", "std_pct"])?;
            for r in &rows {
                wr.write_record([r.feature.clone(), r.rank.to_string(), r.mean_pct.to_string(), r.std_pct.to_string()])?;
            }
            wr.flush()?;
            let env = Envelope::new("analyze relevance", &include_all, None);
            emit_meta(
                &env,
                serde_json::json!({ "records": recs.len(), "weighted_std": "sum w (x - mean)^2 / sum w" }),
                &out.out,
                out.force,
            )
        }
        AnalyzeCommand::Weibull { events, samples, gamma, out } => {
            let xs = match (&events, &samples) {
                (Some(p), _) => load_events(p)?
                    .iter()
                    .filter_map(|e| e.cdms().iter().filter_map(|c| c.miss_distance).reduce(f64::min))
                    .collect(),
                (None, Some(p)) => read_samples(p)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let fit = analysis::weibull_fit(&xs, gamma)?;
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            wr.write_record(["shape", "scale", "gamma", "n", "iterations"])?;
            wr.write_record([
                fit.shape.to_string(),
                fit.scale.to_string(),
                fit.gamma.to_string(),
                xs.len().to_string(),
                fit.iterations.to_string(),
            ])?;
            wr.flush()?;
            let env = Envelope::new("analyze weibull", &gamma, None);
            emit_meta(
                &env,
                serde_json::json!({ "weighting": "(1 - F(x))^gamma, F at average rank (i - 0.5) / n", "fit": fit }),
                &out.out,
                out.force,
            )
        }
        AnalyzeCommand::Pca { events, k, projections, out } => {
            let events = load_events(&events)?;
            let names: Vec<String> = events
                .iter()
                .flat_map(|e| e.last().present_numeric().map(str::to_string).collect::<Vec<_>>())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let rows: Vec<Vec<Option<f64>>> =
                events.iter().map(|e| names.iter().map(|n| e.last().value(n)).collect()).collect();
            let res = analysis::pca(&rows, k)?;
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            let mut header = vec!["component".to_string(), "eigenvalue".into(), "explained_variance_ratio".into()];
            header.extend(names.iter().cloned());
            wr.write_record(&header)?;
            for (i, c) in res.components.iter().enumerate() {
                let mut rec = vec![(i + 1).to_string(), res.eigenvalues[i].to_string(), res.explained_variance_ratio[i].to_string()];
                rec.extend(c.iter().map(f64::to_string));
                wr.write_record(&rec)?;
            }
            wr.flush()?;
            if let Some(p) = &projections {
                let mut pw = csv::Writer::from_writer(create(p, out.force)?);
                let mut header = vec!["event_id".to_string()];
                header.extend((1..=k).map(|i| format!("pc{i}")));
                pw.write_record(&header)?;
                for (e, proj) in events.iter().zip(&res.projections) {
                    let mut rec = vec![e.event_id().to_string()];
                    rec.extend(proj.iter().map(f64::to_string));
                    pw.write_record(&rec)?;
                }
                pw.flush()?;
            }
            let env = Envelope::new("analyze pca", &k, None);
            emit_meta(
                &env,
                serde_json::json!({
                    "rows": events.len(),
                    "preprocessing": "attributes of the final CDM; missing entries imputed by column mean; columns standardized",
                }),
                &out.out,
                out.force,
            )
        }
        AnalyzeCommand::Histogram { events, bin_width, lower, upper, out } => {
            let events = load_events(&events)?;
            let h = analysis::risk_histogram(&events, bin_width, lower, upper)?;
            let risks = events.iter().map(conjunct_core::final_risk).collect::<Result<Vec<_>, _>>()?;
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            wr.write_record(["bin_lower", "bin_upper", "count"])?;
            wr.write_record(["-inf".to_string(), lower.to_string(), h.underflow.to_string()])?;
            for (i, c) in h.counts.iter().enumerate() {
                let (lo, hi) = h.bin_edges(i);
                wr.write_record([lo.to_string(), hi.to_string(), c.to_string()])?;
            }
            wr.write_record([h.upper().to_string(), "inf".to_string(), h.overflow.to_string()])?;
            wr.flush()?;
            let env = Envelope::new("analyze histogram", &(bin_width, lower, upper), None);
            emit_meta(
                &env,
                serde_json::json!({ "thresholds": analysis::threshold_counts(&risks) }),
                &out.out,
                out.force,
            )
        }
        AnalyzeCommand::Visible { events, split, draws, seed, out } => {
            let events = load_events(&events)?;
            let sf = load_split(&split)?;
            let (_, test) = split_sides(&events, &sf.split)?;
            let truth = restrict(&sf.truth, &sf.split.test);
            let preds = conjunct_core::predictors::lrp_predict(&test.iter().map(|c| c.inputs().clone()).collect::<Vec<_>>())?;
            let grid = SensitivityGrid { draws, ..Default::default() };
            let cells = splitting::visible_sensitivity_experiment(&truth, &preds, &grid, seed)?;
            let mut wr = csv::Writer::from_writer(create(&out.out, out.force)?);
            wr.write_record(["p_low", "p_high", "mean_relative_change"])?;
            for c in &cells {
                wr.write_record([c.p_low.to_string(), c.p_high.to_string(), c.mean_relative_change.to_string()])?;
            }
            wr.flush()?;
            let env = Envelope::new("analyze visible", &grid, Some(seed));
            emit_meta(&env, serde_json::json!({ "test_events": truth.len() }), &out.out, out.force)
        }
    }
}
