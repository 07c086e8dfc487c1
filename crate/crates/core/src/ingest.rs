//! Reading CDMs from key-value text and CSV, and assembling the event
//! database.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{Cdm, CdmError, Event};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed entry {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unit mismatch for {key}: expected {expected:?}, found {found:?}")]
    UnitMismatch {
        key: String,
        expected: String,
        found: String,
    },
    #[error("missing required field {0}")]
    MissingRequired(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate time_to_tca in event {0}")]
    DuplicateTimestamp(String),
    #[error("event {event_id}: {source}")]
    InvalidEvent {
        event_id: String,
        #[source]
        source: CdmError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("event store: {0}")]
    Store(String),
}

fn event_error(event_id: &str, source: CdmError) -> IngestError {
    match source {
        CdmError::DuplicateTimestamp { .. } => IngestError::DuplicateTimestamp(event_id.to_string()),
        source => IngestError::InvalidEvent {
            event_id: event_id.to_string(),
            source,
        },
    }
}

/// Physical unit expected for an attribute; `None` means dimensionless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub unit: Option<&'static str>,
}

const fn col(name: &'static str, unit: Option<&'static str>) -> ColumnSpec {
    ColumnSpec { name, unit }
}

const DAYS: Option<&str> = Some("days");
const METRES: Option<&str> = Some("m");
const MPS: Option<&str> = Some("m/s");

const KNOWN_COLUMNS: &[ColumnSpec] = &[
    col("event_id", None),
    col("time_to_tca", DAYS),
    col("mission_id", None),
    col("risk", None),
    col("c_object_type", None),
    col("t_span", METRES),
    col("miss_distance", METRES),
    col("relative_speed", MPS),
    col("max_risk_estimate", None),
    col("max_risk_scaling", None),
    col("mahalanobis_distance", None),
    col("c_position_covariance_det", None),
    col("c_obs_used", None),
    col("c_sigma_t", METRES),
    col("c_sigma_n", METRES),
    col("c_sigma_r", METRES),
    col("c_sigma_rdot", MPS),
    col("c_sigma_ndot", MPS),
    col("c_sigma_tdot", MPS),
    col("c_crdot_t", None),
    col("relative_position_r", METRES),
    col("relative_position_t", METRES),
    col("relative_position_n", METRES),
    col("relative_velocity_r", MPS),
    col("relative_velocity_t", MPS),
    col("relative_velocity_n", MPS),
    col("c_recommended_od_span", DAYS),
    col("c_actual_od_span", DAYS),
    col("c_sedr", Some("W/kg")),
    col("SSN", None),
    col("F10", None),
    col("F3M", None),
    col("AP", None),
    col("geocentric_latitude", Some("deg")),
    col("azimuth", Some("deg")),
    col("elevation", Some("deg")),
];

/// Column layout of the tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    required: Vec<&'static str>,
    known: Vec<ColumnSpec>,
    categorical: Vec<&'static str>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        DatasetSchema {
            required: vec!["event_id", "time_to_tca", "mission_id", "risk"],
            known: KNOWN_COLUMNS.to_vec(),
            categorical: vec!["mission_id", "c_object_type"],
        }
    }
}

impl DatasetSchema {
    pub fn required(&self) -> &[&'static str] {
        &self.required
    }

    pub fn categorical(&self) -> &[&'static str] {
        &self.categorical
    }

    pub fn is_categorical(&self, name: &str) -> bool {
        self.categorical.contains(&name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.known.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for c in &self.known {
            if !seen.insert(c.name) {
                return Err(IngestError::Schema(format!("duplicate column {}", c.name)));
            }
        }
        for r in self.required.iter().chain(&self.categorical) {
            if !seen.contains(r) {
                return Err(IngestError::Schema(format!("{r} is not a declared column")));
            }
        }
        Ok(())
    }
}

fn unit_matches(expected: &str, found: &str) -> bool {
    let aliases: &[&str] = match expected {
        "days" => &["days", "day", "d"],
        "m/s" => &["m/s", "m s-1", "m*s**-1"],
        other => return found.eq_ignore_ascii_case(other),
    };
    aliases.iter().any(|a| a.eq_ignore_ascii_case(found))
}

/// A CDM parsed from key-value text, with the event id if one was given.
#[derive(Debug, Clone, PartialEq)]
pub struct KvnRecord {
    pub event_id: Option<String>,
    pub cdm: Cdm,
}

/// Parses a key-value CDM (`KEY = VALUE [unit]` per line).
pub fn parse_kvn(text: &str) -> Result<Cdm, IngestError> {
    parse_kvn_record(text).map(|r| r.cdm)
}

pub fn parse_kvn_record(text: &str) -> Result<KvnRecord, IngestError> {
    let schema = DatasetSchema::default();
    let mut cdm = Cdm {
        time_to_tca: f64::NAN,
        ..Default::default()
    };
    let mut event_id = None;
    let mut seen_tca = false;
    let mut seen_risk = false;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') || starts_with_keyword(line, "COMMENT") {
            continue;
        }
        let syntax = || IngestError::Syntax {
            line: line_no,
            text: line.to_string(),
        };
        let (key, rest) = line.split_once('=').ok_or_else(syntax)?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax());
        }
        let (value, unit) = split_unit(rest.trim()).ok_or_else(syntax)?;
        if value.is_empty() {
            return Err(syntax());
        }
        let name = key.to_ascii_lowercase();
        let spec = schema.column(&name);
        if let (Some(spec), Some(found)) = (spec, unit) {
            let ok = spec.unit.is_some_and(|expected| unit_matches(expected, found));
            if !ok {
                return Err(IngestError::UnitMismatch {
                    key: spec.name.to_string(),
                    expected: spec.unit.unwrap_or("").to_string(),
                    found: found.to_string(),
                });
            }
        }
        let canonical = spec.map(|s| s.name.to_string()).unwrap_or(name);
        match canonical.as_str() {
            "event_id" => event_id = Some(value.to_string()),
            "mission_id" => cdm.mission_id = Some(value.to_string()),
            "c_object_type" | "object_type" => cdm.c_object_type = Some(value.to_string()),
            other => {
                let v: f64 = value.parse().map_err(|_| syntax())?;
                match other {
                    "time_to_tca" => seen_tca = true,
                    "risk" => seen_risk = true,
                    _ => {}
                }
                cdm.set_value(other, Some(v));
            }
        }
    }
    if !seen_tca {
        return Err(IngestError::MissingRequired("time_to_tca".into()));
    }
    if !seen_risk {
        return Err(IngestError::MissingRequired("risk".into()));
    }
    Ok(KvnRecord { event_id, cdm })
}

fn starts_with_keyword(line: &str, kw: &str) -> bool {
    line.len() >= kw.len()
        && line[..kw.len()].eq_ignore_ascii_case(kw)
        && line[kw.len()..].chars().next().is_none_or(char::is_whitespace)
}

fn split_unit(rest: &str) -> Option<(&str, Option<&str>)> {
    match rest.find('[') {
        None => Some((rest, None)),
        Some(open) => {
            let close = rest.rfind(']')?;
            if close != rest.len() - 1 || close < open {
                return None;
            }
            Some((rest[..open].trim(), Some(rest[open + 1..close].trim())))
        }
    }
}

/// Reads every `*.kvn` / `*.txt` file of a directory, grouping by `EVENT_ID`.
pub fn read_kvn_dir(dir: impl AsRef<Path>) -> Result<Vec<Event>, IngestError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("kvn") || e.eq_ignore_ascii_case("txt"))
        })
        .collect();
    paths.sort();
    let mut groups: Vec<(String, Vec<Cdm>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for p in paths {
        let rec = parse_kvn_record(&std::fs::read_to_string(&p)?)?;
        let id = rec
            .event_id
            .ok_or_else(|| IngestError::MissingRequired(format!("event_id ({})", p.display())))?;
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(rec.cdm);
    }
    groups
        .into_iter()
        .map(|(id, cdms)| Event::new(id.clone(), cdms).map_err(|e| event_error(&id, e)))
        .collect()
}

/// Counts produced while reading and filtering events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub events_read: usize,
    pub cdms_read: usize,
    pub events_kept: usize,
    pub cdms_kept: usize,
    pub dropped_below_floor: usize,
    pub dropped_anomalous: usize,
    /// Events left without CDMs after the manoeuvre cut.
    pub dropped_after_manoeuvre: usize,
    pub cdms_removed_pre_manoeuvre: usize,
}

impl AssemblyReport {
    pub fn events_dropped(&self) -> usize {
        self.dropped_below_floor + self.dropped_anomalous + self.dropped_after_manoeuvre
    }
}

/// Reads a dataset CSV: one CDM per row, grouped into events by `event_id`.
pub fn read_dataset_csv(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
) -> Result<(Vec<Event>, AssemblyReport), IngestError> {
    read_dataset_from(std::fs::File::open(path)?, schema)
}

pub fn read_dataset_from<R: io::Read>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<(Vec<Event>, AssemblyReport), IngestError> {
    schema.validate()?;
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(IngestError::Schema(format!("duplicate column {h}")));
        }
    }
    for r in schema.required() {
        if !seen.contains(r) {
            return Err(IngestError::Schema(format!("missing required column {r}")));
        }
    }
    let id_col = headers.iter().position(|h| h == "event_id").expect("checked");

    let mut groups: Vec<(String, Vec<Cdm>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cdms_read = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let mut cdm = Cdm::default();
        for (h, cell) in headers.iter().zip(rec.iter()) {
            if h == "event_id" {
                continue;
            }
            if schema.is_categorical(h) {
                if !cell.is_empty() {
                    match h.as_str() {
                        "mission_id" => cdm.mission_id = Some(cell.to_string()),
                        _ => cdm.c_object_type = Some(cell.to_string()),
                    }
                }
                continue;
            }
            if cell.is_empty() {
                if h == "time_to_tca" {
                    return Err(IngestError::Parse {
                        row,
                        column: h.clone(),
                        value: String::new(),
                    });
                }
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::Parse {
                row,
                column: h.clone(),
                value: cell.to_string(),
            })?;
            cdm.set_value(h, Some(v));
        }
        let id = rec.get(id_col).unwrap_or_default().to_string();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(cdm);
        cdms_read += 1;
    }
    let events = groups
        .into_iter()
        .map(|(id, cdms)| Event::new(id.clone(), cdms).map_err(|e| event_error(&id, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = AssemblyReport {
        events_read: events.len(),
        cdms_read,
        events_kept: events.len(),
        cdms_kept: cdms_read,
        ..Default::default()
    };
    Ok((events, report))
}

/// Writes events in the dataset CSV layout. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_dataset_csv(path: impl AsRef<Path>, events: &[Event]) -> Result<(), IngestError> {
    write_dataset_to(std::fs::File::create(path)?, events)
}

pub fn write_dataset_to<W: io::Write>(writer: W, events: &[Event]) -> Result<(), IngestError> {
    let extra: BTreeSet<&str> = events
        .iter()
        .flat_map(|e| e.cdms())
        .flat_map(|c| c.features.keys().map(String::as_str))
        .collect();
    let mut columns: Vec<&str> = vec!["event_id", "mission_id", "c_object_type"];
    columns.extend(crate::cdm::NAMED_NUMERIC);
    columns.extend(extra.iter().filter(|n| !columns.contains(n)).collect::<Vec<_>>());

    let mut wr = csv::Writer::from_writer(writer);
    wr.write_record(&columns)?;
    for e in events {
        for c in e.cdms() {
            let row: Vec<String> = columns
                .iter()
                .map(|&name| match name {
                    "event_id" => e.event_id().to_string(),
                    "mission_id" => c.mission_id.clone().unwrap_or_default(),
                    "c_object_type" => c.c_object_type.clone().unwrap_or_default(),
                    n => c.value(n).map(|v| v.to_string()).unwrap_or_default(),
                })
                .collect();
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a manoeuvre table with columns `event_id,epoch` (days to TCA).
pub fn read_manoeuvres(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>, IngestError> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(1).unwrap_or_default();
        let epoch = raw.parse().map_err(|_| IngestError::Parse {
            row: i + 2,
            column: "epoch".into(),
            value: raw.to_string(),
        })?;
        out.insert(rec.get(0).unwrap_or_default().to_string(), epoch);
    }
    Ok(out)
}

/// Filters applied when assembling the event database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// log10 floor on the per-event maximum of `max_risk_estimate`.
    pub prob_floor: f64,
    /// Relative speeds with magnitude at or below this are anomalous.
    pub speed_tolerance: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            prob_floor: -15.0,
            speed_tolerance: 0.0,
        }
    }
}

/// Applies, in order: the probability floor, the null-relative-speed
/// anomaly filter and the manoeuvre cut. Each dropped event is counted in
/// the first filter that rejects it.
pub fn assemble_database(
    events: Vec<Event>,
    manoeuvres: &BTreeMap<String, f64>,
    config: AssemblyConfig,
) -> (Vec<Event>, AssemblyReport) {
    let mut report = AssemblyReport {
        events_read: events.len(),
        cdms_read: events.iter().map(Event::len).sum(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(events.len());
    for event in events {
        let max_estimate = event
            .cdms()
            .iter()
            .filter_map(|c| c.max_risk_estimate)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        if max_estimate.is_none_or(|m| m < config.prob_floor) {
            report.dropped_below_floor += 1;
            continue;
        }
        let anomalous = event
            .cdms()
            .iter()
            .any(|c| c.relative_speed.is_some_and(|v| v.abs() <= config.speed_tolerance));
        if anomalous {
            report.dropped_anomalous += 1;
            continue;
        }
        let epoch = manoeuvres
            .get(event.event_id())
            .copied()
            .or(event.manoeuvre_epoch());
        let Some(epoch) = epoch else {
            kept.push(event);
            continue;
        };
        let (id, cdms, _, tca) = event.into_parts();
        let before = cdms.len();
        let cdms: Vec<Cdm> = cdms.into_iter().filter(|c| c.time_to_tca <= epoch).collect();
        report.cdms_removed_pre_manoeuvre += before - cdms.len();
        if cdms.is_empty() {
            report.dropped_after_manoeuvre += 1;
            continue;
        }
        kept.push(Event::from_parts_unchecked(id, cdms, Some(epoch), tca));
    }
    report.events_kept = kept.len();
    report.cdms_kept = kept.iter().map(Event::len).sum();
    (kept, report)
}

/// Replaces absolute epochs by `time_to_tca` and event ids by seeded random
/// identifiers. Returns the events and the old-to-new id mapping.
pub fn anonymize(events: Vec<Event>, seed: u64) -> Result<(Vec<Event>, BTreeMap<String, String>), IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..events.len()).collect();
    ids.shuffle(&mut rng);
    let mut mapping = BTreeMap::new();
    let mut out = Vec::with_capacity(events.len());
    for (event, new_id) in events.into_iter().zip(ids) {
        let (old_id, mut cdms, manoeuvre, tca_epoch) = event.into_parts();
        for c in &mut cdms {
            if let (Some(tca), Some(created)) = (tca_epoch, c.creation_epoch) {
                c.time_to_tca = tca - created;
            }
            c.creation_epoch = None;
        }
        let new_id = new_id.to_string();
        let e = Event::new(new_id.clone(), cdms)
            .map_err(|e| event_error(&old_id, e))?
            .with_manoeuvre_epoch(manoeuvre);
        mapping.insert(old_id, new_id);
        out.push(e);
    }
    Ok((out, mapping))
}

const STORE_MAGIC: &[u8; 8] = b"CNJEVT01";

#[derive(Serialize, Deserialize)]
struct EventStore {
    report: AssemblyReport,
    events: Vec<Event>,
}

/// Writes the binary event store consumed by the other commands.
pub fn write_events_bin<W: io::Write>(
    mut w: W,
    events: &[Event],
    report: &AssemblyReport,
) -> Result<(), IngestError> {
    w.write_all(STORE_MAGIC)?;
    bincode::serialize_into(
        &mut w,
        &EventStore {
            report: *report,
            events: events.to_vec(),
        },
    )
    .map_err(|e| IngestError::Store(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn read_events_bin<R: io::Read>(mut r: R) -> Result<(Vec<Event>, AssemblyReport), IngestError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(IngestError::Store("not an event store".into()));
    }
    let store: EventStore =
        bincode::deserialize_from(r).map_err(|e| IngestError::Store(e.to_string()))?;
    for e in &store.events {
        Event::new(e.event_id(), e.cdms().to_vec()).map_err(|err| event_error(e.event_id(), err))?;
    }
    Ok((store.events, store.report))
}
