//! Report envelopes and guarded output files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL: &str = "conjunct";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Metadata embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Envelope {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>) -> Self {
        Envelope {
            tool: TOOL,
            version: VERSION,
            command,
            config_hash: config_hash(config),
            seed,
        }
    }
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    pub envelope: &'a Envelope,
    #[serde(flatten)]
    pub body: T,
}

/// Hex SHA-256 of the JSON encoding of a configuration.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Creates `path` for writing, refusing to replace an existing file unless
/// `force` is set.
pub fn create(path: &Path, force: bool) -> Result<BufWriter<File>, CliError> {
    if path.exists() && !force {
        return Err(CliError::Exists(path.to_path_buf()));
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Sidecar metadata path `<out>.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(w: impl Write, value: &T) -> Result<(), CliError> {
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a JSON report to `out`, or to stdout when no path is given.
pub fn emit<T: Serialize>(envelope: &Envelope, body: T, out: Option<&Path>, force: bool) -> Result<(), CliError> {
    let report = Report { envelope, body };
    match out {
        Some(p) => write_json(create(p, force)?, &report),
        None => write_json(io::stdout().lock(), &report),
    }
}

/// Writes the envelope next to a CSV or JSONL output.
pub fn emit_meta<T: Serialize>(envelope: &Envelope, body: T, out: &Path, force: bool) -> Result<(), CliError> {
    write_json(create(&meta_path(out), force)?, &Report { envelope, body })
}
