//! Content-addressed result directories.
//!
//! The digest covers the subcommand, the tool version, the fully expanded
//! config (defaults included) and the hashes of all input files. Payload
//! files depend only on the digest; timing goes into `envelope.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::sha256_hex;
use crate::error::{CliError, Result};

pub const ENVELOPE: &str = "envelope.json";

pub struct Payload {
    pub files: Vec<(String, String)>,
    /// Raised after the files are written, so the evidence is kept.
    pub violation: Option<String>,
}

pub type Producer = Box<dyn FnOnce() -> Result<Payload>>;

pub struct Prepared {
    pub config: Value,
    pub inputs: Vec<(String, String)>,
    pub produce: Producer,
}

impl Prepared {
    pub fn new<C: Serialize>(config: &C, inputs: Vec<(String, String)>, produce: Producer) -> Result<Self> {
        Ok(Self {
            config: serde_json::to_value(config).map_err(|e| CliError::Invariant(e.to_string()))?,
            inputs,
            produce,
        })
    }
}

pub fn digest(subcommand: &str, config: &Value, inputs: &[(String, String)]) -> String {
    let canonical = json!({
        "subcommand": subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn cached(dir: &Path) -> bool {
    let Ok(text) = std::fs::read_to_string(dir.join(ENVELOPE)) else {
        return false;
    };
    let Ok(env) = serde_json::from_str::<Value>(&text) else {
        return false;
    };
    env["payload"]
        .as_array()
        .is_some_and(|files| files.iter().all(|f| f["file"].as_str().is_some_and(|n| dir.join(n).is_file())))
}

pub fn execute(subcommand: &str, prepared: Prepared, out: &Path, force: bool) -> Result<PathBuf> {
    let digest = digest(subcommand, &prepared.config, &prepared.inputs);
    let dir = out.join(format!("{subcommand}-{}", &digest[..16]));
    if !force && cached(&dir) {
        log::info!("cached result in {}", dir.display());
        return Ok(dir);
    }
    let started = Instant::now();
    let payload = (prepared.produce)()?;
    let seconds = started.elapsed().as_secs_f64();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let mut listed = Vec::new();
    for (name, contents) in &payload.files {
        write(&dir.join(name), contents.as_bytes())?;
        listed.push(json!({"file": name, "sha256": sha256_hex(contents.as_bytes())}));
    }
    let envelope = json!({
        "tool": "complab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "digest": digest,
        "config": prepared.config,
        "inputs": prepared.inputs,
        "timing_seconds": seconds,
        "payload": listed,
    });
    let text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Invariant(e.to_string()))?;
    write(&dir.join(ENVELOPE), text.as_bytes())?;
    if let Some(v) = payload.violation {
        return Err(CliError::Invariant(v));
    }
    Ok(dir)
}
