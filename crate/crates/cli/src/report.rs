//! Run manifests and deterministic output writing. Every output directory
//! holds exactly one `manifest.json` describing the run that produced it;
//! rerunning with the same manifest rewrites every file byte-identically.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::CliError;
use tep_core::pairing::{AttackKind, Outcome, Protocol};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    pub tool_version: String,
    pub parameters: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: Option<&Path>,
        seed: u64,
        out_dir: &Path,
        parameters: serde_json::Value,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config: config.map(|p| p.display().to_string()),
            seed,
            out_dir: out_dir.display().to_string(),
            tool_version: TOOL_VERSION.to_string(),
            parameters,
        }
    }
}

/// An output directory with its manifest already written.
pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path, manifest: &RunManifest) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(path).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = OutDir {
            path: path.to_path_buf(),
        };
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        dir.write_text("manifest.json", &format!("{text}\n"))?;
        Ok(dir)
    }

    pub fn write_text(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
    }
}

/// Serialize one value as a JSON line.
pub fn json_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("trace records serialize");
    line.push('\n');
    line
}

pub fn outcome_name(outcome: &Outcome) -> &'static str {
    match outcome {
        Outcome::Paired { .. } => "paired",
        Outcome::AdversaryPaired { .. } => "adversary_paired",
        Outcome::TamperDetected => "tamper_detected",
        Outcome::ErrorMultipleDevices => "error_multiple_devices",
        Outcome::Timeout => "timeout",
    }
}

pub fn protocol_name(protocol: Protocol) -> &'static str {
    match protocol {
        Protocol::Pbc => "pbc",
        Protocol::Tep => "tep",
    }
}

pub fn attack_name(attack: AttackKind) -> &'static str {
    match attack {
        AttackKind::Collision => "collision",
        AttackKind::Capture => "capture",
        AttackKind::TimingControl => "timing_control",
    }
}

/// Milliseconds with three decimals for a tick count at a given tick length.
pub fn ticks_to_ms(ticks: u64, tick_us: u64) -> String {
    format!("{:.3}", (ticks * tick_us) as f64 / 1000.0)
}
