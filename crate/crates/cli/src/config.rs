//! Config-file loading and the override model: every section is optional and
//! every field inside a section is optional, so a file states only what it
//! changes from the built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use tep_core::adversary::Strategy;
use tep_core::bits::BitString;
use tep_core::explorer::GridSpec;
use tep_core::medium::SimConfig;
use tep_core::pairing::{dh_public, AdversarySpec, NodeSpec, Role, Scenario};
use tep_core::receiver::{OccupancyComparison, ReceiverConfig, TieBreak};
use tep_core::sender::SenderConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    ParseConfig {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("empty grid: no valid parameter cells to explore")]
    EmptyGrid,
}

pub fn input_error(message: impl Into<String>) -> CliError {
    CliError::Input(message.into())
}

/// Parse a 0/1 string into bits with a diagnostic naming the argument.
pub fn parse_bits(what: &str, s: &str) -> Result<BitString, CliError> {
    BitString::parse(s).map_err(|e| input_error(format!("{what}: {e}")))
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub receiver: ReceiverSection,
    #[serde(default)]
    pub sender: SenderSection,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub pairing: PairingSection,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeSection>,
    #[serde(default)]
    pub adversary: Option<AdversarySection>,
    #[serde(default)]
    pub grid: GridSection,
}

impl FileConfig {
    /// Load a config file; no path means all defaults.
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| CliError::ParseConfig {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub tick_us: Option<u64>,
    pub window_ticks: Option<u64>,
    pub slot_ticks: Option<u64>,
    pub sifs_ticks: Option<u64>,
    pub difs_ticks: Option<u64>,
    pub cw_exponent: Option<u32>,
    pub sync_tx_ticks: Option<u64>,
    pub sync_detect_ticks: Option<u64>,
    pub max_packet_ticks: Option<u64>,
    pub reservation_cap_ticks: Option<u64>,
    pub capture_factor: Option<f64>,
}

impl SimSection {
    pub fn apply(&self, sim: &mut SimConfig) {
        let SimSection {
            tick_us,
            window_ticks,
            slot_ticks,
            sifs_ticks,
            difs_ticks,
            cw_exponent,
            sync_tx_ticks,
            sync_detect_ticks,
            max_packet_ticks,
            reservation_cap_ticks,
            capture_factor,
        } = self;
        set(&mut sim.tick_us, tick_us);
        set(&mut sim.window_ticks, window_ticks);
        set(&mut sim.slot_ticks, slot_ticks);
        set(&mut sim.sifs_ticks, sifs_ticks);
        set(&mut sim.difs_ticks, difs_ticks);
        set(&mut sim.cw_exponent, cw_exponent);
        set(&mut sim.sync_tx_ticks, sync_tx_ticks);
        set(&mut sim.sync_detect_ticks, sync_detect_ticks);
        set(&mut sim.max_packet_ticks, max_packet_ticks);
        set(&mut sim.reservation_cap_ticks, reservation_cap_ticks);
        set(&mut sim.capture_factor, capture_factor);
    }

    pub fn resolve(&self) -> Result<SimConfig, CliError> {
        let mut sim = SimConfig::default();
        self.apply(&mut sim);
        if sim.slot_ticks != 2 * sim.window_ticks {
            return Err(input_error(format!(
                "sim.slot_ticks must be twice sim.window_ticks (got {} and {})",
                sim.slot_ticks, sim.window_ticks
            )));
        }
        if sim.sync_detect_ticks > sim.sync_tx_ticks {
            return Err(input_error(
                "sim.sync_detect_ticks must not exceed sim.sync_tx_ticks",
            ));
        }
        Ok(sim)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub threshold: Option<u64>,
    pub skew_ticks: Option<u64>,
    pub tie_break: Option<TieBreak>,
    pub occupancy: Option<OccupancyComparison>,
}

impl ReceiverSection {
    pub fn apply(&self, rx: &mut ReceiverConfig) {
        let ReceiverSection {
            threshold,
            skew_ticks,
            tie_break,
            occupancy,
        } = self;
        set(&mut rx.threshold, threshold);
        set(&mut rx.skew_ticks, skew_ticks);
        set(&mut rx.tie_break, tie_break);
        set(&mut rx.occupancy, occupancy);
    }

    pub fn resolve(&self) -> ReceiverConfig {
        let mut rx = ReceiverConfig::default();
        self.apply(&mut rx);
        rx
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenderSection {
    pub power: Option<f64>,
    pub override_deadline_ticks: Option<u64>,
    pub backoff_slots: Option<u64>,
}

impl SenderSection {
    pub fn resolve(&self) -> SenderConfig {
        let mut tx = SenderConfig::default();
        set(&mut tx.power, &self.power);
        set(&mut tx.override_deadline_ticks, &self.override_deadline_ticks);
        set(&mut tx.backoff_slots, &self.backoff_slots);
        tx
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    /// Payload and digest width in bits for desk-scale frames.
    pub bits: Option<usize>,
}

impl FrameSection {
    pub fn bits(&self, default: usize) -> Result<usize, CliError> {
        let bits = self.bits.unwrap_or(default);
        if bits < 2 || bits % 2 != 0 || bits > 16 {
            return Err(input_error(format!(
                "frame.bits must be an even number in 2..=16, got {bits}"
            )));
        }
        Ok(bits)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingSection {
    pub walk_time_ms: Option<u64>,
    pub monitor_time_ms: Option<u64>,
    pub channels: Option<u32>,
    pub dwell_ms: Option<u64>,
    pub enrollee_override_ms: Option<u64>,
    pub three_push: Option<bool>,
    pub dh_p: Option<u64>,
    pub dh_g: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub id: u32,
    pub role: Role,
    pub secret: u64,
    /// Absent means the button is never pressed.
    pub button_ms: Option<u64>,
    pub second_button_ms: Option<u64>,
    #[serde(default)]
    pub channel: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default = "default_adversary_id")]
    pub id: u32,
    #[serde(default = "default_adversary_secret")]
    pub secret: u64,
    pub strategy: String,
    /// Channel the attack targets; ignored when `all_channels` is set.
    #[serde(default)]
    pub channel: u32,
    #[serde(default)]
    pub all_channels: bool,
    #[serde(default)]
    pub at_ms: u64,
    /// Capture power multiple.
    pub power: Option<f64>,
    /// Hog length in ticks.
    pub duration_ticks: Option<u64>,
    /// Forged payload for edit and impersonation attacks.
    pub payload: Option<String>,
    /// For the window-schedule attack: search for a secret whose public key
    /// makes the schedule constructible against the victim, instead of using
    /// `secret` as given.
    #[serde(default)]
    pub grind_secret: bool,
}

fn default_adversary_id() -> u32 {
    9
}

fn default_adversary_secret() -> u64 {
    11
}

impl AdversarySection {
    /// Build the attacker behavior. `default_forged` supplies the payload
    /// for edit/impersonation strategies when the file does not.
    pub fn strategy(&self, default_forged: &BitString) -> Result<Strategy, CliError> {
        let forged = match &self.payload {
            Some(s) => {
                let bits = parse_bits("adversary.payload", s)?;
                if bits.len() != default_forged.len() {
                    return Err(input_error(format!(
                        "adversary.payload is {} bits, frames carry {}",
                        bits.len(),
                        default_forged.len()
                    )));
                }
                bits
            }
            None => default_forged.clone(),
        };
        Ok(match self.strategy.as_str() {
            "passive" => Strategy::Passive,
            "payload_edit" => Strategy::PayloadEdit { payload: forged },
            "off_slot_energy" => Strategy::OffSlotEnergy,
            "collide" => Strategy::Collide,
            "capture" => Strategy::Capture {
                power: self.power.unwrap_or(4.0),
            },
            "hog" => Strategy::Hog {
                duration_ticks: self.duration_ticks.unwrap_or(264_000),
            },
            "impersonate" => Strategy::Impersonate { payload: forged },
            "skew_shift" => Strategy::SkewShift,
            other => {
                return Err(input_error(format!(
                    "unknown adversary.strategy {other:?}; expected one of passive, \
                     payload_edit, off_slot_energy, collide, capture, hog, impersonate, \
                     skew_shift"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub hash_lengths: Option<Vec<usize>>,
    pub ms: Option<Vec<u64>>,
    pub thresholds: Option<Vec<u64>>,
    pub skews: Option<Vec<u64>>,
}

// ---------------------------------------------------------------------------
// Resolution helpers
// ---------------------------------------------------------------------------

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

/// Inclusive integer range written `a..b`.
pub fn parse_range(s: &str) -> Result<Vec<u64>, CliError> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| input_error(format!("grid range must look like 1..6, got {s:?}")))?;
    let lo: u64 = lo
        .trim()
        .parse()
        .map_err(|_| input_error(format!("bad grid range start {lo:?}")))?;
    let hi: u64 = hi
        .trim()
        .parse()
        .map_err(|_| input_error(format!("bad grid range end {hi:?}")))?;
    Ok((lo..=hi).collect())
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| input_error(format!("bad list entry {part:?}")))
        })
        .collect()
}

/// Build the exploration grid: defaults, then the config section, then the
/// command-line shorthand.
pub fn resolve_grid(
    section: &GridSection,
    range: Option<&str>,
    hash_lengths: Option<&str>,
) -> Result<GridSpec, CliError> {
    let mut grid = GridSpec::desk_scale();
    if let Some(v) = &section.hash_lengths {
        grid.hash_lengths = v.clone();
    }
    if let Some(v) = &section.ms {
        grid.ms = v.clone();
    }
    if let Some(v) = &section.thresholds {
        grid.thresholds = v.clone();
    }
    if let Some(v) = &section.skews {
        grid.skews = v.clone();
    }
    if let Some(range) = range {
        let values = parse_range(range)?;
        grid.ms = values.clone();
        grid.thresholds = values.clone();
        grid.skews = values;
    }
    if let Some(list) = hash_lengths {
        grid.hash_lengths = parse_usize_list(list)?;
    }
    for &h in &grid.hash_lengths {
        if h < 2 || h % 2 != 0 || h > 16 {
            return Err(input_error(format!(
                "hash lengths must be even numbers in 2..=16, got {h}"
            )));
        }
    }
    if grid.cells().is_empty() {
        return Err(CliError::EmptyGrid);
    }
    Ok(grid)
}

/// Build a pairing scenario: the two-party baseline, then config overrides.
pub fn resolve_scenario(file: &FileConfig, seed: u64) -> Result<Scenario, CliError> {
    let mut sc = Scenario::two_party(seed);
    let PairingSection {
        walk_time_ms,
        monitor_time_ms,
        channels,
        dwell_ms,
        enrollee_override_ms,
        three_push,
        dh_p,
        dh_g,
    } = &file.pairing;
    set(&mut sc.config.walk_time_ms, walk_time_ms);
    set(&mut sc.config.monitor_time_ms, monitor_time_ms);
    set(&mut sc.config.channels, channels);
    set(&mut sc.config.dwell_ms, dwell_ms);
    set(&mut sc.config.enrollee_override_ms, enrollee_override_ms);
    set(&mut sc.config.three_push, three_push);
    set(&mut sc.config.dh.p, dh_p);
    set(&mut sc.config.dh.g, dh_g);
    file.sim.apply(&mut sc.sim);
    file.receiver.apply(&mut sc.rx);
    sc.frame_bits = file.frame.bits(sc.frame_bits)?;

    if !file.nodes.is_empty() {
        sc.nodes = file
            .nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                role: n.role,
                secret: n.secret,
                button_ms: n.button_ms,
                second_button_ms: n.second_button_ms,
                channel: n.channel,
            })
            .collect();
    }
    if let Some(adv) = &file.adversary {
        let public = dh_public(&sc.config.dh, adv.secret);
        if public >= 1 << sc.frame_bits {
            return Err(input_error(
                "adversary public key does not fit the frame payload",
            ));
        }
        let key_bits = BitString::from_value(public, sc.frame_bits as u32);
        sc.adversary = Some(AdversarySpec {
            id: adv.id,
            secret: adv.secret,
            strategy: adv.strategy(&key_bits)?,
            channel: if adv.all_channels {
                None
            } else {
                Some(adv.channel)
            },
            at_ms: adv.at_ms,
        });
    }
    check_scenario(&sc)?;
    Ok(sc)
}

/// The same structural checks `Scenario::validate` asserts, reported as
/// config diagnostics instead of panics.
fn check_scenario(sc: &Scenario) -> Result<(), CliError> {
    if sc.frame_bits < 2 || sc.frame_bits % 2 != 0 {
        return Err(input_error("frame.bits must be a positive even number"));
    }
    let mut ids = std::collections::BTreeSet::new();
    let mut enrollees = 0usize;
    let mut registrars = 0usize;
    for n in &sc.nodes {
        if !ids.insert(n.id) {
            return Err(input_error(format!("duplicate node id {}", n.id)));
        }
        if n.channel >= sc.config.channels {
            return Err(input_error(format!(
                "node {} channel {} is outside 0..{}",
                n.id, n.channel, sc.config.channels
            )));
        }
        match n.role {
            Role::Enrollee => enrollees += 1,
            Role::Registrar => registrars += 1,
        }
        let public = dh_public(&sc.config.dh, n.secret);
        if public >= 1 << sc.frame_bits {
            return Err(input_error(format!(
                "node {} public key {} does not fit {} payload bits",
                n.id, public, sc.frame_bits
            )));
        }
    }
    if enrollees == 0 || registrars == 0 {
        return Err(input_error(
            "scenario needs at least one enrollee and one registrar",
        ));
    }
    if let Some(a) = &sc.adversary {
        if ids.contains(&a.id) {
            return Err(input_error(format!(
                "adversary id {} collides with a node",
                a.id
            )));
        }
        if dh_public(&sc.config.dh, a.secret) >= 1 << sc.frame_bits {
            return Err(input_error(
                "adversary public key does not fit the frame payload",
            ));
        }
        if let Some(c) = a.channel {
            if c >= sc.config.channels {
                return Err(input_error(format!(
                    "adversary channel {} is outside 0..{}",
                    c, sc.config.channels
                )));
            }
        }
    }
    let cycle_ms = sc.config.channels as u64 * sc.config.dwell_ms;
    if cycle_ms >= 12_000 {
        return Err(input_error(format!(
            "a full channel scan must finish within 12 s, got {cycle_ms} ms"
        )));
    }
    Ok(())
}
