//! Push-button pairing at desk scale: a plain probe/reply baseline and the
//! announcement-protected variant, with an adversary in the loop.
//!
//! Runs are driven by a millisecond event clock (button presses, channel
//! visits, decision deadlines) layered over the tick-level medium. Every
//! radio exchange is played out at tick resolution through the sender and
//! receiver pipelines, so tampering is caught by exactly the same machinery
//! the rest of the crate verifies in isolation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::adversary::{
    apply_window_schedule, edit_payload, energize_off_slot, skew_shift_schedule, Strategy,
};
use crate::bits::BitString;
use crate::medium::{decode_frame, Medium, NodeId, SimConfig, Tick, TxKind, TxRecord, Visibility};
use crate::receiver::{receive_tea, ReceiveVerdict, ReceiverConfig, Reception};
use crate::sender::{emit_tea_at, self_monitor, send_tea, Overlap, SenderConfig};
use crate::tea_frame::{build_tea, Direction, FrameConfig, TeaFrame};
use crate::util::DetRng;

/// Probe and reply packet lengths for the baseline protocol, in ticks.
const PROBE_TICKS: u64 = 200;
const DATA_TICKS: u64 = 200;
/// How long an enrollee listens for a probe reply, in ticks.
const REPLY_WAIT_TICKS: u64 = 2_000;

// ---------------------------------------------------------------------------
// Key exchange
// ---------------------------------------------------------------------------

/// Toy discrete-log group for the key exchange. The protocol under test is
/// the pairing procedure, not the cryptography, so a small prime keeps
/// transcripts readable while preserving the algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhParams {
    pub p: u64,
    pub g: u64,
}

impl DhParams {
    /// Tiny group used in worked examples.
    pub fn toy() -> Self {
        DhParams { p: 23, g: 5 }
    }

    /// Default group for simulation runs.
    pub fn desk() -> Self {
        DhParams { p: 2003, g: 5 }
    }
}

/// Square-and-multiply modular exponentiation.
fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    assert!(modulus > 1, "modulus must exceed one");
    let m = modulus as u128;
    let mut acc: u128 = 1;
    let mut b = (base % modulus) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

/// Public half of a key exchange: `g^secret mod p`.
pub fn dh_public(params: &DhParams, secret: u64) -> u64 {
    mod_pow(params.g, secret, params.p)
}

/// Shared secret from one side: `peer_public^secret mod p`.
pub fn dh_shared(params: &DhParams, secret: u64, peer_public: u64) -> u64 {
    mod_pow(peer_public, secret, params.p)
}

// ---------------------------------------------------------------------------
// Configuration and scenarios
// ---------------------------------------------------------------------------

/// Timing parameters of the pairing procedure. The defaults mirror the
/// published push-button numbers; test scenarios shrink them so runs stay
/// fast while every ratio that matters is preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    /// How long each side keeps trying after its button press.
    pub walk_time_ms: u64,
    /// Look-back window applied at decision time.
    pub monitor_time_ms: u64,
    /// Number of radio channels scanned round-robin.
    pub channels: u32,
    /// Dwell per channel; a full scan cycle must finish within 12 s.
    pub dwell_ms: u64,
    /// Carrier-sense override deadline for announcement senders.
    pub enrollee_override_ms: u64,
    /// Allow an enrollee to commit early on a second button press.
    pub three_push: bool,
    pub dh: DhParams,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            walk_time_ms: 120_000,
            monitor_time_ms: 120_000,
            channels: 11,
            dwell_ms: 1_000,
            enrollee_override_ms: 1_000,
            three_push: false,
            dh: DhParams::desk(),
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) {
        assert!(self.walk_time_ms > 0 && self.monitor_time_ms > 0);
        assert!(self.channels > 0 && self.dwell_ms > 0);
        assert!(
            self.channels as u64 * self.dwell_ms < 12_000,
            "a full channel scan cycle must finish within 12 s"
        );
    }

    /// Shrunk timing for desk-scale runs: same structure, short walks.
    pub fn desk() -> Self {
        PairingConfig {
            walk_time_ms: 1_200,
            monitor_time_ms: 1_200,
            channels: 2,
            dwell_ms: 150,
            enrollee_override_ms: 50,
            three_push: false,
            dh: DhParams::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Enrollee,
    Registrar,
}

/// One honest participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: Role,
    pub secret: u64,
    /// Button press time; `None` means the button is never pressed.
    pub button_ms: Option<u64>,
    /// Optional second press (three-push commit for enrollees).
    pub second_button_ms: Option<u64>,
    /// Registrars: home channel. Enrollees: first channel of the scan.
    pub channel: u32,
}

/// The attacker, when the scenario has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub id: NodeId,
    pub secret: u64,
    pub strategy: Strategy,
    /// Channel the attack targets; `None` attacks every channel.
    pub channel: Option<u32>,
    /// When timed actions (hogs, independent announcements) begin.
    pub at_ms: u64,
}

/// A complete pairing run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: PairingConfig,
    pub sim: SimConfig,
    pub rx: ReceiverConfig,
    /// Payload width in bits for announcements and probes; public keys are
    /// carried big-endian in this many bits.
    pub frame_bits: usize,
    pub nodes: Vec<NodeSpec>,
    pub adversary: Option<AdversarySpec>,
    pub seed: u64,
}

impl Scenario {
    /// One enrollee (id 1) and one registrar (id 2) on channel 0, desk
    /// timing, no adversary.
    pub fn two_party(seed: u64) -> Scenario {
        Scenario {
            config: PairingConfig::desk(),
            sim: SimConfig::default(),
            rx: ReceiverConfig::default(),
            frame_bits: 16,
            nodes: vec![
                NodeSpec {
                    id: 1,
                    role: Role::Enrollee,
                    secret: 6,
                    button_ms: Some(100),
                    second_button_ms: None,
                    channel: 0,
                },
                NodeSpec {
                    id: 2,
                    role: Role::Registrar,
                    secret: 7,
                    button_ms: Some(50),
                    second_button_ms: None,
                    channel: 0,
                },
            ],
            adversary: None,
            seed,
        }
    }

    pub fn validate(&self) {
        self.config.validate();
        self.sim.validate();
        assert!(self.frame_bits >= 2 && self.frame_bits % 2 == 0);
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            assert!(ids.insert(n.id), "duplicate node id {}", n.id);
            assert!(n.channel < self.config.channels, "node channel out of range");
        }
        if let Some(a) = &self.adversary {
            assert!(ids.insert(a.id), "adversary id collides with a node");
            assert!(dh_public(&self.config.dh, a.secret) < 1 << self.frame_bits);
        }
        for n in &self.nodes {
            assert!(
                dh_public(&self.config.dh, n.secret) < 1 << self.frame_bits,
                "public key does not fit the frame payload"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Outcomes and transcripts
// ---------------------------------------------------------------------------

/// Final state of one participant after a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Paired { peer_public: u64, shared: u64 },
    /// The node completed the exchange with the attacker's key.
    AdversaryPaired { adversary_public: u64, shared: u64 },
    TamperDetected,
    ErrorMultipleDevices,
    Timeout,
}

impl Outcome {
    /// Severity used when one line must summarize a whole run.
    fn severity(&self) -> u8 {
        match self {
            Outcome::AdversaryPaired { .. } => 4,
            Outcome::TamperDetected => 3,
            Outcome::ErrorMultipleDevices => 2,
            Outcome::Timeout => 1,
            Outcome::Paired { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ButtonPressed,
    ProbeSent { channel: u32 },
    ProbeDeferred { channel: u32 },
    ProbeHeard { channel: u32, key: u64 },
    ProbeCollision { channel: u32 },
    ReplySent { channel: u32, key: u64 },
    ReplyHeard { channel: u32, key: u64 },
    AnnouncementSent { channel: u32, overridden: bool, suspected: bool },
    AnnouncementHeard { channel: u32, key: Option<u64>, verdict: ReceiveVerdict },
    AttackApplied { label: String },
    Decided { outcome: Outcome },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub ms: u64,
    pub node: NodeId,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcomes: BTreeMap<NodeId, Outcome>,
    pub events: Vec<Event>,
}

impl RunResult {
    pub fn outcome_of(&self, node: NodeId) -> &Outcome {
        &self.outcomes[&node]
    }

    /// Highest-severity outcome across all participants.
    pub fn summary(&self) -> Outcome {
        self.outcomes
            .values()
            .max_by_key(|o| o.severity())
            .cloned()
            .expect("a run always has participants")
    }
}

// ---------------------------------------------------------------------------
// Shared runner plumbing
// ---------------------------------------------------------------------------

fn ticks_per_ms(sim: &SimConfig) -> u64 {
    assert!(1000 % sim.tick_us == 0, "tick must divide a millisecond");
    1000 / sim.tick_us
}

/// What a node has accumulated towards its decision.
#[derive(Debug, Default)]
struct NodeState {
    /// Unique clean peer keys and when each was first heard.
    clean_keys: BTreeMap<u64, u64>,
    /// Times of tamper evidence: bad verdicts, missed announcements,
    /// suspicious energy around the node's own transmissions.
    evidence_ms: Vec<u64>,
    /// Baseline protocol only: the probe reply this node committed to.
    paired: Option<(u64, u64)>,
    /// Registrar bookkeeping for the baseline protocol.
    attempts: Vec<(u64, u64)>,
    replied: Option<(u64, u64)>,
    error_at: Option<u64>,
}

struct Runner<'a> {
    sc: &'a Scenario,
    tpm: u64,
    frame_cfg: FrameConfig,
    media: BTreeMap<u32, Medium>,
    publics: BTreeMap<NodeId, u64>,
    key_bits: BTreeMap<NodeId, BitString>,
    states: BTreeMap<NodeId, NodeState>,
    /// Sync-run ends each node has already accounted for, per node.
    processed: BTreeMap<NodeId, BTreeSet<Tick>>,
    events: Vec<Event>,
    rng: DetRng,
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario) -> Self {
        sc.validate();
        let tpm = ticks_per_ms(&sc.sim);
        let frame_cfg = FrameConfig::test_scale(&sc.sim, sc.frame_bits);
        let mut ids: Vec<NodeId> = sc.nodes.iter().map(|n| n.id).collect();
        if let Some(a) = &sc.adversary {
            ids.push(a.id);
        }
        let media = (0..sc.config.channels).map(|c| (c, Medium::new(ids.clone()))).collect();
        let mut publics = BTreeMap::new();
        let mut key_bits = BTreeMap::new();
        for n in &sc.nodes {
            let p = dh_public(&sc.config.dh, n.secret);
            publics.insert(n.id, p);
            key_bits.insert(n.id, BitString::from_value(p, sc.frame_bits as u32));
        }
        if let Some(a) = &sc.adversary {
            let p = dh_public(&sc.config.dh, a.secret);
            publics.insert(a.id, p);
            key_bits.insert(a.id, BitString::from_value(p, sc.frame_bits as u32));
        }
        let states = sc.nodes.iter().map(|n| (n.id, NodeState::default())).collect();
        let processed = sc.nodes.iter().map(|n| (n.id, BTreeSet::new())).collect();
        let mut events = Vec::new();
        for n in &sc.nodes {
            if let Some(b) = n.button_ms {
                events.push(Event { ms: b, node: n.id, kind: EventKind::ButtonPressed });
            }
        }
        Runner {
            sc,
            tpm,
            frame_cfg,
            media,
            publics,
            key_bits,
            states,
            processed,
            events,
            rng: DetRng::new(sc.seed),
        }
    }

    fn ms_of(&self, tick: Tick) -> u64 {
        tick / self.tpm
    }

    fn adversary_on(&self, channel: u32) -> Option<&'a AdversarySpec> {
        self.sc.adversary.as_ref().filter(|a| a.channel.map_or(true, |c| c == channel))
    }

    fn pressed_window(&self, node: &NodeSpec, ms: u64) -> bool {
        node.button_ms.is_some_and(|b| ms >= b && ms <= b + self.sc.config.walk_time_ms)
    }

    /// Enrollee channel-visit plan: `(ms, channel)` per visit, scan order.
    fn visits(&self, node: &NodeSpec) -> Vec<(u64, u32)> {
        let Some(b) = node.button_ms else { return Vec::new() };
        let cfg = &self.sc.config;
        let mut out = Vec::new();
        let mut k = 0u64;
        while k * cfg.dwell_ms < cfg.walk_time_ms {
            let ms = b + k * cfg.dwell_ms;
            let channel = (node.channel + (k % cfg.channels as u64) as u32) % cfg.channels;
            out.push((ms, channel));
            k += 1;
        }
        out
    }

    /// Record one announcement reception: clean keys of the expected
    /// direction count towards pairing, everything else is kept as evidence.
    fn observe_tea(&mut self, node: &NodeSpec, channel: u32, rec: &Reception) {
        let ms = self.ms_of(rec.sync_end);
        let expected = match node.role {
            Role::Registrar => Direction::Request,
            Role::Enrollee => Direction::Reply,
        };
        let mut key = None;
        match &rec.verdict {
            ReceiveVerdict::Clean => {
                let dir = rec
                    .decode
                    .as_ref()
                    .and_then(|d| d.bits())
                    .and_then(|b| Direction::from_bits(&b.slice(0..2)));
                let value = rec.payload.as_ref().map(|p| p.to_value());
                if dir == Some(expected) {
                    if let Some(v) = value {
                        if v != self.publics[&node.id] {
                            self.states
                                .get_mut(&node.id)
                                .unwrap()
                                .clean_keys
                                .entry(v)
                                .or_insert(ms);
                            key = Some(v);
                        }
                    }
                }
            }
            ReceiveVerdict::Tampered(_) | ReceiveVerdict::Missed(_) => {
                self.states.get_mut(&node.id).unwrap().evidence_ms.push(ms);
            }
        }
        self.events.push(Event {
            ms,
            node: node.id,
            kind: EventKind::AnnouncementHeard { channel, key, verdict: rec.verdict.clone() },
        });
    }

    fn attack_event(&mut self, adv: NodeId, ms: u64, label: &str) {
        self.events.push(Event {
            ms,
            node: adv,
            kind: EventKind::AttackApplied { label: label.to_string() },
        });
    }

    /// Decide one node's outcome from its accumulated state using the
    /// monitor-time look-back at `at` milliseconds.
    fn evaluate_at(&self, node: &NodeSpec, at: u64) -> Outcome {
        let state = &self.states[&node.id];
        let lo = at.saturating_sub(self.sc.config.monitor_time_ms);
        if state.evidence_ms.iter().any(|&m| m >= lo && m <= at) {
            return Outcome::TamperDetected;
        }
        let keys: Vec<u64> = state
            .clean_keys
            .iter()
            .filter(|&(_, &ms)| ms >= lo && ms <= at)
            .map(|(&k, _)| k)
            .collect();
        match keys.as_slice() {
            [] => Outcome::Timeout,
            [one] => self.paired_outcome(node, *one),
            _ => Outcome::ErrorMultipleDevices,
        }
    }

    /// Completing the exchange with the adversary's key is still "paired"
    /// from the node's point of view; the runner labels it for what it is.
    fn paired_outcome(&self, node: &NodeSpec, peer_public: u64) -> Outcome {
        let shared = dh_shared(&self.sc.config.dh, node.secret, peer_public);
        let adversarial = self
            .sc
            .adversary
            .as_ref()
            .is_some_and(|a| self.publics[&a.id] == peer_public);
        if adversarial {
            Outcome::AdversaryPaired { adversary_public: peer_public, shared }
        } else {
            Outcome::Paired { peer_public, shared }
        }
    }

}

// ---------------------------------------------------------------------------
// Announcement-protected pairing
// ---------------------------------------------------------------------------

/// One scheduled radio action in an announcement run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TeaEpisode {
    /// Enrollee channel visit: send one announcement request, listen for the
    /// reply.
    Visit { node_index: usize },
    /// The adversary transmits its own well-formed announcement.
    AdversaryTea,
}

pub fn run_tep(sc: &Scenario) -> RunResult {
    let mut r = Runner::new(sc);
    let mut outcomes: BTreeMap<NodeId, Outcome> = BTreeMap::new();
    let sim = sc.sim.clone();
    let cfg = sc.config.clone();
    let tpm = r.tpm;

    // Hogs occupy the channel up front, leaving one deliberate gap where the
    // adversary injects its own traffic.
    let mut episodes: Vec<(Tick, u32, TeaEpisode)> = Vec::new();
    if let Some(adv) = &sc.adversary {
        let channel = adv.channel.unwrap_or(0);
        match &adv.strategy {
            Strategy::Hog { duration_ticks } => {
                let start = adv.at_ms * tpm;
                let gap_len = 12_000;
                let gap_start = start + duration_ticks / 2;
                let medium = r.media.get_mut(&channel).unwrap();
                if gap_start > start {
                    medium.transmit(adv.id, start, gap_start, 1.0, TxKind::Data, None, Visibility::All);
                }
                let tail_start = gap_start + gap_len;
                let tail_end = start + duration_ticks + gap_len;
                if tail_end > tail_start {
                    medium.transmit(adv.id, tail_start, tail_end, 1.0, TxKind::Data, None, Visibility::All);
                }
                episodes.push((gap_start + 600, channel, TeaEpisode::AdversaryTea));
                r.attack_event(adv.id, adv.at_ms, "hog");
            }
            Strategy::Impersonate { .. } => {
                episodes.push((adv.at_ms * tpm, channel, TeaEpisode::AdversaryTea));
            }
            _ => {}
        }
    }

    for (i, node) in sc.nodes.iter().enumerate() {
        if node.role != Role::Enrollee {
            continue;
        }
        for (ms, channel) in r.visits(node) {
            episodes.push((ms * tpm, channel, TeaEpisode::Visit { node_index: i }));
        }
    }
    episodes.sort_by_key(|&(tick, channel, kind)| {
        (tick, channel, matches!(kind, TeaEpisode::Visit { .. }) as u8)
    });

    let registrars: Vec<&NodeSpec> =
        sc.nodes.iter().filter(|n| n.role == Role::Registrar).collect();

    for (tick, channel, kind) in episodes {
        match kind {
            TeaEpisode::Visit { node_index } => {
                let node = &sc.nodes[node_index];
                if outcomes.contains_key(&node.id) {
                    continue; // already committed via three-push
                }
                let frame = build_tea(&r.key_bits[&node.id], Direction::Request, &r.frame_cfg, &sim)
                    .expect("run frames are always well formed");
                let backoff = r.rng.next_below(4);
                let sender_cfg = SenderConfig {
                    power: 1.0,
                    override_deadline_ticks: cfg.enrollee_override_ms * tpm,
                    backoff_slots: backoff,
                };
                let medium = r.media.get_mut(&channel).unwrap();
                let sched =
                    send_tea(medium, node.id, &frame, &sender_cfg, &sim, tick, Visibility::All);

                // The adversary strikes while the announcement is in flight.
                if let Some(adv) = sc.adversary.as_ref() {
                    if adv.channel.map_or(true, |c| c == channel) {
                        apply_tea_attack(&mut r, adv, channel, &frame, &sched);
                    }
                }

                let medium = r.media.get_mut(&channel).unwrap();
                let overlap = self_monitor(&sched, medium.timeline(node.id));
                let suspected = matches!(overlap, Overlap::Suspected(_));
                let send_ms = r.ms_of(sched.sync_start);
                if suspected {
                    r.states.get_mut(&node.id).unwrap().evidence_ms.push(send_ms);
                }
                r.events.push(Event {
                    ms: send_ms,
                    node: node.id,
                    kind: EventKind::AnnouncementSent {
                        channel,
                        overridden: sched.overridden,
                        suspected,
                    },
                });

                for reg in &registrars {
                    if reg.channel != channel {
                        continue;
                    }
                    let reply = registrar_hears_tea(&mut r, reg, channel, tick);
                    if let Some(reply_sched) = reply {
                        // The enrollee waits on-channel for the reply.
                        let medium = &r.media[&channel];
                        if let Some(rec) = receive_tea(
                            medium,
                            node.id,
                            sched.slot_phase_end + 1,
                            &r.frame_cfg,
                            &sc.rx,
                            &sim,
                        ) {
                            let in_window = rec.sync_end <= reply_sched + sim.difs_ticks;
                            if in_window
                                && r.processed.get_mut(&node.id).unwrap().insert(rec.sync_end)
                            {
                                r.observe_tea(node, channel, &rec);
                            }
                        }
                    }
                }
            }
            TeaEpisode::AdversaryTea => {
                let adv = sc.adversary.as_ref().expect("episode implies an adversary");
                let frame = build_tea(&r.key_bits[&adv.id], Direction::Request, &r.frame_cfg, &sim)
                    .expect("run frames are always well formed");
                let medium = r.media.get_mut(&channel).unwrap();
                emit_tea_at(medium, adv.id, &frame, tick, 1.0, Visibility::All);
                let ms = r.ms_of(tick);
                r.attack_event(adv.id, ms, "own_announcement");
                for reg in &registrars {
                    if reg.channel == channel {
                        registrar_hears_tea(&mut r, reg, channel, tick);
                    }
                }
            }
        }
    }

    // Sweep each registrar's channel for bursts nothing accounted for: a
    // hogged channel shows up here as missed announcements.
    for reg in &registrars {
        let mut from = 0;
        loop {
            let rec = {
                let medium = &r.media[&reg.channel];
                receive_tea(medium, reg.id, from, &r.frame_cfg, &sc.rx, &sim)
            };
            let Some(rec) = rec else { break };
            let sync_end = rec.sync_end;
            if r.processed.get_mut(&reg.id).unwrap().insert(sync_end) {
                r.observe_tea(reg, reg.channel, &rec);
            }
            from = sync_end;
        }
    }

    // Decisions: the walk-time gate. Nothing commits before the deadline
    // unless the three-push shortcut applies.
    for node in &sc.nodes {
        if outcomes.contains_key(&node.id) {
            continue;
        }
        let Some(button) = node.button_ms else {
            r.events.push(Event {
                ms: 0,
                node: node.id,
                kind: EventKind::Decided { outcome: Outcome::Timeout },
            });
            outcomes.insert(node.id, Outcome::Timeout);
            continue;
        };
        let deadline = button + cfg.walk_time_ms;
        let mut decided: Option<(u64, Outcome)> = None;
        if cfg.three_push && node.role == Role::Enrollee {
            if let Some(second) = node.second_button_ms {
                if second >= button && second <= deadline {
                    let early = r.evaluate_at(node, second);
                    if matches!(
                        early,
                        Outcome::Paired { .. } | Outcome::AdversaryPaired { .. }
                    ) {
                        decided = Some((second, early));
                    }
                }
            }
        }
        let (ms, outcome) = decided.unwrap_or_else(|| (deadline, r.evaluate_at(node, deadline)));
        r.events.push(Event { ms, node: node.id, kind: EventKind::Decided { outcome: outcome.clone() } });
        outcomes.insert(node.id, outcome);
    }

    let mut events = r.events;
    events.sort_by(|a, b| a.ms.cmp(&b.ms).then_with(|| a.node.cmp(&b.node)));
    RunResult { outcomes, events }
}

/// Registrar-side handling of one announcement heard from `listen_from`:
/// record the verdict and, for a clean request inside the press window,
/// transmit the reply in the reserved slot right after the announcement.
/// Returns the reply's sync end when one was sent.
fn registrar_hears_tea(
    r: &mut Runner,
    reg: &NodeSpec,
    channel: u32,
    listen_from: Tick,
) -> Option<Tick> {
    let sim = &r.sc.sim;
    let rec = {
        let medium = &r.media[&channel];
        receive_tea(medium, reg.id, listen_from, &r.frame_cfg, &r.sc.rx, sim)?
    };
    if !r.processed.get_mut(&reg.id).unwrap().insert(rec.sync_end) {
        return None;
    }
    let ms = r.ms_of(rec.sync_end);
    let clean_request = rec.verdict == ReceiveVerdict::Clean
        && rec
            .decode
            .as_ref()
            .and_then(|d| d.bits())
            .and_then(|b| Direction::from_bits(&b.slice(0..2)))
            == Some(Direction::Request);
    r.observe_tea(reg, channel, &rec);
    if !clean_request || !r.pressed_window(reg, ms) {
        return None;
    }
    let key = rec.payload.as_ref().map(|p| p.to_value())?;
    if key == r.publics[&reg.id] {
        return None;
    }
    let reply_frame = build_tea(&r.key_bits[&reg.id], Direction::Reply, &r.frame_cfg, sim)
        .expect("run frames are always well formed");
    let anchor = rec.anchor.expect("clean receptions always carry an anchor");
    let reply_start =
        anchor + r.frame_cfg.num_slots() as u64 * sim.slot_ticks + sim.sifs_ticks;
    let medium = r.media.get_mut(&channel).unwrap();
    let reply_sched = emit_tea_at(medium, reg.id, &reply_frame, reply_start, 1.0, Visibility::All);
    r.processed.get_mut(&reg.id).unwrap().insert(reply_sched.sync_end);
    r.events.push(Event {
        ms: r.ms_of(reply_start),
        node: reg.id,
        kind: EventKind::ReplySent { channel, key: r.publics[&reg.id] },
    });
    Some(reply_sched.sync_end)
}

/// Mutate the medium according to the adversary's strategy, targeting the
/// announcement described by `sched`.
fn apply_tea_attack(
    r: &mut Runner,
    adv: &AdversarySpec,
    channel: u32,
    frame: &TeaFrame,
    sched: &crate::sender::TxSchedule,
) {
    let sim = r.sc.sim.clone();
    let rx = r.sc.rx.clone();
    let ms = r.ms_of(sched.sync_start);
    match &adv.strategy {
        Strategy::Passive | Strategy::Hog { .. } | Strategy::Impersonate { .. } => {}
        Strategy::PayloadEdit { payload } => {
            let medium = r.media.get_mut(&channel).unwrap();
            edit_payload(medium, sched, payload.clone());
            r.attack_event(adv.id, ms, "payload_edit");
        }
        Strategy::OffSlotEnergy => {
            let medium = r.media.get_mut(&channel).unwrap();
            energize_off_slot(medium, adv.id, sched, &frame.slots);
            r.attack_event(adv.id, ms, "off_slot_energy");
        }
        Strategy::Collide => {
            let twin = build_tea(&r.key_bits[&adv.id], Direction::Request, &r.frame_cfg, &sim)
                .expect("run frames are always well formed");
            let medium = r.media.get_mut(&channel).unwrap();
            emit_tea_at(medium, adv.id, &twin, sched.sync_start, 1.0, Visibility::All);
            r.attack_event(adv.id, ms, "collide");
        }
        Strategy::Capture { power } => {
            let twin = build_tea(&r.key_bits[&adv.id], Direction::Request, &r.frame_cfg, &sim)
                .expect("run frames are always well formed");
            let medium = r.media.get_mut(&channel).unwrap();
            emit_tea_at(medium, adv.id, &twin, sched.sync_start, *power, Visibility::All);
            r.attack_event(adv.id, ms, "capture");
        }
        Strategy::SkewShift => {
            let forged_payload = r.key_bits[&adv.id].clone();
            let forged = build_tea(&forged_payload, Direction::Request, &r.frame_cfg, &sim)
                .expect("run frames are always well formed");
            let planned = skew_plan(&frame.slots, &forged.slots, &rx, &sim);
            let medium = r.media.get_mut(&channel).unwrap();
            match planned {
                Some(plan) => {
                    edit_payload(medium, sched, forged_payload);
                    apply_window_schedule(
                        medium,
                        adv.id,
                        sched.slot_phase_start,
                        rx.skew_ticks,
                        &plan.added,
                        &sim,
                    )
                    .expect("the planned schedule always fits its windows");
                    r.attack_event(adv.id, ms, "skew_shift");
                }
                None => {
                    // No usable schedule: the attacker can still edit the
                    // payload, and the slot phase gives it away.
                    edit_payload(medium, sched, forged_payload);
                    r.attack_event(adv.id, ms, "skew_shift_fallback_edit");
                }
            }
        }
    }
}

/// Try to plan a misread of `sent` as `target` under the run's receiver
/// settings. `None` when the window parameters rule the construction out.
fn skew_plan(
    sent: &BitString,
    target: &BitString,
    rx: &ReceiverConfig,
    sim: &SimConfig,
) -> Option<crate::adversary::SkewShiftPlan> {
    if rx.threshold >= sim.window_ticks {
        return None;
    }
    skew_shift_schedule(
        sent,
        std::slice::from_ref(target),
        sim.window_ticks,
        rx.threshold,
        rx.skew_ticks,
    )
    .ok()
}

/// Search for an adversary secret whose public key can be forged onto the
/// scenario's first enrollee under the scenario's receiver settings. A real
/// attacker is free to grind its own key until the slot strings line up, so
/// attack scenarios use this to pick one.
pub fn find_skew_adversary_secret(sc: &Scenario) -> Option<u64> {
    let dh = &sc.config.dh;
    let frame_cfg = FrameConfig::test_scale(&sc.sim, sc.frame_bits);
    let victim = sc.nodes.iter().find(|n| n.role == Role::Enrollee)?;
    let victim_bits = BitString::from_value(dh_public(dh, victim.secret), sc.frame_bits as u32);
    let sent = build_tea(&victim_bits, Direction::Request, &frame_cfg, &sc.sim)
        .expect("run frames are always well formed")
        .slots;
    let taken: BTreeSet<u64> = sc.nodes.iter().map(|n| dh_public(dh, n.secret)).collect();
    for secret in 1..dh.p - 1 {
        let public = dh_public(dh, secret);
        if taken.contains(&public) {
            continue;
        }
        let forged_bits = BitString::from_value(public, sc.frame_bits as u32);
        let forged = build_tea(&forged_bits, Direction::Request, &frame_cfg, &sc.sim)
            .expect("run frames are always well formed");
        if skew_plan(&sent, &forged.slots, &sc.rx, &sc.sim).is_some() {
            return Some(secret);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Baseline probe/reply pairing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PbcEpisode {
    /// Registrar button press: apply the monitor-time look-back.
    Press { node_index: usize },
    /// Enrollee channel visit: one probe, then listen for a reply.
    Visit { node_index: usize },
    /// The adversary transmits its own probe.
    AdversaryProbe,
}

fn pbc_rank(kind: PbcEpisode) -> u8 {
    match kind {
        PbcEpisode::Press { .. } => 0,
        PbcEpisode::AdversaryProbe => 1,
        PbcEpisode::Visit { .. } => 2,
    }
}

pub fn run_pbc(sc: &Scenario) -> RunResult {
    let mut r = Runner::new(sc);
    let mut outcomes: BTreeMap<NodeId, Outcome> = BTreeMap::new();
    let sim = sc.sim.clone();
    let cfg = sc.config.clone();
    let tpm = r.tpm;

    let mut episodes: Vec<(Tick, u32, PbcEpisode)> = Vec::new();
    if let Some(adv) = &sc.adversary {
        if let Strategy::Hog { duration_ticks } = &adv.strategy {
            let channel = adv.channel.unwrap_or(0);
            let start = adv.at_ms * tpm;
            let gap_len = 12_000;
            let gap_start = start + duration_ticks / 2;
            let medium = r.media.get_mut(&channel).unwrap();
            if gap_start > start {
                medium.transmit(adv.id, start, gap_start, 1.0, TxKind::Data, None, Visibility::All);
            }
            let tail_start = gap_start + gap_len;
            let tail_end = start + duration_ticks + gap_len;
            if tail_end > tail_start {
                medium.transmit(adv.id, tail_start, tail_end, 1.0, TxKind::Data, None, Visibility::All);
            }
            episodes.push((gap_start + 600, channel, PbcEpisode::AdversaryProbe));
            r.attack_event(adv.id, adv.at_ms, "hog");
        }
    }
    for (i, node) in sc.nodes.iter().enumerate() {
        match node.role {
            Role::Enrollee => {
                for (ms, channel) in r.visits(node) {
                    episodes.push((ms * tpm, channel, PbcEpisode::Visit { node_index: i }));
                }
            }
            Role::Registrar => {
                if let Some(b) = node.button_ms {
                    episodes.push((b * tpm, node.channel, PbcEpisode::Press { node_index: i }));
                }
            }
        }
    }
    episodes.sort_by_key(|&(tick, channel, kind)| (tick, pbc_rank(kind), channel));

    let registrar_indices: Vec<usize> = sc
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.role == Role::Registrar)
        .map(|(i, _)| i)
        .collect();

    for (tick, channel, kind) in episodes {
        match kind {
            PbcEpisode::Press { node_index } => {
                // Look back over everything already logged: two distinct
                // enrollees inside the monitor window is a session overlap.
                let node = &sc.nodes[node_index];
                let ms = tick / tpm;
                let state = r.states.get_mut(&node.id).unwrap();
                let lo = ms.saturating_sub(cfg.monitor_time_ms);
                let unique: BTreeSet<u64> = state
                    .attempts
                    .iter()
                    .filter(|&&(t, _)| t >= lo && t <= ms)
                    .map(|&(_, k)| k)
                    .collect();
                if unique.len() >= 2 && state.replied.is_none() {
                    state.error_at = Some(ms);
                }
            }
            PbcEpisode::Visit { node_index } => {
                let node = &sc.nodes[node_index];
                let state = &r.states[&node.id];
                if state.paired.is_some() {
                    continue;
                }
                let backoff = r.rng.next_below(4);
                let horizon = tick + cfg.dwell_ms * tpm / 2;
                let medium = r.media.get_mut(&channel).unwrap();
                let sensed = crate::medium::carrier_sense_wait(
                    medium.timeline(node.id),
                    tick,
                    sim.difs_ticks,
                    backoff,
                    sim.slot_ticks,
                    horizon,
                );
                let Ok(start) = sensed else {
                    r.events.push(Event {
                        ms: tick / tpm,
                        node: node.id,
                        kind: EventKind::ProbeDeferred { channel },
                    });
                    continue;
                };
                let end = start + PROBE_TICKS;
                medium.transmit(
                    node.id,
                    start,
                    end,
                    1.0,
                    TxKind::Probe,
                    Some(r.key_bits[&node.id].clone()),
                    Visibility::All,
                );
                r.events.push(Event {
                    ms: start / tpm,
                    node: node.id,
                    kind: EventKind::ProbeSent { channel },
                });

                // Adversary hooks around the victim's probe.
                let mut extra_probe: Option<(Tick, Tick)> = None;
                if let Some(adv) = r.adversary_on(channel) {
                    let adv_key = r.key_bits[&adv.id].clone();
                    let ms = start / tpm;
                    let medium = r.media.get_mut(&channel).unwrap();
                    match &adv.strategy {
                        Strategy::Collide => {
                            medium.transmit(
                                adv.id,
                                start,
                                end,
                                1.0,
                                TxKind::Probe,
                                Some(adv_key.clone()),
                                Visibility::All,
                            );
                            // Forged reply to the victim, then a clean probe
                            // of the adversary's own for the registrar.
                            medium.transmit(
                                adv.id,
                                end + sim.sifs_ticks,
                                end + sim.sifs_ticks + DATA_TICKS,
                                4.0,
                                TxKind::Data,
                                Some(adv_key.clone()),
                                Visibility::All,
                            );
                            let ps = end + sim.sifs_ticks + DATA_TICKS + sim.sifs_ticks;
                            medium.transmit(
                                adv.id,
                                ps,
                                ps + PROBE_TICKS,
                                1.0,
                                TxKind::Probe,
                                Some(adv_key),
                                Visibility::All,
                            );
                            extra_probe = Some((ps, ps + PROBE_TICKS));
                            r.attack_event(adv.id, ms, "collide");
                        }
                        Strategy::Capture { power } => {
                            medium.transmit(
                                adv.id,
                                start,
                                end,
                                *power,
                                TxKind::Probe,
                                Some(adv_key.clone()),
                                Visibility::All,
                            );
                            medium.transmit(
                                adv.id,
                                end + sim.sifs_ticks,
                                end + sim.sifs_ticks + DATA_TICKS,
                                *power,
                                TxKind::Data,
                                Some(adv_key),
                                Visibility::All,
                            );
                            r.attack_event(adv.id, ms, "capture");
                        }
                        _ => {}
                    }
                }

                for &ri in &registrar_indices {
                    let reg = &sc.nodes[ri];
                    if reg.channel != channel {
                        continue;
                    }
                    registrar_hears_probe(&mut r, reg, channel, start, end);
                    if let Some((ps, pe)) = extra_probe {
                        registrar_hears_probe(&mut r, reg, channel, ps, pe);
                    }
                }

                // Listen for a reply. The baseline protocol commits to the
                // first decodable one: that immediacy is its weakness.
                if let Some((ms, key)) = enrollee_hears_reply(&mut r, node, channel, end) {
                    let state = r.states.get_mut(&node.id).unwrap();
                    state.paired = Some((ms, key));
                }
            }
            PbcEpisode::AdversaryProbe => {
                let adv = sc.adversary.as_ref().expect("episode implies an adversary");
                let medium = r.media.get_mut(&channel).unwrap();
                let end = tick + PROBE_TICKS;
                medium.transmit(
                    adv.id,
                    tick,
                    end,
                    1.0,
                    TxKind::Probe,
                    Some(r.key_bits[&adv.id].clone()),
                    Visibility::All,
                );
                r.attack_event(adv.id, tick / tpm, "own_probe");
                for &ri in &registrar_indices {
                    let reg = &sc.nodes[ri];
                    if reg.channel == channel {
                        registrar_hears_probe(&mut r, reg, channel, tick, end);
                    }
                }
            }
        }
    }

    // Decisions. The baseline registrar pairs the moment it replies; only
    // the error and timeout cases wait for the deadline.
    for node in &sc.nodes {
        let Some(button) = node.button_ms else {
            r.events.push(Event {
                ms: 0,
                node: node.id,
                kind: EventKind::Decided { outcome: Outcome::Timeout },
            });
            outcomes.insert(node.id, Outcome::Timeout);
            continue;
        };
        let deadline = button + cfg.walk_time_ms;
        let state = &r.states[&node.id];
        let (ms, outcome) = match node.role {
            Role::Registrar => {
                if let Some(err_ms) = state.error_at {
                    (err_ms, Outcome::ErrorMultipleDevices)
                } else if let Some((reply_ms, partner)) = state.replied {
                    (reply_ms, r.paired_outcome(node, partner))
                } else {
                    (deadline, Outcome::Timeout)
                }
            }
            Role::Enrollee => match state.paired {
                Some((pair_ms, key)) => (pair_ms, r.paired_outcome(node, key)),
                None => (deadline, Outcome::Timeout),
            },
        };
        r.events.push(Event { ms, node: node.id, kind: EventKind::Decided { outcome: outcome.clone() } });
        outcomes.insert(node.id, outcome);
    }

    let mut events = r.events;
    events.sort_by(|a, b| a.ms.cmp(&b.ms).then_with(|| a.node.cmp(&b.node)));
    RunResult { outcomes, events }
}

/// Registrar-side handling of whatever probes occupy `[start, end)`:
/// decode under the capture rule, log the attempt, check the monitor
/// window, and reply when exactly one enrollee is in play.
fn registrar_hears_probe(r: &mut Runner, reg: &NodeSpec, channel: u32, start: Tick, end: Tick) {
    let sim = r.sc.sim.clone();
    let cfg = r.sc.config.clone();
    let tpm = r.tpm;
    let decoded: Option<TxRecord> = {
        let medium = &r.media[&channel];
        let visible = medium.records_visible_to(reg.id);
        let probes: Vec<&TxRecord> = visible
            .iter()
            .copied()
            .filter(|rec| rec.kind == TxKind::Probe && rec.overlaps(start, end))
            .collect();
        if probes.is_empty() {
            return;
        }
        decode_frame(probes, start, end, sim.capture_factor)
    };
    let ms = end / tpm;
    let Some(rec) = decoded else {
        r.events.push(Event {
            ms,
            node: reg.id,
            kind: EventKind::ProbeCollision { channel },
        });
        return;
    };
    let Some(key) = rec.content.as_ref().map(|c| c.to_value()) else { return };
    r.events.push(Event { ms, node: reg.id, kind: EventKind::ProbeHeard { channel, key } });
    let own_key = r.publics[&reg.id];
    let state = r.states.get_mut(&reg.id).unwrap();
    if key == own_key {
        return;
    }
    state.attempts.push((ms, key));
    if state.error_at.is_some() || state.replied.is_some() {
        return;
    }
    if !r.pressed_window(reg, ms) {
        return;
    }
    let state = r.states.get_mut(&reg.id).unwrap();
    let lo = ms.saturating_sub(cfg.monitor_time_ms);
    let unique: BTreeSet<u64> = state
        .attempts
        .iter()
        .filter(|&&(t, _)| t >= lo && t <= ms)
        .map(|&(_, k)| k)
        .collect();
    if unique.len() >= 2 {
        state.error_at = Some(ms);
        return;
    }
    state.replied = Some((ms, key));
    let reply_start = rec.end + sim.sifs_ticks;
    let medium = r.media.get_mut(&channel).unwrap();
    medium.transmit(
        reg.id,
        reply_start,
        reply_start + DATA_TICKS,
        1.0,
        TxKind::Data,
        Some(r.key_bits[&reg.id].clone()),
        Visibility::All,
    );
    r.events.push(Event {
        ms: reply_start / tpm,
        node: reg.id,
        kind: EventKind::ReplySent { channel, key: own_key },
    });
}

/// Enrollee-side reply listening for the baseline protocol: decode the data
/// packets in the wait window under the capture rule.
fn enrollee_hears_reply(
    r: &mut Runner,
    node: &NodeSpec,
    channel: u32,
    probe_end: Tick,
) -> Option<(u64, u64)> {
    let window_end = probe_end + REPLY_WAIT_TICKS;
    let decoded = {
        let medium = &r.media[&channel];
        let visible = medium.records_visible_to(node.id);
        let replies: Vec<&TxRecord> = visible
            .iter()
            .copied()
            .filter(|rec| {
                rec.kind == TxKind::Data
                    && rec.source != node.id
                    && rec.content.is_some()
                    && rec.overlaps(probe_end, window_end)
            })
            .collect();
        decode_frame(replies, probe_end, window_end, r.sc.sim.capture_factor)
    };
    let rec = decoded?;
    let key = rec.content.as_ref()?.to_value();
    let ms = rec.end / r.tpm;
    r.events.push(Event { ms, node: node.id, kind: EventKind::ReplyHeard { channel, key } });
    Some((ms, key))
}

// ---------------------------------------------------------------------------
// Attack matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Pbc,
    Tep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Collision,
    Capture,
    TimingControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub protocol: Protocol,
    pub attack: AttackKind,
    pub outcome: Outcome,
}

/// Scenario used by the attack matrix: the two-party baseline plus one
/// adversary (id 9) running the given strategy.
pub fn attack_scenario(attack: AttackKind, seed: u64) -> Scenario {
    let mut sc = Scenario::two_party(seed);
    let strategy = match attack {
        AttackKind::Collision => Strategy::Collide,
        AttackKind::Capture => Strategy::Capture { power: 4.0 },
        AttackKind::TimingControl => Strategy::Hog { duration_ticks: 264_000 },
    };
    sc.adversary = Some(AdversarySpec {
        id: 9,
        secret: 11,
        strategy,
        channel: Some(0),
        at_ms: 0,
    });
    sc
}

/// Run every attack against both protocols and summarize each run by its
/// most severe participant outcome.
pub fn run_attack_matrix(seed: u64) -> Vec<MatrixCell> {
    let mut rows = Vec::new();
    for attack in [AttackKind::Collision, AttackKind::Capture, AttackKind::TimingControl] {
        for protocol in [Protocol::Pbc, Protocol::Tep] {
            let sc = attack_scenario(attack, seed);
            let result = match protocol {
                Protocol::Pbc => run_pbc(&sc),
                Protocol::Tep => run_tep(&sc),
            };
            rows.push(MatrixCell { protocol, attack, outcome: result.summary() });
        }
    }
    rows
}
