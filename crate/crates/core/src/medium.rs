//! Shared wireless medium at integer-tick resolution.
//!
//! The medium is an add-only energy timeline: every transmission contributes
//! energy to a range of ticks, nothing ever removes energy, and occupancy is
//! the boolean "any contribution present". That asymmetry is the physical
//! foundation the announcement scheme rests on, so the timeline enforces it
//! structurally (there is no removal operation).
//!
//! Timing is modeled in ticks of `tick_us` microseconds (default 5 us). The
//! default profile: sensing window 20 us = 4 ticks, on/off slot 40 us = 8
//! ticks, SIFS 10 us = 2 ticks, DIFS 28 us rounded up to 6 ticks (the 34 us
//! and 50 us variants round to 7 and 10), sync burst 19.2 ms = 3840 ticks,
//! sync detect threshold 17 ms = 3400 ticks, longest honest packet 12 ms =
//! 2400 ticks (1500 bytes at 1 Mbit/s), medium reservation cap 32 ms = 6400
//! ticks.
//!
//! Multi-node topologies with directional transmitters are modeled by giving
//! every node its own timeline view: a transmission lands on the timelines of
//! the nodes it is visible to. Honest transmissions are visible to everyone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;

pub type Tick = u64;
pub type NodeId = u32;

/// Global timing and physical-layer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Microseconds per tick (documentation only; all arithmetic is in ticks).
    pub tick_us: u64,
    /// Sensing window length. One on/off slot spans two windows.
    pub window_ticks: u64,
    /// On/off slot length; must equal `2 * window_ticks`.
    pub slot_ticks: u64,
    pub sifs_ticks: u64,
    pub difs_ticks: u64,
    /// Backoff contention window exponent: slots drawn from
    /// `0..=min(2^(c+k-1) - 1, 255)` at the k-th retry.
    pub cw_exponent: u32,
    /// Sync burst transmit length.
    pub sync_tx_ticks: u64,
    /// Minimum continuous burst length the receiver accepts as a sync;
    /// deliberately below the transmit length.
    pub sync_detect_ticks: u64,
    /// Longest honest (non-announcement) packet.
    pub max_packet_ticks: u64,
    /// Upper bound on a CTS-to-self reservation.
    pub reservation_cap_ticks: u64,
    /// A transmission is decodable through interference when its power is at
    /// least this factor times the sum of the interferers' powers.
    pub capture_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_us: 5,
            window_ticks: 4,
            slot_ticks: 8,
            sifs_ticks: 2,
            difs_ticks: 6,
            cw_exponent: 4,
            sync_tx_ticks: 3840,
            sync_detect_ticks: 3400,
            max_packet_ticks: 2400,
            reservation_cap_ticks: 6400,
            capture_factor: 2.0,
        }
    }
}

impl SimConfig {
    /// Panics if structural relations between the timing fields are broken.
    pub fn validate(&self) {
        assert!(self.window_ticks > 0);
        assert_eq!(self.slot_ticks, 2 * self.window_ticks, "slot must span two windows");
        assert!(self.sync_detect_ticks <= self.sync_tx_ticks);
        assert!(self.capture_factor >= 1.0);
    }

    /// Backoff slot bound for the k-th retry (k starts at 1).
    pub fn backoff_bound(&self, retry: u32) -> u64 {
        let exp = self.cw_exponent + retry - 1;
        if exp >= 8 {
            255
        } else {
            (1u64 << exp) - 1
        }
    }
}

/// One transmitter's energy at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub source: NodeId,
    pub power: f64,
}

/// Per-node view of medium energy over time. Add-only: contributions
/// accumulate and are never removed, so occupancy can only grow.
#[derive(Debug, Clone, Default)]
pub struct EnergyTimeline {
    ticks: BTreeMap<Tick, Vec<Contribution>>,
}

impl EnergyTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one contribution to every tick in `[start, end)`.
    pub fn add(&mut self, source: NodeId, power: f64, start: Tick, end: Tick) {
        for t in start..end {
            self.ticks.entry(t).or_default().push(Contribution { source, power });
        }
    }

    pub fn is_busy(&self, tick: Tick) -> bool {
        self.ticks.contains_key(&tick)
    }

    pub fn contributions_at(&self, tick: Tick) -> &[Contribution] {
        self.ticks.get(&tick).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True if any contribution at `tick` comes from a node other than `own`.
    pub fn foreign_energy_at(&self, tick: Tick, own: NodeId) -> bool {
        self.contributions_at(tick).iter().any(|c| c.source != own)
    }

    /// Number of busy ticks in `[start, end)`.
    pub fn busy_ticks_in(&self, start: Tick, end: Tick) -> u64 {
        self.ticks.range(start..end).count() as u64
    }

    /// First busy tick at or after `from`, if any.
    pub fn next_busy_at_or_after(&self, from: Tick) -> Option<Tick> {
        self.ticks.range(from..).next().map(|(&t, _)| t)
    }

    /// Last busy tick overall, if the timeline is not empty.
    pub fn last_busy_tick(&self) -> Option<Tick> {
        self.ticks.keys().next_back().copied()
    }

    /// Total number of busy ticks (for accounting tests).
    pub fn busy_tick_count(&self) -> usize {
        self.ticks.len()
    }

    /// Maximal continuous busy runs as `[start, end)` intervals, in order.
    pub fn busy_runs(&self) -> Vec<(Tick, Tick)> {
        let mut runs = Vec::new();
        let mut current: Option<(Tick, Tick)> = None;
        for &t in self.ticks.keys() {
            match current {
                Some((start, end)) if t == end => current = Some((start, end + 1)),
                Some(run) => {
                    runs.push(run);
                    current = Some((t, t + 1));
                }
                None => current = Some((t, t + 1)),
            }
        }
        if let Some(run) = current {
            runs.push(run);
        }
        runs
    }
}

/// What kind of frame a transmission carries. `Slot` entries are the on
/// periods of the announcement slot phase; `Probe` and `Data` are ordinary
/// packets (pairing requests and replies).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Sync,
    Payload,
    Cts,
    Slot,
    Probe,
    Data,
}

/// Which nodes a transmission reaches. Directional antennas let an attacker
/// show different things to different receivers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    All,
    Only(BTreeSet<NodeId>),
}

impl Visibility {
    pub fn includes(&self, node: NodeId) -> bool {
        match self {
            Visibility::All => true,
            Visibility::Only(set) => set.contains(&node),
        }
    }
}

/// One transmission on the medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub index: usize,
    pub source: NodeId,
    pub start: Tick,
    pub end: Tick,
    pub power: f64,
    pub kind: TxKind,
    /// Frame content for kinds that carry data (payload, probe, data).
    pub content: Option<BitString>,
    pub visibility: Visibility,
}

impl TxRecord {
    pub fn overlaps(&self, start: Tick, end: Tick) -> bool {
        self.start < end && start < self.end
    }
}

/// The medium: one energy timeline per node plus the transmission log.
#[derive(Debug, Clone, Default)]
pub struct Medium {
    timelines: BTreeMap<NodeId, EnergyTimeline>,
    pub records: Vec<TxRecord>,
}

impl Medium {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Medium {
            timelines: nodes.into_iter().map(|n| (n, EnergyTimeline::new())).collect(),
            records: Vec::new(),
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.timelines.keys().copied()
    }

    /// Transmit over `[start, end)`. Energy lands on the timeline of every
    /// node in `visibility` plus the source's own (a transmitter always hears
    /// itself). Returns the index of the new record.
    pub fn transmit(
        &mut self,
        source: NodeId,
        start: Tick,
        end: Tick,
        power: f64,
        kind: TxKind,
        content: Option<BitString>,
        visibility: Visibility,
    ) -> usize {
        assert!(start <= end, "transmission interval reversed");
        for (&node, timeline) in self.timelines.iter_mut() {
            if node == source || visibility.includes(node) {
                timeline.add(source, power, start, end);
            }
        }
        let index = self.records.len();
        self.records.push(TxRecord { index, source, start, end, power, kind, content, visibility });
        index
    }

    pub fn timeline(&self, node: NodeId) -> &EnergyTimeline {
        self.timelines.get(&node).expect("unknown node")
    }

    /// Records whose frames reach `node`, in transmission-log order.
    pub fn records_visible_to(&self, node: NodeId) -> Vec<&TxRecord> {
        self.records
            .iter()
            .filter(|r| r.source == node || r.visibility.includes(node))
            .collect()
    }

    /// Replace the content of an in-flight frame (attacker overpowering the
    /// data portion). Energy is never removed; callers that model the
    /// overpowering transmission should add it separately.
    pub fn edit_record_content(&mut self, index: usize, content: BitString) {
        self.records[index].content = Some(content);
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CarrierSenseError {
    #[error("medium never idle long enough before tick {horizon}")]
    NeverIdle { horizon: Tick },
}

/// Wait for the medium to be idle for a DIFS plus `backoff_slots` backoff
/// slots, scanning from `from`. Returns the first tick at which transmission
/// may start, i.e. the end of the first fully idle window of length
/// `difs_ticks + backoff_slots * slot_ticks` that begins at or after `from`.
/// Fails with `NeverIdle` if no such window completes by `horizon`.
pub fn carrier_sense_wait(
    timeline: &EnergyTimeline,
    from: Tick,
    difs_ticks: u64,
    backoff_slots: u64,
    slot_ticks: u64,
    horizon: Tick,
) -> Result<Tick, CarrierSenseError> {
    let wait = difs_ticks + backoff_slots * slot_ticks;
    let mut start = from;
    while start + wait <= horizon {
        match timeline.next_busy_at_or_after(start) {
            Some(busy) if busy < start + wait => start = busy + 1,
            _ => return Ok(start + wait),
        }
    }
    Err(CarrierSenseError::NeverIdle { horizon })
}

/// Decode the frame occupying `[start, end)` from the given records, honoring
/// the capture effect: with several overlapping transmissions, one is decoded
/// only if its power is at least `capture_factor` times the sum of the
/// others; otherwise the result is a collision (None). Callers pre-filter the
/// records by kind and visibility.
pub fn decode_frame<'a>(
    records: impl IntoIterator<Item = &'a TxRecord>,
    start: Tick,
    end: Tick,
    capture_factor: f64,
) -> Option<TxRecord> {
    let overlapping: Vec<&TxRecord> = records.into_iter().filter(|r| r.overlaps(start, end)).collect();
    match overlapping.as_slice() {
        [] => None,
        [only] => Some((*only).clone()),
        several => {
            let total: f64 = several.iter().map(|r| r.power).sum();
            several
                .iter()
                .find(|r| r.power >= capture_factor * (total - r.power))
                .map(|r| (*r).clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn test_default_profile_is_consistent() {
        let cfg = SimConfig::default();
        cfg.validate();
        assert_eq!(cfg.slot_ticks * cfg.tick_us, 40);
        assert_eq!(cfg.sync_tx_ticks * cfg.tick_us, 19_200);
        assert_eq!(cfg.sync_detect_ticks * cfg.tick_us, 17_000);
        assert_eq!(cfg.max_packet_ticks * cfg.tick_us, 12_000);
        assert_eq!(cfg.reservation_cap_ticks * cfg.tick_us, 32_000);
    }

    #[test]
    fn test_backoff_bound_caps_at_255() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.backoff_bound(1), 15);
        assert_eq!(cfg.backoff_bound(4), 127);
        assert_eq!(cfg.backoff_bound(5), 255);
        assert_eq!(cfg.backoff_bound(9), 255);
    }

    #[test]
    fn test_transmit_marks_occupancy_and_contributions() {
        let mut medium = Medium::new([0, 1]);
        medium.transmit(0, 10, 14, 1.0, TxKind::Data, None, Visibility::All);
        let t = medium.timeline(1);
        assert!(!t.is_busy(9));
        assert!(t.is_busy(10) && t.is_busy(13));
        assert!(!t.is_busy(14));
        assert_eq!(t.contributions_at(12), &[Contribution { source: 0, power: 1.0 }]);
        assert_eq!(t.busy_ticks_in(0, 100), 4);
    }

    #[test]
    fn test_visibility_masks_timelines_but_not_source() {
        let mut medium = Medium::new([0, 1, 2]);
        let only_1 = Visibility::Only([1].into_iter().collect());
        medium.transmit(2, 0, 5, 1.0, TxKind::Data, None, only_1);
        assert!(medium.timeline(1).is_busy(0));
        assert!(medium.timeline(2).is_busy(0), "transmitter hears itself");
        assert!(!medium.timeline(0).is_busy(0));
        assert_eq!(medium.records_visible_to(0).len(), 0);
        assert_eq!(medium.records_visible_to(1).len(), 1);
    }

    #[test]
    fn test_busy_runs_merge_adjacent_contributions() {
        let mut t = EnergyTimeline::new();
        t.add(0, 1.0, 0, 4);
        t.add(1, 1.0, 2, 6);
        t.add(0, 1.0, 9, 10);
        assert_eq!(t.busy_runs(), vec![(0, 6), (9, 10)]);
        assert_eq!(t.contributions_at(3).len(), 2);
    }

    #[test]
    fn test_carrier_sense_idle_medium() {
        let t = EnergyTimeline::new();
        assert_eq!(carrier_sense_wait(&t, 0, 6, 0, 8, 1000), Ok(6));
        assert_eq!(carrier_sense_wait(&t, 0, 6, 3, 8, 1000), Ok(6 + 24));
    }

    #[test]
    fn test_carrier_sense_waits_out_busy_period() {
        let mut t = EnergyTimeline::new();
        t.add(0, 1.0, 0, 100);
        assert_eq!(carrier_sense_wait(&t, 0, 6, 0, 8, 10_000), Ok(106));
        assert_eq!(carrier_sense_wait(&t, 0, 6, 2, 8, 10_000), Ok(100 + 6 + 16));
    }

    #[test]
    fn test_carrier_sense_never_idle() {
        let mut t = EnergyTimeline::new();
        t.add(0, 1.0, 0, 500);
        assert_eq!(
            carrier_sense_wait(&t, 0, 6, 0, 8, 500),
            Err(CarrierSenseError::NeverIdle { horizon: 500 })
        );
    }

    #[test]
    fn test_decode_single_frame() {
        let mut medium = Medium::new([0, 1]);
        medium.transmit(0, 0, 10, 1.0, TxKind::Probe, None, Visibility::All);
        let decoded = decode_frame(medium.records.iter(), 0, 10, 2.0).unwrap();
        assert_eq!(decoded.source, 0);
    }

    #[test]
    fn test_decode_collision_of_equal_powers() {
        let mut medium = Medium::new([0, 1, 2]);
        medium.transmit(0, 0, 10, 1.0, TxKind::Probe, None, Visibility::All);
        medium.transmit(2, 0, 10, 1.0, TxKind::Probe, None, Visibility::All);
        assert_eq!(decode_frame(medium.records.iter(), 0, 10, 2.0), None);
    }

    #[test]
    fn test_decode_capture_takes_dominant_transmission() {
        let mut medium = Medium::new([0, 1, 2]);
        medium.transmit(0, 0, 10, 1.0, TxKind::Probe, None, Visibility::All);
        medium.transmit(2, 0, 10, 10.0, TxKind::Probe, None, Visibility::All);
        let decoded = decode_frame(medium.records.iter(), 0, 10, 2.0).unwrap();
        assert_eq!(decoded.source, 2, "10x power captures over 1x at factor 2");
    }

    proptest! {
        /// Add-only: a second batch of transmissions never clears occupancy.
        #[test]
        fn prop_occupancy_is_monotone(
            first in proptest::collection::vec((0u64..200, 1u64..30), 0..8),
            second in proptest::collection::vec((0u64..200, 1u64..30), 0..8),
        ) {
            let mut t = EnergyTimeline::new();
            for &(start, len) in &first {
                t.add(0, 1.0, start, start + len);
            }
            let busy_before: Vec<Tick> = (0..240).filter(|&x| t.is_busy(x)).collect();
            for &(start, len) in &second {
                t.add(1, 2.0, start, start + len);
            }
            for tick in busy_before {
                prop_assert!(t.is_busy(tick), "occupancy lost at {tick}");
            }
        }

        /// busy_ticks_in counts exactly the busy ticks of the range.
        #[test]
        fn prop_busy_count_matches_pointwise_scan(
            spans in proptest::collection::vec((0u64..100, 1u64..20), 0..6),
            start in 0u64..120,
            len in 0u64..60,
        ) {
            let mut t = EnergyTimeline::new();
            for &(s, l) in &spans {
                t.add(0, 1.0, s, s + l);
            }
            let direct = (start..start + len).filter(|&x| t.is_busy(x)).count() as u64;
            prop_assert_eq!(t.busy_ticks_in(start, start + len), direct);
        }
    }
}
