//! Announcement transmit pipeline and the sender's own-transmission guard.
//!
//! A sender contends for the medium like any other station (DIFS plus
//! backoff), but an announcement must eventually go out even if an attacker
//! hogs the channel, so carrier sense is overridden after a configurable
//! deadline measured from the first transmit attempt. The sender then emits
//! sync burst, payload, CTS-to-self, and the on-slots of the slot phase.
//!
//! While transmitting, the sender samples the medium during the gaps it is
//! itself silent: one guard tick before and after the sync burst, one after
//! the last slot, and every tick of its own direction off-slot. Foreign
//! energy in any of those samples means another announcement overlaps this
//! one, and the exchange must be treated as suspect. A perfectly
//! synchronized opposite-direction announcement is caught by the direction
//! off-slot, which is the complementary direction's on-slot.

use serde::{Deserialize, Serialize};

use crate::medium::{
    carrier_sense_wait, EnergyTimeline, Medium, NodeId, SimConfig, Tick, TxKind, Visibility,
};
use crate::tea_frame::{Direction, TeaFrame};

/// Per-sender knobs. Backoff is drawn by the caller so that all randomness
/// flows from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenderConfig {
    pub power: f64,
    /// Carrier-sense override deadline in ticks, measured from the first
    /// transmit attempt (1 s at the default 5 us tick).
    pub override_deadline_ticks: u64,
    pub backoff_slots: u64,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig { power: 1.0, override_deadline_ticks: 200_000, backoff_slots: 0 }
    }
}

/// Where each part of one transmitted announcement landed on the timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxSchedule {
    pub source: NodeId,
    pub direction: Direction,
    pub sync_start: Tick,
    pub sync_end: Tick,
    pub payload_start: Tick,
    pub payload_end: Tick,
    pub cts_start: Tick,
    pub cts_end: Tick,
    pub slot_phase_start: Tick,
    pub slot_phase_end: Tick,
    pub slot_ticks: u64,
    /// True when the sender gave up on carrier sense at the deadline.
    pub overridden: bool,
    /// Indices into the medium's transmission log, in emission order.
    pub record_indices: Vec<usize>,
}

/// Emit a fully built announcement starting exactly at `start` (no carrier
/// sense; used for replies inside a reserved window and as the tail of
/// [`send_tea`]).
pub fn emit_tea_at(
    medium: &mut Medium,
    source: NodeId,
    frame: &TeaFrame,
    start: Tick,
    power: f64,
    visibility: Visibility,
) -> TxSchedule {
    let mut records = Vec::new();
    let sync_start = start;
    let sync_end = sync_start + frame.sync_ticks;
    records.push(medium.transmit(
        source,
        sync_start,
        sync_end,
        power,
        TxKind::Sync,
        None,
        visibility.clone(),
    ));

    let payload_start = sync_end + frame.gap_sync_payload;
    let payload_end = payload_start + frame.payload_ticks;
    records.push(medium.transmit(
        source,
        payload_start,
        payload_end,
        power,
        TxKind::Payload,
        Some(frame.payload.clone()),
        visibility.clone(),
    ));

    let cts_start = payload_end + frame.gap_payload_cts;
    let cts_end = cts_start + frame.cts_ticks;
    records.push(medium.transmit(source, cts_start, cts_end, power, TxKind::Cts, None, visibility.clone()));

    let slot_phase_start = cts_end;
    for (i, bit) in frame.slots.iter().enumerate() {
        if bit {
            let s = slot_phase_start + i as u64 * frame.slot_ticks;
            records.push(medium.transmit(
                source,
                s,
                s + frame.slot_ticks,
                power,
                TxKind::Slot,
                None,
                visibility.clone(),
            ));
        }
    }

    TxSchedule {
        source,
        direction: frame.direction,
        sync_start,
        sync_end,
        payload_start,
        payload_end,
        cts_start,
        cts_end,
        slot_phase_start,
        slot_phase_end: slot_phase_start + frame.slot_phase_ticks(),
        slot_ticks: frame.slot_ticks,
        overridden: false,
        record_indices: records,
    }
}

/// Contend for the medium from `from_tick` and transmit the announcement.
/// If the medium never clears within the override deadline, transmit anyway
/// at the deadline: announcements must not be silently suppressible by a
/// channel hog.
pub fn send_tea(
    medium: &mut Medium,
    source: NodeId,
    frame: &TeaFrame,
    sender_cfg: &SenderConfig,
    sim: &SimConfig,
    from_tick: Tick,
    visibility: Visibility,
) -> TxSchedule {
    let horizon = from_tick + sender_cfg.override_deadline_ticks;
    let sensed = carrier_sense_wait(
        medium.timeline(source),
        from_tick,
        sim.difs_ticks,
        sender_cfg.backoff_slots,
        sim.slot_ticks,
        horizon,
    );
    let (start, overridden) = match sensed {
        Ok(t) => (t, false),
        Err(_) => (horizon, true),
    };
    let mut schedule = emit_tea_at(medium, source, frame, start, sender_cfg.power, visibility);
    schedule.overridden = overridden;
    schedule
}

/// Guard-sample verdict for one transmitted announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    None,
    Suspected(OverlapReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapReason {
    BeforeSync,
    AfterSync,
    AfterLastSlot,
    DirectionOffSlot,
}

/// Check the sender's guard samples for foreign energy. The timeline must be
/// the sender's own view of the medium.
pub fn self_monitor(schedule: &TxSchedule, timeline: &EnergyTimeline) -> Overlap {
    let own = schedule.source;
    if schedule.sync_start > 0 && timeline.foreign_energy_at(schedule.sync_start - 1, own) {
        return Overlap::Suspected(OverlapReason::BeforeSync);
    }
    if timeline.foreign_energy_at(schedule.sync_end, own) {
        return Overlap::Suspected(OverlapReason::AfterSync);
    }
    if timeline.foreign_energy_at(schedule.slot_phase_end, own) {
        return Overlap::Suspected(OverlapReason::AfterLastSlot);
    }
    let off_index = schedule.direction.off_slot_index() as u64;
    let off_start = schedule.slot_phase_start + off_index * schedule.slot_ticks;
    for t in off_start..off_start + schedule.slot_ticks {
        if timeline.foreign_energy_at(t, own) {
            return Overlap::Suspected(OverlapReason::DirectionOffSlot);
        }
    }
    Overlap::None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitString;
    use crate::tea_frame::{build_tea, FrameConfig};

    fn bs(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    fn test_setup() -> (SimConfig, FrameConfig, TeaFrame) {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Request, &cfg, &sim).unwrap();
        (sim, cfg, frame)
    }

    #[test]
    fn test_send_layout_on_idle_medium() {
        let (sim, _, frame) = test_setup();
        let mut medium = Medium::new([0, 1]);
        let sched = send_tea(
            &mut medium,
            0,
            &frame,
            &SenderConfig::default(),
            &sim,
            0,
            Visibility::All,
        );
        assert!(!sched.overridden);
        assert_eq!(sched.sync_start, 6, "DIFS wait on an idle medium");
        assert_eq!(sched.sync_end, 6 + 3840);
        assert_eq!(sched.payload_start, sched.sync_end + 2);
        assert_eq!(sched.cts_start, sched.payload_end + 2);
        assert_eq!(sched.slot_phase_start, sched.cts_end);
        assert_eq!(
            sched.slot_phase_end - sched.slot_phase_start,
            frame.slot_phase_ticks()
        );
        // One record per part plus one per on-slot.
        let on_slots = frame.slots.ones();
        assert_eq!(sched.record_indices.len(), 3 + on_slots);
        // The payload record carries the payload bits.
        let payload_rec = &medium.records[sched.record_indices[1]];
        assert_eq!(payload_rec.kind, TxKind::Payload);
        assert_eq!(payload_rec.content.as_ref().unwrap(), &frame.payload);
    }

    #[test]
    fn test_send_waits_for_busy_medium() {
        let (sim, _, frame) = test_setup();
        let mut medium = Medium::new([0, 1]);
        medium.transmit(1, 0, 100, 1.0, TxKind::Data, None, Visibility::All);
        let sched = send_tea(
            &mut medium,
            0,
            &frame,
            &SenderConfig::default(),
            &sim,
            0,
            Visibility::All,
        );
        assert!(!sched.overridden);
        assert_eq!(sched.sync_start, 106);
    }

    #[test]
    fn test_send_overrides_a_channel_hog() {
        let (sim, _, frame) = test_setup();
        let mut medium = Medium::new([0, 1]);
        medium.transmit(1, 0, 50_000, 1.0, TxKind::Data, None, Visibility::All);
        let cfg = SenderConfig { override_deadline_ticks: 10_000, ..SenderConfig::default() };
        let sched = send_tea(&mut medium, 0, &frame, &cfg, &sim, 0, Visibility::All);
        assert!(sched.overridden);
        assert_eq!(sched.sync_start, 10_000, "transmit at the deadline regardless");
        assert!(medium.timeline(1).contributions_at(10_000).len() >= 2);
    }

    #[test]
    fn test_self_monitor_clean_when_alone() {
        let (sim, _, frame) = test_setup();
        let mut medium = Medium::new([0, 1]);
        let sched = send_tea(
            &mut medium,
            0,
            &frame,
            &SenderConfig::default(),
            &sim,
            0,
            Visibility::All,
        );
        assert_eq!(self_monitor(&sched, medium.timeline(0)), Overlap::None);
    }

    /// A perfectly synchronized opposite-direction announcement lights up the
    /// sender's direction off-slot (the two patterns are complementary).
    #[test]
    fn test_self_monitor_catches_synchronized_opposite_direction() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let request = build_tea(&bs("1000"), Direction::Request, &cfg, &sim).unwrap();
        let reply = build_tea(&bs("1000"), Direction::Reply, &cfg, &sim).unwrap();
        let mut medium = Medium::new([0, 1]);
        let a = emit_tea_at(&mut medium, 0, &request, 10, 1.0, Visibility::All);
        let b = emit_tea_at(&mut medium, 1, &reply, 10, 1.0, Visibility::All);
        assert_eq!(
            self_monitor(&a, medium.timeline(0)),
            Overlap::Suspected(OverlapReason::DirectionOffSlot)
        );
        assert_eq!(
            self_monitor(&b, medium.timeline(1)),
            Overlap::Suspected(OverlapReason::DirectionOffSlot)
        );
    }

    /// A shifted overlapping announcement is caught by the sync guard
    /// samples even when directions match.
    #[test]
    fn test_self_monitor_catches_partial_overlap() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Request, &cfg, &sim).unwrap();
        let mut medium = Medium::new([0, 1]);
        let a = emit_tea_at(&mut medium, 0, &frame, 1000, 1.0, Visibility::All);
        // Second sync still running one tick after the first sync ends.
        emit_tea_at(&mut medium, 1, &frame, 1500, 1.0, Visibility::All);
        assert_eq!(
            self_monitor(&a, medium.timeline(0)),
            Overlap::Suspected(OverlapReason::AfterSync)
        );
    }

    #[test]
    fn test_self_monitor_ignores_own_energy() {
        let (sim, _, frame) = test_setup();
        let mut medium = Medium::new([0]);
        let sched = send_tea(
            &mut medium,
            0,
            &frame,
            &SenderConfig::default(),
            &sim,
            0,
            Visibility::All,
        );
        // The sender's own on-slots surround the off-slot; they must not
        // trigger suspicion.
        assert_eq!(self_monitor(&sched, medium.timeline(0)), Overlap::None);
    }
}
