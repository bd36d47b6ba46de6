//! Attacker models: in-flight payload edits, energy injection, channel
//! hogging, and the window-grid schedule attack against slot decoding.
//!
//! The medium is strictly additive — an attacker can raise channel occupancy
//! but never lower it — so every physical attack on the slot phase reduces
//! to one canonical form: a per-window count of added busy ticks, bounded by
//! each window's remaining idle ticks. [`skew_shift_schedule`] constructs
//! such a schedule that makes a lagging receiver decode a chosen slot string
//! different from the transmitted one. It exists exactly when the receiver's
//! grid lag is at least the window length minus the occupancy threshold:
//! only then can a transmitted 1 be read as 0 (the misaligned window sees
//! too few of its ticks), while 0s can always be raised to 1s by filling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::medium::{Medium, NodeId, SimConfig, Tick, TxKind, Visibility};
use crate::sender::TxSchedule;

/// Canonical slot-phase attack: added busy ticks per sensing window, two
/// windows per slot. The receiver's decode depends only on per-window
/// occupancy counts, so this collapses the attacker's tick-level choices
/// losslessly.
pub type AdversarySchedule = Vec<u64>;

/// Menu of attacker behaviors used by scenario runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Listen only.
    Passive,
    /// Rewrite a payload while it is in flight.
    PayloadEdit { payload: BitString },
    /// Energize one off slot of an announcement.
    OffSlotEnergy,
    /// Transmit a colliding frame perfectly synchronized with the victim's.
    Collide,
    /// Overpower the victim's frame with a stronger one.
    Capture { power: f64 },
    /// Occupy the channel continuously.
    Hog { duration_ticks: u64 },
    /// Send a well-formed frame of the attacker's own.
    Impersonate { payload: BitString },
    /// Edit the payload and rewrite the slot phase via a window schedule.
    SkewShift,
}

/// Busy ticks the sender's transmission places into every window of a
/// receiver measurement grid that starts `skew` ticks after the slot phase.
/// Windows are `m` ticks, slots `2m`; ticks beyond the last slot are silent.
/// This is deliberately a brute-force tick loop so that schedule
/// construction and the exhaustive search rest on an independently checkable
/// primitive rather than on closed-form index algebra.
pub fn sender_window_counts(sent: &BitString, m: u64, skew: u64) -> Vec<u64> {
    let n = sent.len();
    (0..2 * n as u64)
        .map(|w| {
            let ws = skew + w * m;
            (ws..ws + m)
                .filter(|&t| {
                    let slot = (t / (2 * m)) as usize;
                    slot < n && sent.bit(slot)
                })
                .count() as u64
        })
        .collect()
}

/// Why no window schedule can exist for a requested forgery.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoScheduleExists {
    /// The receiver grid lags by less than window length minus threshold, so
    /// a transmitted 1 always leaves more than `threshold` busy ticks in its
    /// misaligned window and can never be read as 0.
    #[error("grid lag too small: a transmitted 1 cannot be read as 0")]
    PredicateUnsatisfied,
    /// Every candidate target either equals the sent string or lacks a 1 in
    /// some window the sender's own energy forces past the threshold.
    #[error("no candidate target covers all forced-one windows")]
    NoUsablePosition,
}

/// A constructed window-schedule attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewShiftPlan {
    /// Slot string the receiver will decode.
    pub target: BitString,
    /// Added busy ticks per receiver-grid window, two windows per slot.
    pub added: Vec<u64>,
    /// Slot positions whose misaligned window already exceeds the threshold
    /// from sender energy alone; the target must keep a 1 there.
    pub forced_ones: Vec<usize>,
    /// Misaligned-window counts from sender energy alone.
    pub baseline_odd_counts: Vec<u64>,
}

/// Construct a window schedule that makes a receiver lagging by `skew` ticks
/// decode some entry of `targets` instead of `sent`. Candidates are tried in
/// order and the first feasible one wins, so callers control tie-breaking by
/// ordering `targets`. Requires `threshold < m`.
///
/// The construction fills every slot-aligned window to exactly `m` busy
/// ticks (zero variance) and fills the misaligned window of every target-1
/// slot to `m`, leaving target-0 windows untouched. The misaligned parity
/// then wins the variance comparison outright and thresholds to the target.
/// A candidate whose rewritten misaligned counts would come out flat is
/// skipped: flat counts only tie the variance comparison, and a tie decodes
/// both parities and demands agreement, which a forgery cannot survive.
pub fn skew_shift_schedule(
    sent: &BitString,
    targets: &[BitString],
    m: u64,
    threshold: u64,
    skew: u64,
) -> Result<SkewShiftPlan, NoScheduleExists> {
    assert!(threshold < m, "threshold must leave at least one readable count");
    assert!(!sent.is_empty());
    if skew + threshold < m {
        return Err(NoScheduleExists::PredicateUnsatisfied);
    }
    let counts = sender_window_counts(sent, m, skew);
    let n = sent.len();
    let baseline_odd_counts: Vec<u64> = (0..n).map(|b| counts[2 * b + 1]).collect();
    let forced_ones: Vec<usize> = (0..n)
        .filter(|&b| baseline_odd_counts[b] > threshold)
        .collect();
    for target in targets {
        if target == sent || target.len() != n {
            continue;
        }
        if !forced_ones.iter().all(|&b| target.bit(b)) {
            continue;
        }
        let mut added = vec![0u64; 2 * n];
        for b in 0..n {
            added[2 * b] = m - counts[2 * b];
            if target.bit(b) {
                added[2 * b + 1] = m - counts[2 * b + 1];
            } else {
                debug_assert!(baseline_odd_counts[b] <= threshold);
            }
        }
        let final_odds: Vec<u64> =
            (0..n).map(|b| counts[2 * b + 1] + added[2 * b + 1]).collect();
        if final_odds.windows(2).all(|w| w[0] == w[1]) {
            continue;
        }
        return Ok(SkewShiftPlan {
            target: target.clone(),
            added,
            forced_ones,
            baseline_odd_counts,
        });
    }
    Err(NoScheduleExists::NoUsablePosition)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleApplyError {
    #[error("window {window} has only {idle} idle ticks, schedule needs {needed}")]
    WindowFull { window: usize, idle: u64, needed: u64 },
}

/// Inject a window schedule into the live medium: for each window of the
/// receiver grid anchored at `anchor + skew`, energize the first `added[w]`
/// idle ticks. Consecutive ticks coalesce into single transmissions. Returns
/// the indices of the created records.
pub fn apply_window_schedule(
    medium: &mut Medium,
    node: NodeId,
    anchor: Tick,
    skew: u64,
    added: &[u64],
    sim: &SimConfig,
) -> Result<Vec<usize>, ScheduleApplyError> {
    let base = anchor + skew;
    let mut records = Vec::new();
    for (w, &a) in added.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let ws = base + w as u64 * sim.window_ticks;
        let idle: Vec<Tick> = (ws..ws + sim.window_ticks)
            .filter(|&t| !medium.timeline(node).is_busy(t))
            .collect();
        if (idle.len() as u64) < a {
            return Err(ScheduleApplyError::WindowFull {
                window: w,
                idle: idle.len() as u64,
                needed: a,
            });
        }
        let mut run_start = idle[0];
        let mut run_end = idle[0] + 1;
        let flush = |s: Tick, e: Tick, medium: &mut Medium, records: &mut Vec<usize>| {
            records.push(medium.transmit(node, s, e, 1.0, TxKind::Slot, None, Visibility::All));
        };
        for &t in idle.iter().take(a as usize).skip(1) {
            if t == run_end {
                run_end = t + 1;
            } else {
                flush(run_start, run_end, medium, &mut records);
                run_start = t;
                run_end = t + 1;
            }
        }
        flush(run_start, run_end, medium, &mut records);
    }
    Ok(records)
}

/// Rewrite the payload of an already transmitted announcement in flight.
/// The payload record is the second one an announcement emits.
pub fn edit_payload(medium: &mut Medium, schedule: &TxSchedule, new_payload: BitString) {
    medium.edit_record_content(schedule.record_indices[1], new_payload);
}

/// Energize the first off slot of a transmitted announcement for its full
/// length, a minimal integrity violation every receiver parity can see.
pub fn energize_off_slot(
    medium: &mut Medium,
    node: NodeId,
    schedule: &TxSchedule,
    slots: &BitString,
) -> usize {
    let off = slots
        .iter()
        .position(|b| !b)
        .expect("a valid slot string always contains an off slot");
    let start = schedule.slot_phase_start + off as u64 * schedule.slot_ticks;
    medium.transmit(
        node,
        start,
        start + schedule.slot_ticks,
        1.0,
        TxKind::Slot,
        None,
        Visibility::All,
    )
}

/// Occupy the channel continuously from `from` for `duration` ticks.
pub fn hog_channel(medium: &mut Medium, node: NodeId, from: Tick, duration: u64) -> usize {
    medium.transmit(node, from, from + duration, 1.0, TxKind::Data, None, Visibility::All)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::receiver::{
        receive_tea, select_parity_and_decode, ParityChoice, ReceiveVerdict, ReceiverConfig,
    };
    use crate::sender::{send_tea, SenderConfig};
    use crate::tea_frame::{build_tea, Direction, FrameConfig};

    fn bs(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn test_window_counts_receiver_late_by_one_tick() {
        // Lone leading on slot, window 4: the misaligned window catches only
        // 3 of its 4 ticks.
        assert_eq!(sender_window_counts(&bs("10"), 4, 1), vec![4, 3, 0, 0]);
        assert_eq!(sender_window_counts(&bs("10"), 4, 0), vec![4, 4, 0, 0]);
        // Adjacent on slots bridge the misaligned window back to full.
        assert_eq!(sender_window_counts(&bs("110"), 4, 1), vec![4, 4, 4, 3, 0, 0]);
    }

    #[test]
    fn test_window_counts_alias_past_a_full_slot() {
        // A lag of a whole slot makes every window read the next slot.
        assert_eq!(sender_window_counts(&bs("10"), 4, 8), vec![0, 0, 0, 0]);
        assert_eq!(sender_window_counts(&bs("01"), 4, 8), vec![4, 4, 0, 0]);
    }

    /// Window 3, threshold 2, lag 1: the transmitted 1100 is turned into an
    /// accepted 1010 by filling aligned windows flat and raising one 0.
    #[test]
    fn test_schedule_construction_golden_cell() {
        let plan = skew_shift_schedule(&bs("1100"), &[bs("1010")], 3, 2, 1).unwrap();
        assert_eq!(plan.target, bs("1010"));
        assert_eq!(plan.baseline_odd_counts, vec![3, 2, 0, 0]);
        assert_eq!(plan.forced_ones, vec![0]);
        assert_eq!(plan.added, vec![0, 0, 0, 0, 3, 3, 3, 0]);
        // Final counts decode to the target on the misaligned parity.
        let final_counts: Vec<u64> = sender_window_counts(&bs("1100"), 3, 1)
            .iter()
            .zip(&plan.added)
            .map(|(c, a)| c + a)
            .collect();
        let rx = ReceiverConfig { threshold: 2, ..ReceiverConfig::default() };
        let d = select_parity_and_decode(&final_counts, &rx);
        assert_eq!(d.choice, ParityChoice::Odd);
        assert_eq!(d.bits().unwrap(), &bs("1010"));
    }

    #[test]
    fn test_schedule_requires_enough_lag() {
        // m - threshold = 3 > skew 2: every transmitted 1 still reads 1.
        assert_eq!(
            skew_shift_schedule(&bs("1100"), &[bs("1010")], 4, 1, 2),
            Err(NoScheduleExists::PredicateUnsatisfied)
        );
    }

    #[test]
    fn test_schedule_requires_a_coverable_target() {
        // Forced window 2 (two adjacent 1s) but the only candidate has a 0
        // there.
        assert_eq!(
            skew_shift_schedule(&bs("0011"), &[bs("0101")], 3, 2, 1),
            Err(NoScheduleExists::NoUsablePosition)
        );
        // A target equal to the sent string is not a forgery.
        assert_eq!(
            skew_shift_schedule(&bs("1100"), &[bs("1100")], 3, 2, 1),
            Err(NoScheduleExists::NoUsablePosition)
        );
    }

    /// Full pipeline: edit the payload in flight and rewrite the slot phase
    /// so a lagging receiver cleanly accepts the edited payload.
    #[test]
    fn test_end_to_end_forgery_against_lagging_receiver() {
        let sim = SimConfig::default();
        let m = sim.window_ticks;
        let threshold = 3;
        let skew = 1; // predicate: skew >= m - threshold = 1
        let frame_cfg = FrameConfig::test_scale(&sim, 4);
        let payload = bs("1000");
        let frame = build_tea(&payload, Direction::Request, &frame_cfg, &sim).unwrap();

        // Find an alternative payload whose slot string the schedule can
        // reach from the transmitted one.
        let mut hit = None;
        for v in 0..16u64 {
            let p2 = BitString::from_value(v, 4);
            if p2 == payload {
                continue;
            }
            let f2 = build_tea(&p2, Direction::Request, &frame_cfg, &sim).unwrap();
            if let Ok(plan) =
                skew_shift_schedule(&frame.slots, &[f2.slots.clone()], m, threshold, skew)
            {
                hit = Some((p2, plan));
                break;
            }
        }
        let (forged_payload, plan) = hit.expect("some forgeable payload exists");

        let mut medium = Medium::new([0, 1, 9]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        edit_payload(&mut medium, &sched, forged_payload.clone());
        apply_window_schedule(&mut medium, 9, sched.slot_phase_start, skew, &plan.added, &sim)
            .unwrap();

        let rx = ReceiverConfig { threshold, skew_ticks: skew, ..ReceiverConfig::default() };
        let rec = receive_tea(&medium, 1, 0, &frame_cfg, &rx, &sim).unwrap();
        assert_eq!(rec.verdict, ReceiveVerdict::Clean, "forgery accepted as clean");
        assert_eq!(rec.payload.unwrap(), forged_payload);
        assert_eq!(rec.decode.unwrap().choice, ParityChoice::Odd);
    }

    /// The same machinery without the slot-phase rewrite is caught.
    #[test]
    fn test_payload_edit_alone_is_caught() {
        let sim = SimConfig::default();
        let frame_cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Request, &frame_cfg, &sim).unwrap();
        let mut medium = Medium::new([0, 1]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        edit_payload(&mut medium, &sched, bs("1110"));
        let rx = ReceiverConfig { threshold: 3, skew_ticks: 1, ..ReceiverConfig::default() };
        let rec = receive_tea(&medium, 1, 0, &frame_cfg, &rx, &sim).unwrap();
        assert!(matches!(rec.verdict, ReceiveVerdict::Tampered(_)));
    }

    #[test]
    fn test_off_slot_energy_is_caught_at_zero_skew() {
        let sim = SimConfig::default();
        let frame_cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Request, &frame_cfg, &sim).unwrap();
        let mut medium = Medium::new([0, 1, 9]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        energize_off_slot(&mut medium, 9, &sched, &frame.slots);
        let rec = receive_tea(&medium, 1, 0, &frame_cfg, &ReceiverConfig::default(), &sim).unwrap();
        assert!(matches!(rec.verdict, ReceiveVerdict::Tampered(_)));
    }

    #[test]
    fn test_apply_rejects_overfull_window() {
        let sim = SimConfig::default();
        let mut medium = Medium::new([0, 9]);
        // Occupy 3 of the 4 ticks of window 0.
        medium.transmit(0, 100, 103, 1.0, TxKind::Slot, None, Visibility::All);
        let err = apply_window_schedule(&mut medium, 9, 100, 0, &[2], &sim).unwrap_err();
        assert_eq!(err, ScheduleApplyError::WindowFull { window: 0, idle: 1, needed: 2 });
    }

    #[test]
    fn test_apply_coalesces_adjacent_ticks() {
        let sim = SimConfig::default();
        let mut medium = Medium::new([9]);
        let recs = apply_window_schedule(&mut medium, 9, 0, 0, &[4, 0, 2], &sim).unwrap();
        // Window 0 fills as one 4-tick record; window 2 as one 2-tick record.
        assert_eq!(recs.len(), 2);
        assert_eq!(medium.timeline(9).busy_ticks_in(0, 4), 4);
        assert_eq!(medium.timeline(9).busy_ticks_in(8, 12), 2);
        assert_eq!(medium.timeline(9).busy_ticks_in(4, 8), 0);
    }

    proptest! {
        /// Whenever construction succeeds, an independent replay of the
        /// final counts decodes the target on a strictly winning misaligned
        /// parity; whenever the lag predicate holds and the sent string has
        /// any 1, a schedule exists against the full balanced target set.
        #[test]
        fn prop_schedule_replay_is_sound(
            bits in proptest::collection::vec(any::<bool>(), 2..7),
            m in 2u64..5,
            t_off in 0u64..4,
            skew in 0u64..10,
        ) {
            let threshold = t_off.min(m - 1);
            let sent = BitString::from_iter(bits);
            let n = sent.len();
            // Candidate targets: every string of length n except the sent one.
            let targets: Vec<BitString> =
                (0..(1u64 << n)).map(|v| BitString::from_value(v, n as u32)).collect();
            match skew_shift_schedule(&sent, &targets, m, threshold, skew) {
                Ok(plan) => {
                    prop_assert!(skew + threshold >= m);
                    let base = sender_window_counts(&sent, m, skew);
                    let final_counts: Vec<u64> = base
                        .iter()
                        .zip(&plan.added)
                        .map(|(c, a)| c + a)
                        .collect();
                    for (w, &c) in final_counts.iter().enumerate() {
                        prop_assert!(c <= m, "window {} overfilled", w);
                        if w % 2 == 0 {
                            prop_assert_eq!(c, m, "aligned windows must be flat");
                        }
                    }
                    let rx = ReceiverConfig { threshold, ..ReceiverConfig::default() };
                    let d = select_parity_and_decode(&final_counts, &rx);
                    prop_assert_eq!(d.choice, ParityChoice::Odd);
                    prop_assert_eq!(d.bits().unwrap(), &plan.target);
                    prop_assert_ne!(&plan.target, &sent);
                }
                Err(NoScheduleExists::PredicateUnsatisfied) => {
                    prop_assert!(skew + threshold < m);
                }
                Err(NoScheduleExists::NoUsablePosition) => {
                    // With every other string offered as a candidate, a grid
                    // lagging less than a full window always leaves the last
                    // slot's misaligned window at or below the threshold, so
                    // some mixed target is reachable. Exhaustion therefore
                    // only happens for lags of a window or more.
                    prop_assert!(skew + threshold >= m);
                    prop_assert!(skew >= m);
                }
            }
        }
    }
}
