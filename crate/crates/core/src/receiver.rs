//! Announcement reception: sync detection, slot-phase energy measurement,
//! parity selection, and tamper verdicts.
//!
//! The receiver never trusts bit boundaries. It finds the sync burst as a
//! long continuous busy period, anchors the slot phase at the end of the
//! reservation frame, and then measures raw channel occupancy in half-slot
//! windows. Because its clock may be offset from the sender's by up to one
//! window, it decodes both window parities and keeps the one whose occupancy
//! counts have the higher variance: slot-aligned windows see all-or-nothing
//! energy while misaligned windows see mixtures. Ties are resolved by
//! decoding both parities and accepting only if they agree.
//!
//! All occupancy arithmetic is integer ticks, so every decision here is
//! exactly reproducible.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::medium::{decode_frame, EnergyTimeline, Medium, NodeId, SimConfig, Tick, TxKind, TxRecord};
use crate::tea_frame::{verify_slots, FrameConfig, TamperReason, Verdict};

/// How a window occupancy count is turned into a bit. `Greater` is the real
/// rule (strictly more busy ticks than the threshold). `GreaterOrEqual` is a
/// deliberately mis-pinned variant kept solely so validation runs can prove
/// the exhaustive search feels single-comparison faults; it must never be
/// used in production paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyComparison {
    Greater,
    GreaterOrEqual,
}

impl OccupancyComparison {
    pub fn bit(self, count: u64, threshold: u64) -> bool {
        match self {
            OccupancyComparison::Greater => count > threshold,
            OccupancyComparison::GreaterOrEqual => count >= threshold,
        }
    }
}

/// Policy when both window parities show the same occupancy variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Decode both parities; accept only when they agree, else flag the
    /// exchange as ambiguous.
    RequireAgreement,
    PreferEven,
    PreferOdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    /// A window reads 1 when its busy-tick count exceeds this.
    pub threshold: u64,
    /// Offset of the receiver's measurement grid behind the transmitted slot
    /// grid, in ticks.
    pub skew_ticks: u64,
    pub tie_break: TieBreak,
    pub occupancy: OccupancyComparison,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            threshold: 2,
            skew_ticks: 0,
            tie_break: TieBreak::RequireAgreement,
            occupancy: OccupancyComparison::Greater,
        }
    }
}

/// Find the first continuous busy period of at least the detection length
/// that the receiver can observe when it starts listening at `from`. A burst
/// already in progress is clipped to what the receiver actually hears.
/// Returns the tick just past the burst.
pub fn detect_sync(timeline: &EnergyTimeline, from: Tick, sim: &SimConfig) -> Option<Tick> {
    for (start, end) in timeline.busy_runs() {
        if end <= from {
            continue;
        }
        let heard_from = start.max(from);
        if end - heard_from >= sim.sync_detect_ticks {
            return Some(end);
        }
    }
    None
}

/// Measure occupancy counts for every half-slot window of a slot phase. The
/// receiver's measurement grid starts `skew_ticks` after the transmitted
/// slot phase start, so window `2b+1` straddles the boundary between slots
/// `b` and `b+1`.
pub fn measure_slots(
    timeline: &EnergyTimeline,
    slot_phase_start: Tick,
    num_slots: usize,
    rx: &ReceiverConfig,
    sim: &SimConfig,
) -> Vec<u64> {
    let base = slot_phase_start + rx.skew_ticks;
    (0..2 * num_slots as u64)
        .map(|w| {
            let ws = base + w * sim.window_ticks;
            timeline.busy_ticks_in(ws, ws + sim.window_ticks)
        })
        .collect()
}

/// Population variance score of a sample list, scaled by `n^2` to stay in
/// integers: `n * sum(e^2) - (sum(e))^2`.
pub fn variance_score(samples: &[u64]) -> u128 {
    let n = samples.len() as u128;
    let sum: u128 = samples.iter().map(|&e| e as u128).sum();
    let sum_sq: u128 = samples.iter().map(|&e| (e as u128) * (e as u128)).sum();
    n * sum_sq - sum * sum
}

/// Which parity the decoder settled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityChoice {
    Even,
    Odd,
    /// Variances tied and both parities decoded identically.
    TieAgreed,
    /// Variances tied and the parities disagreed; no decode is trusted.
    TieAmbiguous,
}

/// Full record of one slot-phase decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecode {
    pub counts: Vec<u64>,
    /// Thresholded bit for every window, both parities interleaved.
    pub window_bits: BitString,
    pub even_bits: BitString,
    pub odd_bits: BitString,
    pub even_variance: u128,
    pub odd_variance: u128,
    pub choice: ParityChoice,
}

impl SlotDecode {
    /// The slot bits the receiver trusts, if any.
    pub fn bits(&self) -> Option<&BitString> {
        match self.choice {
            ParityChoice::Even | ParityChoice::TieAgreed => Some(&self.even_bits),
            ParityChoice::Odd => Some(&self.odd_bits),
            ParityChoice::TieAmbiguous => None,
        }
    }
}

/// Threshold both window parities, score them by occupancy variance, and
/// pick one. `counts` must hold two windows per slot.
pub fn select_parity_and_decode(counts: &[u64], rx: &ReceiverConfig) -> SlotDecode {
    assert!(counts.len() % 2 == 0, "two windows per slot");
    let mut window_bits = BitString::new();
    for &c in counts {
        window_bits.push(rx.occupancy.bit(c, rx.threshold));
    }
    let even_counts: Vec<u64> = counts.iter().copied().step_by(2).collect();
    let odd_counts: Vec<u64> = counts.iter().copied().skip(1).step_by(2).collect();
    let mut even_bits = BitString::new();
    let mut odd_bits = BitString::new();
    for slot in 0..counts.len() / 2 {
        even_bits.push(window_bits.bit(2 * slot));
        odd_bits.push(window_bits.bit(2 * slot + 1));
    }
    let even_variance = variance_score(&even_counts);
    let odd_variance = variance_score(&odd_counts);
    let choice = if even_variance > odd_variance {
        ParityChoice::Even
    } else if odd_variance > even_variance {
        ParityChoice::Odd
    } else {
        match rx.tie_break {
            TieBreak::PreferEven => ParityChoice::Even,
            TieBreak::PreferOdd => ParityChoice::Odd,
            TieBreak::RequireAgreement => {
                if even_bits == odd_bits {
                    ParityChoice::TieAgreed
                } else {
                    ParityChoice::TieAmbiguous
                }
            }
        }
    };
    SlotDecode {
        counts: counts.to_vec(),
        window_bits,
        even_bits,
        odd_bits,
        even_variance,
        odd_variance,
        choice,
    }
}

/// Why a detected announcement could not be decoded at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissReason {
    PayloadUnreadable,
    ReservationUnreadable,
}

/// Receiver-side outcome for one announcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiveVerdict {
    Clean,
    Tampered(TamperReason),
    Missed(MissReason),
}

impl ReceiveVerdict {
    pub fn is_clean(&self) -> bool {
        matches!(self, ReceiveVerdict::Clean)
    }
}

/// Everything the receiver observed and concluded about one announcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reception {
    pub receiver: NodeId,
    pub sync_end: Tick,
    pub payload: Option<BitString>,
    /// Slot phase anchor: the end of the reservation frame.
    pub anchor: Option<Tick>,
    pub decode: Option<SlotDecode>,
    pub verdict: ReceiveVerdict,
}

/// Locate the frame of `kind` expected to start within `gap_cap` ticks after
/// `from` and run `body_ticks`. Several byte-identical copies superpose into
/// one decodable signal; otherwise the capture rule decides whether anything
/// is readable through the interference.
fn locate_part(
    visible: &[&TxRecord],
    from: Tick,
    gap_cap: u64,
    body_ticks: u64,
    kind: TxKind,
    capture_factor: f64,
) -> Option<TxRecord> {
    let window_end = from + gap_cap + body_ticks;
    let overlapping: Vec<&TxRecord> = visible
        .iter()
        .copied()
        .filter(|r| r.overlaps(from, window_end))
        .collect();
    let first = overlapping.first()?;
    let identical = overlapping
        .iter()
        .all(|r| {
            r.kind == first.kind
                && r.start == first.start
                && r.end == first.end
                && r.content == first.content
        });
    let decoded = if identical {
        Some((*first).clone())
    } else {
        decode_frame(overlapping, from, window_end, capture_factor)
    };
    decoded.filter(|r| r.kind == kind)
}

/// Run the full reception pipeline for one receiver listening from
/// `from_tick`. Returns `None` when no sync burst is ever heard.
pub fn receive_tea(
    medium: &Medium,
    receiver: NodeId,
    from_tick: Tick,
    frame_cfg: &FrameConfig,
    rx: &ReceiverConfig,
    sim: &SimConfig,
) -> Option<Reception> {
    let timeline = medium.timeline(receiver);
    let sync_end = detect_sync(timeline, from_tick, sim)?;
    let visible = medium.records_visible_to(receiver);

    let miss = |reason| {
        Some(Reception {
            receiver,
            sync_end,
            payload: None,
            anchor: None,
            decode: None,
            verdict: ReceiveVerdict::Missed(reason),
        })
    };

    let payload_rec = match locate_part(
        &visible,
        sync_end,
        sim.sifs_ticks,
        frame_cfg.payload_ticks,
        TxKind::Payload,
        sim.capture_factor,
    ) {
        Some(r) => r,
        None => return miss(MissReason::PayloadUnreadable),
    };
    let payload = match payload_rec.content {
        Some(ref p) if p.len() == frame_cfg.payload_len_bits => p.clone(),
        _ => return miss(MissReason::PayloadUnreadable),
    };

    let cts_rec = match locate_part(
        &visible,
        payload_rec.end,
        sim.sifs_ticks,
        frame_cfg.cts_ticks,
        TxKind::Cts,
        sim.capture_factor,
    ) {
        Some(r) => r,
        None => return miss(MissReason::ReservationUnreadable),
    };

    let anchor = cts_rec.end;
    let counts = measure_slots(timeline, anchor, frame_cfg.num_slots(), rx, sim);
    let decode = select_parity_and_decode(&counts, rx);
    let verdict = match decode.bits() {
        None => ReceiveVerdict::Tampered(TamperReason::Ambiguous),
        Some(bits) => match verify_slots(bits, &payload, frame_cfg) {
            Verdict::Clean => ReceiveVerdict::Clean,
            Verdict::Tampered(reason) => ReceiveVerdict::Tampered(reason),
        },
    };
    Some(Reception {
        receiver,
        sync_end,
        payload: Some(payload),
        anchor: Some(anchor),
        decode: Some(decode),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::medium::Visibility;
    use crate::sender::{emit_tea_at, send_tea, SenderConfig};
    use crate::tea_frame::{build_tea, Direction};

    fn bs(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    /// With the receiver's grid one tick behind the sender's, a lone leading
    /// on-slot bleeds into the second window: counts (4, 3, 0, 0).
    #[test]
    fn test_receiver_grid_lags_transmit_grid() {
        let sim = SimConfig::default();
        let mut tl = EnergyTimeline::new();
        tl.add(7, 1.0, 0, 8); // slot 0 on, slot 1 off
        let rx = ReceiverConfig { skew_ticks: 1, ..ReceiverConfig::default() };
        assert_eq!(measure_slots(&tl, 0, 2, &rx, &sim), vec![4, 3, 0, 0]);
        let rx0 = ReceiverConfig::default();
        assert_eq!(measure_slots(&tl, 0, 2, &rx0, &sim), vec![4, 4, 0, 0]);
    }

    #[test]
    fn test_variance_score_matches_definition() {
        assert_eq!(variance_score(&[4, 4, 4, 4]), 0);
        // n=4, sum=8, sumsq=32: 4*32 - 64 = 64.
        assert_eq!(variance_score(&[4, 0, 4, 0]), 64);
        assert_eq!(variance_score(&[]), 0);
    }

    #[test]
    fn test_uniform_even_windows_hand_decode_to_odd_parity() {
        // Even windows all full (variance 0), odd windows carry the signal.
        let counts = [4, 4, 4, 0, 4, 4, 4, 0];
        let d = select_parity_and_decode(&counts, &ReceiverConfig::default());
        assert_eq!(d.choice, ParityChoice::Odd);
        assert_eq!(d.bits().unwrap(), &bs("1010"));
        assert_eq!(d.even_variance, 0);
    }

    #[test]
    fn test_variance_tie_policies() {
        // Both parities have variance 16 but decode differently.
        let counts = [4, 0, 0, 4];
        let base = ReceiverConfig::default();
        let d = select_parity_and_decode(&counts, &base);
        assert_eq!(d.choice, ParityChoice::TieAmbiguous);
        assert_eq!(d.bits(), None);

        let even = ReceiverConfig { tie_break: TieBreak::PreferEven, ..base.clone() };
        assert_eq!(select_parity_and_decode(&counts, &even).bits().unwrap(), &bs("10"));
        let odd = ReceiverConfig { tie_break: TieBreak::PreferOdd, ..base.clone() };
        assert_eq!(select_parity_and_decode(&counts, &odd).bits().unwrap(), &bs("01"));

        // Agreeing tie: zero skew makes both parities read the slots.
        let agree = select_parity_and_decode(&[4, 4, 0, 0], &base);
        assert_eq!(agree.choice, ParityChoice::TieAgreed);
        assert_eq!(agree.bits().unwrap(), &bs("10"));
    }

    #[test]
    fn test_occupancy_comparison_mispin_flips_boundary_windows() {
        let rx = ReceiverConfig::default(); // threshold 2
        let d = select_parity_and_decode(&[2, 0], &rx);
        assert_eq!(d.window_bits, bs("00"));
        let mispinned = ReceiverConfig {
            occupancy: OccupancyComparison::GreaterOrEqual,
            ..ReceiverConfig::default()
        };
        let d2 = select_parity_and_decode(&[2, 0], &mispinned);
        assert_eq!(d2.window_bits, bs("10"));
    }

    fn roundtrip_setup() -> (SimConfig, FrameConfig, crate::tea_frame::TeaFrame) {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1001"), Direction::Request, &cfg, &sim).unwrap();
        (sim, cfg, frame)
    }

    #[test]
    fn test_honest_roundtrip_is_clean_for_every_skew_inside_a_window() {
        let (sim, cfg, frame) = roundtrip_setup();
        for skew in 0..sim.window_ticks {
            let mut medium = Medium::new([0, 1]);
            send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
            let rx = ReceiverConfig { skew_ticks: skew, ..ReceiverConfig::default() };
            let rec = receive_tea(&medium, 1, 0, &cfg, &rx, &sim).expect("sync heard");
            assert_eq!(rec.verdict, ReceiveVerdict::Clean, "skew {skew}");
            assert_eq!(rec.payload.unwrap(), bs("1001"));
        }
    }

    /// A threshold as large as the window makes every window read 0: the
    /// strict comparison can never be satisfied, so nothing ever verifies.
    #[test]
    fn test_threshold_equal_to_window_rejects_everything() {
        let (sim, cfg, frame) = roundtrip_setup();
        let mut medium = Medium::new([0, 1]);
        send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        let rx = ReceiverConfig { threshold: sim.window_ticks, ..ReceiverConfig::default() };
        let rec = receive_tea(&medium, 1, 0, &cfg, &rx, &sim).unwrap();
        assert_eq!(rec.verdict, ReceiveVerdict::Tampered(TamperReason::Direction));
    }

    #[test]
    fn test_no_sync_means_no_reception() {
        let (sim, cfg, _) = roundtrip_setup();
        let mut medium = Medium::new([0, 1]);
        medium.transmit(0, 0, 100, 1.0, TxKind::Data, None, Visibility::All);
        assert!(receive_tea(&medium, 1, 0, &cfg, &ReceiverConfig::default(), &sim).is_none());
    }

    /// Tuning in mid-burst: enough remaining burst still detects (and the
    /// anchor is unaffected); too little and the announcement is missed.
    #[test]
    fn test_sync_detection_clips_to_listening_start() {
        let (sim, cfg, frame) = roundtrip_setup();
        let mut medium = Medium::new([0, 1]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        let rx = ReceiverConfig::default();

        let early = receive_tea(&medium, 1, sched.sync_start + 400, &cfg, &rx, &sim).unwrap();
        assert_eq!(early.verdict, ReceiveVerdict::Clean);
        assert_eq!(early.sync_end, sched.sync_end);

        let late = receive_tea(&medium, 1, sched.sync_start + 1000, &cfg, &rx, &sim);
        assert!(late.is_none(), "only 2840 of 3400 required ticks heard");
    }

    #[test]
    fn test_edited_payload_is_flagged_by_slot_digest() {
        let (sim, cfg, frame) = roundtrip_setup();
        let mut medium = Medium::new([0, 1]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        medium.edit_record_content(sched.record_indices[1], bs("0110"));
        let rec = receive_tea(&medium, 1, 0, &cfg, &ReceiverConfig::default(), &sim).unwrap();
        assert_eq!(rec.verdict, ReceiveVerdict::Tampered(TamperReason::HashMismatch));
        assert_eq!(rec.payload.unwrap(), bs("0110"), "receiver believes the edited payload");
    }

    /// Two perfectly synchronized opposite-direction announcements superpose:
    /// both direction slots read on, which no honest frame produces.
    #[test]
    fn test_synchronized_collision_is_tampered() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let req = build_tea(&bs("1001"), Direction::Request, &cfg, &sim).unwrap();
        let rep = build_tea(&bs("1001"), Direction::Reply, &cfg, &sim).unwrap();
        let mut medium = Medium::new([0, 1, 2]);
        emit_tea_at(&mut medium, 0, &req, 50, 1.0, Visibility::All);
        emit_tea_at(&mut medium, 1, &rep, 50, 1.0, Visibility::All);
        let rec = receive_tea(&medium, 2, 0, &cfg, &ReceiverConfig::default(), &sim).unwrap();
        assert_eq!(rec.verdict, ReceiveVerdict::Tampered(TamperReason::Direction));
    }

    /// An interfering burst over the payload leaves it unreadable rather
    /// than silently accepted.
    #[test]
    fn test_jammed_payload_is_missed_not_accepted() {
        let (sim, cfg, frame) = roundtrip_setup();
        let mut medium = Medium::new([0, 1, 2]);
        let sched = send_tea(&mut medium, 0, &frame, &SenderConfig::default(), &sim, 0, Visibility::All);
        medium.transmit(
            2,
            sched.payload_start,
            sched.payload_end,
            1.0,
            TxKind::Data,
            None,
            Visibility::All,
        );
        let rec = receive_tea(&medium, 1, 0, &cfg, &ReceiverConfig::default(), &sim).unwrap();
        assert_eq!(rec.verdict, ReceiveVerdict::Missed(MissReason::PayloadUnreadable));
    }

    proptest! {
        /// Window measurement is an exact partition of the measured span:
        /// no tick is lost or double-counted, whatever the skew.
        #[test]
        fn prop_window_counts_partition_the_span(
            busy in proptest::collection::btree_set(0u64..96, 0..40),
            skew in 0u64..8,
            num_slots in 1usize..5,
        ) {
            let sim = SimConfig::default();
            let mut tl = EnergyTimeline::new();
            for &t in &busy {
                tl.add(3, 1.0, t, t + 1);
            }
            let rx = ReceiverConfig { skew_ticks: skew, ..ReceiverConfig::default() };
            let counts = measure_slots(&tl, 0, num_slots, &rx, &sim);
            let span_start = skew;
            let span_end = skew + 2 * num_slots as u64 * sim.window_ticks;
            prop_assert_eq!(
                counts.iter().sum::<u64>(),
                tl.busy_ticks_in(span_start, span_end)
            );
        }

        /// Added energy can only raise window bits, never clear them.
        #[test]
        fn prop_window_bits_are_monotone_in_energy(
            counts in proptest::collection::vec(0u64..5, 1..5).prop_map(|half| {
                let mut c = half.clone();
                c.extend(half);
                c
            }),
            extra in proptest::collection::vec(0u64..5, 10),
            threshold in 0u64..5,
        ) {
            let rx = ReceiverConfig { threshold, ..ReceiverConfig::default() };
            let before = select_parity_and_decode(&counts, &rx);
            let raised: Vec<u64> = counts
                .iter()
                .zip(extra.iter().cycle())
                .map(|(&c, &e)| c + e)
                .collect();
            let after = select_parity_and_decode(&raised, &rx);
            for w in 0..counts.len() {
                prop_assert!(
                    !before.window_bits.bit(w) || after.window_bits.bit(w),
                    "window {} bit dropped when energy was added",
                    w
                );
            }
        }
    }

    /// A strong enough transmitter is decoded through weak interference.
    #[test]
    fn test_capture_reads_dominant_payload() {
        let (sim, cfg, frame) = roundtrip_setup();
        let mut medium = Medium::new([0, 1, 2]);
        let strong = SenderConfig { power: 4.0, ..SenderConfig::default() };
        let sched = send_tea(&mut medium, 0, &frame, &strong, &sim, 0, Visibility::All);
        medium.transmit(
            2,
            sched.payload_start,
            sched.payload_end,
            1.0,
            TxKind::Data,
            None,
            Visibility::All,
        );
        let rec = receive_tea(&medium, 1, 0, &cfg, &ReceiverConfig::default(), &sim).unwrap();
        // The interference ends before the slot phase, so the announcement
        // verifies end to end.
        assert_eq!(rec.verdict, ReceiveVerdict::Clean);
    }
}
