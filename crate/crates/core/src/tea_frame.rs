//! Announcement frame construction and slot verification.
//!
//! An announcement is: a long sync burst (19.2 ms, well above the longest
//! honest packet), the payload packet, a CTS-to-self reserving the medium for
//! the rest of the frame, and the slot phase. The slot phase carries two
//! direction bits (request 10, reply 01) followed by the balanced payload
//! digest transmitted as on/off energy slots. With the default 128-bit digest
//! the balanced code is 142 bits (71 ones), for 144 slots total.
//!
//! Verification reverses the encoding: direction bits must be one of the two
//! valid patterns, the hash portion must be balanced, must decode through the
//! balancing codec, and must equal the payload digest. Any failure is a
//! tamper verdict, not an error: a slot phase that does not verify is exactly
//! what an attacked announcement looks like.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::bitbalance::{self, UnbalanceError};
use crate::bits::BitString;
use crate::medium::SimConfig;
use crate::util::ceil_log2;

/// Slot-phase direction flag. Request announcements open an exchange; reply
/// announcements answer one. The two patterns are each other's complement, so
/// a request's off-slot is a reply's on-slot and vice versa, which lets a
/// sender detect a perfectly synchronized opposite announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Request,
    Reply,
}

impl Direction {
    pub fn bits(self) -> BitString {
        match self {
            Direction::Request => BitString::parse("10").unwrap(),
            Direction::Reply => BitString::parse("01").unwrap(),
        }
    }

    pub fn from_bits(bits: &BitString) -> Option<Direction> {
        match bits.to_string().as_str() {
            "10" => Some(Direction::Request),
            "01" => Some(Direction::Reply),
            _ => None,
        }
    }

    /// Index of the guaranteed off-slot within the two direction slots.
    pub fn off_slot_index(self) -> usize {
        match self {
            Direction::Request => 1,
            Direction::Reply => 0,
        }
    }
}

/// Named digest choice for announcement payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DigestAlgorithm {
    /// SHA-256 truncated to `output_bits`.
    Sha256Truncated,
}

/// Digest configuration. `test_mode` swaps in the identity function on
/// payloads of exactly `output_bits` bits, which makes desk-scale exhaustive
/// suites possible (every "hash" value is directly choosable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestConfig {
    pub algorithm: DigestAlgorithm,
    pub output_bits: usize,
    pub test_mode: bool,
}

impl DigestConfig {
    pub fn production() -> Self {
        DigestConfig { algorithm: DigestAlgorithm::Sha256Truncated, output_bits: 128, test_mode: false }
    }

    /// Identity digest over `output_bits`-bit payloads.
    pub fn test(output_bits: usize) -> Self {
        DigestConfig { algorithm: DigestAlgorithm::Sha256Truncated, output_bits, test_mode: true }
    }

    pub fn validate(&self) {
        assert!(self.output_bits >= 2 && self.output_bits % 2 == 0, "digest width must be even");
        assert!(self.output_bits <= 256, "digest width beyond one SHA-256 block not supported");
    }

    /// Length of the balanced slot encoding of one digest.
    pub fn balanced_len(&self) -> usize {
        self.output_bits + 2 * ceil_log2(self.output_bits) as usize
    }
}

/// Digest a payload. In test mode the payload (which must already be
/// `output_bits` wide) is returned unchanged. Otherwise the payload's bit
/// length (8-byte big-endian) and its packed bytes are hashed and the first
/// `output_bits` bits of the digest are kept; hashing the length keeps
/// distinct payloads distinct even when byte packing pads them identically.
pub fn digest(payload: &BitString, cfg: &DigestConfig) -> BitString {
    cfg.validate();
    if cfg.test_mode {
        assert_eq!(
            payload.len(),
            cfg.output_bits,
            "test-mode digest requires payload width {}",
            cfg.output_bits
        );
        return payload.clone();
    }
    match cfg.algorithm {
        DigestAlgorithm::Sha256Truncated => {
            let mut hasher = Sha256::new();
            hasher.update((payload.len() as u64).to_be_bytes());
            hasher.update(payload.to_bytes());
            let bytes = hasher.finalize();
            let bits = (0..cfg.output_bits)
                .map(|i| (bytes[i / 8] >> (7 - (i % 8))) & 1 == 1)
                .collect();
            BitString::from_bools(bits)
        }
    }
}

/// Frame-level configuration: digest, payload geometry, and the durations of
/// the non-slot parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub digest: DigestConfig,
    /// Required payload width in bits.
    pub payload_len_bits: usize,
    /// Airtime of the payload packet.
    pub payload_ticks: u64,
    /// Airtime of the CTS-to-self (14 bytes at 1 Mbit/s, rounded up).
    pub cts_ticks: u64,
    /// Gap between sync burst and payload; at most a SIFS.
    pub gap_sync_payload: u64,
    /// Gap between payload and CTS; at most a SIFS.
    pub gap_payload_cts: u64,
    /// Reserve one extra DIFS past the slot phase (request announcements do
    /// this so the reply can start without contention).
    pub reserve_extra_difs: bool,
}

impl FrameConfig {
    pub fn production(sim: &SimConfig) -> Self {
        FrameConfig {
            digest: DigestConfig::production(),
            payload_len_bits: 128,
            payload_ticks: 400,
            cts_ticks: 23,
            gap_sync_payload: sim.sifs_ticks,
            gap_payload_cts: sim.sifs_ticks,
            reserve_extra_difs: false,
        }
    }

    /// Desk-scale profile: identity digest over `bits`-bit payloads and a
    /// short payload packet.
    pub fn test_scale(sim: &SimConfig, bits: usize) -> Self {
        FrameConfig {
            digest: DigestConfig::test(bits),
            payload_len_bits: bits,
            payload_ticks: 40,
            cts_ticks: 23,
            gap_sync_payload: sim.sifs_ticks,
            gap_payload_cts: sim.sifs_ticks,
            reserve_extra_difs: false,
        }
    }

    pub fn validate(&self, sim: &SimConfig) {
        self.digest.validate();
        assert!(self.gap_sync_payload <= sim.sifs_ticks, "sync/payload gap exceeds SIFS");
        assert!(self.gap_payload_cts <= sim.sifs_ticks, "payload/CTS gap exceeds SIFS");
    }

    /// Slots in one announcement: two direction slots plus the balanced hash.
    pub fn num_slots(&self) -> usize {
        2 + self.digest.balanced_len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload is {actual} bits, config requires {expected}")]
    PayloadLengthMismatch { expected: usize, actual: usize },
}

/// A fully built announcement, ready to transmit: slot contents plus every
/// duration the sender needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeaFrame {
    pub direction: Direction,
    pub payload: BitString,
    /// Direction bits followed by the balanced digest.
    pub slots: BitString,
    pub sync_ticks: u64,
    pub payload_ticks: u64,
    pub cts_ticks: u64,
    /// Medium time reserved by the CTS-to-self: the slot phase, plus a DIFS
    /// when the frame asks for one.
    pub reservation_ticks: u64,
    pub gap_sync_payload: u64,
    pub gap_payload_cts: u64,
    pub slot_ticks: u64,
}

impl TeaFrame {
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_phase_ticks(&self) -> u64 {
        self.num_slots() as u64 * self.slot_ticks
    }

    /// Whole frame duration from sync start to slot-phase end.
    pub fn total_ticks(&self) -> u64 {
        self.sync_ticks
            + self.gap_sync_payload
            + self.payload_ticks
            + self.gap_payload_cts
            + self.cts_ticks
            + self.slot_phase_ticks()
    }

    /// Offset of the slot phase from the frame start (slots begin right after
    /// the CTS).
    pub fn slot_phase_offset(&self) -> u64 {
        self.sync_ticks + self.gap_sync_payload + self.payload_ticks + self.gap_payload_cts + self.cts_ticks
    }
}

/// Build an announcement for `payload` in the given direction.
pub fn build_tea(
    payload: &BitString,
    direction: Direction,
    frame_cfg: &FrameConfig,
    sim: &SimConfig,
) -> Result<TeaFrame, FrameError> {
    frame_cfg.validate(sim);
    if payload.len() != frame_cfg.payload_len_bits {
        return Err(FrameError::PayloadLengthMismatch {
            expected: frame_cfg.payload_len_bits,
            actual: payload.len(),
        });
    }
    let hash = digest(payload, &frame_cfg.digest);
    let balanced = bitbalance::balance(&hash).expect("digest width is even").output;
    let slots = direction.bits().concat(&balanced);
    let reservation_ticks = slots.len() as u64 * sim.slot_ticks
        + if frame_cfg.reserve_extra_difs { sim.difs_ticks } else { 0 };
    assert!(
        reservation_ticks <= sim.reservation_cap_ticks,
        "slot phase exceeds the reservation cap"
    );
    Ok(TeaFrame {
        direction,
        payload: payload.clone(),
        slots,
        sync_ticks: sim.sync_tx_ticks,
        payload_ticks: frame_cfg.payload_ticks,
        cts_ticks: frame_cfg.cts_ticks,
        reservation_ticks,
        gap_sync_payload: frame_cfg.gap_sync_payload,
        gap_payload_cts: frame_cfg.gap_payload_cts,
        slot_ticks: sim.slot_ticks,
    })
}

/// Why a slot phase failed verification. `Ambiguous` is produced by the
/// receiver when its two sensing-window parities tie with different decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperReason {
    SlotCount,
    Direction,
    Balance,
    Manchester,
    FlipCount,
    HashMismatch,
    Ambiguous,
}

/// Outcome of verifying a slot phase against a payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    Tampered(TamperReason),
}

impl Verdict {
    pub fn is_clean(self) -> bool {
        self == Verdict::Clean
    }
}

/// Verify received slot contents against the expected payload. Checks run in
/// order and the first failure wins: slot count, direction bits, hash
/// balance, codec decode, digest equality.
pub fn verify_slots(slots: &BitString, payload: &BitString, frame_cfg: &FrameConfig) -> Verdict {
    if slots.len() != frame_cfg.num_slots() {
        return Verdict::Tampered(TamperReason::SlotCount);
    }
    let direction_bits = slots.slice(0..2);
    if Direction::from_bits(&direction_bits).is_none() {
        return Verdict::Tampered(TamperReason::Direction);
    }
    let hash_portion = slots.slice(2..slots.len());
    if !hash_portion.is_balanced() {
        return Verdict::Tampered(TamperReason::Balance);
    }
    let decoded = match bitbalance::unbalance(&hash_portion) {
        Ok(decoded) => decoded,
        Err(UnbalanceError::FlipCountOutOfRange { .. }) => {
            return Verdict::Tampered(TamperReason::FlipCount)
        }
        Err(_) => return Verdict::Tampered(TamperReason::Manchester),
    };
    if decoded != digest(payload, &frame_cfg.digest) {
        return Verdict::Tampered(TamperReason::HashMismatch);
    }
    Verdict::Clean
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    /// SHA-256 of the 16-byte fixture 00 01 .. 0f, truncated to 128 bits,
    /// with the 8-byte length prefix (128) hashed first. Frozen after the
    /// first verified run.
    const DIGEST_GOLDEN: &str = "01111000010010110000001001110101\
                                 10100101001011100101101100111111\
                                 11001010100011000011000000010101\
                                 10101100100111001100101001011111";

    fn fixture_payload() -> BitString {
        let bytes: Vec<u8> = (0u8..16).collect();
        let bits = bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
            .collect();
        BitString::from_bools(bits)
    }

    #[test]
    fn test_direction_bits() {
        assert_eq!(Direction::Request.bits().to_string(), "10");
        assert_eq!(Direction::Reply.bits().to_string(), "01");
        assert_eq!(Direction::from_bits(&bs("10")), Some(Direction::Request));
        assert_eq!(Direction::from_bits(&bs("01")), Some(Direction::Reply));
        assert_eq!(Direction::from_bits(&bs("11")), None);
        assert_eq!(Direction::Request.off_slot_index(), 1);
        assert_eq!(Direction::Reply.off_slot_index(), 0);
    }

    #[test]
    fn test_identity_digest_in_test_mode() {
        let cfg = DigestConfig::test(4);
        assert_eq!(digest(&bs("1000"), &cfg), bs("1000"));
    }

    #[test]
    fn test_production_digest_golden_vector() {
        let cfg = DigestConfig::production();
        let d = digest(&fixture_payload(), &cfg);
        assert_eq!(d.len(), 128);
        let golden: String = DIGEST_GOLDEN.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(d.to_string(), golden);
    }

    #[test]
    fn test_digest_distinguishes_lengths() {
        let cfg = DigestConfig { output_bits: 16, ..DigestConfig::production() };
        // Same packed bytes (10 pads to 1000), different bit lengths.
        assert_ne!(digest(&bs("10"), &cfg), digest(&bs("1000"), &cfg));
    }

    #[test]
    fn test_build_tea_test_mode_slot_layout() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Reply, &cfg, &sim).unwrap();
        assert_eq!(frame.slots.to_string(), "0101101001");
        assert_eq!(frame.num_slots(), 10);
    }

    #[test]
    fn test_build_tea_rejects_wrong_payload_width() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        assert_eq!(
            build_tea(&bs("100"), Direction::Reply, &cfg, &sim),
            Err(FrameError::PayloadLengthMismatch { expected: 4, actual: 3 })
        );
    }

    /// Full-width frame: 128-bit digest balances to 142 bits (71 ones), 144
    /// slots, slot phase 5.76 ms, reservation within the 32 ms cap.
    #[test]
    fn test_production_frame_geometry() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::production(&sim);
        let frame = build_tea(&fixture_payload(), Direction::Request, &cfg, &sim).unwrap();
        assert_eq!(frame.num_slots(), 144);
        let hash_portion = frame.slots.slice(2..144);
        assert_eq!(hash_portion.len(), 142);
        assert_eq!(hash_portion.ones(), 71);
        assert_eq!(frame.slot_phase_ticks(), 1152);
        assert_eq!(frame.slot_phase_ticks() * sim.tick_us, 5760, "5.76 ms slot phase");
        assert!(frame.reservation_ticks <= sim.reservation_cap_ticks);
        assert_eq!(frame.sync_ticks, 3840);
    }

    #[test]
    fn test_verify_slots_round_trip() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Reply, &cfg, &sim).unwrap();
        assert_eq!(verify_slots(&frame.slots, &frame.payload, &cfg), Verdict::Clean);
    }

    /// Any single slot flip is detected, whichever check catches it first.
    #[test]
    fn test_verify_slots_flags_every_single_flip() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        for value in 0u64..16 {
            let payload = BitString::from_value(value, 4);
            let frame = build_tea(&payload, Direction::Request, &cfg, &sim).unwrap();
            for i in 0..frame.slots.len() {
                let mut tampered = frame.slots.clone();
                tampered.flip(i);
                assert_ne!(
                    verify_slots(&tampered, &payload, &cfg),
                    Verdict::Clean,
                    "flip at {i} of payload {payload} went unnoticed"
                );
            }
        }
    }

    #[test]
    fn test_verify_slots_reason_ordering() {
        let sim = SimConfig::default();
        let cfg = FrameConfig::test_scale(&sim, 4);
        let frame = build_tea(&bs("1000"), Direction::Reply, &cfg, &sim).unwrap();

        assert_eq!(
            verify_slots(&bs("01"), &frame.payload, &cfg),
            Verdict::Tampered(TamperReason::SlotCount)
        );
        let bad_direction = bs("11").concat(&frame.slots.slice(2..10));
        assert_eq!(
            verify_slots(&bad_direction, &frame.payload, &cfg),
            Verdict::Tampered(TamperReason::Direction)
        );
        let unbalanced = bs("01").concat(&bs("11101001"));
        assert_eq!(
            verify_slots(&unbalanced, &frame.payload, &cfg),
            Verdict::Tampered(TamperReason::Balance)
        );
        // Balanced but the count field is not Manchester (pairs 00 and 11).
        let bad_manchester = bs("01").concat(&bs("11000011"));
        assert_eq!(
            verify_slots(&bad_manchester, &frame.payload, &cfg),
            Verdict::Tampered(TamperReason::Manchester)
        );
        // Valid code for a different payload.
        let other = build_tea(&bs("0111"), Direction::Reply, &cfg, &sim).unwrap();
        assert_eq!(
            verify_slots(&other.slots, &frame.payload, &cfg),
            Verdict::Tampered(TamperReason::HashMismatch)
        );
    }

    #[test]
    fn test_verify_slots_flip_count_reason() {
        let sim = SimConfig::default();
        // 6-bit digest: body 6, count width 3; count value 7 -> 8 flips > 6.
        let cfg = FrameConfig::test_scale(&sim, 6);
        let bad_count = bs("111000").concat(&crate::bitbalance::manchester_encode(&bs("111")));
        let slots = bs("01").concat(&bad_count);
        assert!(bad_count.is_balanced());
        assert_eq!(
            verify_slots(&slots, &bs("111000"), &cfg),
            Verdict::Tampered(TamperReason::FlipCount)
        );
    }

    proptest! {
        /// Build/verify round trip over random payloads and directions.
        #[test]
        fn prop_round_trip_is_clean(value in 0u64..256, request in any::<bool>()) {
            let sim = SimConfig::default();
            let cfg = FrameConfig::test_scale(&sim, 8);
            let payload = BitString::from_value(value, 8);
            let direction = if request { Direction::Request } else { Direction::Reply };
            let frame = build_tea(&payload, direction, &cfg, &sim).unwrap();
            prop_assert_eq!(verify_slots(&frame.slots, &payload, &cfg), Verdict::Clean);
        }

        /// Production-width frames always land on 144 balanced slots.
        #[test]
        fn prop_production_slot_count(seed in any::<u64>()) {
            let sim = SimConfig::default();
            let cfg = FrameConfig::production(&sim);
            let payload = BitString::from_bools(
                (0..128).map(|i| (seed >> (i % 64)) & 1 == 1).collect(),
            );
            let frame = build_tea(&payload, Direction::Request, &cfg, &sim).unwrap();
            prop_assert_eq!(frame.num_slots(), 144);
            prop_assert!(frame.slots.slice(2..144).is_balanced());
        }
    }
}
