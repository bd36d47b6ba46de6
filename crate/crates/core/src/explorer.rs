//! Exhaustive search for slot-decode integrity violations, and reproduction
//! of the lag-vulnerability boundary over a parameter grid.
//!
//! The search space is finite and fully enumerated: every balanced hash of a
//! given length, crossed with every canonical adversary schedule (added busy
//! ticks per sensing window, bounded by each window's idle capacity). A
//! counterexample is any combination the receiver decodes cleanly to a
//! balanced hash different from the one sent. Over a grid of (window length
//! m, threshold, lag), the search reproduces the closed-form boundary: a
//! counterexample exists if and only if `skew >= m - threshold`.
//!
//! Grid cells are restricted to the valid domain `threshold < m` and
//! `skew <= 2m`: at `threshold = m` a strict comparison can never read a 1,
//! so the receiver rejects everything, and beyond one slot of lag the
//! windows no longer measure the slots they are attributed to (pure
//! aliasing). Both bounds are enforced by [`valid_cell`].

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{sender_window_counts, AdversarySchedule};
use crate::bits::BitString;
use crate::receiver::{OccupancyComparison, ParityChoice, TieBreak};

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorerParams {
    /// Length of the balanced hash carried by the slot phase; even.
    pub hash_length: usize,
    /// Measurements (ticks) per sensing window; the slot length is `2 * m`.
    pub m: u64,
    /// Occupancy threshold; a window reads 1 when its count exceeds this.
    pub threshold: u64,
    /// Receiver measurement-grid lag behind the slot phase, in ticks.
    pub skew: u64,
}

impl ExplorerParams {
    pub fn validate(&self) {
        assert!(self.hash_length >= 2 && self.hash_length % 2 == 0);
        assert!(
            self.hash_length <= 16,
            "exhaustive search is meant for desk scale"
        );
        assert!(
            self.threshold < self.m,
            "threshold = m reads every window as 0 and rejects everything"
        );
    }
}

/// Whether a grid cell lies in the valid parameter domain: a threshold the
/// strict comparison can satisfy, and a lag of at most one slot.
pub fn valid_cell(m: u64, threshold: u64, skew: u64) -> bool {
    threshold < m && skew <= 2 * m
}

/// All balanced bit strings of the given even length, lexicographic.
pub fn enumerate_balanced(hash_length: usize) -> Vec<BitString> {
    assert!(hash_length % 2 == 0 && hash_length >= 2 && hash_length <= 16);
    (0..1u64 << hash_length)
        .map(|v| BitString::from_value(v, hash_length as u32))
        .filter(|b| b.is_balanced())
        .collect()
}

/// A clean decode of the wrong hash: the violation the slot phase is
/// supposed to make impossible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sent_hash: BitString,
    /// Added busy ticks per window, two windows per slot.
    pub schedule: AdversarySchedule,
    pub accepted_hash: BitString,
    pub chosen_parity: ParityChoice,
    /// Final per-window occupancy counts the receiver measured.
    pub window_counts: Vec<u64>,
}

/// Allocation-free mirror of `receiver::select_parity_and_decode` for the
/// hot loop: decoded slot bits as a mask (bit `b` = slot `b`), or `None`
/// when a variance tie leaves the parities in disagreement. A proptest pins
/// the equivalence with the receiver's rich decoder.
#[inline]
fn lean_decode(
    counts: &[u64],
    n: usize,
    threshold: u64,
    tie_break: TieBreak,
    occupancy: OccupancyComparison,
) -> Option<(u64, ParityChoice)> {
    let mut even_mask = 0u64;
    let mut odd_mask = 0u64;
    let (mut se, mut se2, mut so, mut so2) = (0u64, 0u64, 0u64, 0u64);
    for b in 0..n {
        let ce = counts[2 * b];
        let co = counts[2 * b + 1];
        if occupancy.bit(ce, threshold) {
            even_mask |= 1 << b;
        }
        if occupancy.bit(co, threshold) {
            odd_mask |= 1 << b;
        }
        se += ce;
        se2 += ce * ce;
        so += co;
        so2 += co * co;
    }
    let n64 = n as u64;
    let ve = n64 * se2 - se * se;
    let vo = n64 * so2 - so * so;
    if ve > vo {
        Some((even_mask, ParityChoice::Even))
    } else if vo > ve {
        Some((odd_mask, ParityChoice::Odd))
    } else {
        match tie_break {
            TieBreak::PreferEven => Some((even_mask, ParityChoice::Even)),
            TieBreak::PreferOdd => Some((odd_mask, ParityChoice::Odd)),
            TieBreak::RequireAgreement => {
                if even_mask == odd_mask {
                    Some((even_mask, ParityChoice::TieAgreed))
                } else {
                    None
                }
            }
        }
    }
}

fn mask_of(bits: &BitString) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, b)| if b { acc | 1 << i } else { acc })
}

fn mask_to_bits(mask: u64, n: usize) -> BitString {
    (0..n).map(|b| mask >> b & 1 == 1).collect()
}

/// Walk the whole (sent hash x schedule) space, calling `visit` for every
/// integrity violation. Schedules enumerate in odometer order with window 0
/// varying fastest; sent hashes in lexicographic order. Deterministic.
fn explore_inner(
    params: &ExplorerParams,
    tie_break: TieBreak,
    occupancy: OccupancyComparison,
    visit: &mut dyn FnMut(&BitString, &[u64], &[u64], u64, ParityChoice),
) {
    params.validate();
    let n = params.hash_length;
    let half = (n / 2) as u32;
    for sent in enumerate_balanced(n) {
        let sent_mask = mask_of(&sent);
        let baseline = sender_window_counts(&sent, params.m, params.skew);
        let caps: Vec<u64> = baseline.iter().map(|&e| params.m - e).collect();
        let mut added = vec![0u64; 2 * n];
        let mut counts = baseline.clone();
        'schedules: loop {
            if let Some((mask, parity)) =
                lean_decode(&counts, n, params.threshold, tie_break, occupancy)
            {
                if mask != sent_mask && mask.count_ones() == half {
                    visit(&sent, &added, &counts, mask, parity);
                }
            }
            let mut w = 0;
            loop {
                if w == 2 * n {
                    break 'schedules;
                }
                if added[w] < caps[w] {
                    added[w] += 1;
                    counts[w] += 1;
                    break;
                }
                added[w] = 0;
                counts[w] = baseline[w];
                w += 1;
            }
        }
    }
}

/// Exhaustively collect every integrity violation at one parameter point,
/// with the receiver's production decode rule. Deterministic order. Meant
/// for desk-scale parameters; use [`explore_count`] when only the tally is
/// needed.
pub fn explore(params: &ExplorerParams) -> Vec<Counterexample> {
    explore_with(params, TieBreak::RequireAgreement, OccupancyComparison::Greater)
}

/// [`explore`] with an explicit decode rule (used by the mis-pin negative
/// control and the tie-break invariance check).
pub fn explore_with(
    params: &ExplorerParams,
    tie_break: TieBreak,
    occupancy: OccupancyComparison,
) -> Vec<Counterexample> {
    let mut out = Vec::new();
    explore_inner(params, tie_break, occupancy, &mut |sent, added, counts, mask, parity| {
        out.push(Counterexample {
            sent_hash: sent.clone(),
            schedule: added.to_vec(),
            accepted_hash: mask_to_bits(mask, params.hash_length),
            chosen_parity: parity,
            window_counts: counts.to_vec(),
        });
    });
    out
}

/// Count integrity violations without materializing them.
pub fn explore_count(
    params: &ExplorerParams,
    tie_break: TieBreak,
    occupancy: OccupancyComparison,
) -> u64 {
    let mut count = 0u64;
    explore_inner(params, tie_break, occupancy, &mut |_, _, _, _, _| count += 1);
    count
}

/// Grid of parameter points to sweep. Cells outside the valid domain
/// (`threshold >= m` or `skew > 2m`) are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hash_lengths: Vec<usize>,
    pub ms: Vec<u64>,
    pub thresholds: Vec<u64>,
    pub skews: Vec<u64>,
}

impl GridSpec {
    /// The desk-scale acceptance grid: hash length 4, all three protocol
    /// parameters over 1..=6.
    pub fn desk_scale() -> Self {
        GridSpec {
            hash_lengths: vec![4],
            ms: (1..=6).collect(),
            thresholds: (1..=6).collect(),
            skews: (1..=6).collect(),
        }
    }

    /// Valid cells in deterministic order.
    pub fn cells(&self) -> Vec<ExplorerParams> {
        let mut cells = Vec::new();
        for &hash_length in &self.hash_lengths {
            for &m in &self.ms {
                for &threshold in &self.thresholds {
                    for &skew in &self.skews {
                        if valid_cell(m, threshold, skew) {
                            cells.push(ExplorerParams { hash_length, m, threshold, skew });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRow {
    pub hash_length: usize,
    pub m: u64,
    pub threshold: u64,
    pub skew: u64,
    /// Closed-form prediction: `skew >= m - threshold`.
    pub predicted: bool,
    /// What the exhaustive search actually determined.
    pub found: bool,
    pub n_counterexamples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateTable {
    pub rows: Vec<PredicateRow>,
}

impl PredicateTable {
    /// Rows where the exhaustive search disagrees with the closed form.
    pub fn mismatches(&self) -> Vec<&PredicateRow> {
        self.rows.iter().filter(|r| r.predicted != r.found).collect()
    }
}

/// Evaluate the closed-form boundary against the exhaustive search over a
/// grid. Cells are independent and evaluated in parallel; row order is the
/// deterministic cell order.
pub fn check_predicate(
    grid: &GridSpec,
    tie_break: TieBreak,
    occupancy: OccupancyComparison,
) -> PredicateTable {
    let rows = grid
        .cells()
        .into_par_iter()
        .map(|cell| {
            let n = explore_count(&cell, tie_break, occupancy);
            PredicateRow {
                hash_length: cell.hash_length,
                m: cell.m,
                threshold: cell.threshold,
                skew: cell.skew,
                predicted: cell.skew >= cell.m - cell.threshold,
                found: n > 0,
                n_counterexamples: n,
            }
        })
        .collect();
    PredicateTable { rows }
}

/// How the accepted hashes differ from the sent ones across a set of
/// counterexamples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipReport {
    pub total: usize,
    /// Sent-hash positions (0-based) where a 1 was read as 0, with how many
    /// counterexamples exploited each.
    pub dropped_at: BTreeMap<usize, u64>,
    /// Positions where a 0 was read as 1.
    pub raised_at: BTreeMap<usize, u64>,
    /// True when every dropped 1 is immediately followed by a 0 in the sent
    /// hash (silence after the last slot counts as 0).
    pub all_drops_followed_by_zero: bool,
    /// Every counterexample carries at least one drop (balance forces it).
    pub every_counterexample_drops: bool,
    pub accepted_hashes: BTreeSet<BitString>,
}

/// Characterize which positions the counterexamples exploit. The slot phase
/// can only ever read a transmitted 1 as 0 when the next slot is silent —
/// this report verifies that on real search output.
pub fn characterize_flips(counterexamples: &[Counterexample]) -> FlipReport {
    assert!(!counterexamples.is_empty(), "nothing to characterize");
    let mut dropped_at: BTreeMap<usize, u64> = BTreeMap::new();
    let mut raised_at: BTreeMap<usize, u64> = BTreeMap::new();
    let mut all_followed = true;
    let mut every_drops = true;
    let mut accepted_hashes = BTreeSet::new();
    for cex in counterexamples {
        let n = cex.sent_hash.len();
        let mut drops = 0;
        for b in 0..n {
            match (cex.sent_hash.bit(b), cex.accepted_hash.bit(b)) {
                (true, false) => {
                    drops += 1;
                    *dropped_at.entry(b).or_insert(0) += 1;
                    let next_is_zero = b + 1 >= n || !cex.sent_hash.bit(b + 1);
                    if !next_is_zero {
                        all_followed = false;
                    }
                }
                (false, true) => {
                    *raised_at.entry(b).or_insert(0) += 1;
                }
                _ => {}
            }
        }
        if drops == 0 {
            every_drops = false;
        }
        accepted_hashes.insert(cex.accepted_hash.clone());
    }
    FlipReport {
        total: counterexamples.len(),
        dropped_at,
        raised_at,
        all_drops_followed_by_zero: all_followed,
        every_counterexample_drops: every_drops,
        accepted_hashes,
    }
}

/// Replay one counterexample through the real measurement machinery: build
/// an energy timeline carrying the sender's slots, inject the schedule tick
/// by tick, and run the receiver's window measurement and parity decode on
/// it. True when the receiver cleanly reads exactly the accepted hash.
pub fn replay_on_timeline(cex: &Counterexample, params: &ExplorerParams) -> bool {
    use crate::medium::{EnergyTimeline, SimConfig};
    use crate::receiver::{measure_slots, select_parity_and_decode, ReceiverConfig};

    let m = params.m;
    let n = cex.sent_hash.len();
    let mut timeline = EnergyTimeline::new();
    for b in 0..n {
        if cex.sent_hash.bit(b) {
            timeline.add(0, 1.0, 2 * m * b as u64, 2 * m * (b as u64 + 1));
        }
    }
    for (w, &a) in cex.schedule.iter().enumerate() {
        let ws = params.skew + w as u64 * m;
        let mut left = a;
        for t in ws..ws + m {
            if left == 0 {
                break;
            }
            if !timeline.is_busy(t) {
                timeline.add(9, 1.0, t, t + 1);
                left -= 1;
            }
        }
        if left > 0 {
            return false;
        }
    }
    let sim = SimConfig { window_ticks: m, slot_ticks: 2 * m, ..SimConfig::default() };
    let rx = ReceiverConfig { threshold: params.threshold, skew_ticks: params.skew, ..ReceiverConfig::default() };
    let counts = measure_slots(&timeline, 0, n, &rx, &sim);
    let decode = select_parity_and_decode(&counts, &rx);
    match decode.bits() {
        Some(bits) => bits == &cex.accepted_hash && bits.is_balanced() && bits != &cex.sent_hash,
        None => false,
    }
}

/// Ground-truth validator for the canonical per-window reduction: a
/// tick-level search that enumerates every subset of idle ticks inside the
/// measurement span instead of per-window counts. Exponential in ticks —
/// keep to tiny instances. Returns whether any violation exists.
pub fn brute_force_tick_found(params: &ExplorerParams) -> bool {
    params.validate();
    let n = params.hash_length;
    let m = params.m;
    let span_start = params.skew;
    let span_end = params.skew + 2 * n as u64 * m;
    let half = (n / 2) as u32;
    for sent in enumerate_balanced(n) {
        let sent_mask = mask_of(&sent);
        let busy = |t: u64| {
            let slot = (t / (2 * m)) as usize;
            slot < n && sent.bit(slot)
        };
        let idle: Vec<u64> = (span_start..span_end).filter(|&t| !busy(t)).collect();
        assert!(idle.len() <= 20, "tick-level search is for tiny instances");
        for subset in 0u64..1 << idle.len() {
            let energized =
                |t: u64| busy(t) || idle.iter().enumerate().any(|(i, &it)| it == t && subset >> i & 1 == 1);
            let counts: Vec<u64> = (0..2 * n as u64)
                .map(|w| {
                    let ws = params.skew + w * m;
                    (ws..ws + m).filter(|&t| energized(t)).count() as u64
                })
                .collect();
            if let Some((mask, _)) = lean_decode(
                &counts,
                n,
                params.threshold,
                TieBreak::RequireAgreement,
                OccupancyComparison::Greater,
            ) {
                if mask != sent_mask && mask.count_ones() == half {
                    return true;
                }
            }
        }
    }
    false
}
