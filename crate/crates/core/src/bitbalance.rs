//! Bit-balancing codec.
//!
//! Energy sensing can only distinguish "some energy" from "no energy", and an
//! attacker can add energy but never remove it. A message whose slot encoding
//! always contains exactly as many ones as zeros makes every addition
//! detectable: raising a 0 slot breaks the count, and a 1 slot cannot be
//! lowered. This module turns an arbitrary even-length bit string into such a
//! balanced code and back.
//!
//! Encoding: flip the first `i` bits of the input, where `i` is the smallest
//! positive index at which the running ones-minus-zeros difference returns to
//! zero, then append `i - 1` as a Manchester-encoded count field of
//! `ceil(log2(N))` source bits. Flipping one more prefix bit moves the
//! difference by exactly ±2, and flipping all `N` bits negates the initial
//! difference, so `1 <= i <= N` always exists. An already balanced input still
//! enters the flipping loop (the difference leaves zero and must come back),
//! which keeps `i >= 1`, the count field total, and the code injective.
//! Manchester encoding (1 -> 10, 0 -> 01) keeps the count field itself
//! balanced, so the whole code is balanced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::util::ceil_log2;

/// Full record of one balancing run: the input, every intermediate
/// ones-minus-zeros difference (index 0 is the input's), the number of prefix
/// bits flipped, and the final code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceTrace {
    pub input: BitString,
    pub flip_count: usize,
    pub differences: Vec<i64>,
    pub output: BitString,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BalanceError {
    #[error("input length {0} is not a positive even number")]
    OddLength(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UnbalanceError {
    #[error("length {0} is not a valid code length (N + 2*ceil(log2 N) for even N)")]
    InvalidLength(usize),
    #[error("count field is not valid Manchester: pair {index} is {pair}")]
    InvalidManchester { index: usize, pair: &'static str },
    #[error("decoded flip count {flips} exceeds body length {body_len}")]
    FlipCountOutOfRange { flips: usize, body_len: usize },
}

/// Manchester-encode: each source bit becomes a transition pair,
/// 1 -> 10 and 0 -> 01. The output is balanced by construction.
pub fn manchester_encode(bits: &BitString) -> BitString {
    let mut out = BitString::new();
    for b in bits.iter() {
        out.push(b);
        out.push(!b);
    }
    out
}

/// Inverse of [`manchester_encode`]. Rejects odd lengths and the
/// non-transition pairs 00 and 11.
pub fn manchester_decode(bits: &BitString) -> Result<BitString, UnbalanceError> {
    if bits.len() % 2 != 0 {
        return Err(UnbalanceError::InvalidLength(bits.len()));
    }
    let mut out = BitString::new();
    for index in 0..bits.len() / 2 {
        let (first, second) = (bits.bit(2 * index), bits.bit(2 * index + 1));
        match (first, second) {
            (true, false) => out.push(true),
            (false, true) => out.push(false),
            (false, false) => {
                return Err(UnbalanceError::InvalidManchester { index, pair: "00" })
            }
            (true, true) => {
                return Err(UnbalanceError::InvalidManchester { index, pair: "11" })
            }
        }
    }
    Ok(out)
}

/// Balance an even-length bit string. See the module docs for the algorithm;
/// the returned trace carries every intermediate difference for auditability.
///
/// Output length is `N + 2*ceil(log2 N)` and the output is always balanced.
pub fn balance(input: &BitString) -> Result<BalanceTrace, BalanceError> {
    let n = input.len();
    if n == 0 || n % 2 != 0 {
        return Err(BalanceError::OddLength(n));
    }

    let mut seq = input.clone();
    let mut diff = seq.balance_difference();
    let mut differences = vec![diff];
    let mut flip_count = 0usize;
    // A balanced input must still flip at least one bit so that the count
    // field value flip_count - 1 is defined; the loop then runs until the
    // difference returns to zero.
    while flip_count == 0 || diff != 0 {
        let index = flip_count; // flipping bit flip_count + 1, 1-indexed
        let was_one = seq.bit(index);
        seq.flip(index);
        diff += if was_one { -2 } else { 2 };
        differences.push(diff);
        flip_count += 1;
        debug_assert!(flip_count <= n, "difference must return to zero within N flips");
    }

    let count_width = ceil_log2(n);
    let count_field = BitString::from_value((flip_count - 1) as u64, count_width);
    let output = seq.concat(&manchester_encode(&count_field));
    debug_assert!(output.is_balanced());

    Ok(BalanceTrace { input: input.clone(), flip_count, differences, output })
}

/// Given a code length, recover the body length `N`: the unique even `N` with
/// `N + 2*ceil(log2 N) == len`. The mapping is strictly increasing in `N`, so
/// uniqueness is automatic.
fn body_length_for(len: usize) -> Option<usize> {
    let mut n = 2usize;
    loop {
        let code_len = n + 2 * ceil_log2(n) as usize;
        if code_len == len {
            return Some(n);
        }
        if code_len > len {
            return None;
        }
        n += 2;
    }
}

/// Invert [`balance`]: strip and Manchester-decode the count field, then flip
/// the first `count + 1` body bits back.
pub fn unbalance(code: &BitString) -> Result<BitString, UnbalanceError> {
    let n = body_length_for(code.len()).ok_or(UnbalanceError::InvalidLength(code.len()))?;
    let mut body = code.slice(0..n);
    let tail = code.slice(n..code.len());
    let count_field = manchester_decode(&tail)?;
    let flips = count_field.to_value() as usize + 1;
    if flips > n {
        return Err(UnbalanceError::FlipCountOutOfRange { flips, body_len: n });
    }
    for index in 0..flips {
        body.flip(index);
    }
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn test_manchester_examples() {
        assert_eq!(manchester_encode(&bs("10")).to_string(), "1001");
        assert_eq!(manchester_encode(&bs("00")).to_string(), "0101");
        assert_eq!(manchester_encode(&bs("11")).to_string(), "1010");
        assert_eq!(manchester_decode(&bs("1001")).unwrap().to_string(), "10");
    }

    #[test]
    fn test_manchester_rejects_non_transition_pairs() {
        assert_eq!(
            manchester_decode(&bs("0011")),
            Err(UnbalanceError::InvalidManchester { index: 0, pair: "00" })
        );
        assert_eq!(
            manchester_decode(&bs("1011")),
            Err(UnbalanceError::InvalidManchester { index: 1, pair: "11" })
        );
    }

    /// Golden vector: 1000 balances to 01101001 by flipping three bits
    /// (differences -2, -4, -2, 0) and appending the Manchester code of 2.
    #[test]
    fn test_balance_golden_vector() {
        let trace = balance(&bs("1000")).unwrap();
        assert_eq!(trace.flip_count, 3);
        assert_eq!(trace.differences, vec![-2, -4, -2, 0]);
        assert_eq!(trace.output.to_string(), "01101001");
    }

    /// One flip suffices when the first bit alone corrects the difference.
    #[test]
    fn test_balance_single_flip() {
        let trace = balance(&bs("1110")).unwrap();
        assert_eq!(trace.flip_count, 1);
        assert_eq!(trace.differences, vec![2, 0]);
        assert_eq!(trace.output.to_string(), "01100101");
    }

    /// A balanced input still flips: the difference leaves zero and returns.
    #[test]
    fn test_balance_already_balanced_input() {
        let trace = balance(&bs("10")).unwrap();
        assert_eq!(trace.flip_count, 2);
        assert_eq!(trace.differences, vec![0, -2, 0]);
        assert_eq!(trace.output.to_string(), "0110");
    }

    #[test]
    fn test_balance_rejects_odd_and_empty() {
        assert_eq!(balance(&bs("101")), Err(BalanceError::OddLength(3)));
        assert_eq!(balance(&bs("")), Err(BalanceError::OddLength(0)));
    }

    #[test]
    fn test_unbalance_inverts_the_examples() {
        assert_eq!(unbalance(&bs("01101001")).unwrap().to_string(), "1000");
        assert_eq!(unbalance(&bs("01100101")).unwrap().to_string(), "1110");
        assert_eq!(unbalance(&bs("0110")).unwrap().to_string(), "10");
    }

    #[test]
    fn test_unbalance_rejects_bad_lengths() {
        assert_eq!(unbalance(&bs("01101")), Err(UnbalanceError::InvalidLength(5)));
        // No even N gives a code length of 6 (f(2)=4, f(4)=8).
        assert_eq!(unbalance(&bs("011010")), Err(UnbalanceError::InvalidLength(6)));
    }

    #[test]
    fn test_unbalance_rejects_out_of_range_flip_count() {
        // Length 4 => body length 2, count width 1. Count field "10" decodes
        // to 1, so flips = 2 <= 2 is fine; there is no invalid count at this
        // width. Use length 8 (body 4, width 2): count field value 3 would
        // mean 4 flips (valid); nothing overflows at width 2 either, so build
        // length 12 (body 6, width 3): count value 7 -> 8 flips > 6.
        let code = bs("111000").concat(&manchester_encode(&bs("111")));
        assert_eq!(code.len(), 12);
        assert_eq!(
            unbalance(&code),
            Err(UnbalanceError::FlipCountOutOfRange { flips: 8, body_len: 6 })
        );
    }

    #[test]
    fn test_body_length_is_unique_and_increasing() {
        let mut last = 0;
        for n in (2..=64usize).step_by(2) {
            let len = n + 2 * ceil_log2(n) as usize;
            assert!(len > last);
            last = len;
            assert_eq!(body_length_for(len), Some(n));
        }
    }

    /// Exhaustive round trip over every input of every even length up to 12:
    /// output balanced, length as specified, decode restores the input, and
    /// the code is injective per length.
    #[test]
    fn test_exhaustive_roundtrip_small_lengths() {
        for n in (2..=12usize).step_by(2) {
            let mut seen = std::collections::HashSet::new();
            for value in 0u64..(1u64 << n) {
                let input = BitString::from_value(value, n as u32);
                let trace = balance(&input).unwrap();
                assert!(trace.output.is_balanced(), "unbalanced code for {input}");
                assert_eq!(trace.output.len(), n + 2 * ceil_log2(n) as usize);
                assert!(trace.flip_count >= 1 && trace.flip_count <= n);
                assert_eq!(*trace.differences.last().unwrap(), 0);
                assert_eq!(unbalance(&trace.output).unwrap(), input, "decode mismatch");
                assert!(seen.insert(trace.output.clone()), "collision for {input}");
            }
        }
    }

    proptest! {
        /// Each flip moves the difference by exactly 2.
        #[test]
        fn prop_difference_steps_are_plus_minus_two(bits in proptest::collection::vec(any::<bool>(), 1..32)) {
            let mut even = bits;
            if even.len() % 2 != 0 {
                even.pop();
            }
            prop_assume!(!even.is_empty());
            let trace = balance(&BitString::from_bools(even)).unwrap();
            for pair in trace.differences.windows(2) {
                prop_assert!((pair[1] - pair[0]).abs() == 2);
            }
        }

        /// Manchester encode/decode round-trips arbitrary sources.
        #[test]
        fn prop_manchester_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..64)) {
            let source = BitString::from_bools(bits);
            let encoded = manchester_encode(&source);
            prop_assert!(encoded.is_balanced() || source.is_empty());
            prop_assert_eq!(manchester_decode(&encoded).unwrap(), source);
        }

        /// Balance then unbalance is the identity for arbitrary even lengths.
        #[test]
        fn prop_balance_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..40)) {
            let mut even = bits;
            if even.len() % 2 != 0 {
                even.pop();
            }
            prop_assume!(!even.is_empty());
            let input = BitString::from_bools(even);
            let trace = balance(&input).unwrap();
            prop_assert!(trace.output.is_balanced());
            prop_assert_eq!(unbalance(&trace.output).unwrap(), input);
        }
    }
}
