//! Bit string carrier type.
//!
//! Slot contents, hashes, payloads, and codec inputs are all sequences of
//! bits that get concatenated, sliced, flipped, and compared. `BitString`
//! keeps those operations explicit and renders as a plain `0`/`1` string in
//! traces and test output.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Immutable-ish sequence of bits with explicit indexing. Lexicographic
/// ordering matches the rendered string ordering ('0' < '1').
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: Vec<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseBitsError {
    #[error("invalid bit character {found:?} at position {pos}")]
    InvalidCharacter { pos: usize, found: char },
}

impl BitString {
    pub fn new() -> Self {
        BitString { bits: Vec::new() }
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        BitString { bits }
    }

    /// All-zero string of the given length.
    pub fn zeros_of_len(len: usize) -> Self {
        BitString { bits: vec![false; len] }
    }

    /// Big-endian binary representation of `value`, left-padded with zeros to
    /// `width` bits. Panics if `value` does not fit.
    pub fn from_value(value: u64, width: u32) -> Self {
        assert!(
            width == 64 || value < (1u64 << width),
            "value {value} does not fit in {width} bits"
        );
        let bits = (0..width).rev().map(|i| (value >> i) & 1 == 1).collect();
        BitString { bits }
    }

    /// Interpret the bits as a big-endian integer. Panics beyond 64 bits.
    pub fn to_value(&self) -> u64 {
        assert!(self.len() <= 64, "bit string too wide for u64");
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits[index] = value;
    }

    pub fn flip(&mut self, index: usize) {
        self.bits[index] = !self.bits[index];
    }

    pub fn push(&mut self, value: bool) {
        self.bits.push(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn zeros(&self) -> usize {
        self.len() - self.ones()
    }

    /// Count difference `ones - zeros`.
    pub fn balance_difference(&self) -> i64 {
        self.ones() as i64 - self.zeros() as i64
    }

    pub fn is_balanced(&self) -> bool {
        self.balance_difference() == 0
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        BitString { bits }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> BitString {
        BitString { bits: self.bits[range].to_vec() }
    }

    /// Pack into bytes, first bit in the most significant position of the
    /// first byte, zero-padded at the tail. Used to feed byte-oriented
    /// digests.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (7 - (i % 8));
            }
        }
        out
    }

    pub fn parse(s: &str) -> Result<Self, ParseBitsError> {
        let mut bits = Vec::with_capacity(s.len());
        for (pos, ch) in s.chars().enumerate() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                found => return Err(ParseBitsError::InvalidCharacter { pos, found }),
            }
        }
        Ok(BitString { bits })
    }
}

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BitString::parse(s)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitString { bits: iter.into_iter().collect() }
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitString::parse(&s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_parse_and_display_roundtrip() {
        let s = "0110100111000101";
        assert_eq!(BitString::parse(s).unwrap().to_string(), s);
    }

    #[test]
    fn test_parse_rejects_non_bits() {
        assert_eq!(
            BitString::parse("01x0"),
            Err(ParseBitsError::InvalidCharacter { pos: 2, found: 'x' })
        );
    }

    #[test]
    fn test_balance_difference() {
        let b = BitString::parse("1000").unwrap();
        assert_eq!(b.ones(), 1);
        assert_eq!(b.zeros(), 3);
        assert_eq!(b.balance_difference(), -2);
        assert!(!b.is_balanced());
        assert!(BitString::parse("0110").unwrap().is_balanced());
    }

    #[test]
    fn test_value_conversions() {
        let b = BitString::from_value(2, 2);
        assert_eq!(b.to_string(), "10");
        assert_eq!(b.to_value(), 2);
        assert_eq!(BitString::from_value(0, 3).to_string(), "000");
        assert_eq!(BitString::parse("01101001").unwrap().to_value(), 0x69);
    }

    #[test]
    fn test_to_bytes_packs_msb_first() {
        let b = BitString::parse("0110100111").unwrap();
        assert_eq!(b.to_bytes(), vec![0b0110_1001, 0b1100_0000]);
    }

    #[test]
    fn test_concat_slice_flip() {
        let mut b = BitString::parse("10").unwrap().concat(&BitString::parse("01").unwrap());
        assert_eq!(b.to_string(), "1001");
        assert_eq!(b.slice(1..3).to_string(), "00");
        b.flip(1);
        assert_eq!(b.to_string(), "1101");
    }

    #[test]
    fn test_ordering_matches_string_ordering() {
        let a = BitString::parse("0011").unwrap();
        let b = BitString::parse("0101").unwrap();
        assert!(a < b);
    }
}
