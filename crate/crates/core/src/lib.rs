//! Deterministic simulator and exhaustive verifier for tamper-evident
//! announcements (TEAs) and the in-band pairing protocol built on them (TEP).
//!
//! A TEA encodes a payload digest as on/off energy slots so that an attacker
//! who can only add energy to the wireless medium cannot change the message
//! without detection. This crate models the whole stack at integer-tick
//! resolution:
//!
//! - [`bitbalance`]: the balancing codec that makes every transmitted hash
//!   contain exactly as many ones as zeros.
//! - [`tea_frame`]: frame construction (sync, payload, CTS-to-self, slots)
//!   and slot verification against the payload digest.
//! - [`medium`]: the shared medium as an add-only energy timeline, carrier
//!   sense, and the capture-effect frame decoder.
//! - [`sender`] / [`receiver`]: the announcement transmit and sensing
//!   pipelines, including the sender's own-transmission guard sampling.
//! - [`adversary`]: attacker strategies (add-only), including the
//!   skew-shift schedule generator.
//! - [`explorer`]: exhaustive state-space exploration of the slot phase;
//!   reproduces the skew vulnerability boundary
//!   `skew >= measurements_per_window - threshold`.
//! - [`pairing`]: push-button pairing baseline and the TEA-hardened variant,
//!   driven by desk-scale scenarios with a toy Diffie-Hellman exchange.
//!
//! Everything is deterministic: identical configs and seeds reproduce
//! identical timelines, traces, and tables.

pub mod adversary;
pub mod bitbalance;
pub mod bits;
pub mod explorer;
pub mod medium;
pub mod pairing;
pub mod receiver;
pub mod sender;
pub mod tea_frame;
pub mod util;

pub use bits::BitString;
