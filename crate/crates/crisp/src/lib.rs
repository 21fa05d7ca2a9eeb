//! End-to-end verifiable encryption of signed data streams.
//!
//! A user holds readings signed by a trusted device. They encrypt the readings
//! under CKKS approximate homomorphic encryption and prove, in zero knowledge,
//! that the ciphertexts contain exactly the signed values: a ZKB++
//! (MPC-in-the-head) proof re-computes the encryption, a lattice commitment
//! and the data digests inside a mixed arithmetic/Boolean circuit, and a
//! companion Σ-protocol bounds the norms of the committed encryption
//! randomness. A service provider verifies, computes on the ciphertexts and
//! hands results back through a blinded release exchange.
//!
//! Module map:
//! * [`params`], [`ring`] — RNS/NTT arithmetic in Z_q\[X\]/(X^N+1)
//! * [`encode`] — exactly-linear slot encoding (integer matrix, no FFT)
//! * [`ckks`] — leveled CKKS: keys, encrypt/decrypt, add/mul/rotate/rescale
//! * [`bdop`] — additively homomorphic lattice commitment + norm-bound proof
//! * [`zkb`] — ZKB++ proof engine over mixed circuits, plus a cheating
//!   prover used to measure soundness empirically
//! * [`sha256`] — SHA-256 compression as a Boolean circuit block
//! * [`circuit`] — the transfer circuit: encryption + commitment + hashing,
//!   share conversion, message layouts, prove/verify of transfer payloads
//! * [`release`] — blinded result release (commit, blind, open, unblind)
//! * [`usecases`] — parameter presets, synthetic data, homomorphic programs
//! * [`estimate`] — proof-size estimator (model and exact modes)
//! * [`pipeline`] — end-to-end runs and machine-readable reports
//! * [`signer`] — Ed25519 signing of collected batches

pub mod bdop;
pub mod circuit;
pub mod ckks;
pub mod encode;
pub mod error;
pub mod estimate;
pub mod par;
pub mod params;
pub mod pipeline;
pub mod release;
pub mod ring;
pub mod sha256;
pub mod signer;
pub mod usecases;
pub mod wire;
pub mod xof;
pub mod zkb;

pub use error::{Error, Result};
