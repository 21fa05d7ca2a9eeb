//! MPC-in-the-head zero-knowledge proofs: a (2,3)-decomposition engine over
//! circuits that mix Z_q arithmetic, Z_2 Boolean logic, and linear R_q ring
//! operations in one gate list.
//!
//! [`ir`] defines the circuit form, [`engine`] the prover/verifier, and
//! [`adversary`] a cheating prover used to measure the per-iteration
//! soundness error empirically.

pub mod adversary;
pub mod engine;
pub mod ir;

pub use engine::{
    deserialize_zk_proof, eval_decomposition, iteration_tapes, iterations, prove,
    serialize_zk_proof, share, verify, zk_proof_size, IterProof, IterationTapes, PlayerInput,
    Tape, View, ZkProof,
};
pub use ir::{Circuit, CircuitBuilder, OutVal, OutputValues, Wire, Witness};
