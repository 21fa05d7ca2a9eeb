//! The transfer circuit and its surrounding protocol.
//!
//! [`layout`] fixes the canonical byte/bit form of signed source messages,
//! [`build`] lays the mixed circuit down (encryption, commitment, share
//! conversion, in-circuit SHA-256), and [`transfer`] wraps proving,
//! verification and the wire format of complete transfer payloads.

pub mod build;
pub mod layout;
pub mod transfer;

pub use build::{
    a2b_and_count, assemble_witness, build_transfer_circuit, expected_outputs, TransferCircuit,
    TransferSecrets, TransferSpec,
};
pub use layout::{digest_bits, message_digest, MsgLayout, SourceMessage};
pub use transfer::{
    deserialize_bundle, prove_transfer, ric_binding, ric_select, serialize_bundle,
    verify_transfer, TransferBundle, TransferParams,
};
