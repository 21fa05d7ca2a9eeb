//! Canonical message layouts and signed source messages.
//!
//! A source message is a fixed bit layout: auxiliary fields first (nonce,
//! identifiers, timestamps — signed but never computed on), then the data
//! value fields. All fields are big-endian; the layout is zero-padded to a
//! byte boundary, and the SHA-256 digest of those bytes is what the data
//! source signs. The exact same bit string is rebuilt wire-by-wire inside
//! the proof circuit, so a digest computed here and a digest computed
//! in-circuit agree bit for bit.

use crate::error::{Error, Result};
use crate::signer::{verify_digest, SignerKeys, PUBLIC_LEN, SIGNATURE_LEN};
use crate::wire::{BitWriter, Reader, Tag, Writer};
use crate::xof::sha256;

/// Bit layout of one signed message: auxiliary field widths in stream order,
/// then `vals` data fields of `val_bits` each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgLayout {
    /// Widths (bits) of the auxiliary fields, in canonical order.
    pub aux: Vec<usize>,
    /// Number of data value fields.
    pub vals: usize,
    /// Width of each data value field.
    pub val_bits: usize,
}

impl MsgLayout {
    /// Metering: nonce(128) ‖ household id(16) ‖ timestamp(32) ‖ readings.
    /// One 512-bit hash block holds up to 16 readings of 16 bits.
    pub fn smart_meter(readings: usize) -> Self {
        MsgLayout { aux: vec![128, 16, 32], vals: readings, val_bits: 16 }
    }

    /// Genomic study: patient id(16) ‖ nonce(128) ‖ SNP values at 2 bits each.
    pub fn disease(snps: usize) -> Self {
        MsgLayout { aux: vec![16, 128], vals: snps, val_bits: 2 }
    }

    /// Activity tracking: user id(16) ‖ nonce(128) ‖ timestamp(32) ‖
    /// easting(24) ‖ northing(24), one trace point per message.
    pub fn activity() -> Self {
        MsgLayout { aux: vec![16, 128, 32], vals: 2, val_bits: 24 }
    }

    pub fn aux_bits(&self) -> usize {
        self.aux.iter().sum()
    }

    /// Unpadded field bits.
    pub fn msg_bits(&self) -> usize {
        self.aux_bits() + self.vals * self.val_bits
    }

    /// Bits after zero-padding to a byte boundary; this is the hashed length.
    pub fn padded_bits(&self) -> usize {
        self.msg_bits().div_ceil(8) * 8
    }

    /// 512-bit hash blocks a message of this layout occupies.
    pub fn hash_blocks(&self) -> usize {
        crate::sha256::blocks_for_bits(self.padded_bits())
    }

    /// Checks the layout shape itself: every field needs a nonzero width
    /// that fits its carrier type.
    pub fn validate(&self) -> Result<()> {
        if self.aux.iter().any(|&b| b == 0 || b > 128) {
            return Err(Error::InvalidParams("aux field width out of range".into()));
        }
        if self.vals == 0 || self.val_bits == 0 || self.val_bits > 64 {
            return Err(Error::InvalidParams("value field shape out of range".into()));
        }
        Ok(())
    }

    fn check(&self, aux: &[u128], vals: &[u64]) -> Result<()> {
        if aux.len() != self.aux.len() || vals.len() != self.vals {
            return Err(Error::InvalidParams(format!(
                "field counts {}/{} do not match layout {}/{}",
                aux.len(),
                vals.len(),
                self.aux.len(),
                self.vals
            )));
        }
        for (i, (&v, &bits)) in aux.iter().zip(&self.aux).enumerate() {
            if bits < 128 && v >> bits != 0 {
                return Err(Error::InvalidParams(format!("aux field {i} overflows {bits} bits")));
            }
        }
        for (i, &v) in vals.iter().enumerate() {
            if self.val_bits < 64 && v >> self.val_bits != 0 {
                return Err(Error::InvalidParams(format!("value {i} overflows {} bits", self.val_bits)));
            }
        }
        Ok(())
    }
}

fn push_wide(bw: &mut BitWriter, v: u128, bits: usize) {
    if bits > 64 {
        bw.push_u64((v >> 64) as u64, bits - 64);
        bw.push_u64(v as u64, 64);
    } else {
        bw.push_u64(v as u64, bits);
    }
}

/// Canonical byte string of a message (big-endian fields, zero pad bits).
pub fn message_bytes(layout: &MsgLayout, aux: &[u128], vals: &[u64]) -> Vec<u8> {
    let mut bw = BitWriter::new();
    for (&v, &bits) in aux.iter().zip(&layout.aux) {
        push_wide(&mut bw, v, bits);
    }
    for &v in vals {
        bw.push_u64(v, layout.val_bits);
    }
    bw.finish()
}

/// The signed digest of a message's canonical bytes.
pub fn message_digest(layout: &MsgLayout, aux: &[u128], vals: &[u64]) -> [u8; 32] {
    sha256(&message_bytes(layout, aux, vals))
}

/// One signed source message: cleartext fields plus digest and signature.
/// The digest/signature pair travels onward; the fields stay with the user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceMessage {
    pub aux: Vec<u128>,
    pub vals: Vec<u64>,
    pub digest: [u8; 32],
    pub signature: [u8; SIGNATURE_LEN],
}

impl SourceMessage {
    /// Builds and signs a message; fields are validated against the layout.
    pub fn sign(layout: &MsgLayout, aux: Vec<u128>, vals: Vec<u64>, keys: &SignerKeys) -> Result<Self> {
        layout.check(&aux, &vals)?;
        let digest = message_digest(layout, &aux, &vals);
        let signature = keys.sign_digest(&digest);
        Ok(SourceMessage { aux, vals, digest, signature })
    }

    /// Recomputes the digest from the fields and checks the signature.
    pub fn verify(&self, layout: &MsgLayout, public: &[u8; PUBLIC_LEN]) -> bool {
        layout.check(&self.aux, &self.vals).is_ok()
            && message_digest(layout, &self.aux, &self.vals) == self.digest
            && verify_digest(public, &self.digest, &self.signature)
    }

    /// Message bits in stream order (unpadded length `layout.msg_bits()`).
    pub fn bits(&self, layout: &MsgLayout) -> Vec<bool> {
        let bytes = message_bytes(layout, &self.aux, &self.vals);
        (0..layout.msg_bits()).map(|k| (bytes[k / 8] >> (7 - k % 8)) & 1 == 1).collect()
    }
}

/// Serializes a batch of signed messages together with its layout.
pub fn serialize_messages(layout: &MsgLayout, msgs: &[SourceMessage]) -> Vec<u8> {
    let mut w = Writer::with_header(Tag::SignedBatch);
    w.put_u8(layout.aux.len() as u8);
    for &bits in &layout.aux {
        w.put_u16(bits as u16);
    }
    w.put_u32(layout.vals as u32);
    w.put_u16(layout.val_bits as u16);
    w.put_u32(msgs.len() as u32);
    for m in msgs {
        for &a in &m.aux {
            w.put_u64((a >> 64) as u64);
            w.put_u64(a as u64);
        }
        for &v in &m.vals {
            w.put_u64(v);
        }
        w.put_bytes(&m.digest);
        w.put_bytes(&m.signature);
    }
    w.finish()
}

pub fn deserialize_messages(bytes: &[u8]) -> Result<(MsgLayout, Vec<SourceMessage>)> {
    let mut r = Reader::expect_header(bytes, Tag::SignedBatch)?;
    let n_aux = r.get_u8()? as usize;
    let mut aux_bits = Vec::with_capacity(n_aux);
    for _ in 0..n_aux {
        let bits = r.get_u16()? as usize;
        if bits == 0 || bits > 128 {
            return Err(Error::Malformed(format!("aux width {bits}")));
        }
        aux_bits.push(bits);
    }
    let vals = r.get_u32()? as usize;
    let val_bits = r.get_u16()? as usize;
    if val_bits == 0 || val_bits > 64 {
        return Err(Error::Malformed(format!("value width {val_bits}")));
    }
    let layout = MsgLayout { aux: aux_bits, vals, val_bits };
    let n = r.get_u32()? as usize;
    // Counts are untrusted: check them against the actual payload length
    // before any sized allocation.
    let per_msg = 16 * layout.aux.len() + 8 * layout.vals + 32 + SIGNATURE_LEN;
    if n.checked_mul(per_msg) != Some(r.remaining()) {
        return Err(Error::Malformed(format!("{n} messages do not fit the payload")));
    }
    let mut msgs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut aux = Vec::with_capacity(layout.aux.len());
        for &bits in &layout.aux {
            let hi = r.get_u64()? as u128;
            let lo = r.get_u64()? as u128;
            let v = (hi << 64) | lo;
            if bits < 128 && v >> bits != 0 {
                return Err(Error::Malformed("aux field overflows its width".into()));
            }
            aux.push(v);
        }
        let mut vals_v = Vec::with_capacity(layout.vals);
        for _ in 0..layout.vals {
            let v = r.get_u64()?;
            if layout.val_bits < 64 && v >> layout.val_bits != 0 {
                return Err(Error::Malformed("value overflows its width".into()));
            }
            vals_v.push(v);
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let signature: [u8; SIGNATURE_LEN] = r.take(SIGNATURE_LEN)?.try_into().unwrap();
        msgs.push(SourceMessage { aux, vals: vals_v, digest, signature });
    }
    r.finish()?;
    Ok((layout, msgs))
}

/// Digest bytes as 256 bits in stream order (each byte MSB first), matching
/// the order of the in-circuit digest outputs.
pub fn digest_bits(digest: &[u8; 32]) -> Vec<bool> {
    (0..256).map(|k| (digest[k / 8] >> (7 - k % 8)) & 1 == 1).collect()
}
