//! Binary wire formats.
//!
//! Every persistent object uses one container: magic `CRSP`, format version,
//! a one-byte type tag, then a tag-specific big-endian payload. Polynomial
//! coefficients are bit-packed MSB-first at a fixed width of
//! `ceil(log2 q)` bits for the modulus they live under, so sizes are
//! deterministic functions of the parameters.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::Zero;

pub const MAGIC: &[u8; 4] = b"CRSP";
pub const VERSION: u8 = 1;

/// Type tags for the container header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    RingElem = 1,
    Ciphertext = 2,
    PublicKey = 3,
    Commitment = 4,
    ZkProof = 5,
    BoundProof = 6,
    TransferRequest = 7,
    TransferPayload = 8,
    ReleaseMsg = 9,
    SignedBatch = 10,
}

impl Tag {
    pub fn from_u8(v: u8) -> Result<Tag> {
        Ok(match v {
            1 => Tag::RingElem,
            2 => Tag::Ciphertext,
            3 => Tag::PublicKey,
            4 => Tag::Commitment,
            5 => Tag::ZkProof,
            6 => Tag::BoundProof,
            7 => Tag::TransferRequest,
            8 => Tag::TransferPayload,
            9 => Tag::ReleaseMsg,
            10 => Tag::SignedBatch,
            _ => return Err(Error::Malformed(format!("unknown type tag {v}"))),
        })
    }
}

/// Growable big-endian byte writer.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn with_header(tag: Tag) -> Self {
        let mut w = Writer::new();
        w.put_bytes(MAGIC);
        w.put_u8(VERSION);
        w.put_u8(tag as u8);
        w
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    pub fn put_bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
    /// Length-prefixed (u32) byte blob.
    pub fn put_blob(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.put_bytes(v);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }
    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor-based big-endian reader with explicit error reporting.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn expect_header(buf: &'a [u8], tag: Tag) -> Result<Reader<'a>> {
        let mut r = Reader::new(buf);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Malformed("bad magic".into()));
        }
        let ver = r.get_u8()?;
        if ver != VERSION {
            return Err(Error::Malformed(format!("unsupported version {ver}")));
        }
        let t = Tag::from_u8(r.get_u8()?)?;
        if t != tag {
            return Err(Error::Malformed(format!("expected {tag:?}, got {t:?}")));
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Malformed("truncated input".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn get_u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub fn get_u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn get_u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn get_f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.get_u64()?))
    }
    pub fn get_blob(&mut self) -> Result<&'a [u8]> {
        let n = self.get_u32()? as usize;
        self.take(n)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

/// MSB-first bit packer. Sections are padded to a byte boundary by `finish`.
#[derive(Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    cur: u8,
    used: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_bit(&mut self, b: bool) {
        self.cur = (self.cur << 1) | b as u8;
        self.used += 1;
        if self.used == 8 {
            self.buf.push(self.cur);
            self.cur = 0;
            self.used = 0;
        }
    }

    /// Writes `width` bits of `v`, most significant first.
    pub fn push_u64(&mut self, v: u64, width: usize) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || v < (1u64 << width));
        for i in (0..width).rev() {
            self.push_bit((v >> i) & 1 == 1);
        }
    }

    /// Writes `width` bits of a non-negative big integer, MSB first.
    pub fn push_biguint(&mut self, v: &BigUint, width: usize) {
        debug_assert!(v.bits() as usize <= width);
        for i in (0..width).rev() {
            self.push_bit(v.bit(i as u64));
        }
    }

    pub fn bit_len(&self) -> usize {
        self.buf.len() * 8 + self.used
    }

    /// Pads with zero bits to a byte boundary and returns the buffer.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.cur <<= 8 - self.used;
            self.buf.push(self.cur);
        }
        self.buf
    }
}

/// MSB-first bit reader over a byte slice.
pub struct BitReader<'a> {
    buf: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        BitReader { buf, bit: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = self.bit / 8;
        if byte >= self.buf.len() {
            return Err(Error::Malformed("bitstream exhausted".into()));
        }
        let b = (self.buf[byte] >> (7 - self.bit % 8)) & 1;
        self.bit += 1;
        Ok(b == 1)
    }

    pub fn read_u64(&mut self, width: usize) -> Result<u64> {
        debug_assert!(width <= 64);
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_biguint(&mut self, width: usize) -> Result<BigUint> {
        let mut v = BigUint::zero();
        for _ in 0..width {
            v <<= 1u8;
            if self.read_bit()? {
                v |= BigUint::from(1u8);
            }
        }
        Ok(v)
    }

    pub fn bits_read(&self) -> usize {
        self.bit
    }
}

/// Bytes needed for `bits` bits.
pub fn bytes_for_bits(bits: usize) -> usize {
    bits.div_ceil(8)
}
