//! Deterministic byte expansion and seed derivation, all built on SHA-256.
//!
//! * [`Xof`] — counter-mode expansion of a short key: block i is
//!   `SHA-256(key ‖ i_be64)`. Used for per-player random tapes, challenge
//!   expansion and subset selection.
//! * [`derive_seed`] — domain-separated subseed derivation from a master seed.

use sha2::{Digest, Sha256};

/// SHA-256 counter-mode expander. Deterministic for a given key.
pub struct Xof {
    key: Vec<u8>,
    counter: u64,
    buf: [u8; 32],
    pos: usize,
    bit_buf: u8,
    bit_left: usize,
}

impl Xof {
    pub fn new(key: &[u8]) -> Self {
        Xof {
            key: key.to_vec(),
            counter: 0,
            buf: [0u8; 32],
            pos: 32,
            bit_buf: 0,
            bit_left: 0,
        }
    }

    fn refill(&mut self) {
        let mut h = Sha256::new();
        h.update(&self.key);
        h.update(self.counter.to_be_bytes());
        self.buf.copy_from_slice(&h.finalize());
        self.counter += 1;
        self.pos = 0;
    }

    pub fn next_byte(&mut self) -> u8 {
        if self.pos == 32 {
            self.refill();
        }
        let b = self.buf[self.pos];
        self.pos += 1;
        b
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        for b in out.iter_mut() {
            *b = self.next_byte();
        }
    }

    /// Next bit, MSB-first within each byte. Byte- and bit-level reads may be
    /// interleaved; bits are drawn from their own byte stream position.
    pub fn next_bit(&mut self) -> bool {
        if self.bit_left == 0 {
            self.bit_buf = self.next_byte();
            self.bit_left = 8;
        }
        self.bit_left -= 1;
        (self.bit_buf >> self.bit_left) & 1 == 1
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill(&mut b);
        u64::from_be_bytes(b)
    }

    /// Uniform draw in `[0, p)` by rejection on 64-bit words.
    pub fn next_below(&mut self, p: u64) -> u64 {
        debug_assert!(p > 0);
        // Zone keeps rejection probability < 2^-32 wasted work per draw.
        let zone = u64::MAX - u64::MAX % p;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % p;
            }
        }
    }
}

// RngCore lets the same stream drive the ring samplers (ternary, Gaussian,
// uniform-below) without a parallel code path.
impl rand::RngCore for Xof {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.fill(&mut b);
        u32::from_be_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        Xof::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.fill(dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill(dest);
        Ok(())
    }
}

/// Derives a 32-byte subseed: `SHA-256(master ‖ 0x00 ‖ domain)`.
pub fn derive_seed(master: &[u8; 32], domain: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master);
    h.update([0u8]);
    h.update(domain.as_bytes());
    h.finalize().into()
}

/// Convenience: 32-byte seed from a u64 master value.
pub fn seed_from_u64(master: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"crisp/seed");
    h.update(master.to_be_bytes());
    h.finalize().into()
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().into()
}
