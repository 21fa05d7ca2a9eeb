//! SHA-256 as a boolean sub-circuit over the MPC circuit IR.
//!
//! The hash is laid down gate by gate so that a prover can show, inside the
//! zero-knowledge protocol, that a committed bit string hashes to a public
//! digest. Everything here is plain FIPS 180-4 SHA-256; the only work is
//! building it from XOR/NOT/AND gates with as few ANDs as possible, since
//! AND is the only boolean gate that costs communication in the proof.
//!
//! Conventions:
//!
//! * The message is a wire slice in *stream order*: bit `k` is bit `7 - k%8`
//!   of byte `k/8`, i.e. each byte most-significant bit first. This matches
//!   the bit order used by the wire-format bit writer, so hashing the wires
//!   of a serialized object hashes exactly its bytes.
//! * A [`Word`] stores its 32 wires least-significant bit first (`0[i]` is
//!   bit `i` of the value), which keeps adder code index-friendly. Word `w`
//!   of a 512-bit block is the big-endian interpretation of stream bits
//!   `32w..32w+32`, so `Word.0[31 - j]` is stream bit `32w + j`.
//! * Constant bits (initial hash value, round constants folded into adders,
//!   padding) reuse two shared constant wires; constants cost nothing.
//!
//! Gate budget per 512-bit block, counting only AND gates:
//!
//! * 536 two-word adders (144 schedule + 384 rounds + 8 final) at 31 ANDs
//!   each: a ripple-carry adder needs one AND per carry, carries `c1..c31`.
//! * 64 constant adders folding the round constant `K_t`: positions at or
//!   below the lowest set bit of `K_t` generate no gate, so `30 - tz(K_t)`
//!   ANDs each, 1861 in total.
//! * 64 rounds of `Ch` and `Maj` at 32 ANDs each (both have a single-AND
//!   per-bit form), 4096 in total.
//!
//! Total: `536 * 31 + 1861 + 4096 = 22_573` ANDs per block, pinned by test.

use crate::zkb::{CircuitBuilder, Wire};

/// FIPS 180-4 round constants.
const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

/// FIPS 180-4 initial hash value.
const IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// A 32-bit word as wires, stored least-significant bit first.
#[derive(Clone, Copy)]
pub struct Word(pub [Wire; 32]);

/// Where the interesting gates of an appended hash landed.
pub struct Sha256Meta {
    /// For each of the eight adders that fold the last block's working
    /// variables into the chaining value, the global non-local gate indices
    /// of its 31 carry ANDs, least-significant carry first. A prover that
    /// cheats on one of these gates shifts the corresponding digest word,
    /// which is exactly the handle needed to exercise digest tampering.
    pub final_carry_ands: [Vec<usize>; 8],
    /// The 256 digest wires in serialization order: word 0 first, each word
    /// most-significant bit first (matching the byte form of the digest).
    pub digest_bits: Vec<Wire>,
    /// Number of AND gates appended by this call.
    pub and_count: usize,
}

struct Sha<'a> {
    b: &'a mut CircuitBuilder,
    zero: Wire,
    one: Wire,
}

impl Sha<'_> {
    fn const_word(&mut self, v: u32) -> Word {
        Word(core::array::from_fn(|i| {
            if (v >> i) & 1 == 1 {
                self.one
            } else {
                self.zero
            }
        }))
    }

    /// Rotate right: free rewiring.
    fn rotr(&self, w: &Word, n: usize) -> Word {
        Word(core::array::from_fn(|i| w.0[(i + n) % 32]))
    }

    /// Shift right, filling with the shared zero wire: free rewiring.
    fn shr(&self, w: &Word, n: usize) -> Word {
        Word(core::array::from_fn(|i| {
            if i + n < 32 {
                w.0[i + n]
            } else {
                self.zero
            }
        }))
    }

    fn xor3(&mut self, x: &Word, y: &Word, z: &Word) -> Word {
        Word(core::array::from_fn(|i| {
            let t = self.b.xor(x.0[i], y.0[i]);
            self.b.xor(t, z.0[i])
        }))
    }

    fn bsig0(&mut self, a: &Word) -> Word {
        let (r2, r13, r22) = (self.rotr(a, 2), self.rotr(a, 13), self.rotr(a, 22));
        self.xor3(&r2, &r13, &r22)
    }

    fn bsig1(&mut self, e: &Word) -> Word {
        let (r6, r11, r25) = (self.rotr(e, 6), self.rotr(e, 11), self.rotr(e, 25));
        self.xor3(&r6, &r11, &r25)
    }

    fn ssig0(&mut self, w: &Word) -> Word {
        let (r7, r18, s3) = (self.rotr(w, 7), self.rotr(w, 18), self.shr(w, 3));
        self.xor3(&r7, &r18, &s3)
    }

    fn ssig1(&mut self, w: &Word) -> Word {
        let (r17, r19, s10) = (self.rotr(w, 17), self.rotr(w, 19), self.shr(w, 10));
        self.xor3(&r17, &r19, &s10)
    }

    /// `Ch(e, f, g) = g ^ (e & (f ^ g))`: one AND per bit.
    fn ch(&mut self, e: &Word, f: &Word, g: &Word) -> Word {
        Word(core::array::from_fn(|i| {
            let fg = self.b.xor(f.0[i], g.0[i]);
            let t = self.b.and(e.0[i], fg);
            self.b.xor(t, g.0[i])
        }))
    }

    /// `Maj(a, b, c) = b ^ ((a ^ b) & (b ^ c))`: one AND per bit.
    fn maj(&mut self, a: &Word, b: &Word, c: &Word) -> Word {
        Word(core::array::from_fn(|i| {
            let ab = self.b.xor(a.0[i], b.0[i]);
            let bc = self.b.xor(b.0[i], c.0[i]);
            let m = self.b.and(ab, bc);
            self.b.xor(m, b.0[i])
        }))
    }

    /// Ripple-carry addition mod 2^32 with 31 ANDs: `c1 = x0 & y0`, then
    /// `c_{i+1} = ((x_i ^ c_i) & (y_i ^ c_i)) ^ c_i` (the majority of
    /// `x_i, y_i, c_i`). Returns the sum and the global non-local indices of
    /// the carry ANDs, least-significant carry first.
    fn add2(&mut self, x: &Word, y: &Word) -> (Word, Vec<usize>) {
        let mut ands = Vec::with_capacity(31);
        let mut s = [self.zero; 32];
        s[0] = self.b.xor(x.0[0], y.0[0]);
        ands.push(self.b.nonlocal_count());
        let mut c = self.b.and(x.0[0], y.0[0]);
        for i in 1..32 {
            let xc = self.b.xor(x.0[i], c);
            s[i] = self.b.xor(xc, y.0[i]);
            if i < 31 {
                let yc = self.b.xor(y.0[i], c);
                ands.push(self.b.nonlocal_count());
                let m = self.b.and(xc, yc);
                c = self.b.xor(m, c);
            }
        }
        (Word(s), ands)
    }

    /// Add a known constant mod 2^32. Positions up to the constant's lowest
    /// set bit `t` are free (`s_i = x_i`, then `s_t = !x_t` with carry
    /// `x_t`); above it each position costs one AND: `x | c` where the
    /// constant bit is set, `x & c` where it is clear. `30 - tz(k)` ANDs.
    fn addk(&mut self, x: &Word, k: u32) -> Word {
        if k == 0 {
            return *x;
        }
        let t = k.trailing_zeros() as usize;
        let mut s = x.0;
        s[t] = self.b.not(x.0[t]);
        let mut c = x.0[t];
        for i in t + 1..32 {
            let ki = (k >> i) & 1 == 1;
            let xc = self.b.xor(x.0[i], c);
            s[i] = if ki { self.b.not(xc) } else { xc };
            if i < 31 {
                c = if ki {
                    let nx = self.b.not(x.0[i]);
                    let nc = self.b.not(c);
                    let nor = self.b.and(nx, nc);
                    self.b.not(nor)
                } else {
                    self.b.and(x.0[i], c)
                };
            }
        }
        Word(s)
    }
}

/// Appends a full SHA-256 computation (padding included) over `msg_bits`,
/// a message of arbitrary bit length in stream order (each byte
/// most-significant bit first). Returns the digest wires and gate metadata.
pub fn append_sha256(b: &mut CircuitBuilder, msg_bits: &[Wire]) -> Sha256Meta {
    let start = b.nonlocal_count();
    let zero = b.const_bool(false);
    let one = b.const_bool(true);
    let mut sha = Sha { b, zero, one };

    // FIPS 180-4 padding: a 1 bit, zeros to 448 mod 512, then the message
    // bit length as a 64-bit big-endian integer.
    let len = msg_bits.len() as u64;
    let mut bits = msg_bits.to_vec();
    bits.push(one);
    while bits.len() % 512 != 448 {
        bits.push(zero);
    }
    for j in (0..64).rev() {
        bits.push(if (len >> j) & 1 == 1 { one } else { zero });
    }
    debug_assert_eq!(bits.len() % 512, 0);

    let mut h: [Word; 8] = IV.map(|v| sha.const_word(v));

    let n_blocks = bits.len() / 512;
    let mut final_carry: [Vec<usize>; 8] = Default::default();
    for blk in 0..n_blocks {
        let block = &bits[blk * 512..(blk + 1) * 512];

        // Message schedule: W_0..15 straight from the block, then
        // W_t = ssig1(W_{t-2}) + W_{t-7} + ssig0(W_{t-15}) + W_{t-16}.
        let mut w: Vec<Word> = (0..16)
            .map(|wd| Word(core::array::from_fn(|i| block[32 * wd + (31 - i)])))
            .collect();
        for t in 16..64 {
            let s0 = sha.ssig0(&w[t - 15]);
            let s1 = sha.ssig1(&w[t - 2]);
            let (a1, _) = sha.add2(&w[t - 16], &s0);
            let (a2, _) = sha.add2(&a1, &w[t - 7]);
            let (a3, _) = sha.add2(&a2, &s1);
            w.push(a3);
        }

        let [mut a, mut bv, mut c, mut d, mut e, mut f, mut g, mut hv] = h;
        for t in 0..64 {
            // T1 = h + bsig1(e) + Ch(e,f,g) + K_t + W_t
            let s1 = sha.bsig1(&e);
            let chw = sha.ch(&e, &f, &g);
            let (t1, _) = sha.add2(&hv, &s1);
            let (t1, _) = sha.add2(&t1, &chw);
            let t1 = sha.addk(&t1, K[t]);
            let (t1, _) = sha.add2(&t1, &w[t]);
            // T2 = bsig0(a) + Maj(a,b,c)
            let s0 = sha.bsig0(&a);
            let mjw = sha.maj(&a, &bv, &c);
            let (t2, _) = sha.add2(&s0, &mjw);
            hv = g;
            g = f;
            f = e;
            let (e2, _) = sha.add2(&d, &t1);
            e = e2;
            d = c;
            c = bv;
            bv = a;
            let (a2, _) = sha.add2(&t1, &t2);
            a = a2;
        }

        let vars = [a, bv, c, d, e, f, g, hv];
        for (i, v) in vars.iter().enumerate() {
            let (hw, carries) = sha.add2(&h[i], v);
            h[i] = hw;
            if blk == n_blocks - 1 {
                final_carry[i] = carries;
            }
        }
    }

    let digest_bits = h
        .iter()
        .flat_map(|hw| (0..32).map(|j| hw.0[31 - j]))
        .collect();
    let and_count = sha.b.nonlocal_count() - start;
    Sha256Meta {
        final_carry_ands: final_carry,
        digest_bits,
        and_count,
    }
}

/// ANDs one 512-bit block costs: 536 two-word adders, 64 constant adders,
/// and 64 rounds of Ch and Maj.
pub const ANDS_PER_BLOCK: usize = 536 * 31 + 1861 + 64 * 64;

/// Number of 512-bit blocks SHA-256 processes for a message of `bits` bits.
pub fn blocks_for_bits(bits: usize) -> usize {
    (bits + 1 + 64).div_ceil(512)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::toy_ring;
    use crate::ring::RingContext;
    use crate::zkb::{CircuitBuilder, OutVal, Witness};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use sha2::{Digest, Sha256};

    /// Builds a circuit hashing `msg` via witness bool inputs, evaluates it
    /// in the clear, and reassembles the digest bytes.
    fn digest_via_circuit(msg: &[u8]) -> ([u8; 32], Sha256Meta) {
        let ctx = RingContext::new(toy_ring()).unwrap();
        let mut b = CircuitBuilder::new(1);
        let mut msg_bits = Vec::with_capacity(msg.len() * 8);
        let mut vals = Vec::with_capacity(msg.len() * 8);
        for &byte in msg {
            for j in 0..8 {
                msg_bits.push(b.input_bool());
                vals.push((byte >> (7 - j)) & 1 == 1);
            }
        }
        let meta = append_sha256(&mut b, &msg_bits);
        let circuit = b.finish(meta.digest_bits.clone());
        let w = Witness {
            rings: vec![],
            scalars: vec![],
            bools: vals,
        };
        let out = circuit.eval_plain(&ctx, &w);
        assert_eq!(out.vals.len(), 256);
        let mut digest = [0u8; 32];
        for (k, v) in out.vals.iter().enumerate() {
            let OutVal::B(bit) = v else {
                panic!("digest output {k} is not a bool");
            };
            if *bit {
                digest[k / 8] |= 1 << (7 - k % 8);
            }
        }
        (digest, meta)
    }

    #[test]
    fn known_digests_match_the_standard_test_vectors() {
        let vectors: [(&[u8], &str); 4] = [
            (
                b"",
                "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
            ),
            (
                b"abc",
                "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
            ),
            (
                b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
                "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
            ),
            (
                b"The quick brown fox jumps over the lazy dog",
                "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592",
            ),
        ];
        for (msg, want_hex) in vectors {
            let (got, _) = digest_via_circuit(msg);
            assert_eq!(hex::encode(got), want_hex, "message {:?}", msg);
        }
    }

    #[test]
    fn random_messages_agree_with_a_reference_implementation() {
        // Lengths straddling every padding edge: the 55/56/57 one-to-two
        // block boundary and the 64-byte block boundary.
        let lengths = [0usize, 1, 3, 55, 56, 57, 63, 64, 65, 119, 128];
        let mut rng = ChaCha20Rng::seed_from_u64(0x5a5a_0001);
        for &len in &lengths {
            let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let (got, meta) = digest_via_circuit(&msg);
            let want: [u8; 32] = Sha256::digest(&msg).into();
            assert_eq!(got, want, "length {len}");
            assert_eq!(
                meta.and_count,
                ANDS_PER_BLOCK * blocks_for_bits(8 * len),
                "and count at length {len}"
            );
        }
    }

    #[test]
    fn gate_count_is_exact_per_block() {
        assert_eq!(ANDS_PER_BLOCK, 22_573);
        let (_, meta) = digest_via_circuit(b"abc");
        assert_eq!(meta.and_count, 22_573);
        let (_, meta) = digest_via_circuit(&[0u8; 64]);
        assert_eq!(meta.and_count, 45_146);
        // 55 bytes still fits one block (440 + 1 + 64 <= 512); 56 does not.
        assert_eq!(blocks_for_bits(55 * 8), 1);
        assert_eq!(blocks_for_bits(56 * 8), 2);
    }

    #[test]
    fn final_adder_metadata_lists_the_last_blocks_carry_ands() {
        for msg_len in [3usize, 64] {
            let (_, meta) = digest_via_circuit(&vec![0xabu8; msg_len]);
            // The eight chaining adders are the last gates appended, each
            // contributing 31 consecutive carry ANDs in LSB-first order.
            let base = meta.and_count - 8 * 31;
            for (i, carries) in meta.final_carry_ands.iter().enumerate() {
                assert_eq!(carries.len(), 31);
                for (j, &idx) in carries.iter().enumerate() {
                    assert_eq!(idx, base + 31 * i + j, "adder {i} carry {j}");
                }
            }
        }
    }

    #[test]
    fn constant_messages_hash_identically_through_const_wires() {
        // Message bits supplied as circuit constants rather than witness
        // inputs: the circuit then has no inputs at all.
        let ctx = RingContext::new(toy_ring()).unwrap();
        let msg = b"constant folding";
        let mut b = CircuitBuilder::new(1);
        let msg_bits: Vec<_> = msg
            .iter()
            .flat_map(|&byte| (0..8).map(move |j| (byte >> (7 - j)) & 1 == 1))
            .map(|bit| b.const_bool(bit))
            .collect();
        let meta = append_sha256(&mut b, &msg_bits);
        let circuit = b.finish(meta.digest_bits.clone());
        let w = Witness {
            rings: vec![],
            scalars: vec![],
            bools: vec![],
        };
        let out = circuit.eval_plain(&ctx, &w);
        let mut digest = [0u8; 32];
        for (k, v) in out.vals.iter().enumerate() {
            if matches!(v, OutVal::B(true)) {
                digest[k / 8] |= 1 << (7 - k % 8);
            }
        }
        let want: [u8; 32] = Sha256::digest(msg).into();
        assert_eq!(digest, want);
    }
}
