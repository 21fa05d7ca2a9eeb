//! Leveled CKKS over the RNS ring: key generation, public-key encryption with
//! explicit randomness, decryption, and the homomorphic ops used by the
//! supported computations (add, plaintext/ciphertext multiply, rescale, slot
//! rotation, full-slot summation).
//!
//! Conventions: pk = (p0, p1) with p0 = −a·s + e; a ciphertext is
//! ct = r0·pk + (m + e0, e1), so decryption noise is r0·e + e0 + e1·s.
//! Key switching (relinearization and rotations) uses base-2^8 digit
//! decomposition of the canonical coefficients.

use crate::error::{Error, Result};
use crate::params::{RingParams, SIGMA};
use crate::ring::{NttPoly, RingContext, RingElem, SmallPoly};
use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;
use std::collections::BTreeMap;

/// Infinity-norm bound on fresh decryption noise: 8√2·σN + 6σ√N + 16σ√(hN).
pub fn clean_noise_bound(n: usize, sigma: f64, h: usize) -> f64 {
    let nf = n as f64;
    let hf = h as f64;
    8.0 * 2.0f64.sqrt() * sigma * nf + 6.0 * sigma * nf.sqrt() + 16.0 * sigma * (hf * nf).sqrt()
}

#[derive(Debug, Clone)]
pub struct CkksParams {
    pub ring: RingParams,
    /// Base encoding scale Δ.
    pub delta: f64,
    pub sigma: f64,
    /// Hamming weight of the ternary secret key.
    pub hamming: usize,
    /// Digit size (bits) for key-switching decomposition.
    pub ksw_base_bits: u32,
}

impl CkksParams {
    pub fn new(ring: RingParams, delta: f64, hamming: usize) -> Result<Self> {
        let p = CkksParams { ring, delta, sigma: SIGMA, hamming, ksw_base_bits: 8 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.ring.validate()?;
        let n = self.ring.n;
        if self.hamming == 0 || self.hamming > n {
            return Err(Error::InvalidParams(format!("hamming weight {}", self.hamming)));
        }
        let b = clean_noise_bound(n, self.sigma, self.hamming);
        // Decryption margin: Δ must dominate the fresh-noise band.
        if self.delta <= n as f64 + 2.0 * b {
            return Err(Error::InvalidParams(format!(
                "Δ = {} too small for N = {n}, clean noise {b:.0}",
                self.delta
            )));
        }
        if self.delta >= (self.ring.primes[0] / 2) as f64 {
            return Err(Error::InvalidParams("Δ ≥ q0/2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    pub s: SmallPoly,
}

#[derive(Debug, Clone)]
pub struct PublicKey {
    pub p0: RingElem,
    pub p1: RingElem,
}

/// Key-switching key: per digit t, (b_t, a_t) = (−a_t·s + e_t + B^t·target, a_t),
/// prepared in the NTT domain at full level.
pub struct KswKey {
    pub pairs: Vec<(NttPoly, NttPoly)>,
}

pub struct Keys {
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub rlk: KswKey,
    /// Rotation keys by slot distance.
    pub rot: BTreeMap<usize, KswKey>,
}

/// Encryption randomness; committed and proved well-formed elsewhere.
#[derive(Debug, Clone)]
pub struct EncRandomness {
    pub r0: SmallPoly,
    pub e0: SmallPoly,
    pub e1: SmallPoly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub c0: RingElem,
    pub c1: RingElem,
    pub scale: f64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.c0.level()
    }
}

pub struct Ckks {
    pub ctx: RingContext,
    pub params: CkksParams,
}

impl Ckks {
    pub fn new(params: CkksParams) -> Result<Self> {
        params.validate()?;
        let ctx = RingContext::new(params.ring.clone())?;
        Ok(Ckks { ctx, params })
    }

    pub fn top_level(&self) -> usize {
        self.ctx.max_level()
    }

    fn digits_at(&self, level: usize) -> usize {
        self.params.ring.log2_q_at(level).div_ceil(self.params.ksw_base_bits as usize)
    }

    // ---- key generation ----

    pub fn keygen(&self, rotations: &[usize], rng: &mut dyn RngCore) -> Keys {
        let full = self.top_level();
        let s = self.ctx.sample_ternary_hw(self.params.hamming, rng);
        let s_elem = self.ctx.lift_small(&s, full);

        let a = self.ctx.sample_uniform(full, rng);
        let e = self.ctx.sample_gaussian(self.params.sigma, rng);
        let p0 = self.ctx.add(
            &self.ctx.neg(&self.ctx.mul(&a, &s_elem)),
            &self.ctx.lift_small(&e, full),
        );
        let pk = PublicKey { p0, p1: a };

        let s2 = self.ctx.mul(&s_elem, &s_elem);
        let rlk = self.make_ksw_key(&s2, &s_elem, rng);

        let mut rot = BTreeMap::new();
        for &r in rotations {
            if rot.contains_key(&r) {
                continue;
            }
            let k = self.galois_elt(r);
            let s_rot = self.ctx.automorphism(&s_elem, k);
            rot.insert(r, self.make_ksw_key(&s_rot, &s_elem, rng));
        }

        Keys { sk: SecretKey { s }, pk, rlk, rot }
    }

    /// Keys for the all-slot summation tree: rotations by powers of two.
    pub fn sum_rotations(&self) -> Vec<usize> {
        let slots = self.ctx.n() / 2;
        (0..slots.trailing_zeros()).map(|i| 1usize << i).collect()
    }

    fn make_ksw_key(&self, target: &RingElem, s_elem: &RingElem, rng: &mut dyn RngCore) -> KswKey {
        let full = self.top_level();
        let digits = self.digits_at(full);
        let base = BigUint::from(1u64) << self.params.ksw_base_bits;
        let mut pow = BigUint::one();
        let mut pairs = Vec::with_capacity(digits);
        for _ in 0..digits {
            let a_t = self.ctx.sample_uniform(full, rng);
            let e_t = self.ctx.lift_small(&self.ctx.sample_gaussian(self.params.sigma, rng), full);
            let pow_res: Vec<u64> = (0..full)
                .map(|i| {
                    let p = BigUint::from(self.ctx.prime(i));
                    (&pow % &p).to_u64_digits().first().copied().unwrap_or(0)
                })
                .collect();
            let b_t = self.ctx.add(
                &self.ctx.sub(&e_t, &self.ctx.mul(&a_t, s_elem)),
                &self.ctx.mul_scalar_residues(target, &pow_res),
            );
            pairs.push((self.ctx.to_ntt(&b_t), self.ctx.to_ntt(&a_t)));
            pow *= &base;
        }
        KswKey { pairs }
    }

    pub fn galois_elt(&self, r_slots: usize) -> usize {
        let two_n = 2 * self.ctx.n();
        let mut k = 1usize;
        for _ in 0..r_slots {
            k = (k * 5) % two_n;
        }
        k
    }

    // ---- encryption / decryption ----

    pub fn sample_randomness(&self, rng: &mut dyn RngCore) -> EncRandomness {
        EncRandomness {
            r0: self.ctx.sample_ternary_dense(rng),
            e0: self.ctx.sample_gaussian(self.params.sigma, rng),
            e1: self.ctx.sample_gaussian(self.params.sigma, rng),
        }
    }

    /// Encrypts with explicit randomness: ct = r0·pk + (m + e0, e1).
    pub fn encrypt_with(&self, pk: &PublicKey, m: &RingElem, rnd: &EncRandomness, scale: f64) -> Ciphertext {
        let lvl = m.level();
        let r0 = self.ctx.lift_small(&rnd.r0, lvl);
        let r0_ntt = self.ctx.to_ntt(&r0);
        let p0 = self.ctx.ntt_mul(&r0_ntt, &self.ctx.to_ntt(&self.ctx.truncate(&pk.p0, lvl)));
        let p1 = self.ctx.ntt_mul(&r0_ntt, &self.ctx.to_ntt(&self.ctx.truncate(&pk.p1, lvl)));
        let c0 = self.ctx.add(
            &self.ctx.add(&self.ctx.from_ntt(&p0), m),
            &self.ctx.lift_small(&rnd.e0, lvl),
        );
        let c1 = self.ctx.add(&self.ctx.from_ntt(&p1), &self.ctx.lift_small(&rnd.e1, lvl));
        Ciphertext { c0, c1, scale }
    }

    pub fn encrypt(
        &self,
        pk: &PublicKey,
        m: &RingElem,
        scale: f64,
        rng: &mut dyn RngCore,
    ) -> (Ciphertext, EncRandomness) {
        let rnd = self.sample_randomness(rng);
        (self.encrypt_with(pk, m, &rnd, scale), rnd)
    }

    /// m + noise = c0 + c1·s.
    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> RingElem {
        let s = self.ctx.lift_small(&sk.s, ct.level());
        self.ctx.add(&ct.c0, &self.ctx.mul(&ct.c1, &s))
    }

    // ---- homomorphic ops ----

    fn check_aligned(&self, a: &Ciphertext, b: &Ciphertext) {
        assert_eq!(a.level(), b.level(), "level mismatch");
        let rel = (a.scale / b.scale - 1.0).abs();
        assert!(rel < 1e-9, "scale mismatch: {} vs {}", a.scale, b.scale);
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.check_aligned(a, b);
        Ciphertext {
            c0: self.ctx.add(&a.c0, &b.c0),
            c1: self.ctx.add(&a.c1, &b.c1),
            scale: a.scale,
        }
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.check_aligned(a, b);
        Ciphertext {
            c0: self.ctx.sub(&a.c0, &b.c0),
            c1: self.ctx.sub(&a.c1, &b.c1),
            scale: a.scale,
        }
    }

    pub fn add_plain(&self, a: &Ciphertext, m: &RingElem) -> Ciphertext {
        Ciphertext { c0: self.ctx.add(&a.c0, m), c1: a.c1.clone(), scale: a.scale }
    }

    /// Multiplies by a plaintext polynomial encoded at `plain_scale`.
    pub fn mul_plain(&self, a: &Ciphertext, m: &RingElem, plain_scale: f64) -> Ciphertext {
        assert_eq!(a.level(), m.level());
        let mn = self.ctx.to_ntt(m);
        Ciphertext {
            c0: self.ctx.from_ntt(&self.ctx.ntt_mul(&self.ctx.to_ntt(&a.c0), &mn)),
            c1: self.ctx.from_ntt(&self.ctx.ntt_mul(&self.ctx.to_ntt(&a.c1), &mn)),
            scale: a.scale * plain_scale,
        }
    }

    /// Ciphertext-ciphertext product with relinearization (no rescale).
    pub fn mul_relin(&self, a: &Ciphertext, b: &Ciphertext, rlk: &KswKey) -> Ciphertext {
        assert_eq!(a.level(), b.level(), "level mismatch");
        let (a0, a1) = (self.ctx.to_ntt(&a.c0), self.ctx.to_ntt(&a.c1));
        let (b0, b1) = (self.ctx.to_ntt(&b.c0), self.ctx.to_ntt(&b.c1));
        let d0 = self.ctx.from_ntt(&self.ctx.ntt_mul(&a0, &b0));
        let mut d1n = self.ctx.ntt_mul(&a0, &b1);
        self.ctx.ntt_mul_acc(&mut d1n, &a1, &b0);
        // ntt_mul_acc adds a⊙b; build d1 = a0b1 + a1b0 via accumulator.
        let d1 = self.ctx.from_ntt(&d1n);
        let d2 = self.ctx.from_ntt(&self.ctx.ntt_mul(&a1, &b1));
        let (k0, k1) = self.keyswitch(&d2, rlk);
        Ciphertext {
            c0: self.ctx.add(&d0, &k0),
            c1: self.ctx.add(&d1, &k1),
            scale: a.scale * b.scale,
        }
    }

    /// Drops the top prime and divides the scale accordingly.
    pub fn rescale(&self, a: &Ciphertext) -> Ciphertext {
        let p_top = self.ctx.prime(a.level() - 1) as f64;
        Ciphertext {
            c0: self.ctx.rescale(&a.c0),
            c1: self.ctx.rescale(&a.c1),
            scale: a.scale / p_top,
        }
    }

    /// Aligns a fresh ciphertext down to `level` without scale change
    /// (modulus truncation).
    pub fn mod_down(&self, a: &Ciphertext, level: usize) -> Ciphertext {
        Ciphertext {
            c0: self.ctx.truncate(&a.c0, level),
            c1: self.ctx.truncate(&a.c1, level),
            scale: a.scale,
        }
    }

    /// Rotates slots left by `r` (slot j takes the value of slot j + r).
    pub fn rotate(&self, a: &Ciphertext, r: usize, keys: &Keys) -> Ciphertext {
        let key = keys.rot.get(&r).expect("missing rotation key");
        let k = self.galois_elt(r);
        let c0r = self.ctx.automorphism(&a.c0, k);
        let c1r = self.ctx.automorphism(&a.c1, k);
        let (k0, k1) = self.keyswitch(&c1r, key);
        Ciphertext { c0: self.ctx.add(&c0r, &k0), c1: k1, scale: a.scale }
    }

    /// Sum of all slots, replicated into every slot.
    pub fn rotate_sum(&self, a: &Ciphertext, keys: &Keys) -> Ciphertext {
        let mut acc = a.clone();
        let slots = self.ctx.n() / 2;
        for i in 0..slots.trailing_zeros() {
            let r = self.rotate(&acc, 1usize << i, keys);
            acc = self.add(&acc, &r);
        }
        acc
    }

    fn keyswitch(&self, d: &RingElem, key: &KswKey) -> (RingElem, RingElem) {
        let lvl = d.level();
        let digits = self.digits_at(lvl);
        assert!(digits <= key.pairs.len());
        let base_bits = self.params.ksw_base_bits as u64;
        let mask = (1u64 << base_bits) - 1;

        // Base-2^8 digits of each canonical coefficient, as level-`lvl` polys.
        let mut digit_polys = vec![self.ctx.zero(lvl); digits];
        let n = self.ctx.n();
        if lvl == 1 {
            for j in 0..n {
                let mut v = d.c[0][j];
                for dp in digit_polys.iter_mut() {
                    let dig = v & mask;
                    v >>= base_bits;
                    for i in 0..lvl {
                        dp.c[i][j] = dig % self.ctx.prime(i);
                    }
                }
            }
        } else {
            for j in 0..n {
                let mut v = self.ctx.coeff_canonical(d, j);
                let maskb = BigUint::from(mask);
                for dp in digit_polys.iter_mut() {
                    let dig = (&v & &maskb).to_u64_digits().first().copied().unwrap_or(0);
                    v >>= base_bits;
                    for i in 0..lvl {
                        dp.c[i][j] = dig % self.ctx.prime(i);
                    }
                }
            }
        }

        let mut acc0 = self.ctx.ntt_zero(lvl);
        let mut acc1 = self.ctx.ntt_zero(lvl);
        for (t, dp) in digit_polys.iter().enumerate() {
            let dn = self.ctx.to_ntt(dp);
            let (b_t, a_t) = &key.pairs[t];
            self.ctx.ntt_mul_acc(&mut acc0, &dn, &self.ctx.ntt_truncate(b_t, lvl));
            self.ctx.ntt_mul_acc(&mut acc1, &dn, &self.ctx.ntt_truncate(a_t, lvl));
        }
        (self.ctx.from_ntt(&acc0), self.ctx.from_ntt(&acc1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Encoder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const DELTA: f64 = (1u64 << 25) as f64;

    fn small_scheme(levels: &[u32]) -> (Ckks, Encoder) {
        let n = 256;
        let rp = RingParams::with_prime_bits(n, levels).unwrap();
        let params = CkksParams::new(rp, DELTA, 2 * n / 3).unwrap();
        let ckks = Ckks::new(params).unwrap();
        let enc = Encoder::new(n, DELTA);
        (ckks, enc)
    }

    #[test]
    fn fresh_noise_stays_below_clean_bound() {
        // The production ring: N = 2048, one 45-bit prime, h = 1365.
        let n = 2048;
        let rp = RingParams::with_prime_bits(n, &[45]).unwrap();
        let h = 1365;
        let params = CkksParams::new(rp, DELTA, h).unwrap();
        let ckks = Ckks::new(params).unwrap();
        let enc = Encoder::new(n, DELTA);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let keys = ckks.keygen(&[], &mut rng);

        let bound = clean_noise_bound(n, SIGMA, h);
        assert!((bound - 160_620.0).abs() < 1.0, "bound = {bound}");
        // Δ > N + 2·B: the decryption-correctness margin.
        assert!(DELTA > n as f64 + 2.0 * bound);

        let mut max_noise = 0f64;
        for trial in 0..20 {
            let z: Vec<i64> = (0..1024).map(|i| (i as i64 * 7 + trial) % 256).collect();
            let m = enc.encode_ints(&ckks.ctx, &z, 1);
            let (ct, _) = ckks.encrypt(&keys.pk, &m, DELTA, &mut rng);
            let dec = ckks.decrypt(&keys.sk, &ct);
            let noise = ckks.ctx.inf_norm(&ckks.ctx.sub(&dec, &m));
            let noise = u64::try_from(noise).unwrap() as f64;
            assert!(noise <= bound, "trial {trial}: noise {noise} > {bound}");
            max_noise = max_noise.max(noise);
        }
        // Nontrivial noise is actually present (the bound itself is a loose
        // worst-case envelope, ~200x above typical observations).
        assert!(max_noise > 100.0, "max noise {max_noise} suspiciously small");
    }

    #[test]
    fn encrypt_decrypt_round_trip() {
        let (ckks, enc) = small_scheme(&[45]);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let keys = ckks.keygen(&[], &mut rng);
        let z: Vec<i64> = (0..128).map(|i| i * 3 - 100).collect();
        let m = enc.encode_ints(&ckks.ctx, &z, 1);
        let (ct, _) = ckks.encrypt(&keys.pk, &m, DELTA, &mut rng);
        let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &ct), ct.scale);
        for j in 0..128 {
            assert!((slots[j] - z[j] as f64).abs() < 0.05, "slot {j}: {}", slots[j]);
        }
    }

    #[test]
    fn addition_is_slotwise() {
        let (ckks, enc) = small_scheme(&[45]);
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let keys = ckks.keygen(&[], &mut rng);
        let za: Vec<i64> = (0..128).map(|i| i).collect();
        let zb: Vec<i64> = (0..128).map(|i| 1000 - 2 * i).collect();
        let (ca, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &za, 1), DELTA, &mut rng);
        let (cb, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &zb, 1), DELTA, &mut rng);
        let sum = ckks.add(&ca, &cb);
        let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &sum), sum.scale);
        for j in 0..128 {
            let want = (za[j] + zb[j]) as f64;
            assert!((slots[j] - want).abs() < 0.1, "slot {j}: {} vs {want}", slots[j]);
        }
    }

    #[test]
    fn plain_multiply_then_rescale() {
        let (ckks, enc) = small_scheme(&[45, 25]);
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let keys = ckks.keygen(&[], &mut rng);
        let z: Vec<i64> = (0..128).map(|i| i + 1).collect();
        let w: Vec<f64> = (0..128).map(|i| 0.25 + (i as f64) / 256.0).collect();
        let m = enc.encode_ints(&ckks.ctx, &z, 2);
        let (ct, _) = ckks.encrypt(&keys.pk, &m, DELTA, &mut rng);
        let wm = enc.encode_real(&ckks.ctx, &w, DELTA, 2);
        let prod = ckks.rescale(&ckks.mul_plain(&ct, &wm, DELTA));
        assert_eq!(prod.level(), 1);
        let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &prod), prod.scale);
        for j in 0..128 {
            let want = z[j] as f64 * w[j];
            assert!(
                (slots[j] - want).abs() / want.abs() < 1e-3,
                "slot {j}: {} vs {want}",
                slots[j]
            );
        }
    }

    #[test]
    fn ciphertext_multiply_with_relinearization() {
        let (ckks, enc) = small_scheme(&[45, 25]);
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        let keys = ckks.keygen(&[], &mut rng);
        let za: Vec<i64> = (0..128).map(|i| i + 2).collect();
        let zb: Vec<i64> = (0..128).map(|i| 3 * i + 1).collect();
        let (ca, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &za, 2), DELTA, &mut rng);
        let (cb, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &zb, 2), DELTA, &mut rng);
        let prod = ckks.rescale(&ckks.mul_relin(&ca, &cb, &keys.rlk));
        let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &prod), prod.scale);
        for j in 0..128 {
            let want = (za[j] * zb[j]) as f64;
            assert!(
                (slots[j] - want).abs() / want < 1e-3,
                "slot {j}: {} vs {want}",
                slots[j]
            );
        }
    }

    #[test]
    fn rotation_shifts_slots() {
        let (ckks, enc) = small_scheme(&[45]);
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let keys = ckks.keygen(&[1, 5], &mut rng);
        let z: Vec<i64> = (0..128).map(|i| 10 * i + 7).collect();
        let (ct, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &z, 1), DELTA, &mut rng);
        for r in [1usize, 5] {
            let rot = ckks.rotate(&ct, r, &keys);
            let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &rot), rot.scale);
            for j in 0..128 {
                let want = z[(j + r) % 128] as f64;
                assert!(
                    (slots[j] - want).abs() < 0.5,
                    "r={r} slot {j}: {} vs {want}",
                    slots[j]
                );
            }
        }
    }

    #[test]
    fn rotate_sum_totals_all_slots() {
        let (ckks, enc) = small_scheme(&[45]);
        let mut rng = ChaCha20Rng::seed_from_u64(27);
        let keys = ckks.keygen(&ckks.sum_rotations(), &mut rng);
        let z: Vec<i64> = (0..128).map(|i| (i * i) as i64 % 251).collect();
        let total: i64 = z.iter().sum();
        let (ct, _) = ckks.encrypt(&keys.pk, &enc.encode_ints(&ckks.ctx, &z, 1), DELTA, &mut rng);
        let summed = ckks.rotate_sum(&ct, &keys);
        let slots = enc.decode(&ckks.ctx, &ckks.decrypt(&keys.sk, &summed), summed.scale);
        for j in [0usize, 17, 127] {
            let rel = (slots[j] - total as f64).abs() / total as f64;
            assert!(rel < 1e-4, "slot {j}: {} vs {total}", slots[j]);
        }
    }

    #[test]
    fn params_validation_rejects_small_delta() {
        let rp = RingParams::with_prime_bits(2048, &[45]).unwrap();
        assert!(CkksParams::new(rp, 1024.0, 1365).is_err());
    }
}
