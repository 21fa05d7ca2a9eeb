//! RNS arithmetic in R_q = Z_q[X]/(X^N + 1).
//!
//! Elements are stored as one length-N residue array per active prime.
//! Multiplication uses the negacyclic NTT (merged-twist Cooley-Tukey forward,
//! Gentleman-Sande inverse); public operands can be prepared once in the NTT
//! domain and reused. Centered integer views for norms, serialization and bit
//! decomposition are recomposed with Garner's mixed-radix CRT.

use crate::error::{Error, Result};
use crate::params::{pow_mod, RingParams};
pub use crate::params::mul_mod;
use crate::wire::{self, BitReader, BitWriter, Reader, Tag, Writer};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::RngCore;

#[inline(always)]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline(always)]
pub fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

/// Per-prime NTT tables.
struct PrimeCtx {
    p: u64,
    /// psi^brv(i) for the merged forward transform, psi a primitive 2N-th root.
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

impl PrimeCtx {
    fn new(p: u64, n: usize) -> Self {
        let two_n = 2 * n as u64;
        debug_assert_eq!(p % two_n, 1);
        let psi = find_primitive_2n_root(p, n);
        let psi_inv = pow_mod(psi, p - 2, p);
        let log_n = n.trailing_zeros();
        let brv = |i: usize| (i as u32).reverse_bits() >> (32 - log_n);
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        for i in 0..n {
            psi_rev[i] = pow_mod(psi, brv(i) as u64, p);
            psi_inv_rev[i] = pow_mod(psi_inv, brv(i) as u64, p);
        }
        let n_inv = pow_mod(n as u64, p - 2, p);
        PrimeCtx { p, psi_rev, psi_inv_rev, n_inv }
    }

    fn forward(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let s = self.psi_rev[m + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_mod(a[j + t], s, p);
                    a[j] = add_mod(u, v, p);
                    a[j + t] = sub_mod(u, v, p);
                }
            }
            m <<= 1;
        }
    }

    fn inverse(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, p);
                    a[j + t] = mul_mod(sub_mod(u, v, p), s, p);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod(*x, self.n_inv, p);
        }
    }
}

fn find_primitive_2n_root(p: u64, n: usize) -> u64 {
    let two_n = 2 * n as u64;
    let exp = (p - 1) / two_n;
    for c in 2..p {
        let g = pow_mod(c, exp, p);
        // Primitive 2N-th root iff g^N = -1.
        if pow_mod(g, n as u64, p) == p - 1 {
            return g;
        }
    }
    unreachable!("no primitive root found");
}

/// Ring element in RNS form; `c[i]` holds the residues mod the i-th prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingElem {
    pub c: Vec<Vec<u64>>,
}

impl RingElem {
    pub fn level(&self) -> usize {
        self.c.len()
    }
    pub fn n(&self) -> usize {
        self.c[0].len()
    }
}

/// Ring element in the NTT (evaluation) domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NttPoly {
    pub c: Vec<Vec<u64>>,
}

impl NttPoly {
    pub fn level(&self) -> usize {
        self.c.len()
    }
}

/// Small centered polynomial (sampler output, commitment messages/randomness).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallPoly(pub Vec<i64>);

impl SmallPoly {
    pub fn zero(n: usize) -> Self {
        SmallPoly(vec![0; n])
    }

    pub fn inf_norm(&self) -> i64 {
        self.0.iter().map(|&x| x.abs()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &SmallPoly) -> SmallPoly {
        SmallPoly(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: i64) -> SmallPoly {
        SmallPoly(self.0.iter().map(|&a| a * k).collect())
    }
}

/// Precomputed context: NTT tables per prime plus CRT recomposition data.
pub struct RingContext {
    pub params: RingParams,
    primes: Vec<PrimeCtx>,
    /// inv_pair[i][j] = primes[i]^{-1} mod primes[j], for i < j (Garner).
    inv_pair: Vec<Vec<u64>>,
    /// p_top^{-1} mod primes[i] for every (top, i) pair with i < top.
    rescale_inv: Vec<Vec<u64>>,
}

impl RingContext {
    pub fn new(params: RingParams) -> Result<Self> {
        params.validate()?;
        let primes: Vec<PrimeCtx> = params.primes.iter().map(|&p| PrimeCtx::new(p, params.n)).collect();
        let np = params.primes.len();
        let mut inv_pair = vec![vec![0u64; np]; np];
        for j in 0..np {
            for i in 0..j {
                inv_pair[i][j] = pow_mod(params.primes[i] % params.primes[j], params.primes[j] - 2, params.primes[j]);
            }
        }
        let mut rescale_inv = vec![vec![0u64; np]; np];
        for top in 1..np {
            for i in 0..top {
                rescale_inv[top][i] =
                    pow_mod(params.primes[top] % params.primes[i], params.primes[i] - 2, params.primes[i]);
            }
        }
        Ok(RingContext { params, primes, inv_pair, rescale_inv })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn prime(&self, i: usize) -> u64 {
        self.params.primes[i]
    }

    pub fn max_level(&self) -> usize {
        self.params.primes.len()
    }

    // ---- construction ----

    pub fn zero(&self, level: usize) -> RingElem {
        RingElem { c: vec![vec![0u64; self.n()]; level] }
    }

    /// Embeds a small centered polynomial at the given level.
    pub fn lift_small(&self, s: &SmallPoly, level: usize) -> RingElem {
        assert_eq!(s.0.len(), self.n());
        let mut e = self.zero(level);
        for (i, row) in e.c.iter_mut().enumerate() {
            let p = self.prime(i) as i128;
            for (j, &v) in s.0.iter().enumerate() {
                row[j] = (((v as i128).rem_euclid(p)) as u64) % self.prime(i);
            }
        }
        e
    }

    /// Constant polynomial k (integer, possibly negative) at coeff 0.
    pub fn constant(&self, k: i64, level: usize) -> RingElem {
        let mut s = SmallPoly::zero(self.n());
        s.0[0] = k;
        self.lift_small(&s, level)
    }

    /// Constant polynomial from residues (one scalar per active prime).
    pub fn constant_residues(&self, res: &[u64], level: usize) -> RingElem {
        let mut e = self.zero(level);
        for i in 0..level {
            e.c[i][0] = res[i] % self.prime(i);
        }
        e
    }

    // ---- linear ops ----

    pub fn add(&self, a: &RingElem, b: &RingElem) -> RingElem {
        assert_eq!(a.level(), b.level());
        let mut r = a.clone();
        for (i, row) in r.c.iter_mut().enumerate() {
            let p = self.prime(i);
            for (x, &y) in row.iter_mut().zip(&b.c[i]) {
                *x = add_mod(*x, y, p);
            }
        }
        r
    }

    pub fn sub(&self, a: &RingElem, b: &RingElem) -> RingElem {
        assert_eq!(a.level(), b.level());
        let mut r = a.clone();
        for (i, row) in r.c.iter_mut().enumerate() {
            let p = self.prime(i);
            for (x, &y) in row.iter_mut().zip(&b.c[i]) {
                *x = sub_mod(*x, y, p);
            }
        }
        r
    }

    pub fn neg(&self, a: &RingElem) -> RingElem {
        let mut r = a.clone();
        for (i, row) in r.c.iter_mut().enumerate() {
            let p = self.prime(i);
            for x in row.iter_mut() {
                *x = if *x == 0 { 0 } else { p - *x };
            }
        }
        r
    }

    /// Multiplies by a scalar given as residues per active prime.
    pub fn mul_scalar_residues(&self, a: &RingElem, res: &[u64]) -> RingElem {
        let mut r = a.clone();
        for (i, row) in r.c.iter_mut().enumerate() {
            let p = self.prime(i);
            let s = res[i] % p;
            for x in row.iter_mut() {
                *x = mul_mod(*x, s, p);
            }
        }
        r
    }

    pub fn mul_scalar_i64(&self, a: &RingElem, k: i64) -> RingElem {
        let res: Vec<u64> = (0..a.level())
            .map(|i| (k as i128).rem_euclid(self.prime(i) as i128) as u64)
            .collect();
        self.mul_scalar_residues(a, &res)
    }

    // ---- NTT ----

    pub fn to_ntt(&self, a: &RingElem) -> NttPoly {
        let mut c = a.c.clone();
        for (i, row) in c.iter_mut().enumerate() {
            self.primes[i].forward(row);
        }
        NttPoly { c }
    }

    pub fn from_ntt(&self, a: &NttPoly) -> RingElem {
        let mut c = a.c.clone();
        for (i, row) in c.iter_mut().enumerate() {
            self.primes[i].inverse(row);
        }
        RingElem { c }
    }

    pub fn ntt_zero(&self, level: usize) -> NttPoly {
        NttPoly { c: vec![vec![0u64; self.n()]; level] }
    }

    pub fn ntt_mul(&self, a: &NttPoly, b: &NttPoly) -> NttPoly {
        assert_eq!(a.level(), b.level());
        let mut r = a.clone();
        for (i, row) in r.c.iter_mut().enumerate() {
            let p = self.prime(i);
            for (x, &y) in row.iter_mut().zip(&b.c[i]) {
                *x = mul_mod(*x, y, p);
            }
        }
        r
    }

    /// acc += a ⊙ b, all in the NTT domain.
    pub fn ntt_mul_acc(&self, acc: &mut NttPoly, a: &NttPoly, b: &NttPoly) {
        let lvl = acc.level();
        assert!(a.level() >= lvl && b.level() >= lvl);
        for i in 0..lvl {
            let p = self.prime(i);
            for j in 0..self.n() {
                acc.c[i][j] = add_mod(acc.c[i][j], mul_mod(a.c[i][j], b.c[i][j], p), p);
            }
        }
    }

    pub fn ntt_add_acc(&self, acc: &mut NttPoly, a: &NttPoly) {
        for i in 0..acc.level() {
            let p = self.prime(i);
            for j in 0..self.n() {
                acc.c[i][j] = add_mod(acc.c[i][j], a.c[i][j], p);
            }
        }
    }

    /// Full polynomial product via NTT.
    pub fn mul(&self, a: &RingElem, b: &RingElem) -> RingElem {
        let r = self.ntt_mul(&self.to_ntt(a), &self.to_ntt(b));
        self.from_ntt(&r)
    }

    /// Truncates a prepared NTT operand to `level` primes.
    pub fn ntt_truncate(&self, a: &NttPoly, level: usize) -> NttPoly {
        assert!(level <= a.level());
        NttPoly { c: a.c[..level].to_vec() }
    }

    pub fn truncate(&self, a: &RingElem, level: usize) -> RingElem {
        assert!(level <= a.level());
        RingElem { c: a.c[..level].to_vec() }
    }

    // ---- automorphisms ----

    /// Galois map X → X^k (k odd). Negacyclic: X^N = −1.
    pub fn automorphism(&self, a: &RingElem, k: usize) -> RingElem {
        let n = self.n();
        let two_n = 2 * n;
        assert_eq!(k % 2, 1);
        let mut r = self.zero(a.level());
        for (i, row) in a.c.iter().enumerate() {
            let p = self.prime(i);
            for (j, &v) in row.iter().enumerate() {
                let idx = (j * k) % two_n;
                if idx < n {
                    r.c[i][idx] = add_mod(r.c[i][idx], v, p);
                } else {
                    r.c[i][idx - n] = sub_mod(r.c[i][idx - n], v, p);
                }
            }
        }
        r
    }

    // ---- rescale ----

    /// Drops the top prime: returns (x − [x]_{p_top}) / p_top per coefficient,
    /// with [·] the centered remainder. Exact RNS division.
    pub fn rescale(&self, a: &RingElem) -> RingElem {
        let lvl = a.level();
        assert!(lvl >= 2, "cannot rescale at level 1");
        let top = lvl - 1;
        let p_top = self.prime(top);
        let half = p_top / 2;
        let mut r = self.zero(top);
        for i in 0..top {
            let p = self.prime(i);
            let inv = self.rescale_inv[top][i];
            for j in 0..self.n() {
                let rt = a.c[top][j];
                // Centered remainder of x mod p_top, lifted into Z_p.
                let rt_mod_p = if rt > half {
                    // rt − p_top is negative; add p to stay in range.
                    sub_mod(rt % p, p_top % p, p)
                } else {
                    rt % p
                };
                let diff = sub_mod(a.c[i][j], rt_mod_p, p);
                r.c[i][j] = mul_mod(diff, inv, p);
            }
        }
        r
    }

    // ---- centered recomposition (Garner) ----

    /// Mixed-radix digits of each coefficient; digit j is mod primes[j].
    fn garner_digits(&self, a: &RingElem, j: usize) -> Vec<u64> {
        let res: Vec<u64> = (0..a.level()).map(|t| a.c[t][j]).collect();
        self.residues_garner(&res)
    }

    /// Mixed-radix digits of one RNS residue vector (a single Z_q scalar).
    pub fn residues_garner(&self, res: &[u64]) -> Vec<u64> {
        let lvl = res.len();
        let mut v = vec![0u64; lvl];
        for t in 0..lvl {
            let p = self.prime(t);
            let mut x = res[t] % p;
            for i in 0..t {
                x = mul_mod(sub_mod(x, v[i] % p, p), self.inv_pair[i][t], p);
            }
            v[t] = x;
        }
        v
    }

    /// Canonical value in [0, q_level) of an RNS scalar.
    pub fn residues_canonical(&self, res: &[u64]) -> BigUint {
        let v = self.residues_garner(res);
        let mut acc = BigUint::zero();
        let mut base = BigUint::one();
        for (t, &d) in v.iter().enumerate() {
            acc += &base * BigUint::from(d);
            base *= BigUint::from(self.prime(t));
        }
        acc
    }

    /// RNS residues of a canonical value, at the given level.
    pub fn residues_from_canonical(&self, v: &BigUint, level: usize) -> Vec<u64> {
        (0..level).map(|t| (v % BigUint::from(self.prime(t))).to_u64_digits().first().copied().unwrap_or(0)).collect()
    }

    /// Canonical coefficient in [0, q) as a big integer.
    pub fn coeff_canonical(&self, a: &RingElem, j: usize) -> BigUint {
        let v = self.garner_digits(a, j);
        let mut acc = BigUint::zero();
        let mut base = BigUint::one();
        for (t, &d) in v.iter().enumerate() {
            acc += &base * BigUint::from(d);
            base *= BigUint::from(self.prime(t));
        }
        acc
    }

    /// Centered coefficient in (−q/2, q/2].
    pub fn coeff_centered(&self, a: &RingElem, j: usize) -> BigInt {
        let q = self.params.modulus_at(a.level());
        let x = self.coeff_canonical(a, j);
        let xb = BigInt::from(x);
        let qb = BigInt::from(q);
        if &xb * 2 > qb {
            xb - qb
        } else {
            xb
        }
    }

    /// All centered coefficients.
    pub fn centered(&self, a: &RingElem) -> Vec<BigInt> {
        (0..self.n()).map(|j| self.coeff_centered(a, j)).collect()
    }

    /// Centered coefficients, asserting they fit in i64.
    pub fn centered_small(&self, a: &RingElem) -> SmallPoly {
        SmallPoly(
            self.centered(a)
                .iter()
                .map(|x| i64::try_from(x).expect("coefficient too large for small view"))
                .collect(),
        )
    }

    pub fn inf_norm(&self, a: &RingElem) -> BigUint {
        self.centered(a)
            .iter()
            .map(|x| x.abs().to_biguint().unwrap())
            .max()
            .unwrap()
    }

    // ---- sampling ----

    pub fn sample_uniform(&self, level: usize, rng: &mut dyn RngCore) -> RingElem {
        let mut e = self.zero(level);
        for i in 0..level {
            let p = self.prime(i);
            for x in e.c[i].iter_mut() {
                *x = uniform_below(p, rng);
            }
        }
        e
    }

    pub fn sample_uniform_ntt(&self, level: usize, rng: &mut dyn RngCore) -> NttPoly {
        // Uniform in either domain; sampling directly in NTT form saves a pass.
        NttPoly { c: self.sample_uniform(level, rng).c }
    }

    /// i.i.d. ternary with P(±1) = 1/4 each, P(0) = 1/2.
    pub fn sample_ternary_dense(&self, rng: &mut dyn RngCore) -> SmallPoly {
        let mut s = SmallPoly::zero(self.n());
        for x in s.0.iter_mut() {
            *x = match rng.next_u32() & 3 {
                0 => 1,
                1 => -1,
                _ => 0,
            };
        }
        s
    }

    /// Ternary with exactly `h` nonzero coefficients, signs uniform.
    pub fn sample_ternary_hw(&self, h: usize, rng: &mut dyn RngCore) -> SmallPoly {
        let n = self.n();
        assert!(h <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..h {
            let j = i + (uniform_below((n - i) as u64, rng) as usize);
            idx.swap(i, j);
        }
        let mut s = SmallPoly::zero(n);
        for &i in &idx[..h] {
            s.0[i] = if rng.next_u32() & 1 == 0 { 1 } else { -1 };
        }
        s
    }

    /// Discrete Gaussian (σ fixed by caller) truncated at ±⌈6σ⌉, via
    /// inverse-CDF over the integer support. Deterministic given the RNG.
    pub fn sample_gaussian(&self, sigma: f64, rng: &mut dyn RngCore) -> SmallPoly {
        let bound = (6.0 * sigma).ceil() as i64;
        let table = gaussian_cdf_table(sigma, bound);
        let mut s = SmallPoly::zero(self.n());
        for x in s.0.iter_mut() {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let k = table.partition_point(|&c| c < u) as i64;
            *x = k - bound;
        }
        s
    }
}

fn gaussian_cdf_table(sigma: f64, bound: i64) -> Vec<f64> {
    let mut weights = Vec::with_capacity((2 * bound + 1) as usize);
    for k in -bound..=bound {
        let x = k as f64 / sigma;
        weights.push((-0.5 * x * x).exp());
    }
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

pub fn uniform_below(p: u64, rng: &mut dyn RngCore) -> u64 {
    let zone = u64::MAX - u64::MAX % p;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % p;
        }
    }
}

// ---- serialization ----

impl RingContext {
    /// Packs the canonical (recomposed) coefficients at the fixed width
    /// ⌈log2 q⌉ for the element's level, MSB first, into `bw`.
    pub fn pack_coeffs(&self, a: &RingElem, bw: &mut BitWriter) {
        let width = self.params.log2_q_at(a.level());
        if a.level() == 1 {
            for j in 0..self.n() {
                bw.push_u64(a.c[0][j], width);
            }
        } else {
            for j in 0..self.n() {
                bw.push_biguint(&self.coeff_canonical(a, j), width);
            }
        }
    }

    pub fn unpack_coeffs(&self, br: &mut BitReader, level: usize) -> Result<RingElem> {
        let width = self.params.log2_q_at(level);
        let mut e = self.zero(level);
        if level == 1 {
            let p = self.prime(0);
            for j in 0..self.n() {
                let v = br.read_u64(width)?;
                if v >= p {
                    return Err(Error::Malformed("coefficient out of range".into()));
                }
                e.c[0][j] = v;
            }
        } else {
            let q = self.params.modulus_at(level);
            for j in 0..self.n() {
                let v = br.read_biguint(width)?;
                if v >= q {
                    return Err(Error::Malformed("coefficient out of range".into()));
                }
                for i in 0..level {
                    let p = BigUint::from(self.prime(i));
                    let r = (&v % &p).to_u64_digits();
                    e.c[i][j] = r.first().copied().unwrap_or(0);
                }
            }
        }
        Ok(e)
    }

    pub fn serialize_elem(&self, a: &RingElem) -> Vec<u8> {
        let mut w = Writer::with_header(Tag::RingElem);
        w.put_u32(self.n() as u32);
        w.put_u8(a.level() as u8);
        let mut bw = BitWriter::new();
        self.pack_coeffs(a, &mut bw);
        w.put_blob(&bw.finish());
        w.finish()
    }

    pub fn deserialize_elem(&self, bytes: &[u8]) -> Result<RingElem> {
        let mut r = Reader::expect_header(bytes, Tag::RingElem)?;
        let n = r.get_u32()? as usize;
        if n != self.n() {
            return Err(Error::Malformed(format!("ring degree {n} ≠ {}", self.n())));
        }
        let level = r.get_u8()? as usize;
        if level == 0 || level > self.max_level() {
            return Err(Error::Malformed(format!("bad level {level}")));
        }
        let blob = r.get_blob()?;
        let expect = wire::bytes_for_bits(self.params.log2_q_at(level) * n);
        if blob.len() != expect {
            return Err(Error::Malformed("coefficient blob size mismatch".into()));
        }
        let mut br = BitReader::new(blob);
        let e = self.unpack_coeffs(&mut br, level)?;
        r.finish()?;
        Ok(e)
    }
}
