//! Ring/modulus parameters and deterministic NTT-friendly prime generation.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::One;

/// Standard deviation of the error distribution used throughout.
pub const SIGMA: f64 = 3.2;

/// Infinity-norm bound for 6σ-truncated Gaussian samples: ⌈6σ⌉.
pub const GAUSS_BOUND: i64 = 20;

/// Deterministic Miller-Rabin, valid for all 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Largest `count` primes of exactly `bits` bits congruent to 1 mod `modulus`,
/// in descending order. Deterministic.
pub fn find_ntt_primes(bits: u32, count: usize, modulus: u64) -> Result<Vec<u64>> {
    if bits < 4 || bits > 61 {
        return Err(Error::InvalidParams(format!("prime size {bits} bits")));
    }
    let hi = 1u64 << bits;
    let lo = 1u64 << (bits - 1);
    let mut out = Vec::with_capacity(count);
    let mut k = (hi - 2) / modulus;
    while out.len() < count {
        let p = match k.checked_mul(modulus) {
            Some(v) => v + 1,
            None => return Err(Error::InvalidParams("prime search overflow".into())),
        };
        if p < lo {
            return Err(Error::InvalidParams(format!(
                "not enough {bits}-bit primes ≡ 1 mod {modulus}"
            )));
        }
        if p < hi && is_prime_u64(p) {
            out.push(p);
        }
        if k == 0 {
            return Err(Error::InvalidParams("prime search exhausted".into()));
        }
        k -= 1;
    }
    Ok(out)
}

/// Cyclotomic ring parameters: R_q = Z_q[X]/(X^N + 1) with q = Π primes,
/// held in RNS form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingParams {
    pub n: usize,
    pub primes: Vec<u64>,
}

impl RingParams {
    pub fn new(n: usize, primes: Vec<u64>) -> Result<Self> {
        let p = RingParams { n, primes };
        p.validate()?;
        Ok(p)
    }

    /// Builds a chain of `sizes.len()` primes with the given bit sizes,
    /// largest level last dropped first. Equal sizes draw successive primes.
    pub fn with_prime_bits(n: usize, sizes: &[u32]) -> Result<Self> {
        let two_n = 2 * n as u64;
        let mut counts = std::collections::BTreeMap::new();
        for &b in sizes {
            *counts.entry(b).or_insert(0usize) += 1;
        }
        let mut pool: std::collections::BTreeMap<u32, Vec<u64>> = counts
            .iter()
            .map(|(&b, &c)| Ok((b, find_ntt_primes(b, c, two_n)?)))
            .collect::<Result<_>>()?;
        let mut primes = Vec::with_capacity(sizes.len());
        for &b in sizes {
            primes.push(pool.get_mut(&b).unwrap().remove(0));
        }
        RingParams::new(n, primes)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 4 {
            return Err(Error::InvalidParams(format!("N = {} not a power of two ≥ 4", self.n)));
        }
        if self.primes.is_empty() {
            return Err(Error::InvalidParams("empty prime chain".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &p in &self.primes {
            if !is_prime_u64(p) {
                return Err(Error::InvalidParams(format!("{p} is not prime")));
            }
            if p % (2 * self.n as u64) != 1 {
                return Err(Error::InvalidParams(format!(
                    "{p} ≢ 1 mod 2N = {}",
                    2 * self.n
                )));
            }
            if p >= 1 << 62 {
                return Err(Error::InvalidParams(format!("{p} too large")));
            }
            if !seen.insert(p) {
                return Err(Error::InvalidParams(format!("duplicate prime {p}")));
            }
        }
        Ok(())
    }

    /// Full modulus q = Π primes at the given level (number of active primes).
    pub fn modulus_at(&self, level: usize) -> BigUint {
        assert!(level >= 1 && level <= self.primes.len());
        self.primes[..level]
            .iter()
            .fold(BigUint::one(), |acc, &p| acc * BigUint::from(p))
    }

    pub fn modulus(&self) -> BigUint {
        self.modulus_at(self.primes.len())
    }

    /// ⌈log2 q⌉ at a level: the fixed per-coefficient serialization width.
    pub fn log2_q_at(&self, level: usize) -> usize {
        let q = self.modulus_at(level);
        let m1: BigUint = q - BigUint::one();
        m1.bits() as usize
    }

    pub fn log2_q(&self) -> usize {
        self.log2_q_at(self.primes.len())
    }

    pub fn levels(&self) -> usize {
        self.primes.len()
    }
}

/// The small test instance used across unit tests: N = 4, q = 17.
pub fn toy_ring() -> RingParams {
    RingParams::new(4, vec![17]).unwrap()
}
