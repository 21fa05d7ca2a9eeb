//! Exactly-linear slot encoding.
//!
//! CKKS packs N/2 real slots into a degree-N polynomial. The usual encoder
//! applies a float inverse-FFT and rounds at the end, which makes the
//! coefficient vector a *non-linear* function of the slots — hopeless to
//! reproduce inside a proof circuit. Here the rounding is moved into a fixed
//! integer matrix instead:
//!
//!   E[k][j] = round(Δ · (2/N) · cos(π · u_j · k / N)),  u_j = 5^j mod 2N,
//!
//! so that integer slot vectors encode as m = E·z mod q — an exact linear map
//! a circuit can evaluate with public constants. Decoding evaluates the
//! centered polynomial at the embedding points; the per-entry rounding of E
//! only perturbs decoded slots at relative O(N/Δ).

use crate::ring::{RingContext, RingElem};

pub struct Encoder {
    pub n: usize,
    /// Base scale Δ baked into the integer matrix.
    pub delta: f64,
    /// u_j = 5^j mod 2N for j < N/2 (slot-to-root index map).
    rot_group: Vec<usize>,
    /// cos(π t / N) for t < 2N.
    cos_tab: Vec<f64>,
    /// sin(π t / N) for t < 2N.
    sin_tab: Vec<f64>,
}

impl Encoder {
    pub fn new(n: usize, delta: f64) -> Self {
        assert!(n.is_power_of_two() && n >= 4);
        let two_n = 2 * n;
        let mut rot_group = Vec::with_capacity(n / 2);
        let mut u = 1usize;
        for _ in 0..n / 2 {
            rot_group.push(u);
            u = (u * 5) % two_n;
        }
        let cos_tab = (0..two_n).map(|t| (std::f64::consts::PI * t as f64 / n as f64).cos()).collect();
        let sin_tab = (0..two_n).map(|t| (std::f64::consts::PI * t as f64 / n as f64).sin()).collect();
        Encoder { n, delta, rot_group, cos_tab, sin_tab }
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Matrix entry E[k][j].
    pub fn e_entry(&self, k: usize, j: usize) -> i64 {
        let t = (self.rot_group[j] * k) % (2 * self.n);
        (self.delta * 2.0 / self.n as f64 * self.cos_tab[t]).round() as i64
    }

    /// Column j of E (length N). This is the coefficient vector contributed
    /// by slot j; circuits use it as a public constant.
    pub fn e_column(&self, j: usize) -> Vec<i64> {
        (0..self.n).map(|k| self.e_entry(k, j)).collect()
    }

    /// Exact integer encoding m = E·z of integer slots (len ≤ N/2, rest 0).
    pub fn encode_ints(&self, ctx: &RingContext, z: &[i64], level: usize) -> RingElem {
        assert!(z.len() <= self.slots());
        assert_eq!(ctx.n(), self.n);
        let mut coeffs = vec![0i128; self.n];
        for (j, &zj) in z.iter().enumerate() {
            if zj == 0 {
                continue;
            }
            let u = self.rot_group[j];
            for (k, c) in coeffs.iter_mut().enumerate() {
                let t = (u * k) % (2 * self.n);
                let e = (self.delta * 2.0 / self.n as f64 * self.cos_tab[t]).round() as i128;
                *c += e * zj as i128;
            }
        }
        let mut out = ctx.zero(level);
        for i in 0..level {
            let p = ctx.prime(i) as i128;
            for (k, &c) in coeffs.iter().enumerate() {
                out.c[i][k] = c.rem_euclid(p) as u64;
            }
        }
        out
    }

    /// Float encoding of real slots at an explicit scale (used for public
    /// multiplier polynomials, not for proved data).
    pub fn encode_real(&self, ctx: &RingContext, z: &[f64], scale: f64, level: usize) -> RingElem {
        assert!(z.len() <= self.slots());
        let mut coeffs = vec![0i128; self.n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (j, &zj) in z.iter().enumerate() {
                if zj == 0.0 {
                    continue;
                }
                let t = (self.rot_group[j] * k) % (2 * self.n);
                acc += zj * self.cos_tab[t];
            }
            *c = (scale * 2.0 / self.n as f64 * acc).round() as i128;
        }
        let mut out = ctx.zero(level);
        for i in 0..level {
            let p = ctx.prime(i) as i128;
            for (k, &c) in coeffs.iter().enumerate() {
                out.c[i][k] = c.rem_euclid(p) as u64;
            }
        }
        out
    }

    /// Decoded slots (real parts) of `m` interpreted at the given scale.
    pub fn decode(&self, ctx: &RingContext, m: &RingElem, scale: f64) -> Vec<f64> {
        self.decode_complex(ctx, m, scale).into_iter().map(|(re, _)| re).collect()
    }

    /// Decoded slots with imaginary parts (which measure encoding noise for
    /// real data).
    pub fn decode_complex(&self, ctx: &RingContext, m: &RingElem, scale: f64) -> Vec<(f64, f64)> {
        assert_eq!(ctx.n(), self.n);
        use num_traits::ToPrimitive;
        let centered = ctx.centered(m);
        let coeffs: Vec<f64> = centered.iter().map(|c| c.to_f64().unwrap()).collect();
        let two_n = 2 * self.n;
        (0..self.slots())
            .map(|j| {
                let u = self.rot_group[j];
                let mut re = 0.0;
                let mut im = 0.0;
                for (k, &c) in coeffs.iter().enumerate() {
                    let t = (u * k) % two_n;
                    re += c * self.cos_tab[t];
                    im += c * self.sin_tab[t];
                }
                (re / scale, im / scale)
            })
            .collect()
    }
}
