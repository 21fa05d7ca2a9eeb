//! Additively homomorphic lattice commitment and the Σ-protocol proof that a
//! committed vector has small norm, made non-interactive via Fiat–Shamir.
//!
//! Commitment: for public A1 = [I_n ‖ A1'] and A2 = [0 ‖ I_{l_c} ‖ A2'],
//! BDOP(m, r_c) = (A1·r_c ; A2·r_c + m) with r_c ← S_β^k. The norm proof
//! commits to masks (μ, ρ) with t = BDOP(μ, ρ), binds t under a hash
//! commitment c_aux, derives binary challenges d from all c_aux, and opens
//! z = μ + d·m, r_z = ρ + d·r_c. Masks are drawn uniformly from the window
//! [−(β_μ−β_x), β_μ−β_x] (resp. β_ρ−β), so d=0 never aborts and the
//! worst-case abort rate stays below 2/γ + 2/γ_x; aborted iterations are
//! re-masked and all challenges re-derived until the transcript is clean.

use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};
use crate::ring::{NttPoly, RingContext, RingElem, SmallPoly};
use crate::wire::{self, BitReader, BitWriter, Reader, Tag, Writer};
use crate::xof::{derive_seed, sha256, Xof};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Commitment parameters; A1', A2' are expanded deterministically from a seed.
pub struct CommitParams {
    pub n: usize,
    pub k: usize,
    pub l_c: usize,
    /// Infinity-norm bound on commitment randomness.
    pub beta: i64,
    /// Infinity-norm bound on challenge polynomials (challenge-space check).
    pub beta_c: i64,
    pub seed: [u8; 32],
    /// A1': n × (k−n), prepared in the NTT domain at full level.
    a1p: Vec<Vec<NttPoly>>,
    /// A2': l_c × (k−n−l_c).
    a2p: Vec<Vec<NttPoly>>,
}

impl CommitParams {
    pub fn generate(
        ctx: &RingContext,
        n: usize,
        k: usize,
        l_c: usize,
        beta: i64,
        beta_c: i64,
        seed: [u8; 32],
    ) -> Result<Self> {
        let cp = Self::generate_unvalidated(ctx, n, k, l_c, beta, beta_c, seed)?;
        cp.validate_challenge_space(ctx)?;
        Ok(cp)
    }

    /// Test-scale constructor: skips the 2^256 challenge-space assertion,
    /// which no toy-sized ring can meet.
    pub fn generate_toy(
        ctx: &RingContext,
        n: usize,
        k: usize,
        l_c: usize,
        beta: i64,
        seed: [u8; 32],
    ) -> Result<Self> {
        Self::generate_unvalidated(ctx, n, k, l_c, beta, 1, seed)
    }

    fn generate_unvalidated(
        ctx: &RingContext,
        n: usize,
        k: usize,
        l_c: usize,
        beta: i64,
        beta_c: i64,
        seed: [u8; 32],
    ) -> Result<Self> {
        if k <= n + l_c {
            return Err(Error::InvalidParams(format!("k = {k} must exceed n + l_c = {}", n + l_c)));
        }
        if beta < 1 || beta_c < 1 {
            return Err(Error::InvalidParams("norm bounds must be ≥ 1".into()));
        }
        let full = ctx.max_level();
        let expand = |domain: String| -> NttPoly {
            let mut rng = ChaCha20Rng::from_seed(derive_seed(&seed, &domain));
            ctx.to_ntt(&ctx.sample_uniform(full, &mut rng))
        };
        let a1p = (0..n)
            .map(|i| (0..k - n).map(|j| expand(format!("bdop/A1/{i}/{j}"))).collect())
            .collect();
        let a2p = (0..l_c)
            .map(|i| (0..k - n - l_c).map(|j| expand(format!("bdop/A2/{i}/{j}"))).collect())
            .collect();
        Ok(CommitParams { n, k, l_c, beta, beta_c, seed, a1p, a2p })
    }

    /// Row i of A1' (the non-identity block of A1), NTT-prepared.
    pub fn a1_row(&self, i: usize) -> &[NttPoly] {
        &self.a1p[i]
    }

    /// Row i of A2' (the block multiplying the last k−n−l_c randomness rows).
    pub fn a2_row(&self, i: usize) -> &[NttPoly] {
        &self.a2p[i]
    }

    /// Challenge-space cardinality check: (β_c+1)^N · (1 − N·L / 2^{l_min}) ≥
    /// 2^256, with L the number of RNS primes and l_min the bit size of the
    /// smallest one (invertibility margin under a composite modulus).
    pub fn validate_challenge_space(&self, ctx: &RingContext) -> Result<()> {
        let n_ring = ctx.n() as f64;
        let levels = ctx.max_level() as f64;
        let l_min = ctx.params.primes.iter().map(|&p| 64 - p.leading_zeros()).min().unwrap();
        let frac = 1.0 - n_ring * levels / 2f64.powi(l_min as i32);
        if frac <= 0.0 {
            return Err(Error::InvalidParams("challenge space: invertibility margin vanishes".into()));
        }
        let bits = n_ring * ((self.beta_c + 1) as f64).log2() + frac.log2();
        if bits < 256.0 {
            return Err(Error::InvalidParams(format!(
                "challenge space too small: 2^{bits:.1} < 2^256"
            )));
        }
        Ok(())
    }
}

/// BDOP commitment: c1 (n rows), c2 (l_c rows).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub c1: Vec<RingElem>,
    pub c2: Vec<RingElem>,
}

/// Uniform randomness vector from S_β^k.
pub fn sample_commit_randomness(
    ctx: &RingContext,
    k: usize,
    beta: i64,
    rng: &mut dyn RngCore,
) -> Vec<SmallPoly> {
    (0..k).map(|_| sample_window(ctx.n(), beta, rng)).collect()
}

/// Uniform polynomial with coefficients in [−bound, bound].
fn sample_window(n: usize, bound: i64, rng: &mut dyn RngCore) -> SmallPoly {
    let width = 2 * bound as u64 + 1;
    SmallPoly((0..n).map(|_| crate::ring::uniform_below(width, rng) as i64 - bound).collect())
}

/// The raw linear map (A1·r ; A2·r + m) without norm checks.
pub fn apply(ctx: &RingContext, cp: &CommitParams, m: &[SmallPoly], r: &[SmallPoly]) -> Commitment {
    assert_eq!(m.len(), cp.l_c);
    assert_eq!(r.len(), cp.k);
    let full = ctx.max_level();
    let r_elems: Vec<RingElem> = r.iter().map(|p| ctx.lift_small(p, full)).collect();
    // NTT forms of the mixed part r_n..r_{k-1}, shared by both matrix halves.
    let r_tail: Vec<NttPoly> = r_elems[cp.n..].iter().map(|e| ctx.to_ntt(e)).collect();

    let c1 = (0..cp.n)
        .map(|i| {
            let mut acc = ctx.ntt_zero(full);
            for (j, a) in cp.a1p[i].iter().enumerate() {
                ctx.ntt_mul_acc(&mut acc, &r_tail[j], a);
            }
            ctx.add(&r_elems[i], &ctx.from_ntt(&acc))
        })
        .collect();
    let c2 = (0..cp.l_c)
        .map(|i| {
            let mut acc = ctx.ntt_zero(full);
            for (j, a) in cp.a2p[i].iter().enumerate() {
                ctx.ntt_mul_acc(&mut acc, &r_tail[cp.l_c + j], a);
            }
            let mixed = ctx.add(&r_elems[cp.n + i], &ctx.from_ntt(&acc));
            ctx.add(&mixed, &ctx.lift_small(&m[i], full))
        })
        .collect();
    Commitment { c1, c2 }
}

/// Commits to m under fresh randomness r_c with ‖r_c‖∞ ≤ β enforced.
pub fn commit(ctx: &RingContext, cp: &CommitParams, m: &[SmallPoly], r: &[SmallPoly]) -> Result<Commitment> {
    for (i, ri) in r.iter().enumerate() {
        if ri.inf_norm() > cp.beta {
            return Err(Error::InvalidParams(format!(
                "randomness row {i} norm {} exceeds β = {}",
                ri.inf_norm(),
                cp.beta
            )));
        }
    }
    Ok(apply(ctx, cp, m, r))
}

pub fn verify_open(
    ctx: &RingContext,
    cp: &CommitParams,
    c: &Commitment,
    m: &[SmallPoly],
    r: &[SmallPoly],
) -> bool {
    if r.iter().any(|ri| ri.inf_norm() > cp.beta) {
        return false;
    }
    apply(ctx, cp, m, r) == *c
}

pub fn commitment_add(ctx: &RingContext, a: &Commitment, b: &Commitment) -> Commitment {
    Commitment {
        c1: a.c1.iter().zip(&b.c1).map(|(x, y)| ctx.add(x, y)).collect(),
        c2: a.c2.iter().zip(&b.c2).map(|(x, y)| ctx.add(x, y)).collect(),
    }
}

pub fn serialize_commitment(ctx: &RingContext, c: &Commitment) -> Vec<u8> {
    let mut w = Writer::with_header(Tag::Commitment);
    w.put_u8(c.c1.len() as u8);
    w.put_u8(c.c2.len() as u8);
    let mut bw = BitWriter::new();
    for row in c.c1.iter().chain(&c.c2) {
        ctx.pack_coeffs(row, &mut bw);
    }
    w.put_blob(&bw.finish());
    w.finish()
}

pub fn deserialize_commitment(ctx: &RingContext, bytes: &[u8]) -> Result<Commitment> {
    let mut r = Reader::expect_header(bytes, Tag::Commitment)?;
    let n = r.get_u8()? as usize;
    let l_c = r.get_u8()? as usize;
    let blob = r.get_blob()?;
    let full = ctx.max_level();
    let width = ctx.params.log2_q_at(full);
    if blob.len() != wire::bytes_for_bits((n + l_c) * ctx.n() * width) {
        return Err(Error::Malformed("commitment blob size".into()));
    }
    let mut br = BitReader::new(blob);
    let mut rows = Vec::with_capacity(n + l_c);
    for _ in 0..n + l_c {
        rows.push(ctx.unpack_coeffs(&mut br, full)?);
    }
    r.finish()?;
    let c2 = rows.split_off(n);
    Ok(Commitment { c1: rows, c2 })
}

// ---- norm-bound proof ----

#[derive(Debug, Clone)]
pub struct BoundProofParams {
    pub gamma: i64,
    pub gamma_x: i64,
    /// Honest bound on the committed message coefficients.
    pub beta_x: i64,
    pub beta_mu: i64,
    pub beta_rho: i64,
    pub iterations: usize,
}

impl BoundProofParams {
    pub fn new(gamma: i64, gamma_x: i64, beta_x: i64, beta: i64, ring_n: usize, kappa: usize) -> Result<Self> {
        if gamma < 4 || gamma_x < 4 {
            return Err(Error::InvalidParams("γ too small for the abort bound".into()));
        }
        let n = ring_n as i64;
        let p = BoundProofParams {
            gamma,
            gamma_x,
            beta_x,
            beta_mu: gamma_x * n * beta_x,
            beta_rho: gamma * n * beta,
            iterations: kappa,
        };
        if p.beta_mu <= p.beta_x || p.beta_rho <= beta {
            return Err(Error::InvalidParams("mask windows collapse".into()));
        }
        Ok(p)
    }

    /// Default abort-control constants.
    pub fn standard(beta_x: i64, beta: i64, ring_n: usize, kappa: usize) -> Result<Self> {
        Self::new(64, 64, beta_x, beta, ring_n, kappa)
    }

    /// Verifier's relaxed norm bound on z.
    pub fn z_bound(&self, ring_n: usize) -> i64 {
        self.beta_mu + self.beta_x * ring_n as i64
    }

    pub fn rz_bound(&self, ring_n: usize, beta: i64) -> i64 {
        self.beta_rho + beta * ring_n as i64
    }
}

#[derive(Debug, Clone)]
pub struct BoundProofIter {
    pub t: Commitment,
    pub r_aux: [u8; 16],
    pub z: Vec<SmallPoly>,
    pub r_z: Vec<SmallPoly>,
}

#[derive(Debug, Clone)]
pub struct BoundProof {
    pub iters: Vec<BoundProofIter>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoundProveStats {
    /// Total iteration executions, including re-runs.
    pub attempts: usize,
    /// Iteration executions discarded by rejection sampling.
    pub aborts: usize,
}

pub(crate) fn aux_commit(ctx: &RingContext, t: &Commitment, r_aux: &[u8; 16]) -> [u8; 32] {
    let mut bytes = serialize_commitment(ctx, t);
    bytes.extend_from_slice(r_aux);
    sha256(&bytes)
}

pub(crate) fn challenge_bits(context: &[u8], c_auxs: &[[u8; 32]], count: usize) -> Vec<bool> {
    let mut data = Vec::with_capacity(context.len() + 32 * c_auxs.len());
    data.extend_from_slice(context);
    for c in c_auxs {
        data.extend_from_slice(c);
    }
    let digest = sha256(&data);
    let mut xof = Xof::new(&digest);
    (0..count).map(|_| xof.next_bit()).collect()
}

struct MaskedIter {
    mu: Vec<SmallPoly>,
    rho: Vec<SmallPoly>,
    t: Commitment,
    r_aux: [u8; 16],
    c_aux: [u8; 32],
}

fn draw_iter(
    ctx: &RingContext,
    cp: &CommitParams,
    bp: &BoundProofParams,
    seed: &[u8; 32],
    iter: usize,
    attempt: u64,
) -> MaskedIter {
    let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, &format!("bound/mask/{iter}/{attempt}")));
    let n = ctx.n();
    let mu: Vec<SmallPoly> = (0..cp.l_c).map(|_| sample_window(n, bp.beta_mu - bp.beta_x, &mut rng)).collect();
    let rho: Vec<SmallPoly> = (0..cp.k).map(|_| sample_window(n, bp.beta_rho - cp.beta, &mut rng)).collect();
    let t = apply(ctx, cp, &mu, &rho);
    let mut r_aux = [0u8; 16];
    rng.fill_bytes(&mut r_aux);
    let c_aux = aux_commit(ctx, &t, &r_aux);
    MaskedIter { mu, rho, t, r_aux, c_aux }
}

/// Proves ‖m‖∞ ≤ β_x (soundness: accepted proofs imply ≤ γ_x·N·β_x).
pub fn bound_prove(
    ctx: &RingContext,
    cp: &CommitParams,
    bp: &BoundProofParams,
    m: &[SmallPoly],
    r_c: &[SmallPoly],
    c: &Commitment,
    context: &[u8],
    seed: [u8; 32],
) -> Result<BoundProof> {
    bound_prove_with_stats(ctx, cp, bp, m, r_c, c, context, seed).map(|(p, _)| p)
}

#[allow(clippy::too_many_arguments)]
pub fn bound_prove_with_stats(
    ctx: &RingContext,
    cp: &CommitParams,
    bp: &BoundProofParams,
    m: &[SmallPoly],
    r_c: &[SmallPoly],
    c: &Commitment,
    context: &[u8],
    seed: [u8; 32],
) -> Result<(BoundProof, BoundProveStats)> {
    if m.iter().any(|p| p.inf_norm() > bp.beta_x) {
        return Err(Error::InvalidParams("secret exceeds β_x; refusing to prove".into()));
    }
    if !verify_open(ctx, cp, c, m, r_c) {
        return Err(Error::InvalidParams("commitment does not open to the given secret".into()));
    }

    let iters = bp.iterations;
    let mut attempts = vec![0u64; iters];
    let mut stats = BoundProveStats { attempts: iters, aborts: 0 };
    let mut masked: Vec<MaskedIter> =
        map_indexed(Parallelism::default(), iters, |i| draw_iter(ctx, cp, bp, &seed, i, 0));

    // Abort loop: any d=1 iteration whose response leaves the mask window is
    // re-masked, which re-derives every challenge bit; repeat to fixpoint.
    loop {
        let c_auxs: Vec<[u8; 32]> = masked.iter().map(|mi| mi.c_aux).collect();
        let d = challenge_bits(context, &c_auxs, iters);
        let mut aborted = Vec::new();
        for i in 0..iters {
            if !d[i] {
                continue;
            }
            let zw = bp.beta_mu - bp.beta_x;
            let rw = bp.beta_rho - cp.beta;
            let z_ok = masked[i].mu.iter().zip(m).all(|(mu, mm)| mu.add(mm).inf_norm() <= zw);
            let r_ok = masked[i].rho.iter().zip(r_c).all(|(rho, rr)| rho.add(rr).inf_norm() <= rw);
            if !(z_ok && r_ok) {
                aborted.push(i);
            }
        }
        if aborted.is_empty() {
            let proof = BoundProof {
                iters: masked
                    .into_iter()
                    .zip(&d)
                    .map(|(mi, &di)| {
                        let (z, r_z) = if di {
                            (
                                mi.mu.iter().zip(m).map(|(a, b)| a.add(b)).collect(),
                                mi.rho.iter().zip(r_c).map(|(a, b)| a.add(b)).collect(),
                            )
                        } else {
                            (mi.mu, mi.rho)
                        };
                        BoundProofIter { t: mi.t, r_aux: mi.r_aux, z, r_z }
                    })
                    .collect(),
            };
            return Ok((proof, stats));
        }
        stats.aborts += aborted.len();
        stats.attempts += aborted.len();
        let redrawn: Vec<MaskedIter> = map_indexed(Parallelism::default(), aborted.len(), |j| {
            let i = aborted[j];
            draw_iter(ctx, cp, bp, &seed, i, attempts[i] + 1)
        });
        for (j, mi) in redrawn.into_iter().enumerate() {
            let i = aborted[j];
            attempts[i] += 1;
            masked[i] = mi;
        }
    }
}

pub fn bound_verify(
    ctx: &RingContext,
    cp: &CommitParams,
    bp: &BoundProofParams,
    c: &Commitment,
    proof: &BoundProof,
    context: &[u8],
) -> bool {
    if proof.iters.len() != bp.iterations {
        return false;
    }
    let c_auxs: Vec<[u8; 32]> = proof.iters.iter().map(|it| aux_commit(ctx, &it.t, &it.r_aux)).collect();
    let d = challenge_bits(context, &c_auxs, bp.iterations);
    let n = ctx.n();
    let checks = map_indexed(Parallelism::default(), bp.iterations, |i| {
        let it = &proof.iters[i];
        if it.z.len() != cp.l_c || it.r_z.len() != cp.k {
            return false;
        }
        if it.z.iter().any(|p| p.inf_norm() > bp.z_bound(n)) {
            return false;
        }
        if it.r_z.iter().any(|p| p.inf_norm() > bp.rz_bound(n, cp.beta)) {
            return false;
        }
        let lhs = apply(ctx, cp, &it.z, &it.r_z);
        let rhs = if d[i] { commitment_add(ctx, &it.t, c) } else { it.t.clone() };
        lhs == rhs
    });
    checks.into_iter().all(|ok| ok)
}

// ---- serialization ----

fn signed_width(bound: i64) -> usize {
    // Offset representation of [−bound, bound].
    64 - (2 * bound as u64 + 1).leading_zeros() as usize
}

fn pack_small(bw: &mut BitWriter, p: &SmallPoly, bound: i64) {
    let w = signed_width(bound);
    for &v in &p.0 {
        debug_assert!(v.abs() <= bound);
        bw.push_u64((v + bound) as u64, w);
    }
}

fn unpack_small(br: &mut BitReader, n: usize, bound: i64) -> Result<SmallPoly> {
    let w = signed_width(bound);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = br.read_u64(w)? as i64 - bound;
        if v.abs() > bound {
            return Err(Error::Malformed("bound-proof coefficient out of range".into()));
        }
        out.push(v);
    }
    Ok(SmallPoly(out))
}

pub fn serialize_bound_proof(ctx: &RingContext, cp: &CommitParams, bp: &BoundProofParams, proof: &BoundProof) -> Vec<u8> {
    let n = ctx.n();
    let mut w = Writer::with_header(Tag::BoundProof);
    w.put_u16(proof.iters.len() as u16);
    let mut bw = BitWriter::new();
    for it in &proof.iters {
        for row in it.t.c1.iter().chain(&it.t.c2) {
            ctx.pack_coeffs(row, &mut bw);
        }
        for &b in &it.r_aux {
            bw.push_u64(b as u64, 8);
        }
        for p in &it.z {
            pack_small(&mut bw, p, bp.z_bound(n));
        }
        for p in &it.r_z {
            pack_small(&mut bw, p, bp.rz_bound(n, cp.beta));
        }
    }
    w.put_blob(&bw.finish());
    w.finish()
}

pub fn deserialize_bound_proof(
    ctx: &RingContext,
    cp: &CommitParams,
    bp: &BoundProofParams,
    bytes: &[u8],
) -> Result<BoundProof> {
    let mut r = Reader::expect_header(bytes, Tag::BoundProof)?;
    let iters = r.get_u16()? as usize;
    if iters != bp.iterations {
        return Err(Error::Malformed("iteration count mismatch".into()));
    }
    let blob = r.get_blob()?;
    if bytes.len() != bound_proof_size(ctx, cp, bp) {
        return Err(Error::Malformed("bound proof size mismatch".into()));
    }
    let n = ctx.n();
    let full = ctx.max_level();
    let mut br = BitReader::new(blob);
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut rows = Vec::with_capacity(cp.n + cp.l_c);
        for _ in 0..cp.n + cp.l_c {
            rows.push(ctx.unpack_coeffs(&mut br, full)?);
        }
        let c2 = rows.split_off(cp.n);
        let t = Commitment { c1: rows, c2 };
        let mut r_aux = [0u8; 16];
        for b in r_aux.iter_mut() {
            *b = br.read_u64(8)? as u8;
        }
        let z = (0..cp.l_c).map(|_| unpack_small(&mut br, n, bp.z_bound(n))).collect::<Result<_>>()?;
        let r_z = (0..cp.k)
            .map(|_| unpack_small(&mut br, n, bp.rz_bound(n, cp.beta)))
            .collect::<Result<_>>()?;
        out.push(BoundProofIter { t, r_aux, z, r_z });
    }
    r.finish()?;
    Ok(BoundProof { iters: out })
}

/// Exact serialized size in bytes; the serializer must match this.
pub fn bound_proof_size(ctx: &RingContext, cp: &CommitParams, bp: &BoundProofParams) -> usize {
    let n = ctx.n();
    let width = ctx.params.log2_q();
    let per_iter_bits = (cp.n + cp.l_c) * n * width
        + 128
        + cp.l_c * n * signed_width(bp.z_bound(n))
        + cp.k * n * signed_width(bp.rz_bound(n, cp.beta));
    // Header(6) + iter count(2) + blob length(4) + packed payload.
    6 + 2 + 4 + wire::bytes_for_bits(bp.iterations * per_iter_bits)
}
