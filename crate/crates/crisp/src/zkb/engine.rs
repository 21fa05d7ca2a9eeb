//! ZKB++ prover and verifier.
//!
//! Per iteration, three players evaluate the circuit on an additive sharing
//! of the witness. Players 0 and 1 derive their input shares and per-gate
//! randomness from seed tapes; player 2's input share is explicit. The proof
//! opens players e and e+1: their seeds, player e+1's recorded view of
//! non-local gate outputs, player 2's input share when it is among the
//! opened pair, and the unopened commitment. The third output share is
//! inferred from the public output and never serialized.
//!
//! Tape stream layout (fixed): input shares (players 0 and 1 only — rings,
//! then scalars, then Booleans), then one draw per non-local gate in gate
//! order. Every player's stream advances at every non-local gate, whether or
//! not that player's rule consumes the value.

use super::ir::{BoolSource, Circuit, Gate, Kind, OutVal, OutputValues, Witness};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};
use crate::ring::{add_mod, mul_mod, sub_mod, uniform_below, RingContext, RingElem};
use crate::wire::{self, BitReader, BitWriter, Reader, Tag, Writer};
use crate::xof::{derive_seed, Xof};
use num_bigint::BigUint;
use sha2::{Digest, Sha256};

/// Seed for one player's pseudorandom tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tape {
    pub seed: [u8; 16],
}

impl Tape {
    pub fn stream(&self) -> Xof {
        Xof::new(&self.seed)
    }
}

pub type IterationTapes = [Tape; 3];

/// Per-iteration tape seeds, all derived from the prover's master seed.
pub fn iteration_tapes(seed: &[u8; 32], iter: usize) -> IterationTapes {
    let mk = |j: usize| {
        let full = derive_seed(seed, &format!("zkb/tape/{iter}/{j}"));
        let mut s = [0u8; 16];
        s.copy_from_slice(&full[..16]);
        Tape { seed: s }
    };
    [mk(0), mk(1), mk(2)]
}

/// One player's input share, in circuit input order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerInput {
    pub rings: Vec<RingElem>,
    pub scalars: Vec<Vec<u64>>,
    pub bools: Vec<bool>,
}

/// One player's record of an execution, in serialized form.
#[derive(Debug, Clone)]
pub struct View {
    pub input_bytes: Vec<u8>,
    pub view_bytes: Vec<u8>,
    pub outputs: OutputValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterProof {
    pub c_hidden: [u8; 32],
    pub k_e: [u8; 16],
    pub k_e1: [u8; 16],
    /// Player 2's serialized input share; present iff player 2 is opened.
    pub x3: Option<Vec<u8>>,
    pub view: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZkProof {
    pub kappa: u16,
    pub circuit_hash: [u8; 32],
    /// One trit (0..2) per iteration.
    pub challenge: Vec<u8>,
    pub iters: Vec<IterProof>,
}

/// t(κ) = ⌈κ / log₂(3/2)⌉.
pub fn iterations(kappa: usize) -> usize {
    (kappa as f64 / (3f64.log2() - 1.0)).ceil() as usize
}

// ---- input sharing ----

fn draw_input(ctx: &RingContext, circuit: &Circuit, xof: &mut Xof) -> PlayerInput {
    let level = circuit.level;
    let rings = (0..circuit.ring_inputs.len()).map(|_| ctx.sample_uniform(level, xof)).collect();
    let scalars = (0..circuit.scalar_inputs.len())
        .map(|_| (0..level).map(|t| uniform_below(ctx.prime(t), xof)).collect())
        .collect();
    let bools = (0..circuit.bool_inputs.len()).map(|_| xof.next_bit()).collect();
    PlayerInput { rings, scalars, bools }
}

fn wrap_count(ctx: &RingContext, circuit: &Circuit, shares: &[&PlayerInput; 3], witness_canon: &BigUint, j: usize) -> u8 {
    let q = ctx.params.modulus_at(circuit.level);
    let sum: BigUint = shares
        .iter()
        .map(|s| ctx.residues_canonical(&s.scalars[j]))
        .sum();
    let w = (sum - witness_canon) / q;
    let w = u8::try_from(&w).expect("wrap count out of range");
    debug_assert!(w <= 2);
    w
}

/// Splits the witness into three shares; players 0 and 1 draw theirs from
/// tapes, player 2 takes the remainder. Wrap-count Boolean inputs are
/// evaluated against this very sharing.
pub fn share(
    ctx: &RingContext,
    circuit: &Circuit,
    witness: &Witness,
    tapes: &IterationTapes,
) -> [PlayerInput; 3] {
    assert_eq!(witness.rings.len(), circuit.ring_inputs.len());
    assert_eq!(witness.scalars.len(), circuit.scalar_inputs.len());
    let mut s0 = tapes[0].stream();
    let mut s1 = tapes[1].stream();
    let p0 = draw_input(ctx, circuit, &mut s0);
    let p1 = draw_input(ctx, circuit, &mut s1);

    let level = circuit.level;
    let rings = witness
        .rings
        .iter()
        .zip(p0.rings.iter().zip(&p1.rings))
        .map(|(x, (a, b))| ctx.sub(&ctx.sub(x, a), b))
        .collect();
    let scalars: Vec<Vec<u64>> = witness
        .scalars
        .iter()
        .zip(p0.scalars.iter().zip(&p1.scalars))
        .map(|(x, (a, b))| {
            (0..level)
                .map(|t| {
                    let p = ctx.prime(t);
                    sub_mod(sub_mod(x[t], a[t], p), b[t], p)
                })
                .collect()
        })
        .collect();

    // Boolean inputs: witness-sourced values come from the witness; wrap
    // bits are a function of the scalar sharing just fixed above.
    let p2_partial = PlayerInput { rings, scalars, bools: Vec::new() };
    let shares_ref = [&p0, &p1, &p2_partial];
    let mut wit_iter = witness.bools.iter();
    let mut bools = Vec::with_capacity(circuit.bool_inputs.len());
    let mut wrap_cache: Vec<Option<u8>> = vec![None; circuit.scalar_inputs.len()];
    for (i, src) in circuit.bool_sources.iter().enumerate() {
        let value = match src {
            BoolSource::Witness => *wit_iter.next().expect("missing bool witness value"),
            BoolSource::WrapBit { scalar_input, bit } => {
                let j = *scalar_input as usize;
                let w = *wrap_cache[j].get_or_insert_with(|| {
                    let canon = ctx.residues_canonical(&witness.scalars[j]);
                    wrap_count(ctx, circuit, &shares_ref, &canon, j)
                });
                (w >> bit) & 1 == 1
            }
        };
        bools.push(value ^ p0.bools[i] ^ p1.bools[i]);
    }
    let mut p2 = p2_partial;
    p2.bools = bools;
    [p0, p1, p2]
}

pub fn serialize_input(ctx: &RingContext, circuit: &Circuit, pi: &PlayerInput) -> Vec<u8> {
    let w = circuit.scalar_width(ctx);
    let mut bw = BitWriter::new();
    for r in &pi.rings {
        ctx.pack_coeffs(r, &mut bw);
    }
    for s in &pi.scalars {
        bw.push_biguint(&ctx.residues_canonical(s), w);
    }
    for &b in &pi.bools {
        bw.push_bit(b);
    }
    bw.finish()
}

fn parse_input(ctx: &RingContext, circuit: &Circuit, bytes: &[u8]) -> Result<PlayerInput> {
    let total_bits = circuit.input_share_bits(ctx);
    if bytes.len() != wire::bytes_for_bits(total_bits) {
        return Err(Error::Malformed("input share size".into()));
    }
    let w = circuit.scalar_width(ctx);
    let q = ctx.params.modulus_at(circuit.level);
    let mut br = BitReader::new(bytes);
    let rings = (0..circuit.ring_inputs.len())
        .map(|_| ctx.unpack_coeffs(&mut br, circuit.level))
        .collect::<Result<_>>()?;
    let mut scalars = Vec::with_capacity(circuit.scalar_inputs.len());
    for _ in 0..circuit.scalar_inputs.len() {
        let v = br.read_biguint(w)?;
        if v >= q {
            return Err(Error::Malformed("scalar share out of range".into()));
        }
        scalars.push(ctx.residues_from_canonical(&v, circuit.level));
    }
    let bools = (0..circuit.bool_inputs.len()).map(|_| br.read_bit()).collect::<Result<_>>()?;
    // Padding to the byte boundary must be zero (canonical encoding).
    for _ in total_bits..bytes.len() * 8 {
        if br.read_bit()? {
            return Err(Error::Malformed("nonzero padding in input share".into()));
        }
    }
    Ok(PlayerInput { rings, scalars, bools })
}

// ---- evaluation ----

struct Assignment {
    bools: Vec<u8>,
    /// Flat, stride = level.
    scalars: Vec<u64>,
    rings: Vec<RingElem>,
}

impl Assignment {
    fn new(ctx: &RingContext, circuit: &Circuit, input: &PlayerInput) -> Self {
        let l = circuit.level;
        let mut a = Assignment {
            bools: vec![0u8; circuit.n_bool],
            scalars: vec![0u64; circuit.n_scalar * l],
            rings: vec![ctx.zero(l); circuit.n_ring],
        };
        for (i, &w) in circuit.ring_inputs.iter().enumerate() {
            a.rings[circuit.vidx[w as usize] as usize] = input.rings[i].clone();
        }
        for (i, &w) in circuit.scalar_inputs.iter().enumerate() {
            let idx = circuit.vidx[w as usize] as usize;
            a.scalars[idx * l..(idx + 1) * l].copy_from_slice(&input.scalars[i]);
        }
        for (i, &w) in circuit.bool_inputs.iter().enumerate() {
            a.bools[circuit.vidx[w as usize] as usize] = input.bools[i] as u8;
        }
        a
    }

    #[inline]
    fn b(&self, c: &Circuit, w: u32) -> u8 {
        self.bools[c.vidx[w as usize] as usize]
    }

    #[inline]
    fn set_b(&mut self, c: &Circuit, w: u32, v: u8) {
        self.bools[c.vidx[w as usize] as usize] = v;
    }

    #[inline]
    fn s<'a>(&'a self, c: &Circuit, w: u32, l: usize) -> &'a [u64] {
        let i = c.vidx[w as usize] as usize;
        &self.scalars[i * l..(i + 1) * l]
    }

    fn outputs(&self, circuit: &Circuit) -> OutputValues {
        let l = circuit.level;
        OutputValues {
            vals: circuit
                .outputs
                .iter()
                .map(|&w| match circuit.kinds[w as usize] {
                    Kind::Bool => OutVal::B(self.b(circuit, w) == 1),
                    Kind::Scalar => OutVal::S(self.s(circuit, w, l).to_vec()),
                    Kind::Ring => OutVal::R(self.rings[circuit.vidx[w as usize] as usize].clone()),
                })
                .collect(),
        }
    }
}

/// Evaluates one local (linear) gate for player `p`. Non-local gates must be
/// handled by the caller.
fn eval_local(ctx: &RingContext, c: &Circuit, g: &Gate, p: usize, a: &mut Assignment) {
    let l = c.level;
    match g {
        Gate::BConst { out, val } => a.set_b(c, *out, (p == 0 && *val) as u8),
        Gate::BXor { out, a: x, b: y } => {
            let v = a.b(c, *x) ^ a.b(c, *y);
            a.set_b(c, *out, v);
        }
        Gate::BNot { out, a: x } => {
            // Complement is an XOR with constant 1: only player 0 flips.
            let v = a.b(c, *x) ^ (p == 0) as u8;
            a.set_b(c, *out, v);
        }
        Gate::SConst { out, c: id } => {
            let io = c.vidx[*out as usize] as usize;
            if p == 0 {
                a.scalars[io * l..(io + 1) * l].copy_from_slice(&c.scalar_consts[*id as usize]);
            } else {
                a.scalars[io * l..(io + 1) * l].fill(0);
            }
        }
        Gate::SAdd { out, a: x, b: y } | Gate::SSub { out, a: x, b: y } => {
            let ix = c.vidx[*x as usize] as usize;
            let iy = c.vidx[*y as usize] as usize;
            let io = c.vidx[*out as usize] as usize;
            for t in 0..l {
                let m = ctx.prime(t);
                let (u, v) = (a.scalars[ix * l + t], a.scalars[iy * l + t]);
                a.scalars[io * l + t] = if matches!(g, Gate::SAdd { .. }) {
                    add_mod(u, v, m)
                } else {
                    sub_mod(u, v, m)
                };
            }
        }
        Gate::SAddC { out, a: x, c: id } => {
            let ix = c.vidx[*x as usize] as usize;
            let io = c.vidx[*out as usize] as usize;
            let cc = &c.scalar_consts[*id as usize];
            for t in 0..l {
                let m = ctx.prime(t);
                let v = a.scalars[ix * l + t];
                // Public constants are added by player 0 only.
                a.scalars[io * l + t] = if p == 0 { add_mod(v, cc[t], m) } else { v };
            }
        }
        Gate::SMulC { out, a: x, c: id } => {
            let ix = c.vidx[*x as usize] as usize;
            let io = c.vidx[*out as usize] as usize;
            let cc = &c.scalar_consts[*id as usize];
            for t in 0..l {
                let m = ctx.prime(t);
                a.scalars[io * l + t] = mul_mod(a.scalars[ix * l + t], cc[t], m);
            }
        }
        Gate::ShareBits { scalar, start, bits } => {
            let ix = c.vidx[*scalar as usize] as usize;
            let canon = ctx.residues_canonical(&a.scalars[ix * l..(ix + 1) * l]);
            for owner in 0..3u32 {
                for k in 0..*bits {
                    let w = *start + owner * *bits + k;
                    let v = if owner as usize == p { canon.bit(k as u64) as u8 } else { 0 };
                    a.set_b(c, w, v);
                }
            }
        }
        Gate::RConst { out, c: id } => {
            let v = if p == 0 { c.ring_consts[*id as usize].clone() } else { ctx.zero(l) };
            a.rings[c.vidx[*out as usize] as usize] = v;
        }
        Gate::RAdd { out, a: x, b: y } => {
            let v = ctx.add(
                &a.rings[c.vidx[*x as usize] as usize],
                &a.rings[c.vidx[*y as usize] as usize],
            );
            a.rings[c.vidx[*out as usize] as usize] = v;
        }
        Gate::RSub { out, a: x, b: y } => {
            let v = ctx.sub(
                &a.rings[c.vidx[*x as usize] as usize],
                &a.rings[c.vidx[*y as usize] as usize],
            );
            a.rings[c.vidx[*out as usize] as usize] = v;
        }
        Gate::RScaleC { out, a: x, k } => {
            let v = ctx.mul_scalar_i64(&a.rings[c.vidx[*x as usize] as usize], *k);
            a.rings[c.vidx[*out as usize] as usize] = v;
        }
        Gate::RConv { out, a: x, ntt } => {
            let mut acc = ctx.ntt_zero(l);
            let src = &a.rings[c.vidx[*x as usize] as usize];
            ctx.ntt_mul_acc(&mut acc, &ctx.to_ntt(src), &c.ntt_consts[*ntt as usize]);
            a.rings[c.vidx[*out as usize] as usize] = ctx.from_ntt(&acc);
        }
        Gate::MatVec { out, scalars, cols } => {
            let mut acc = ctx.zero(l);
            for (sw, col) in scalars.iter().zip(cols) {
                let limbs = a.s(c, *sw, l).to_vec();
                let term = ctx.mul_scalar_residues(&c.ring_consts[*col as usize], &limbs);
                acc = ctx.add(&acc, &term);
            }
            a.rings[c.vidx[*out as usize] as usize] = acc;
        }
        Gate::BAnd { .. } | Gate::SMul { .. } => unreachable!("non-local gate in eval_local"),
    }
}

fn draw_scalar_rand(ctx: &RingContext, level: usize, xof: &mut Xof) -> Vec<u64> {
    (0..level).map(|t| uniform_below(ctx.prime(t), xof)).collect()
}

/// Lock-step evaluation of all three players; returns assignments and
/// serialized views (non-local outputs in gate order).
///
/// `cheat` names a non-local gate (by index among non-local gates, in gate
/// order) at which player 2 records a corrupted output and carries it
/// forward; used by the adversary model to exhibit the soundness error.
fn eval3(
    ctx: &RingContext,
    circuit: &Circuit,
    inputs: &[PlayerInput; 3],
    tapes: &IterationTapes,
    cheat: Option<usize>,
) -> ([Assignment; 3], [Vec<u8>; 3]) {
    let l = circuit.level;
    let w = circuit.scalar_width(ctx);
    let mut streams: Vec<Xof> = tapes.iter().map(|t| t.stream()).collect();
    // Players 0 and 1 consumed their input sections during sharing; advance
    // past them by redrawing (identical rejection-sampling path).
    for s in streams.iter_mut().take(2) {
        let _ = draw_input(ctx, circuit, s);
    }
    let mut assigns: Vec<Assignment> =
        (0..3).map(|p| Assignment::new(ctx, circuit, &inputs[p])).collect();
    let mut views: Vec<BitWriter> = (0..3).map(|_| BitWriter::new()).collect();
    let mut nonlocal = 0usize;

    for g in &circuit.gates {
        match g {
            Gate::BAnd { out, a, b } => {
                let av: Vec<u8> = assigns.iter().map(|s| s.b(circuit, *a)).collect();
                let bv: Vec<u8> = assigns.iter().map(|s| s.b(circuit, *b)).collect();
                let r: Vec<u8> = streams.iter_mut().map(|s| s.next_bit() as u8).collect();
                for p in 0..3 {
                    let n = (p + 1) % 3;
                    let mut v = (av[p] & bv[p]) ^ (av[n] & bv[p]) ^ (av[p] & bv[n]) ^ r[p] ^ r[n];
                    if p == 2 && cheat == Some(nonlocal) {
                        v ^= 1;
                    }
                    assigns[p].set_b(circuit, *out, v);
                    views[p].push_bit(v == 1);
                }
                nonlocal += 1;
            }
            Gate::SMul { out, a, b } => {
                let av: Vec<Vec<u64>> = assigns.iter().map(|s| s.s(circuit, *a, l).to_vec()).collect();
                let bv: Vec<Vec<u64>> = assigns.iter().map(|s| s.s(circuit, *b, l).to_vec()).collect();
                let r: Vec<Vec<u64>> =
                    streams.iter_mut().map(|s| draw_scalar_rand(ctx, l, s)).collect();
                for p in 0..3 {
                    let n = (p + 1) % 3;
                    let io = circuit.vidx[*out as usize] as usize;
                    let mut limbs = vec![0u64; l];
                    for t in 0..l {
                        let m = ctx.prime(t);
                        let mut v = mul_mod(av[p][t], bv[p][t], m);
                        v = add_mod(v, mul_mod(av[n][t], bv[p][t], m), m);
                        v = add_mod(v, mul_mod(av[p][t], bv[n][t], m), m);
                        v = add_mod(v, r[p][t], m);
                        v = sub_mod(v, r[n][t], m);
                        if p == 2 && cheat == Some(nonlocal) {
                            v = add_mod(v, 1, m);
                        }
                        limbs[t] = v;
                    }
                    assigns[p].scalars[io * l..(io + 1) * l].copy_from_slice(&limbs);
                    views[p].push_biguint(&ctx.residues_canonical(&limbs), w);
                }
                nonlocal += 1;
            }
            _ => {
                for (p, a) in assigns.iter_mut().enumerate() {
                    eval_local(ctx, circuit, g, p, a);
                }
            }
        }
    }
    let views: Vec<Vec<u8>> = views.into_iter().map(|v| v.finish()).collect();
    let mut ai = assigns.into_iter();
    let mut vi = views.into_iter();
    (
        [ai.next().unwrap(), ai.next().unwrap(), ai.next().unwrap()],
        [vi.next().unwrap(), vi.next().unwrap(), vi.next().unwrap()],
    )
}

/// Parsed non-local values of a recorded view, consumed in gate order.
struct ParsedView {
    bits: Vec<u8>,
    scalars: Vec<Vec<u64>>,
}

fn parse_view(ctx: &RingContext, circuit: &Circuit, bytes: &[u8]) -> Result<ParsedView> {
    let total_bits = circuit.view_bits(ctx);
    if bytes.len() != wire::bytes_for_bits(total_bits) {
        return Err(Error::Malformed("view size".into()));
    }
    let w = circuit.scalar_width(ctx);
    let q = ctx.params.modulus_at(circuit.level);
    let mut br = BitReader::new(bytes);
    let mut bits = Vec::with_capacity(circuit.n_and);
    let mut scalars = Vec::with_capacity(circuit.n_smul);
    for g in &circuit.gates {
        match g {
            Gate::BAnd { .. } => bits.push(br.read_bit()? as u8),
            Gate::SMul { .. } => {
                let v = br.read_biguint(w)?;
                if v >= q {
                    return Err(Error::Malformed("view scalar out of range".into()));
                }
                scalars.push(ctx.residues_from_canonical(&v, circuit.level));
            }
            _ => {}
        }
    }
    for _ in total_bits..bytes.len() * 8 {
        if br.read_bit()? {
            return Err(Error::Malformed("nonzero padding in view".into()));
        }
    }
    Ok(ParsedView { bits, scalars })
}

/// Replays player `p` from its recorded view; no randomness needed.
fn eval_replay(
    ctx: &RingContext,
    circuit: &Circuit,
    p: usize,
    input: &PlayerInput,
    view: &ParsedView,
) -> Assignment {
    let l = circuit.level;
    let mut a = Assignment::new(ctx, circuit, input);
    let (mut bi, mut si) = (0usize, 0usize);
    for g in &circuit.gates {
        match g {
            Gate::BAnd { out, .. } => {
                a.set_b(circuit, *out, view.bits[bi]);
                bi += 1;
            }
            Gate::SMul { out, .. } => {
                let io = circuit.vidx[*out as usize] as usize;
                a.scalars[io * l..(io + 1) * l].copy_from_slice(&view.scalars[si]);
                si += 1;
            }
            _ => eval_local(ctx, circuit, g, p, &mut a),
        }
    }
    a
}

/// Computes player `p` from its tape, reading neighbor p+1's operand values
/// from `neighbor`; returns the assignment and the serialized view.
fn eval_compute(
    ctx: &RingContext,
    circuit: &Circuit,
    p: usize,
    input: &PlayerInput,
    rand_self: &mut Xof,
    rand_next: &mut Xof,
    neighbor: &Assignment,
) -> (Assignment, Vec<u8>) {
    let l = circuit.level;
    let w = circuit.scalar_width(ctx);
    let mut a = Assignment::new(ctx, circuit, input);
    let mut view = BitWriter::new();
    for g in &circuit.gates {
        match g {
            Gate::BAnd { out, a: x, b: y } => {
                let (ap, bp) = (a.b(circuit, *x), a.b(circuit, *y));
                let (an, bn) = (neighbor.b(circuit, *x), neighbor.b(circuit, *y));
                let rp = rand_self.next_bit() as u8;
                let rn = rand_next.next_bit() as u8;
                let v = (ap & bp) ^ (an & bp) ^ (ap & bn) ^ rp ^ rn;
                a.set_b(circuit, *out, v);
                view.push_bit(v == 1);
            }
            Gate::SMul { out, a: x, b: y } => {
                let ap = a.s(circuit, *x, l).to_vec();
                let bp = a.s(circuit, *y, l).to_vec();
                let an = neighbor.s(circuit, *x, l).to_vec();
                let bn = neighbor.s(circuit, *y, l).to_vec();
                let rp = draw_scalar_rand(ctx, l, rand_self);
                let rn = draw_scalar_rand(ctx, l, rand_next);
                let io = circuit.vidx[*out as usize] as usize;
                let mut limbs = vec![0u64; l];
                for t in 0..l {
                    let m = ctx.prime(t);
                    let mut v = mul_mod(ap[t], bp[t], m);
                    v = add_mod(v, mul_mod(an[t], bp[t], m), m);
                    v = add_mod(v, mul_mod(ap[t], bn[t], m), m);
                    v = add_mod(v, rp[t], m);
                    v = sub_mod(v, rn[t], m);
                    limbs[t] = v;
                }
                a.scalars[io * l..(io + 1) * l].copy_from_slice(&limbs);
                view.push_biguint(&ctx.residues_canonical(&limbs), w);
            }
            _ => eval_local(ctx, circuit, g, p, &mut a),
        }
    }
    (a, view.finish())
}

/// Runs the full (2,3)-decomposition once with explicit shares; returns the
/// three views and the reconstructed output.
pub fn eval_decomposition(
    ctx: &RingContext,
    circuit: &Circuit,
    inputs: &[PlayerInput; 3],
    tapes: &IterationTapes,
) -> ([View; 3], OutputValues) {
    eval_decomposition_cheat(ctx, circuit, inputs, tapes, None)
}

pub(super) fn eval_decomposition_cheat(
    ctx: &RingContext,
    circuit: &Circuit,
    inputs: &[PlayerInput; 3],
    tapes: &IterationTapes,
    cheat: Option<usize>,
) -> ([View; 3], OutputValues) {
    let (assigns, view_bytes) = eval3(ctx, circuit, inputs, tapes, cheat);
    let outs: Vec<OutputValues> = assigns.iter().map(|a| a.outputs(circuit)).collect();
    let y = OutputValues::add3(ctx, &outs[0], &outs[1], &outs[2]);
    let mut views = Vec::with_capacity(3);
    for p in 0..3 {
        views.push(View {
            input_bytes: serialize_input(ctx, circuit, &inputs[p]),
            view_bytes: view_bytes[p].clone(),
            outputs: outs[p].clone(),
        });
    }
    let mut vi = views.into_iter();
    ([vi.next().unwrap(), vi.next().unwrap(), vi.next().unwrap()], y)
}

pub(super) fn commit_view(k: &[u8; 16], input_bytes: &[u8], view_bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(k);
    h.update(input_bytes);
    h.update(view_bytes);
    h.finalize().into()
}

pub(super) fn challenge_trits(
    kappa: usize,
    circuit_hash: &[u8; 32],
    per_iter: &[([Vec<u8>; 3], [[u8; 32]; 3])],
) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"crisp/zkb/v1");
    h.update((kappa as u16).to_be_bytes());
    h.update(circuit_hash);
    for (ys, cs) in per_iter {
        for y in ys {
            h.update(y);
        }
        for c in cs {
            h.update(c);
        }
    }
    let digest: [u8; 32] = h.finalize().into();
    let mut xof = Xof::new(&digest);
    let t = per_iter.len();
    let mut trits = Vec::with_capacity(t);
    while trits.len() < t {
        let b = xof.next_byte();
        if b >= 243 {
            continue;
        }
        let mut v = b;
        for _ in 0..5 {
            if trits.len() < t {
                trits.push(v % 3);
            }
            v /= 3;
        }
    }
    trits
}

// ---- prove / verify ----

pub fn prove(
    ctx: &RingContext,
    circuit: &Circuit,
    witness: &Witness,
    public: &OutputValues,
    kappa: usize,
    seed: [u8; 32],
    par: Parallelism,
) -> Result<ZkProof> {
    let plain = circuit.eval_plain(ctx, witness);
    if plain != *public {
        return Err(Error::InvalidParams("witness does not satisfy the circuit".into()));
    }
    let t = iterations(kappa);

    struct IterData {
        tapes: IterationTapes,
        x3_bytes: Vec<u8>,
        view_bytes: [Vec<u8>; 3],
        y_bytes: [Vec<u8>; 3],
        c: [[u8; 32]; 3],
    }

    let iters: Vec<IterData> = map_indexed(par, t, |i| {
        let tapes = iteration_tapes(&seed, i);
        let inputs = share(ctx, circuit, witness, &tapes);
        let (views, y) = eval_decomposition(ctx, circuit, &inputs, &tapes);
        debug_assert_eq!(y, *public);
        let c = [
            commit_view(&tapes[0].seed, &views[0].input_bytes, &views[0].view_bytes),
            commit_view(&tapes[1].seed, &views[1].input_bytes, &views[1].view_bytes),
            commit_view(&tapes[2].seed, &views[2].input_bytes, &views[2].view_bytes),
        ];
        let y_bytes = [
            views[0].outputs.serialize(ctx, circuit.level),
            views[1].outputs.serialize(ctx, circuit.level),
            views[2].outputs.serialize(ctx, circuit.level),
        ];
        let x3_bytes = views[2].input_bytes.clone();
        let view_bytes = [
            views[0].view_bytes.clone(),
            views[1].view_bytes.clone(),
            views[2].view_bytes.clone(),
        ];
        IterData { tapes, x3_bytes, view_bytes, y_bytes, c }
    });

    let hash_input: Vec<([Vec<u8>; 3], [[u8; 32]; 3])> =
        iters.iter().map(|d| (d.y_bytes.clone(), d.c)).collect();
    let challenge = challenge_trits(kappa, &circuit.hash, &hash_input);

    let iter_proofs = iters
        .into_iter()
        .zip(&challenge)
        .map(|(d, &e)| {
            let e = e as usize;
            IterProof {
                c_hidden: d.c[(e + 2) % 3],
                k_e: d.tapes[e].seed,
                k_e1: d.tapes[(e + 1) % 3].seed,
                x3: (e != 0).then(|| d.x3_bytes.clone()),
                view: d.view_bytes[(e + 1) % 3].clone(),
            }
        })
        .collect();

    Ok(ZkProof {
        kappa: kappa as u16,
        circuit_hash: circuit.hash,
        challenge,
        iters: iter_proofs,
    })
}

pub fn verify(
    ctx: &RingContext,
    circuit: &Circuit,
    public: &OutputValues,
    proof: &ZkProof,
    par: Parallelism,
) -> bool {
    if proof.circuit_hash != circuit.hash {
        return false;
    }
    let t = iterations(proof.kappa as usize);
    if proof.challenge.len() != t || proof.iters.len() != t {
        return false;
    }
    if proof.challenge.iter().any(|&e| e > 2) {
        return false;
    }

    let results: Vec<Option<([Vec<u8>; 3], [[u8; 32]; 3])>> = map_indexed(par, t, |i| {
        let e = proof.challenge[i] as usize;
        let ip = &proof.iters[i];
        let tape_e = Tape { seed: ip.k_e };
        let tape_e1 = Tape { seed: ip.k_e1 };
        let p_e = e;
        let p_e1 = (e + 1) % 3;

        // Inputs of the two opened players: tape-derived for 0/1, explicit
        // for player 2.
        let input_of = |player: usize, tape: &Tape| -> Option<(PlayerInput, Vec<u8>)> {
            if player < 2 {
                let pi = draw_input(ctx, circuit, &mut tape.stream());
                let bytes = serialize_input(ctx, circuit, &pi);
                Some((pi, bytes))
            } else {
                let bytes = ip.x3.as_ref()?;
                let pi = parse_input(ctx, circuit, bytes).ok()?;
                Some((pi, bytes.clone()))
            }
        };
        let (in_e, in_e_bytes) = input_of(p_e, &tape_e)?;
        let (in_e1, in_e1_bytes) = input_of(p_e1, &tape_e1)?;

        let parsed = parse_view(ctx, circuit, &ip.view).ok()?;
        let assign_e1 = eval_replay(ctx, circuit, p_e1, &in_e1, &parsed);

        // Position both tape streams past the input section.
        let mut rand_e = tape_e.stream();
        if p_e < 2 {
            let _ = draw_input(ctx, circuit, &mut rand_e);
        }
        let mut rand_e1 = tape_e1.stream();
        if p_e1 < 2 {
            let _ = draw_input(ctx, circuit, &mut rand_e1);
        }
        let (assign_e, view_e_bytes) =
            eval_compute(ctx, circuit, p_e, &in_e, &mut rand_e, &mut rand_e1, &assign_e1);

        let y_e = assign_e.outputs(circuit);
        let y_e1 = assign_e1.outputs(circuit);
        let y_hidden = public.sub_two(ctx, &y_e, &y_e1);

        let c_e = commit_view(&ip.k_e, &in_e_bytes, &view_e_bytes);
        let c_e1 = commit_view(&ip.k_e1, &in_e1_bytes, &ip.view);

        let mut ys: [Vec<u8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut cs = [[0u8; 32]; 3];
        ys[p_e] = y_e.serialize(ctx, circuit.level);
        ys[p_e1] = y_e1.serialize(ctx, circuit.level);
        ys[(e + 2) % 3] = y_hidden.serialize(ctx, circuit.level);
        cs[p_e] = c_e;
        cs[p_e1] = c_e1;
        cs[(e + 2) % 3] = ip.c_hidden;
        Some((ys, cs))
    });

    let mut per_iter = Vec::with_capacity(t);
    for r in results {
        match r {
            Some(v) => per_iter.push(v),
            None => return false,
        }
    }
    let expect = challenge_trits(proof.kappa as usize, &circuit.hash, &per_iter);
    expect == proof.challenge
}

// ---- serialization ----

fn pack_trits(trits: &[u8]) -> Vec<u8> {
    trits
        .chunks(5)
        .map(|ch| {
            let mut b = 0u8;
            for (i, &t) in ch.iter().enumerate() {
                b += t * 3u8.pow(i as u32);
            }
            b
        })
        .collect()
}

fn unpack_trits(bytes: &[u8], t: usize) -> Result<Vec<u8>> {
    if bytes.len() != t.div_ceil(5) {
        return Err(Error::Malformed("challenge length".into()));
    }
    let mut trits = Vec::with_capacity(t);
    for (ci, &byte) in bytes.iter().enumerate() {
        let in_this = (t - ci * 5).min(5);
        // Canonical form: unused high trit positions must be zero.
        if (byte as u16) >= 3u16.pow(in_this as u32) {
            return Err(Error::Malformed("non-canonical challenge byte".into()));
        }
        let mut v = byte;
        for _ in 0..in_this {
            trits.push(v % 3);
            v /= 3;
        }
    }
    Ok(trits)
}

pub fn serialize_zk_proof(proof: &ZkProof) -> Vec<u8> {
    let mut w = Writer::with_header(Tag::ZkProof);
    w.put_u16(proof.kappa);
    w.put_u16(proof.iters.len() as u16);
    w.put_bytes(&proof.circuit_hash);
    w.put_bytes(&pack_trits(&proof.challenge));
    for ip in &proof.iters {
        w.put_bytes(&ip.c_hidden);
        w.put_bytes(&ip.k_e);
        w.put_bytes(&ip.k_e1);
        if let Some(x3) = &ip.x3 {
            w.put_bytes(x3);
        }
        w.put_bytes(&ip.view);
    }
    w.finish()
}

pub fn deserialize_zk_proof(ctx: &RingContext, circuit: &Circuit, bytes: &[u8]) -> Result<ZkProof> {
    let mut r = Reader::expect_header(bytes, Tag::ZkProof)?;
    let kappa = r.get_u16()?;
    let t = r.get_u16()? as usize;
    if t != iterations(kappa as usize) {
        return Err(Error::Malformed("iteration count".into()));
    }
    let mut circuit_hash = [0u8; 32];
    circuit_hash.copy_from_slice(r.take(32)?);
    let challenge = unpack_trits(r.take(t.div_ceil(5))?, t)?;
    let x3_len = wire::bytes_for_bits(circuit.input_share_bits(ctx));
    let view_len = wire::bytes_for_bits(circuit.view_bits(ctx));
    let mut iters = Vec::with_capacity(t);
    for &e in &challenge {
        let mut c_hidden = [0u8; 32];
        c_hidden.copy_from_slice(r.take(32)?);
        let mut k_e = [0u8; 16];
        k_e.copy_from_slice(r.take(16)?);
        let mut k_e1 = [0u8; 16];
        k_e1.copy_from_slice(r.take(16)?);
        let x3 = if e != 0 { Some(r.take(x3_len)?.to_vec()) } else { None };
        let view = r.take(view_len)?.to_vec();
        iters.push(IterProof { c_hidden, k_e, k_e1, x3, view });
    }
    r.finish()?;
    Ok(ZkProof { kappa, circuit_hash, challenge, iters })
}

/// Exact serialized size for a given challenge; the serializer must match.
pub fn zk_proof_size(ctx: &RingContext, circuit: &Circuit, challenge: &[u8]) -> usize {
    let t = challenge.len();
    let x3_len = wire::bytes_for_bits(circuit.input_share_bits(ctx));
    let view_len = wire::bytes_for_bits(circuit.view_bits(ctx));
    let opened_x3 = challenge.iter().filter(|&&e| e != 0).count();
    6 + 2 + 2 + 32 + t.div_ceil(5) + t * (32 + 16 + 16 + view_len) + opened_x3 * x3_len
}
