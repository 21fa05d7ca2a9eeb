//! Circuit intermediate representation.
//!
//! Wires carry one of three value kinds: Boolean bits, Z_q scalars (stored as
//! RNS limbs), or R_q ring elements. Gates are appended in topological order
//! by the builder; operands must already exist, which makes cycles
//! unrepresentable. Only Boolean AND and scalar MUL are non-local in the
//! (2,3)-decomposition — every ring operation is linear and therefore free.
//!
//! Two special input forms tie the arithmetic and Boolean halves together:
//! `share_bits` exposes the bits of each simulated player's own share of a
//! scalar, and `input_wrap` declares a Boolean input whose value is the wrap
//! count of a scalar's additive sharing, recomputed by the prover for every
//! iteration. Under the trivial sharing (x, 0, 0) the wrap count is zero, so
//! the cleartext evaluation in [`Circuit::eval_plain`] models exactly that.

use crate::ring::{NttPoly, RingContext, RingElem};
use crate::wire::BitWriter;
use crate::xof::sha256;
use num_bigint::BigUint;
use sha2::{Digest, Sha256};

pub type Wire = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Bool,
    Scalar,
    Ring,
}

/// Where a Boolean input's cleartext value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolSource {
    /// Supplied in the witness.
    Witness,
    /// Bit `bit` of the wrap count of scalar input `scalar_input`'s sharing.
    WrapBit { scalar_input: u32, bit: u8 },
}

#[derive(Debug, Clone)]
pub enum Gate {
    BConst { out: Wire, val: bool },
    BXor { out: Wire, a: Wire, b: Wire },
    BNot { out: Wire, a: Wire },
    /// Non-local.
    BAnd { out: Wire, a: Wire, b: Wire },
    SConst { out: Wire, c: u32 },
    SAdd { out: Wire, a: Wire, b: Wire },
    SSub { out: Wire, a: Wire, b: Wire },
    SAddC { out: Wire, a: Wire, c: u32 },
    SMulC { out: Wire, a: Wire, c: u32 },
    /// Non-local.
    SMul { out: Wire, a: Wire, b: Wire },
    /// 3·bits Boolean wires starting at `start`, laid out player-major:
    /// wire(start + p·bits + k) = bit k of player p's share of `scalar`.
    ShareBits { scalar: Wire, start: Wire, bits: u32 },
    RConst { out: Wire, c: u32 },
    RAdd { out: Wire, a: Wire, b: Wire },
    RSub { out: Wire, a: Wire, b: Wire },
    RScaleC { out: Wire, a: Wire, k: i64 },
    /// Negacyclic convolution with a public polynomial (NTT-prepared).
    RConv { out: Wire, a: Wire, ntt: u32 },
    /// out = Σ_j scalars[j] · cols[j]; cols index the ring-constant pool.
    MatVec { out: Wire, scalars: Vec<Wire>, cols: Vec<u32> },
}

#[derive(Debug, Clone, Default)]
pub struct Witness {
    pub rings: Vec<RingElem>,
    /// RNS residues at the circuit level, one Vec per scalar input.
    pub scalars: Vec<Vec<u64>>,
    /// Values for `BoolSource::Witness` inputs, in input order.
    pub bools: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutVal {
    B(bool),
    S(Vec<u64>),
    R(RingElem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputValues {
    pub vals: Vec<OutVal>,
}

pub struct Circuit {
    pub level: usize,
    pub kinds: Vec<Kind>,
    /// Wire id → index within its kind's value array.
    pub vidx: Vec<u32>,
    pub n_bool: usize,
    pub n_scalar: usize,
    pub n_ring: usize,
    pub gates: Vec<Gate>,
    pub scalar_consts: Vec<Vec<u64>>,
    pub ring_consts: Vec<RingElem>,
    pub ntt_consts: Vec<NttPoly>,
    pub ring_inputs: Vec<Wire>,
    pub scalar_inputs: Vec<Wire>,
    pub bool_inputs: Vec<Wire>,
    pub bool_sources: Vec<BoolSource>,
    pub outputs: Vec<Wire>,
    /// Non-local gate counts, fixed by the gate list.
    pub n_and: usize,
    pub n_smul: usize,
    pub hash: [u8; 32],
}

pub struct CircuitBuilder {
    level: usize,
    kinds: Vec<Kind>,
    vidx: Vec<u32>,
    n_bool: usize,
    n_scalar: usize,
    n_ring: usize,
    gates: Vec<Gate>,
    scalar_consts: Vec<Vec<u64>>,
    ring_consts: Vec<RingElem>,
    ntt_consts: Vec<NttPoly>,
    ring_inputs: Vec<Wire>,
    scalar_inputs: Vec<Wire>,
    bool_inputs: Vec<Wire>,
    bool_sources: Vec<BoolSource>,
    n_and: usize,
    n_smul: usize,
}

impl CircuitBuilder {
    pub fn new(level: usize) -> Self {
        CircuitBuilder {
            level,
            kinds: Vec::new(),
            vidx: Vec::new(),
            n_bool: 0,
            n_scalar: 0,
            n_ring: 0,
            gates: Vec::new(),
            scalar_consts: Vec::new(),
            ring_consts: Vec::new(),
            ntt_consts: Vec::new(),
            ring_inputs: Vec::new(),
            scalar_inputs: Vec::new(),
            bool_inputs: Vec::new(),
            bool_sources: Vec::new(),
            n_and: 0,
            n_smul: 0,
        }
    }

    fn wire(&mut self, kind: Kind) -> Wire {
        let id = self.kinds.len() as Wire;
        self.kinds.push(kind);
        let idx = match kind {
            Kind::Bool => {
                self.n_bool += 1;
                self.n_bool - 1
            }
            Kind::Scalar => {
                self.n_scalar += 1;
                self.n_scalar - 1
            }
            Kind::Ring => {
                self.n_ring += 1;
                self.n_ring - 1
            }
        };
        self.vidx.push(idx as u32);
        id
    }

    fn expect(&self, w: Wire, kind: Kind) {
        assert!((w as usize) < self.kinds.len(), "undefined wire {w}");
        assert_eq!(self.kinds[w as usize], kind, "wire {w} kind mismatch");
    }

    pub fn input_bool(&mut self) -> Wire {
        let w = self.wire(Kind::Bool);
        self.bool_inputs.push(w);
        self.bool_sources.push(BoolSource::Witness);
        w
    }

    /// Index the next non-local gate (AND or scalar MUL) will get, counting
    /// all non-local gates in gate order. Lets callers record where specific
    /// multiplications land inside a larger circuit.
    pub fn nonlocal_count(&self) -> usize {
        self.n_and + self.n_smul
    }

    pub fn input_scalar(&mut self) -> Wire {
        let w = self.wire(Kind::Scalar);
        self.scalar_inputs.push(w);
        w
    }

    pub fn input_ring(&mut self) -> Wire {
        let w = self.wire(Kind::Ring);
        self.ring_inputs.push(w);
        w
    }

    /// Declares the 2-bit wrap count of `scalar_input`'s additive sharing as
    /// a pair of Boolean inputs (low bit first). The prover fills the value
    /// per iteration; in cleartext semantics it is zero.
    pub fn input_wrap(&mut self, scalar_input_index: usize) -> (Wire, Wire) {
        assert!(
            scalar_input_index < self.scalar_inputs.len(),
            "wrap bit references undeclared scalar input {scalar_input_index}"
        );
        let mut mk = |bit: u8| {
            let w = self.wire(Kind::Bool);
            self.bool_inputs.push(w);
            self.bool_sources.push(BoolSource::WrapBit {
                scalar_input: scalar_input_index as u32,
                bit,
            });
            w
        };
        (mk(0), mk(1))
    }

    pub fn const_bool(&mut self, val: bool) -> Wire {
        let out = self.wire(Kind::Bool);
        self.gates.push(Gate::BConst { out, val });
        out
    }

    pub fn xor(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Bool);
        self.expect(b, Kind::Bool);
        let out = self.wire(Kind::Bool);
        self.gates.push(Gate::BXor { out, a, b });
        out
    }

    pub fn not(&mut self, a: Wire) -> Wire {
        self.expect(a, Kind::Bool);
        let out = self.wire(Kind::Bool);
        self.gates.push(Gate::BNot { out, a });
        out
    }

    pub fn and(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Bool);
        self.expect(b, Kind::Bool);
        let out = self.wire(Kind::Bool);
        self.gates.push(Gate::BAnd { out, a, b });
        self.n_and += 1;
        out
    }

    fn scalar_const_id(&mut self, residues: Vec<u64>) -> u32 {
        assert_eq!(residues.len(), self.level);
        self.scalar_consts.push(residues);
        (self.scalar_consts.len() - 1) as u32
    }

    pub fn const_scalar(&mut self, residues: Vec<u64>) -> Wire {
        let c = self.scalar_const_id(residues);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SConst { out, c });
        out
    }

    pub fn sadd(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Scalar);
        self.expect(b, Kind::Scalar);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SAdd { out, a, b });
        out
    }

    pub fn ssub(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Scalar);
        self.expect(b, Kind::Scalar);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SSub { out, a, b });
        out
    }

    pub fn sadd_const(&mut self, a: Wire, residues: Vec<u64>) -> Wire {
        self.expect(a, Kind::Scalar);
        let c = self.scalar_const_id(residues);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SAddC { out, a, c });
        out
    }

    pub fn smul_const(&mut self, a: Wire, residues: Vec<u64>) -> Wire {
        self.expect(a, Kind::Scalar);
        let c = self.scalar_const_id(residues);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SMulC { out, a, c });
        out
    }

    pub fn smul(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Scalar);
        self.expect(b, Kind::Scalar);
        let out = self.wire(Kind::Scalar);
        self.gates.push(Gate::SMul { out, a, b });
        self.n_smul += 1;
        out
    }

    /// Per-player share bits of `scalar`: element `[p]` of the returned rows
    /// is player p's wire for that bit position.
    pub fn share_bits(&mut self, scalar: Wire, bits: usize) -> Vec<[Wire; 3]> {
        self.expect(scalar, Kind::Scalar);
        let start = self.kinds.len() as Wire;
        for _ in 0..3 * bits {
            self.wire(Kind::Bool);
        }
        self.gates.push(Gate::ShareBits { scalar, start, bits: bits as u32 });
        (0..bits)
            .map(|k| {
                [
                    start + k as Wire,
                    start + (bits + k) as Wire,
                    start + (2 * bits + k) as Wire,
                ]
            })
            .collect()
    }

    fn ring_const_id(&mut self, e: RingElem) -> u32 {
        self.ring_consts.push(e);
        (self.ring_consts.len() - 1) as u32
    }

    pub fn const_ring(&mut self, e: RingElem) -> Wire {
        assert_eq!(e.level(), self.level);
        let c = self.ring_const_id(e);
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::RConst { out, c });
        out
    }

    pub fn radd(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Ring);
        self.expect(b, Kind::Ring);
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::RAdd { out, a, b });
        out
    }

    pub fn rsub(&mut self, a: Wire, b: Wire) -> Wire {
        self.expect(a, Kind::Ring);
        self.expect(b, Kind::Ring);
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::RSub { out, a, b });
        out
    }

    pub fn rscale(&mut self, a: Wire, k: i64) -> Wire {
        self.expect(a, Kind::Ring);
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::RScaleC { out, a, k });
        out
    }

    pub fn rconv(&mut self, a: Wire, poly: NttPoly) -> Wire {
        self.expect(a, Kind::Ring);
        self.ntt_consts.push(poly);
        let ntt = (self.ntt_consts.len() - 1) as u32;
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::RConv { out, a, ntt });
        out
    }

    pub fn matvec(&mut self, scalars: Vec<Wire>, cols: Vec<RingElem>) -> Wire {
        assert_eq!(scalars.len(), cols.len());
        for &s in &scalars {
            self.expect(s, Kind::Scalar);
        }
        let cols = cols.into_iter().map(|c| self.ring_const_id(c)).collect();
        let out = self.wire(Kind::Ring);
        self.gates.push(Gate::MatVec { out, scalars, cols });
        out
    }

    pub fn finish(self, outputs: Vec<Wire>) -> Circuit {
        for &w in &outputs {
            assert!((w as usize) < self.kinds.len(), "undefined output wire {w}");
        }
        let mut c = Circuit {
            level: self.level,
            kinds: self.kinds,
            vidx: self.vidx,
            n_bool: self.n_bool,
            n_scalar: self.n_scalar,
            n_ring: self.n_ring,
            gates: self.gates,
            scalar_consts: self.scalar_consts,
            ring_consts: self.ring_consts,
            ntt_consts: self.ntt_consts,
            ring_inputs: self.ring_inputs,
            scalar_inputs: self.scalar_inputs,
            bool_inputs: self.bool_inputs,
            bool_sources: self.bool_sources,
            outputs,
            n_and: self.n_and,
            n_smul: self.n_smul,
            hash: [0u8; 32],
        };
        c.hash = c.compute_hash();
        c
    }
}

impl Circuit {
    /// Stable digest of the full circuit description; binds proofs to the
    /// exact gate list and constant pools.
    fn compute_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"crisp/circuit/v1");
        let push_u32 = |h: &mut Sha256, v: u32| h.update(v.to_be_bytes());
        push_u32(&mut h, self.level as u32);
        push_u32(&mut h, self.kinds.len() as u32);
        push_u32(&mut h, self.gates.len() as u32);
        for g in &self.gates {
            match g {
                Gate::BConst { out, val } => {
                    h.update([0u8, *val as u8]);
                    push_u32(&mut h, *out);
                }
                Gate::BXor { out, a, b } => {
                    h.update([1u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::BNot { out, a } => {
                    h.update([2u8]);
                    for v in [out, a] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::BAnd { out, a, b } => {
                    h.update([3u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SConst { out, c } => {
                    h.update([4u8]);
                    for v in [out, c] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SAdd { out, a, b } => {
                    h.update([5u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SSub { out, a, b } => {
                    h.update([6u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SAddC { out, a, c } => {
                    h.update([7u8]);
                    for v in [out, a, c] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SMulC { out, a, c } => {
                    h.update([8u8]);
                    for v in [out, a, c] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::SMul { out, a, b } => {
                    h.update([9u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::ShareBits { scalar, start, bits } => {
                    h.update([10u8]);
                    for v in [scalar, start, bits] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::RConst { out, c } => {
                    h.update([11u8]);
                    for v in [out, c] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::RAdd { out, a, b } => {
                    h.update([12u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::RSub { out, a, b } => {
                    h.update([13u8]);
                    for v in [out, a, b] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::RScaleC { out, a, k } => {
                    h.update([14u8]);
                    for v in [out, a] {
                        push_u32(&mut h, *v);
                    }
                    h.update(k.to_be_bytes());
                }
                Gate::RConv { out, a, ntt } => {
                    h.update([15u8]);
                    for v in [out, a, ntt] {
                        push_u32(&mut h, *v);
                    }
                }
                Gate::MatVec { out, scalars, cols } => {
                    h.update([16u8]);
                    push_u32(&mut h, *out);
                    push_u32(&mut h, scalars.len() as u32);
                    for v in scalars {
                        push_u32(&mut h, *v);
                    }
                    for v in cols {
                        push_u32(&mut h, *v);
                    }
                }
            }
        }
        for sc in &self.scalar_consts {
            for &v in sc {
                h.update(v.to_be_bytes());
            }
        }
        for rc in &self.ring_consts {
            for row in &rc.c {
                for &v in row {
                    h.update(v.to_be_bytes());
                }
            }
        }
        for nc in &self.ntt_consts {
            for row in &nc.c {
                for &v in row {
                    h.update(v.to_be_bytes());
                }
            }
        }
        for (list, tag) in [(&self.ring_inputs, 0u8), (&self.scalar_inputs, 1), (&self.bool_inputs, 2)] {
            h.update([tag]);
            push_u32(&mut h, list.len() as u32);
            for &w in list.iter() {
                push_u32(&mut h, w);
            }
        }
        for src in &self.bool_sources {
            match src {
                BoolSource::Witness => h.update([0u8]),
                BoolSource::WrapBit { scalar_input, bit } => {
                    h.update([1u8, *bit]);
                    push_u32(&mut h, *scalar_input);
                }
            }
        }
        push_u32(&mut h, self.outputs.len() as u32);
        for &w in &self.outputs {
            push_u32(&mut h, w);
        }
        h.finalize().into()
    }

    /// Cleartext evaluation: the trivial sharing (x, 0, 0), under which all
    /// wrap counts are zero and player 0 holds every share bit.
    pub fn eval_plain(&self, ctx: &RingContext, w: &Witness) -> OutputValues {
        assert_eq!(w.rings.len(), self.ring_inputs.len());
        assert_eq!(w.scalars.len(), self.scalar_inputs.len());
        let mut bools = vec![0u8; self.n_bool];
        let mut scalars = vec![0u64; self.n_scalar * self.level];
        let zero = ctx.zero(self.level);
        let mut rings = vec![zero; self.n_ring];
        let l = self.level;

        for (i, &wi) in self.ring_inputs.iter().enumerate() {
            rings[self.vidx[wi as usize] as usize] = w.rings[i].clone();
        }
        for (i, &wi) in self.scalar_inputs.iter().enumerate() {
            let idx = self.vidx[wi as usize] as usize;
            scalars[idx * l..(idx + 1) * l].copy_from_slice(&w.scalars[i]);
        }
        let mut wit_iter = w.bools.iter();
        for (i, &wi) in self.bool_inputs.iter().enumerate() {
            let v = match self.bool_sources[i] {
                BoolSource::Witness => *wit_iter.next().expect("missing bool witness value"),
                BoolSource::WrapBit { .. } => false,
            };
            bools[self.vidx[wi as usize] as usize] = v as u8;
        }

        let bi = |b: &Vec<u8>, w: Wire, s: &Self| b[s.vidx[w as usize] as usize];
        for g in &self.gates {
            match g {
                Gate::BConst { out, val } => bools[self.vidx[*out as usize] as usize] = *val as u8,
                Gate::BXor { out, a, b } => {
                    let v = bi(&bools, *a, self) ^ bi(&bools, *b, self);
                    bools[self.vidx[*out as usize] as usize] = v;
                }
                Gate::BNot { out, a } => {
                    let v = bi(&bools, *a, self) ^ 1;
                    bools[self.vidx[*out as usize] as usize] = v;
                }
                Gate::BAnd { out, a, b } => {
                    let v = bi(&bools, *a, self) & bi(&bools, *b, self);
                    bools[self.vidx[*out as usize] as usize] = v;
                }
                Gate::SConst { out, c } => {
                    let idx = self.vidx[*out as usize] as usize;
                    scalars[idx * l..(idx + 1) * l].copy_from_slice(&self.scalar_consts[*c as usize]);
                }
                Gate::SAdd { out, a, b } | Gate::SSub { out, a, b } => {
                    let ia = self.vidx[*a as usize] as usize;
                    let ib = self.vidx[*b as usize] as usize;
                    let io = self.vidx[*out as usize] as usize;
                    for t in 0..l {
                        let p = ctx.prime(t);
                        let (x, y) = (scalars[ia * l + t], scalars[ib * l + t]);
                        scalars[io * l + t] = if matches!(g, Gate::SAdd { .. }) {
                            crate::ring::add_mod(x, y, p)
                        } else {
                            crate::ring::sub_mod(x, y, p)
                        };
                    }
                }
                Gate::SAddC { out, a, c } | Gate::SMulC { out, a, c } => {
                    let ia = self.vidx[*a as usize] as usize;
                    let io = self.vidx[*out as usize] as usize;
                    let cc = &self.scalar_consts[*c as usize];
                    for t in 0..l {
                        let p = ctx.prime(t);
                        scalars[io * l + t] = if matches!(g, Gate::SAddC { .. }) {
                            crate::ring::add_mod(scalars[ia * l + t], cc[t], p)
                        } else {
                            crate::ring::mul_mod(scalars[ia * l + t], cc[t], p)
                        };
                    }
                }
                Gate::SMul { out, a, b } => {
                    let ia = self.vidx[*a as usize] as usize;
                    let ib = self.vidx[*b as usize] as usize;
                    let io = self.vidx[*out as usize] as usize;
                    for t in 0..l {
                        let p = ctx.prime(t);
                        scalars[io * l + t] =
                            crate::ring::mul_mod(scalars[ia * l + t], scalars[ib * l + t], p);
                    }
                }
                Gate::ShareBits { scalar, start, bits } => {
                    let ia = self.vidx[*scalar as usize] as usize;
                    let canon = ctx.residues_canonical(&scalars[ia * l..(ia + 1) * l]);
                    for k in 0..*bits {
                        // Player 0 holds the value; players 1, 2 hold zero.
                        let w0 = *start + k;
                        bools[self.vidx[w0 as usize] as usize] = canon.bit(k as u64) as u8;
                        for p in 1..3u32 {
                            let wp = *start + p * *bits + k;
                            bools[self.vidx[wp as usize] as usize] = 0;
                        }
                    }
                }
                Gate::RConst { out, c } => {
                    rings[self.vidx[*out as usize] as usize] = self.ring_consts[*c as usize].clone();
                }
                Gate::RAdd { out, a, b } => {
                    let v = ctx.add(
                        &rings[self.vidx[*a as usize] as usize],
                        &rings[self.vidx[*b as usize] as usize],
                    );
                    rings[self.vidx[*out as usize] as usize] = v;
                }
                Gate::RSub { out, a, b } => {
                    let v = ctx.sub(
                        &rings[self.vidx[*a as usize] as usize],
                        &rings[self.vidx[*b as usize] as usize],
                    );
                    rings[self.vidx[*out as usize] as usize] = v;
                }
                Gate::RScaleC { out, a, k } => {
                    let v = ctx.mul_scalar_i64(&rings[self.vidx[*a as usize] as usize], *k);
                    rings[self.vidx[*out as usize] as usize] = v;
                }
                Gate::RConv { out, a, ntt } => {
                    let av = &rings[self.vidx[*a as usize] as usize];
                    let v = ctx.from_ntt(&{
                        let mut acc = ctx.ntt_zero(self.level);
                        ctx.ntt_mul_acc(&mut acc, &ctx.to_ntt(av), &self.ntt_consts[*ntt as usize]);
                        acc
                    });
                    rings[self.vidx[*out as usize] as usize] = v;
                }
                Gate::MatVec { out, scalars: ss, cols } => {
                    let mut acc = ctx.zero(self.level);
                    for (sw, col) in ss.iter().zip(cols) {
                        let ia = self.vidx[*sw as usize] as usize;
                        let limbs = &scalars[ia * l..(ia + 1) * l];
                        let term = ctx.mul_scalar_residues(&self.ring_consts[*col as usize], limbs);
                        acc = ctx.add(&acc, &term);
                    }
                    rings[self.vidx[*out as usize] as usize] = acc;
                }
            }
        }

        OutputValues {
            vals: self
                .outputs
                .iter()
                .map(|&w| match self.kinds[w as usize] {
                    Kind::Bool => OutVal::B(bools[self.vidx[w as usize] as usize] == 1),
                    Kind::Scalar => {
                        let i = self.vidx[w as usize] as usize;
                        OutVal::S(scalars[i * l..(i + 1) * l].to_vec())
                    }
                    Kind::Ring => OutVal::R(rings[self.vidx[w as usize] as usize].clone()),
                })
                .collect(),
        }
    }

    /// Canonical bit width of a scalar at this circuit's level.
    pub fn scalar_width(&self, ctx: &RingContext) -> usize {
        ctx.params.log2_q_at(self.level)
    }

    /// Bits in one player's serialized input-share record.
    pub fn input_share_bits(&self, ctx: &RingContext) -> usize {
        let w = ctx.params.log2_q_at(self.level);
        self.ring_inputs.len() * ctx.n() * w + self.scalar_inputs.len() * w + self.bool_inputs.len()
    }

    /// Bits in one player's serialized view of non-local gate outputs.
    pub fn view_bits(&self, ctx: &RingContext) -> usize {
        self.n_and + self.n_smul * self.scalar_width(ctx)
    }

    /// Bits in one serialized output-share record (also the public output).
    pub fn output_bits(&self, ctx: &RingContext) -> usize {
        let w = ctx.params.log2_q_at(self.level);
        self.outputs
            .iter()
            .map(|&o| match self.kinds[o as usize] {
                Kind::Bool => 1,
                Kind::Scalar => w,
                Kind::Ring => ctx.n() * w,
            })
            .sum()
    }
}

impl OutputValues {
    pub fn serialize(&self, ctx: &RingContext, level: usize) -> Vec<u8> {
        let w = ctx.params.log2_q_at(level);
        let mut bw = BitWriter::new();
        for v in &self.vals {
            match v {
                OutVal::B(b) => bw.push_bit(*b),
                OutVal::S(s) => bw.push_biguint(&ctx.residues_canonical(s), w),
                OutVal::R(r) => ctx.pack_coeffs(r, &mut bw),
            }
        }
        bw.finish()
    }

    /// self − a − b, per value type (XOR on bits).
    pub fn sub_two(&self, ctx: &RingContext, a: &OutputValues, b: &OutputValues) -> OutputValues {
        let vals = self
            .vals
            .iter()
            .zip(a.vals.iter().zip(&b.vals))
            .map(|(y, (ya, yb))| match (y, ya, yb) {
                (OutVal::B(x), OutVal::B(p), OutVal::B(q)) => OutVal::B(x ^ p ^ q),
                (OutVal::S(x), OutVal::S(p), OutVal::S(q)) => OutVal::S(
                    x.iter()
                        .zip(p.iter().zip(q))
                        .enumerate()
                        .map(|(t, (&xv, (&pv, &qv)))| {
                            let m = ctx.prime(t);
                            crate::ring::sub_mod(crate::ring::sub_mod(xv, pv, m), qv, m)
                        })
                        .collect(),
                ),
                (OutVal::R(x), OutVal::R(p), OutVal::R(q)) => OutVal::R(ctx.sub(&ctx.sub(x, p), q)),
                _ => panic!("output kind mismatch"),
            })
            .collect();
        OutputValues { vals }
    }

    /// Reconstruction: sum of three share records.
    pub fn add3(ctx: &RingContext, a: &OutputValues, b: &OutputValues, c: &OutputValues) -> OutputValues {
        let vals = a
            .vals
            .iter()
            .zip(b.vals.iter().zip(&c.vals))
            .map(|(x, (y, z))| match (x, y, z) {
                (OutVal::B(p), OutVal::B(q), OutVal::B(r)) => OutVal::B(p ^ q ^ r),
                (OutVal::S(p), OutVal::S(q), OutVal::S(r)) => OutVal::S(
                    p.iter()
                        .zip(q.iter().zip(r))
                        .enumerate()
                        .map(|(t, (&pv, (&qv, &rv)))| {
                            let m = ctx.prime(t);
                            crate::ring::add_mod(crate::ring::add_mod(pv, qv, m), rv, m)
                        })
                        .collect(),
                ),
                (OutVal::R(p), OutVal::R(q), OutVal::R(r)) => OutVal::R(ctx.add(&ctx.add(p, q), r)),
                _ => panic!("output kind mismatch"),
            })
            .collect();
        OutputValues { vals }
    }

    /// Digest used inside Fiat–Shamir transcripts.
    pub fn digest(&self, ctx: &RingContext, level: usize) -> [u8; 32] {
        sha256(&self.serialize(ctx, level))
    }
}

/// BigUint bit helper used by the engine's share-bit logic.
pub fn big_bit(v: &BigUint, k: usize) -> bool {
    v.bit(k as u64)
}
