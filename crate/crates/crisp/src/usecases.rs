//! The three showcase computations and their parameter presets.
//!
//! Each use case fixes a message layout, a CKKS ring, a slot placement, and a
//! homomorphic program:
//!
//! * **Smart metering** — batches of signed meter readings; the provider
//!   computes the total consumption as a plain slot sum.
//! * **Disease susceptibility** — one signed genome message (SNP values in
//!   {0,1,2}); the provider computes a weighted risk score with public
//!   weights, normalized by the SNP count after release.
//! * **Activity tracking** — a signed GPS trace in a local coordinate frame;
//!   the provider computes per-segment travelled distances with a degree-7
//!   polynomial approximation of the square root, released as a slot vector
//!   and summed in the clear.
//!
//! The distance program is the deep one: seven moduli are consumed by
//! difference → square → axis-align → normalize → two squarings → a
//! Paterson–Stockmeyer evaluation of the odd/even split of the fitted
//! polynomial. Every plaintext multiplication carries a slot mask that zeroes
//! the garbage slots introduced by rotation wrap-around; the synthetic traces
//! live in a bounded local frame so that the masked garbage (which survives
//! only as encoding dust) stays far below every modulus.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ckks::{Ciphertext, Ckks, CkksParams, Keys};
use crate::circuit::{MsgLayout, SourceMessage};
use crate::encode::Encoder;
use crate::error::{Error, Result};
use crate::params::RingParams;
use crate::release::Psi;
use crate::ring::{RingContext, RingElem};
use crate::signer::SignerKeys;
use crate::xof::derive_seed;

/// Metres per trace segment never exceed this (enforced by the generator,
/// assumed by the square-root fit domain).
pub const SEGMENT_MAX_M: f64 = 30.0;
/// Squared segment lengths are divided by this before the polynomial, so the
/// fit variable lives in [0, 900/1024).
pub const SEGMENT_NORM: f64 = 1024.0;
/// SNP panel size; generated risk weights carry a 1/869 normalization so the
/// weighted score stays O(1) and far inside the base modulus.
pub const SNP_PANEL: usize = 869;

/// Which showcase computation a pipeline run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UseCase {
    SmartMeter,
    Disease,
    Activity,
}

impl UseCase {
    pub fn all() -> [UseCase; 3] {
        [UseCase::SmartMeter, UseCase::Disease, UseCase::Activity]
    }

    pub fn name(self) -> &'static str {
        match self {
            UseCase::SmartMeter => "smart-meter",
            UseCase::Disease => "disease",
            UseCase::Activity => "activity",
        }
    }

    pub fn parse(s: &str) -> Result<UseCase> {
        match s {
            "smart-meter" | "sm" => Ok(UseCase::SmartMeter),
            "disease" | "ds" => Ok(UseCase::Disease),
            "activity" | "lt" => Ok(UseCase::Activity),
            other => Err(Error::InvalidParams(format!("unknown use case {other:?}"))),
        }
    }

    /// The released function, bound into the release-session transcript.
    pub fn psi(self) -> Psi {
        match self {
            UseCase::SmartMeter => Psi::Sum,
            UseCase::Disease => Psi::WeightedSum,
            UseCase::Activity => Psi::Distance,
        }
    }
}

/// A complete parameter set for one use case: ring, scale, message layout and
/// default batch size.
#[derive(Debug, Clone)]
pub struct Preset {
    pub use_case: UseCase,
    /// Ring degree N.
    pub n: usize,
    /// Bit sizes of the modulus chain, most significant (base) prime first.
    pub prime_bits: Vec<u32>,
    /// Encoding scale Δ.
    pub delta: f64,
    /// Message layout covered by the source signature.
    pub layout: MsgLayout,
    /// Default number of signed messages per batch.
    pub n_msgs: usize,
    /// Honest coefficient bound for the commitment-opening bound proof.
    pub beta_x: i64,
}

const DELTA_25: f64 = (1u64 << 25) as f64;

impl Preset {
    /// Production-sized parameters.
    pub fn full(uc: UseCase) -> Preset {
        match uc {
            UseCase::SmartMeter => Preset {
                use_case: uc,
                n: 2048,
                prime_bits: vec![45],
                delta: DELTA_25,
                layout: MsgLayout::smart_meter(16),
                n_msgs: 64,
                beta_x: 20,
            },
            UseCase::Disease => Preset {
                use_case: uc,
                n: 4096,
                prime_bits: vec![31, 25],
                delta: DELTA_25,
                layout: MsgLayout::disease(SNP_PANEL),
                n_msgs: 1,
                beta_x: 20,
            },
            UseCase::Activity => Preset {
                use_case: uc,
                n: 8192,
                prime_bits: vec![34, 25, 25, 25, 25, 25, 25],
                delta: DELTA_25,
                layout: MsgLayout::activity(),
                n_msgs: 256,
                beta_x: 20,
            },
        }
    }

    /// Reduced parameters for fast end-to-end runs: every ring shrinks to
    /// N = 2048 (the modulus chain keeps its shape) and batches are small.
    pub fn reduced(uc: UseCase) -> Preset {
        let mut p = Preset::full(uc);
        p.n = 2048;
        p.n_msgs = match uc {
            UseCase::SmartMeter => 4,
            UseCase::Disease => 1,
            UseCase::Activity => 8,
        };
        p
    }

    /// Secret-key Hamming weight h = ⌊2N/3⌋.
    pub fn hamming(&self) -> usize {
        2 * self.n / 3
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Builds the CKKS instance and matching encoder.
    pub fn build(&self) -> Result<(Ckks, Encoder)> {
        let rp = RingParams::with_prime_bits(self.n, &self.prime_bits)?;
        let params = CkksParams::new(rp, self.delta, self.hamming())?;
        let ckks = Ckks::new(params)?;
        let enc = Encoder::new(self.n, self.delta);
        Ok((ckks, enc))
    }

    /// Rotations the evaluation keys must cover for this use case's program.
    pub fn rotations(&self, ckks: &Ckks) -> Vec<usize> {
        match self.use_case {
            UseCase::SmartMeter | UseCase::Disease => ckks.sum_rotations(),
            UseCase::Activity => vec![1, self.n / 4],
        }
    }

    /// Slot index for each scalar, in message-major order.
    ///
    /// Metering and genome values fill slots contiguously; trace points put
    /// eastings at slots `m` and northings at slots `N/4 + m` so one rotation
    /// by N/4 aligns the two axes.
    pub fn slot_map(&self, n_msgs: usize) -> Result<Vec<usize>> {
        let total = n_msgs * self.layout.vals;
        match self.use_case {
            UseCase::SmartMeter | UseCase::Disease => {
                if total > self.slots() {
                    return Err(Error::InvalidParams(format!(
                        "{} values exceed {} slots",
                        total,
                        self.slots()
                    )));
                }
                Ok((0..total).collect())
            }
            UseCase::Activity => {
                let quarter = self.n / 4;
                if n_msgs > quarter {
                    return Err(Error::InvalidParams(format!(
                        "{n_msgs} trace points exceed {quarter} per-axis slots"
                    )));
                }
                let mut map = Vec::with_capacity(total);
                for m in 0..n_msgs {
                    map.push(m);
                    map.push(quarter + m);
                }
                Ok(map)
            }
        }
    }
}

/// A generated batch: signed messages plus the cleartext the tests and
/// reports compare against.
pub struct SynthBatch {
    pub msgs: Vec<SourceMessage>,
    /// Disease only: per-SNP weights in [0, 1/869] (empty otherwise).
    pub weights: Vec<f64>,
}

/// Generates a synthetic signed batch for the preset's use case.
pub fn generate_batch(
    preset: &Preset,
    n_msgs: usize,
    signer: &SignerKeys,
    seed: &[u8; 32],
) -> Result<SynthBatch> {
    let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, "usecase/data"));
    let layout = &preset.layout;
    let mut msgs = Vec::with_capacity(n_msgs);
    let mut weights = Vec::new();
    match preset.use_case {
        UseCase::SmartMeter => {
            // nonce(128) ‖ household id(16) ‖ timestamp(32), 15-min readings.
            let base_ts: u128 = 1_700_000_000;
            for m in 0..n_msgs {
                let aux = vec![rng.next_u64() as u128 | ((rng.next_u64() as u128) << 64),
                    1000 + m as u128,
                    base_ts + 900 * m as u128];
                let vals: Vec<u64> = (0..layout.vals).map(|_| rng.gen_range(0..=255)).collect();
                msgs.push(SourceMessage::sign(layout, aux, vals, signer)?);
            }
        }
        UseCase::Disease => {
            if n_msgs != 1 {
                return Err(Error::InvalidParams("a genome batch is one message".into()));
            }
            let aux = vec![4242, rng.next_u64() as u128 | ((rng.next_u64() as u128) << 64)];
            let vals: Vec<u64> = (0..layout.vals).map(|_| rng.gen_range(0..=2)).collect();
            msgs.push(SourceMessage::sign(layout, aux, vals, signer)?);
            weights =
                (0..layout.vals).map(|_| rng.gen::<f64>() / SNP_PANEL as f64).collect();
        }
        UseCase::Activity => {
            // A random walk in a local coordinate frame. The box bound keeps
            // rotation wrap-around garbage small enough that masked encoding
            // dust never threatens the modulus chain (see compute_distance).
            let (lo, hi) = (512.0f64, 1536.0f64);
            let mut e: f64 = rng.gen_range(900.0..1100.0);
            let mut n: f64 = rng.gen_range(900.0..1100.0);
            let base_ts: u128 = 1_700_000_000;
            for m in 0..n_msgs {
                let aux = vec![77, rng.next_u64() as u128 | ((rng.next_u64() as u128) << 64),
                    base_ts + 3 * m as u128];
                msgs.push(SourceMessage::sign(
                    layout,
                    aux,
                    vec![e.round() as u64, n.round() as u64],
                    signer,
                )?);
                // ≤29 m per 3 s step, reflected at the box walls.
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let step = rng.gen_range(0.0..29.0);
                e = reflect(e + step * angle.cos(), lo, hi);
                n = reflect(n + step * angle.sin(), lo, hi);
            }
        }
    }
    Ok(SynthBatch { msgs, weights })
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        2.0 * lo - x
    } else if x > hi {
        2.0 * hi - x
    } else {
        x
    }
}

/// The cleartext value of the use case's function on a batch.
pub fn reference_value(preset: &Preset, msgs: &[SourceMessage], weights: &[f64]) -> f64 {
    match preset.use_case {
        UseCase::SmartMeter => {
            msgs.iter().flat_map(|m| m.vals.iter()).map(|&v| v as f64).sum()
        }
        UseCase::Disease => {
            let snps = &msgs[0].vals;
            snps.iter().zip(weights).map(|(&x, &w)| w * x as f64).sum::<f64>()
        }
        UseCase::Activity => {
            let mut total = 0.0;
            for pair in msgs.windows(2) {
                let de = pair[1].vals[0] as f64 - pair[0].vals[0] as f64;
                let dn = pair[1].vals[1] as f64 - pair[0].vals[1] as f64;
                total += (de * de + dn * dn).sqrt();
            }
            total
        }
    }
}

/// Degree-7 least-squares fit of `32·√s` on `[0, 900/1024]`.
///
/// With `s = d²/1024` for a segment of length `d ≤ 30`, `32·√s = d`, so the
/// polynomial maps normalized squared lengths straight to metres.
#[derive(Debug, Clone)]
pub struct SqrtFit {
    /// `g(s) = Σ coeffs[k]·s^k`.
    pub coeffs: [f64; 8],
    pub s_max: f64,
}

pub fn fit_sqrt_poly() -> SqrtFit {
    let s_max = SEGMENT_MAX_M * SEGMENT_MAX_M / SEGMENT_NORM;
    let scale = SEGMENT_NORM.sqrt(); // 32: g(s) = 32·√s exactly dimensions s to metres

    // Dense grid, quadratically spaced toward 0 where uniformly distributed
    // segment lengths concentrate the fit variable.
    const M: usize = 4096;
    let mut grid = Vec::with_capacity(M);
    for i in 0..M {
        let t = (i as f64 + 0.5) / M as f64;
        grid.push(s_max * t * t);
    }

    // Normal equations for the monomial basis, solved by partial-pivot
    // Gaussian elimination. An 8×8 system in f64 keeps ~6 significant digits,
    // far below the fit residual itself.
    let mut g = [[0.0f64; 9]; 8];
    for &s in &grid {
        let y = scale * s.sqrt();
        let mut pw = [0.0f64; 8];
        let mut p = 1.0;
        for item in pw.iter_mut() {
            *item = p;
            p *= s;
        }
        for r in 0..8 {
            for c in 0..8 {
                g[r][c] += pw[r] * pw[c];
            }
            g[r][8] += pw[r] * y;
        }
    }
    for col in 0..8 {
        let piv = (col..8).max_by(|&a, &b| g[a][col].abs().total_cmp(&g[b][col].abs())).unwrap();
        g.swap(col, piv);
        for row in col + 1..8 {
            let f = g[row][col] / g[col][col];
            for c in col..9 {
                g[row][c] -= f * g[col][c];
            }
        }
    }
    let mut coeffs = [0.0f64; 8];
    for row in (0..8).rev() {
        let mut acc = g[row][8];
        for c in row + 1..8 {
            acc -= g[row][c] * coeffs[c];
        }
        coeffs[row] = acc / g[row][row];
    }
    SqrtFit { coeffs, s_max }
}

impl SqrtFit {
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }
}

/// Slot sum: every slot of the result holds the total.
pub fn compute_sum(ckks: &Ckks, keys: &Keys, ct: &Ciphertext) -> Ciphertext {
    ckks.rotate_sum(ct, keys)
}

/// Weighted slot sum with public weights.
///
/// The rotation sum runs *before* the rescale, while the scale is still
/// Δ·2^28: at the two-prime level the key-switch noise is ~2^35 below the
/// scale, whereas rotating after the rescale would leave it only ~2^8 below
/// the O(1) score. The large plaintext scale also keeps weight-encoding dust
/// under 10⁻⁴ of the score; with weights ≤ 1/869 and values ≤ 2 the final
/// value stays below 2·2^29 < q₀/2.
pub fn compute_weighted_sum(
    ckks: &Ckks,
    enc: &Encoder,
    keys: &Keys,
    ct: &Ciphertext,
    weights: &[f64],
) -> Ciphertext {
    let slots = ckks.ctx.n() / 2;
    let mut w = vec![0.0; slots];
    w[..weights.len()].copy_from_slice(weights);
    let tau = (1u64 << 28) as f64;
    let m = enc.encode_real(&ckks.ctx, &w, tau, ct.level());
    let prod = ckks.mul_plain(ct, &m, tau);
    ckks.rescale(&ckks.rotate_sum(&prod, keys))
}

/// Per-segment travelled distances for a trace of `n_pts` points.
///
/// Level budget (seven primes, base first):
///
/// ```text
/// L7 fresh ct ── rotate(1), subtract ─ d
/// L6 d² (relinearize, rescale) ─ sq ── sq + rotate(sq, N/4) ─ t
/// L5 t × mask/1024 ─ v = s ∈ [0, 0.88) on live slots, ≈0 elsewhere
/// L4 v² ─ u
/// L3 u² ─ u2;  u × mask-coefficients ─ EA, EB, OA, OB (affine in u)
/// L2 EA + u2·EB ─ E;  OA + u2·OB ─ O
/// L1 E + v·O ─ per-segment g(s) ≈ metres
/// ```
///
/// The plaintext masks zero every slot except the `n_pts − 1` live segment
/// slots; plaintext scales are chosen backwards from the final level so both
/// L1 addends land on exactly the same scale.
pub fn compute_distance(
    ckks: &Ckks,
    enc: &Encoder,
    keys: &Keys,
    ct: &Ciphertext,
    n_pts: usize,
    fit: &SqrtFit,
) -> Result<Ciphertext> {
    let n = ckks.ctx.n();
    let quarter = n / 4;
    if ckks.top_level() != 7 || ct.level() != 7 {
        return Err(Error::InvalidParams("the distance program needs a 7-modulus chain".into()));
    }
    if n_pts < 2 || n_pts > quarter {
        return Err(Error::InvalidParams(format!("trace length {n_pts} outside [2, {quarter}]")));
    }
    let live = n_pts - 1;
    let delta = ckks.params.delta;
    let c = &fit.coeffs;

    // Squared per-segment differences, both axes folded onto the easting slots.
    let d = ckks.sub(&ckks.rotate(ct, 1, keys), ct);
    let sq = ckks.rescale(&ckks.mul_relin(&d, &d, &keys.rlk));
    let t = ckks.add(&sq, &ckks.rotate(&sq, quarter, keys));

    // Normalize to the fit variable and kill garbage slots in one multiply.
    let v = mul_plain_masked(ckks, enc, &t, 1.0 / SEGMENT_NORM, live, delta);
    let u = ckks.rescale(&ckks.mul_relin(&v, &v, &keys.rlk));
    let u2 = ckks.rescale(&ckks.mul_relin(&u, &u, &keys.rlk));

    // Backward scale plan: choose the inner targets so E and v·O meet at L1
    // on the same scale. Primes are ≈2^25 but not exact powers of two, so
    // these products cannot be replaced by constants.
    let p1 = ckks.ctx.prime(1) as f64;
    let p2 = ckks.ctx.prime(2) as f64;
    let s_o = u2.scale * delta / p2; // O's scale at L2 when OB targets Δ
    let s_final = delta * s_o / p1; // scale of v·O and hence of the result
    let s_eb = s_final * p2 / u2.scale; // EB target so E lands on s_final

    // Paterson–Stockmeyer: g(s) = E(u) + v·O(u) with u = s²,
    // E(u) = (c0 + c2·u) + u²·(c4 + c6·u), O likewise on odd coefficients.
    let ea = masked_affine(ckks, enc, &u, c[2], c[0], live, s_final);
    let eb = masked_affine(ckks, enc, &u, c[6], c[4], live, s_eb);
    let oa = masked_affine(ckks, enc, &u, c[3], c[1], live, s_o);
    let ob = masked_affine(ckks, enc, &u, c[7], c[5], live, delta);

    let e = ckks.add(
        &ckks.mod_down(&ea, 2),
        &ckks.rescale(&ckks.mul_relin(&u2, &eb, &keys.rlk)),
    );
    let o = ckks.add(
        &ckks.mod_down(&oa, 2),
        &ckks.rescale(&ckks.mul_relin(&u2, &ob, &keys.rlk)),
    );
    let odd = ckks.rescale(&ckks.mul_relin(&ckks.mod_down(&v, 2), &o, &keys.rlk));
    Ok(ckks.add(&ckks.mod_down(&e, 1), &odd))
}

/// Multiplies by a constant over the live slots (zero elsewhere), choosing the
/// plaintext scale so the rescaled product lands exactly on `target`.
fn mul_plain_masked(
    ckks: &Ckks,
    enc: &Encoder,
    ct: &Ciphertext,
    value: f64,
    live: usize,
    target: f64,
) -> Ciphertext {
    let slots = ckks.ctx.n() / 2;
    let mut vals = vec![0.0; slots];
    vals[..live].fill(value);
    mul_plain_to(ckks, enc, ct, &vals, target)
}

/// `ct × plaintext(vals)` rescaled onto the scale `target`.
fn mul_plain_to(
    ckks: &Ckks,
    enc: &Encoder,
    ct: &Ciphertext,
    vals: &[f64],
    target: f64,
) -> Ciphertext {
    let lvl = ct.level();
    let p_drop = ckks.ctx.prime(lvl - 1) as f64;
    let tau = target * p_drop / ct.scale;
    let m = enc.encode_real(&ckks.ctx, vals, tau, lvl);
    ckks.rescale(&ckks.mul_plain(ct, &m, tau))
}

/// `mul·x + add` over the live slots at scale `target`, one level down.
fn masked_affine(
    ckks: &Ckks,
    enc: &Encoder,
    x: &Ciphertext,
    mul: f64,
    add: f64,
    live: usize,
    target: f64,
) -> Ciphertext {
    let slots = ckks.ctx.n() / 2;
    let prod = mul_plain_masked(ckks, enc, x, mul, live, target);
    let mut vals = vec![0.0; slots];
    vals[..live].fill(add);
    let c = enc.encode_real(&ckks.ctx, &vals, prod.scale, prod.level());
    ckks.add_plain(&prod, &c)
}

/// Runs the preset's homomorphic program on a fresh ciphertext.
pub fn run_computation(
    preset: &Preset,
    ckks: &Ckks,
    enc: &Encoder,
    keys: &Keys,
    ct: &Ciphertext,
    n_msgs: usize,
    weights: &[f64],
    fit: Option<&SqrtFit>,
) -> Result<Ciphertext> {
    match preset.use_case {
        UseCase::SmartMeter => Ok(compute_sum(ckks, keys, ct)),
        UseCase::Disease => Ok(compute_weighted_sum(ckks, enc, keys, ct, weights)),
        UseCase::Activity => {
            let fit = fit.ok_or_else(|| {
                Error::InvalidParams("the distance program needs a square-root fit".into())
            })?;
            compute_distance(ckks, enc, keys, ct, n_msgs, fit)
        }
    }
}

/// Reads the released plaintext back to the function value.
pub fn extract_value(
    preset: &Preset,
    enc: &Encoder,
    ctx: &RingContext,
    m: &RingElem,
    scale: f64,
    n_msgs: usize,
) -> f64 {
    let slots = enc.decode(ctx, m, scale);
    match preset.use_case {
        UseCase::SmartMeter | UseCase::Disease => slots[0],
        UseCase::Activity => slots[..n_msgs - 1].iter().sum(),
    }
}
