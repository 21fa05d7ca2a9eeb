//! Blinded result release.
//!
//! After computing homomorphically, the provider holds a result ciphertext
//! but no decryption key; the user holds the key but must not be able to
//! misreport the plaintext. The exchange settles both in four messages:
//!
//! 1. provider → user: the result blinded as ν·ct + η, plus a hash
//!    commitment to (ν, η);
//! 2. user → provider: a hash commitment to the decrypted blinded
//!    polynomial m̂_B (made before the user can recognize the result);
//! 3. provider → user: the opened (ν, η). The user checks it against the
//!    commitment from step 1 and unblinds: m̂ = ν⁻¹·(m̂_B − η);
//! 4. user → provider: (m̂, m̂_B) with the commitment opening. The provider
//!    checks the commitment and the exact ring identity ν·m̂ + η = m̂_B.
//!
//! Decryption is linear, so the identity holds exactly for an honest user;
//! a user claiming a different m̂ would need to have committed to
//! ν·m̂ + η before learning (ν, η), which pins a uniform value of Z_q per
//! coefficient. ν is sampled invertible so unblinding is well defined.
//!
//! Each session is scoped to one declared computation ψ from a fixed
//! allow-list; every message carries the session id and ψ, and both state
//! machines reject anything out of order, out of session, or off-list.

use crate::ckks::{Ciphertext, Ckks, SecretKey};
use crate::error::{Error, Result};
use crate::params::pow_mod;
use crate::ring::{uniform_below, RingContext, RingElem};
use crate::wire::{Reader, Tag, Writer};
use crate::xof::derive_seed;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// The computations a release session may be opened for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Psi {
    Identity = 1,
    Sum = 2,
    WeightedSum = 3,
    Distance = 4,
}

impl Psi {
    pub const ALL: [Psi; 4] = [Psi::Identity, Psi::Sum, Psi::WeightedSum, Psi::Distance];

    pub fn from_u8(v: u8) -> Result<Psi> {
        match v {
            1 => Ok(Psi::Identity),
            2 => Ok(Psi::Sum),
            3 => Ok(Psi::WeightedSum),
            4 => Ok(Psi::Distance),
            _ => Err(Error::Malformed(format!("unknown computation tag {v}"))),
        }
    }
}

/// Blinding pair (ν, η) as residues per active prime; ν is invertible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindFactors {
    pub nu: Vec<u64>,
    pub eta: Vec<u64>,
}

/// Samples ν uniform over Z_q^* and η uniform over Z_q. By the residue
/// decomposition of Z_q this is exactly independent per-prime sampling,
/// with ν's residues rejected at zero.
pub fn sample_blind_factors(ctx: &RingContext, level: usize, rng: &mut dyn RngCore) -> BlindFactors {
    let nu = (0..level)
        .map(|i| loop {
            let v = uniform_below(ctx.prime(i), rng);
            if v != 0 {
                return v;
            }
        })
        .collect();
    let eta = (0..level).map(|i| uniform_below(ctx.prime(i), rng)).collect();
    BlindFactors { nu, eta }
}

fn factors_well_formed(ctx: &RingContext, f: &BlindFactors, level: usize) -> bool {
    f.nu.len() == level
        && f.eta.len() == level
        && (0..level).all(|i| f.nu[i] != 0 && f.nu[i] < ctx.prime(i) && f.eta[i] < ctx.prime(i))
}

/// ν·ct + η, the provider-side blinding. η enters the constant coefficient
/// of c0 only, so decryption carries it through additively.
pub fn blind_ciphertext(ctx: &RingContext, ct: &Ciphertext, f: &BlindFactors) -> Ciphertext {
    let c0 = ctx.add(
        &ctx.mul_scalar_residues(&ct.c0, &f.nu),
        &ctx.constant_residues(&f.eta, ct.level()),
    );
    let c1 = ctx.mul_scalar_residues(&ct.c1, &f.nu);
    Ciphertext { c0, c1, scale: ct.scale }
}

/// ν⁻¹·(m̂_B − η), the user-side unblinding.
pub fn unblind(ctx: &RingContext, m_b: &RingElem, f: &BlindFactors) -> RingElem {
    let level = m_b.level();
    let inv: Vec<u64> = (0..level)
        .map(|i| {
            let p = ctx.prime(i);
            pow_mod(f.nu[i], p - 2, p)
        })
        .collect();
    let shifted = ctx.sub(m_b, &ctx.constant_residues(&f.eta, level));
    ctx.mul_scalar_residues(&shifted, &inv)
}

const OPEN_LEN: usize = 16;

fn blind_commitment(session: &[u8; 16], psi: Psi, f: &BlindFactors, r: &[u8; OPEN_LEN]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"crisp/release/blind");
    h.update(session);
    h.update([psi as u8]);
    h.update((f.nu.len() as u16).to_be_bytes());
    for &v in f.nu.iter().chain(&f.eta) {
        h.update(v.to_be_bytes());
    }
    h.update(r);
    h.finalize().into()
}

fn result_commitment(
    ctx: &RingContext,
    session: &[u8; 16],
    psi: Psi,
    m_b: &RingElem,
    r: &[u8; OPEN_LEN],
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"crisp/release/result");
    h.update(session);
    h.update([psi as u8]);
    h.update(ctx.serialize_elem(m_b));
    h.update(r);
    h.finalize().into()
}

/// The four protocol messages.
#[derive(Debug, Clone, PartialEq)]
pub enum ReleaseMsg {
    Blinded { session: [u8; 16], psi: Psi, ct: Ciphertext, blind_commit: [u8; 32] },
    ResultCommit { session: [u8; 16], psi: Psi, result_commit: [u8; 32] },
    BlindOpen { session: [u8; 16], psi: Psi, factors: BlindFactors, r_sp: [u8; OPEN_LEN] },
    ResultOpen { session: [u8; 16], psi: Psi, m_hat: RingElem, m_b: RingElem, r_u: [u8; OPEN_LEN] },
}

pub fn serialize_release_msg(ctx: &RingContext, msg: &ReleaseMsg) -> Vec<u8> {
    let mut w = Writer::with_header(Tag::ReleaseMsg);
    match msg {
        ReleaseMsg::Blinded { session, psi, ct, blind_commit } => {
            w.put_u8(1);
            w.put_bytes(session);
            w.put_u8(*psi as u8);
            w.put_blob(&ctx.serialize_elem(&ct.c0));
            w.put_blob(&ctx.serialize_elem(&ct.c1));
            w.put_f64(ct.scale);
            w.put_bytes(blind_commit);
        }
        ReleaseMsg::ResultCommit { session, psi, result_commit } => {
            w.put_u8(2);
            w.put_bytes(session);
            w.put_u8(*psi as u8);
            w.put_bytes(result_commit);
        }
        ReleaseMsg::BlindOpen { session, psi, factors, r_sp } => {
            w.put_u8(3);
            w.put_bytes(session);
            w.put_u8(*psi as u8);
            w.put_u16(factors.nu.len() as u16);
            for &v in factors.nu.iter().chain(&factors.eta) {
                w.put_u64(v);
            }
            w.put_bytes(r_sp);
        }
        ReleaseMsg::ResultOpen { session, psi, m_hat, m_b, r_u } => {
            w.put_u8(4);
            w.put_bytes(session);
            w.put_u8(*psi as u8);
            w.put_blob(&ctx.serialize_elem(m_hat));
            w.put_blob(&ctx.serialize_elem(m_b));
            w.put_bytes(r_u);
        }
    }
    w.finish()
}

pub fn deserialize_release_msg(ctx: &RingContext, bytes: &[u8]) -> Result<ReleaseMsg> {
    let mut r = Reader::expect_header(bytes, Tag::ReleaseMsg)?;
    let kind = r.get_u8()?;
    let mut session = [0u8; 16];
    session.copy_from_slice(r.take(16)?);
    let psi = Psi::from_u8(r.get_u8()?)?;
    let msg = match kind {
        1 => {
            let c0 = ctx.deserialize_elem(r.get_blob()?)?;
            let c1 = ctx.deserialize_elem(r.get_blob()?)?;
            let scale = r.get_f64()?;
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::Malformed("blinded scale out of range".into()));
            }
            let mut blind_commit = [0u8; 32];
            blind_commit.copy_from_slice(r.take(32)?);
            ReleaseMsg::Blinded { session, psi, ct: Ciphertext { c0, c1, scale }, blind_commit }
        }
        2 => {
            let mut result_commit = [0u8; 32];
            result_commit.copy_from_slice(r.take(32)?);
            ReleaseMsg::ResultCommit { session, psi, result_commit }
        }
        3 => {
            let level = r.get_u16()? as usize;
            if level == 0 || level > ctx.max_level() {
                return Err(Error::Malformed(format!("factor level {level} out of range")));
            }
            let mut get = |n: usize| -> Result<Vec<u64>> {
                (0..n).map(|_| r.get_u64()).collect()
            };
            let nu = get(level)?;
            let eta = get(level)?;
            let mut r_sp = [0u8; OPEN_LEN];
            r_sp.copy_from_slice(r.take(OPEN_LEN)?);
            ReleaseMsg::BlindOpen { session, psi, factors: BlindFactors { nu, eta }, r_sp }
        }
        4 => {
            let m_hat = ctx.deserialize_elem(r.get_blob()?)?;
            let m_b = ctx.deserialize_elem(r.get_blob()?)?;
            let mut r_u = [0u8; OPEN_LEN];
            r_u.copy_from_slice(r.take(OPEN_LEN)?);
            ReleaseMsg::ResultOpen { session, psi, m_hat, m_b, r_u }
        }
        k => return Err(Error::Malformed(format!("unknown release message kind {k}"))),
    };
    r.finish()?;
    Ok(msg)
}

/// Shared session phases. Provider terminal success is `Accepted`; user
/// terminal success is `ResultOpened`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Init,
    BlindedSent,
    ResultCommitted,
    BlindOpened,
    ResultOpened,
    Accepted,
    Rejected,
}

/// Provider side of one release session.
pub struct SpSession<'a> {
    ckks: &'a Ckks,
    pub state: State,
    psi: Psi,
    session: [u8; 16],
    level: usize,
    factors: BlindFactors,
    r_sp: [u8; OPEN_LEN],
    user_commit: Option<[u8; 32]>,
    /// The verified decryption m̂ once the session accepts.
    pub result: Option<RingElem>,
}

impl<'a> SpSession<'a> {
    /// Blinds the result and opens the session; returns the first message.
    pub fn start(ckks: &'a Ckks, ct_res: &Ciphertext, psi: Psi, seed: [u8; 32]) -> (Self, ReleaseMsg) {
        let mut rng = ChaCha20Rng::from_seed(derive_seed(&seed, "release/sp"));
        let mut session = [0u8; 16];
        rng.fill_bytes(&mut session);
        let factors = sample_blind_factors(&ckks.ctx, ct_res.level(), &mut rng);
        let mut r_sp = [0u8; OPEN_LEN];
        rng.fill_bytes(&mut r_sp);
        let ct_b = blind_ciphertext(&ckks.ctx, ct_res, &factors);
        let blind_commit = blind_commitment(&session, psi, &factors, &r_sp);
        let sp = SpSession {
            ckks,
            state: State::BlindedSent,
            psi,
            session,
            level: ct_res.level(),
            factors,
            r_sp,
            user_commit: None,
            result: None,
        };
        (sp, ReleaseMsg::Blinded { session, psi, ct: ct_b, blind_commit })
    }

    fn reject(&mut self, why: &str) -> Error {
        self.state = State::Rejected;
        Error::ReleaseAborted(why.into())
    }

    /// Step 2 → 3: accepts the user's result commitment, opens the blind.
    pub fn receive_result_commit(&mut self, msg: &ReleaseMsg) -> Result<ReleaseMsg> {
        if self.state != State::BlindedSent {
            return Err(self.reject("commitment arrived out of order"));
        }
        let ReleaseMsg::ResultCommit { session, psi, result_commit } = msg else {
            return Err(self.reject("expected a result commitment"));
        };
        if *session != self.session || *psi != self.psi {
            return Err(self.reject("commitment names a different session"));
        }
        self.user_commit = Some(*result_commit);
        self.state = State::BlindOpened;
        Ok(ReleaseMsg::BlindOpen {
            session: self.session,
            psi: self.psi,
            factors: self.factors.clone(),
            r_sp: self.r_sp,
        })
    }

    /// Step 4: checks the opening against the commitment and the blinding
    /// identity; on success the session holds the verified plaintext.
    pub fn receive_result_open(&mut self, msg: &ReleaseMsg) -> Result<&RingElem> {
        if self.state != State::BlindOpened {
            return Err(self.reject("result opening arrived out of order"));
        }
        let ReleaseMsg::ResultOpen { session, psi, m_hat, m_b, r_u } = msg else {
            return Err(self.reject("expected a result opening"));
        };
        if *session != self.session || *psi != self.psi {
            return Err(self.reject("opening names a different session"));
        }
        let ctx = &self.ckks.ctx;
        if m_hat.level() != self.level
            || m_b.level() != self.level
            || m_hat.n() != ctx.n()
            || m_b.n() != ctx.n()
        {
            return Err(self.reject("opened polynomials have the wrong shape"));
        }
        let commit = result_commitment(ctx, &self.session, self.psi, m_b, r_u);
        if Some(commit) != self.user_commit {
            return Err(self.reject("result does not match the committed value"));
        }
        // ν·m̂ + η must equal m̂_B exactly; decryption is linear, so any
        // other claimed m̂ had to be committed blind.
        let rebuilt = ctx.add(
            &ctx.mul_scalar_residues(m_hat, &self.factors.nu),
            &ctx.constant_residues(&self.factors.eta, self.level),
        );
        if rebuilt != *m_b {
            return Err(self.reject("claimed result fails the blinding identity"));
        }
        self.state = State::Accepted;
        self.result = Some(m_hat.clone());
        Ok(self.result.as_ref().unwrap())
    }
}

/// User side of one release session.
pub struct UserSession<'a> {
    ckks: &'a Ckks,
    sk: &'a SecretKey,
    pub state: State,
    psi: Psi,
    r_u: [u8; OPEN_LEN],
    session: Option<[u8; 16]>,
    blind_commit: Option<[u8; 32]>,
    m_b: Option<RingElem>,
    scale: f64,
    /// The unblinded decryption m̂ once the blind opening checks out.
    pub result: Option<RingElem>,
}

impl<'a> UserSession<'a> {
    pub fn new(ckks: &'a Ckks, sk: &'a SecretKey, psi: Psi, seed: [u8; 32]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(derive_seed(&seed, "release/user"));
        let mut r_u = [0u8; OPEN_LEN];
        rng.fill_bytes(&mut r_u);
        UserSession {
            ckks,
            sk,
            state: State::Init,
            psi,
            r_u,
            session: None,
            blind_commit: None,
            m_b: None,
            scale: 0.0,
            result: None,
        }
    }

    fn reject(&mut self, why: &str) -> Error {
        self.state = State::Rejected;
        Error::ReleaseAborted(why.into())
    }

    /// Step 1 → 2: decrypts the blinded result and commits to it.
    pub fn receive_blinded(&mut self, msg: &ReleaseMsg) -> Result<ReleaseMsg> {
        if self.state != State::Init {
            return Err(self.reject("blinded result arrived out of order"));
        }
        let ReleaseMsg::Blinded { session, psi, ct, blind_commit } = msg else {
            return Err(self.reject("expected a blinded result"));
        };
        if *psi != self.psi {
            return Err(self.reject("session is scoped to a different computation"));
        }
        if ct.level() == 0 || ct.level() > self.ckks.top_level() || ct.c0.n() != self.ckks.ctx.n() {
            return Err(self.reject("blinded ciphertext has the wrong shape"));
        }
        let m_b = self.ckks.decrypt(self.sk, ct);
        let commit = result_commitment(&self.ckks.ctx, session, self.psi, &m_b, &self.r_u);
        self.session = Some(*session);
        self.blind_commit = Some(*blind_commit);
        self.m_b = Some(m_b);
        self.scale = ct.scale;
        self.state = State::ResultCommitted;
        Ok(ReleaseMsg::ResultCommit { session: *session, psi: self.psi, result_commit: commit })
    }

    /// Step 3 → 4: verifies the blind opening, unblinds, opens the result.
    pub fn receive_blind_open(&mut self, msg: &ReleaseMsg) -> Result<ReleaseMsg> {
        if self.state != State::ResultCommitted {
            return Err(self.reject("blind opening arrived out of order"));
        }
        let ReleaseMsg::BlindOpen { session, psi, factors, r_sp } = msg else {
            return Err(self.reject("expected a blind opening"));
        };
        if Some(*session) != self.session || *psi != self.psi {
            return Err(self.reject("opening names a different session"));
        }
        let ctx = &self.ckks.ctx;
        let m_b = self.m_b.as_ref().unwrap();
        if !factors_well_formed(ctx, factors, m_b.level()) {
            return Err(self.reject("blinding factors out of range"));
        }
        let commit = blind_commitment(session, self.psi, factors, r_sp);
        if Some(commit) != self.blind_commit {
            return Err(self.reject("provider opened a different blind than committed"));
        }
        let m_hat = unblind(ctx, m_b, factors);
        self.state = State::ResultOpened;
        let out = ReleaseMsg::ResultOpen {
            session: *session,
            psi: self.psi,
            m_hat: m_hat.clone(),
            m_b: m_b.clone(),
            r_u: self.r_u,
        };
        self.result = Some(m_hat);
        Ok(out)
    }

    /// The unblinded raw decryption and its scale, once opened.
    pub fn result(&self) -> Option<(&RingElem, f64)> {
        self.result.as_ref().map(|r| (r, self.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::{Ckks, CkksParams, Keys};
    use crate::params::RingParams;
    use rand::Rng;

    fn toy_ckks() -> (Ckks, Keys) {
        let ring = RingParams::with_prime_bits(64, &[45, 25]).unwrap();
        let ckks = Ckks::new(CkksParams::new(ring, (1u64 << 20) as f64, 20).unwrap()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let keys = ckks.keygen(&[], &mut rng);
        (ckks, keys)
    }

    fn some_ct(ckks: &Ckks, keys: &Keys, seed: u64) -> Ciphertext {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let enc = crate::encode::Encoder::new(ckks.ctx.n(), ckks.params.delta);
        let z: Vec<i64> = (0..enc.slots()).map(|_| rng.gen_range(-100..100)).collect();
        let m = enc.encode_ints(&ckks.ctx, &z, ckks.top_level());
        ckks.encrypt(&keys.pk, &m, ckks.params.delta, &mut rng).0
    }

    fn run_honest(
        ckks: &Ckks,
        keys: &Keys,
        ct: &Ciphertext,
        psi: Psi,
        seed: u64,
    ) -> (State, State, RingElem, RingElem) {
        let (mut sp, m1) = SpSession::start(ckks, ct, psi, [seed as u8; 32]);
        let mut user = UserSession::new(ckks, &keys.sk, psi, [seed.wrapping_add(1) as u8; 32]);
        let m2 = user.receive_blinded(&m1).unwrap();
        let m3 = sp.receive_result_commit(&m2).unwrap();
        let m4 = user.receive_blind_open(&m3).unwrap();
        let got = sp.receive_result_open(&m4).unwrap().clone();
        let (user_res, _) = user.result().unwrap();
        (sp.state, user.state, got, user_res.clone())
    }

    #[test]
    fn honest_sessions_release_the_exact_decryption() {
        let (ckks, keys) = toy_ckks();
        for seed in 0..25u64 {
            let ct = some_ct(&ckks, &keys, 1000 + seed);
            let expected = ckks.decrypt(&keys.sk, &ct);
            let (sp_state, user_state, sp_res, user_res) =
                run_honest(&ckks, &keys, &ct, Psi::Sum, seed);
            assert_eq!(sp_state, State::Accepted);
            assert_eq!(user_state, State::ResultOpened);
            assert_eq!(sp_res, expected, "provider must obtain the exact decryption");
            assert_eq!(user_res, expected, "user must obtain the exact decryption");
        }
    }

    #[test]
    fn blinding_identities_hold_exactly() {
        let (ckks, keys) = toy_ckks();
        let ctx = &ckks.ctx;
        let ct = some_ct(&ckks, &keys, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = sample_blind_factors(ctx, ct.level(), &mut rng);
            // Dec(ν·ct + η) = ν·Dec(ct) + η, and unblind inverts it.
            let ct_b = blind_ciphertext(ctx, &ct, &f);
            let dec_b = ckks.decrypt(&keys.sk, &ct_b);
            let dec = ckks.decrypt(&keys.sk, &ct);
            let lifted = ctx.add(
                &ctx.mul_scalar_residues(&dec, &f.nu),
                &ctx.constant_residues(&f.eta, ct.level()),
            );
            assert_eq!(dec_b, lifted);
            assert_eq!(unblind(ctx, &dec_b, &f), dec);
        }
    }

    #[test]
    fn cheating_user_claims_are_rejected() {
        let (ckks, keys) = toy_ckks();
        let ct = some_ct(&ckks, &keys, 31);

        // Open a different m̂ with the committed m̂_B: identity fails.
        {
            let (mut sp, m1) = SpSession::start(&ckks, &ct, Psi::Sum, [1u8; 32]);
            let mut user = UserSession::new(&ckks, &keys.sk, Psi::Sum, [2u8; 32]);
            let m2 = user.receive_blinded(&m1).unwrap();
            let m3 = sp.receive_result_commit(&m2).unwrap();
            let m4 = user.receive_blind_open(&m3).unwrap();
            let ReleaseMsg::ResultOpen { session, psi, mut m_hat, m_b, r_u } = m4 else {
                panic!()
            };
            m_hat.c[0][0] = (m_hat.c[0][0] + 1) % ckks.ctx.prime(0);
            let forged = ReleaseMsg::ResultOpen { session, psi, m_hat, m_b, r_u };
            assert!(sp.receive_result_open(&forged).is_err());
            assert_eq!(sp.state, State::Rejected);
        }

        // Open a consistent pair (m̂', ν·m̂'+η): commitment fails.
        {
            let (mut sp, m1) = SpSession::start(&ckks, &ct, Psi::Sum, [3u8; 32]);
            let mut user = UserSession::new(&ckks, &keys.sk, Psi::Sum, [4u8; 32]);
            let m2 = user.receive_blinded(&m1).unwrap();
            let m3 = sp.receive_result_commit(&m2).unwrap();
            let ReleaseMsg::BlindOpen { factors, .. } = &m3 else { panic!() };
            let m4 = user.receive_blind_open(&m3).unwrap();
            let ReleaseMsg::ResultOpen { session, psi, mut m_hat, r_u, .. } = m4 else {
                panic!()
            };
            m_hat.c[0][0] = (m_hat.c[0][0] + 1) % ckks.ctx.prime(0);
            let fake_mb = ckks.ctx.add(
                &ckks.ctx.mul_scalar_residues(&m_hat, &factors.nu),
                &ckks.ctx.constant_residues(&factors.eta, m_hat.level()),
            );
            let forged = ReleaseMsg::ResultOpen { session, psi, m_hat, m_b: fake_mb, r_u };
            assert!(sp.receive_result_open(&forged).is_err());
            assert_eq!(sp.state, State::Rejected);
        }
    }

    #[test]
    fn equivocating_provider_is_rejected_by_the_user() {
        let (ckks, keys) = toy_ckks();
        let ct = some_ct(&ckks, &keys, 41);
        let (mut sp, m1) = SpSession::start(&ckks, &ct, Psi::Distance, [5u8; 32]);
        let mut user = UserSession::new(&ckks, &keys.sk, Psi::Distance, [6u8; 32]);
        let m2 = user.receive_blinded(&m1).unwrap();
        let m3 = sp.receive_result_commit(&m2).unwrap();
        let ReleaseMsg::BlindOpen { session, psi, mut factors, r_sp } = m3 else { panic!() };
        // The provider tries to open a different η than it blinded with.
        factors.eta[0] = (factors.eta[0] + 1) % ckks.ctx.prime(0);
        let forged = ReleaseMsg::BlindOpen { session, psi, factors, r_sp };
        assert!(user.receive_blind_open(&forged).is_err());
        assert_eq!(user.state, State::Rejected);

        // Zero (non-invertible) ν residues are rejected before anything else.
        let ct2 = some_ct(&ckks, &keys, 43);
        let (mut sp2, n1) = SpSession::start(&ckks, &ct2, Psi::Distance, [7u8; 32]);
        let mut user2 = UserSession::new(&ckks, &keys.sk, Psi::Distance, [8u8; 32]);
        let n2 = user2.receive_blinded(&n1).unwrap();
        let n3 = sp2.receive_result_commit(&n2).unwrap();
        let ReleaseMsg::BlindOpen { session, psi, mut factors, r_sp } = n3 else { panic!() };
        factors.nu[0] = 0;
        let forged = ReleaseMsg::BlindOpen { session, psi, factors, r_sp };
        assert!(user2.receive_blind_open(&forged).is_err());
        assert_eq!(user2.state, State::Rejected);
    }

    #[test]
    fn sessions_are_scoped_to_one_computation() {
        let (ckks, keys) = toy_ckks();
        let ct = some_ct(&ckks, &keys, 51);
        let (_sp, m1) = SpSession::start(&ckks, &ct, Psi::Sum, [9u8; 32]);
        // User agreed to a distance query, provider blinds a sum.
        let mut user = UserSession::new(&ckks, &keys.sk, Psi::Distance, [10u8; 32]);
        assert!(user.receive_blinded(&m1).is_err());
        assert_eq!(user.state, State::Rejected);
    }

    #[test]
    fn out_of_order_or_cross_session_messages_never_reach_accepted() {
        let (ckks, keys) = toy_ckks();
        let ct = some_ct(&ckks, &keys, 61);

        // An honest transcript to replay from.
        let (mut sp0, m1) = SpSession::start(&ckks, &ct, Psi::Sum, [11u8; 32]);
        let mut user0 = UserSession::new(&ckks, &keys.sk, Psi::Sum, [12u8; 32]);
        let m2 = user0.receive_blinded(&m1).unwrap();
        let m3 = sp0.receive_result_commit(&m2).unwrap();
        let m4 = user0.receive_blind_open(&m3).unwrap();

        // Feeding the opening before the commitment rejects and sticks.
        let (mut sp, _) = SpSession::start(&ckks, &ct, Psi::Sum, [11u8; 32]);
        assert!(sp.receive_result_open(&m4).is_err());
        assert_eq!(sp.state, State::Rejected);
        assert!(sp.receive_result_commit(&m2).is_err(), "rejected sessions stay rejected");
        assert_eq!(sp.state, State::Rejected);

        // Replaying a transcript into a fresh session fails on session id.
        let (mut sp_new, _) = SpSession::start(&ckks, &ct, Psi::Sum, [13u8; 32]);
        assert!(sp_new.receive_result_commit(&m2).is_err());

        // A second user instance may replay the provider's messages — that
        // is just re-decryption — but its opening carries fresh commitment
        // randomness, which the original provider rejects.
        let mut user_new = UserSession::new(&ckks, &keys.sk, Psi::Sum, [14u8; 32]);
        let m2_new = user_new.receive_blinded(&m1).unwrap();
        assert_ne!(m2_new, m2, "commitment randomness must differ per session");
        let m4_new = user_new.receive_blind_open(&m3).unwrap();
        assert!(sp0.receive_result_open(&m4_new).is_err());
        assert_eq!(sp0.state, State::Rejected);

        // Random message storms against fresh sessions never end accepted.
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let msgs = [m1.clone(), m2.clone(), m3.clone(), m4.clone()];
        for trial in 0..100 {
            let (mut sp_f, first) = SpSession::start(&ckks, &ct, Psi::Sum, [trial as u8; 32]);
            let mut user_f =
                UserSession::new(&ckks, &keys.sk, Psi::Sum, [trial as u8 ^ 0x55; 32]);
            let _ = first; // deliberately dropped: the storm replaces it
            for _ in 0..6 {
                let pick = &msgs[rng.gen_range(0..4)];
                match rng.gen_range(0..4) {
                    0 => {
                        let _ = user_f.receive_blinded(pick);
                    }
                    1 => {
                        let _ = user_f.receive_blind_open(pick);
                    }
                    2 => {
                        let _ = sp_f.receive_result_commit(pick);
                    }
                    _ => {
                        let _ = sp_f.receive_result_open(pick);
                    }
                }
            }
            assert_ne!(sp_f.state, State::Accepted, "trial {trial}");
            assert_ne!(user_f.state, State::ResultOpened, "trial {trial}");
        }
    }

    #[test]
    fn messages_round_trip_their_wire_form() {
        let (ckks, keys) = toy_ckks();
        let ctx = &ckks.ctx;
        let ct = some_ct(&ckks, &keys, 71);
        let (mut sp, m1) = SpSession::start(&ckks, &ct, Psi::WeightedSum, [15u8; 32]);
        let mut user = UserSession::new(&ckks, &keys.sk, Psi::WeightedSum, [16u8; 32]);
        let m2 = user.receive_blinded(&m1).unwrap();
        let m3 = sp.receive_result_commit(&m2).unwrap();
        let m4 = user.receive_blind_open(&m3).unwrap();
        for m in [&m1, &m2, &m3, &m4] {
            let bytes = serialize_release_msg(ctx, m);
            let back = deserialize_release_msg(ctx, &bytes).unwrap();
            assert_eq!(back, *m);
        }
        // A full run through serialized messages still accepts.
        let (mut sp2, w1) = SpSession::start(&ckks, &ct, Psi::WeightedSum, [17u8; 32]);
        let mut user2 = UserSession::new(&ckks, &keys.sk, Psi::WeightedSum, [18u8; 32]);
        let w2 = user2
            .receive_blinded(&deserialize_release_msg(ctx, &serialize_release_msg(ctx, &w1)).unwrap())
            .unwrap();
        let w3 = sp2
            .receive_result_commit(&deserialize_release_msg(ctx, &serialize_release_msg(ctx, &w2)).unwrap())
            .unwrap();
        let w4 = user2
            .receive_blind_open(&deserialize_release_msg(ctx, &serialize_release_msg(ctx, &w3)).unwrap())
            .unwrap();
        sp2.receive_result_open(&deserialize_release_msg(ctx, &serialize_release_msg(ctx, &w4)).unwrap())
            .unwrap();
        assert_eq!(sp2.state, State::Accepted);

        // Junk and truncations parse to errors, not panics.
        let bytes = serialize_release_msg(ctx, &m1);
        for cut in [0, 1, 7, bytes.len() / 2, bytes.len() - 1] {
            assert!(deserialize_release_msg(ctx, &bytes[..cut]).is_err());
        }
        let mut wrong_kind = bytes.clone();
        wrong_kind[6] = 9;
        assert!(deserialize_release_msg(ctx, &wrong_kind).is_err());
    }

    #[test]
    fn blind_factors_are_uniform_per_residue() {
        // χ² proxy over the toy prime: ν over [1, p), η over [0, p),
        // 10⁴ samples each.
        let ctx = RingContext::new(crate::params::toy_ring()).unwrap();
        let p = ctx.prime(0);
        let mut rng = ChaCha20Rng::seed_from_u64(123);
        let trials = 10_000usize;
        let mut nu_counts = vec![0usize; p as usize];
        let mut eta_counts = vec![0usize; p as usize];
        for _ in 0..trials {
            let f = sample_blind_factors(&ctx, 1, &mut rng);
            nu_counts[f.nu[0] as usize] += 1;
            eta_counts[f.eta[0] as usize] += 1;
        }
        assert_eq!(nu_counts[0], 0, "ν must stay invertible");
        let chi2 = |counts: &[usize]| {
            let e = trials as f64 / counts.len() as f64;
            counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - e;
                    d * d / e
                })
                .sum::<f64>()
        };
        // dof 15 (ν) and 16 (η); 0.999 quantiles ≈ 37.7 and 39.3.
        let nu_chi = chi2(&nu_counts[1..]);
        let eta_chi = chi2(&eta_counts);
        assert!(nu_chi < 37.7, "ν χ² = {nu_chi}");
        assert!(eta_chi < 39.3, "η χ² = {eta_chi}");
    }
}
