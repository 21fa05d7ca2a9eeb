//! A concrete malicious prover used to measure the soundness error.
//!
//! The forger runs the honest three-player evaluation but corrupts the
//! recorded output of player 2 at one chosen non-local gate, carrying the
//! corrupted value forward through the rest of the execution. All three
//! views stay mutually consistent except at that single gate, so the claimed
//! (false) output survives challenges 0 and 1: challenge 0 recomputes player
//! 0 and replays player 1, challenge 1 recomputes player 1 and replays
//! player 2, and neither re-derives player 2's broken gate. Only challenge 2
//! recomputes player 2 from its tape and exposes the mismatch. Each
//! iteration therefore escapes with probability exactly 2/3, and a forgery
//! attempt succeeds iff the derived challenge contains no trit equal to 2 —
//! probability (2/3)^t over the random seed.

use super::engine::{
    challenge_trits, commit_view, eval_decomposition_cheat, iteration_tapes, iterations, share,
    IterProof, ZkProof,
};
use super::ir::{Circuit, OutputValues, Witness};
use crate::par::{map_indexed, Parallelism};
use crate::ring::RingContext;

/// Forges a proof for the corrupted output. `flip` is the index, among
/// non-local gates in gate order, of the gate whose player-2 output is
/// corrupted (Boolean outputs are flipped; scalar outputs get +1). Returns
/// the proof together with the false statement it claims.
pub fn forge_single_flip(
    ctx: &RingContext,
    circuit: &Circuit,
    witness: &Witness,
    kappa: usize,
    seed: [u8; 32],
    flip: usize,
    par: Parallelism,
) -> (ZkProof, OutputValues) {
    assert!(flip < circuit.n_and + circuit.n_smul, "flip index out of range");
    let t = iterations(kappa);

    struct IterData {
        tapes: super::engine::IterationTapes,
        x3_bytes: Vec<u8>,
        view_bytes: [Vec<u8>; 3],
        y_bytes: [Vec<u8>; 3],
        c: [[u8; 32]; 3],
        y: OutputValues,
    }

    let iters: Vec<IterData> = map_indexed(par, t, |i| {
        let tapes = iteration_tapes(&seed, i);
        let inputs = share(ctx, circuit, witness, &tapes);
        let (views, y) = eval_decomposition_cheat(ctx, circuit, &inputs, &tapes, Some(flip));
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
        IterData {
            tapes,
            x3_bytes: views[2].input_bytes.clone(),
            view_bytes: [
                views[0].view_bytes.clone(),
                views[1].view_bytes.clone(),
                views[2].view_bytes.clone(),
            ],
            y_bytes,
            c,
            y,
        }
    });

    // The corruption changes the reconstructed wire deterministically, so
    // every iteration claims the same false output.
    let claimed = iters[0].y.clone();
    debug_assert!(iters.iter().all(|d| d.y == claimed));

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

    (
        ZkProof { kappa: kappa as u16, circuit_hash: circuit.hash, challenge, iters: iter_proofs },
        claimed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Parallelism;
    use crate::params::toy_ring;
    use crate::ring::RingContext;
    use crate::zkb::engine::verify;
    use crate::zkb::ir::{CircuitBuilder, OutVal, Witness};

    #[test]
    fn single_gate_corruption_escapes_at_exactly_two_thirds_per_iteration() {
        let ctx = RingContext::new(toy_ring()).unwrap();
        let mut b = CircuitBuilder::new(1);
        let x = b.input_bool();
        let y = b.input_bool();
        let z = b.and(x, y);
        let c = b.finish(vec![z]);
        let w = Witness { rings: vec![], scalars: vec![], bools: vec![true, true] };
        let honest = c.eval_plain(&ctx, &w);
        assert_eq!(honest.vals[0], OutVal::B(true));
        let false_claim = OutputValues { vals: vec![OutVal::B(false)] };

        let kappa = 3; // t = 6, escape probability (2/3)^6 ≈ 0.0878
        let trials = 2500usize;
        let mut escaped = 0usize;
        let mut collisions = 0usize;
        for trial in 0..trials {
            let mut seed = [0u8; 32];
            seed[..8].copy_from_slice(&(trial as u64).to_be_bytes());
            let (proof, claimed) =
                forge_single_flip(&ctx, &c, &w, kappa, seed, 0, Parallelism::Sequential);
            assert_eq!(claimed, false_claim);
            let ok = verify(&ctx, &c, &claimed, &proof, Parallelism::Sequential);
            let unchallenged = proof.challenge.iter().all(|&e| e != 2);
            if unchallenged {
                // No iteration re-derives player 2, so the corruption is
                // structurally invisible: the verifier must accept.
                assert!(ok, "undetectable forgery rejected at trial {trial}");
                escaped += 1;
            } else if ok {
                // A challenged iteration recomputes honest data, so the
                // digest is wrong — but at t = 6 the challenge space is only
                // 3^6, and a wrong digest re-expands to the same six trits
                // with probability ≈ 1/729. At the real t = 219 this term
                // is ≈ 3^-219.
                collisions += 1;
            }
            if trial < 50 {
                assert!(!verify(&ctx, &c, &honest, &proof, Parallelism::Sequential));
            }
        }
        let rate = escaped as f64 / trials as f64;
        let expect = (2f64 / 3.0).powi(6);
        assert!(escaped > 0, "forgery never succeeded; soundness error unrealized");
        assert!(
            (rate - expect).abs() < 0.03,
            "escape rate {rate:.4} differs from (2/3)^6 = {expect:.4}"
        );
        assert!(
            collisions <= 15,
            "{collisions} challenge collisions in {trials} trials is far above the 1/729 rate"
        );
    }

    #[test]
    fn corrupting_a_scalar_gate_shifts_the_claimed_product() {
        let ctx = RingContext::new(toy_ring()).unwrap();
        let mut b = CircuitBuilder::new(1);
        let x = b.input_scalar();
        let y = b.input_scalar();
        let z = b.smul(x, y);
        let c = b.finish(vec![z]);
        let w = Witness { rings: vec![], scalars: vec![vec![3], vec![5]], bools: vec![] };
        assert_eq!(c.eval_plain(&ctx, &w).vals[0], OutVal::S(vec![15]));

        let mut found_accepting = false;
        for trial in 0..60u8 {
            let (proof, claimed) =
                forge_single_flip(&ctx, &c, &w, 3, [trial; 32], 0, Parallelism::Sequential);
            assert_eq!(claimed.vals[0], OutVal::S(vec![16]), "claim must be xy + 1");
            let ok = verify(&ctx, &c, &claimed, &proof, Parallelism::Sequential);
            if proof.challenge.iter().all(|&e| e != 2) {
                assert!(ok, "undetectable forgery rejected at seed {trial}");
                found_accepting = true;
            }
        }
        assert!(found_accepting, "no accepting forgery among 60 seeds");
    }
}

