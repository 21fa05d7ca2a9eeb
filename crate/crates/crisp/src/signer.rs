//! Data-source signatures.
//!
//! The trusted source signs the SHA-256 digest of each message's canonical
//! bit layout. Any digest-based signature scheme slots in here; the default
//! is Ed25519 over the 32-byte digest.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};

pub const PUBLIC_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Signing side, held by the data source.
pub struct SignerKeys {
    key: SigningKey,
}

impl SignerKeys {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        SignerKeys { key: SigningKey::from_bytes(seed) }
    }

    pub fn public(&self) -> [u8; PUBLIC_LEN] {
        self.key.verifying_key().to_bytes()
    }

    /// Signs a message digest (the digest is the signed payload, so the
    /// verifier never needs the preimage).
    pub fn sign_digest(&self, digest: &[u8; 32]) -> [u8; SIGNATURE_LEN] {
        self.key.sign(digest).to_bytes()
    }
}

/// Verifies a digest signature under a serialized public key.
pub fn verify_digest(public: &[u8; PUBLIC_LEN], digest: &[u8; 32], sig: &[u8; SIGNATURE_LEN]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    vk.verify(digest, &Signature::from_bytes(sig)).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signatures_round_trip_and_reject_tampering() {
        let keys = SignerKeys::from_seed(&[7u8; 32]);
        let digest = crate::xof::sha256(b"reading 42");
        let sig = keys.sign_digest(&digest);
        assert!(verify_digest(&keys.public(), &digest, &sig));

        let mut bad_digest = digest;
        bad_digest[0] ^= 1;
        assert!(!verify_digest(&keys.public(), &bad_digest, &sig));

        let mut bad_sig = sig;
        bad_sig[10] ^= 1;
        assert!(!verify_digest(&keys.public(), &digest, &bad_sig));

        let other = SignerKeys::from_seed(&[8u8; 32]);
        assert!(!verify_digest(&other.public(), &digest, &sig));
    }

    #[test]
    fn keys_are_deterministic_in_the_seed() {
        let a = SignerKeys::from_seed(&[1u8; 32]);
        let b = SignerKeys::from_seed(&[1u8; 32]);
        assert_eq!(a.public(), b.public());
        let d = [0u8; 32];
        assert_eq!(a.sign_digest(&d), b.sign_digest(&d));
    }
}
