use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::codec::{CodecError, Field, Reader, Writer};

/// Ed25519 verification key bytes. May be malformed; [`verify`] then fails.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VerifyKey(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

#[derive(Clone)]
pub struct SigKeypair {
    sk: SigningKey,
}

impl SigKeypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigKeypair {
            sk: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        SigKeypair {
            sk: SigningKey::from_bytes(&seed),
        }
    }

    pub fn verify_key(&self) -> VerifyKey {
        VerifyKey(self.sk.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.sk.sign(msg).to_bytes())
    }
}

impl fmt::Debug for SigKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigKeypair")
            .field("vk", &self.verify_key())
            .finish_non_exhaustive()
    }
}

/// Strict Ed25519 verification. Never panics on malformed input.
pub fn verify(vk: &VerifyKey, sig: &Signature, msg: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&vk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify_strict(msg, &sig).is_ok()
}

impl fmt::Debug for VerifyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyKey({}..)", &hex::encode(self.0)[..12])
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(self.0)[..12])
    }
}

impl Field for VerifyKey {
    fn write(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(VerifyKey(r.fixed::<32>("verify key")?))
    }
}

impl Field for Vec<VerifyKey> {
    fn write(&self, w: &mut Writer) {
        w.u64(self.len() as u64);
        for k in self {
            w.bytes(&k.0);
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.byte_list()?
            .into_iter()
            .map(|b| {
                b.try_into()
                    .map(VerifyKey)
                    .map_err(|_| CodecError::invalid("verify key", "expected 32 bytes"))
            })
            .collect()
    }
}

impl Field for Signature {
    fn write(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Signature(r.fixed::<64>("signature")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = SigKeypair::generate(&mut rng);
        let other = SigKeypair::generate(&mut rng);
        let sig = kp.sign(b"m");
        assert!(verify(&kp.verify_key(), &sig, b"m"));
        assert!(!verify(&kp.verify_key(), &sig, b"m\0"));
        assert!(!verify(&other.verify_key(), &sig, b"m"));
        for bit in 0..512 {
            let mut bad = sig;
            bad.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&kp.verify_key(), &bad, b"m"), "bit {bit}");
        }
    }

    #[test]
    fn malformed_key_is_false_not_panic() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let kp = SigKeypair::generate(&mut rng);
        let sig = kp.sign(b"m");
        // Not a valid curve point encoding.
        let junk = VerifyKey([0xff; 32]);
        assert!(!verify(&junk, &sig, b"m"));
        assert!(!verify(&kp.verify_key(), &Signature([0xff; 64]), b"m"));
    }
}
