//! Hybrid public-key encryption: ephemeral X25519, SHA-256 key derivation, then
//! the authenticated symmetric scheme from [`super::sym`].

use std::fmt;

use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use super::sym::SymKey;
use super::CryptoError;
use crate::codec::{CodecError, Field, Reader, Writer};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncPublicKey(pub [u8; 32]);

#[derive(Clone)]
pub struct PkKeypair {
    secret: StaticSecret,
    public: EncPublicKey,
}

impl PkKeypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        let secret = StaticSecret::from(seed);
        let public = EncPublicKey(PublicKey::from(&secret).to_bytes());
        PkKeypair { secret, public }
    }

    pub fn public(&self) -> EncPublicKey {
        self.public
    }

    pub fn decrypt(&self, ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ct.len() < 32 {
            return Err(CryptoError::Decrypt);
        }
        let (eph, body) = ct.split_at(32);
        let eph = PublicKey::from(<[u8; 32]>::try_from(eph).unwrap());
        let shared = self.secret.diffie_hellman(&eph);
        derive_key(shared.as_bytes(), eph.as_bytes(), &self.public.0).decrypt(body)
    }
}

impl EncPublicKey {
    pub fn encrypt<R: RngCore + CryptoRng>(&self, rng: &mut R, msg: &[u8]) -> Vec<u8> {
        let eph = StaticSecret::random_from_rng(&mut *rng);
        let eph_pub = PublicKey::from(&eph);
        let shared = eph.diffie_hellman(&PublicKey::from(self.0));
        let key = derive_key(shared.as_bytes(), eph_pub.as_bytes(), &self.0);
        let mut out = eph_pub.as_bytes().to_vec();
        // The derived key is single-use, so a fixed nonce is sound.
        out.extend(key.encrypt_with_nonce([0u8; 12], msg));
        out
    }
}

fn derive_key(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> SymKey {
    let mut h = Sha256::new();
    h.update(b"pke/x25519-chacha20poly1305");
    h.update(shared);
    h.update(eph);
    h.update(recipient);
    SymKey(h.finalize().into())
}

impl fmt::Debug for EncPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncPublicKey({}..)", &hex::encode(self.0)[..12])
    }
}

impl fmt::Debug for PkKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PkKeypair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl PartialEq for PkKeypair {
    fn eq(&self, other: &Self) -> bool {
        self.secret.to_bytes() == other.secret.to_bytes()
    }
}

impl Field for EncPublicKey {
    fn write(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(EncPublicKey(r.fixed::<32>("encryption key")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_wrong_key_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let kp = PkKeypair::generate(&mut rng);
        let other = PkKeypair::generate(&mut rng);
        let ct = kp.public().encrypt(&mut rng, b"hello");
        assert_eq!(kp.decrypt(&ct).unwrap(), b"hello");
        assert!(other.decrypt(&ct).is_err());
        let mut bad = ct.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert!(kp.decrypt(&bad).is_err());
        assert!(kp.decrypt(&ct[..20]).is_err());
    }

    #[test]
    fn length_depends_only_on_plaintext_length() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = PkKeypair::generate(&mut rng);
        let a = kp.public().encrypt(&mut rng, &[0u8; 40]);
        let b = kp.public().encrypt(&mut rng, &[7u8; 40]);
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn seeded_keypairs_are_deterministic() {
        assert_eq!(
            PkKeypair::from_seed([9; 32]).public(),
            PkKeypair::from_seed([9; 32]).public()
        );
    }
}
