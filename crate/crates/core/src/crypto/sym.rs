//! Authenticated symmetric encryption with length-class padding.
//!
//! Plaintexts are padded ISO/IEC 7816-4 style (`0x80` then zeros) up to a multiple of
//! [`PAD_BLOCK`] bytes before ChaCha20-Poly1305 encryption, so the ciphertext length
//! reveals only the plaintext's length class.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};

use super::CryptoError;

pub const PAD_BLOCK: usize = 32;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct SymKey(pub [u8; 32]);

impl SymKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        SymKey(k)
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, rng: &mut R, plaintext: &[u8]) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        self.encrypt_with_nonce(nonce, plaintext)
    }

    pub(crate) fn encrypt_with_nonce(&self, nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> Vec<u8> {
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&self.0));
        let padded = pad(plaintext);
        let body = cipher
            .encrypt(Nonce::from_slice(&nonce), padded.as_slice())
            .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
        let mut out = Vec::with_capacity(NONCE_LEN + body.len());
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&body);
        out
    }

    pub fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::Decrypt);
        }
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&self.0));
        let (nonce, body) = ciphertext.split_at(NONCE_LEN);
        let padded = cipher
            .decrypt(Nonce::from_slice(nonce), body)
            .map_err(|_| CryptoError::Decrypt)?;
        unpad(padded)
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

/// Ciphertext length for a plaintext of `len` bytes.
pub fn ciphertext_len(len: usize) -> usize {
    NONCE_LEN + padded_len(len) + TAG_LEN
}

fn padded_len(len: usize) -> usize {
    (len / PAD_BLOCK + 1) * PAD_BLOCK
}

fn pad(m: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(padded_len(m.len()));
    out.extend_from_slice(m);
    out.push(0x80);
    out.resize(padded_len(m.len()), 0);
    out
}

fn unpad(mut padded: Vec<u8>) -> Result<Vec<u8>, CryptoError> {
    while let Some(&last) = padded.last() {
        padded.pop();
        match last {
            0 => continue,
            0x80 => return Ok(padded),
            _ => return Err(CryptoError::Decrypt),
        }
    }
    Err(CryptoError::Decrypt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_and_integrity() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let k = SymKey::generate(&mut rng);
        let ct = k.encrypt(&mut rng, b"abc");
        assert_eq!(k.decrypt(&ct).unwrap(), b"abc");
        for i in 0..ct.len() {
            let mut bad = ct.clone();
            bad[i] ^= 1;
            assert_eq!(k.decrypt(&bad), Err(CryptoError::Decrypt));
        }
        let other = SymKey::generate(&mut rng);
        assert_eq!(other.decrypt(&ct), Err(CryptoError::Decrypt));
        assert_eq!(k.decrypt(&ct[..10]), Err(CryptoError::Decrypt));
    }

    #[test]
    fn length_classes() {
        assert_eq!(ciphertext_len(0), 12 + 32 + 16);
        assert_eq!(ciphertext_len(31), 12 + 32 + 16);
        assert_eq!(ciphertext_len(32), 12 + 64 + 16);
    }

    proptest! {
        #[test]
        fn equal_lengths_give_equal_ciphertext_lengths(
            a in proptest::collection::vec(any::<u8>(), 0..200),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let k = SymKey::generate(&mut rng);
            let b: Vec<u8> = a.iter().map(|x| x.wrapping_add(1)).collect();
            let ca = k.encrypt(&mut rng, &a);
            let cb = k.encrypt(&mut rng, &b);
            prop_assert_eq!(ca.len(), cb.len());
            prop_assert_eq!(ca.len(), ciphertext_len(a.len()));
            prop_assert_eq!(k.decrypt(&ca).unwrap(), a);
        }
    }
}
