//! Hashing, signatures, encryption, group arithmetic and secret sharing.

pub mod group;
pub mod hash;
pub mod pke;
pub mod shamir;
pub mod sig;
pub mod sym;

use thiserror::Error;

pub use group::{PrimeOrderGroup, Ristretto255, ScalarField, TinyGroup};
pub use hash::{hash_bytes, hash_canonical, Digest};
pub use pke::{EncPublicKey, PkKeypair};
pub use shamir::{lagrange_coeffs, reconstruct, share_secret, Polynomial, Share, ShareSet};
pub use sig::{SigKeypair, Signature, VerifyKey};
pub use sym::SymKey;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("decryption failed: ciphertext is malformed or was tampered with")]
    Decrypt,
    #[error("malformed key material: {0}")]
    BadKey(&'static str),
}
