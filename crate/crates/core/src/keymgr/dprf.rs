//! Distributed PRF `f_s(x) = H(x)^s` over Shamir shares of `s`, and the key
//! bundle derived from its output.

use crate::canonical_record;
use crate::codec::Encode;
use crate::crypto::shamir::{interpolate_in_exponent, ShamirError};
use crate::crypto::{hash_bytes, hash_canonical, Digest, PkKeypair, PrimeOrderGroup, SymKey};

#[derive(Debug, Clone, PartialEq, Eq)]
struct PrfInput {
    cid: Digest,
    epoch: u64,
}

canonical_record!(PrfInput, 0x40, { cid, epoch });

#[derive(Debug, Clone, PartialEq, Eq)]
struct KdfInput {
    label: String,
    cid: Digest,
    epoch: u64,
    element: Vec<u8>,
}

canonical_record!(KdfInput, 0x41, { label, cid, epoch, element });

/// `H(cid ‖ t)`, the point every member raises to its share.
pub fn prf_base<G: PrimeOrderGroup>(cid: &Digest, epoch: u64) -> G::Element {
    G::hash_to_group(&PrfInput { cid: *cid, epoch }.to_canonical())
}

/// One member's contribution `H(cid ‖ t)^{share}`.
pub fn eval_piece<G: PrimeOrderGroup>(cid: &Digest, epoch: u64, share: &G::Scalar) -> G::Element {
    G::exp(&prf_base::<G>(cid, epoch), share)
}

/// `∏ k_i^{λ_i}` over the first `threshold + 1` pieces.
pub fn combine_epoch_key<G: PrimeOrderGroup>(
    threshold: usize,
    pieces: &[(u64, G::Element)],
) -> Result<G::Element, ShamirError> {
    interpolate_in_exponent::<G>(threshold, pieces)
}

/// Keys for one contract in one epoch.
#[derive(Clone)]
pub struct EpochKeyBundle {
    pub cid: Digest,
    pub epoch: u64,
    pub k_state: SymKey,
    pub k_out: SymKey,
    pub input: PkKeypair,
    /// `hash(k_ct ‖ "confirm")`, published so inconsistent combinations are caught.
    pub confirm: Digest,
}

impl std::fmt::Debug for EpochKeyBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpochKeyBundle")
            .field("cid", &self.cid)
            .field("epoch", &self.epoch)
            .field("pk_in", &self.input.public())
            .field("confirm", &self.confirm)
            .finish_non_exhaustive()
    }
}

fn kdf(label: &str, cid: &Digest, epoch: u64, element: &[u8]) -> [u8; 32] {
    hash_canonical(&KdfInput {
        label: label.to_string(),
        cid: *cid,
        epoch,
        element: element.to_vec(),
    })
    .0
}

pub fn derive_bundle<G: PrimeOrderGroup>(
    k_ct: &G::Element,
    cid: &Digest,
    epoch: u64,
) -> EpochKeyBundle {
    let e = G::element_bytes(k_ct);
    let mut confirm_input = e.clone();
    confirm_input.extend_from_slice(b"confirm");
    EpochKeyBundle {
        cid: *cid,
        epoch,
        k_state: SymKey(kdf("state", cid, epoch, &e)),
        k_out: SymKey(kdf("out", cid, epoch, &e)),
        input: PkKeypair::from_seed(kdf("in", cid, epoch, &e)),
        confirm: hash_bytes(&confirm_input),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::{TinyElement, TinyScalar};
    use crate::crypto::{Ristretto255, TinyGroup};

    #[test]
    fn pieces_match_modular_exponentiation() {
        // H(t) = 4, share f(1) = 1: 4^1 = 4.
        let h = TinyElement::new(4).unwrap();
        assert_eq!(
            TinyGroup::exp(&h, &<TinyScalar as crate::crypto::ScalarField>::from_u64(1)).value(),
            4
        );
        let cid = Digest([7; 32]);
        let base = prf_base::<TinyGroup>(&cid, 3);
        for s in TinyScalar::all() {
            let direct = (0..s.value()).fold(1u64, |acc, _| acc * base.value() as u64 % 23);
            assert_eq!(eval_piece::<TinyGroup>(&cid, 3, &s).value() as u64, direct);
        }
    }

    #[test]
    fn bundles_are_deterministic_and_separated() {
        let cid = Digest([1; 32]);
        let k = Ristretto255::hash_to_group(b"k");
        let a = derive_bundle::<Ristretto255>(&k, &cid, 5);
        let b = derive_bundle::<Ristretto255>(&k, &cid, 5);
        assert_eq!(a.k_state, b.k_state);
        assert_eq!(a.k_out, b.k_out);
        assert_eq!(a.input.public(), b.input.public());
        assert_eq!(a.confirm, b.confirm);
        assert_ne!(a.k_state, a.k_out);
        let k6 = Ristretto255::hash_to_group(b"k6");
        let c = derive_bundle::<Ristretto255>(&k6, &cid, 6);
        assert_ne!(a.k_state, c.k_state);
        assert_ne!(a.k_out, c.k_out);
        assert_ne!(a.input.public(), c.input.public());
        assert_ne!(a.confirm, c.confirm);
        // Same element, next epoch: every key still changes.
        let d = derive_bundle::<Ristretto255>(&k, &cid, 6);
        assert_ne!(a.k_state, d.k_state);
        assert_ne!(a.input.public(), d.input.public());
    }

    #[test]
    fn epochs_give_distinct_pieces() {
        let cid = Digest([2; 32]);
        let s = curve25519_dalek::Scalar::from(99u64);
        assert_ne!(
            eval_piece::<Ristretto255>(&cid, 1, &s),
            eval_piece::<Ristretto255>(&cid, 2, &s)
        );
    }
}
