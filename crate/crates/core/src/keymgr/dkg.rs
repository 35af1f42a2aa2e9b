//! Dealerless additive key generation and proactive resharing.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::{Committee, KmError};
use crate::crypto::shamir::{lagrange_coeffs, Polynomial};
use crate::crypto::{Digest, ScalarField, Share};

/// One member's share of a contract master key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MasterShare<S> {
    pub cid: Digest,
    pub index: u64,
    pub value: S,
}

/// Every member deals a random degree-`k` polynomial to all members; a member's
/// share is the sum of what it received. The master key is the sum of the
/// dealt constants and is never formed anywhere.
pub fn dkg_init<S: ScalarField, R: RngCore + CryptoRng>(
    committee: &Committee,
    cid: &Digest,
    rng: &mut R,
) -> Result<Vec<MasterShare<S>>, KmError> {
    committee.validate()?;
    let k = committee.threshold();
    let mut acc: BTreeMap<u64, S> = committee.members.iter().map(|&m| (m, S::zero())).collect();
    for _dealer in &committee.members {
        let poly = Polynomial::random(S::random(rng), k, rng);
        for (m, v) in acc.iter_mut() {
            *v = v.add(&poly.eval(*m));
        }
    }
    Ok(acc
        .into_iter()
        .map(|(index, value)| MasterShare {
            cid: *cid,
            index,
            value,
        })
        .collect())
}

/// Moves a secret from `old` shares to `new_committee` without reconstructing
/// it. The first `k_old + 1` supplied shares each deal a polynomial whose
/// constant is their Lagrange-weighted share; new shares are the sums.
pub fn reshare<S: ScalarField, R: RngCore + CryptoRng>(
    old_threshold: usize,
    old: &[MasterShare<S>],
    new_committee: &Committee,
    rng: &mut R,
) -> Result<Vec<MasterShare<S>>, KmError> {
    new_committee.validate()?;
    let need = old_threshold + 1;
    if old.len() < need {
        return Err(KmError::NotEnoughPieces {
            have: old.len(),
            need,
        });
    }
    let cid = old[0].cid;
    let dealers = &old[..need];
    let indices: Vec<u64> = dealers.iter().map(|s| s.index).collect();
    let lambdas = lagrange_coeffs::<S>(&indices)?;
    let k_new = new_committee.threshold();
    let mut acc: BTreeMap<u64, S> = new_committee
        .members
        .iter()
        .map(|&m| (m, S::zero()))
        .collect();
    for d in dealers {
        let poly = Polynomial::random(lambdas[&d.index].mul(&d.value), k_new, rng);
        for (m, v) in acc.iter_mut() {
            *v = v.add(&poly.eval(*m));
        }
    }
    Ok(acc
        .into_iter()
        .map(|(index, value)| MasterShare { cid, index, value })
        .collect())
}

/// Test and audit oracle: the master key recovered from `k + 1` shares.
#[doc(hidden)]
pub fn oracle_reconstruct<S: ScalarField>(
    threshold: usize,
    shares: &[MasterShare<S>],
) -> Result<S, KmError> {
    let plain: Vec<Share<S>> = shares
        .iter()
        .map(|s| Share {
            index: s.index,
            value: s.value,
        })
        .collect();
    Ok(crate::crypto::reconstruct(threshold, &plain)?)
}
