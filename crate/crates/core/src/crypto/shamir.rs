//! Shamir sharing over any [`ScalarField`], Lagrange coefficients at zero, and
//! interpolation in the exponent of a [`PrimeOrderGroup`].

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use super::group::{PrimeOrderGroup, ScalarField};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShamirError {
    #[error("threshold {k} invalid for {n} parties (need 0 < k < n)")]
    BadThreshold { k: usize, n: usize },
    #[error("no shares supplied")]
    Empty,
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("duplicate share index {0}")]
    DuplicateIndex(u64),
    #[error("share index {0} collides with another index modulo the group order")]
    IndexCollision(u64),
    #[error("need {need} shares, got {got}")]
    TooFewShares { need: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share<S> {
    pub index: u64,
    pub value: S,
}

/// Shares of one secret under a degree-`threshold` polynomial; `threshold + 1`
/// of them reconstruct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareSet<S> {
    pub threshold: usize,
    pub shares: Vec<Share<S>>,
}

impl<S: ScalarField> ShareSet<S> {
    pub fn reconstruct(&self) -> Result<S, ShamirError> {
        reconstruct(self.threshold, &self.shares)
    }

    pub fn get(&self, index: u64) -> Option<&Share<S>> {
        self.shares.iter().find(|s| s.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial<S> {
    /// `coeffs[0]` is the constant term.
    pub coeffs: Vec<S>,
}

impl<S: ScalarField> Polynomial<S> {
    pub fn random<R: RngCore + CryptoRng>(constant: S, degree: usize, rng: &mut R) -> Self {
        let mut coeffs = Vec::with_capacity(degree + 1);
        coeffs.push(constant);
        coeffs.extend((0..degree).map(|_| S::random(rng)));
        Polynomial { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn constant(&self) -> S {
        self.coeffs.first().copied().unwrap_or_else(S::zero)
    }

    pub fn eval(&self, x: u64) -> S {
        let x = S::from_u64(x);
        self.coeffs
            .iter()
            .rev()
            .fold(S::zero(), |acc, c| acc.mul(&x).add(c))
    }

    pub fn shares(&self, indices: impl IntoIterator<Item = u64>) -> Vec<Share<S>> {
        indices
            .into_iter()
            .map(|index| Share {
                index,
                value: self.eval(index),
            })
            .collect()
    }
}

/// Deals `secret` to parties `1..=n` so that any `k + 1` reconstruct it.
pub fn share_secret<S: ScalarField, R: RngCore + CryptoRng>(
    secret: S,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<ShareSet<S>, ShamirError> {
    if k == 0 || k >= n {
        return Err(ShamirError::BadThreshold { k, n });
    }
    check_indices::<S>((1..=n as u64).collect::<Vec<_>>().as_slice())?;
    let poly = Polynomial::random(secret, k, rng);
    Ok(ShareSet {
        threshold: k,
        shares: poly.shares(1..=n as u64),
    })
}

fn check_indices<S: ScalarField>(indices: &[u64]) -> Result<(), ShamirError> {
    if indices.is_empty() {
        return Err(ShamirError::Empty);
    }
    let mut seen = BTreeSet::new();
    let mut reduced = Vec::with_capacity(indices.len());
    for &i in indices {
        if i == 0 {
            return Err(ShamirError::ZeroIndex);
        }
        if !seen.insert(i) {
            return Err(ShamirError::DuplicateIndex(i));
        }
        let r = S::from_u64(i);
        if r.is_zero() || reduced.contains(&r) {
            return Err(ShamirError::IndexCollision(i));
        }
        reduced.push(r);
    }
    Ok(())
}

/// `λ_i = ∏_{j≠i} −j / (i − j)`, so that `Σ λ_i f(i) = f(0)` for every `f` of
/// degree below `indices.len()`.
pub fn lagrange_coeffs<S: ScalarField>(indices: &[u64]) -> Result<BTreeMap<u64, S>, ShamirError> {
    check_indices::<S>(indices)?;
    let mut out = BTreeMap::new();
    for &i in indices {
        let xi = S::from_u64(i);
        let mut num = S::one();
        let mut den = S::one();
        for &j in indices.iter().filter(|&&j| j != i) {
            let xj = S::from_u64(j);
            num = num.mul(&xj.neg());
            den = den.mul(&xi.sub(&xj));
        }
        let inv = den.invert().expect("indices are distinct modulo the order");
        out.insert(i, num.mul(&inv));
    }
    Ok(out)
}

/// Recovers `f(0)` from at least `threshold + 1` shares. Only the first
/// `threshold + 1` are used; supplying more does not change the result for
/// consistent shares.
pub fn reconstruct<S: ScalarField>(
    threshold: usize,
    shares: &[Share<S>],
) -> Result<S, ShamirError> {
    let need = threshold + 1;
    if shares.is_empty() {
        return Err(ShamirError::Empty);
    }
    let all: Vec<u64> = shares.iter().map(|s| s.index).collect();
    check_indices::<S>(&all)?;
    if shares.len() < need {
        return Err(ShamirError::TooFewShares {
            need,
            got: shares.len(),
        });
    }
    let used = &shares[..need];
    let indices: Vec<u64> = used.iter().map(|s| s.index).collect();
    let lambdas = lagrange_coeffs::<S>(&indices)?;
    Ok(used.iter().fold(S::zero(), |acc, s| {
        acc.add(&lambdas[&s.index].mul(&s.value))
    }))
}

/// `∏ y_i^{λ_i}` over the first `threshold + 1` pieces: if `y_i = h^{f(i)}` the
/// result is `h^{f(0)}`.
pub fn interpolate_in_exponent<G: PrimeOrderGroup>(
    threshold: usize,
    pieces: &[(u64, G::Element)],
) -> Result<G::Element, ShamirError> {
    let need = threshold + 1;
    if pieces.is_empty() {
        return Err(ShamirError::Empty);
    }
    let all: Vec<u64> = pieces.iter().map(|p| p.0).collect();
    check_indices::<G::Scalar>(&all)?;
    if pieces.len() < need {
        return Err(ShamirError::TooFewShares {
            need,
            got: pieces.len(),
        });
    }
    let used = &pieces[..need];
    let indices: Vec<u64> = used.iter().map(|p| p.0).collect();
    let lambdas = lagrange_coeffs::<G::Scalar>(&indices)?;
    Ok(used.iter().fold(G::identity(), |acc, (i, y)| {
        G::op(&acc, &G::exp(y, &lambdas[i]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::{Ristretto255, TinyElement, TinyGroup, TinyScalar};
    use curve25519_dalek::scalar::Scalar;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ts(v: u64) -> TinyScalar {
        TinyScalar::from_u64(v)
    }

    #[test]
    fn frozen_small_field_example() {
        // f(x) = 5 + 3x over Z_11: f(1) = 8, f(2) = 11 ≡ 0.
        let f = Polynomial {
            coeffs: vec![ts(5), ts(3)],
        };
        assert_eq!(f.eval(1), ts(8));
        assert_eq!(f.eval(2), ts(0));
        let shares = f.shares([1, 2]);
        assert_eq!(reconstruct(1, &shares).unwrap(), ts(5));
        // The same pair read as integers (8, 11) reduces identically.
        let raw = [
            Share {
                index: 1,
                value: ts(8),
            },
            Share {
                index: 2,
                value: ts(11),
            },
        ];
        assert_eq!(reconstruct(1, &raw).unwrap(), ts(5));
    }

    #[test]
    fn lagrange_frozen_values() {
        let l = lagrange_coeffs::<TinyScalar>(&[1, 2]).unwrap();
        assert_eq!(l[&1], ts(2));
        assert_eq!(l[&2], ts(1).neg());
        assert_eq!(l[&2], ts(10));
        let l1 = lagrange_coeffs::<TinyScalar>(&[1]).unwrap();
        assert_eq!(l1[&1], ts(1));
        assert_eq!(lagrange_coeffs::<TinyScalar>(&[]), Err(ShamirError::Empty));
        assert_eq!(
            lagrange_coeffs::<TinyScalar>(&[1, 12]),
            Err(ShamirError::IndexCollision(12))
        );
    }

    #[test]
    fn lagrange_recovers_constant_term_degree_2() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = Polynomial::<Scalar>::random(Scalar::random(&mut rng), 2, &mut rng);
            let l = lagrange_coeffs::<Scalar>(&[1, 2, 3]).unwrap();
            let sum = [1u64, 2, 3]
                .iter()
                .fold(Scalar::ZERO, |acc, i| acc + l[i] * f.eval(*i));
            assert_eq!(sum, f.constant());
        }
    }

    #[test]
    fn share_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            share_secret(ts(3), 0, 3, &mut rng),
            Err(ShamirError::BadThreshold { .. })
        ));
        assert!(matches!(
            share_secret(ts(3), 3, 3, &mut rng),
            Err(ShamirError::BadThreshold { .. })
        ));
        let set = share_secret(ts(3), 2, 5, &mut rng).unwrap();
        let dup = vec![set.shares[0], set.shares[0], set.shares[1]];
        assert_eq!(reconstruct(2, &dup), Err(ShamirError::DuplicateIndex(1)));
        assert_eq!(
            reconstruct(2, &set.shares[..2]),
            Err(ShamirError::TooFewShares { need: 3, got: 2 })
        );
        assert_eq!(set.reconstruct().unwrap(), ts(3));
    }

    #[test]
    fn every_subset_reconstructs_in_tiny_field() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for secret in TinyScalar::all() {
            let set = share_secret(secret, 2, 6, &mut rng).unwrap();
            for a in 0..6 {
                for b in a + 1..6 {
                    for c in b + 1..6 {
                        let sub = [set.shares[a], set.shares[b], set.shares[c]];
                        assert_eq!(reconstruct(2, &sub).unwrap(), secret);
                    }
                }
            }
        }
    }

    #[test]
    fn two_shares_of_degree_two_are_independent_of_secret() {
        // Exhaustive: for every observed pair at indices {1, 2}, count the dealer
        // polynomials consistent with it, per candidate secret. Each secret admits
        // exactly one of its 121 polynomials through any given pair.
        let mut counts = BTreeMap::<(u8, u8), [u32; 11]>::new();
        for s in TinyScalar::all() {
            for a in TinyScalar::all() {
                for b in TinyScalar::all() {
                    let f = Polynomial {
                        coeffs: vec![s, a, b],
                    };
                    let key = (f.eval(1).value(), f.eval(2).value());
                    counts.entry(key).or_insert([0; 11])[s.value() as usize] += 1;
                }
            }
        }
        assert_eq!(counts.len(), 121);
        for row in counts.values() {
            assert!(row.iter().all(|&c| c == 1), "{row:?}");
        }

        // Sampled: with the secret fixed, the observed pair is uniform over Z_11^2.
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let trials = 121 * 200;
        let mut hist = [0u32; 121];
        for _ in 0..trials {
            let set = share_secret(ts(7), 2, 3, &mut rng).unwrap();
            let idx =
                set.shares[0].value.value() as usize * 11 + set.shares[1].value.value() as usize;
            hist[idx] += 1;
        }
        let expected = trials as f64 / 121.0;
        let chi2: f64 = hist
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 120 degrees of freedom.
        assert!(chi2 < 173.62, "chi2 = {chi2}");
    }

    #[test]
    fn exponent_interpolation_frozen_example() {
        // s = 7, f(x) = 7 + 5x; f(1) = 1, f(2) = 6. With h = 4: pieces 4, 2.
        let h = TinyElement::new(4).unwrap();
        let f = Polynomial {
            coeffs: vec![ts(7), ts(5)],
        };
        assert_eq!(f.eval(1), ts(1));
        assert_eq!(f.eval(2), ts(6));
        let pieces = [
            (1, TinyGroup::exp(&h, &f.eval(1))),
            (2, TinyGroup::exp(&h, &f.eval(2))),
        ];
        assert_eq!(pieces[0].1.value(), 4);
        assert_eq!(pieces[1].1.value(), 2);
        let k = interpolate_in_exponent::<TinyGroup>(1, &pieces).unwrap();
        assert_eq!(k.value(), 8);
        assert_eq!(k, TinyGroup::exp(&h, &ts(7)));
    }

    #[test]
    fn exponent_interpolation_exhaustive_tiny() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for h in TinyElement::all() {
            for s in TinyScalar::all() {
                let set = share_secret(s, 1, 4, &mut rng).unwrap();
                let pieces: Vec<_> = set
                    .shares
                    .iter()
                    .map(|sh| (sh.index, TinyGroup::exp(&h, &sh.value)))
                    .collect();
                let direct = TinyGroup::exp(&h, &s);
                for a in 0..4 {
                    for b in 0..4 {
                        if a != b {
                            let sub = [pieces[a], pieces[b]];
                            assert_eq!(
                                interpolate_in_exponent::<TinyGroup>(1, &sub).unwrap(),
                                direct
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exponent_interpolation_ristretto() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let s = Scalar::random(&mut rng);
        let set = share_secret(s, 3, 7, &mut rng).unwrap();
        let h = Ristretto255::hash_to_group(b"h");
        let pieces: Vec<_> = set
            .shares
            .iter()
            .rev()
            .map(|sh| (sh.index, h * sh.value))
            .collect();
        assert_eq!(
            interpolate_in_exponent::<Ristretto255>(3, &pieces).unwrap(),
            h * s
        );
    }

    proptest! {
        #[test]
        fn random_subsets_reconstruct(seed in any::<u64>(), k in 1usize..5, extra in 1usize..4, rot in 0usize..8) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let n = k + extra;
            let secret = Scalar::random(&mut rng);
            let set = share_secret(secret, k, n, &mut rng).unwrap();
            let mut shares = set.shares.clone();
            shares.rotate_left(rot % n);
            prop_assert_eq!(reconstruct(k, &shares[..k + 1]).unwrap(), secret);
            prop_assert_eq!(reconstruct(k, &shares).unwrap(), secret);
        }
    }
}
