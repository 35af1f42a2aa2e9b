//! Prime-order groups behind one interface.
//!
//! [`Ristretto255`] is the production instantiation. [`TinyGroup`] is the order-11
//! subgroup of the integers mod 23 with generator 2; it is small enough that every
//! secret, share and exponent can be enumerated in tests.

use std::fmt::Debug;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest as _, Sha256, Sha512};

pub trait ScalarField: Copy + Eq + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    /// Reduces `v` modulo the group order.
    fn from_u64(v: u64) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn invert(&self) -> Option<Self>;
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self;
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(b: &[u8]) -> Option<Self>;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

pub trait PrimeOrderGroup: Send + Sync + 'static {
    type Scalar: ScalarField;
    type Element: Copy + Eq + Debug + Send + Sync + 'static;

    const NAME: &'static str;

    fn generator() -> Self::Element;
    fn identity() -> Self::Element;
    /// The group operation, written multiplicatively.
    fn op(a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn exp(base: &Self::Element, e: &Self::Scalar) -> Self::Element;
    /// Maps arbitrary bytes to an element of the prime-order subgroup.
    fn hash_to_group(bytes: &[u8]) -> Self::Element;
    fn element_bytes(e: &Self::Element) -> Vec<u8>;
    fn element_from_bytes(b: &[u8]) -> Option<Self::Element>;
    fn is_valid(e: &Self::Element) -> bool;
}

// ---------------------------------------------------------------------------
// Tiny test group

pub const TINY_P: u8 = 23;
pub const TINY_Q: u8 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TinyScalar(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TinyElement(u8);

impl TinyScalar {
    pub fn value(self) -> u8 {
        self.0
    }

    /// Every scalar, in order.
    pub fn all() -> impl Iterator<Item = TinyScalar> {
        (0..TINY_Q).map(TinyScalar)
    }
}

impl TinyElement {
    /// Builds an element from its integer representative; `None` if it is not in
    /// the order-11 subgroup.
    pub fn new(v: u64) -> Option<Self> {
        let e = TinyElement((v % TINY_P as u64) as u8);
        TinyGroup::is_valid(&e).then_some(e)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// All 11 subgroup elements.
    pub fn all() -> Vec<TinyElement> {
        TinyScalar::all()
            .map(|e| TinyGroup::exp(&TinyGroup::generator(), &e))
            .collect()
    }
}

fn pow_mod(mut base: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc
}

impl ScalarField for TinyScalar {
    fn zero() -> Self {
        TinyScalar(0)
    }
    fn one() -> Self {
        TinyScalar(1)
    }
    fn from_u64(v: u64) -> Self {
        TinyScalar((v % TINY_Q as u64) as u8)
    }
    fn add(&self, o: &Self) -> Self {
        TinyScalar((self.0 + o.0) % TINY_Q)
    }
    fn sub(&self, o: &Self) -> Self {
        TinyScalar((self.0 + TINY_Q - o.0) % TINY_Q)
    }
    fn mul(&self, o: &Self) -> Self {
        TinyScalar(((self.0 as u16 * o.0 as u16) % TINY_Q as u16) as u8)
    }
    fn neg(&self) -> Self {
        TinyScalar((TINY_Q - self.0) % TINY_Q)
    }
    fn invert(&self) -> Option<Self> {
        (self.0 != 0)
            .then(|| TinyScalar(pow_mod(self.0 as u64, TINY_Q as u64 - 2, TINY_Q as u64) as u8))
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        TinyScalar(rng.gen_range(0..TINY_Q))
    }
    fn to_bytes(&self) -> Vec<u8> {
        vec![self.0]
    }
    fn from_bytes(b: &[u8]) -> Option<Self> {
        match b {
            [v] if *v < TINY_Q => Some(TinyScalar(*v)),
            _ => None,
        }
    }
}

/// The order-11 subgroup of (Z/23Z)*, generated by 2.
#[derive(Debug, Clone, Copy, Default)]
pub struct TinyGroup;

impl PrimeOrderGroup for TinyGroup {
    type Scalar = TinyScalar;
    type Element = TinyElement;

    const NAME: &'static str = "tiny-z23";

    fn generator() -> TinyElement {
        TinyElement(2)
    }
    fn identity() -> TinyElement {
        TinyElement(1)
    }
    fn op(a: &TinyElement, b: &TinyElement) -> TinyElement {
        TinyElement(((a.0 as u16 * b.0 as u16) % TINY_P as u16) as u8)
    }
    fn exp(base: &TinyElement, e: &TinyScalar) -> TinyElement {
        TinyElement(pow_mod(base.0 as u64, e.0 as u64, TINY_P as u64) as u8)
    }
    fn hash_to_group(bytes: &[u8]) -> TinyElement {
        let mut h = Sha256::new();
        h.update(b"hash-to-group/tiny-z23");
        h.update(bytes);
        let d: [u8; 32] = h.finalize().into();
        let x = u64::from_be_bytes(d[..8].try_into().unwrap()) % (TINY_P as u64 - 1) + 1;
        // Squares of units form the index-2 subgroup, which has order 11.
        TinyElement((x * x % TINY_P as u64) as u8)
    }
    fn element_bytes(e: &TinyElement) -> Vec<u8> {
        vec![e.0]
    }
    fn element_from_bytes(b: &[u8]) -> Option<TinyElement> {
        match b {
            [v] => TinyElement::new(*v as u64),
            _ => None,
        }
    }
    fn is_valid(e: &TinyElement) -> bool {
        e.0 != 0 && e.0 < TINY_P && pow_mod(e.0 as u64, TINY_Q as u64, TINY_P as u64) == 1
    }
}

// ---------------------------------------------------------------------------
// Ristretto255

impl ScalarField for Scalar {
    fn zero() -> Self {
        Scalar::ZERO
    }
    fn one() -> Self {
        Scalar::ONE
    }
    fn from_u64(v: u64) -> Self {
        Scalar::from(v)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn invert(&self) -> Option<Self> {
        (*self != Scalar::ZERO).then(|| Scalar::invert(self))
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Scalar::random(rng)
    }
    fn to_bytes(&self) -> Vec<u8> {
        Scalar::to_bytes(self).to_vec()
    }
    fn from_bytes(b: &[u8]) -> Option<Self> {
        let arr: [u8; 32] = b.try_into().ok()?;
        Option::from(Scalar::from_canonical_bytes(arr))
    }
}

/// The Ristretto group over Curve25519 (prime order, ~126-bit security).
#[derive(Debug, Clone, Copy, Default)]
pub struct Ristretto255;

impl PrimeOrderGroup for Ristretto255 {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    const NAME: &'static str = "ristretto255";

    fn generator() -> RistrettoPoint {
        curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT
    }
    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }
    fn op(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }
    fn exp(base: &RistrettoPoint, e: &Scalar) -> RistrettoPoint {
        base * e
    }
    fn hash_to_group(bytes: &[u8]) -> RistrettoPoint {
        let mut input = b"hash-to-group/ristretto255".to_vec();
        input.extend_from_slice(bytes);
        RistrettoPoint::hash_from_bytes::<Sha512>(&input)
    }
    fn element_bytes(e: &RistrettoPoint) -> Vec<u8> {
        e.compress().to_bytes().to_vec()
    }
    fn element_from_bytes(b: &[u8]) -> Option<RistrettoPoint> {
        CompressedRistretto::from_slice(b).ok()?.decompress()
    }
    fn is_valid(e: &RistrettoPoint) -> bool {
        // Every decodable Ristretto element lies in the prime-order group.
        Self::element_from_bytes(&Self::element_bytes(e)).as_ref() == Some(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn brute_pow(base: u64, e: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * base % 23)
    }

    #[test]
    fn tiny_exp_matches_brute_force() {
        // 4^7 mod 23 = 8
        let four = TinyElement::new(4).unwrap();
        assert_eq!(TinyGroup::exp(&four, &TinyScalar::from_u64(7)).value(), 8);
        for b in TinyElement::all() {
            for e in TinyScalar::all() {
                assert_eq!(
                    TinyGroup::exp(&b, &e).value() as u64,
                    brute_pow(b.value() as u64, e.value() as u64)
                );
            }
        }
    }

    #[test]
    fn tiny_subgroup_has_order_11() {
        let all = TinyElement::all();
        let mut vals: Vec<u8> = all.iter().map(|e| e.value()).collect();
        vals.sort();
        vals.dedup();
        assert_eq!(vals, vec![1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]);
        assert!(TinyElement::new(5).is_none());
        assert!(TinyElement::new(0).is_none());
    }

    #[test]
    fn tiny_hash_to_group_is_always_valid() {
        for i in 0u32..500 {
            assert!(TinyGroup::is_valid(&TinyGroup::hash_to_group(
                &i.to_be_bytes()
            )));
        }
    }

    fn group_laws<G: PrimeOrderGroup>(rng: &mut ChaCha20Rng) {
        let g = G::generator();
        assert_eq!(G::exp(&g, &G::Scalar::zero()), G::identity());
        for _ in 0..20 {
            let a = G::Scalar::random(rng);
            let b = G::Scalar::random(rng);
            let ga = G::exp(&g, &a);
            assert_eq!(G::exp(&ga, &b), G::exp(&G::exp(&g, &b), &a));
            assert_eq!(G::op(&ga, &G::exp(&g, &b)), G::exp(&g, &a.add(&b)));
            assert_eq!(G::op(&ga, &G::identity()), ga);
            if let Some(inv) = a.invert() {
                assert_eq!(a.mul(&inv), G::Scalar::one());
            }
            assert_eq!(a.add(&a.neg()), G::Scalar::zero());
            assert_eq!(G::Scalar::from_bytes(&a.to_bytes()), Some(a));
            assert_eq!(G::element_from_bytes(&G::element_bytes(&ga)), Some(ga));
        }
        assert!(G::is_valid(&G::hash_to_group(b"x")));
        assert_ne!(G::hash_to_group(b"x"), G::hash_to_group(b"y"));
    }

    #[test]
    fn group_laws_hold_in_both_groups() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        group_laws::<TinyGroup>(&mut rng);
        group_laws::<Ristretto255>(&mut rng);
    }
}
