use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::codec::{CodecError, Decode, Encode, Field, Reader, Writer};

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let v = hex::decode(s).ok()?;
        Some(Digest(v.try_into().ok()?))
    }

    /// Leading 8 bytes as a big-endian integer; used for sampling.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().unwrap())
    }

    /// Number of leading zero bits.
    pub fn leading_zero_bits(&self) -> u32 {
        let mut n = 0;
        for b in self.0 {
            if b == 0 {
                n += 8;
            } else {
                n += b.leading_zeros();
                break;
            }
        }
        n
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Field for Digest {
    fn write(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Digest(r.fixed::<32>("digest")?))
    }
}

impl Field for Vec<Digest> {
    fn write(&self, w: &mut Writer) {
        w.u64(self.len() as u64);
        for d in self {
            w.bytes(&d.0);
        }
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.byte_list()?
            .into_iter()
            .map(|b| {
                b.try_into()
                    .map(Digest)
                    .map_err(|_| CodecError::invalid("digest", "expected 32 bytes"))
            })
            .collect()
    }
}

/// Raw SHA-256 of a byte string.
pub fn hash_bytes(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 of the canonical encoding of a record.
pub fn hash_canonical<T: Encode + ?Sized>(value: &T) -> Digest {
    hash_bytes(&value.to_canonical())
}

/// Decodes and re-hashes; convenience for tests and audits.
pub fn rehash<T: Encode + Decode>(bytes: &[u8]) -> Result<Digest, CodecError> {
    Ok(hash_canonical(&T::from_canonical(bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Blob;

    #[test]
    fn empty_string_vector() {
        assert_eq!(
            hash_bytes(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn canonical_hash_is_over_encoding() {
        let b = Blob { bytes: vec![] };
        // tag 0x01, body length 4, one empty field
        assert_eq!(b.to_canonical(), vec![1, 0, 0, 0, 4, 0, 0, 0, 0]);
        assert_eq!(hash_canonical(&b), hash_bytes(&[1, 0, 0, 0, 4, 0, 0, 0, 0]));
        assert_eq!(hash_canonical(&b), hash_canonical(&b));
    }

    #[test]
    fn leading_zero_bits() {
        let mut d = Digest::ZERO;
        assert_eq!(d.leading_zero_bits(), 256);
        d.0[1] = 0b0001_0000;
        assert_eq!(d.leading_zero_bits(), 11);
    }
}
