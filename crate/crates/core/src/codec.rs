//! Canonical tag-length-value encoding.
//!
//! Every protocol record is encoded as `tag (1 byte) || body length (u32 BE) || body`,
//! where the body is the record's fields in a fixed order, each written as
//! `length (u32 BE) || bytes`. Hashes and signatures are always taken over this
//! encoding, so two implementations that agree on field order agree on digests.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input while reading {0}")]
    Truncated(&'static str),
    #[error("tag mismatch: expected {expected:#04x}, found {found:#04x}")]
    TagMismatch { expected: u8, found: u8 },
    #[error("declared body length {declared} does not match available {available}")]
    LengthMismatch { declared: usize, available: usize },
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl CodecError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        CodecError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Builds the body of one record.
#[derive(Debug)]
pub struct Writer {
    tag: u8,
    body: Vec<u8>,
}

impl Writer {
    pub fn new(tag: u8) -> Self {
        Writer {
            tag,
            body: Vec::new(),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        let len = u32::try_from(b.len()).expect("field longer than u32::MAX");
        self.body.extend_from_slice(&len.to_be_bytes());
        self.body.extend_from_slice(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn record<T: Encode + ?Sized>(&mut self, r: &T) -> &mut Self {
        self.bytes(&r.to_canonical())
    }

    pub fn option<T: Encode>(&mut self, r: Option<&T>) -> &mut Self {
        match r {
            Some(r) => self.bool(true).record(r),
            None => self.bool(false),
        }
    }

    /// A list is a count followed by each element as a nested record.
    pub fn list<T: Encode>(&mut self, items: &[T]) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            self.record(item);
        }
        self
    }

    pub fn byte_list(&mut self, items: &[Vec<u8>]) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            self.bytes(item);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        let len = u32::try_from(self.body.len()).expect("record longer than u32::MAX");
        let mut out = Vec::with_capacity(5 + self.body.len());
        out.push(self.tag);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }
}

/// Reads the fields of one record in order.
#[derive(Debug)]
pub struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Parses the record header and checks the tag and the declared length.
    pub fn open(input: &'a [u8], expected_tag: u8) -> Result<Self, CodecError> {
        if input.len() < 5 {
            return Err(CodecError::Truncated("record header"));
        }
        if input[0] != expected_tag {
            return Err(CodecError::TagMismatch {
                expected: expected_tag,
                found: input[0],
            });
        }
        let declared = u32::from_be_bytes(input[1..5].try_into().unwrap()) as usize;
        let available = input.len() - 5;
        if declared != available {
            return Err(CodecError::LengthMismatch {
                declared,
                available,
            });
        }
        Ok(Reader {
            body: &input[5..],
            pos: 0,
        })
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let rest = &self.body[self.pos..];
        if rest.len() < 4 {
            return Err(CodecError::Truncated("field length"));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        if rest.len() - 4 < len {
            return Err(CodecError::Truncated("field body"));
        }
        self.pos += 4 + len;
        Ok(&rest[4..4 + len])
    }

    pub fn byte_vec(&mut self) -> Result<Vec<u8>, CodecError> {
        self.bytes().map(<[u8]>::to_vec)
    }

    pub fn fixed<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], CodecError> {
        let b = self.bytes()?;
        b.try_into()
            .map_err(|_| CodecError::invalid(field, format!("expected {N} bytes, got {}", b.len())))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.fixed::<8>("u64")?))
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.fixed::<1>("u8")?[0])
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CodecError::invalid("bool", format!("byte {other}"))),
        }
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.byte_vec()?)
            .map_err(|e| CodecError::invalid("string", e.to_string()))
    }

    pub fn record<T: Decode>(&mut self) -> Result<T, CodecError> {
        T::from_canonical(self.bytes()?)
    }

    pub fn option<T: Decode>(&mut self) -> Result<Option<T>, CodecError> {
        if self.bool()? {
            Ok(Some(self.record()?))
        } else {
            Ok(None)
        }
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, CodecError> {
        let n = self.u64()? as usize;
        // Each element costs at least a 4-byte length prefix.
        if n > (self.body.len() - self.pos) / 4 {
            return Err(CodecError::Truncated("list"));
        }
        (0..n).map(|_| self.record()).collect()
    }

    pub fn byte_list(&mut self) -> Result<Vec<Vec<u8>>, CodecError> {
        let n = self.u64()? as usize;
        if n > (self.body.len() - self.pos) / 4 {
            return Err(CodecError::Truncated("list"));
        }
        (0..n).map(|_| self.byte_vec()).collect()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.body.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

pub trait Encode {
    const TAG: u8;

    fn encode_fields(&self, w: &mut Writer);

    fn to_canonical(&self) -> Vec<u8> {
        let mut w = Writer::new(Self::TAG);
        self.encode_fields(&mut w);
        w.finish()
    }
}

pub trait Decode: Sized {
    const TAG: u8;

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError>;

    fn from_canonical(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::open(bytes, Self::TAG)?;
        let v = Self::decode_fields(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

/// Implements both traits for a record from a field list.
///
/// Every field type must itself be a [`Field`].
#[macro_export]
macro_rules! canonical_record {
    ($ty:ident, $tag:expr, { $($field:ident),* $(,)? }) => {
        impl $crate::codec::Encode for $ty {
            const TAG: u8 = $tag;
            fn encode_fields(&self, w: &mut $crate::codec::Writer) {
                $( $crate::codec::Field::write(&self.$field, w); )*
            }
        }
        impl $crate::codec::Decode for $ty {
            const TAG: u8 = $tag;
            fn decode_fields(r: &mut $crate::codec::Reader<'_>) -> Result<Self, $crate::codec::CodecError> {
                Ok($ty { $( $field: $crate::codec::Field::read(r)?, )* })
            }
        }
    };
}

/// A value that can appear as one field of a record.
pub trait Field: Sized {
    fn write(&self, w: &mut Writer);
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError>;
}

impl Field for u64 {
    fn write(&self, w: &mut Writer) {
        w.u64(*self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.u64()
    }
}

impl Field for bool {
    fn write(&self, w: &mut Writer) {
        w.bool(*self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.bool()
    }
}

impl Field for Vec<u8> {
    fn write(&self, w: &mut Writer) {
        w.bytes(self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.byte_vec()
    }
}

impl Field for String {
    fn write(&self, w: &mut Writer) {
        w.str(self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.string()
    }
}

/// Marker for records that nest as a single field.
pub trait Nested: Encode + Decode {}

impl<T: Nested> Field for T {
    fn write(&self, w: &mut Writer) {
        w.record(self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.record()
    }
}

impl<T: Nested> Field for Vec<T> {
    fn write(&self, w: &mut Writer) {
        w.list(self);
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.list()
    }
}

impl<T: Nested> Field for Option<T> {
    fn write(&self, w: &mut Writer) {
        w.option(self.as_ref());
    }
    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.option()
    }
}

/// Raw byte strings as a standalone record, for hashing opaque blobs canonically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blob {
    pub bytes: Vec<u8>,
}

canonical_record!(Blob, 0x01, { bytes });

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Eq)]
    struct Pair {
        a: u64,
        b: Vec<u8>,
    }
    canonical_record!(Pair, 0x7f, { a, b });
    impl Nested for Pair {}

    #[derive(Debug, Clone, PartialEq, Eq)]
    struct Outer {
        items: Vec<Pair>,
        tail: Option<Pair>,
        name: String,
    }
    canonical_record!(Outer, 0x7e, { items, tail, name });

    #[test]
    fn layout_is_tag_length_value() {
        let p = Pair {
            a: 1,
            b: vec![0xaa],
        };
        let enc = p.to_canonical();
        assert_eq!(
            enc,
            vec![
                0x7f, 0, 0, 0, 17, // tag, body length
                0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 1, // a
                0, 0, 0, 1, 0xaa, // b
            ]
        );
    }

    #[test]
    fn nested_round_trip() {
        let o = Outer {
            items: vec![
                Pair { a: 3, b: vec![] },
                Pair {
                    a: u64::MAX,
                    b: vec![1, 2, 3],
                },
            ],
            tail: None,
            name: "x".into(),
        };
        let back = Outer::from_canonical(&o.to_canonical()).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn rejects_wrong_tag_and_trailing() {
        let p = Pair { a: 1, b: vec![] };
        let mut enc = p.to_canonical();
        assert!(matches!(
            Outer::from_canonical(&enc),
            Err(CodecError::TagMismatch { .. })
        ));
        enc.push(0);
        assert!(matches!(
            Pair::from_canonical(&enc),
            Err(CodecError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn truncated_input_is_an_error_not_a_panic() {
        let p = Pair {
            a: 9,
            b: vec![1; 40],
        };
        let enc = p.to_canonical();
        for cut in 0..enc.len() {
            assert!(Pair::from_canonical(&enc[..cut]).is_err());
        }
    }
}
