//! Flat key/value contract state and the diff/apply algebra over it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{CodecError, Decode, Encode, Reader, Writer};
use crate::crypto::{hash_bytes, Digest};

/// Contract state: byte keys to byte values, iterated in key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractState {
    entries: BTreeMap<Vec<u8>, Vec<u8>>,
}

impl ContractState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.entries.insert(key, value);
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Vec<u8>> {
        self.entries.remove(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    pub fn iter_prefix<'a>(
        &'a self,
        prefix: &'a [u8],
    ) -> impl Iterator<Item = (&'a [u8], &'a [u8])> {
        self.entries
            .range(prefix.to_vec()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_slice(), v.as_slice()))
    }
}

impl Encode for ContractState {
    const TAG: u8 = 0x21;
    fn encode_fields(&self, w: &mut Writer) {
        w.u64(self.entries.len() as u64);
        for (k, v) in &self.entries {
            w.bytes(k).bytes(v);
        }
    }
}

impl Decode for ContractState {
    const TAG: u8 = 0x21;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.u64()?;
        let mut entries = BTreeMap::new();
        let mut last: Option<Vec<u8>> = None;
        for _ in 0..n {
            let k = r.byte_vec()?;
            let v = r.byte_vec()?;
            if last.as_ref().is_some_and(|l| *l >= k) {
                return Err(CodecError::invalid("state", "keys not strictly increasing"));
            }
            last = Some(k.clone());
            entries.insert(k, v);
        }
        Ok(ContractState { entries })
    }
}

/// One record edit. `old_hash` is the hash of the value being replaced, or
/// `None` if the key was absent; `new` is `None` for a deletion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub key: Vec<u8>,
    pub old_hash: Option<Digest>,
    pub new: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateDiff {
    pub edits: Vec<Edit>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("edit {index} expects a different prior value for key {key}")]
    OldValueMismatch { index: usize, key: String },
    #[error("edits are not in strictly increasing key order at {0}")]
    Unordered(usize),
}

impl StateDiff {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }
}

/// Edits turning `old` into `new`, sorted by key.
pub fn diff(new: &ContractState, old: &ContractState) -> StateDiff {
    let mut edits = Vec::new();
    let mut a = old.entries.iter().peekable();
    let mut b = new.entries.iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some((ka, va)), None) => {
                edits.push(Edit {
                    key: (*ka).clone(),
                    old_hash: Some(hash_bytes(va)),
                    new: None,
                });
                a.next();
            }
            (None, Some((kb, vb))) => {
                edits.push(Edit {
                    key: (*kb).clone(),
                    old_hash: None,
                    new: Some((*vb).clone()),
                });
                b.next();
            }
            (Some((ka, va)), Some((kb, vb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    edits.push(Edit {
                        key: (*ka).clone(),
                        old_hash: Some(hash_bytes(va)),
                        new: None,
                    });
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    edits.push(Edit {
                        key: (*kb).clone(),
                        old_hash: None,
                        new: Some((*vb).clone()),
                    });
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    if va != vb {
                        edits.push(Edit {
                            key: (*kb).clone(),
                            old_hash: Some(hash_bytes(va)),
                            new: Some((*vb).clone()),
                        });
                    }
                    a.next();
                    b.next();
                }
            },
        }
    }
    StateDiff { edits }
}

/// Applies `d` to `st`, checking every edit's prior value.
pub fn apply(st: &ContractState, d: &StateDiff) -> Result<ContractState, DiffError> {
    let mut out = st.clone();
    apply_in_place(&mut out, d)?;
    Ok(out)
}

pub fn apply_in_place(st: &mut ContractState, d: &StateDiff) -> Result<(), DiffError> {
    for (i, w) in d.edits.windows(2).enumerate() {
        if w[0].key >= w[1].key {
            return Err(DiffError::Unordered(i + 1));
        }
    }
    for (index, e) in d.edits.iter().enumerate() {
        let current = st.entries.get(&e.key).map(|v| hash_bytes(v));
        if current != e.old_hash {
            return Err(DiffError::OldValueMismatch {
                index,
                key: hex::encode(&e.key),
            });
        }
    }
    for e in &d.edits {
        match &e.new {
            Some(v) => st.entries.insert(e.key.clone(), v.clone()),
            None => st.entries.remove(&e.key),
        };
    }
    Ok(())
}

impl Encode for StateDiff {
    const TAG: u8 = 0x22;
    fn encode_fields(&self, w: &mut Writer) {
        w.u64(self.edits.len() as u64);
        for e in &self.edits {
            w.bytes(&e.key);
            match &e.old_hash {
                Some(h) => w.bool(true).bytes(h.as_bytes()),
                None => w.bool(false),
            };
            match &e.new {
                Some(v) => w.bool(true).bytes(v),
                None => w.bool(false),
            };
        }
    }
}

impl Decode for StateDiff {
    const TAG: u8 = 0x22;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let n = r.u64()? as usize;
        let mut edits = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let key = r.byte_vec()?;
            let old_hash = if r.bool()? {
                Some(Digest(r.fixed::<32>("old_hash")?))
            } else {
                None
            };
            let new = if r.bool()? { Some(r.byte_vec()?) } else { None };
            edits.push(Edit { key, old_hash, new });
        }
        Ok(StateDiff { edits })
    }
}

/// Pads `bytes` with `0x80` then zeros up to a multiple of `unit`.
pub fn pad_to_class(mut bytes: Vec<u8>, unit: usize) -> Vec<u8> {
    let unit = unit.max(1);
    bytes.push(0x80);
    let target = bytes.len().div_ceil(unit) * unit;
    bytes.resize(target, 0);
    bytes
}

pub fn unpad_class(bytes: &[u8]) -> Option<&[u8]> {
    let end = bytes.iter().rposition(|&b| b != 0)?;
    (bytes[end] == 0x80).then(|| &bytes[..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::collection::btree_map;
    use proptest::prelude::*;

    fn st(pairs: &[(&str, &str)]) -> ContractState {
        let mut s = ContractState::new();
        for (k, v) in pairs {
            s.insert(k.as_bytes().to_vec(), v.as_bytes().to_vec());
        }
        s
    }

    #[test]
    fn diff_of_equal_states_is_empty() {
        let a = st(&[("a", "1"), ("b", "2")]);
        assert!(diff(&a, &a).is_empty());
    }

    #[test]
    fn diff_then_apply_and_mismatch() {
        let old = st(&[("a", "1"), ("b", "2"), ("c", "3")]);
        let new = st(&[("a", "1"), ("b", "9"), ("d", "4")]);
        let d = diff(&new, &old);
        assert_eq!(d.len(), 3);
        assert_eq!(apply(&old, &d).unwrap(), new);
        let other = st(&[("a", "1"), ("b", "5"), ("c", "3")]);
        assert!(matches!(
            apply(&other, &d),
            Err(DiffError::OldValueMismatch { index: 0, .. })
        ));
        let back = StateDiff::from_canonical(&d.to_canonical()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn padding_round_trip() {
        for len in 0..70 {
            let b = vec![7u8; len];
            let p = pad_to_class(b.clone(), 32);
            assert_eq!(p.len() % 32, 0);
            assert_eq!(unpad_class(&p).unwrap(), &b[..]);
        }
    }

    fn arb_state() -> impl Strategy<Value = ContractState> {
        btree_map(
            proptest::collection::vec(0u8..4, 1..3),
            proptest::collection::vec(any::<u8>(), 0..4),
            0..12,
        )
        .prop_map(|entries| ContractState { entries })
    }

    proptest! {
        #[test]
        fn apply_diff_identity(a in arb_state(), b in arb_state()) {
            prop_assert_eq!(apply(&a, &diff(&b, &a)).unwrap(), b.clone());
            prop_assert_eq!(ContractState::from_canonical(&b.to_canonical()).unwrap(), b);
        }

        #[test]
        fn chained_diffs_equal_final_state(states in proptest::collection::vec(arb_state(), 1..6)) {
            let mut cur = ContractState::new();
            let mut replay = ContractState::new();
            for s in &states {
                let d = diff(s, &cur);
                apply_in_place(&mut replay, &d).unwrap();
                cur = s.clone();
            }
            prop_assert_eq!(replay, cur);
        }
    }
}
