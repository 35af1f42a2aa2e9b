//! Records stored on the ledger.

use crate::canonical_record;
use crate::codec::{CodecError, Decode, Encode, Nested, Reader, Writer};
use crate::contracts::ContractCode;
use crate::crypto::{hash_bytes, hash_canonical, Digest, EncPublicKey, Signature, VerifyKey};

/// A ciphertext together with the key epoch it was produced under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochCiphertext {
    pub epoch: u64,
    pub ct: Vec<u8>,
}

canonical_record!(EpochCiphertext, 0x30, { epoch, ct });
impl Nested for EpochCiphertext {}

impl EpochCiphertext {
    /// The digest a successor must name as `h_prev`.
    pub fn head_hash(&self) -> Digest {
        hash_canonical(self)
    }
}

/// New contract state: either a full encrypted state or an encrypted diff
/// against the previous head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePayload {
    pub is_diff: bool,
    pub state: EpochCiphertext,
}

canonical_record!(StatePayload, 0x31, { is_diff, state });
impl Nested for StatePayload {}

/// Attested output of contract creation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisBody {
    pub code: ContractCode,
    pub cid: Digest,
    pub st0: EpochCiphertext,
    pub pk_in: EncPublicKey,
}

canonical_record!(GenesisBody, 0x32, { code, cid, st0, pk_in });
impl Nested for GenesisBody {}

/// The enclave's bound tuple for one request or one batch. Position `i` of
/// `h_inp`, `h_outp` and `spk` describe the same request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomDeliver {
    pub cid: Digest,
    pub h_inp: Vec<Digest>,
    pub h_prev: Digest,
    pub payload: StatePayload,
    pub h_outp: Vec<Digest>,
    pub spk: Vec<VerifyKey>,
}

canonical_record!(AtomDeliver, 0x33, { cid, h_inp, h_prev, payload, h_outp, spk });
impl Nested for AtomDeliver {}

impl AtomDeliver {
    pub fn position_of(&self, h_inp: &Digest) -> Option<usize> {
        self.h_inp.iter().position(|h| h == h_inp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateTransition {
    pub deliver: AtomDeliver,
    pub sig: Signature,
}

canonical_record!(StateTransition, 0x34, { deliver, sig });
impl Nested for StateTransition {}

/// Re-encryption of the latest state under a new epoch's keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RekeyBody {
    pub cid: Digest,
    pub h_prev: Digest,
    pub state: EpochCiphertext,
    pub pk_in: EncPublicKey,
}

canonical_record!(RekeyBody, 0x35, { cid, h_prev, state, pk_in });
impl Nested for RekeyBody {}

/// Replicated key-manager state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KmcRecord {
    /// One key derivation charged to `host` in `epoch`.
    BudgetGrant {
        host: u64,
        epoch: u64,
        request: Digest,
    },
    /// Key-confirmation tag fixed by the first derivation of `(cid, epoch)`.
    ConfirmTag {
        cid: Digest,
        epoch: u64,
        tag: Digest,
    },
    /// Committee membership after a rotation.
    Committee {
        generation: u64,
        members: Vec<u64>,
        threshold: u64,
    },
}

impl Encode for KmcRecord {
    const TAG: u8 = 0x36;
    fn encode_fields(&self, w: &mut Writer) {
        match self {
            KmcRecord::BudgetGrant {
                host,
                epoch,
                request,
            } => {
                w.u8(1).u64(*host).u64(*epoch).bytes(request.as_bytes());
            }
            KmcRecord::ConfirmTag { cid, epoch, tag } => {
                w.u8(2)
                    .bytes(cid.as_bytes())
                    .u64(*epoch)
                    .bytes(tag.as_bytes());
            }
            KmcRecord::Committee {
                generation,
                members,
                threshold,
            } => {
                w.u8(3).u64(*generation).u64(members.len() as u64);
                for m in members {
                    w.u64(*m);
                }
                w.u64(*threshold);
            }
        }
    }
}

impl Decode for KmcRecord {
    const TAG: u8 = 0x36;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            1 => Ok(KmcRecord::BudgetGrant {
                host: r.u64()?,
                epoch: r.u64()?,
                request: Digest(r.fixed::<32>("request")?),
            }),
            2 => Ok(KmcRecord::ConfirmTag {
                cid: Digest(r.fixed::<32>("cid")?),
                epoch: r.u64()?,
                tag: Digest(r.fixed::<32>("tag")?),
            }),
            3 => {
                let generation = r.u64()?;
                let n = r.u64()? as usize;
                let mut members = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    members.push(r.u64()?);
                }
                Ok(KmcRecord::Committee {
                    generation,
                    members,
                    threshold: r.u64()?,
                })
            }
            k => Err(CodecError::invalid("kmc record", k.to_string())),
        }
    }
}
impl Nested for KmcRecord {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerItem {
    Genesis { body: GenesisBody, sig: Signature },
    Transition(StateTransition),
    Rekey { body: RekeyBody, sig: Signature },
    KeyManager(KmcRecord),
}

impl Encode for LedgerItem {
    const TAG: u8 = 0x3f;
    fn encode_fields(&self, w: &mut Writer) {
        match self {
            LedgerItem::Genesis { body, sig } => {
                w.u8(1).record(body);
                crate::codec::Field::write(sig, w);
            }
            LedgerItem::Transition(t) => {
                w.u8(2).record(t);
            }
            LedgerItem::Rekey { body, sig } => {
                w.u8(3).record(body);
                crate::codec::Field::write(sig, w);
            }
            LedgerItem::KeyManager(k) => {
                w.u8(4).record(k);
            }
        }
    }
}

impl Decode for LedgerItem {
    const TAG: u8 = 0x3f;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        use crate::codec::Field;
        match r.u8()? {
            1 => Ok(LedgerItem::Genesis {
                body: r.record()?,
                sig: Signature::read(r)?,
            }),
            2 => Ok(LedgerItem::Transition(r.record()?)),
            3 => Ok(LedgerItem::Rekey {
                body: r.record()?,
                sig: Signature::read(r)?,
            }),
            4 => Ok(LedgerItem::KeyManager(r.record()?)),
            k => Err(CodecError::invalid("ledger item kind", k.to_string())),
        }
    }
}

impl LedgerItem {
    /// The state ciphertext this item makes the head, if any.
    pub fn head_state(&self) -> Option<&EpochCiphertext> {
        match self {
            LedgerItem::Genesis { body, .. } => Some(&body.st0),
            LedgerItem::Transition(t) => Some(&t.deliver.payload.state),
            LedgerItem::Rekey { body, .. } => Some(&body.state),
            LedgerItem::KeyManager(_) => None,
        }
    }

    /// Whether the item carries a full state a reader can start replay from.
    pub fn is_checkpoint(&self) -> bool {
        match self {
            LedgerItem::Genesis { .. } | LedgerItem::Rekey { .. } => true,
            LedgerItem::Transition(t) => !t.deliver.payload.is_diff,
            LedgerItem::KeyManager(_) => false,
        }
    }

    pub fn h_prev(&self) -> Option<Digest> {
        match self {
            LedgerItem::Transition(t) => Some(t.deliver.h_prev),
            LedgerItem::Rekey { body, .. } => Some(body.h_prev),
            _ => None,
        }
    }

    pub fn item_hash(&self) -> Digest {
        hash_bytes(&self.to_canonical())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn items_round_trip() {
        let ct = EpochCiphertext {
            epoch: 3,
            ct: vec![1, 2, 3],
        };
        let t = LedgerItem::Transition(StateTransition {
            deliver: AtomDeliver {
                cid: Digest([1; 32]),
                h_inp: vec![Digest([2; 32]), Digest([3; 32])],
                h_prev: Digest([4; 32]),
                payload: StatePayload {
                    is_diff: true,
                    state: ct.clone(),
                },
                h_outp: vec![Digest([5; 32]), Digest([6; 32])],
                spk: vec![VerifyKey([7; 32]), VerifyKey([8; 32])],
            },
            sig: Signature([9; 64]),
        });
        assert_eq!(LedgerItem::from_canonical(&t.to_canonical()).unwrap(), t);
        for k in [
            KmcRecord::BudgetGrant {
                host: 1,
                epoch: 2,
                request: Digest([3; 32]),
            },
            KmcRecord::ConfirmTag {
                cid: Digest([1; 32]),
                epoch: 0,
                tag: Digest([2; 32]),
            },
            KmcRecord::Committee {
                generation: 1,
                members: vec![1, 2, 3],
                threshold: 1,
            },
        ] {
            let item = LedgerItem::KeyManager(k);
            assert_eq!(
                LedgerItem::from_canonical(&item.to_canonical()).unwrap(),
                item
            );
        }
        let g = LedgerItem::Genesis {
            body: GenesisBody {
                code: ContractCode::token("x"),
                cid: ContractCode::token("x").cid(),
                st0: ct,
                pk_in: EncPublicKey([1; 32]),
            },
            sig: Signature([0; 64]),
        };
        assert_eq!(LedgerItem::from_canonical(&g.to_canonical()).unwrap(), g);
    }
}
