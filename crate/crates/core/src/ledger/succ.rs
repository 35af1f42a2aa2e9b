//! The successor predicate and the per-entry summaries it reads.
//!
//! `succ` is a pure function of an entry summary and a candidate item. The
//! summary is a fold over the accepted items, so evaluating `succ` against it is
//! equivalent to evaluating it against the full entry.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::item::{EpochCiphertext, KmcRecord, LedgerItem};
use crate::attest::verify_attestation;
use crate::codec::{Decode, Encode};
use crate::contracts::wrapper_program_hash;
use crate::crypto::{Digest, VerifyKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Reject {
    #[error("candidate is not a well-formed ledger item: {0}")]
    Malformed(String),
    #[error("unknown entry and candidate is not a genesis record")]
    NotGenesis,
    #[error("entry already has a genesis record")]
    DuplicateGenesis,
    #[error("genesis cid does not match the contract code or entry id")]
    CidMismatch,
    #[error("attestation does not verify")]
    BadAttestation,
    #[error("stale state: expected h_prev {expected}, got {got}")]
    StaleState { expected: Digest, got: Digest },
    #[error("epoch {got} precedes the head epoch {head}")]
    EpochRegression { head: u64, got: u64 },
    #[error("item kind not allowed in this entry")]
    WrongEntryKind,
    #[error("privacy budget exhausted for host {host} in epoch {epoch}")]
    BudgetExhausted { host: u64, epoch: u64 },
    #[error("request already granted")]
    DuplicateGrant,
    #[error("key-confirmation tag already fixed with a different value")]
    ConfirmConflict,
    #[error("batch vectors have inconsistent lengths")]
    Shape,
}

/// What a contract entry's history implies for the next write.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub cid: Digest,
    pub prog_hash: Digest,
    pub head: Arc<EpochCiphertext>,
    pub head_hash: Digest,
    pub head_index: usize,
    /// Index of the latest full-state item.
    pub checkpoint_index: usize,
    pub diffs_since_checkpoint: usize,
    pub pk_in: crate::crypto::EncPublicKey,
    pub pk_in_epoch: u64,
}

#[derive(Debug, Clone, Default)]
pub struct KmcSummary {
    pub grants: BTreeMap<(u64, u64), BTreeSet<Digest>>,
    pub confirms: BTreeMap<(Digest, u64), Digest>,
    pub committee: Option<(u64, Vec<u64>, u64)>,
}

impl KmcSummary {
    pub fn granted(&self, host: u64, epoch: u64) -> usize {
        self.grants.get(&(host, epoch)).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, Clone)]
pub enum EntrySummary {
    Contract(ChainSummary),
    KeyManager(KmcSummary),
}

/// Parameters `succ` needs besides the entry itself.
#[derive(Debug, Clone, Copy)]
pub struct SuccParams {
    pub attestation_root: VerifyKey,
    pub kmc_id: Digest,
    pub kappa: u64,
}

/// Decides whether `candidate` may be appended to entry `id`, returning the
/// updated summary on acceptance.
pub fn succ(
    params: &SuccParams,
    id: &Digest,
    summary: Option<&EntrySummary>,
    candidate: &[u8],
    next_index: usize,
) -> Result<EntrySummary, Reject> {
    let item =
        LedgerItem::from_canonical(candidate).map_err(|e| Reject::Malformed(e.to_string()))?;
    if *id == params.kmc_id {
        let LedgerItem::KeyManager(rec) = item else {
            return Err(Reject::WrongEntryKind);
        };
        let mut s = match summary {
            Some(EntrySummary::KeyManager(s)) => s.clone(),
            None => KmcSummary::default(),
            Some(EntrySummary::Contract(_)) => return Err(Reject::WrongEntryKind),
        };
        succ_kmc(params, &mut s, rec)?;
        return Ok(EntrySummary::KeyManager(s));
    }
    match (summary, item) {
        (None, LedgerItem::Genesis { body, sig }) => {
            if body.cid != body.code.cid() || body.cid != *id {
                return Err(Reject::CidMismatch);
            }
            let prog_hash = wrapper_program_hash(&body.code);
            if !verify_attestation(
                &params.attestation_root,
                &prog_hash,
                &body.to_canonical(),
                &sig,
            ) {
                return Err(Reject::BadAttestation);
            }
            let head_hash = body.st0.head_hash();
            Ok(EntrySummary::Contract(ChainSummary {
                cid: body.cid,
                prog_hash,
                pk_in_epoch: body.st0.epoch,
                head: Arc::new(body.st0),
                head_hash,
                head_index: next_index,
                checkpoint_index: next_index,
                diffs_since_checkpoint: 0,
                pk_in: body.pk_in,
            }))
        }
        (None, _) => Err(Reject::NotGenesis),
        (Some(EntrySummary::KeyManager(_)), _) => Err(Reject::WrongEntryKind),
        (Some(EntrySummary::Contract(_)), LedgerItem::Genesis { .. }) => {
            Err(Reject::DuplicateGenesis)
        }
        (Some(EntrySummary::Contract(_)), LedgerItem::KeyManager(_)) => Err(Reject::WrongEntryKind),
        (Some(EntrySummary::Contract(s)), LedgerItem::Transition(t)) => {
            let d = &t.deliver;
            if d.cid != s.cid {
                return Err(Reject::CidMismatch);
            }
            if d.h_prev != s.head_hash {
                return Err(Reject::StaleState {
                    expected: s.head_hash,
                    got: d.h_prev,
                });
            }
            if d.h_inp.len() != d.h_outp.len() || d.h_inp.len() != d.spk.len() {
                return Err(Reject::Shape);
            }
            if d.payload.state.epoch < s.head.epoch {
                return Err(Reject::EpochRegression {
                    head: s.head.epoch,
                    got: d.payload.state.epoch,
                });
            }
            if !verify_attestation(
                &params.attestation_root,
                &s.prog_hash,
                &d.to_canonical(),
                &t.sig,
            ) {
                return Err(Reject::BadAttestation);
            }
            let mut n = s.clone();
            n.head_hash = d.payload.state.head_hash();
            n.head_index = next_index;
            if d.payload.is_diff {
                n.diffs_since_checkpoint += 1;
            } else {
                n.checkpoint_index = next_index;
                n.diffs_since_checkpoint = 0;
            }
            n.head = Arc::new(t.deliver.payload.state);
            Ok(EntrySummary::Contract(n))
        }
        (Some(EntrySummary::Contract(s)), LedgerItem::Rekey { body, sig }) => {
            if body.cid != s.cid {
                return Err(Reject::CidMismatch);
            }
            if body.h_prev != s.head_hash {
                return Err(Reject::StaleState {
                    expected: s.head_hash,
                    got: body.h_prev,
                });
            }
            if body.state.epoch <= s.pk_in_epoch {
                return Err(Reject::EpochRegression {
                    head: s.pk_in_epoch,
                    got: body.state.epoch,
                });
            }
            if !verify_attestation(
                &params.attestation_root,
                &s.prog_hash,
                &body.to_canonical(),
                &sig,
            ) {
                return Err(Reject::BadAttestation);
            }
            let mut n = s.clone();
            n.head_hash = body.state.head_hash();
            n.head_index = next_index;
            n.checkpoint_index = next_index;
            n.diffs_since_checkpoint = 0;
            n.pk_in = body.pk_in;
            n.pk_in_epoch = body.state.epoch;
            n.head = Arc::new(body.state);
            Ok(EntrySummary::Contract(n))
        }
    }
}

fn succ_kmc(params: &SuccParams, s: &mut KmcSummary, rec: KmcRecord) -> Result<(), Reject> {
    match rec {
        KmcRecord::BudgetGrant {
            host,
            epoch,
            request,
        } => {
            let set = s.grants.entry((host, epoch)).or_default();
            if set.contains(&request) {
                return Err(Reject::DuplicateGrant);
            }
            if set.len() as u64 >= params.kappa {
                return Err(Reject::BudgetExhausted { host, epoch });
            }
            set.insert(request);
        }
        KmcRecord::ConfirmTag { cid, epoch, tag } => {
            if let Some(existing) = s.confirms.get(&(cid, epoch)) {
                if *existing != tag {
                    return Err(Reject::ConfirmConflict);
                }
                return Err(Reject::DuplicateGrant);
            }
            s.confirms.insert((cid, epoch), tag);
        }
        KmcRecord::Committee {
            generation,
            members,
            threshold,
        } => {
            s.committee = Some((generation, members, threshold));
        }
    }
    Ok(())
}
