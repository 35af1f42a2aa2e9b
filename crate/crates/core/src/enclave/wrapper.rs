//! The contract wrapper program run inside each enclave.
//!
//! Local state (`cache`, `batch`, cached epoch keys) is soft: erasing it at any
//! point costs a reload from the ledger but never safety. Outputs leave the
//! enclave only from [`WrapperCall::Claim`] after the binding transition is on
//! the ledger, or from the read-only path when the state they were computed on
//! is itself on the ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EnclaveCtx, EnclaveError, ReleaseEvent};
use crate::attest::SignedCredential;
use crate::codec::{Decode, Encode};
use crate::contracts::state::{apply_in_place, diff, pad_to_class, unpad_class, StateDiff};
use crate::contracts::{ContractCode, ContractState};
use crate::crypto::{hash_bytes, Digest, SymKey};
use crate::keymgr::{EpochKeyBundle, KeyRequest};
use crate::ledger::{
    AtomDeliver, EpochCiphertext, GenesisBody, LedgerItem, RekeyBody, StatePayload,
    StateTransition, WalView,
};
use crate::protocol::{ClaimMsg, Release, ReleaseBody, RequestMsg, SealedOutput, SignedInput};

/// How new state is written: full ciphertexts, or diffs with a checkpoint
/// every `checkpoint_interval` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMode {
    pub wal: bool,
    pub checkpoint_interval: u64,
}

impl Default for CommitMode {
    fn default() -> Self {
        CommitMode {
            wal: true,
            checkpoint_interval: 64,
        }
    }
}

impl CommitMode {
    pub fn full_state() -> Self {
        CommitMode {
            wal: false,
            ..CommitMode::default()
        }
    }
}

#[derive(Debug, Clone)]
pub enum WrapperCall {
    Create,
    Request {
        msg: RequestMsg,
        log: Option<WalView>,
        mode: CommitMode,
    },
    Claim(ClaimMsg),
    Submit {
        msg: RequestMsg,
    },
    CommitBatch {
        log: Option<WalView>,
        mode: CommitMode,
    },
    Rekey {
        log: Option<WalView>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub h_inp: Digest,
    pub reason: String,
}

/// Result of executing one request or one batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Executed {
    /// Present when state changed; outputs stay sealed until it is committed.
    pub transition: Option<StateTransition>,
    /// `outp_ct` per position of the transition.
    pub outputs: Vec<Vec<u8>>,
    /// Read-only outputs released immediately.
    pub releases: Vec<Release>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone)]
pub enum WrapperReply {
    Genesis {
        body: GenesisBody,
        sig: crate::crypto::Signature,
    },
    Executed(Executed),
    Released(Release),
    Queued {
        pending: usize,
    },
    Rekey {
        body: RekeyBody,
        sig: crate::crypto::Signature,
    },
}

/// Logical state rebuilt from a checkpoint and the diffs after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replayed {
    pub state: ContractState,
    pub head_hash: Digest,
    pub head_item: Digest,
    pub epoch: u64,
    pub diffs: usize,
}

/// Replays `items` (a checkpoint followed by diffs) for contract `cid`.
/// `state_key` returns the state key of an epoch.
pub fn replay_log<F>(
    cid: &Digest,
    items: &[Vec<u8>],
    mut state_key: F,
) -> Result<Replayed, EnclaveError>
where
    F: FnMut(u64) -> Result<SymKey, EnclaveError>,
{
    let corrupt = |index: usize, reason: &str| EnclaveError::LogCorrupt {
        index,
        reason: reason.to_string(),
    };
    let mut out: Option<Replayed> = None;
    for (index, bytes) in items.iter().enumerate() {
        let item = LedgerItem::from_canonical(bytes).map_err(|e| corrupt(index, &e.to_string()))?;
        let item_cid = match &item {
            LedgerItem::Genesis { body, .. } => body.cid,
            LedgerItem::Transition(t) => t.deliver.cid,
            LedgerItem::Rekey { body, .. } => body.cid,
            LedgerItem::KeyManager(_) => return Err(EnclaveError::WrongContract),
        };
        if item_cid != *cid {
            return Err(EnclaveError::WrongContract);
        }
        let head = item
            .head_state()
            .expect("contract items carry state")
            .clone();
        let key = state_key(head.epoch)?;
        let plain = key
            .decrypt(&head.ct)
            .map_err(|_| corrupt(index, "authentication failed"))?;
        match out.as_mut() {
            None => {
                if !item.is_checkpoint() {
                    return Err(EnclaveError::NotCheckpoint);
                }
                let state = ContractState::from_canonical(&plain)
                    .map_err(|e| corrupt(index, &e.to_string()))?;
                out = Some(Replayed {
                    state,
                    head_hash: head.head_hash(),
                    head_item: hash_bytes(bytes),
                    epoch: head.epoch,
                    diffs: 0,
                });
            }
            Some(r) => {
                if item.h_prev() != Some(r.head_hash) {
                    return Err(EnclaveError::LogBroken { index });
                }
                if item.is_checkpoint() {
                    r.state = ContractState::from_canonical(&plain)
                        .map_err(|e| corrupt(index, &e.to_string()))?;
                    r.diffs = 0;
                } else {
                    let body = unpad_class(&plain).ok_or_else(|| corrupt(index, "bad padding"))?;
                    let d = StateDiff::from_canonical(body)
                        .map_err(|e| corrupt(index, &e.to_string()))?;
                    apply_in_place(&mut r.state, &d).map_err(|e| corrupt(index, &e.to_string()))?;
                    r.diffs += 1;
                }
                r.head_hash = head.head_hash();
                r.head_item = hash_bytes(bytes);
                r.epoch = head.epoch;
            }
        }
    }
    out.ok_or(EnclaveError::LogEmpty)
}

#[derive(Debug, Clone)]
struct Cached {
    replayed: Replayed,
    /// Whether `head_item` is known to be on the ledger.
    on_ledger: bool,
}

pub struct ContractWrapper {
    code: ContractCode,
    cid: Digest,
    credential: SignedCredential,
    keys: BTreeMap<u64, EpochKeyBundle>,
    cache: Option<Cached>,
    batch: Vec<RequestMsg>,
    key_requests: u64,
}

impl ContractWrapper {
    pub fn new(code: ContractCode, credential: SignedCredential) -> Self {
        ContractWrapper {
            cid: code.cid(),
            code,
            credential,
            keys: BTreeMap::new(),
            cache: None,
            batch: Vec::new(),
            key_requests: 0,
        }
    }

    pub fn reset_soft_state(&mut self) {
        self.keys.clear();
        self.cache = None;
        self.batch.clear();
    }

    pub(super) fn handle(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        call: WrapperCall,
    ) -> Result<WrapperReply, EnclaveError> {
        match call {
            WrapperCall::Create => self.create(ctx),
            WrapperCall::Request { msg, log, mode } => {
                self.load(ctx, log.as_ref())?;
                self.execute(ctx, std::slice::from_ref(&msg), mode, true)
                    .map(WrapperReply::Executed)
            }
            WrapperCall::Claim(claim) => self.claim(ctx, claim).map(WrapperReply::Released),
            WrapperCall::Submit { msg } => {
                if msg.cid != self.cid {
                    return Err(EnclaveError::WrongContract);
                }
                self.batch.push(msg);
                Ok(WrapperReply::Queued {
                    pending: self.batch.len(),
                })
            }
            WrapperCall::CommitBatch { log, mode } => {
                if self.batch.is_empty() {
                    return Err(EnclaveError::EmptyBatch);
                }
                self.load(ctx, log.as_ref())?;
                let batch = std::mem::take(&mut self.batch);
                self.execute(ctx, &batch, mode, false)
                    .map(WrapperReply::Executed)
            }
            WrapperCall::Rekey { log } => self.rekey(ctx, log.as_ref()),
        }
    }

    fn bundle(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        epoch: u64,
    ) -> Result<EpochKeyBundle, EnclaveError> {
        if let Some(b) = self.keys.get(&epoch) {
            return Ok(b.clone());
        }
        self.key_requests += 1;
        let mut nonce = Vec::with_capacity(24);
        nonce.extend_from_slice(&ctx.eid.to_be_bytes());
        nonce.extend_from_slice(&self.key_requests.to_be_bytes());
        nonce.extend_from_slice(&epoch.to_be_bytes());
        let req = KeyRequest {
            credential: self.credential.clone(),
            code: self.code.clone(),
            epoch,
            nonce: hash_bytes(&nonce),
        };
        let b = ctx.keys().fetch_bundle(&req)?;
        ctx.stats(|s| s.key_fetches += 1);
        self.keys.insert(epoch, b.clone());
        Ok(b)
    }

    fn create(&mut self, ctx: &mut EnclaveCtx<'_>) -> Result<WrapperReply, EnclaveError> {
        ctx.keys().ensure_contract(&self.cid)?;
        let epoch = ctx.keys().current_epoch();
        let b = self.bundle(ctx, epoch)?;
        let st0 = self.code.program().zero_state();
        let body = GenesisBody {
            code: self.code.clone(),
            cid: self.cid,
            st0: EpochCiphertext {
                epoch,
                ct: b.k_state.encrypt(&mut ctx.rng, &st0.to_canonical()),
            },
            pk_in: b.input.public(),
        };
        let sig = ctx.attest(&body.to_canonical());
        let item = LedgerItem::Genesis {
            body: body.clone(),
            sig,
        };
        self.cache = Some(Cached {
            replayed: Replayed {
                state: st0,
                head_hash: body.st0.head_hash(),
                head_item: hash_bytes(&item.to_canonical()),
                epoch,
                diffs: 0,
            },
            on_ledger: false,
        });
        Ok(WrapperReply::Genesis { body, sig })
    }

    /// Makes `cache` hold the state at the head of `log`, or keeps the cache
    /// when no log is given.
    fn load(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        log: Option<&WalView>,
    ) -> Result<(), EnclaveError> {
        let Some(log) = log else {
            return match self.cache {
                Some(_) => {
                    ctx.stats(|s| s.cache_hits += 1);
                    Ok(())
                }
                None => {
                    ctx.stats(|s| s.cache_misses += 1);
                    Err(EnclaveError::CacheMiss)
                }
            };
        };
        if log.cid != self.cid {
            return Err(EnclaveError::WrongContract);
        }
        let last = log.items.last().ok_or(EnclaveError::LogEmpty)?;
        let last_hash = hash_bytes(last);
        if let Some(c) = &self.cache {
            if c.replayed.head_item == last_hash && c.on_ledger {
                ctx.stats(|s| s.cache_hits += 1);
                return Ok(());
            }
        }
        // Each item names its predecessor's state hash, so checking the head's
        // membership pins down the whole log.
        if !ctx.ledger().contains(&self.cid, last) {
            return Err(EnclaveError::LogNotOnLedger);
        }
        let cid = self.cid;
        let result = replay_log(&cid, &log.items, |epoch| {
            self.bundle(ctx, epoch).map(|b| b.k_state)
        });
        let replayed = result?;
        let diffs = replayed.diffs as u64;
        ctx.stats(|s| {
            s.log_replays += 1;
            s.diffs_replayed += diffs;
        });
        self.cache = Some(Cached {
            replayed,
            on_ledger: true,
        });
        Ok(())
    }

    fn open_input(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        msg: &RequestMsg,
    ) -> Result<SignedInput, EnclaveError> {
        if msg.cid != self.cid {
            return Err(EnclaveError::WrongContract);
        }
        let b = self.bundle(ctx, msg.epoch)?;
        let plain = b
            .input
            .decrypt(&msg.inp_ct)
            .map_err(|_| EnclaveError::UndecryptableInput)?;
        let si = SignedInput::from_canonical(&plain)
            .map_err(|e| EnclaveError::MalformedInput(e.to_string()))?;
        if si.cid != self.cid {
            return Err(EnclaveError::WrongContract);
        }
        if !si.verify() {
            return Err(EnclaveError::BadClientSignature);
        }
        if si.input.epk != msg.epk {
            return Err(EnclaveError::RecipientMismatch);
        }
        Ok(si)
    }

    /// Runs `msgs` in order on the cached state. With `strict`, an invalid
    /// input aborts; otherwise it is skipped and recorded.
    fn execute(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        msgs: &[RequestMsg],
        mode: CommitMode,
        strict: bool,
    ) -> Result<Executed, EnclaveError> {
        let program = self.code.program();
        let start = self
            .cache
            .as_ref()
            .ok_or(EnclaveError::CacheMiss)?
            .replayed
            .clone();
        let mut state = start.state.clone();
        let mut done = Vec::with_capacity(msgs.len());
        let mut skipped = Vec::new();
        for msg in msgs {
            match self.open_input(ctx, msg) {
                Ok(si) => {
                    let output = program.execute(&mut state, &si.input.op, &si.spk);
                    done.push((msg.h_inp(), si, output));
                }
                Err(e) if strict => return Err(e),
                Err(e) => skipped.push(Skipped {
                    h_inp: msg.h_inp(),
                    reason: e.to_string(),
                }),
            }
        }
        let mut out = Executed {
            skipped,
            ..Executed::default()
        };
        if done.is_empty() {
            return Ok(out);
        }
        if state == start.state && self.head_on_ledger(ctx) {
            for (h_inp, si, output) in done {
                out.releases.push(self.release(
                    ctx,
                    h_inp,
                    start.head_item,
                    true,
                    &si.input.epk,
                    &output,
                ));
            }
            return Ok(out);
        }

        let b = self.bundle(ctx, start.epoch)?;
        let as_diff = mode.wal && (start.diffs as u64 + 1) < mode.checkpoint_interval.max(1);
        let plain = if as_diff {
            pad_to_class(
                diff(&state, &start.state).to_canonical(),
                program.diff_unit(),
            )
        } else {
            state.to_canonical()
        };
        let payload = StatePayload {
            is_diff: as_diff,
            state: EpochCiphertext {
                epoch: start.epoch,
                ct: b.k_state.encrypt(&mut ctx.rng, &plain),
            },
        };
        let mut h_inp = Vec::with_capacity(done.len());
        let mut h_outp = Vec::with_capacity(done.len());
        let mut spk = Vec::with_capacity(done.len());
        for (h, si, output) in done {
            let sealed = SealedOutput {
                epk: si.input.epk,
                output,
            };
            let outp_ct = b.k_out.encrypt(&mut ctx.rng, &sealed.to_canonical());
            h_inp.push(h);
            h_outp.push(hash_bytes(&outp_ct));
            spk.push(si.spk);
            out.outputs.push(outp_ct);
        }
        let deliver = AtomDeliver {
            cid: self.cid,
            h_inp,
            h_prev: start.head_hash,
            payload,
            h_outp,
            spk,
        };
        let sig = ctx.attest(&deliver.to_canonical());
        let transition = StateTransition { deliver, sig };
        let item_hash = hash_bytes(&LedgerItem::Transition(transition.clone()).to_canonical());
        // Optimistic: later requests build on this state; a rejected write makes
        // them stale, and the ledger rejects those too.
        self.cache = Some(Cached {
            replayed: Replayed {
                state,
                head_hash: transition.deliver.payload.state.head_hash(),
                head_item: item_hash,
                epoch: start.epoch,
                diffs: if as_diff { start.diffs + 1 } else { 0 },
            },
            on_ledger: false,
        });
        out.transition = Some(transition);
        Ok(out)
    }

    fn head_on_ledger(&mut self, ctx: &mut EnclaveCtx<'_>) -> bool {
        let Some(c) = self.cache.as_mut() else {
            return false;
        };
        if !c.on_ledger {
            c.on_ledger = ctx.ledger().contains_hash(&self.cid, &c.replayed.head_item);
        }
        c.on_ledger
    }

    fn release(
        &self,
        ctx: &mut EnclaveCtx<'_>,
        h_inp: Digest,
        anchor: Digest,
        read_only: bool,
        epk: &crate::crypto::EncPublicKey,
        output: &[u8],
    ) -> Release {
        let body = ReleaseBody {
            cid: self.cid,
            h_inp,
            anchor,
            read_only,
            out_ct: epk.encrypt(&mut ctx.rng, output),
        };
        let sig = ctx.attest(&body.to_canonical());
        ctx.record_release(ReleaseEvent {
            eid: ctx.eid,
            cid: self.cid,
            h_inp,
            anchor,
            read_only,
        });
        Release { body, sig }
    }

    fn claim(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        claim: ClaimMsg,
    ) -> Result<Release, EnclaveError> {
        let d = &claim.transition.deliver;
        if d.cid != self.cid {
            return Err(EnclaveError::WrongContract);
        }
        let h = hash_bytes(&claim.outp_ct);
        let pos = d
            .h_outp
            .iter()
            .position(|x| *x == h)
            .ok_or(EnclaveError::OutputHashMismatch)?;
        let item = LedgerItem::Transition(claim.transition.clone()).to_canonical();
        if !ctx.ledger().contains(&self.cid, &item) {
            return Err(EnclaveError::NotOnLedger);
        }
        let b = self.bundle(ctx, d.payload.state.epoch)?;
        let plain = b
            .k_out
            .decrypt(&claim.outp_ct)
            .map_err(|_| EnclaveError::OutputHashMismatch)?;
        let sealed = SealedOutput::from_canonical(&plain)
            .map_err(|e| EnclaveError::MalformedInput(e.to_string()))?;
        if sealed.epk != claim.epk {
            return Err(EnclaveError::RecipientMismatch);
        }
        let item_hash = hash_bytes(&item);
        if let Some(c) = self.cache.as_mut() {
            if c.replayed.head_item == item_hash {
                c.on_ledger = true;
            }
        }
        Ok(self.release(
            ctx,
            d.h_inp[pos],
            item_hash,
            false,
            &sealed.epk,
            &sealed.output,
        ))
    }

    fn rekey(
        &mut self,
        ctx: &mut EnclaveCtx<'_>,
        log: Option<&WalView>,
    ) -> Result<WrapperReply, EnclaveError> {
        self.load(ctx, log)?;
        let epoch = ctx.keys().current_epoch();
        let start = self
            .cache
            .as_ref()
            .ok_or(EnclaveError::CacheMiss)?
            .replayed
            .clone();
        if epoch <= start.epoch {
            return Err(EnclaveError::NothingToRekey);
        }
        let b = self.bundle(ctx, epoch)?;
        let body = RekeyBody {
            cid: self.cid,
            h_prev: start.head_hash,
            state: EpochCiphertext {
                epoch,
                ct: b.k_state.encrypt(&mut ctx.rng, &start.state.to_canonical()),
            },
            pk_in: b.input.public(),
        };
        let sig = ctx.attest(&body.to_canonical());
        let item = LedgerItem::Rekey {
            body: body.clone(),
            sig,
        };
        self.cache = Some(Cached {
            replayed: Replayed {
                state: start.state,
                head_hash: body.state.head_hash(),
                head_item: hash_bytes(&item.to_canonical()),
                epoch,
                diffs: 0,
            },
            on_ledger: false,
        });
        // Keys of earlier epochs are no longer needed for new work.
        self.keys.retain(|&e, _| e >= epoch.saturating_sub(1));
        Ok(WrapperReply::Rekey { body, sig })
    }
}
