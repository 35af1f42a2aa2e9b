//! Compute nodes: untrusted hosts that drive enclaves, the ledger and clients.
//!
//! Every message a node sends or receives passes a named protocol step. The
//! shared [`FaultPlan`] can drop the message, crash the node, or terminate the
//! serving enclave at any step, and the [`Transcript`] hashes every message.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encode;
use crate::contracts::ContractCode;
use crate::crypto::{hash_bytes, Digest};
use crate::enclave::{
    CommitMode, Eid, EnclaveError, Executed, Platform, Skipped, WrapperCall, WrapperReply,
};
use crate::ledger::{LedgerItem, Receipt, Reject, WalView};
use crate::protocol::{ClaimMsg, Release, RequestMsg};

/// Protocol boundaries, named `<operation>.<message>`.
pub mod steps {
    pub const CREATE_CLIENT_SEND: &str = "create.client_send";
    pub const CREATE_ENCLAVE_CALL: &str = "create.enclave_call";
    pub const CREATE_ENCLAVE_REPLY: &str = "create.enclave_reply";
    pub const CREATE_LEDGER_WRITE: &str = "create.ledger_write";
    pub const CREATE_LEDGER_RECEIPT: &str = "create.ledger_receipt";
    pub const CREATE_NODE_REPLY: &str = "create.node_reply";

    pub const REQUEST_CLIENT_SEND: &str = "request.client_send";
    pub const REQUEST_LEDGER_READ: &str = "request.ledger_read";
    pub const REQUEST_ENCLAVE_CALL: &str = "request.enclave_call";
    pub const REQUEST_ENCLAVE_REPLY: &str = "request.enclave_reply";
    pub const REQUEST_NODE_REPLY: &str = "request.node_reply";

    pub const CLAIM_CLIENT_SEND: &str = "claim.client_send";
    pub const CLAIM_LEDGER_WRITE: &str = "claim.ledger_write";
    pub const CLAIM_LEDGER_RECEIPT: &str = "claim.ledger_receipt";
    pub const CLAIM_ENCLAVE_CALL: &str = "claim.enclave_call";
    pub const CLAIM_ENCLAVE_REPLY: &str = "claim.enclave_reply";
    pub const CLAIM_NODE_REPLY: &str = "claim.node_reply";

    pub const BATCH_CLIENT_SEND: &str = "batch.client_send";
    pub const BATCH_LEDGER_READ: &str = "batch.ledger_read";
    pub const BATCH_ENCLAVE_CALL: &str = "batch.enclave_call";
    pub const BATCH_ENCLAVE_REPLY: &str = "batch.enclave_reply";
    pub const BATCH_LEDGER_WRITE: &str = "batch.ledger_write";
    pub const BATCH_LEDGER_RECEIPT: &str = "batch.ledger_receipt";

    pub const REKEY_ENCLAVE_CALL: &str = "rekey.enclave_call";
    pub const REKEY_LEDGER_WRITE: &str = "rekey.ledger_write";

    /// The boundaries of one request and its claim, in protocol order.
    pub const DELIVERY: [&str; 11] = [
        REQUEST_CLIENT_SEND,
        REQUEST_LEDGER_READ,
        REQUEST_ENCLAVE_CALL,
        REQUEST_ENCLAVE_REPLY,
        REQUEST_NODE_REPLY,
        CLAIM_CLIENT_SEND,
        CLAIM_LEDGER_WRITE,
        CLAIM_LEDGER_RECEIPT,
        CLAIM_ENCLAVE_CALL,
        CLAIM_ENCLAVE_REPLY,
        CLAIM_NODE_REPLY,
    ];

    pub const ALL: [&str; 25] = [
        CREATE_CLIENT_SEND,
        CREATE_ENCLAVE_CALL,
        CREATE_ENCLAVE_REPLY,
        CREATE_LEDGER_WRITE,
        CREATE_LEDGER_RECEIPT,
        CREATE_NODE_REPLY,
        REQUEST_CLIENT_SEND,
        REQUEST_LEDGER_READ,
        REQUEST_ENCLAVE_CALL,
        REQUEST_ENCLAVE_REPLY,
        REQUEST_NODE_REPLY,
        CLAIM_CLIENT_SEND,
        CLAIM_LEDGER_WRITE,
        CLAIM_LEDGER_RECEIPT,
        CLAIM_ENCLAVE_CALL,
        CLAIM_ENCLAVE_REPLY,
        CLAIM_NODE_REPLY,
        BATCH_CLIENT_SEND,
        BATCH_LEDGER_READ,
        BATCH_ENCLAVE_CALL,
        BATCH_ENCLAVE_REPLY,
        BATCH_LEDGER_WRITE,
        BATCH_LEDGER_RECEIPT,
        REKEY_ENCLAVE_CALL,
        REKEY_LEDGER_WRITE,
    ];

    pub fn is_known(name: &str) -> bool {
        ALL.contains(&name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultAction {
    Drop,
    Crash,
    TerminateEnclave,
}

impl FaultAction {
    pub fn name(self) -> &'static str {
        match self {
            FaultAction::Drop => "drop",
            FaultAction::Crash => "crash",
            FaultAction::TerminateEnclave => "terminate-enclave",
        }
    }
}

/// Fires `action` the `occurrence`-th time `step` is reached (on `node`, or on
/// any node when `None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub node: Option<u64>,
    pub step: String,
    pub action: FaultAction,
    pub occurrence: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultEvent {
    pub node: u64,
    pub step: String,
    pub action: FaultAction,
}

#[derive(Debug, Default)]
pub struct FaultPlan {
    pending: Vec<Injection>,
    seen: BTreeMap<(u64, String), u64>,
    seen_any: BTreeMap<String, u64>,
    fired: Vec<FaultEvent>,
}

impl FaultPlan {
    pub fn new(injections: Vec<Injection>) -> Self {
        FaultPlan {
            pending: injections,
            ..FaultPlan::default()
        }
    }

    pub fn shared(injections: Vec<Injection>) -> Arc<Mutex<FaultPlan>> {
        Arc::new(Mutex::new(FaultPlan::new(injections)))
    }

    /// Arms `injection`; its occurrence counts from now.
    pub fn add(&mut self, mut injection: Injection) {
        let seen = match injection.node {
            Some(n) => self.seen.get(&(n, injection.step.clone())),
            None => self.seen_any.get(&injection.step),
        };
        injection.occurrence += seen.copied().unwrap_or(0);
        self.pending.push(injection);
    }

    fn check(&mut self, node: u64, step: &str) -> Option<FaultAction> {
        let n_node = {
            let c = self.seen.entry((node, step.to_string())).or_default();
            *c += 1;
            *c
        };
        let n_any = {
            let c = self.seen_any.entry(step.to_string()).or_default();
            *c += 1;
            *c
        };
        let pos = self.pending.iter().position(|i| {
            i.step == step
                && match i.node {
                    Some(n) => n == node && i.occurrence == n_node,
                    None => i.occurrence == n_any,
                }
        })?;
        let inj = self.pending.remove(pos);
        self.fired.push(FaultEvent {
            node,
            step: step.to_string(),
            action: inj.action,
        });
        Some(inj.action)
    }

    pub fn fired(&self) -> &[FaultEvent] {
        &self.fired
    }

    pub fn unfired(&self) -> &[Injection] {
        &self.pending
    }
}

/// Running digest over every protocol message, optionally keeping the lines.
#[derive(Debug, Default)]
pub struct Transcript {
    inner: Mutex<TranscriptInner>,
}

#[derive(Debug, Default)]
struct TranscriptInner {
    digest: [u8; 32],
    count: u64,
    lines: Option<Vec<String>>,
}

impl Transcript {
    pub fn new(keep_lines: bool) -> Self {
        Transcript {
            inner: Mutex::new(TranscriptInner {
                lines: keep_lines.then(Vec::new),
                ..TranscriptInner::default()
            }),
        }
    }

    pub fn record(&self, node: u64, step: &str, message: &[u8]) {
        let mut t = self.inner.lock();
        let mut buf = Vec::with_capacity(32 + step.len() + 16 + message.len());
        buf.extend_from_slice(&t.digest);
        buf.extend_from_slice(&node.to_be_bytes());
        buf.extend_from_slice(step.as_bytes());
        buf.extend_from_slice(&(message.len() as u64).to_be_bytes());
        buf.extend_from_slice(message);
        t.digest = hash_bytes(&buf).0;
        t.count += 1;
        let n = t.count;
        if let Some(lines) = t.lines.as_mut() {
            lines.push(format!("{n} {node} {step} {}", hex::encode(message)));
        }
    }

    pub fn digest(&self) -> Digest {
        Digest(self.inner.lock().digest)
    }

    pub fn len(&self) -> u64 {
        self.inner.lock().count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lines(&self) -> Vec<String> {
        self.inner.lock().lines.clone().unwrap_or_default()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeError {
    #[error("node {0} is down")]
    Down(u64),
    #[error("message lost at {0}")]
    Dropped(String),
    #[error("node crashed at {0}")]
    Crashed(String),
    #[error("no contract {0} on the ledger")]
    UnknownContract(Digest),
    #[error("ledger rejected the write: {0}")]
    Rejected(Reject),
    #[error("enclave: {0}")]
    Enclave(#[from] EnclaveError),
    #[error("enclave returned an unexpected reply")]
    UnexpectedReply,
    #[error("batch did not commit after {0} attempts")]
    BatchContention(u32),
}

impl NodeError {
    /// The client should try again from a fresh state read.
    pub fn is_stale(&self) -> bool {
        matches!(self, NodeError::Rejected(Reject::StaleState { .. }))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub ledger_writes: u64,
    pub ledger_rejects: u64,
    pub requests: u64,
    pub claims: u64,
    pub batches: u64,
    pub cache_miss_reloads: u64,
}

/// Outcome of one batch commit.
#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub receipt: Option<Receipt>,
    pub releases: Vec<Release>,
    pub skipped: Vec<Skipped>,
    pub attempts: u32,
}

const BATCH_ATTEMPTS: u32 = 8;

pub struct ComputeNode {
    id: u64,
    platform: Arc<Platform>,
    mode: CommitMode,
    modes: Mutex<BTreeMap<Digest, CommitMode>>,
    enclaves: Mutex<BTreeMap<Digest, Eid>>,
    pending: Mutex<BTreeMap<Digest, Vec<RequestMsg>>>,
    crashed: AtomicBool,
    faults: Arc<Mutex<FaultPlan>>,
    transcript: Arc<Transcript>,
    stats: Mutex<NodeStats>,
}

impl std::fmt::Debug for ComputeNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComputeNode")
            .field("id", &self.id)
            .field("crashed", &self.is_crashed())
            .finish_non_exhaustive()
    }
}

impl ComputeNode {
    pub fn new(
        id: u64,
        platform: Arc<Platform>,
        mode: CommitMode,
        faults: Arc<Mutex<FaultPlan>>,
        transcript: Arc<Transcript>,
    ) -> Self {
        platform.add_host(id);
        ComputeNode {
            id,
            platform,
            mode,
            modes: Mutex::new(BTreeMap::new()),
            enclaves: Mutex::new(BTreeMap::new()),
            pending: Mutex::new(BTreeMap::new()),
            crashed: AtomicBool::new(false),
            faults,
            transcript,
            stats: Mutex::new(NodeStats::default()),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.platform
    }

    pub fn stats(&self) -> NodeStats {
        *self.stats.lock()
    }

    pub fn set_mode(&self, cid: Digest, mode: CommitMode) {
        self.modes.lock().insert(cid, mode);
    }

    pub fn mode(&self, cid: &Digest) -> CommitMode {
        self.modes.lock().get(cid).copied().unwrap_or(self.mode)
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed.load(Ordering::SeqCst)
    }

    /// Destroys all node state and the host's enclaves.
    pub fn crash(&self) {
        self.crashed.store(true, Ordering::SeqCst);
        self.platform.crash_host(self.id);
        self.enclaves.lock().clear();
        self.pending.lock().clear();
    }

    pub fn restart(&self) {
        self.platform.restart_host(self.id);
        self.crashed.store(false, Ordering::SeqCst);
    }

    /// The enclave serving `cid` here, if one is live.
    pub fn enclave(&self, cid: &Digest) -> Option<Eid> {
        self.enclaves.lock().get(cid).copied()
    }

    pub fn pending(&self, cid: &Digest) -> usize {
        self.pending.lock().get(cid).map_or(0, Vec::len)
    }

    fn step(&self, step: &str, cid: Option<&Digest>, message: &[u8]) -> Result<(), NodeError> {
        if self.is_crashed() {
            return Err(NodeError::Down(self.id));
        }
        self.transcript.record(self.id, step, message);
        let action = self.faults.lock().check(self.id, step);
        if let Some(a) = action {
            self.transcript
                .record(self.id, &format!("fault.{}", a.name()), step.as_bytes());
        }
        match action {
            None => Ok(()),
            Some(FaultAction::Drop) => Err(NodeError::Dropped(step.to_string())),
            Some(FaultAction::Crash) => {
                self.crash();
                Err(NodeError::Crashed(step.to_string()))
            }
            Some(FaultAction::TerminateEnclave) => {
                match cid.and_then(|c| self.enclave(c).map(|e| (c, e))) {
                    Some((c, eid)) => {
                        self.platform.terminate(eid);
                        self.enclaves.lock().remove(c);
                        Err(NodeError::Enclave(EnclaveError::Terminated(eid)))
                    }
                    None => Ok(()),
                }
            }
        }
    }

    fn enclave_for(&self, cid: &Digest, code: Option<&ContractCode>) -> Result<Eid, NodeError> {
        if let Some(eid) = self.enclave(cid) {
            if !self.platform.is_terminated(eid) {
                return Ok(eid);
            }
        }
        let code = match code {
            Some(c) => c.clone(),
            None => {
                self.platform
                    .ledger()
                    .genesis(cid)
                    .ok_or(NodeError::UnknownContract(*cid))?
                    .code
            }
        };
        let eid = self.platform.install(self.id, &code)?;
        self.enclaves.lock().insert(*cid, eid);
        Ok(eid)
    }

    fn resume(&self, cid: &Digest, eid: Eid, call: WrapperCall) -> Result<WrapperReply, NodeError> {
        self.platform.resume(eid, call).map_err(|e| {
            if matches!(
                e,
                EnclaveError::Terminated(_) | EnclaveError::HostCrashed(_)
            ) {
                self.enclaves.lock().remove(cid);
            }
            NodeError::Enclave(e)
        })
    }

    fn write(&self, cid: &Digest, item: &LedgerItem) -> Result<Receipt, NodeError> {
        let r = self
            .platform
            .ledger()
            .write_item(cid, item, &format!("node-{}", self.id));
        let mut s = self.stats.lock();
        match r {
            Ok(r) => {
                s.ledger_writes += 1;
                Ok(r)
            }
            Err(e) => {
                s.ledger_rejects += 1;
                Err(NodeError::Rejected(e))
            }
        }
    }

    /// Installs a wrapper for `code`, runs its create entry point and writes
    /// the genesis record.
    pub fn create(&self, code: &ContractCode) -> Result<Digest, NodeError> {
        let cid = code.cid();
        self.step(steps::CREATE_CLIENT_SEND, None, &code.to_canonical())?;
        self.step(steps::CREATE_ENCLAVE_CALL, None, &code.to_canonical())?;
        let eid = self.platform.install(self.id, code)?;
        self.enclaves.lock().insert(cid, eid);
        let WrapperReply::Genesis { body, sig } = self.resume(&cid, eid, WrapperCall::Create)?
        else {
            return Err(NodeError::UnexpectedReply);
        };
        let item = LedgerItem::Genesis { body, sig };
        let bytes = item.to_canonical();
        self.step(steps::CREATE_ENCLAVE_REPLY, Some(&cid), &bytes)?;
        self.step(steps::CREATE_LEDGER_WRITE, Some(&cid), &bytes)?;
        let receipt = self.write(&cid, &item)?;
        self.step(
            steps::CREATE_LEDGER_RECEIPT,
            Some(&cid),
            receipt.item_hash.as_bytes(),
        )?;
        self.step(steps::CREATE_NODE_REPLY, Some(&cid), cid.as_bytes())?;
        Ok(cid)
    }

    /// Runs one request on the latest ledger state. Nothing is written.
    pub fn request(&self, msg: &RequestMsg) -> Result<Executed, NodeError> {
        let cid = msg.cid;
        self.stats.lock().requests += 1;
        self.step(steps::REQUEST_CLIENT_SEND, Some(&cid), &msg.to_canonical())?;
        let log = self.reconstruct_state(&cid)?;
        self.step(steps::REQUEST_LEDGER_READ, Some(&cid), &log.to_canonical())?;
        let eid = self.enclave_for(&cid, None)?;
        self.step(steps::REQUEST_ENCLAVE_CALL, Some(&cid), &msg.to_canonical())?;
        let reply = self.resume(
            &cid,
            eid,
            WrapperCall::Request {
                msg: msg.clone(),
                log: Some(log),
                mode: self.mode(&cid),
            },
        )?;
        let WrapperReply::Executed(exec) = reply else {
            return Err(NodeError::UnexpectedReply);
        };
        let wire = executed_bytes(&exec);
        self.step(steps::REQUEST_ENCLAVE_REPLY, Some(&cid), &wire)?;
        self.step(steps::REQUEST_NODE_REPLY, Some(&cid), &wire)?;
        Ok(exec)
    }

    /// Writes the transition (unless already on the ledger) and has the
    /// enclave release the output. A stale transition yields `Rejected`.
    pub fn claim(&self, claim: &ClaimMsg) -> Result<Release, NodeError> {
        let cid = claim.transition.deliver.cid;
        self.stats.lock().claims += 1;
        self.step(steps::CLAIM_CLIENT_SEND, Some(&cid), &claim.to_canonical())?;
        let item = LedgerItem::Transition(claim.transition.clone());
        if !self.platform.ledger().contains_item(&cid, &item) {
            self.step(steps::CLAIM_LEDGER_WRITE, Some(&cid), &item.to_canonical())?;
            let receipt = self.write(&cid, &item)?;
            self.step(
                steps::CLAIM_LEDGER_RECEIPT,
                Some(&cid),
                receipt.item_hash.as_bytes(),
            )?;
        }
        self.step(steps::CLAIM_ENCLAVE_CALL, Some(&cid), &claim.to_canonical())?;
        let eid = self.enclave_for(&cid, None)?;
        let WrapperReply::Released(release) =
            self.resume(&cid, eid, WrapperCall::Claim(claim.clone()))?
        else {
            return Err(NodeError::UnexpectedReply);
        };
        self.step(
            steps::CLAIM_ENCLAVE_REPLY,
            Some(&cid),
            &release.to_canonical(),
        )?;
        self.step(steps::CLAIM_NODE_REPLY, Some(&cid), &release.to_canonical())?;
        Ok(release)
    }

    /// Buffers a request for the next batch of its contract.
    pub fn submit(&self, msg: &RequestMsg) -> Result<usize, NodeError> {
        let cid = msg.cid;
        self.step(steps::BATCH_CLIENT_SEND, Some(&cid), &msg.to_canonical())?;
        let eid = self.enclave_for(&cid, None)?;
        self.resume(&cid, eid, WrapperCall::Submit { msg: msg.clone() })?;
        let mut p = self.pending.lock();
        let q = p.entry(cid).or_default();
        q.push(msg.clone());
        Ok(q.len())
    }

    /// Commits the buffered batch as one transition, then releases every
    /// output. On a stale head the node reloads the log and re-executes.
    pub fn commit_batch(&self, cid: &Digest) -> Result<BatchOutcome, NodeError> {
        let batch = self.pending.lock().get(cid).cloned().unwrap_or_default();
        if batch.is_empty() {
            return Ok(BatchOutcome::default());
        }
        self.stats.lock().batches += 1;
        let mode = self.mode(cid);
        let mut log: Option<WalView> = None;
        let mut resubmit = false;
        for attempt in 1..=BATCH_ATTEMPTS {
            let eid = self.enclave_for(cid, None)?;
            if resubmit {
                for msg in &batch {
                    self.resume(cid, eid, WrapperCall::Submit { msg: msg.clone() })?;
                }
            }
            resubmit = true;
            self.step(steps::BATCH_ENCLAVE_CALL, Some(cid), cid.as_bytes())?;
            let reply = self.resume(
                cid,
                eid,
                WrapperCall::CommitBatch {
                    log: log.take(),
                    mode,
                },
            );
            let exec = match reply {
                Ok(WrapperReply::Executed(e)) => e,
                Ok(_) => return Err(NodeError::UnexpectedReply),
                Err(NodeError::Enclave(EnclaveError::CacheMiss | EnclaveError::EmptyBatch)) => {
                    self.stats.lock().cache_miss_reloads += 1;
                    let view = self.reconstruct_state(cid)?;
                    self.step(steps::BATCH_LEDGER_READ, Some(cid), &view.to_canonical())?;
                    log = Some(view);
                    continue;
                }
                Err(e) => return Err(e),
            };
            self.step(
                steps::BATCH_ENCLAVE_REPLY,
                Some(cid),
                &executed_bytes(&exec),
            )?;
            let mut out = BatchOutcome {
                releases: exec.releases,
                skipped: exec.skipped,
                attempts: attempt,
                receipt: None,
            };
            if let Some(t) = exec.transition {
                let item = LedgerItem::Transition(t.clone());
                self.step(steps::BATCH_LEDGER_WRITE, Some(cid), &item.to_canonical())?;
                match self.write(cid, &item) {
                    Ok(r) => out.receipt = Some(r),
                    Err(e) if e.is_stale() => {
                        let view = self.reconstruct_state(cid)?;
                        self.step(steps::BATCH_LEDGER_READ, Some(cid), &view.to_canonical())?;
                        log = Some(view);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
                self.step(
                    steps::BATCH_LEDGER_RECEIPT,
                    Some(cid),
                    out.receipt.expect("written").item_hash.as_bytes(),
                )?;
                for (pos, outp_ct) in exec.outputs.into_iter().enumerate() {
                    let h_inp = t.deliver.h_inp[pos];
                    let epk = batch
                        .iter()
                        .find(|m| m.h_inp() == h_inp)
                        .map(|m| m.epk)
                        .ok_or(NodeError::UnexpectedReply)?;
                    let claim = ClaimMsg {
                        transition: t.clone(),
                        epk,
                        outp_ct,
                    };
                    match self.resume(cid, eid, WrapperCall::Claim(claim))? {
                        WrapperReply::Released(r) => out.releases.push(r),
                        _ => return Err(NodeError::UnexpectedReply),
                    }
                }
            }
            self.pending.lock().remove(cid);
            return Ok(out);
        }
        Err(NodeError::BatchContention(BATCH_ATTEMPTS))
    }

    /// Re-encrypts the contract state under the key manager's current epoch.
    pub fn rekey(&self, cid: &Digest) -> Result<Receipt, NodeError> {
        let log = self.reconstruct_state(cid)?;
        self.step(steps::REKEY_ENCLAVE_CALL, Some(cid), &log.to_canonical())?;
        let eid = self.enclave_for(cid, None)?;
        let WrapperReply::Rekey { body, sig } =
            self.resume(cid, eid, WrapperCall::Rekey { log: Some(log) })?
        else {
            return Err(NodeError::UnexpectedReply);
        };
        let item = LedgerItem::Rekey { body, sig };
        self.step(steps::REKEY_LEDGER_WRITE, Some(cid), &item.to_canonical())?;
        self.write(cid, &item)
    }

    /// The checkpoint and diffs a replaying enclave needs.
    pub fn reconstruct_state(&self, cid: &Digest) -> Result<WalView, NodeError> {
        if self.is_crashed() {
            return Err(NodeError::Down(self.id));
        }
        self.platform
            .ledger()
            .wal_view(cid)
            .ok_or(NodeError::UnknownContract(*cid))
    }
}

fn executed_bytes(e: &Executed) -> Vec<u8> {
    let mut w = crate::codec::Writer::new(0x68);
    w.option(e.transition.as_ref())
        .byte_list(&e.outputs)
        .list(&e.releases);
    w.finish()
}
