//! Simulated attested execution.
//!
//! The [`Platform`] plays the role of the TEE vendor and hardware: it installs
//! programs into fresh enclaves, runs them on `resume`, and signs the attested
//! half of each output with a single root key. It also records every signature
//! and every output release so audits can check that nothing verifies unless an
//! enclave produced it.

pub mod wrapper;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::attest::{attestation_message, EnclaveCredential, SignedCredential};
use crate::codec::Encode;
use crate::contracts::{wrapper_program_hash, ContractCode};
use crate::crypto::{hash_bytes, Digest, SigKeypair, Signature, VerifyKey};
use crate::keymgr::{KeyService, KmError};
use crate::ledger::Ledger;

pub use wrapper::{
    replay_log, CommitMode, ContractWrapper, Executed, Replayed, Skipped, WrapperCall, WrapperReply,
};

pub type Eid = u64;
pub type HostId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("host {0} has crashed")]
    HostCrashed(HostId),
    #[error("unknown enclave {0}")]
    UnknownEnclave(Eid),
    #[error("enclave terminated")]
    Terminated(Eid),
    #[error("enclave {0} output dropped by host")]
    Dropped(Eid),
    #[error("cache miss")]
    CacheMiss,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("request belongs to a different contract")]
    WrongContract,
    #[error("input does not decrypt under the contract input key")]
    UndecryptableInput,
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("client signature does not verify")]
    BadClientSignature,
    #[error("state log is empty")]
    LogEmpty,
    #[error("state log does not start at a checkpoint")]
    NotCheckpoint,
    #[error("state log item {index} does not extend item {}", index - 1)]
    LogBroken { index: usize },
    #[error("state log item {index} is corrupt: {reason}")]
    LogCorrupt { index: usize, reason: String },
    #[error("state log head is not on the ledger")]
    LogNotOnLedger,
    #[error("output ciphertext does not match any committed h_outp")]
    OutputHashMismatch,
    #[error("transition is not on the ledger")]
    NotOnLedger,
    #[error("claim names a different recipient than the request")]
    RecipientMismatch,
    #[error("state is already under the current epoch")]
    NothingToRekey,
    #[error("key manager: {0}")]
    Key(#[from] KmError),
}

impl EnclaveError {
    /// Failures caused by the host rather than by the inputs.
    pub fn is_availability(&self) -> bool {
        matches!(
            self,
            EnclaveError::HostCrashed(_)
                | EnclaveError::UnknownEnclave(_)
                | EnclaveError::Terminated(_)
                | EnclaveError::Dropped(_)
        )
    }
}

/// Output released to a client, as observed at the enclave boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseEvent {
    pub eid: Eid,
    pub cid: Digest,
    pub h_inp: Digest,
    pub anchor: Digest,
    pub read_only: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnclaveStats {
    pub resumes: u64,
    pub key_fetches: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub log_replays: u64,
    pub diffs_replayed: u64,
}

struct Slot {
    host: HostId,
    prog_hash: Digest,
    terminated: AtomicBool,
    drop_next: AtomicBool,
    calls: AtomicU64,
    wrapper: Mutex<ContractWrapper>,
}

/// Per-call capabilities handed to the running program.
pub struct EnclaveCtx<'a> {
    pub eid: Eid,
    pub rng: ChaCha20Rng,
    platform: &'a Platform,
    prog_hash: Digest,
}

impl EnclaveCtx<'_> {
    pub fn ledger(&self) -> &Ledger {
        &self.platform.ledger
    }

    pub fn keys(&self) -> &dyn KeyService {
        self.platform.keys.as_ref()
    }

    /// Signs `outp1` together with the running program's hash.
    pub fn attest(&self, outp1: &[u8]) -> Signature {
        self.platform.sign(&self.prog_hash, outp1)
    }

    pub fn record_release(&self, event: ReleaseEvent) {
        self.platform.releases.lock().push(event);
    }

    pub fn stats(&self, f: impl FnOnce(&mut EnclaveStats)) {
        f(&mut self.platform.stats.lock());
    }
}

pub struct Platform {
    root: SigKeypair,
    seed: u64,
    ledger: Arc<Ledger>,
    keys: Arc<dyn KeyService>,
    next_eid: AtomicU64,
    hosts: RwLock<BTreeMap<HostId, bool>>,
    slots: RwLock<BTreeMap<Eid, Arc<Slot>>>,
    signed: Mutex<HashSet<Digest>>,
    releases: Mutex<Vec<ReleaseEvent>>,
    stats: Mutex<EnclaveStats>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("root", &self.root.verify_key())
            .field("enclaves", &self.slots.read().len())
            .finish_non_exhaustive()
    }
}

impl Platform {
    pub fn new(
        root: SigKeypair,
        seed: u64,
        ledger: Arc<Ledger>,
        keys: Arc<dyn KeyService>,
    ) -> Self {
        Platform {
            root,
            seed,
            ledger,
            keys,
            next_eid: AtomicU64::new(1),
            hosts: RwLock::new(BTreeMap::new()),
            slots: RwLock::new(BTreeMap::new()),
            signed: Mutex::new(HashSet::new()),
            releases: Mutex::new(Vec::new()),
            stats: Mutex::new(EnclaveStats::default()),
        }
    }

    pub fn attestation_root(&self) -> VerifyKey {
        self.root.verify_key()
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn keys(&self) -> &Arc<dyn KeyService> {
        &self.keys
    }

    pub fn add_host(&self, host: HostId) {
        self.hosts.write().insert(host, false);
    }

    /// Loads the wrapper for `code` into a fresh enclave on `host`.
    pub fn install(&self, host: HostId, code: &ContractCode) -> Result<Eid, EnclaveError> {
        match self.hosts.read().get(&host) {
            None => return Err(EnclaveError::UnknownHost(host)),
            Some(true) => return Err(EnclaveError::HostCrashed(host)),
            Some(false) => {}
        }
        let eid = self.next_eid.fetch_add(1, Ordering::SeqCst);
        let prog_hash = wrapper_program_hash(code);
        let credential = EnclaveCredential {
            host,
            eid,
            prog_hash,
        };
        let sig = self.root.sign(&credential.to_canonical());
        let wrapper = ContractWrapper::new(code.clone(), SignedCredential { credential, sig });
        self.slots.write().insert(
            eid,
            Arc::new(Slot {
                host,
                prog_hash,
                terminated: AtomicBool::new(false),
                drop_next: AtomicBool::new(false),
                calls: AtomicU64::new(0),
                wrapper: Mutex::new(wrapper),
            }),
        );
        Ok(eid)
    }

    fn slot(&self, eid: Eid) -> Result<Arc<Slot>, EnclaveError> {
        self.slots
            .read()
            .get(&eid)
            .cloned()
            .ok_or(EnclaveError::UnknownEnclave(eid))
    }

    pub fn prog_hash(&self, eid: Eid) -> Result<Digest, EnclaveError> {
        Ok(self.slot(eid)?.prog_hash)
    }

    pub fn host_of(&self, eid: Eid) -> Result<HostId, EnclaveError> {
        Ok(self.slot(eid)?.host)
    }

    /// Runs the enclave's program on `call`. Calls to one enclave are serialized.
    pub fn resume(&self, eid: Eid, call: WrapperCall) -> Result<WrapperReply, EnclaveError> {
        let slot = self.slot(eid)?;
        if slot.terminated.load(Ordering::SeqCst) {
            return Err(EnclaveError::Terminated(eid));
        }
        if self.hosts.read().get(&slot.host).copied().unwrap_or(true) {
            return Err(EnclaveError::HostCrashed(slot.host));
        }
        let mut wrapper = slot.wrapper.lock();
        let n = slot.calls.fetch_add(1, Ordering::SeqCst);
        let mut seed_bytes = Vec::with_capacity(32);
        seed_bytes.extend_from_slice(b"enclave-rng");
        seed_bytes.extend_from_slice(&self.seed.to_be_bytes());
        seed_bytes.extend_from_slice(&eid.to_be_bytes());
        seed_bytes.extend_from_slice(&n.to_be_bytes());
        let mut ctx = EnclaveCtx {
            eid,
            rng: ChaCha20Rng::from_seed(hash_bytes(&seed_bytes).0),
            platform: self,
            prog_hash: slot.prog_hash,
        };
        self.stats.lock().resumes += 1;
        let out = wrapper.handle(&mut ctx, call);
        if slot.drop_next.swap(false, Ordering::SeqCst) {
            return Err(EnclaveError::Dropped(eid));
        }
        out
    }

    fn sign(&self, prog_hash: &Digest, outp1: &[u8]) -> Signature {
        let msg = attestation_message(prog_hash, outp1);
        self.signed.lock().insert(hash_bytes(&msg));
        self.root.sign(&msg)
    }

    /// Whether an enclave running `prog_hash` ever attested `outp1`.
    pub fn was_attested(&self, prog_hash: &Digest, outp1: &[u8]) -> bool {
        self.signed
            .lock()
            .contains(&hash_bytes(&attestation_message(prog_hash, outp1)))
    }

    pub fn attestation_count(&self) -> usize {
        self.signed.lock().len()
    }

    pub fn releases(&self) -> Vec<ReleaseEvent> {
        self.releases.lock().clone()
    }

    pub fn released_inputs(&self) -> BTreeSet<Digest> {
        self.releases.lock().iter().map(|r| r.h_inp).collect()
    }

    pub fn stats(&self) -> EnclaveStats {
        *self.stats.lock()
    }

    pub fn is_terminated(&self, eid: Eid) -> bool {
        self.slot(eid)
            .map_or(true, |s| s.terminated.load(Ordering::SeqCst))
    }

    /// Adversary hook: the enclave stops responding. Its eid is never reused.
    pub fn terminate(&self, eid: Eid) {
        if let Ok(s) = self.slot(eid) {
            s.terminated.store(true, Ordering::SeqCst);
        }
    }

    /// Adversary hook: the next result of `eid` is computed and then discarded.
    pub fn drop_next_output(&self, eid: Eid) {
        if let Ok(s) = self.slot(eid) {
            s.drop_next.store(true, Ordering::SeqCst);
        }
    }

    /// Adversary hook: erase cache, batch and cached keys of `eid`.
    pub fn reset_soft_state(&self, eid: Eid) {
        if let Ok(s) = self.slot(eid) {
            s.wrapper.lock().reset_soft_state();
        }
    }

    /// Host crash: every enclave on it is terminated.
    pub fn crash_host(&self, host: HostId) {
        self.hosts.write().insert(host, true);
        for s in self.slots.read().values().filter(|s| s.host == host) {
            s.terminated.store(true, Ordering::SeqCst);
        }
    }

    pub fn restart_host(&self, host: HostId) {
        self.hosts.write().insert(host, false);
    }

    pub fn host_crashed(&self, host: HostId) -> bool {
        self.hosts.read().get(&host).copied().unwrap_or(true)
    }
}
