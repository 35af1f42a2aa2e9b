//! Post-run invariant audits.
//!
//! The [`Auditor`] holds dealer-oracle access to contract keys, so it can
//! decrypt and replay any chain independently of the enclaves.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::client::Accepted;
use crate::codec::Encode;
use crate::contracts::{token, wrapper_program_hash, ContractCode, ContractState};
use crate::crypto::{hash_bytes, Digest};
use crate::enclave::{replay_log, EnclaveError, Platform, Replayed};
use crate::keymgr::KeyService;
use crate::ledger::audit::audit_ledger;
use crate::ledger::{Ledger, LedgerItem};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditVerdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl AuditVerdict {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        AuditVerdict {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }
}

pub struct Auditor {
    ledger: Arc<Ledger>,
    keys: Arc<dyn KeyService>,
}

impl std::fmt::Debug for Auditor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Auditor").finish_non_exhaustive()
    }
}

impl Auditor {
    pub fn new(ledger: Arc<Ledger>, keys: Arc<dyn KeyService>) -> Self {
        Auditor { ledger, keys }
    }

    fn replay(&self, cid: &Digest, items: &[Vec<u8>]) -> Result<Replayed, EnclaveError> {
        replay_log(cid, items, |epoch| {
            self.keys
                .oracle_bundle(cid, epoch)
                .map(|b| b.k_state)
                .map_err(EnclaveError::Key)
        })
    }

    /// Replays the whole entry from genesis.
    pub fn final_state(&self, cid: &Digest) -> Result<ContractState, EnclaveError> {
        let items: Vec<Vec<u8>> = self
            .ledger
            .read(cid)
            .ok_or(EnclaveError::LogEmpty)?
            .iter()
            .map(|s| s.payload.as_ref().clone())
            .collect();
        Ok(self.replay(cid, &items)?.state)
    }

    /// Replays only the latest checkpoint and the diffs after it.
    pub fn wal_state(&self, cid: &Digest) -> Result<Replayed, EnclaveError> {
        let view = self.ledger.wal_view(cid).ok_or(EnclaveError::LogEmpty)?;
        self.replay(cid, &view.items)
    }

    /// Logical state after item `index`.
    pub fn state_at(&self, cid: &Digest, index: usize) -> Result<ContractState, EnclaveError> {
        let view = self
            .ledger
            .wal_view_at(cid, index)
            .ok_or(EnclaveError::LogEmpty)?;
        Ok(self.replay(cid, &view.items)?.state)
    }
}

/// What a run's clients did, for the audits that need client-side facts.
#[derive(Debug, Clone, Default)]
pub struct ClientRecord {
    pub accepted: Vec<Accepted>,
    /// Input digests of every attempt of each logical request `(cid, client, seq)`.
    pub sessions: Vec<((Digest, u64, u64), Vec<Digest>)>,
}

/// Runs every audit over a finished run.
pub fn audit_run(
    ledger: &Ledger,
    platform: &Platform,
    auditor: &Auditor,
    contracts: &[ContractCode],
    record: &ClientRecord,
) -> Vec<AuditVerdict> {
    let mut out = Vec::new();

    let chains = audit_ledger(ledger);
    let forks: usize = chains.iter().map(|c| c.forks).sum();
    let stale: usize = chains.iter().map(|c| c.stale_accepted).sum();
    let bad: usize = chains
        .iter()
        .map(|c| c.bad_attestations + c.malformed)
        .sum();
    out.push(AuditVerdict::new(
        "ledger-linearity",
        chains.iter().all(|c| c.ok()),
        format!(
            "chains={} forks={forks} stale_accepted={stale} bad_items={bad}",
            chains.len()
        ),
    ));

    out.push(attestation_soundness(ledger, platform, contracts, record));
    out.push(atomic_delivery(ledger, platform, record));
    out.push(at_most_once(ledger, record));

    let mut replay_failures = Vec::new();
    let mut conservation = Vec::new();
    for code in contracts {
        let cid = code.cid();
        if ledger.len(&cid) == 0 {
            continue;
        }
        let full = auditor.final_state(&cid);
        let wal = auditor.wal_state(&cid);
        match (&full, &wal) {
            (Ok(f), Ok(w)) if *f == w.state => {}
            (Err(e), _) | (_, Err(e)) => replay_failures.push(format!("{}: {e}", code.label())),
            _ => replay_failures.push(format!("{}: checkpoint replay diverges", code.label())),
        }
        if let (ContractCode::Token { .. }, Ok(state)) = (code, &full) {
            let supply = token::total_supply(state);
            let minted = token::minted(state).map_or(0, u128::from);
            if supply != minted {
                conservation.push(format!(
                    "{}: supply {supply} != minted {minted}",
                    code.label()
                ));
            }
        }
    }
    out.push(AuditVerdict::new(
        "state-replay",
        replay_failures.is_empty(),
        if replay_failures.is_empty() {
            format!("contracts={}", contracts.len())
        } else {
            replay_failures.join("; ")
        },
    ));
    out.push(AuditVerdict::new(
        "token-conservation",
        conservation.is_empty(),
        if conservation.is_empty() {
            "supply equals minted".to_string()
        } else {
            conservation.join("; ")
        },
    ));
    out
}

/// Every contract item on the ledger and every output a client accepted was
/// produced by an enclave.
fn attestation_soundness(
    ledger: &Ledger,
    platform: &Platform,
    contracts: &[ContractCode],
    record: &ClientRecord,
) -> AuditVerdict {
    let mut unsigned = 0usize;
    let mut checked = 0usize;
    for code in contracts {
        let cid = code.cid();
        let prog = wrapper_program_hash(code);
        for item in ledger.read_items(&cid).unwrap_or_default() {
            let body = match &item {
                LedgerItem::Genesis { body, .. } => body.to_canonical(),
                LedgerItem::Transition(t) => t.deliver.to_canonical(),
                LedgerItem::Rekey { body, .. } => body.to_canonical(),
                LedgerItem::KeyManager(_) => continue,
            };
            checked += 1;
            if !platform.was_attested(&prog, &body) {
                unsigned += 1;
            }
        }
    }
    let events: BTreeSet<(Digest, Digest, Digest, bool)> = platform
        .releases()
        .iter()
        .map(|r| (r.cid, r.h_inp, r.anchor, r.read_only))
        .collect();
    let orphan = record
        .accepted
        .iter()
        .filter(|a| !events.contains(&(a.cid, a.h_inp, a.anchor, a.read_only)))
        .count();
    AuditVerdict::new(
        "attestation-soundness",
        unsigned == 0 && orphan == 0,
        format!(
            "ledger_items={checked} unattested={unsigned} accepted_outputs={} without_enclave_release={orphan}",
            record.accepted.len()
        ),
    )
}

/// Every output that left an enclave is bound to a ledger item: the committed
/// transition that includes its input, or the on-ledger state a read-only
/// request was evaluated against.
fn atomic_delivery(ledger: &Ledger, platform: &Platform, record: &ClientRecord) -> AuditVerdict {
    let releases = platform.releases();
    let mut violations = 0usize;
    for r in &releases {
        let ok = if r.read_only {
            ledger.contains_hash(&r.cid, &r.anchor)
        } else {
            ledger.find_input(&r.cid, &r.h_inp).iter().any(|(_, t)| {
                hash_bytes(&LedgerItem::Transition(t.clone()).to_canonical()) == r.anchor
            })
        };
        if !ok {
            violations += 1;
        }
    }
    let unbound = record
        .accepted
        .iter()
        .filter(|a| !a.read_only && ledger.find_input(&a.cid, &a.h_inp).is_empty())
        .count();
    AuditVerdict::new(
        "atomic-delivery",
        violations == 0 && unbound == 0,
        format!(
            "releases={} unbound_releases={violations} accepted_without_transition={unbound}",
            releases.len()
        ),
    )
}

/// No logical request is applied by more than one transition.
fn at_most_once(ledger: &Ledger, record: &ClientRecord) -> AuditVerdict {
    let mut worst = 0usize;
    let mut dup = 0usize;
    for ((cid, _, _), h_inps) in &record.sessions {
        let mut items = BTreeMap::new();
        for h in h_inps {
            for (i, _) in ledger.find_input(cid, h) {
                items.insert(i, ());
            }
        }
        worst = worst.max(items.len());
        if items.len() > 1 {
            dup += 1;
        }
    }
    AuditVerdict::new(
        "at-most-once",
        dup == 0,
        format!(
            "sessions={} duplicated={dup} max_transitions={worst}",
            record.sessions.len()
        ),
    )
}
