//! Independent re-verification of accepted contract chains.

use std::collections::BTreeMap;

use super::item::LedgerItem;
use super::Ledger;
use crate::attest::verify_attestation;
use crate::codec::{Decode, Encode};
use crate::contracts::wrapper_program_hash;
use crate::crypto::{Digest, VerifyKey};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainAudit {
    pub id: Digest,
    pub items: usize,
    pub transitions: usize,
    /// Distinct predecessors extended by more than one accepted item.
    pub forks: usize,
    /// Accepted items whose `h_prev` is not the hash of the preceding head.
    pub stale_accepted: usize,
    pub bad_attestations: usize,
    pub malformed: usize,
}

impl ChainAudit {
    pub fn ok(&self) -> bool {
        self.forks == 0
            && self.stale_accepted == 0
            && self.bad_attestations == 0
            && self.malformed == 0
    }
}

/// Walks `items` from genesis and re-checks linearity and attestations without
/// consulting any ledger-internal summary.
pub fn audit_chain(root: &VerifyKey, id: &Digest, items: &[Vec<u8>]) -> ChainAudit {
    let mut a = ChainAudit {
        id: *id,
        items: items.len(),
        ..Default::default()
    };
    let mut prog_hash = None;
    let mut head = None;
    let mut successors: BTreeMap<Digest, usize> = BTreeMap::new();
    for (i, bytes) in items.iter().enumerate() {
        let Ok(item) = LedgerItem::from_canonical(bytes) else {
            a.malformed += 1;
            continue;
        };
        match (&item, i) {
            (LedgerItem::Genesis { body, sig }, 0) => {
                let ph = wrapper_program_hash(&body.code);
                if body.cid != body.code.cid()
                    || body.cid != *id
                    || !verify_attestation(root, &ph, &body.to_canonical(), sig)
                {
                    a.bad_attestations += 1;
                }
                prog_hash = Some(ph);
            }
            (LedgerItem::Transition(t), i) if i > 0 => {
                a.transitions += 1;
                let ok = prog_hash.is_some_and(|ph| {
                    verify_attestation(root, &ph, &t.deliver.to_canonical(), &t.sig)
                });
                if !ok {
                    a.bad_attestations += 1;
                }
            }
            (LedgerItem::Rekey { body, sig }, i) if i > 0 => {
                let ok = prog_hash
                    .is_some_and(|ph| verify_attestation(root, &ph, &body.to_canonical(), sig));
                if !ok {
                    a.bad_attestations += 1;
                }
            }
            _ => {
                a.malformed += 1;
                continue;
            }
        }
        if let Some(prev) = item.h_prev() {
            *successors.entry(prev).or_default() += 1;
            if Some(prev) != head {
                a.stale_accepted += 1;
            }
        }
        head = item.head_state().map(|s| s.head_hash());
    }
    a.forks = successors.values().filter(|&&n| n > 1).count();
    a
}

/// Audits every contract entry of `ledger`.
pub fn audit_ledger(ledger: &Ledger) -> Vec<ChainAudit> {
    let root = ledger.attestation_root();
    ledger
        .ids()
        .into_iter()
        .filter(|id| *id != ledger.kmc_id())
        .map(|id| {
            let items: Vec<Vec<u8>> = ledger
                .read(&id)
                .unwrap_or_default()
                .into_iter()
                .map(|s| s.payload.as_ref().clone())
                .collect();
            audit_chain(&root, &id, &items)
        })
        .collect()
}

/// Audits contract chains reconstructed from a dump without replaying `succ`.
pub fn audit_dump(
    root: &VerifyKey,
    kmc_id: &Digest,
    records: &[(Digest, Vec<u8>)],
) -> Vec<ChainAudit> {
    let mut by_id: BTreeMap<Digest, Vec<Vec<u8>>> = BTreeMap::new();
    for (id, payload) in records {
        if id != kmc_id {
            by_id.entry(*id).or_default().push(payload.clone());
        }
    }
    by_id
        .iter()
        .map(|(id, items)| audit_chain(root, id, items))
        .collect()
}
