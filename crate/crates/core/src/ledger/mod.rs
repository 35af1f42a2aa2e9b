//! Append-only ledger parameterized by a successor predicate.
//!
//! Every write is checked and appended under one lock, which is the ledger's
//! single serialization point. Two backends share this core: a trusted-quorum
//! log, and a proof-of-work simulation that also seals each accepted item into a
//! [`PowChain`](crate::pop::PowChain) block.

pub mod audit;
pub mod item;
pub mod succ;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::canonical_record;
use crate::codec::{Decode, Encode};
use crate::crypto::{hash_bytes, Digest, VerifyKey};
use crate::pop::{PowChain, SimClock};

pub use item::{
    AtomDeliver, EpochCiphertext, GenesisBody, KmcRecord, LedgerItem, RekeyBody, StatePayload,
    StateTransition,
};
pub use succ::{succ, ChainSummary, EntrySummary, KmcSummary, Reject, SuccParams};

/// Id of the entry that replicates key-manager state.
pub fn kmc_ledger_id() -> Digest {
    hash_bytes(b"ledger-entry/key-manager-committee")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    TrustedQuorum,
    PowSim,
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub backend: Backend,
    pub attestation_root: VerifyKey,
    pub kappa: u64,
    /// Leading zero bits required of each simulated block (pow-sim only).
    pub pow_difficulty: u32,
    /// Expected block interval in simulated seconds (pow-sim only).
    pub block_interval: f64,
    pub seed: u64,
}

impl LedgerConfig {
    pub fn trusted(attestation_root: VerifyKey, kappa: u64) -> Self {
        LedgerConfig {
            backend: Backend::TrustedQuorum,
            attestation_root,
            kappa,
            pow_difficulty: 6,
            block_interval: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredItem {
    pub payload: Arc<Vec<u8>>,
    pub writer: String,
    /// Position in the ledger-wide acceptance order.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub id: Digest,
    pub index: usize,
    pub seq: u64,
    pub item_hash: Digest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EntryMetrics {
    pub accepted: u64,
    pub rejected: u64,
    pub bytes: u64,
    pub reads: u64,
    pub membership_queries: u64,
}

struct Entry {
    items: Vec<StoredItem>,
    hashes: HashMap<Digest, usize>,
    inputs: HashMap<Digest, Vec<usize>>,
    summary: EntrySummary,
}

#[derive(Default)]
struct State {
    entries: HashMap<Digest, Entry>,
    metrics: BTreeMap<Digest, EntryMetrics>,
    next_seq: u64,
}

pub struct Ledger {
    params: SuccParams,
    config: LedgerConfig,
    state: RwLock<State>,
    pow: Option<parking_lot::Mutex<(PowChain, SimClock, ChaCha20Rng)>>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("backend", &self.config.backend)
            .finish_non_exhaustive()
    }
}

/// Items from the latest full-state checkpoint through the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalView {
    pub cid: Digest,
    pub items: Vec<Vec<u8>>,
}

impl Encode for WalView {
    const TAG: u8 = 0x38;
    fn encode_fields(&self, w: &mut crate::codec::Writer) {
        w.bytes(self.cid.as_bytes()).byte_list(&self.items);
    }
}

impl Decode for WalView {
    const TAG: u8 = 0x38;
    fn decode_fields(r: &mut crate::codec::Reader<'_>) -> Result<Self, crate::codec::CodecError> {
        Ok(WalView {
            cid: Digest(r.fixed::<32>("cid")?),
            items: r.byte_list()?,
        })
    }
}
impl crate::codec::Nested for WalView {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DumpRecord {
    id: Digest,
    index: u64,
    payload: Vec<u8>,
}

canonical_record!(DumpRecord, 0x39, { id, index, payload });

fn parse_dump_records(dump: &str) -> Result<Vec<(usize, DumpRecord)>, RestoreError> {
    let mut out = Vec::new();
    for (n, line) in dump.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse = |reason: String| RestoreError::Parse {
            line: line_no,
            reason,
        };
        let bytes = hex::decode(line).map_err(|e| parse(e.to_string()))?;
        let rec = DumpRecord::from_canonical(&bytes).map_err(|e| parse(e.to_string()))?;
        out.push((line_no, rec));
    }
    Ok(out)
}

/// Parses a dump into `(id, index, payload)` rows without validating them.
pub fn parse_dump(dump: &str) -> Result<Vec<(Digest, u64, Vec<u8>)>, RestoreError> {
    Ok(parse_dump_records(dump)?
        .into_iter()
        .map(|(_, r)| (r.id, r.index, r.payload))
        .collect())
}

#[derive(Debug, Error)]
pub enum RestoreError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: record index {got} does not follow entry length {expected}")]
    Gap {
        line: usize,
        expected: usize,
        got: u64,
    },
    #[error("line {line}: replayed write rejected: {reject}")]
    Rejected { line: usize, reject: Reject },
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Self {
        let params = SuccParams {
            attestation_root: config.attestation_root,
            kmc_id: kmc_ledger_id(),
            kappa: config.kappa,
        };
        let pow = (config.backend == Backend::PowSim).then(|| {
            parking_lot::Mutex::new((
                PowChain::genesis(config.pow_difficulty),
                SimClock::default(),
                ChaCha20Rng::seed_from_u64(config.seed ^ 0x706f_772d_7369_6d00),
            ))
        });
        Ledger {
            params,
            config,
            state: RwLock::new(State::default()),
            pow,
        }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn attestation_root(&self) -> VerifyKey {
        self.params.attestation_root
    }

    pub fn kmc_id(&self) -> Digest {
        self.params.kmc_id
    }

    /// Appends `payload` to entry `id` if `succ` accepts it.
    pub fn write(&self, id: &Digest, payload: &[u8], writer: &str) -> Result<Receipt, Reject> {
        let mut st = self.state.write();
        let index = st.entries.get(id).map_or(0, |e| e.items.len());
        let verdict = succ(
            &self.params,
            id,
            st.entries.get(id).map(|e| &e.summary),
            payload,
            index,
        );
        let summary = match verdict {
            Ok(s) => s,
            Err(r) => {
                st.metrics.entry(*id).or_default().rejected += 1;
                return Err(r);
            }
        };
        let seq = st.next_seq;
        st.next_seq += 1;
        let item_hash = hash_bytes(payload);
        let inputs = match LedgerItem::from_canonical(payload) {
            Ok(LedgerItem::Transition(t)) => t.deliver.h_inp,
            _ => Vec::new(),
        };
        let stored = StoredItem {
            payload: Arc::new(payload.to_vec()),
            writer: writer.to_string(),
            seq,
        };
        match st.entries.get_mut(id) {
            Some(e) => {
                e.items.push(stored);
                e.hashes.insert(item_hash, index);
                for h in inputs {
                    e.inputs.entry(h).or_default().push(index);
                }
                e.summary = summary;
            }
            None => {
                st.entries.insert(
                    *id,
                    Entry {
                        items: vec![stored],
                        hashes: HashMap::from([(item_hash, index)]),
                        inputs: HashMap::new(),
                        summary,
                    },
                );
            }
        }
        let m = st.metrics.entry(*id).or_default();
        m.accepted += 1;
        m.bytes += payload.len() as u64;
        drop(st);
        if let Some(pow) = &self.pow {
            let mut g = pow.lock();
            let (chain, clock, rng) = &mut *g;
            clock.advance(crate::pop::sample_exponential(
                rng,
                self.config.block_interval,
            ));
            chain.seal(vec![item_hash], clock.now());
        }
        Ok(Receipt {
            id: *id,
            index,
            seq,
            item_hash,
        })
    }

    pub fn write_item(
        &self,
        id: &Digest,
        item: &LedgerItem,
        writer: &str,
    ) -> Result<Receipt, Reject> {
        self.write(id, &item.to_canonical(), writer)
    }

    /// Snapshot of every accepted item of `id`, or `None` if it has none.
    pub fn read(&self, id: &Digest) -> Option<Vec<StoredItem>> {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().reads += 1;
        st.entries.get(id).map(|e| e.items.clone())
    }

    pub fn read_items(&self, id: &Digest) -> Option<Vec<LedgerItem>> {
        self.read(id).map(|items| {
            items
                .iter()
                .map(|s| LedgerItem::from_canonical(&s.payload).expect("accepted items decode"))
                .collect()
        })
    }

    pub fn contains(&self, id: &Digest, payload: &[u8]) -> bool {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().membership_queries += 1;
        let h = hash_bytes(payload);
        st.entries.get(id).is_some_and(|e| {
            e.hashes
                .get(&h)
                .is_some_and(|&i| e.items[i].payload.as_slice() == payload)
        })
    }

    /// Membership by item digest.
    pub fn contains_hash(&self, id: &Digest, item_hash: &Digest) -> bool {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().membership_queries += 1;
        st.entries
            .get(id)
            .is_some_and(|e| e.hashes.contains_key(item_hash))
    }

    /// Accepted transitions of `id` whose batch includes input digest `h_inp`.
    pub fn find_input(&self, id: &Digest, h_inp: &Digest) -> Vec<(usize, StateTransition)> {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().membership_queries += 1;
        let Some(e) = st.entries.get(id) else {
            return Vec::new();
        };
        e.inputs
            .get(h_inp)
            .into_iter()
            .flatten()
            .filter_map(|&i| match LedgerItem::from_canonical(&e.items[i].payload) {
                Ok(LedgerItem::Transition(t)) => Some((i, t)),
                _ => None,
            })
            .collect()
    }

    /// The genesis record of a contract entry.
    pub fn genesis(&self, id: &Digest) -> Option<GenesisBody> {
        let st = self.state.read();
        let first = st.entries.get(id)?.items.first()?;
        match LedgerItem::from_canonical(&first.payload) {
            Ok(LedgerItem::Genesis { body, .. }) => Some(body),
            _ => None,
        }
    }

    /// Items from the latest checkpoint at or before `index` through `index`,
    /// i.e. the log a replaying enclave would have been given at that point.
    pub fn wal_view_at(&self, id: &Digest, index: usize) -> Option<WalView> {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().reads += 1;
        let e = st.entries.get(id)?;
        if index >= e.items.len() {
            return None;
        }
        let decoded = |i: usize| {
            LedgerItem::from_canonical(&e.items[i].payload).expect("accepted items decode")
        };
        let start = (0..=index).rev().find(|&i| decoded(i).is_checkpoint())?;
        Some(WalView {
            cid: *id,
            items: e.items[start..=index]
                .iter()
                .map(|i| i.payload.as_ref().clone())
                .collect(),
        })
    }

    pub fn contains_item(&self, id: &Digest, item: &LedgerItem) -> bool {
        self.contains(id, &item.to_canonical())
    }

    pub fn len(&self, id: &Digest) -> usize {
        self.state
            .read()
            .entries
            .get(id)
            .map_or(0, |e| e.items.len())
    }

    /// Current head summary of a contract entry.
    pub fn chain_summary(&self, id: &Digest) -> Option<ChainSummary> {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().reads += 1;
        match st.entries.get(id).map(|e| &e.summary) {
            Some(EntrySummary::Contract(s)) => Some(s.clone()),
            _ => None,
        }
    }

    pub fn kmc_summary(&self) -> KmcSummary {
        match self
            .state
            .read()
            .entries
            .get(&self.params.kmc_id)
            .map(|e| &e.summary)
        {
            Some(EntrySummary::KeyManager(s)) => s.clone(),
            _ => KmcSummary::default(),
        }
    }

    pub fn wal_view(&self, id: &Digest) -> Option<WalView> {
        let mut st = self.state.write();
        st.metrics.entry(*id).or_default().reads += 1;
        let e = st.entries.get(id)?;
        let EntrySummary::Contract(s) = &e.summary else {
            return None;
        };
        Some(WalView {
            cid: *id,
            items: e.items[s.checkpoint_index..]
                .iter()
                .map(|i| i.payload.as_ref().clone())
                .collect(),
        })
    }

    pub fn ids(&self) -> Vec<Digest> {
        let mut v: Vec<_> = self.state.read().entries.keys().copied().collect();
        v.sort();
        v
    }

    pub fn metrics(&self, id: &Digest) -> EntryMetrics {
        self.state
            .read()
            .metrics
            .get(id)
            .copied()
            .unwrap_or_default()
    }

    pub fn pow_chain(&self) -> Option<PowChain> {
        self.pow.as_ref().map(|p| p.lock().0.clone())
    }

    /// One hex line per accepted item, in acceptance order.
    pub fn dump(&self) -> String {
        let st = self.state.read();
        let mut rows: Vec<(u64, DumpRecord)> = Vec::new();
        for (id, e) in &st.entries {
            for (i, item) in e.items.iter().enumerate() {
                rows.push((
                    item.seq,
                    DumpRecord {
                        id: *id,
                        index: i as u64,
                        payload: item.payload.as_ref().clone(),
                    },
                ));
            }
        }
        rows.sort_by_key(|r| r.0);
        let mut out = String::new();
        for (_, r) in rows {
            out.push_str(&hex::encode(r.to_canonical()));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a ledger by replaying a dump through `succ`.
    pub fn restore(config: LedgerConfig, dump: &str) -> Result<Ledger, RestoreError> {
        let ledger = Ledger::new(config);
        for (line_no, rec) in parse_dump_records(dump)? {
            let expected = ledger.len(&rec.id);
            if rec.index != expected as u64 {
                return Err(RestoreError::Gap {
                    line: line_no,
                    expected,
                    got: rec.index,
                });
            }
            ledger
                .write(&rec.id, &rec.payload, "restore")
                .map_err(|reject| RestoreError::Rejected {
                    line: line_no,
                    reject,
                })?;
        }
        Ok(ledger)
    }
}
