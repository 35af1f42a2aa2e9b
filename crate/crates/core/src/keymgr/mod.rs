//! Threshold key management for contract keys.
//!
//! A committee of `N` members holds Shamir shares (degree `k = ⌈fN⌉`) of one
//! master scalar per contract. Per-epoch keys come from the distributed PRF
//! `H(cid ‖ t)^{k_c}`: each member returns its piece, the requesting enclave
//! combines `k + 1` of them and derives an [`EpochKeyBundle`]. Every derivation
//! is charged to the requesting host's per-epoch budget, which lives in a
//! dedicated ledger entry so all members see one count.

pub mod dkg;
pub mod dprf;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::attest::SignedCredential;
use crate::canonical_record;
use crate::contracts::{wrapper_program_hash, ContractCode};
use crate::crypto::shamir::ShamirError;
use crate::crypto::{hash_canonical, Digest, PrimeOrderGroup, Ristretto255};
use crate::ledger::{KmcRecord, Ledger, LedgerItem, Reject};

pub use dkg::{dkg_init, oracle_reconstruct, reshare, MasterShare};
pub use dprf::{combine_epoch_key, derive_bundle, eval_piece, prf_base, EpochKeyBundle};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KmError {
    #[error("committee of {n} cannot support threshold {k} (need N >= k + 1, k >= 1)")]
    CommitteeTooSmall { n: usize, k: usize },
    #[error("duplicate or zero member index")]
    BadMembers,
    #[error("host {0} is not enrolled")]
    NotEnrolled(u64),
    #[error("enclave credential does not verify")]
    BadCredential,
    #[error("requesting enclave does not run the wrapper for this contract")]
    ProgramMismatch,
    #[error("epoch {requested} outside served window ending at {current}")]
    EpochOutOfWindow { requested: u64, current: u64 },
    #[error("privacy budget exhausted for host {host} in epoch {epoch}")]
    BudgetExhausted { host: u64, epoch: u64 },
    #[error("member {0} is offline")]
    MemberOffline(u64),
    #[error("member {0} holds no share for this contract")]
    NoShare(u64),
    #[error("have {have} pieces, need {need}")]
    NotEnoughPieces { have: usize, need: usize },
    #[error("key-confirmation tag mismatch")]
    ConfirmMismatch,
    #[error("secret sharing: {0}")]
    Shamir(#[from] ShamirError),
    #[error("ledger rejected key-manager record: {0}")]
    Ledger(Reject),
}

/// Committee membership. Member indices are Shamir evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee {
    pub members: Vec<u64>,
    pub fraction: f64,
    pub generation: u64,
}

impl Committee {
    pub fn new(mut members: Vec<u64>, fraction: f64, generation: u64) -> Result<Self, KmError> {
        members.sort_unstable();
        let c = Committee {
            members,
            fraction,
            generation,
        };
        c.validate()?;
        Ok(c)
    }

    /// Polynomial degree `k = ⌈fN⌉`; `k + 1` members reconstruct.
    pub fn threshold(&self) -> usize {
        ((self.fraction * self.members.len() as f64) - 1e-9)
            .ceil()
            .max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), KmError> {
        let n = self.members.len();
        let k = self.threshold();
        if k == 0 || n < k + 1 {
            return Err(KmError::CommitteeTooSmall { n, k });
        }
        let distinct: BTreeSet<_> = self.members.iter().collect();
        if distinct.len() != n || self.members.contains(&0) {
            return Err(KmError::BadMembers);
        }
        Ok(())
    }
}

/// One derivation request from an enclave. Its hash names the budget charge,
/// so every member contacted for the same derivation charges it once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub credential: SignedCredential,
    pub code: ContractCode,
    pub epoch: u64,
    pub nonce: Digest,
}

canonical_record!(KeyRequest, 0x42, { credential, code, epoch, nonce });

impl KeyRequest {
    pub fn id(&self) -> Digest {
        hash_canonical(self)
    }

    pub fn cid(&self) -> Digest {
        self.code.cid()
    }
}

/// The key manager as seen by enclaves.
pub trait KeyService: Send + Sync {
    fn current_epoch(&self) -> u64;
    fn ensure_contract(&self, cid: &Digest) -> Result<(), KmError>;
    fn fetch_bundle(&self, req: &KeyRequest) -> Result<EpochKeyBundle, KmError>;
    /// Auditor access that bypasses budgets.
    #[doc(hidden)]
    fn oracle_bundle(&self, cid: &Digest, epoch: u64) -> Result<EpochKeyBundle, KmError>;
}

impl<G: PrimeOrderGroup> KeyService for KeyManager<G> {
    fn current_epoch(&self) -> u64 {
        KeyManager::current_epoch(self)
    }
    fn ensure_contract(&self, cid: &Digest) -> Result<(), KmError> {
        KeyManager::ensure_contract(self, cid)
    }
    fn fetch_bundle(&self, req: &KeyRequest) -> Result<EpochKeyBundle, KmError> {
        KeyManager::fetch_bundle(self, req)
    }
    fn oracle_bundle(&self, cid: &Digest, epoch: u64) -> Result<EpochKeyBundle, KmError> {
        KeyManager::oracle_bundle(self, cid, epoch)
    }
}

struct Member<G: PrimeOrderGroup> {
    index: u64,
    online: AtomicBool,
    shares: Mutex<HashMap<Digest, G::Scalar>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KmStats {
    pub pieces_served: u64,
    pub refusals: u64,
    pub bundles_derived: u64,
}

pub struct KeyManager<G: PrimeOrderGroup = Ristretto255> {
    ledger: Arc<Ledger>,
    committee: RwLock<Committee>,
    members: RwLock<Vec<Arc<Member<G>>>>,
    enrolled: RwLock<BTreeSet<u64>>,
    epoch: AtomicU64,
    delta: u64,
    rng: Mutex<ChaCha20Rng>,
    stats: Mutex<KmStats>,
}

impl<G: PrimeOrderGroup> std::fmt::Debug for KeyManager<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyManager")
            .field("group", &G::NAME)
            .field("committee", &*self.committee.read())
            .field("epoch", &self.current_epoch())
            .finish_non_exhaustive()
    }
}

impl<G: PrimeOrderGroup> KeyManager<G> {
    pub fn new(
        ledger: Arc<Ledger>,
        committee: Committee,
        delta: u64,
        seed: u64,
    ) -> Result<Self, KmError> {
        committee.validate()?;
        let members = committee
            .members
            .iter()
            .map(|&index| {
                Arc::new(Member {
                    index,
                    online: AtomicBool::new(true),
                    shares: Mutex::new(HashMap::new()),
                })
            })
            .collect();
        let km = KeyManager {
            ledger,
            committee: RwLock::new(committee),
            members: RwLock::new(members),
            enrolled: RwLock::new(BTreeSet::new()),
            epoch: AtomicU64::new(0),
            delta,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            stats: Mutex::new(KmStats::default()),
        };
        km.publish_committee()?;
        Ok(km)
    }

    fn publish_committee(&self) -> Result<(), KmError> {
        let c = self.committee.read().clone();
        let rec = KmcRecord::Committee {
            generation: c.generation,
            members: c.members.clone(),
            threshold: c.threshold() as u64,
        };
        self.ledger
            .write_item(
                &self.ledger.kmc_id(),
                &LedgerItem::KeyManager(rec),
                "key-manager",
            )
            .map(|_| ())
            .map_err(KmError::Ledger)
    }

    pub fn committee(&self) -> Committee {
        self.committee.read().clone()
    }

    pub fn threshold(&self) -> usize {
        self.committee.read().threshold()
    }

    pub fn enroll_host(&self, host: u64) {
        self.enrolled.write().insert(host);
    }

    pub fn current_epoch(&self) -> u64 {
        self.epoch.load(Ordering::SeqCst)
    }

    /// Advances the epoch. Budgets are per epoch, so every host starts fresh.
    pub fn advance_epoch(&self) -> u64 {
        self.epoch.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn stats(&self) -> KmStats {
        *self.stats.lock()
    }

    pub fn set_online(&self, index: u64, online: bool) {
        if let Some(m) = self.members.read().iter().find(|m| m.index == index) {
            m.online.store(online, Ordering::SeqCst);
        }
    }

    pub fn online_members(&self) -> Vec<u64> {
        self.members
            .read()
            .iter()
            .filter(|m| m.online.load(Ordering::SeqCst))
            .map(|m| m.index)
            .collect()
    }

    /// Runs key generation for `cid` if the committee holds no shares for it yet.
    pub fn ensure_contract(&self, cid: &Digest) -> Result<(), KmError> {
        let members = self.members.read();
        if members.iter().any(|m| m.shares.lock().contains_key(cid)) {
            return Ok(());
        }
        let committee = self.committee.read().clone();
        let shares = dkg_init::<G::Scalar, _>(&committee, cid, &mut *self.rng.lock())?;
        for s in shares {
            if let Some(m) = members.iter().find(|m| m.index == s.index) {
                m.shares.lock().insert(*cid, s.value);
            }
        }
        Ok(())
    }

    fn authorize(&self, req: &KeyRequest) -> Result<(), KmError> {
        let root = self.ledger.attestation_root();
        if !req.credential.verify(&root) {
            return Err(KmError::BadCredential);
        }
        if req.credential.credential.prog_hash != wrapper_program_hash(&req.code) {
            return Err(KmError::ProgramMismatch);
        }
        let host = req.credential.credential.host;
        if !self.enrolled.read().contains(&host) {
            return Err(KmError::NotEnrolled(host));
        }
        let current = self.current_epoch();
        if req.epoch > current || req.epoch + self.delta < current {
            return Err(KmError::EpochOutOfWindow {
                requested: req.epoch,
                current,
            });
        }
        Ok(())
    }

    /// Charges `req` to its host's budget unless it was already charged.
    fn charge(&self, req: &KeyRequest) -> Result<(), KmError> {
        let host = req.credential.credential.host;
        let rec = KmcRecord::BudgetGrant {
            host,
            epoch: req.epoch,
            request: req.id(),
        };
        match self.ledger.write_item(
            &self.ledger.kmc_id(),
            &LedgerItem::KeyManager(rec),
            "key-manager",
        ) {
            Ok(_) | Err(Reject::DuplicateGrant) => Ok(()),
            Err(Reject::BudgetExhausted { host, epoch }) => {
                Err(KmError::BudgetExhausted { host, epoch })
            }
            Err(e) => Err(KmError::Ledger(e)),
        }
    }

    /// Member `index` evaluates its PRF piece for `req`.
    pub fn eval_share(&self, index: u64, req: &KeyRequest) -> Result<G::Element, KmError> {
        let member = self
            .members
            .read()
            .iter()
            .find(|m| m.index == index)
            .cloned()
            .ok_or(KmError::MemberOffline(index))?;
        if !member.online.load(Ordering::SeqCst) {
            return Err(KmError::MemberOffline(index));
        }
        // Members process requests one at a time.
        let shares = member.shares.lock();
        let result = self.authorize(req).and_then(|_| self.charge(req));
        if let Err(e) = result {
            self.stats.lock().refusals += 1;
            return Err(e);
        }
        let share = shares.get(&req.cid()).ok_or(KmError::NoShare(index))?;
        self.stats.lock().pieces_served += 1;
        Ok(eval_piece::<G>(&req.cid(), req.epoch, share))
    }

    /// Collects `k + 1` pieces from online members, combines them and derives
    /// the bundle, checking the key-confirmation tag recorded on the ledger.
    pub fn fetch_bundle(&self, req: &KeyRequest) -> Result<EpochKeyBundle, KmError> {
        let k = self.threshold();
        let mut pieces = Vec::with_capacity(k + 1);
        let mut last_err = None;
        for index in self.online_members() {
            match self.eval_share(index, req) {
                Ok(p) => pieces.push((index, p)),
                Err(
                    e @ (KmError::BudgetExhausted { .. }
                    | KmError::BadCredential
                    | KmError::ProgramMismatch
                    | KmError::NotEnrolled(_)
                    | KmError::EpochOutOfWindow { .. }),
                ) => return Err(e),
                Err(e) => last_err = Some(e),
            }
            if pieces.len() == k + 1 {
                break;
            }
        }
        if pieces.len() < k + 1 {
            return Err(last_err.unwrap_or(KmError::NotEnoughPieces {
                have: pieces.len(),
                need: k + 1,
            }));
        }
        let k_ct = combine_epoch_key::<G>(k, &pieces)?;
        let bundle = derive_bundle::<G>(&k_ct, &req.cid(), req.epoch);
        self.confirm(&bundle)?;
        self.stats.lock().bundles_derived += 1;
        Ok(bundle)
    }

    /// Records the first confirmation tag for `(cid, epoch)` and checks later ones against it.
    pub fn confirm(&self, bundle: &EpochKeyBundle) -> Result<(), KmError> {
        let rec = KmcRecord::ConfirmTag {
            cid: bundle.cid,
            epoch: bundle.epoch,
            tag: bundle.confirm,
        };
        match self.ledger.write_item(
            &self.ledger.kmc_id(),
            &LedgerItem::KeyManager(rec),
            "key-manager",
        ) {
            Ok(_) | Err(Reject::DuplicateGrant) => Ok(()),
            Err(Reject::ConfirmConflict) => Err(KmError::ConfirmMismatch),
            Err(e) => Err(KmError::Ledger(e)),
        }
    }

    /// Rotates to `new_committee`. The first `k + 1` online old members deal to
    /// the new members; old shares are then dropped.
    pub fn rotate(&self, new_committee: Committee) -> Result<(), KmError> {
        new_committee.validate()?;
        let old_k = self.threshold();
        let old_members = self.members.read().clone();
        let online: Vec<_> = old_members
            .iter()
            .filter(|m| m.online.load(Ordering::SeqCst))
            .cloned()
            .collect();
        let cids: BTreeSet<Digest> = old_members
            .iter()
            .flat_map(|m| m.shares.lock().keys().copied().collect::<Vec<_>>())
            .collect();
        let mut fresh: BTreeMap<u64, HashMap<Digest, G::Scalar>> = new_committee
            .members
            .iter()
            .map(|&i| (i, HashMap::new()))
            .collect();
        let mut rng = self.rng.lock();
        for cid in cids {
            let old: Vec<MasterShare<G::Scalar>> = online
                .iter()
                .filter_map(|m| {
                    m.shares.lock().get(&cid).map(|v| MasterShare {
                        cid,
                        index: m.index,
                        value: *v,
                    })
                })
                .collect();
            for s in reshare(old_k, &old, &new_committee, &mut *rng)? {
                fresh
                    .get_mut(&s.index)
                    .expect("new member")
                    .insert(cid, s.value);
            }
        }
        drop(rng);
        let members = fresh
            .into_iter()
            .map(|(index, shares)| {
                Arc::new(Member {
                    index,
                    online: AtomicBool::new(true),
                    shares: Mutex::new(shares),
                })
            })
            .collect();
        *self.members.write() = members;
        *self.committee.write() = new_committee;
        self.publish_committee()
    }

    /// Audit oracle: reconstructs the master key from member shares.
    #[doc(hidden)]
    pub fn oracle_master_key(&self, cid: &Digest) -> Result<G::Scalar, KmError> {
        let shares: Vec<MasterShare<G::Scalar>> = self
            .members
            .read()
            .iter()
            .filter_map(|m| {
                m.shares.lock().get(cid).map(|v| MasterShare {
                    cid: *cid,
                    index: m.index,
                    value: *v,
                })
            })
            .collect();
        oracle_reconstruct(self.threshold(), &shares)
    }

    /// Audit oracle: the bundle computed by direct exponentiation with the
    /// reconstructed master key, bypassing budgets.
    #[doc(hidden)]
    pub fn oracle_bundle(&self, cid: &Digest, epoch: u64) -> Result<EpochKeyBundle, KmError> {
        let k = self.oracle_master_key(cid)?;
        Ok(derive_bundle::<G>(
            &eval_piece::<G>(cid, epoch, &k),
            cid,
            epoch,
        ))
    }

    /// Shares held by every member, for tests that exercise interpolation directly.
    #[doc(hidden)]
    pub fn oracle_shares(&self, cid: &Digest) -> Vec<MasterShare<G::Scalar>> {
        self.members
            .read()
            .iter()
            .filter_map(|m| {
                m.shares.lock().get(cid).map(|v| MasterShare {
                    cid: *cid,
                    index: m.index,
                    value: *v,
                })
            })
            .collect()
    }

    /// Budget charges recorded for `host` in `epoch`.
    pub fn granted(&self, host: u64, epoch: u64) -> usize {
        self.ledger.kmc_summary().granted(host, epoch)
    }
}
