//! Scenario driver and adversary.
//!
//! [`System`] wires one ledger, one key-manager committee, the enclave
//! platform and a set of compute nodes. [`run`] drives a [`Scenario`] through a
//! seeded discrete-event scheduler and audits the result; the remaining
//! modules are targeted experiments (fault enumeration, rewind attempts,
//! batching and storage measurements).

pub mod audit;
pub mod bench;
pub mod faults;
pub mod report;
pub mod rewind;
pub mod run;
pub mod scenario;

use std::sync::Arc;

use parking_lot::Mutex;

use crate::client::{Client, ClientIdentity};
use crate::crypto::{hash_bytes, Ristretto255, SigKeypair};
use crate::enclave::{CommitMode, Platform};
use crate::keymgr::{Committee, KeyManager, KeyService, KmError};
use crate::ledger::{Backend, Ledger, LedgerConfig};
use crate::node::{ComputeNode, FaultPlan, Injection, Transcript};

pub use audit::{audit_run, AuditVerdict, Auditor};
pub use report::RunReport;
pub use run::{run, RunOutcome};
pub use scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub seed: u64,
    pub nodes: usize,
    pub committee: usize,
    pub fraction: f64,
    pub kappa: u64,
    pub delta: u64,
    pub mode: CommitMode,
    pub backend: Backend,
    pub keep_transcript: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            seed: 0,
            nodes: 2,
            committee: 4,
            fraction: 0.34,
            kappa: 1 << 16,
            delta: 1,
            mode: CommitMode::default(),
            backend: Backend::TrustedQuorum,
            keep_transcript: false,
        }
    }
}

pub struct System {
    pub config: SystemConfig,
    pub ledger: Arc<Ledger>,
    pub km: Arc<KeyManager<Ristretto255>>,
    pub platform: Arc<Platform>,
    pub nodes: Vec<Arc<ComputeNode>>,
    pub faults: Arc<Mutex<FaultPlan>>,
    pub transcript: Arc<Transcript>,
}

impl std::fmt::Debug for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("System")
            .field("config", &self.config)
            .field("nodes", &self.nodes.len())
            .finish_non_exhaustive()
    }
}

fn seed_bytes(label: &str, seed: u64) -> [u8; 32] {
    let mut b = label.as_bytes().to_vec();
    b.extend_from_slice(&seed.to_be_bytes());
    hash_bytes(&b).0
}

impl System {
    pub fn new(config: SystemConfig) -> Result<Self, KmError> {
        let root = SigKeypair::from_seed(seed_bytes("attestation-root", config.seed));
        let mut lc = LedgerConfig::trusted(root.verify_key(), config.kappa);
        lc.backend = config.backend;
        lc.seed = config.seed;
        let ledger = Arc::new(Ledger::new(lc));
        let committee =
            Committee::new((1..=config.committee as u64).collect(), config.fraction, 0)?;
        let km = Arc::new(KeyManager::<Ristretto255>::new(
            ledger.clone(),
            committee,
            config.delta,
            config.seed ^ 0x6b6d,
        )?);
        let keys: Arc<dyn KeyService> = km.clone();
        let platform = Arc::new(Platform::new(root, config.seed, ledger.clone(), keys));
        let faults = FaultPlan::shared(Vec::new());
        let transcript = Arc::new(Transcript::new(config.keep_transcript));
        let mut sys = System {
            config,
            ledger,
            km,
            platform,
            nodes: Vec::new(),
            faults,
            transcript,
        };
        for _ in 0..sys.config.nodes {
            sys.add_node();
        }
        Ok(sys)
    }

    /// Adds a node (host ids are node indices) and enrolls it with the key manager.
    pub fn add_node(&mut self) -> Arc<ComputeNode> {
        let id = self.nodes.len() as u64;
        let node = Arc::new(ComputeNode::new(
            id,
            self.platform.clone(),
            self.config.mode,
            self.faults.clone(),
            self.transcript.clone(),
        ));
        self.km.enroll_host(id);
        self.nodes.push(node.clone());
        node
    }

    pub fn inject(&self, injection: Injection) {
        self.faults.lock().add(injection);
    }

    /// A client whose keys and randomness derive from `(seed, index)`.
    pub fn client(&self, index: u64) -> Client {
        let s = self.config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index;
        Client::new(
            ClientIdentity::from_seed(s),
            self.ledger.clone(),
            s ^ 0x5eed,
        )
    }

    pub fn auditor(&self) -> Auditor {
        Auditor::new(self.ledger.clone(), self.km.clone())
    }
}
