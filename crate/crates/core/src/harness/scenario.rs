//! Scenario files: topology, contracts, workload and adversary script.
//!
//! ```toml
//! seed = 7
//! nodes = 4
//! clients = 8
//!
//! [mode]
//! wal = true
//! batch = 10
//!
//! [[contracts]]
//! kind = "token"
//! label = "tok"
//! accounts = 100
//!
//! [workload]
//! requests = 500
//! read_fraction = 0.2
//!
//! [[faults]]
//! kind = "crash-node"
//! node = 1
//! step = "claim.ledger_write"
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enclave::CommitMode;
use crate::ledger::Backend;
use crate::node::{steps, FaultAction, Injection};

use super::SystemConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("line {line}: field `{field}`: {reason}")]
    Invalid {
        field: String,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractKind {
    Token,
    Counter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    pub kind: ContractKind,
    pub label: String,
    /// Token: funded accounts. The first `clients` of them belong to clients.
    #[serde(default = "default_accounts")]
    pub accounts: usize,
    /// Token: starting balance of every funded account.
    #[serde(default = "default_initial")]
    pub initial: u64,
    /// Counter: queries answered before it refuses.
    #[serde(default = "default_budget")]
    pub budget: u64,
}

fn default_accounts() -> usize {
    16
}
fn default_initial() -> u64 {
    1_000_000
}
/// Counter budget when none is given; the largest value the config format holds.
pub const UNLIMITED: u64 = i64::MAX as u64;

fn default_budget() -> u64 {
    UNLIMITED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(default = "yes")]
    pub wal: bool,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_interval: u64,
    /// Requests per committed transition; 1 selects the request/claim path.
    #[serde(default = "one")]
    pub batch: usize,
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_checkpoint() -> u64 {
    CommitMode::default().checkpoint_interval
}

impl Default for ModeSpec {
    fn default() -> Self {
        ModeSpec {
            wal: true,
            checkpoint_interval: default_checkpoint(),
            batch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub requests: usize,
    /// Fraction of requests that only read state.
    #[serde(default)]
    pub read_fraction: f64,
    /// Mean simulated milliseconds between a client's requests.
    #[serde(default = "default_think")]
    pub think_time_ms: u64,
    /// Largest token transfer amount; amounts are uniform in `1..=max_amount`.
    #[serde(default = "default_amount")]
    pub max_amount: u64,
}

fn default_think() -> u64 {
    40
}
fn default_amount() -> u64 {
    10
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            requests: 0,
            read_fraction: 0.0,
            think_time_ms: default_think(),
            max_amount: default_amount(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    CrashNode,
    TerminateEnclave,
    DropMessage,
    DelayTimer,
    ReplayStaleState,
}

/// One adversary action. Which fields apply depends on `kind`:
/// `crash-node`, `terminate-enclave` and `drop-message` take `step`, optional
/// `node` and `occurrence`; `delay-timer` takes `amount` in simulated seconds;
/// `replay-stale-state` takes `contract`, `snapshot` and `after` (completed
/// requests before it fires).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    #[serde(default)]
    pub node: Option<u64>,
    #[serde(default)]
    pub step: Option<String>,
    #[serde(default = "one_u64")]
    pub occurrence: u64,
    #[serde(default)]
    pub amount: Option<f64>,
    #[serde(default)]
    pub contract: Option<String>,
    #[serde(default)]
    pub snapshot: Option<usize>,
    #[serde(default)]
    pub after: Option<usize>,
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopSpec {
    pub n_c: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub epsilons: Vec<f64>,
    pub p: f64,
    pub trials: u64,
    #[serde(default = "default_difficulty")]
    pub difficulty: u32,
}

fn default_tau() -> f64 {
    1.0
}
fn default_difficulty() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_committee")]
    pub committee: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_kappa")]
    pub kappa: u64,
    #[serde(default = "one_u64")]
    pub delta: u64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub keep_transcript: bool,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub contracts: Vec<ContractSpec>,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub pop: Option<PopSpec>,
}

fn default_nodes() -> usize {
    2
}
fn default_clients() -> usize {
    4
}
fn default_committee() -> usize {
    4
}
fn default_fraction() -> f64 {
    0.34
}
fn default_kappa() -> u64 {
    1 << 20
}
fn default_backend() -> Backend {
    Backend::TrustedQuorum
}

impl Default for Scenario {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl Scenario {
    /// Parses and validates a scenario file.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate_in(Some(text))?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_in(None)
    }

    fn validate_in(&self, text: Option<&str>) -> Result<(), ScenarioError> {
        let bad = |field: &str, needle: Option<&str>, reason: String| ScenarioError::Invalid {
            field: field.to_string(),
            line: text.map_or(0, |t| line_of(t, field, needle)),
            reason,
        };
        if self.nodes == 0 {
            return Err(bad("nodes", None, "at least one node is required".into()));
        }
        if self.clients == 0 && self.workload.requests > 0 {
            return Err(bad(
                "clients",
                None,
                "a workload needs at least one client".into(),
            ));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(bad(
                "fraction",
                None,
                format!("{} is not in (0, 1)", self.fraction),
            ));
        }
        if self.mode.batch == 0 {
            return Err(bad("batch", None, "must be at least 1".into()));
        }
        if self.mode.checkpoint_interval == 0 {
            return Err(bad(
                "checkpoint_interval",
                None,
                "must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.workload.read_fraction) {
            return Err(bad(
                "read_fraction",
                None,
                format!("{} is not in [0, 1]", self.workload.read_fraction),
            ));
        }
        if self.workload.max_amount == 0 {
            return Err(bad("max_amount", None, "must be at least 1".into()));
        }
        if self.workload.requests > 0 && self.contracts.is_empty() {
            return Err(bad(
                "contracts",
                None,
                "a workload needs at least one contract".into(),
            ));
        }
        if self.seed > UNLIMITED || self.kappa > UNLIMITED {
            return Err(bad(
                "seed",
                None,
                format!("seed and kappa must not exceed {UNLIMITED}"),
            ));
        }
        let mut labels = std::collections::BTreeSet::new();
        for c in &self.contracts {
            if c.initial > UNLIMITED || c.budget > UNLIMITED {
                return Err(bad(
                    "budget",
                    Some(&c.label),
                    format!("initial and budget must not exceed {UNLIMITED}"),
                ));
            }
            if !labels.insert(c.label.as_str()) {
                return Err(bad(
                    "label",
                    Some(&c.label),
                    format!("duplicate contract label `{}`", c.label),
                ));
            }
            if c.kind == ContractKind::Token && c.accounts < self.clients.max(2) {
                return Err(bad(
                    "accounts",
                    Some(&c.label),
                    format!(
                        "token `{}` needs at least one account per client and at least two ({})",
                        c.label,
                        self.clients.max(2)
                    ),
                ));
            }
        }
        for f in &self.faults {
            match f.kind {
                FaultKind::CrashNode | FaultKind::TerminateEnclave | FaultKind::DropMessage => {
                    let Some(step) = &f.step else {
                        return Err(bad(
                            "step",
                            None,
                            format!("{:?} needs a protocol step", f.kind),
                        ));
                    };
                    if !steps::is_known(step) {
                        return Err(bad(
                            "step",
                            Some(step),
                            format!("unknown protocol step `{step}`"),
                        ));
                    }
                    if f.occurrence == 0 {
                        return Err(bad(
                            "occurrence",
                            Some(step),
                            "occurrences count from 1".into(),
                        ));
                    }
                    if let Some(n) = f.node {
                        if n >= self.nodes as u64 {
                            return Err(bad(
                                "node",
                                Some(step),
                                format!("node {n} does not exist"),
                            ));
                        }
                    }
                }
                FaultKind::DelayTimer => match f.amount {
                    Some(a) if a >= 0.0 && a.is_finite() => {}
                    _ => {
                        return Err(bad(
                            "amount",
                            None,
                            "delay-timer needs a non-negative amount".into(),
                        ))
                    }
                },
                FaultKind::ReplayStaleState => {
                    let Some(label) = &f.contract else {
                        return Err(bad(
                            "contract",
                            None,
                            "replay-stale-state needs a contract label".into(),
                        ));
                    };
                    if !labels.contains(label.as_str()) {
                        return Err(bad(
                            "contract",
                            Some(label),
                            format!("no contract labelled `{label}`"),
                        ));
                    }
                    if f.snapshot.is_none() {
                        return Err(bad(
                            "snapshot",
                            Some(label),
                            "replay-stale-state needs a snapshot index".into(),
                        ));
                    }
                }
            }
        }
        if let Some(p) = &self.pop {
            if p.n_c == 0 || p.epsilons.iter().any(|e| *e <= 1.0) || !(0.0..1.0).contains(&p.p) {
                return Err(bad(
                    "pop",
                    None,
                    "needs n_c >= 1, every epsilon > 1 and p in [0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            seed: self.seed,
            nodes: self.nodes,
            committee: self.committee,
            fraction: self.fraction,
            kappa: self.kappa,
            delta: self.delta,
            mode: self.commit_mode(),
            backend: self.backend,
            keep_transcript: self.keep_transcript,
        }
    }

    pub fn commit_mode(&self) -> CommitMode {
        CommitMode {
            wal: self.mode.wal,
            checkpoint_interval: self.mode.checkpoint_interval,
        }
    }

    /// Fault-plan entries for the step-keyed faults.
    pub fn injections(&self) -> Vec<Injection> {
        self.faults
            .iter()
            .filter_map(|f| {
                let action = match f.kind {
                    FaultKind::CrashNode => FaultAction::Crash,
                    FaultKind::TerminateEnclave => FaultAction::TerminateEnclave,
                    FaultKind::DropMessage => FaultAction::Drop,
                    FaultKind::DelayTimer | FaultKind::ReplayStaleState => return None,
                };
                Some(Injection {
                    node: f.node,
                    step: f.step.clone().expect("validated"),
                    action,
                    occurrence: f.occurrence,
                })
            })
            .collect()
    }
}

/// 1-based line of the first line mentioning `field` (and `needle`, if given).
fn line_of(text: &str, field: &str, needle: Option<&str>) -> usize {
    let hit = |l: &str| {
        let key = l.trim_start().starts_with(field) || l.contains(&format!("[{field}]"));
        key && needle.is_none_or(|n| l.contains(n))
    };
    text.lines()
        .position(hit)
        .or_else(|| needle.and_then(|n| text.lines().position(|l| l.contains(n))))
        .map_or(0, |i| i + 1)
}
