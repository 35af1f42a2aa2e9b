//! Run reports and ledger transcripts.
//!
//! A report renders as tab-delimited `section\tkey\tvalue` rows plus a short
//! human-readable summary. A transcript is the ledger dump prefixed with the
//! attestation root, enough to re-audit every contract chain offline.

use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::{Digest, VerifyKey};
use crate::ledger::audit::{audit_dump, ChainAudit};
use crate::ledger::{kmc_ledger_id, parse_dump, Ledger, RestoreError};
use crate::pop::RateEstimate;

use super::audit::AuditVerdict;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractRow {
    pub label: String,
    pub kind: String,
    pub cid: Digest,
    pub items: usize,
    /// Items written while setting up the contract (genesis, minting).
    pub setup_writes: u64,
    pub workload_writes: u64,
    pub setup_bytes: u64,
    pub workload_bytes: u64,
    pub rejected: u64,
    pub requests: u64,
    pub delivered: u64,
    pub read_only: u64,
    pub failed: u64,
}

/// One stale-snapshot replay by the adversary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaleReplay {
    pub contract: String,
    pub snapshot: usize,
    pub head: usize,
    pub transition_built: bool,
    pub ledger_rejected: bool,
    pub output_released: bool,
}

/// Proof-of-publication outcomes under one timer delay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimerRow {
    pub delay: f64,
    pub trials: u64,
    pub honest_accepts: u64,
    pub honest_accepts_undelayed: u64,
    /// Trials rejected without delay but accepted with it.
    pub flipped_to_accept: u64,
    pub forged_accepts: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub nodes: usize,
    pub clients: usize,
    pub batch: usize,
    pub wal: bool,
    pub contracts: Vec<ContractRow>,
    pub requests: u64,
    pub delivered: u64,
    pub read_only: u64,
    pub failed: u64,
    pub faults_fired: Vec<String>,
    pub faults_unfired: Vec<String>,
    pub stale_replays: Vec<StaleReplay>,
    pub timer_rows: Vec<TimerRow>,
    pub pop_rows: Vec<RateEstimate>,
    pub audits: Vec<AuditVerdict>,
    pub transcript_digest: Digest,
    pub transcript_messages: u64,
    pub sim_time_us: u64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.audits.iter().all(|a| a.pass)
    }

    pub fn workload_writes(&self) -> u64 {
        self.contracts.iter().map(|c| c.workload_writes).sum()
    }

    pub fn workload_bytes(&self) -> u64 {
        self.contracts.iter().map(|c| c.workload_bytes).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.contracts
            .iter()
            .map(|c| c.setup_bytes + c.workload_bytes)
            .sum()
    }

    /// Ledger writes per delivered request, excluding setup.
    pub fn writes_per_request(&self) -> f64 {
        if self.delivered == 0 {
            return 0.0;
        }
        self.workload_writes() as f64 / self.delivered as f64
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut row = |section: &str, key: &str, value: String| {
            let _ = writeln!(s, "{section}\t{key}\t{value}");
        };
        row("run", "seed", self.seed.to_string());
        row("run", "nodes", self.nodes.to_string());
        row("run", "clients", self.clients.to_string());
        row("run", "batch", self.batch.to_string());
        row("run", "wal", self.wal.to_string());
        row("run", "requests", self.requests.to_string());
        row("run", "delivered", self.delivered.to_string());
        row("run", "read_only", self.read_only.to_string());
        row("run", "failed", self.failed.to_string());
        row("run", "workload_writes", self.workload_writes().to_string());
        row("run", "workload_bytes", self.workload_bytes().to_string());
        row(
            "run",
            "writes_per_request",
            format!("{:.6}", self.writes_per_request()),
        );
        row("run", "sim_time_us", self.sim_time_us.to_string());
        row(
            "run",
            "transcript_messages",
            self.transcript_messages.to_string(),
        );
        row("run", "transcript_digest", self.transcript_digest.to_hex());
        for c in &self.contracts {
            let key = format!("{}:{}", c.kind, c.label);
            row("contract", &key, format!(
                "cid={} items={} setup_writes={} workload_writes={} setup_bytes={} workload_bytes={} rejected={} requests={} delivered={} read_only={} failed={}",
                &c.cid.to_hex()[..16], c.items, c.setup_writes, c.workload_writes, c.setup_bytes,
                c.workload_bytes, c.rejected, c.requests, c.delivered, c.read_only, c.failed
            ));
        }
        for f in &self.faults_fired {
            row("fault", "fired", f.clone());
        }
        for f in &self.faults_unfired {
            row("fault", "unfired", f.clone());
        }
        for r in &self.stale_replays {
            row(
                "stale-replay",
                &r.contract,
                format!(
                    "snapshot={} head={} transition_built={} ledger_rejected={} output_released={}",
                    r.snapshot, r.head, r.transition_built, r.ledger_rejected, r.output_released
                ),
            );
        }
        for t in &self.timer_rows {
            row("timer-delay", &format!("{}", t.delay), format!(
                "trials={} honest_accepts={} undelayed={} flipped_to_accept={} forged_accepts={}",
                t.trials, t.honest_accepts, t.honest_accepts_undelayed, t.flipped_to_accept, t.forged_accepts
            ));
        }
        for p in &self.pop_rows {
            row(
                "pop",
                &format!("eps={}", p.epsilon),
                format!(
                    "p={} n_c={} trials={} false_reject_rate={:.6} forgery_success_rate={:.6}",
                    p.p,
                    p.n_c,
                    p.trials,
                    p.false_reject_rate(),
                    p.forgery_success_rate()
                ),
            );
        }
        for a in &self.audits {
            row(
                "audit",
                &a.name,
                format!("{} {}", if a.pass { "pass" } else { "FAIL" }, a.detail),
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "seed {}: {} requests, {} delivered ({} read-only), {} failed; {} ledger writes ({:.4}/request), {} bytes on chain\n",
            self.seed,
            self.requests,
            self.delivered,
            self.read_only,
            self.failed,
            self.workload_writes(),
            self.writes_per_request(),
            self.workload_bytes()
        );
        let failing: Vec<&str> = self
            .audits
            .iter()
            .filter(|a| !a.pass)
            .map(|a| a.name.as_str())
            .collect();
        if failing.is_empty() {
            let _ = writeln!(s, "audits: all {} pass", self.audits.len());
        } else {
            let _ = writeln!(s, "audits: FAILED {}", failing.join(", "));
        }
        s
    }
}

const ROOT_PREFIX: &str = "# attestation-root ";

/// The ledger dump with its attestation root as a header line.
pub fn write_transcript(ledger: &Ledger) -> String {
    format!(
        "{ROOT_PREFIX}{}\n{}",
        hex::encode(ledger.attestation_root().0),
        ledger.dump()
    )
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("missing `{ROOT_PREFIX}<hex>` header")]
    MissingRoot,
    #[error("attestation root is not 32 hex bytes")]
    BadRoot,
    #[error(transparent)]
    Dump(#[from] RestoreError),
}

/// Re-audits every contract chain in a transcript.
pub fn audit_transcript(text: &str) -> Result<Vec<ChainAudit>, TranscriptError> {
    let header = text.lines().next().ok_or(TranscriptError::MissingRoot)?;
    let root_hex = header
        .strip_prefix(ROOT_PREFIX)
        .ok_or(TranscriptError::MissingRoot)?;
    let root: [u8; 32] = hex::decode(root_hex.trim())
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or(TranscriptError::BadRoot)?;
    // Keep line numbers aligned with the file by blanking the header.
    let body = format!("\n{}", text.split_once('\n').map_or("", |(_, rest)| rest));
    let rows = parse_dump(&body)?;
    let records: Vec<(Digest, Vec<u8>)> = rows.into_iter().map(|(id, _, p)| (id, p)).collect();
    Ok(audit_dump(&VerifyKey(root), &kmc_ledger_id(), &records))
}
