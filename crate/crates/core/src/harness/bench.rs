//! Ledger writes per request under batching, and on-chain storage with and
//! without the write-ahead log.

use std::fmt::Write as _;

use super::run::{run, RunError};
use super::scenario::{ContractKind, ContractSpec, Scenario, UNLIMITED};
use super::RunReport;

pub const BATCH_SIZES: [usize; 3] = [1, 10, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub batch: usize,
    pub requests: u64,
    pub delivered: u64,
    pub writes: u64,
    pub bytes: u64,
    pub audits_pass: bool,
}

impl BatchRow {
    pub fn writes_per_request(&self) -> f64 {
        self.writes as f64 / self.delivered.max(1) as f64
    }

    pub fn expected(&self) -> f64 {
        1.0 / self.batch as f64
    }

    /// `writes * batch == delivered`, checked in integers.
    pub fn exact(&self) -> bool {
        self.delivered == self.requests && self.writes * self.batch as u64 == self.delivered
    }

    fn from_report(batch: usize, r: &RunReport) -> Self {
        BatchRow {
            batch,
            requests: r.requests,
            delivered: r.delivered,
            writes: r.workload_writes(),
            bytes: r.workload_bytes(),
            audits_pass: r.passed(),
        }
    }
}

/// Runs `base` once per batch size.
pub fn batch_sweep(base: &Scenario, sizes: &[usize]) -> Result<Vec<BatchRow>, RunError> {
    sizes
        .iter()
        .map(|&b| {
            let mut s = base.clone();
            s.mode.batch = b;
            Ok(BatchRow::from_report(b, &run(&s)?.report))
        })
        .collect()
}

pub fn render_batch_rows(rows: &[BatchRow]) -> String {
    let mut s = String::from(
        "batch\trequests\tdelivered\twrites\twrites_per_request\texpected\tbytes\taudits\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            r.batch,
            r.requests,
            r.delivered,
            r.writes,
            r.writes_per_request(),
            r.expected(),
            r.bytes,
            if r.audits_pass { "pass" } else { "FAIL" }
        );
    }
    s
}

/// A transfer-only token workload.
pub fn token_workload(seed: u64, accounts: usize, transfers: usize, clients: usize) -> Scenario {
    let mut s = Scenario {
        seed,
        clients,
        contracts: vec![ContractSpec {
            kind: ContractKind::Token,
            label: "bench".into(),
            accounts,
            initial: 1_000_000,
            budget: UNLIMITED,
        }],
        ..Scenario::default()
    };
    s.workload.requests = transfers;
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compression {
    pub wal_batched: RunReport,
    pub full_state: RunReport,
}

impl Compression {
    /// Baseline bytes over write-ahead-log bytes, workload items only.
    pub fn ratio(&self) -> f64 {
        self.full_state.workload_bytes() as f64 / self.wal_batched.workload_bytes().max(1) as f64
    }

    /// The same ratio including genesis and minting.
    pub fn total_ratio(&self) -> f64 {
        self.full_state.total_bytes() as f64 / self.wal_batched.total_bytes().max(1) as f64
    }
}

/// Write-ahead log with batches of `batch` against one full-state write per request.
pub fn compression(base: &Scenario, batch: usize) -> Result<Compression, RunError> {
    let mut wal = base.clone();
    wal.mode.wal = true;
    wal.mode.batch = batch;
    let mut full = base.clone();
    full.mode.wal = false;
    full.mode.batch = 1;
    Ok(Compression {
        wal_batched: run(&wal)?.report,
        full_state: run(&full)?.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batches_are_exact() {
        let base = token_workload(5, 8, 40, 4);
        let rows = batch_sweep(&base, &[1, 10]).unwrap();
        for r in &rows {
            assert!(r.exact(), "{r:?}");
            assert!(r.audits_pass);
        }
    }
}
