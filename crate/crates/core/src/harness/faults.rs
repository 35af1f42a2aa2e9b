//! Exhaustive single-fault schedules over one request.
//!
//! Each schedule builds a fresh two-node system, arms one fault at one
//! protocol boundary of node 0, and drives a token transfer until that node
//! first fails. At that instant either the transition is on the ledger and a
//! fresh enclave on node 1 releases the output, or no state was written and
//! no enclave released anything for the request. The client then finishes on
//! the surviving node and the transfer must be applied exactly once.

use crate::client::{Client, Progress};
use crate::codec::{Decode, Encode};
use crate::contracts::token::{self, TokenOp};
use crate::contracts::{ContractCode, Reply};
use crate::enclave::{WrapperCall, WrapperReply};
use crate::node::{steps, FaultAction, Injection};
use crate::protocol::ClaimMsg;

use super::{System, SystemConfig};

const INITIAL: u64 = 1_000;
const AMOUNT: u64 = 7;

/// State right after the faulted attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterFault {
    /// The transition is on the ledger; `recovered` says whether a second
    /// enclave released the output to the client.
    Committed { recovered: bool },
    /// Nothing written and nothing released.
    Withheld,
    /// Output released or state written without the other.
    Torn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleResult {
    pub step: &'static str,
    pub action: FaultAction,
    pub fired: bool,
    pub after_fault: AfterFault,
    /// The client eventually received its output.
    pub completed: bool,
    /// Ledger transitions that include any of the request's inputs.
    pub transitions: usize,
    pub balance_ok: bool,
}

impl ScheduleResult {
    pub fn ok(&self) -> bool {
        let atomic = matches!(
            self.after_fault,
            AfterFault::Committed { recovered: true } | AfterFault::Withheld
        );
        self.fired && atomic && self.completed && self.transitions == 1 && self.balance_ok
    }
}

#[derive(Debug, Clone, Default)]
pub struct FaultSweep {
    pub results: Vec<ScheduleResult>,
}

impl FaultSweep {
    pub fn boundaries(&self) -> usize {
        let mut s: Vec<&str> = self.results.iter().map(|r| r.step).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    pub fn failures(&self) -> Vec<&ScheduleResult> {
        self.results.iter().filter(|r| !r.ok()).collect()
    }

    pub fn passed(&self) -> bool {
        !self.results.is_empty() && self.failures().is_empty()
    }
}

pub const ACTIONS: [FaultAction; 3] = [
    FaultAction::Drop,
    FaultAction::Crash,
    FaultAction::TerminateEnclave,
];

/// Runs every `(boundary, action)` pair of the request/claim path.
pub fn sweep(seed: u64) -> FaultSweep {
    let mut out = FaultSweep::default();
    for step in steps::DELIVERY {
        for action in ACTIONS {
            out.results.push(schedule(seed, step, action));
        }
    }
    out
}

fn reply_ok(bytes: &[u8]) -> bool {
    Reply::from_canonical(bytes).is_ok_and(|r| r.ok)
}

/// One schedule: `action` at the first `step` boundary on node 0.
pub fn schedule(seed: u64, step: &'static str, action: FaultAction) -> ScheduleResult {
    let sys = System::new(SystemConfig {
        seed,
        nodes: 2,
        ..SystemConfig::default()
    })
    .expect("two-node system");
    let mut admin = sys.client(1 << 40);
    let mut client = sys.client(0);
    let payee = sys.client(1).identity().account();
    let code = ContractCode::token("fault-sweep");
    let cid = admin.create_contract(&sys.nodes[0], &code).expect("create");
    let init = TokenOp::Init {
        allocations: vec![(client.identity().account(), INITIAL), (payee, INITIAL)],
    };
    let minted = admin
        .execute(&sys.nodes, cid, init.to_canonical())
        .expect("mint");
    assert!(reply_ok(&minted), "mint refused");
    let before = sys.ledger.len(&cid);

    sys.inject(Injection {
        node: Some(0),
        step: step.to_string(),
        action,
        occurrence: 1,
    });
    let op = TokenOp::Transfer {
        to: payee,
        amount: AMOUNT,
    };
    let mut session = client.start(cid, op.to_canonical()).expect("session");
    let mut done = None;
    loop {
        match session.step(&mut client, &sys.nodes[0]) {
            Progress::Pending { failed: false } => continue,
            Progress::Pending { failed: true } => break,
            Progress::Done(out) => {
                done = Some(out);
                break;
            }
            Progress::Failed(_) => break,
        }
    }
    let fired = !sys.faults.lock().fired().is_empty();

    let h_inps = session.h_inps();
    let committed = h_inps
        .iter()
        .any(|h| !sys.ledger.find_input(&cid, h).is_empty());
    let released = sys
        .platform
        .releases()
        .iter()
        .any(|r| h_inps.contains(&r.h_inp));
    let after_fault = if committed {
        AfterFault::Committed {
            recovered: done.is_some() || recover_elsewhere(&sys, &mut client, &code, &session),
        }
    } else if !released && sys.ledger.len(&cid) == before && done.is_none() {
        AfterFault::Withheld
    } else {
        AfterFault::Torn
    };

    let mut node = 1;
    while done.is_none() {
        match session.step(&mut client, &sys.nodes[node]) {
            Progress::Pending { failed } => {
                if failed {
                    node = 1 - node;
                    if sys.nodes[node].is_crashed() {
                        node = 1 - node;
                    }
                }
            }
            Progress::Done(out) => done = Some(out),
            Progress::Failed(_) => break,
        }
    }
    let completed = done.as_deref().is_some_and(reply_ok);
    let transitions = h_inps
        .iter()
        .chain(session.h_inps().iter())
        .flat_map(|h| sys.ledger.find_input(&cid, h))
        .map(|(i, _)| i)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let state = sys.auditor().final_state(&cid).expect("replay");
    let balance_ok = token::balance(&state, &client.identity().account()) == INITIAL - AMOUNT
        && token::balance(&state, &payee) == INITIAL + AMOUNT;
    ScheduleResult {
        step,
        action,
        fired,
        after_fault,
        completed,
        transitions,
        balance_ok,
    }
}

/// A fresh enclave on node 1 opens the committed output for the client.
fn recover_elsewhere(
    sys: &System,
    client: &mut Client,
    code: &ContractCode,
    session: &crate::client::Session,
) -> bool {
    let Some((transition, outp_ct)) = session.claim_material() else {
        return false;
    };
    let Ok(eid) = sys.platform.install(1, code) else {
        return false;
    };
    let claim = ClaimMsg {
        transition: transition.clone(),
        outp_ct: outp_ct.to_vec(),
        epk: client.identity().epk(),
    };
    let Ok(WrapperReply::Released(release)) = sys.platform.resume(eid, WrapperCall::Claim(claim))
    else {
        return false;
    };
    client
        .open_release(&code.cid(), session.seq, &session.h_inps(), &release)
        .is_ok_and(|out| reply_ok(&out))
}
