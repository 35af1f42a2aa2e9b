//! Rewind attempts against a budgeted counter.
//!
//! A malicious host colludes with clients to get more answers out of a
//! counter than its budget allows. Besides submitting queries honestly, it
//! starts fresh enclaves on old checkpoints, feeds stale logs to an enclave
//! whose cache is newer, and replays old transitions with new recipients.
//! Every schedule is derived from its index, so the set is reproducible.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::client::Client;
use crate::codec::{Decode, Encode};
use crate::contracts::counter::{self, CounterOp};
use crate::contracts::{ContractCode, Reply};
use crate::crypto::Digest;
use crate::enclave::{CommitMode, Eid, WrapperCall, WrapperReply};
use crate::ledger::{LedgerItem, StateTransition};
use crate::protocol::{ClaimMsg, Release};

use super::{System, SystemConfig};

pub const BUDGET: u64 = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewindResult {
    pub schedule: u64,
    /// Distinct inputs for which a colluding client obtained an answer.
    pub answered: usize,
    pub honest_queries: usize,
    pub rewinds: usize,
    pub stale_writes_rejected: usize,
    pub stale_transitions_built: usize,
    /// Count stored in the final on-ledger state.
    pub final_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Honest,
    FreshEnclaveOnSnapshot,
    StaleLogToWarmEnclave,
    ReplayOldTransition,
}

struct Adversary {
    sys: System,
    code: ContractCode,
    cid: Digest,
    colluders: Vec<Client>,
    warm: Option<Eid>,
    answered: BTreeSet<Digest>,
    seen: Vec<(StateTransition, Vec<u8>)>,
    result: RewindResult,
    rng: ChaCha20Rng,
}

impl Adversary {
    fn colluder(&mut self) -> usize {
        self.rng.gen_range(0..self.colluders.len())
    }

    fn query(&mut self) -> Vec<u8> {
        CounterOp {
            query: self.rng.gen::<[u8; 8]>().to_vec(),
        }
        .to_canonical()
    }

    fn accept(&mut self, who: usize, seq: u64, h_inps: &[Digest], release: &Release) {
        if let Ok(out) = self.colluders[who].open_release(&self.cid, seq, h_inps, release) {
            if Reply::from_canonical(&out).is_ok_and(|r| r.ok) {
                self.answered.insert(release.body.h_inp);
            }
        }
    }

    fn honest(&mut self) {
        self.result.honest_queries += 1;
        let who = self.colluder();
        let op = self.query();
        let nodes = self.sys.nodes.clone();
        let before = self.colluders[who].accepted().len();
        if let Ok(out) = self.colluders[who].execute(&nodes, self.cid, op) {
            if Reply::from_canonical(&out).is_ok_and(|r| r.ok) {
                let a = &self.colluders[who].accepted()[before];
                self.answered.insert(a.h_inp);
            }
        }
    }

    /// Runs a fresh query in `eid` against `log`, then tries to commit and claim.
    fn rewind(&mut self, eid: Eid, log: Option<crate::ledger::WalView>) {
        self.result.rewinds += 1;
        let who = self.colluder();
        let op = self.query();
        let Ok(session) = self.colluders[who].start(self.cid, op) else {
            return;
        };
        let msg = session.current().clone();
        let call = WrapperCall::Request {
            msg: msg.clone(),
            log,
            mode: CommitMode::default(),
        };
        let Ok(WrapperReply::Executed(exec)) = self.sys.platform.resume(eid, call) else {
            return;
        };
        let h_inps = session.h_inps();
        for r in &exec.releases {
            self.accept(who, session.seq, &h_inps, r);
        }
        let Some(t) = exec.transition else {
            return;
        };
        self.result.stale_transitions_built += 1;
        let outp_ct = exec.outputs[0].clone();
        self.seen.push((t.clone(), outp_ct.clone()));
        let item = LedgerItem::Transition(t.clone());
        if self
            .sys
            .ledger
            .write_item(&self.cid, &item, "adversary")
            .is_err()
        {
            self.result.stale_writes_rejected += 1;
        }
        let claim = ClaimMsg {
            transition: t,
            outp_ct,
            epk: self.colluders[who].identity().epk(),
        };
        if let Ok(WrapperReply::Released(r)) =
            self.sys.platform.resume(eid, WrapperCall::Claim(claim))
        {
            self.accept(who, session.seq, &h_inps, &r);
        }
    }

    fn snapshot(&mut self) -> Option<crate::ledger::WalView> {
        let len = self.sys.ledger.len(&self.cid);
        let i = self.rng.gen_range(1..len.max(2));
        self.sys.ledger.wal_view_at(&self.cid, i.min(len - 1))
    }

    fn play(&mut self, m: Move) {
        match m {
            Move::Honest => self.honest(),
            Move::FreshEnclaveOnSnapshot => {
                let log = self.snapshot();
                if let Ok(eid) = self.sys.platform.install(0, &self.code) {
                    self.rewind(eid, log);
                }
            }
            Move::StaleLogToWarmEnclave => {
                let eid = match self.warm {
                    Some(e) => e,
                    None => match self.sys.platform.install(1, &self.code) {
                        Ok(e) => e,
                        Err(_) => return,
                    },
                };
                self.warm = Some(eid);
                // Warm the cache on the current head, then hand it a stale log.
                let head = self.sys.ledger.wal_view(&self.cid);
                self.rewind(eid, head);
                let log = self.snapshot();
                self.rewind(eid, log);
            }
            Move::ReplayOldTransition => {
                if self.seen.is_empty() {
                    return;
                }
                let (t, outp_ct) = self.seen[self.rng.gen_range(0..self.seen.len())].clone();
                let who = self.colluder();
                let claim = ClaimMsg {
                    transition: t.clone(),
                    outp_ct,
                    epk: self.colluders[who].identity().epk(),
                };
                if let Ok(eid) = self.sys.platform.install(0, &self.code) {
                    if let Ok(WrapperReply::Released(r)) =
                        self.sys.platform.resume(eid, WrapperCall::Claim(claim))
                    {
                        let h = t.deliver.h_inp.clone();
                        self.accept(who, u64::MAX, &h, &r);
                    }
                }
            }
        }
    }
}

const MOVES: usize = 24;

/// Plays schedule `index` and reports what the colluders got.
pub fn schedule(index: u64) -> RewindResult {
    let sys = System::new(SystemConfig {
        seed: 0x7265_7769 ^ index,
        nodes: 2,
        ..SystemConfig::default()
    })
    .expect("system");
    let mut admin = sys.client(1 << 40);
    let code = ContractCode::counter("rewind", BUDGET);
    let cid = admin.create_contract(&sys.nodes[0], &code).expect("create");
    let colluders = (0..3).map(|i| sys.client(100 + i)).collect();
    let mut adv = Adversary {
        sys,
        code,
        cid,
        colluders,
        warm: None,
        answered: BTreeSet::new(),
        seen: Vec::new(),
        result: RewindResult {
            schedule: index,
            ..RewindResult::default()
        },
        rng: ChaCha20Rng::seed_from_u64(index),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(index ^ 0x6d6f_7665);
    // Budget-many honest queries land at random points; everything else is an attack.
    let mut honest_at = BTreeSet::new();
    while honest_at.len() < (BUDGET + 1) as usize {
        honest_at.insert(rng.gen_range(0..MOVES));
    }
    for i in 0..MOVES {
        let m = if honest_at.contains(&i) {
            Move::Honest
        } else {
            match rng.gen_range(0..3) {
                0 => Move::FreshEnclaveOnSnapshot,
                1 => Move::StaleLogToWarmEnclave,
                _ => Move::ReplayOldTransition,
            }
        };
        adv.play(m);
    }
    let state = adv.sys.auditor().final_state(&adv.cid).expect("replay");
    adv.result.final_count = counter::count(&state);
    adv.result.answered = adv.answered.len();
    adv.result
}

/// Schedules `0..count`.
pub fn sweep(count: u64) -> Vec<RewindResult> {
    (0..count).map(schedule).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_schedule_answers_exactly_the_budget() {
        let r = schedule(0);
        assert_eq!(r.answered, BUDGET as usize, "{r:?}");
        assert_eq!(r.final_count, BUDGET);
    }
}
