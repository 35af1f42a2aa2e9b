//! Seeded discrete-event execution of a [`Scenario`].
//!
//! Time is simulated microseconds. Every node call takes one step; clients
//! think for an exponentially distributed time between requests. With
//! `batch = 1` each client runs one request/claim session at a time. With
//! larger batches clients submit open-loop to the contract's batching node,
//! which commits once `batch` requests are buffered; partial batches are
//! flushed when nothing else is scheduled. A session whose batch fails falls
//! back to the request/claim path, which first looks for its input on the
//! ledger.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::client::{Client, ClientError, Progress, Session};
use crate::codec::{Decode, Encode};
use crate::contracts::counter::CounterOp;
use crate::contracts::token::TokenOp;
use crate::contracts::{AccountId, ContractCode, Reply};
use crate::crypto::{hash_bytes, Digest};
use crate::enclave::{WrapperCall, WrapperReply};
use crate::keymgr::KmError;
use crate::ledger::LedgerItem;
use crate::pop::{
    estimate_rates_crn, sample_exponential, verdicts_with_delay, PopParams, ProverStrategy,
    TimerDelay,
};
use crate::protocol::ClaimMsg;

use super::audit::{audit_run, AuditVerdict, ClientRecord};
use super::report::{ContractRow, RunReport, StaleReplay, TimerRow};
use super::scenario::{ContractKind, FaultKind, FaultSpec, Scenario, ScenarioError};
use super::System;

const STEP_US: u64 = 1_000;
const RESTART_US: u64 = 50_000;
const ADMIN_CLIENT: u64 = 1 << 40;
const ADVERSARY_CLIENT: u64 = (1 << 40) + 1;
/// Trials per delay when a scenario delays the proof-of-publication timer.
const TIMER_TRIALS: u64 = 2_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("key manager: {0}")]
    Key(#[from] KmError),
    #[error("setup of contract `{label}`: {source}")]
    Setup { label: String, source: ClientError },
    #[error("minting `{label}` failed: {message}")]
    Mint { label: String, message: String },
}

pub struct RunOutcome {
    pub report: RunReport,
    /// Output of every completed request, by `(client, seq)`.
    pub outputs: BTreeMap<(usize, u64), Vec<u8>>,
    pub system: System,
    pub contracts: Vec<ContractCode>,
}

impl std::fmt::Debug for RunOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOutcome")
            .field("report", &self.report)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Issue(usize),
    Step(usize, u64),
    Submit(usize, u64),
    Commit(usize, usize),
    Restart(usize),
}

struct Deployed {
    code: ContractCode,
    cid: Digest,
    accounts: Vec<AccountId>,
    setup_writes: u64,
    setup_bytes: u64,
}

struct Live {
    session: Session,
    contract: usize,
    node: usize,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    requests: u64,
    delivered: u64,
    read_only: u64,
    failed: u64,
}

/// Synthetic funded account `i` of a token contract.
pub fn synthetic_account(label: &str, i: usize) -> AccountId {
    let mut b = b"account/".to_vec();
    b.extend_from_slice(label.as_bytes());
    b.extend_from_slice(&(i as u64).to_be_bytes());
    hash_bytes(&b)
}

struct Sim<'a> {
    scenario: &'a Scenario,
    sys: System,
    contracts: Vec<Deployed>,
    clients: Vec<Client>,
    queues: Vec<VecDeque<(usize, Vec<u8>)>>,
    live: BTreeMap<(usize, u64), Live>,
    by_input: BTreeMap<Digest, (usize, u64)>,
    inflight: BTreeMap<(usize, usize), Vec<(usize, u64)>>,
    commit_scheduled: BTreeSet<(usize, usize)>,
    restarting: BTreeSet<usize>,
    events: BinaryHeap<Reverse<(u64, u64, Event)>>,
    next_event: u64,
    now: u64,
    rng: ChaCha20Rng,
    outputs: BTreeMap<(usize, u64), Vec<u8>>,
    sessions: Vec<((Digest, u64, u64), Vec<Digest>)>,
    counts: Vec<Counts>,
    completed: usize,
    stale_pending: Vec<FaultSpec>,
    stale_replays: Vec<StaleReplay>,
}

/// Runs `scenario` to completion and audits the result.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, RunError> {
    scenario.validate()?;
    let sys = System::new(scenario.system_config())?;
    let mut admin = sys.client(ADMIN_CLIENT);
    let clients: Vec<Client> = (0..scenario.clients as u64)
        .map(|i| sys.client(i))
        .collect();
    let adversary = sys.client(ADVERSARY_CLIENT).identity().account();

    let mut contracts = Vec::new();
    for spec in &scenario.contracts {
        let code = match spec.kind {
            ContractKind::Token => ContractCode::token(spec.label.clone()),
            ContractKind::Counter => ContractCode::counter(spec.label.clone(), spec.budget),
        };
        let setup = |source| RunError::Setup {
            label: spec.label.clone(),
            source,
        };
        let cid = admin.create_contract(&sys.nodes[0], &code).map_err(setup)?;
        let mut accounts = Vec::new();
        if spec.kind == ContractKind::Token {
            accounts.extend(clients.iter().map(|c| c.identity().account()));
            accounts
                .extend((accounts.len()..spec.accounts).map(|i| synthetic_account(&spec.label, i)));
            let mut allocations: Vec<(AccountId, u64)> =
                accounts.iter().map(|a| (*a, spec.initial)).collect();
            allocations.push((adversary, spec.initial));
            let out = admin
                .execute(
                    &sys.nodes,
                    cid,
                    TokenOp::Init { allocations }.to_canonical(),
                )
                .map_err(setup)?;
            match Reply::from_canonical(&out) {
                Ok(r) if r.ok => {}
                Ok(r) => {
                    return Err(RunError::Mint {
                        label: spec.label.clone(),
                        message: r.message,
                    })
                }
                Err(e) => {
                    return Err(RunError::Mint {
                        label: spec.label.clone(),
                        message: e.to_string(),
                    })
                }
            }
        }
        let m = sys.ledger.metrics(&cid);
        contracts.push(Deployed {
            code,
            cid,
            accounts,
            setup_writes: m.accepted,
            setup_bytes: m.bytes,
        });
    }
    for inj in scenario.injections() {
        sys.inject(inj);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed ^ 0x776f_726b);
    let mut queues = vec![VecDeque::new(); scenario.clients];
    let mut counts = vec![Counts::default(); contracts.len()];
    for r in 0..scenario.workload.requests {
        let c = r % scenario.clients;
        let ci = rng.gen_range(0..contracts.len());
        let read = rng.gen_bool(scenario.workload.read_fraction);
        let op = match contracts[ci].code {
            ContractCode::Token { .. } if read => TokenOp::GetBalance.to_canonical(),
            ContractCode::Token { .. } => {
                // Account `c` is the sender's; a self-transfer changes nothing.
                let accounts = &contracts[ci].accounts;
                let pick = rng.gen_range(0..accounts.len() - 1);
                TokenOp::Transfer {
                    to: accounts[if pick >= c { pick + 1 } else { pick }],
                    amount: rng.gen_range(1..=scenario.workload.max_amount),
                }
                .to_canonical()
            }
            ContractCode::Counter { .. } => CounterOp {
                query: rng.gen::<[u8; 16]>().to_vec(),
            }
            .to_canonical(),
        };
        counts[ci].requests += 1;
        queues[c].push_back((ci, op));
    }

    let stale_pending = scenario
        .faults
        .iter()
        .filter(|f| f.kind == FaultKind::ReplayStaleState)
        .cloned()
        .collect();
    let mut sim = Sim {
        scenario,
        sys,
        contracts,
        clients,
        queues,
        live: BTreeMap::new(),
        by_input: BTreeMap::new(),
        inflight: BTreeMap::new(),
        commit_scheduled: BTreeSet::new(),
        restarting: BTreeSet::new(),
        events: BinaryHeap::new(),
        next_event: 0,
        now: 0,
        rng: ChaCha20Rng::seed_from_u64(scenario.seed ^ 0x73_6368_6564),
        outputs: BTreeMap::new(),
        sessions: Vec::new(),
        counts,
        completed: 0,
        stale_pending,
        stale_replays: Vec::new(),
    };
    for c in 0..scenario.clients {
        let t = sim.think();
        sim.schedule(t, Event::Issue(c));
    }
    sim.drive();
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn batching(&self) -> bool {
        self.scenario.mode.batch > 1
    }

    fn think(&mut self) -> u64 {
        let mean = self.scenario.workload.think_time_ms as f64 * 1000.0;
        if mean <= 0.0 {
            return 0;
        }
        sample_exponential(&mut self.rng, mean) as u64
    }

    fn schedule(&mut self, delay: u64, event: Event) {
        self.next_event += 1;
        self.events
            .push(Reverse((self.now + delay, self.next_event, event)));
    }

    fn drive(&mut self) {
        loop {
            let Some(Reverse((t, _, event))) = self.events.pop() else {
                // Quiescent: flush partial batches, then stop once nothing is left.
                let open: Vec<(usize, usize)> = self
                    .inflight
                    .iter()
                    .filter(|(k, v)| !v.is_empty() && !self.commit_scheduled.contains(k))
                    .map(|(k, _)| *k)
                    .collect();
                if open.is_empty() {
                    break;
                }
                for (n, ci) in open {
                    self.commit_scheduled.insert((n, ci));
                    self.schedule(STEP_US, Event::Commit(n, ci));
                }
                continue;
            };
            self.now = t;
            match event {
                Event::Issue(c) => self.issue(c),
                Event::Step(c, s) => self.step(c, s),
                Event::Submit(c, s) => self.submit(c, s),
                Event::Commit(n, ci) => self.commit(n, ci),
                Event::Restart(n) => {
                    self.sys.nodes[n].restart();
                    self.restarting.remove(&n);
                }
            }
            for n in 0..self.sys.nodes.len() {
                if self.sys.nodes[n].is_crashed() && self.restarting.insert(n) {
                    self.schedule(RESTART_US, Event::Restart(n));
                }
            }
        }
        // Replays whose trigger point was never reached fire at the end.
        let rest = std::mem::take(&mut self.stale_pending);
        for f in rest {
            self.replay_stale(&f);
        }
    }

    fn issue(&mut self, c: usize) {
        let Some((ci, op)) = self.queues[c].pop_front() else {
            return;
        };
        let cid = self.contracts[ci].cid;
        let session = match self.clients[c].start(cid, op) {
            Ok(s) => s,
            Err(_) => {
                self.counts[ci].failed += 1;
                return;
            }
        };
        let seq = session.seq;
        let nodes = self.sys.nodes.len();
        let node = if self.batching() {
            ci % nodes
        } else {
            c % nodes
        };
        self.live.insert(
            (c, seq),
            Live {
                session,
                contract: ci,
                node,
            },
        );
        if self.batching() {
            self.schedule(0, Event::Submit(c, seq));
            let t = self.think();
            self.schedule(t, Event::Issue(c));
        } else {
            self.schedule(0, Event::Step(c, seq));
        }
    }

    fn step(&mut self, c: usize, seq: u64) {
        let Some(live) = self.live.get_mut(&(c, seq)) else {
            return;
        };
        let node = self.sys.nodes[live.node].clone();
        let progress = live.session.step(&mut self.clients[c], &node);
        self.advance(c, seq, progress);
    }

    fn submit(&mut self, c: usize, seq: u64) {
        let Some(live) = self.live.get_mut(&(c, seq)) else {
            return;
        };
        let (n, ci) = (live.node, live.contract);
        let msg = live.session.current().clone();
        match self.sys.nodes[n].submit(&msg) {
            Ok(_) => {
                self.by_input.insert(msg.h_inp(), (c, seq));
                let q = self.inflight.entry((n, ci)).or_default();
                q.push((c, seq));
                if q.len() >= self.scenario.mode.batch {
                    self.commit(n, ci);
                }
            }
            Err(e) => self.recover(c, seq, e.to_string()),
        }
    }

    fn commit(&mut self, n: usize, ci: usize) {
        self.commit_scheduled.remove(&(n, ci));
        let members = self.inflight.remove(&(n, ci)).unwrap_or_default();
        if members.is_empty() {
            return;
        }
        let cid = self.contracts[ci].cid;
        let node = self.sys.nodes[n].clone();
        let mut handled = BTreeSet::new();
        match node.commit_batch(&cid) {
            Ok(out) => {
                for r in &out.releases {
                    let Some(&(c, seq)) = self.by_input.get(&r.body.h_inp) else {
                        continue;
                    };
                    let Some(live) = self.live.get_mut(&(c, seq)) else {
                        continue;
                    };
                    if !handled.insert((c, seq)) {
                        continue;
                    }
                    let progress = live.session.deliver(&mut self.clients[c], r);
                    self.advance(c, seq, progress);
                }
                for sk in &out.skipped {
                    if let Some(&(c, seq)) = self.by_input.get(&sk.h_inp) {
                        if handled.insert((c, seq)) {
                            self.recover(c, seq, sk.reason.clone());
                        }
                    }
                }
                for m in members {
                    if handled.insert(m) {
                        self.recover(m.0, m.1, "batch committed without this input".into());
                    }
                }
            }
            Err(e) => {
                for (c, seq) in members {
                    self.recover(c, seq, e.to_string());
                }
            }
        }
    }

    /// Moves a session whose batch failed onto the request/claim path.
    fn recover(&mut self, c: usize, seq: u64, reason: String) {
        let Some(live) = self.live.get_mut(&(c, seq)) else {
            return;
        };
        live.node = (live.node + 1) % self.sys.nodes.len();
        let progress = live.session.batch_missed(&mut self.clients[c], reason);
        self.advance(c, seq, progress);
    }

    fn advance(&mut self, c: usize, seq: u64, progress: Progress) {
        match progress {
            Progress::Pending { failed } => {
                if failed {
                    if let Some(live) = self.live.get_mut(&(c, seq)) {
                        live.node = (live.node + 1) % self.sys.nodes.len();
                    }
                }
                self.schedule(STEP_US, Event::Step(c, seq));
            }
            Progress::Done(out) => self.complete(c, seq, Some(out)),
            Progress::Failed(_) => self.complete(c, seq, None),
        }
    }

    fn complete(&mut self, c: usize, seq: u64, output: Option<Vec<u8>>) {
        let Some(live) = self.live.remove(&(c, seq)) else {
            return;
        };
        let h_inps = live.session.h_inps();
        for h in &h_inps {
            self.by_input.remove(h);
        }
        self.sessions
            .push(((live.session.cid, c as u64, seq), h_inps));
        let counts = &mut self.counts[live.contract];
        match output {
            Some(out) => {
                counts.delivered += 1;
                if self.clients[c]
                    .accepted()
                    .last()
                    .is_some_and(|a| a.read_only)
                {
                    counts.read_only += 1;
                }
                self.outputs.insert((c, seq), out);
            }
            None => counts.failed += 1,
        }
        if !self.batching() {
            let t = self.think();
            self.schedule(t, Event::Issue(c));
        }
        self.completed += 1;
        let default_after = self.scenario.workload.requests / 2;
        let due: Vec<FaultSpec> = {
            let (due, rest) = std::mem::take(&mut self.stale_pending)
                .into_iter()
                .partition(|f: &FaultSpec| f.after.unwrap_or(default_after) <= self.completed);
            self.stale_pending = rest;
            due
        };
        for f in due {
            self.replay_stale(&f);
        }
    }

    /// Hands a fresh enclave an old checkpoint plus a new request from a
    /// colluding client, then tries to commit and claim the result.
    fn replay_stale(&mut self, f: &FaultSpec) {
        let label = f.contract.as_deref().expect("validated");
        let Some(d) = self.contracts.iter().find(|d| d.code.label() == label) else {
            return;
        };
        let cid = d.cid;
        let snapshot = f.snapshot.expect("validated");
        let ledger = self.sys.ledger.clone();
        let head = ledger.len(&cid).saturating_sub(1);
        let mut row = StaleReplay {
            contract: label.to_string(),
            snapshot,
            head,
            ..StaleReplay::default()
        };
        let Some(view) = ledger.wal_view_at(&cid, snapshot.min(head)) else {
            self.stale_replays.push(row);
            return;
        };
        let Some(host) = self.sys.nodes.iter().position(|n| !n.is_crashed()) else {
            self.stale_replays.push(row);
            return;
        };
        let platform = self.sys.platform.clone();
        let Ok(eid) = platform.install(host as u64, &d.code) else {
            self.stale_replays.push(row);
            return;
        };
        let mut adversary = self.sys.client(ADVERSARY_CLIENT);
        let op = match d.code {
            ContractCode::Token { .. } => TokenOp::Transfer {
                to: d.accounts[0],
                amount: 1,
            }
            .to_canonical(),
            ContractCode::Counter { .. } => CounterOp {
                query: b"rewind".to_vec(),
            }
            .to_canonical(),
        };
        let Ok(session) = adversary.start(cid, op) else {
            self.stale_replays.push(row);
            return;
        };
        let msg = session.current().clone();
        let call = WrapperCall::Request {
            msg: msg.clone(),
            log: Some(view),
            mode: self.scenario.commit_mode(),
        };
        if let Ok(WrapperReply::Executed(exec)) = platform.resume(eid, call) {
            row.output_released |= !exec.releases.is_empty() && snapshot < head;
            if let Some(t) = exec.transition {
                row.transition_built = true;
                row.ledger_rejected = ledger
                    .write_item(&cid, &LedgerItem::Transition(t.clone()), "adversary")
                    .is_err();
                if let Some(outp_ct) = exec.outputs.first() {
                    let claim = ClaimMsg {
                        transition: t,
                        outp_ct: outp_ct.clone(),
                        epk: adversary.identity().epk(),
                    };
                    let released = matches!(
                        platform.resume(eid, WrapperCall::Claim(claim)),
                        Ok(WrapperReply::Released(_))
                    );
                    row.output_released |= released && row.ledger_rejected;
                }
            }
        }
        self.stale_replays.push(row);
    }

    fn timer_rows(&self) -> Vec<TimerRow> {
        let delays: Vec<f64> = self
            .scenario
            .faults
            .iter()
            .filter(|f| f.kind == FaultKind::DelayTimer)
            .filter_map(|f| f.amount)
            .collect();
        if delays.is_empty() {
            return Vec::new();
        }
        let (params, p, difficulty) = match &self.scenario.pop {
            Some(s) => (
                PopParams::new(s.n_c, s.tau, s.epsilons[0]),
                s.p,
                s.difficulty,
            ),
            None => (PopParams::new(10, 1.0, 2.0), 0.1, 2),
        };
        let strategy = ProverStrategy::Adaptive {
            max_extra: params.n_c,
        };
        delays
            .into_iter()
            .map(|d| {
                let mut row = TimerRow {
                    delay: d,
                    trials: TIMER_TRIALS,
                    ..TimerRow::default()
                };
                for trial in 0..TIMER_TRIALS {
                    let seed = self.scenario.seed;
                    let (base, _) = verdicts_with_delay(
                        params,
                        p,
                        seed,
                        trial,
                        strategy,
                        TimerDelay::default(),
                        difficulty,
                    );
                    let delay = TimerDelay { d1: d, d2: d };
                    let (honest, forged) =
                        verdicts_with_delay(params, p, seed, trial, strategy, delay, difficulty);
                    row.honest_accepts_undelayed += u64::from(base);
                    row.honest_accepts += u64::from(honest);
                    row.flipped_to_accept += u64::from(honest && !base);
                    row.forged_accepts += u64::from(forged);
                }
                row
            })
            .collect()
    }

    fn finish(self) -> RunOutcome {
        let scenario = self.scenario;
        let codes: Vec<ContractCode> = self.contracts.iter().map(|d| d.code.clone()).collect();
        let accepted = self
            .clients
            .iter()
            .flat_map(|c| c.accepted().iter().cloned())
            .collect();
        let record = ClientRecord {
            accepted,
            sessions: self.sessions.clone(),
        };
        let auditor = self.sys.auditor();
        let mut audits = audit_run(
            &self.sys.ledger,
            &self.sys.platform,
            &auditor,
            &codes,
            &record,
        );

        let timer_rows = self.timer_rows();
        if !timer_rows.is_empty() {
            let flipped: u64 = timer_rows.iter().map(|r| r.flipped_to_accept).sum();
            let forged: u64 = timer_rows.iter().map(|r| r.forged_accepts).sum();
            audits.push(AuditVerdict {
                name: "timer-delay-soundness".into(),
                pass: flipped == 0 && forged == 0,
                detail: format!(
                    "delays={} flipped_to_accept={flipped} forged_accepts={forged}",
                    timer_rows.len()
                ),
            });
        }
        if !self.stale_replays.is_empty() {
            let bad = self
                .stale_replays
                .iter()
                .filter(|r| {
                    r.output_released
                        || (r.snapshot < r.head && r.transition_built && !r.ledger_rejected)
                })
                .count();
            audits.push(AuditVerdict {
                name: "stale-replay-rejected".into(),
                pass: bad == 0,
                detail: format!("replays={} violations={bad}", self.stale_replays.len()),
            });
        }

        let pop_rows = scenario.pop.as_ref().map_or_else(Vec::new, |s| {
            let base = PopParams::new(s.n_c, s.tau, s.epsilons[0]);
            let strategy = ProverStrategy::Adaptive { max_extra: s.n_c };
            estimate_rates_crn(
                base,
                &s.epsilons,
                s.p,
                s.trials,
                scenario.seed,
                strategy,
                s.difficulty,
            )
        });

        let contracts: Vec<ContractRow> = self
            .contracts
            .iter()
            .zip(&self.counts)
            .map(|(d, k)| {
                let m = self.sys.ledger.metrics(&d.cid);
                ContractRow {
                    label: d.code.label().to_string(),
                    kind: match d.code {
                        ContractCode::Token { .. } => "token".into(),
                        ContractCode::Counter { .. } => "counter".into(),
                    },
                    cid: d.cid,
                    items: self.sys.ledger.len(&d.cid),
                    setup_writes: d.setup_writes,
                    workload_writes: m.accepted - d.setup_writes,
                    setup_bytes: d.setup_bytes,
                    workload_bytes: m.bytes - d.setup_bytes,
                    rejected: m.rejected,
                    requests: k.requests,
                    delivered: k.delivered,
                    read_only: k.read_only,
                    failed: k.failed,
                }
            })
            .collect();
        let faults = self.sys.faults.lock();
        let report = RunReport {
            seed: scenario.seed,
            nodes: scenario.nodes,
            clients: scenario.clients,
            batch: scenario.mode.batch,
            wal: scenario.mode.wal,
            requests: self.counts.iter().map(|k| k.requests).sum(),
            delivered: self.counts.iter().map(|k| k.delivered).sum(),
            read_only: self.counts.iter().map(|k| k.read_only).sum(),
            failed: self.counts.iter().map(|k| k.failed).sum(),
            contracts,
            faults_fired: faults
                .fired()
                .iter()
                .map(|e| format!("node={} step={} action={}", e.node, e.step, e.action.name()))
                .collect(),
            faults_unfired: faults
                .unfired()
                .iter()
                .map(|i| {
                    format!(
                        "node={:?} step={} action={} occurrence={}",
                        i.node,
                        i.step,
                        i.action.name(),
                        i.occurrence
                    )
                })
                .collect(),
            stale_replays: self.stale_replays.clone(),
            timer_rows,
            pop_rows,
            audits,
            transcript_digest: self.sys.transcript.digest(),
            transcript_messages: self.sys.transcript.len(),
            sim_time_us: self.now,
        };
        drop(faults);
        RunOutcome {
            report,
            outputs: self.outputs,
            system: self.sys,
            contracts: codes,
        }
    }
}
