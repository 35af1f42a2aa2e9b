//! C ABI over the simulator.
//!
//! Two opaque handles: [`TlSimulation`] is a live system that a caller drives
//! one request at a time, and [`TlRun`] holds the outcome of a whole scenario
//! run. Every function returns a [`TlStatus`]; on failure the message is kept
//! per thread and can be copied out with [`tl_last_error`]. Handles are not
//! thread-safe; use one per thread or lock around calls.
//!
//! # Safety
//!
//! Every pointer argument is either null or valid for the access its name
//! implies: strings are NUL-terminated, `cid` buffers hold 32 bytes, output
//! buffers hold `cap` bytes, and handles come from the matching constructor
//! and are freed at most once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tee_ledger::client::Client;
use tee_ledger::codec::{Decode, Encode};
use tee_ledger::contracts::token::TokenOp;
use tee_ledger::contracts::{ContractCode, Reply};
use tee_ledger::crypto::Digest;
use tee_ledger::harness::report::{audit_transcript, write_transcript};
use tee_ledger::harness::{run, RunOutcome, Scenario, System, SystemConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    RunFailed = 4,
    BufferTooSmall = 5,
    UnknownContract = 6,
    UnknownClient = 7,
    RequestFailed = 8,
    Rejected = 9,
    Panic = 10,
}

/// A running system with pre-made clients.
pub struct TlSimulation {
    system: System,
    admin: Client,
    clients: Vec<Client>,
}

/// A finished scenario run.
pub struct TlRun {
    outcome: RunOutcome,
    report: String,
    transcript: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: TlStatus, message: impl Into<String>) -> TlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status
}

fn guard(f: impl FnOnce() -> TlStatus) -> TlStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(TlStatus::Panic, "internal panic"))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, TlStatus> {
    if s.is_null() {
        return Err(fail(TlStatus::NullArgument, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(TlStatus::InvalidUtf8, "string is not UTF-8"))
}

/// Copies `s` plus a NUL into `buf`. `written` receives the length without the
/// NUL, or the required capacity when the buffer is too small.
unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize, written: *mut usize) -> TlStatus {
    if !written.is_null() {
        *written = s.len();
    }
    if buf.is_null() || cap < s.len() + 1 {
        return fail(
            TlStatus::BufferTooSmall,
            format!("need {} bytes", s.len() + 1),
        );
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    TlStatus::Ok
}

/// Copies the calling thread's last error message. `written` receives its
/// length, or the capacity needed when `buf` is too small.
#[no_mangle]
pub unsafe extern "C" fn tl_last_error(
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> TlStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, cap, written)
}

/// Creates a system with `nodes` compute nodes and `clients` client identities.
#[no_mangle]
pub unsafe extern "C" fn tl_simulation_new(
    seed: u64,
    nodes: u32,
    clients: u32,
    out: *mut *mut TlSimulation,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return fail(TlStatus::NullArgument, "out is null");
        }
        if nodes == 0 {
            return fail(TlStatus::InvalidConfig, "at least one node is required");
        }
        let config = SystemConfig {
            seed,
            nodes: nodes as usize,
            ..SystemConfig::default()
        };
        let system = match System::new(config) {
            Ok(s) => s,
            Err(e) => return fail(TlStatus::InvalidConfig, e.to_string()),
        };
        let admin = system.client(1 << 40);
        let clients = (0..u64::from(clients)).map(|i| system.client(i)).collect();
        *out = Box::into_raw(Box::new(TlSimulation {
            system,
            admin,
            clients,
        }));
        TlStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn tl_simulation_free(sim: *mut TlSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Deploys a token contract crediting every client with `initial`, and writes
/// its 32-byte contract id to `cid_out`.
#[no_mangle]
pub unsafe extern "C" fn tl_simulation_deploy_token(
    sim: *mut TlSimulation,
    label: *const c_char,
    initial: u64,
    cid_out: *mut u8,
) -> TlStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(TlStatus::NullArgument, "simulation is null");
        };
        if cid_out.is_null() {
            return fail(TlStatus::NullArgument, "cid_out is null");
        }
        let label = match text(label) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let code = ContractCode::token(label);
        let cid = match sim.admin.create_contract(&sim.system.nodes[0], &code) {
            Ok(c) => c,
            Err(e) => return fail(TlStatus::RequestFailed, e.to_string()),
        };
        let allocations = sim
            .clients
            .iter()
            .map(|c| (c.identity().account(), initial))
            .collect();
        let nodes = sim.system.nodes.clone();
        match sim
            .admin
            .execute(&nodes, cid, TokenOp::Init { allocations }.to_canonical())
        {
            Ok(out) => match Reply::from_canonical(&out) {
                Ok(r) if r.ok => {
                    ptr::copy_nonoverlapping(cid.0.as_ptr(), cid_out, 32);
                    TlStatus::Ok
                }
                Ok(r) => fail(TlStatus::Rejected, r.message),
                Err(e) => fail(TlStatus::RequestFailed, e.to_string()),
            },
            Err(e) => fail(TlStatus::RequestFailed, e.to_string()),
        }
    })
}

unsafe fn token_call(
    sim: *mut TlSimulation,
    cid: *const u8,
    client: u32,
    op: TokenOp,
    value_out: *mut u64,
) -> TlStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(TlStatus::NullArgument, "simulation is null");
        };
        if cid.is_null() || value_out.is_null() {
            return fail(TlStatus::NullArgument, "cid or value_out is null");
        }
        let mut id = [0u8; 32];
        ptr::copy_nonoverlapping(cid, id.as_mut_ptr(), 32);
        let cid = Digest(id);
        if sim.system.ledger.genesis(&cid).is_none() {
            return fail(
                TlStatus::UnknownContract,
                format!("no contract {}", cid.to_hex()),
            );
        }
        let nodes = sim.system.nodes.clone();
        let Some(c) = sim.clients.get_mut(client as usize) else {
            return fail(TlStatus::UnknownClient, format!("no client {client}"));
        };
        match c.execute(&nodes, cid, op.to_canonical()) {
            Ok(out) => match Reply::from_canonical(&out) {
                Ok(r) if r.ok => {
                    *value_out = r.value;
                    TlStatus::Ok
                }
                Ok(r) => fail(TlStatus::Rejected, r.message),
                Err(e) => fail(TlStatus::RequestFailed, e.to_string()),
            },
            Err(e) => fail(TlStatus::RequestFailed, e.to_string()),
        }
    })
}

/// Moves `amount` from client `from` to client `to`; `remaining_out` receives
/// the sender's new balance.
#[no_mangle]
pub unsafe extern "C" fn tl_simulation_transfer(
    sim: *mut TlSimulation,
    cid: *const u8,
    from: u32,
    to: u32,
    amount: u64,
    remaining_out: *mut u64,
) -> TlStatus {
    let Some(payee) = sim.as_ref().and_then(|s| s.clients.get(to as usize)) else {
        return fail(TlStatus::UnknownClient, format!("no client {to}"));
    };
    let to = payee.identity().account();
    token_call(
        sim,
        cid,
        from,
        TokenOp::Transfer { to, amount },
        remaining_out,
    )
}

#[no_mangle]
pub unsafe extern "C" fn tl_simulation_balance(
    sim: *mut TlSimulation,
    cid: *const u8,
    client: u32,
    balance_out: *mut u64,
) -> TlStatus {
    token_call(sim, cid, client, TokenOp::GetBalance, balance_out)
}

/// Number of ledger items accepted for contract `cid`.
#[no_mangle]
pub unsafe extern "C" fn tl_simulation_ledger_len(
    sim: *const TlSimulation,
    cid: *const u8,
    len_out: *mut usize,
) -> TlStatus {
    let (Some(sim), false, false) = (sim.as_ref(), cid.is_null(), len_out.is_null()) else {
        return fail(TlStatus::NullArgument, "null argument");
    };
    let mut id = [0u8; 32];
    ptr::copy_nonoverlapping(cid, id.as_mut_ptr(), 32);
    *len_out = sim.system.ledger.len(&Digest(id));
    TlStatus::Ok
}

/// Parses a scenario (TOML text) and runs it to completion.
#[no_mangle]
pub unsafe extern "C" fn tl_run_scenario(config: *const c_char, out: *mut *mut TlRun) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return fail(TlStatus::NullArgument, "out is null");
        }
        let config = match text(config) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let scenario = match Scenario::parse(config) {
            Ok(s) => s,
            Err(e) => return fail(TlStatus::InvalidConfig, e.to_string()),
        };
        let outcome = match run(&scenario) {
            Ok(o) => o,
            Err(e) => return fail(TlStatus::RunFailed, e.to_string()),
        };
        let report = outcome.report.render();
        let transcript = write_transcript(&outcome.system.ledger);
        *out = Box::into_raw(Box::new(TlRun {
            outcome,
            report,
            transcript,
        }));
        TlStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn tl_run_free(run: *mut TlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Writes 1 to `passed_out` if every audit of the run passed, else 0.
#[no_mangle]
pub unsafe extern "C" fn tl_run_passed(run: *const TlRun, passed_out: *mut i32) -> TlStatus {
    let (Some(run), false) = (run.as_ref(), passed_out.is_null()) else {
        return fail(TlStatus::NullArgument, "null argument");
    };
    *passed_out = i32::from(run.outcome.report.passed());
    TlStatus::Ok
}

/// Copies the tab-delimited report.
#[no_mangle]
pub unsafe extern "C" fn tl_run_report(
    run: *const TlRun,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> TlStatus {
    let Some(run) = run.as_ref() else {
        return fail(TlStatus::NullArgument, "run is null");
    };
    copy_out(&run.report, buf, cap, written)
}

/// Copies the ledger transcript accepted by [`tl_audit_transcript`].
#[no_mangle]
pub unsafe extern "C" fn tl_run_transcript(
    run: *const TlRun,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> TlStatus {
    let Some(run) = run.as_ref() else {
        return fail(TlStatus::NullArgument, "run is null");
    };
    copy_out(&run.transcript, buf, cap, written)
}

/// Re-audits a transcript; `passed_out` is 1 when every chain is linear and attested.
#[no_mangle]
pub unsafe extern "C" fn tl_audit_transcript(
    transcript: *const c_char,
    passed_out: *mut i32,
) -> TlStatus {
    guard(|| {
        if passed_out.is_null() {
            return fail(TlStatus::NullArgument, "passed_out is null");
        }
        let t = match text(transcript) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match audit_transcript(t) {
            Ok(chains) => {
                *passed_out = i32::from(chains.iter().all(|c| c.ok()));
                TlStatus::Ok
            }
            Err(e) => fail(TlStatus::InvalidConfig, e.to_string()),
        }
    })
}
