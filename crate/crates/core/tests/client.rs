mod common;

use tee_ledger::client::{ClientError, Progress};
use tee_ledger::codec::Encode;
use tee_ledger::contracts::counter::CounterOp;
use tee_ledger::contracts::token::{balance, total_supply};
use tee_ledger::contracts::ContractCode;
use tee_ledger::crypto::Digest;
use tee_ledger::node::{steps, FaultAction, Injection};

use common::*;

#[test]
fn fresh_token_reports_the_minted_balance() {
    let sys = system(61, 2);
    let (cid, mut cs) = token(&sys, "fresh", 2, 77);
    let out = cs[1].execute(&sys.nodes, cid, get_balance()).unwrap();
    assert_eq!(reply(&out).value, 77);
    assert!(cs[1].accepted()[0].read_only);
}

#[test]
fn same_code_created_twice_succeeds_once() {
    let sys = system(62, 2);
    let code = ContractCode::token("dup");
    let mut a = sys.client(0);
    let mut b = sys.client(1);
    assert!(a.create_contract(&sys.nodes[0], &code).is_ok());
    assert!(b.create_contract(&sys.nodes[1], &code).is_err());
}

#[test]
fn node_that_skips_the_genesis_write_is_caught() {
    let sys = system(63, 1);
    sys.inject(Injection {
        node: Some(0),
        step: steps::CREATE_LEDGER_WRITE.into(),
        action: FaultAction::Drop,
        occurrence: 1,
    });
    let code = ContractCode::counter("skip", 2);
    assert!(sys.client(0).create_contract(&sys.nodes[0], &code).is_err());
    assert!(sys.ledger.genesis(&code.cid()).is_none());
}

#[test]
fn interleaved_transfers_all_land_and_conserve_supply() {
    let sys = system(64, 2);
    let (cid, mut cs) = token(&sys, "interleave", 4, 100);
    let accounts: Vec<_> = cs.iter().map(|c| c.identity().account()).collect();
    let mut sessions: Vec<_> = (0..4)
        .map(|i| {
            let op = tee_ledger::contracts::token::TokenOp::Transfer {
                to: accounts[(i + 1) % 4],
                amount: 10 + i as u64,
            }
            .to_canonical();
            Some(cs[i].start(cid, op).unwrap())
        })
        .collect();
    let mut round = 0;
    while sessions.iter().any(Option::is_some) {
        for i in 0..4 {
            let Some(s) = sessions[i].as_mut() else {
                continue;
            };
            match s.step(&mut cs[i], &sys.nodes[(i + round) % 2]) {
                Progress::Done(_) => sessions[i] = None,
                Progress::Failed(e) => panic!("client {i}: {e}"),
                Progress::Pending { .. } => {}
            }
        }
        round += 1;
        assert!(round < 64);
    }
    let st = sys.auditor().final_state(&cid).unwrap();
    assert_eq!(total_supply(&st), 400);
    for (i, account) in accounts.iter().enumerate() {
        let expect = 100 - (10 + i as u64) + (10 + ((i + 3) % 4) as u64);
        assert_eq!(balance(&st, account), expect, "account {i}");
    }
}

#[test]
fn transition_for_another_input_is_refused_before_claim() {
    let sys = system(65, 1);
    let (cid, mut cs) = token(&sys, "bind", 2, 10);
    let op = transfer(&cs[1], 1);
    let s = cs[0].start(cid, op).unwrap();
    let t = sys.nodes[0]
        .request(s.current())
        .unwrap()
        .transition
        .unwrap();
    let other = [Digest([1; 32])];
    assert!(matches!(
        cs[0].check_transition(&cid, &other, &t),
        Err(ClientError::InputMismatch)
    ));
    assert_eq!(cs[0].check_transition(&cid, &s.h_inps(), &t).unwrap(), 0);
    let mut forged = t.clone();
    forged.deliver.h_prev = Digest([2; 32]);
    assert!(matches!(
        cs[0].check_transition(&cid, &s.h_inps(), &forged),
        Err(ClientError::BadAttestation)
    ));
}

#[test]
fn read_state_exposes_lengths_only() {
    let sys = system(66, 1);
    let code = ContractCode::counter("len", 10);
    let mut c = sys.client(0);
    let cid = c.create_contract(&sys.nodes[0], &code).unwrap();
    assert!(matches!(
        c.read_state(&Digest([0; 32])),
        Err(ClientError::NotFound(_))
    ));
    let q = |b: u8| CounterOp { query: vec![b] }.to_canonical();
    c.execute(&sys.nodes, cid, q(1)).unwrap();
    let view = c.read_state(&cid).unwrap();
    assert_eq!(
        view.iter().map(|v| v.kind).collect::<Vec<_>>(),
        ["genesis", "diff"]
    );
    c.execute(&sys.nodes, cid, q(2)).unwrap();
    let view = c.read_state(&cid).unwrap();
    assert_eq!(view[1].state_len, view[2].state_len);
    // State keys never appear in the clear.
    let raw = sys.ledger.dump();
    assert!(!raw.contains(&hex::encode(b"count")));
}

#[test]
fn retries_exhaust_after_the_limit() {
    let sys = system(67, 1);
    let (cid, mut cs) = token(&sys, "limit", 1, 10);
    for k in 1..=u64::from(tee_ledger::client::MAX_ATTEMPTS) {
        sys.inject(Injection {
            node: Some(0),
            step: steps::REQUEST_ENCLAVE_CALL.into(),
            action: FaultAction::Drop,
            occurrence: k,
        });
    }
    let to = sys.client(5);
    let r = cs[0].execute(&sys.nodes, cid, transfer(&to, 1));
    assert!(
        matches!(r, Err(ClientError::RetriesExhausted { attempts, .. }) if attempts == tee_ledger::client::MAX_ATTEMPTS),
        "{r:?}"
    );
}
