mod common;

use tee_ledger::attest::attestation_message;
use tee_ledger::codec::Encode;
use tee_ledger::contracts::{wrapper_program_hash, ContractCode};
use tee_ledger::crypto::{Digest, SigKeypair};
use tee_ledger::harness::System;
use tee_ledger::ledger::audit::audit_ledger;
use tee_ledger::ledger::{Ledger, LedgerConfig, LedgerItem, Reject, StateTransition};

use common::*;

/// Two transitions executed on the same head by different nodes.
fn racing_pair(sys: &System) -> (Digest, StateTransition, StateTransition) {
    let (cid, mut cs) = token(sys, "race", 3, 100);
    let pay = transfer(&cs[2], 1);
    let a = cs[0].start(cid, pay.clone()).unwrap();
    let b = cs[1].start(cid, pay).unwrap();
    let ta = sys.nodes[0]
        .request(a.current())
        .unwrap()
        .transition
        .unwrap();
    let tb = sys.nodes[1]
        .request(b.current())
        .unwrap()
        .transition
        .unwrap();
    assert_eq!(ta.deliver.h_prev, tb.deliver.h_prev);
    (cid, ta, tb)
}

#[test]
fn concurrent_transitions_on_one_head_accept_exactly_one() {
    for flip in [false, true] {
        let sys = system(21, 2);
        let (cid, ta, tb) = racing_pair(&sys);
        let (first, second) = if flip { (tb, ta) } else { (ta, tb) };
        let before = sys.ledger.len(&cid);
        assert!(sys
            .ledger
            .write_item(&cid, &LedgerItem::Transition(first.clone()), "n")
            .is_ok());
        let r = sys
            .ledger
            .write_item(&cid, &LedgerItem::Transition(second.clone()), "n");
        assert!(matches!(r, Err(Reject::StaleState { .. })), "{r:?}");
        assert_eq!(sys.ledger.len(&cid), before + 1);
        assert!(sys
            .ledger
            .contains_item(&cid, &LedgerItem::Transition(first)));
        assert!(!sys
            .ledger
            .contains_item(&cid, &LedgerItem::Transition(second)));
    }
}

#[test]
fn replayed_transition_is_rejected() {
    let sys = system(22, 2);
    let (cid, ta, _) = racing_pair(&sys);
    let item = LedgerItem::Transition(ta);
    sys.ledger.write_item(&cid, &item, "n").unwrap();
    assert!(matches!(
        sys.ledger.write_item(&cid, &item, "n"),
        Err(Reject::StaleState { .. })
    ));
}

#[test]
fn attestation_by_a_non_platform_key_is_rejected() {
    let sys = system(23, 2);
    let (cid, mut ta, _) = racing_pair(&sys);
    let prog = wrapper_program_hash(&ContractCode::token("race"));
    let rogue = SigKeypair::from_seed([9; 32]);
    ta.sig = rogue.sign(&attestation_message(&prog, &ta.deliver.to_canonical()));
    let r = sys
        .ledger
        .write_item(&cid, &LedgerItem::Transition(ta), "n");
    assert_eq!(r, Err(Reject::BadAttestation));
}

#[test]
fn reads_and_membership() {
    let sys = system(24, 2);
    let unknown = Digest([3; 32]);
    assert!(sys.ledger.read(&unknown).is_none());
    assert!(!sys.ledger.contains(&unknown, b"x"));

    let (cid, ta, tb) = racing_pair(&sys);
    let n = sys.ledger.len(&cid);
    sys.ledger
        .write_item(&cid, &LedgerItem::Transition(ta.clone()), "n")
        .unwrap();
    let _ = sys
        .ledger
        .write_item(&cid, &LedgerItem::Transition(tb.clone()), "n");
    let items = sys.ledger.read(&cid).unwrap();
    assert_eq!(items.len(), n + 1);
    let last = LedgerItem::Transition(ta).to_canonical();
    assert_eq!(*items.last().unwrap().payload, last);
    assert!(sys.ledger.contains(&cid, &last));
    assert!(!sys
        .ledger
        .contains(&cid, &LedgerItem::Transition(tb).to_canonical()));

    // Membership never flips back once later items land.
    let to = sys.client(1);
    sys.client(0)
        .execute(&sys.nodes, cid, transfer(&to, 1))
        .unwrap();
    assert!(sys.ledger.contains(&cid, &last));
}

#[test]
fn transition_for_unknown_id_is_rejected() {
    let sys = system(25, 2);
    let (_, ta, _) = racing_pair(&sys);
    let r = sys
        .ledger
        .write_item(&Digest([4; 32]), &LedgerItem::Transition(ta), "n");
    assert_eq!(r, Err(Reject::NotGenesis));
}

#[test]
fn dump_restores_to_an_identical_ledger() {
    let sys = system(26, 2);
    let (cid, mut cs) = token(&sys, "dump", 3, 50);
    for i in 0..6 {
        let to = sys.client((i + 1) % 3);
        cs[(i % 3) as usize]
            .execute(&sys.nodes, cid, transfer(&to, 2))
            .unwrap();
    }
    let dump = sys.ledger.dump();
    let config = LedgerConfig::trusted(sys.ledger.attestation_root(), sys.config.kappa);
    let restored = Ledger::restore(config, &dump).unwrap();
    assert_eq!(restored.dump(), dump);
    assert_eq!(restored.len(&cid), sys.ledger.len(&cid));
    assert!(audit_ledger(&restored).iter().all(|a| a.ok()));

    let again = system(26, 2);
    let (_, mut cs2) = token(&again, "dump", 3, 50);
    for i in 0..6 {
        let to = again.client((i + 1) % 3);
        cs2[(i % 3) as usize]
            .execute(&again.nodes, cid, transfer(&to, 2))
            .unwrap();
    }
    assert_eq!(
        again.ledger.dump(),
        dump,
        "dump differs across runs with one seed"
    );
}
