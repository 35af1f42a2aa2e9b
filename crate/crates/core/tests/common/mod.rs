#![allow(dead_code)]

use tee_ledger::client::Client;
use tee_ledger::codec::{Decode, Encode};
use tee_ledger::contracts::token::TokenOp;
use tee_ledger::contracts::{ContractCode, Reply};
use tee_ledger::crypto::Digest;
use tee_ledger::harness::{System, SystemConfig};

pub const ADMIN: u64 = 1 << 40;

pub fn system(seed: u64, nodes: usize) -> System {
    System::new(SystemConfig {
        seed,
        nodes,
        ..SystemConfig::default()
    })
    .expect("system")
}

pub fn reply(out: &[u8]) -> Reply {
    Reply::from_canonical(out).expect("reply record")
}

/// Creates a token and mints `initial` to each of `clients` fresh clients.
pub fn token(sys: &System, label: &str, clients: u64, initial: u64) -> (Digest, Vec<Client>) {
    let mut admin = sys.client(ADMIN);
    let cid = admin
        .create_contract(&sys.nodes[0], &ContractCode::token(label))
        .expect("create");
    let cs: Vec<Client> = (0..clients).map(|i| sys.client(i)).collect();
    let allocations = cs
        .iter()
        .map(|c| (c.identity().account(), initial))
        .collect();
    let out = admin
        .execute(
            &sys.nodes,
            cid,
            TokenOp::Init { allocations }.to_canonical(),
        )
        .expect("mint");
    assert!(reply(&out).ok);
    (cid, cs)
}

pub fn transfer(to: &Client, amount: u64) -> Vec<u8> {
    TokenOp::Transfer {
        to: to.identity().account(),
        amount,
    }
    .to_canonical()
}

pub fn get_balance() -> Vec<u8> {
    TokenOp::GetBalance.to_canonical()
}
