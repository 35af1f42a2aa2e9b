pub mod attest;
pub mod client;
pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod enclave;
pub mod harness;
pub mod keymgr;
pub mod ledger;
pub mod node;
pub mod pop;
pub mod protocol;
