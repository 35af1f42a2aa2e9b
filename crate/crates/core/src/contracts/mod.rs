//! Deterministic contracts and the state algebra the write-ahead log relies on.
//!
//! A contract is a pure function `(state, input, caller) -> output` that mutates
//! `state` in place. Inputs and outputs are canonical records; see [`token`] and
//! [`counter`] for the per-contract schemas.

pub mod counter;
pub mod state;
pub mod token;

use crate::canonical_record;
use crate::codec::{CodecError, Decode, Encode, Nested, Reader, Writer};
use crate::crypto::{hash_bytes, hash_canonical, Digest, VerifyKey};

pub use state::{apply, diff, ContractState, DiffError, Edit, StateDiff};

pub type AccountId = Digest;

/// Accounts are named by the hash of the owner's verification key.
pub fn account_of(spk: &VerifyKey) -> AccountId {
    hash_bytes(&spk.0)
}

pub trait ContractProgram {
    fn zero_state(&self) -> ContractState;

    /// Runs one input. Refusals and malformed inputs leave `state` untouched and
    /// are reported in the returned output.
    fn execute(&self, state: &mut ContractState, input: &[u8], caller: &VerifyKey) -> Vec<u8>;

    /// Encoded diffs are padded to a multiple of this many bytes.
    fn diff_unit(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ContractCode {
    Token { label: String },
    Counter { label: String, budget: u64 },
}

impl ContractCode {
    pub fn token(label: impl Into<String>) -> Self {
        ContractCode::Token {
            label: label.into(),
        }
    }

    pub fn counter(label: impl Into<String>, budget: u64) -> Self {
        ContractCode::Counter {
            label: label.into(),
            budget,
        }
    }

    pub fn cid(&self) -> Digest {
        hash_canonical(self)
    }

    pub fn label(&self) -> &str {
        match self {
            ContractCode::Token { label } | ContractCode::Counter { label, .. } => label,
        }
    }

    pub fn program(&self) -> Box<dyn ContractProgram> {
        match self {
            ContractCode::Token { .. } => Box::new(token::Token),
            ContractCode::Counter { budget, .. } => Box::new(counter::Counter { budget: *budget }),
        }
    }
}

impl Encode for ContractCode {
    const TAG: u8 = 0x20;
    fn encode_fields(&self, w: &mut Writer) {
        match self {
            ContractCode::Token { label } => w.u8(1).str(label).u64(0),
            ContractCode::Counter { label, budget } => w.u8(2).str(label).u64(*budget),
        };
    }
}

impl Decode for ContractCode {
    const TAG: u8 = 0x20;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let kind = r.u8()?;
        let label = r.string()?;
        let budget = r.u64()?;
        match kind {
            1 => Ok(ContractCode::Token { label }),
            2 => Ok(ContractCode::Counter { label, budget }),
            k => Err(CodecError::invalid("contract kind", k.to_string())),
        }
    }
}

impl Nested for ContractCode {}

/// The enclave program that hosts a contract. Its hash is what attestations name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrapperProgram {
    pub version: String,
    pub code: ContractCode,
}

canonical_record!(WrapperProgram, 0x2f, { version, code });

pub const WRAPPER_VERSION: &str = "contract-wrapper/1";

pub fn wrapper_program_hash(code: &ContractCode) -> Digest {
    hash_canonical(&WrapperProgram {
        version: WRAPPER_VERSION.to_string(),
        code: code.clone(),
    })
}

/// Common reply shape for the built-in contracts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub ok: bool,
    pub value: u64,
    pub message: String,
}

canonical_record!(Reply, 0x25, { ok, value, message });

impl Reply {
    pub fn ok(value: u64) -> Self {
        Reply {
            ok: true,
            value,
            message: String::new(),
        }
    }

    pub fn err(message: impl Into<String>) -> Self {
        Reply {
            ok: false,
            value: 0,
            message: message.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cid_is_hash_of_code() {
        let a = ContractCode::token("t");
        assert_eq!(a.cid(), ContractCode::token("t").cid());
        assert_ne!(a.cid(), ContractCode::token("u").cid());
        assert_ne!(a.cid(), ContractCode::counter("t", 0).cid());
        assert_eq!(ContractCode::from_canonical(&a.to_canonical()).unwrap(), a);
        assert_ne!(wrapper_program_hash(&a), a.cid());
    }
}
