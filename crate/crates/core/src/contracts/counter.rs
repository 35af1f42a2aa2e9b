//! A query counter with a hard budget stored in contract state.
//!
//! Each answered query increments `count`; once `count` reaches the budget,
//! queries are refused without touching state. Inputs are [`CounterOp`]
//! records (tag `0x26`); outputs are [`Reply`] records carrying the count.

use crate::canonical_record;
use crate::codec::{Decode, Encode};
use crate::crypto::{hash_bytes, VerifyKey};

use super::state::{ContractState, Edit, StateDiff};
use super::{ContractProgram, Reply};

const COUNT_KEY: &[u8] = b"count";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterOp {
    pub query: Vec<u8>,
}

canonical_record!(CounterOp, 0x26, { query });

pub fn count(state: &ContractState) -> u64 {
    state
        .get(COUNT_KEY)
        .and_then(|v| v.try_into().ok())
        .map(u64::from_be_bytes)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy)]
pub struct Counter {
    pub budget: u64,
}

impl ContractProgram for Counter {
    fn zero_state(&self) -> ContractState {
        let mut s = ContractState::new();
        s.insert(COUNT_KEY.to_vec(), 0u64.to_be_bytes().to_vec());
        s
    }

    fn execute(&self, state: &mut ContractState, input: &[u8], _caller: &VerifyKey) -> Vec<u8> {
        let op = match CounterOp::from_canonical(input) {
            Ok(op) => op,
            Err(e) => return Reply::err(format!("malformed input: {e}")).encode(),
        };
        let n = count(state);
        if n >= self.budget {
            return Reply::err("budget exhausted").encode();
        }
        state.insert(COUNT_KEY.to_vec(), (n + 1).to_be_bytes().to_vec());
        // The answer is a stand-in for a privacy-sensitive computation on `query`.
        let answer = hash_bytes(&op.query).prefix_u64();
        Reply {
            ok: true,
            value: n + 1,
            message: format!("{answer:016x}"),
        }
        .encode()
    }

    fn diff_unit(&self) -> usize {
        StateDiff {
            edits: vec![Edit {
                key: COUNT_KEY.to_vec(),
                old_hash: Some(crate::crypto::Digest::ZERO),
                new: Some(vec![0; 8]),
            }],
        }
        .to_canonical()
        .len()
            + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigKeypair;

    #[test]
    fn budget_three_answers_three() {
        let c = Counter { budget: 3 };
        let who = SigKeypair::from_seed([1; 32]).verify_key();
        let mut st = c.zero_state();
        let q = CounterOp {
            query: b"q".to_vec(),
        }
        .to_canonical();
        for i in 1..=3 {
            let r = Reply::from_canonical(&c.execute(&mut st, &q, &who)).unwrap();
            assert!(r.ok);
            assert_eq!(r.value, i);
        }
        let before = st.clone();
        let r = Reply::from_canonical(&c.execute(&mut st, &q, &who)).unwrap();
        assert!(!r.ok);
        assert_eq!(st, before);
        assert_eq!(count(&st), 3);
    }
}
