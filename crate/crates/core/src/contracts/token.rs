//! ERC20-style token over `bal:<account>` records holding big-endian `u64`s.
//!
//! Inputs are [`TokenOp`] records (tag `0x23`), outputs are [`Reply`] records:
//! `Init` mints once and replies with the total supply, `Transfer` replies with
//! the caller's remaining balance, `GetBalance` with the caller's balance.

use crate::codec::{CodecError, Decode, Encode, Reader, Writer};
use crate::crypto::{Digest, VerifyKey};

use super::state::{ContractState, Edit, StateDiff};
use super::{account_of, AccountId, ContractProgram, Reply};

const BALANCE_PREFIX: &[u8] = b"bal:";
const MINTED_KEY: &[u8] = b"minted";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenOp {
    Init { allocations: Vec<(AccountId, u64)> },
    Transfer { to: AccountId, amount: u64 },
    GetBalance,
}

impl Encode for TokenOp {
    const TAG: u8 = 0x23;
    fn encode_fields(&self, w: &mut Writer) {
        match self {
            TokenOp::Init { allocations } => {
                w.u8(1).u64(allocations.len() as u64);
                for (a, v) in allocations {
                    w.bytes(a.as_bytes()).u64(*v);
                }
            }
            TokenOp::Transfer { to, amount } => {
                w.u8(2).bytes(to.as_bytes()).u64(*amount);
            }
            TokenOp::GetBalance => {
                w.u8(3);
            }
        }
    }
}

impl Decode for TokenOp {
    const TAG: u8 = 0x23;
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            1 => {
                let n = r.u64()? as usize;
                let mut allocations = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    allocations.push((Digest(r.fixed::<32>("account")?), r.u64()?));
                }
                Ok(TokenOp::Init { allocations })
            }
            2 => Ok(TokenOp::Transfer {
                to: Digest(r.fixed::<32>("to")?),
                amount: r.u64()?,
            }),
            3 => Ok(TokenOp::GetBalance),
            k => Err(CodecError::invalid("token op", k.to_string())),
        }
    }
}

pub fn balance_key(account: &AccountId) -> Vec<u8> {
    let mut k = BALANCE_PREFIX.to_vec();
    k.extend_from_slice(account.as_bytes());
    k
}

pub fn balance(state: &ContractState, account: &AccountId) -> u64 {
    state
        .get(&balance_key(account))
        .and_then(|v| v.try_into().ok())
        .map(u64::from_be_bytes)
        .unwrap_or(0)
}

/// Sum of all balances, for conservation checks.
pub fn total_supply(state: &ContractState) -> u128 {
    state
        .iter_prefix(BALANCE_PREFIX)
        .filter_map(|(_, v)| v.try_into().ok().map(u64::from_be_bytes))
        .map(u128::from)
        .sum()
}

/// Supply fixed by `Init`, if it has run.
pub fn minted(state: &ContractState) -> Option<u64> {
    state
        .get(MINTED_KEY)
        .and_then(|v| v.try_into().ok())
        .map(u64::from_be_bytes)
}

pub fn balances(state: &ContractState) -> Vec<(AccountId, u64)> {
    state
        .iter_prefix(BALANCE_PREFIX)
        .filter_map(|(k, v)| {
            let acct: [u8; 32] = k[BALANCE_PREFIX.len()..].try_into().ok()?;
            Some((Digest(acct), u64::from_be_bytes(v.try_into().ok()?)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Token;

impl Token {
    fn run(&self, state: &mut ContractState, op: TokenOp, caller: &VerifyKey) -> Reply {
        let me = account_of(caller);
        match op {
            TokenOp::Init { allocations } => {
                if state.get(MINTED_KEY).is_some() {
                    return Reply::err("already initialized");
                }
                let mut total: u64 = 0;
                let mut seen = std::collections::BTreeMap::new();
                for (acct, amount) in &allocations {
                    if seen.insert(*acct, *amount).is_some() {
                        return Reply::err("duplicate account in allocation");
                    }
                    let Some(t) = total.checked_add(*amount) else {
                        return Reply::err("supply overflow");
                    };
                    total = t;
                }
                for (acct, amount) in seen {
                    state.insert(balance_key(&acct), amount.to_be_bytes().to_vec());
                }
                state.insert(MINTED_KEY.to_vec(), total.to_be_bytes().to_vec());
                Reply::ok(total)
            }
            TokenOp::Transfer { to, amount } => {
                let from_bal = balance(state, &me);
                if amount > from_bal {
                    return Reply::err("insufficient funds");
                }
                if to == me {
                    return Reply::ok(from_bal);
                }
                let to_bal = balance(state, &to);
                let Some(new_to) = to_bal.checked_add(amount) else {
                    return Reply::err("recipient balance overflow");
                };
                let new_from = from_bal - amount;
                state.insert(balance_key(&me), new_from.to_be_bytes().to_vec());
                state.insert(balance_key(&to), new_to.to_be_bytes().to_vec());
                Reply::ok(new_from)
            }
            TokenOp::GetBalance => Reply::ok(balance(state, &me)),
        }
    }
}

impl ContractProgram for Token {
    fn zero_state(&self) -> ContractState {
        ContractState::new()
    }

    fn execute(&self, state: &mut ContractState, input: &[u8], caller: &VerifyKey) -> Vec<u8> {
        match TokenOp::from_canonical(input) {
            Ok(op) => self.run(state, op, caller).encode(),
            Err(e) => Reply::err(format!("malformed input: {e}")).encode(),
        }
    }

    fn diff_unit(&self) -> usize {
        // The largest diff a single transfer can produce: two rewritten balances.
        let edit = |b: u8| Edit {
            key: balance_key(&Digest([b; 32])),
            old_hash: Some(Digest([0; 32])),
            new: Some(vec![0; 8]),
        };
        StateDiff {
            edits: vec![edit(1), edit(2)],
        }
        .to_canonical()
        .len()
            + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{diff, state::pad_to_class};
    use crate::crypto::SigKeypair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn exec(st: &mut ContractState, op: TokenOp, who: &SigKeypair) -> Reply {
        let out = Token.execute(st, &op.to_canonical(), &who.verify_key());
        Reply::from_canonical(&out).unwrap()
    }

    fn keys(n: u8) -> Vec<SigKeypair> {
        (0..n).map(|i| SigKeypair::from_seed([i + 1; 32])).collect()
    }

    #[test]
    fn transfer_and_insufficient_funds() {
        let ks = keys(2);
        let (a, b) = (
            account_of(&ks[0].verify_key()),
            account_of(&ks[1].verify_key()),
        );
        let mut st = ContractState::new();
        assert_eq!(
            exec(
                &mut st,
                TokenOp::Init {
                    allocations: vec![(a, 10), (b, 0)]
                },
                &ks[0]
            ),
            Reply::ok(10)
        );
        assert_eq!(
            exec(&mut st, TokenOp::Transfer { to: b, amount: 4 }, &ks[0]),
            Reply::ok(6)
        );
        assert_eq!((balance(&st, &a), balance(&st, &b)), (6, 4));
        let before = st.clone();
        let r = exec(&mut st, TokenOp::Transfer { to: b, amount: 11 }, &ks[0]);
        assert!(!r.ok);
        assert_eq!(st, before);
        assert!(
            !exec(
                &mut st,
                TokenOp::Init {
                    allocations: vec![]
                },
                &ks[1]
            )
            .ok
        );
        assert_eq!(st, before);
        assert_eq!(exec(&mut st, TokenOp::GetBalance, &ks[1]), Reply::ok(4));
        let out = Token.execute(&mut st, b"junk", &ks[0].verify_key());
        assert!(!Reply::from_canonical(&out).unwrap().ok);
        assert_eq!(st, before);
    }

    #[test]
    fn conservation_against_reference_model() {
        let ks = keys(6);
        let accts: Vec<_> = ks.iter().map(|k| account_of(&k.verify_key())).collect();
        let mut st = ContractState::new();
        let alloc: Vec<_> = accts.iter().map(|a| (*a, 100)).collect();
        exec(&mut st, TokenOp::Init { allocations: alloc }, &ks[0]);
        let mut model: BTreeMap<AccountId, u64> = accts.iter().map(|a| (*a, 100)).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let (i, j) = (rng.gen_range(0..6), rng.gen_range(0..6));
            let amount = rng.gen_range(0..60);
            let r = exec(
                &mut st,
                TokenOp::Transfer {
                    to: accts[j],
                    amount,
                },
                &ks[i],
            );
            let from = model[&accts[i]];
            if amount <= from {
                assert!(r.ok);
                *model.get_mut(&accts[i]).unwrap() -= amount;
                *model.get_mut(&accts[j]).unwrap() += amount;
            } else {
                assert!(!r.ok);
            }
            assert_eq!(total_supply(&st), 600);
        }
        for (a, v) in &model {
            assert_eq!(balance(&st, a), *v);
        }
    }

    #[test]
    fn transfer_diff_touches_two_records_and_pads_uniformly() {
        let ks = keys(2);
        let mut st = ContractState::new();
        let mut alloc: Vec<_> = (0..10_000u32)
            .map(|i| {
                let mut b = [0u8; 32];
                b[..4].copy_from_slice(&i.to_be_bytes());
                (Digest(b), 5)
            })
            .collect();
        alloc.push((account_of(&ks[0].verify_key()), 50));
        exec(&mut st, TokenOp::Init { allocations: alloc }, &ks[0]);
        let unit = Token.diff_unit();
        let mut lens = std::collections::BTreeSet::new();
        for to in [Digest([0; 32]), account_of(&ks[1].verify_key())] {
            let before = st.clone();
            assert!(exec(&mut st, TokenOp::Transfer { to, amount: 1 }, &ks[0]).ok);
            let d = diff(&st, &before);
            assert_eq!(d.len(), 2);
            lens.insert(pad_to_class(d.to_canonical(), unit).len());
        }
        assert_eq!(lens.into_iter().collect::<Vec<_>>(), vec![unit]);
    }

    #[test]
    fn op_round_trip() {
        for op in [
            TokenOp::Init {
                allocations: vec![(Digest([3; 32]), 7)],
            },
            TokenOp::Transfer {
                to: Digest([1; 32]),
                amount: 2,
            },
            TokenOp::GetBalance,
        ] {
            assert_eq!(TokenOp::from_canonical(&op.to_canonical()).unwrap(), op);
        }
    }
}
