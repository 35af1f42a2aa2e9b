use rand::{CryptoRng, RngCore};
use thiserror::Error;

use super::chain::{PowBlock, PowChain};
use crate::canonical_record;
use crate::crypto::{hash_canonical, Digest};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopParams {
    /// Confirmations required on top of the including block.
    pub n_c: usize,
    /// Expected block interval, simulated seconds.
    pub tau: f64,
    /// Slack factor, > 1.
    pub epsilon: f64,
}

impl PopParams {
    pub fn new(n_c: usize, tau: f64, epsilon: f64) -> Self {
        assert!(n_c >= 1, "n_c must be at least 1");
        assert!(epsilon > 1.0, "epsilon must exceed 1");
        PopParams { n_c, tau, epsilon }
    }

    /// Time allowed for a proof with `confirmations` blocks after the item.
    pub fn window(&self, confirmations: usize) -> f64 {
        confirmations as f64 * self.tau * self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Published {
    m: Digest,
    r: Vec<u8>,
}

canonical_record!(Published, 0x71, { m, r });

/// What the verifier hands the prover, plus the timestamp it drew first.
#[derive(Debug, Clone, PartialEq)]
pub struct Challenge {
    pub m: Digest,
    pub r: [u8; 32],
    pub t1: f64,
}

impl Challenge {
    /// The digest the prover must get into a block.
    pub fn item(&self) -> Digest {
        hash_canonical(&Published {
            m: self.m,
            r: self.r.to_vec(),
        })
    }
}

/// `blocks[0]` is the checkpoint, followed by `B_1..B_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopProof {
    pub blocks: Vec<PowBlock>,
}

impl PopProof {
    pub fn n(&self) -> usize {
        self.blocks.len().saturating_sub(1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopReject {
    #[error("proof does not start at the verifier's checkpoint")]
    WrongCheckpoint,
    #[error("block {0} does not link to its predecessor")]
    BrokenLink(usize),
    #[error("item is not in any block of the proof")]
    ItemMissing,
    #[error("only {have} confirmations, need {need}")]
    TooFewConfirmations { have: usize, need: usize },
    #[error("block {0} is below the checkpoint difficulty")]
    LowDifficulty(usize),
    #[error("proof took {elapsed:.3}s, allowed {allowed:.3}s")]
    TooSlow { elapsed: f64, allowed: f64 },
    #[error("item not yet confirmed {need} times")]
    NotReady { need: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub confirmations: usize,
    pub new_checkpoint: PowBlock,
}

/// The verifier's decision. Pure in its arguments.
pub fn verify_publication(
    checkpoint: &PowBlock,
    challenge: &Challenge,
    proof: &PopProof,
    params: &PopParams,
    t2: f64,
) -> Result<Accepted, PopReject> {
    let Some(first) = proof.blocks.first() else {
        return Err(PopReject::WrongCheckpoint);
    };
    if first != checkpoint {
        return Err(PopReject::WrongCheckpoint);
    }
    for (j, w) in proof.blocks.windows(2).enumerate() {
        if w[1].prev != w[0].hash() {
            return Err(PopReject::BrokenLink(j + 1));
        }
    }
    let item = challenge.item();
    let i = proof
        .blocks
        .iter()
        .skip(1)
        .position(|b| b.payload.contains(&item))
        .map(|p| p + 1)
        .ok_or(PopReject::ItemMissing)?;
    let n = proof.n();
    if n - i < params.n_c {
        return Err(PopReject::TooFewConfirmations {
            have: n - i,
            need: params.n_c,
        });
    }
    let delta = checkpoint.difficulty as u32;
    for (j, b) in proof.blocks.iter().enumerate().skip(1) {
        if b.difficulty < checkpoint.difficulty || !b.meets(delta) {
            return Err(PopReject::LowDifficulty(j));
        }
    }
    let elapsed = t2 - challenge.t1;
    let allowed = params.window(n - i);
    if elapsed < allowed {
        Ok(Accepted {
            confirmations: n - i,
            new_checkpoint: proof.blocks[n].clone(),
        })
    } else {
        Err(PopReject::TooSlow { elapsed, allowed })
    }
}

/// A verifier that advances its checkpoint on every accepted proof.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub checkpoint: PowBlock,
    pub params: PopParams,
}

impl Verifier {
    pub fn new(checkpoint: PowBlock, params: PopParams) -> Self {
        Verifier { checkpoint, params }
    }

    /// `t1` is the timer's reading, which may reach the verifier late.
    pub fn challenge<R: RngCore + CryptoRng>(&self, m: Digest, t1: f64, rng: &mut R) -> Challenge {
        let mut r = [0u8; 32];
        rng.fill_bytes(&mut r);
        Challenge { m, r, t1 }
    }

    pub fn verify(
        &mut self,
        challenge: &Challenge,
        proof: &PopProof,
        t2: f64,
    ) -> Result<usize, PopReject> {
        let a = verify_publication(&self.checkpoint, challenge, proof, &self.params, t2)?;
        self.checkpoint = a.new_checkpoint;
        Ok(a.confirmations)
    }
}

/// The subchain from `checkpoint` through `confirmations` blocks past the one
/// holding `item`.
pub fn prove_publication(
    item: &Digest,
    chain: &PowChain,
    checkpoint: &Digest,
    confirmations: usize,
) -> Result<PopProof, PopReject> {
    let start = chain
        .blocks
        .iter()
        .position(|b| b.hash() == *checkpoint)
        .ok_or(PopReject::WrongCheckpoint)?;
    let i = chain.blocks[start + 1..]
        .iter()
        .position(|b| b.payload.contains(item))
        .map(|p| p + start + 1)
        .ok_or(PopReject::NotReady {
            need: confirmations,
        })?;
    let end = i + confirmations;
    if end >= chain.blocks.len() {
        return Err(PopReject::NotReady {
            need: confirmations,
        });
    }
    Ok(PopProof {
        blocks: chain.blocks[start..=end].to_vec(),
    })
}
