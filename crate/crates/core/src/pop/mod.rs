//! Proof of publication against a simulated proof-of-work chain.
//!
//! A verifier holding only a checkpoint block and a timer that may answer late
//! accepts that an item is published once it sees a chain of sufficient
//! difficulty burying the item under `n_c` blocks, produced within
//! `(n - i) * tau * epsilon` simulated seconds of the challenge.

pub mod analysis;
pub mod chain;
pub mod verify;

pub use analysis::{
    analytic_false_reject, estimate_rates, estimate_rates_crn, honest_verdict_with_delay,
    sweep_csv, verdicts_with_delay, ProverStrategy, PublishedRow, RateEstimate, TimerDelay,
    PUBLISHED_TABLE,
};
pub use chain::{sample_exponential, Miner, MiningSim, PowBlock, PowChain, SimClock};
pub use verify::{
    prove_publication, verify_publication, Accepted, Challenge, PopParams, PopProof, PopReject,
    Verifier,
};
