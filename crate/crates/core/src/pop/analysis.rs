//! Monte Carlo estimates of false-reject and forgery rates.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::chain::{sample_exponential, PowChain};
use super::verify::{prove_publication, verify_publication, Challenge, PopParams};
use crate::crypto::Digest;

/// One row of the published parameter table, kept as metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub p: f64,
    pub n_c: usize,
    pub epsilon: f64,
    pub log2_hashes_to_forge: f64,
    pub log2_false_reject: f64,
}

pub const PUBLISHED_TABLE: [PublishedRow; 4] = [
    PublishedRow {
        p: 0.10,
        n_c: 30,
        epsilon: 2.0,
        log2_hashes_to_forge: 112.0,
        log2_false_reject: -17.0,
    },
    PublishedRow {
        p: 0.10,
        n_c: 60,
        epsilon: 2.0,
        log2_hashes_to_forge: 147.0,
        log2_false_reject: -31.0,
    },
    PublishedRow {
        p: 0.20,
        n_c: 60,
        epsilon: 1.7,
        log2_hashes_to_forge: 113.0,
        log2_false_reject: -19.0,
    },
    PublishedRow {
        p: 0.25,
        n_c: 80,
        epsilon: 1.6,
        log2_hashes_to_forge: 113.0,
        log2_false_reject: -19.0,
    },
];

/// Probability that fewer than `n_c` blocks arrive within `n_c * tau * epsilon`
/// when blocks arrive as a Poisson process with mean interval `tau`.
pub fn analytic_false_reject(n_c: usize, epsilon: f64) -> f64 {
    let lambda = n_c as f64 * epsilon;
    let mut log_term = -lambda;
    let mut sum = log_term.exp();
    for k in 1..n_c {
        log_term += lambda.ln() - (k as f64).ln();
        sum += log_term.exp();
    }
    sum
}

/// When the prover hands over its proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProverStrategy {
    /// As soon as the item has exactly `n_c` confirmations.
    Exact,
    /// At the first block from `n_c` confirmations on, up to `n_c + max_extra`,
    /// at which the proof still fits the window the prover can see.
    Adaptive { max_extra: usize },
}

/// Late delivery of the verifier's timer readings. `d1` delays the moment the
/// challenge leaves the verifier; `d2` delays delivery of `t2`, whose value is
/// fixed when it is requested.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimerDelay {
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub p: f64,
    pub n_c: usize,
    pub epsilon: f64,
    pub trials: u64,
    pub honest_rejects: u64,
    pub forged_accepts: u64,
}

impl RateEstimate {
    pub fn false_reject_rate(&self) -> f64 {
        self.honest_rejects as f64 / self.trials as f64
    }

    pub fn forgery_success_rate(&self) -> f64 {
        self.forged_accepts as f64 / self.trials as f64
    }
}

/// Arrival times, relative to when the prover starts, of the next `count` blocks.
fn arrivals(rng: &mut ChaCha20Rng, mean: f64, count: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..count)
        .map(|_| {
            t += sample_exponential(rng, mean);
            t
        })
        .collect()
}

/// Confirmations at which the prover submits, given block arrival times
/// (`times[0]` is the including block) measured from when it got the challenge.
fn submission_point(times: &[f64], params: &PopParams, strategy: ProverStrategy) -> usize {
    match strategy {
        ProverStrategy::Exact => params.n_c,
        ProverStrategy::Adaptive { max_extra } => (params.n_c..=params.n_c + max_extra)
            .find(|&j| times[j] < params.window(j))
            .unwrap_or(params.n_c),
    }
}

/// Runs one publication attempt on a chain grown from `checkpoint` with block
/// arrivals `times` and returns whether the verifier accepted.
fn attempt(
    checkpoint: &PowChain,
    params: &PopParams,
    strategy: ProverStrategy,
    delay: TimerDelay,
    times: &[f64],
    r: [u8; 32],
) -> bool {
    let t1 = 0.0;
    let start = t1 + delay.d1;
    let challenge = Challenge {
        m: Digest([0xaa; 32]),
        r,
        t1,
    };
    let j = submission_point(times, params, strategy);
    let mut chain = checkpoint.clone();
    chain.seal(vec![challenge.item()], start + times[0]);
    for &t in &times[1..=j] {
        chain.seal(Vec::new(), start + t);
    }
    let proof = prove_publication(&challenge.item(), &chain, &checkpoint.root().hash(), j)
        .expect("chain holds enough confirmations");
    let t2 = start + times[j];
    verify_publication(checkpoint.root(), &challenge, &proof, params, t2).is_ok()
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn max_extra(strategy: ProverStrategy) -> usize {
    match strategy {
        ProverStrategy::Exact => 0,
        ProverStrategy::Adaptive { max_extra } => max_extra,
    }
}

/// Estimates rates for several slack factors over the same sampled block
/// arrivals, so differences between them come from `epsilon` alone.
pub fn estimate_rates_crn(
    base: PopParams,
    epsilons: &[f64],
    p: f64,
    trials: u64,
    seed: u64,
    strategy: ProverStrategy,
    difficulty: u32,
) -> Vec<RateEstimate> {
    let checkpoint = PowChain::genesis(difficulty);
    let blocks = 1 + base.n_c + max_extra(strategy);
    let mut out: Vec<RateEstimate> = epsilons
        .iter()
        .map(|&epsilon| RateEstimate {
            p,
            n_c: base.n_c,
            epsilon,
            trials,
            honest_rejects: 0,
            forged_accepts: 0,
        })
        .collect();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, 2 * trial);
        let honest = arrivals(&mut rng, base.tau, blocks);
        let mut r = [0u8; 32];
        rand::RngCore::fill_bytes(&mut rng, &mut r);
        let mut arng = trial_rng(seed, 2 * trial + 1);
        let forged = (p > 0.0).then(|| arrivals(&mut arng, base.tau / p, blocks));
        for est in out.iter_mut() {
            let params = PopParams {
                epsilon: est.epsilon,
                ..base
            };
            if !attempt(
                &checkpoint,
                &params,
                strategy,
                TimerDelay::default(),
                &honest,
                r,
            ) {
                est.honest_rejects += 1;
            }
            if let Some(f) = &forged {
                if attempt(&checkpoint, &params, strategy, TimerDelay::default(), f, r) {
                    est.forged_accepts += 1;
                }
            }
        }
    }
    out
}

/// False-reject rate of an honest prover on the main chain (mean interval
/// `tau`) and forgery rate of an adversary feeding an isolated verifier its own
/// chain (mean interval `tau / p`).
pub fn estimate_rates(
    params: PopParams,
    p: f64,
    trials: u64,
    seed: u64,
    strategy: ProverStrategy,
    difficulty: u32,
) -> RateEstimate {
    estimate_rates_crn(
        params,
        &[params.epsilon],
        p,
        trials,
        seed,
        strategy,
        difficulty,
    )[0]
}

/// Verdict of one honest attempt under a given timer delay, for delay-soundness checks.
pub fn honest_verdict_with_delay(
    params: PopParams,
    seed: u64,
    trial: u64,
    strategy: ProverStrategy,
    delay: TimerDelay,
    difficulty: u32,
) -> bool {
    let checkpoint = PowChain::genesis(difficulty);
    let mut rng = trial_rng(seed, 2 * trial);
    let times = arrivals(&mut rng, params.tau, 1 + params.n_c + max_extra(strategy));
    let mut r = [0u8; 32];
    rand::RngCore::fill_bytes(&mut rng, &mut r);
    attempt(&checkpoint, &params, strategy, delay, &times, r)
}

/// Verdicts of one trial under a timer delay: the honest prover on the main
/// chain, and an adversary with hash power `p` on a private chain.
pub fn verdicts_with_delay(
    params: PopParams,
    p: f64,
    seed: u64,
    trial: u64,
    strategy: ProverStrategy,
    delay: TimerDelay,
    difficulty: u32,
) -> (bool, bool) {
    let checkpoint = PowChain::genesis(difficulty);
    let blocks = 1 + params.n_c + max_extra(strategy);
    let mut rng = trial_rng(seed, 2 * trial);
    let honest = arrivals(&mut rng, params.tau, blocks);
    let mut r = [0u8; 32];
    rand::RngCore::fill_bytes(&mut rng, &mut r);
    let forged = p > 0.0 && {
        let mut arng = trial_rng(seed, 2 * trial + 1);
        let f = arrivals(&mut arng, params.tau / p, blocks);
        attempt(&checkpoint, &params, strategy, delay, &f, r)
    };
    (
        attempt(&checkpoint, &params, strategy, delay, &honest, r),
        forged,
    )
}

pub fn sweep_csv(rows: &[RateEstimate]) -> String {
    let mut s = String::from("p,n_c,epsilon,trials,false_reject_rate,forgery_success_rate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            r.p,
            r.n_c,
            r.epsilon,
            r.trials,
            r.false_reject_rate(),
            r.forgery_success_rate()
        ));
    }
    s
}
