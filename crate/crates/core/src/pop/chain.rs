use rand::Rng;

use crate::canonical_record;
use crate::codec::Nested;
use crate::crypto::{hash_canonical, Digest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowBlock {
    pub prev: Digest,
    pub payload: Vec<Digest>,
    pub nonce: u64,
    pub difficulty: u64,
    pub mined_at_us: u64,
}

canonical_record!(PowBlock, 0x70, { prev, payload, nonce, difficulty, mined_at_us });
impl Nested for PowBlock {}

impl PowBlock {
    /// Grinds nonces until the block hash has `difficulty` leading zero bits.
    pub fn mine(prev: Digest, payload: Vec<Digest>, difficulty: u32, mined_at: f64) -> PowBlock {
        let mut b = PowBlock {
            prev,
            payload,
            nonce: 0,
            difficulty: difficulty as u64,
            mined_at_us: (mined_at * 1e6).round() as u64,
        };
        while b.hash().leading_zero_bits() < difficulty {
            b.nonce += 1;
        }
        b
    }

    pub fn hash(&self) -> Digest {
        hash_canonical(self)
    }

    /// Whether the hash actually meets `difficulty`, independent of the claimed field.
    pub fn meets(&self, difficulty: u32) -> bool {
        self.hash().leading_zero_bits() >= difficulty
    }

    pub fn mined_at(&self) -> f64 {
        self.mined_at_us as f64 / 1e6
    }
}

/// A linear chain rooted at a checkpoint block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowChain {
    pub difficulty: u32,
    pub blocks: Vec<PowBlock>,
}

impl PowChain {
    pub fn genesis(difficulty: u32) -> PowChain {
        PowChain {
            difficulty,
            blocks: vec![PowBlock::mine(Digest::ZERO, Vec::new(), difficulty, 0.0)],
        }
    }

    /// A chain whose first block is `root`, for forks and proofs.
    pub fn from_root(root: PowBlock, difficulty: u32) -> PowChain {
        PowChain {
            difficulty,
            blocks: vec![root],
        }
    }

    pub fn tip(&self) -> &PowBlock {
        self.blocks.last().expect("chain has a root")
    }

    pub fn root(&self) -> &PowBlock {
        &self.blocks[0]
    }

    pub fn height(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn seal(&mut self, payload: Vec<Digest>, now: f64) -> &PowBlock {
        let b = PowBlock::mine(self.tip().hash(), payload, self.difficulty, now);
        self.blocks.push(b);
        self.tip()
    }

    pub fn position_of(&self, item: &Digest) -> Option<usize> {
        self.blocks.iter().position(|b| b.payload.contains(item))
    }
}

/// Simulated seconds. Never reads a wall clock.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn at(now: f64) -> Self {
        SimClock { now }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, dt: f64) {
        assert!(dt >= 0.0, "time only moves forward");
        self.now += dt;
    }
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -mean * u.ln()
}

/// Honest network and adversary mining against each other. The honest network
/// extends the public chain; the adversary extends a private fork.
#[derive(Debug, Clone)]
pub struct MiningSim {
    pub public: PowChain,
    pub private: PowChain,
    pub clock: SimClock,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Miner {
    Honest,
    Adversary,
}

impl MiningSim {
    pub fn new(checkpoint: PowBlock, difficulty: u32, tau: f64) -> Self {
        MiningSim {
            public: PowChain::from_root(checkpoint.clone(), difficulty),
            private: PowChain::from_root(checkpoint, difficulty),
            clock: SimClock::default(),
            tau,
        }
    }

    /// Advances to the next block arrival. Arrivals are Poisson with rate
    /// `(1 - p) / tau` for the honest network and `p / tau` for the adversary.
    pub fn mine_step<R: Rng + ?Sized>(
        &mut self,
        p: f64,
        rng: &mut R,
        payload: Vec<Digest>,
    ) -> Miner {
        assert!((0.0..=1.0).contains(&p));
        if p >= 1.0 {
            return self.mine_adversary(rng, payload, 1.0);
        }
        let dt = sample_exponential(rng, self.tau);
        self.clock.advance(dt);
        if rng.gen_bool(p) {
            self.private.seal(payload, self.clock.now());
            Miner::Adversary
        } else {
            self.public.seal(payload, self.clock.now());
            Miner::Honest
        }
    }

    fn mine_adversary<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        payload: Vec<Digest>,
        p: f64,
    ) -> Miner {
        self.clock.advance(sample_exponential(rng, self.tau / p));
        self.private.seal(payload, self.clock.now());
        Miner::Adversary
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mined_blocks_meet_difficulty_and_link() {
        let mut c = PowChain::genesis(8);
        for i in 0..20 {
            c.seal(vec![Digest([i; 32])], i as f64);
        }
        for w in c.blocks.windows(2) {
            assert_eq!(w[1].prev, w[0].hash());
            assert!(w[1].meets(8));
        }
        assert_eq!(c.position_of(&Digest([3; 32])), Some(4));
    }

    #[test]
    fn adversary_with_no_power_mines_nothing() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut sim = MiningSim::new(PowChain::genesis(2).root().clone(), 2, 1.0);
        for _ in 0..500 {
            assert_eq!(sim.mine_step(0.0, &mut rng, vec![]), Miner::Honest);
        }
        assert_eq!(sim.private.height(), 0);
    }

    #[test]
    fn mean_interarrival_close_to_tau() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let tau = 1.0;
        let mut sim = MiningSim::new(PowChain::genesis(1).root().clone(), 1, tau);
        let n = 10_000;
        for _ in 0..n {
            sim.mine_step(0.0, &mut rng, vec![]);
        }
        let mean = sim.clock.now() / n as f64;
        assert!((mean - tau).abs() < 0.05 * tau, "mean {mean}");
    }
}
