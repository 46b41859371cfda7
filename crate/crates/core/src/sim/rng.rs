//! Seed derivation and normal variates.
//!
//! Every replication seed is `splitmix64(master + GOLDEN * (rep + 1))`, and
//! each random stream inside a replication (design, support, noise) is keyed
//! by `splitmix64(rep_seed ^ tag)`. Results therefore do not depend on the
//! order in which replications are executed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub const DESIGN_STREAM: u64 = 0x6465_7369_676e_0001;
pub const TRUTH_STREAM: u64 = 0x7472_7574_6800_0002;
pub const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0003;
pub const BASIS_STREAM: u64 = 0x6261_7369_7300_0004;

/// The SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(master: u64, rep: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(rep.wrapping_add(1))))
}

pub fn stream_seed(rep_seed: u64, tag: u64) -> u64 {
    splitmix64(rep_seed ^ tag)
}

pub fn stream(rep_seed: u64, tag: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(stream_seed(rep_seed, tag))
}

/// Standard normal variates by the Box–Muller transform.
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        NormalStream { rng, spare: None }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}
