//! Counter-based random streams.
//!
//! A [`RngStream`] is an identity, not a generator: `(master_seed, stream_id)`
//! selects one ChaCha8 key/nonce pair. Streams for a particle at a step are
//! derived by mixing purpose, iteration, step and particle index into the
//! stream id, so the draws a particle sees never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    DriftSamples = 2,
    EulerNoise = 3,
    SharedBatch = 4,
    Context = 5,
    JointBatch = 6,
    Value = 7,
    Sweep = 8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    /// Child stream keyed by `key`. Derivation is a pure function of the parent and key.
    pub fn child(self, key: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(GOLDEN))),
        }
    }

    pub fn purpose(self, purpose: Purpose) -> Self {
        self.child(purpose as u64)
    }

    /// Stream for `(purpose, iteration, step, particle)`.
    pub fn at(self, purpose: Purpose, iteration: usize, step: usize, particle: usize) -> Self {
        self.purpose(purpose)
            .child(iteration as u64)
            .child(step as u64)
            .child(particle as u64)
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Fills `out` with independent standard normal draws.
pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
