use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, NEGATIVE};

const REJECTION_TRIES: usize = 32;

/// Uniform draw from `candidates` minus `positives`.
///
/// Rejection sampling first; if the user covers most of the pool the
/// complement is materialized, so the draw stays exactly uniform.
pub fn sample_negative<R: Rng + ?Sized>(
    rng: &mut R,
    user: u32,
    candidates: &[u32],
    positives: &HashSet<u32>,
) -> Result<u32> {
    if candidates.is_empty() {
        return Err(Error::SamplingExhausted(user));
    }
    for _ in 0..REJECTION_TRIES {
        let item = candidates[rng.random_range(0..candidates.len())];
        if !positives.contains(&item) {
            return Ok(item);
        }
    }
    let rest: Vec<u32> = candidates.iter().copied().filter(|i| !positives.contains(i)).collect();
    if rest.is_empty() {
        return Err(Error::SamplingExhausted(user));
    }
    Ok(rest[rng.random_range(0..rest.len())])
}

/// Negative sampler whose stream is a pure function of (seed, epoch).
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    rng: ChaCha8Rng,
    candidates: Vec<u32>,
}

impl NegativeSampler {
    /// `candidates` must be sorted; the training loop passes the warm items.
    pub fn new(seed: u64, epoch: u64, candidates: Vec<u32>) -> Self {
        NegativeSampler { rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, NEGATIVE, epoch)), candidates }
    }

    pub fn sample(&mut self, user: u32, positives: &HashSet<u32>) -> Result<u32> {
        sample_negative(&mut self.rng, user, &self.candidates, positives)
    }
}
