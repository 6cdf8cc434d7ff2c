use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::groups::PreambleSet;

/// Seeded randomness, split into independent substreams so that, e.g.,
/// enabling loss draws cannot shift which preambles get picked.
#[derive(Debug, Clone)]
pub struct RngStream {
    preamble: ChaCha8Rng,
    backoff: ChaCha8Rng,
    loss: ChaCha8Rng,
}

const PREAMBLE_STREAM: u64 = 0;
const BACKOFF_STREAM: u64 = 1;
const LOSS_STREAM: u64 = 2;

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let substream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        RngStream {
            preamble: substream(PREAMBLE_STREAM),
            backoff: substream(BACKOFF_STREAM),
            loss: substream(LOSS_STREAM),
        }
    }

    /// One message-loss draw: true with probability p.
    pub fn lost(&mut self, p: f64) -> bool {
        self.loss.gen::<f64>() < p
    }

    /// Uniform preamble pick from a contention pool.
    pub fn preamble_from(&mut self, pool: &PreambleSet) -> Result<u16, SimError> {
        if pool.len == 0 {
            return Err(SimError::EmptySetError("empty preamble pool".into()));
        }
        Ok(pool.start + self.preamble.gen_range(0..pool.len))
    }

    /// Uniform element of a nonempty slice, from the preamble substream.
    pub fn uniform_choice<'a, T>(&mut self, set: &'a [T]) -> Result<&'a T, SimError> {
        if set.is_empty() {
            return Err(SimError::EmptySetError("empty candidate set".into()));
        }
        Ok(&set[self.preamble.gen_range(0..set.len())])
    }

    /// Backoff delay, uniform over 0..=max subframes.
    pub fn backoff(&mut self, max: u64) -> u64 {
        self.backoff.gen_range(0..=max)
    }
}
