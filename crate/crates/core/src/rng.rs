//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! base seed and a stream id, so replications can run in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for stage `stage` of replication `replication` at sweep point `point`.
pub fn stream_id(point: usize, replication: usize, stage: u8) -> u64 {
    ((point as u64) << 40) | ((replication as u64) << 8) | stage as u64
}

/// A fresh base seed for one stage of one replication.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).gen()
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_index<F: Real, R: Rng + ?Sized>(rng: &mut R, row: &[F]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in row.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
