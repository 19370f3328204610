//! Seeded, platform-independent random streams.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate. ChaCha8 produces the same stream
/// for a given seed on every platform.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits `0..n` into consecutive batches of at most `batch_size` indices after a
/// shuffle. `batch_size >= n` yields one unshuffled full batch.
pub fn batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if batch_size >= n || batch_size == 0 {
        return vec![idx];
    }
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
