//! Counter-based random streams: one ChaCha20 key per master seed, one
//! stream per (run, purpose, index), so adding runs never reshuffles the
//! earlier ones and the weight estimate never touches the data stream.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Training = 0,
    NewTask = 1,
    Init = 2,
    MonteCarlo = 3,
    Surrogate = 4,
}

/// Run index used for draws that are shared by all runs.
pub const SHARED_RUN: u64 = u32::MAX as u64;

pub fn stream(seed: u64, run: u64, purpose: Purpose, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((run << 24) | ((purpose as u64) << 16) | (index & 0xffff));
    rng
}
