//! Independent random streams derived from one run seed.

/// What a stream is used for. Evaluation traces depend only on the run seed,
/// so every mode run with that seed is scored on the same requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Training = 1,
    Evaluation = 2,
    Oracle = 3,
    Agent = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index)
}
