//! Hierarchical seed derivation.
//!
//! A single top-level seed is expanded into independent per-stage seeds so
//! that each stage can be re-run on its own and still reproduce the same
//! bytes as a full pipeline run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Split,
    Folds,
    Train,
    Init,
    Shuffle,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Synth => 0x5359_4e54_4800_0001,
            Stage::Split => 0x5350_4c49_5400_0002,
            Stage::Folds => 0x464f_4c44_5300_0003,
            Stage::Train => 0x5452_4149_4e00_0004,
            Stage::Init => 0x494e_4954_0000_0005,
            Stage::Shuffle => 0x5348_5546_0000_0006,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `stage` derived from `seed`.
pub fn derive(seed: u64, stage: Stage) -> u64 {
    splitmix64(splitmix64(seed) ^ stage.tag())
}

/// Seed for the `index`-th member of a family (folds, cells, ...).
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
