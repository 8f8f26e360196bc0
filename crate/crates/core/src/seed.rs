//! Derivation of independent sub-seeds from one base seed.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base`, a stream tag and an index into a new seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index)
}

pub(crate) const SPLIT: u64 = 0x5350_4c49;
pub(crate) const USER_INIT: u64 = 0x5553_4552;
pub(crate) const ITEM_INIT: u64 = 0x4954_454d;
pub(crate) const TRAIN: u64 = 0x0054_524e;
pub(crate) const NEGATIVE: u64 = 0x004e_4547;
pub(crate) const FALLBACK: u64 = 0x4641_4c4c;
