//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed on a master seed plus a static
//! role tag and integer coordinates, never on execution order, so results are
//! reproducible regardless of scheduling or worker count. The mixer is
//! SplitMix64, implemented here so the derivation never shifts under
//! dependency upgrades.

/// Stream roles. The values are arbitrary but frozen.
#[derive(Clone, Copy, Debug)]
pub enum StreamTag {
    Weights = 0x57454947,
    Context = 0x434f4e54,
    OrderPool = 0x504f4f4c,
    OrderDraw = 0x44524157,
    GaussNoise = 0x4e4f4953,
    RangeFactor = 0x52414e47,
}

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, tag, parts)`.
pub fn derive_seed(master: u64, tag: StreamTag, parts: &[u64]) -> u64 {
    let mut acc = splitmix(master ^ (tag as u64).wrapping_mul(GOLDEN));
    for &p in parts {
        acc = splitmix(acc ^ p);
    }
    acc
}
