//! Labeled random sub-streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `label` at coordinates `path` under `root`.
pub fn derive_seed(root: u64, label: &str, path: &[u64]) -> u64 {
    let mut h = splitmix(root);
    for b in label.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &p in path {
        h = splitmix(h ^ p);
    }
    h
}

pub fn stream(root: u64, label: &str, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, path))
}
