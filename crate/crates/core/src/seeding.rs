//! Deterministic derivation of per-task RNG seeds.
//!
//! Parallel work units (tree training, EM restarts, CV folds) each get a
//! stream derived from the run seed and their task coordinates, so results
//! never depend on scheduling.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Mix a base seed with task coordinates into an independent stream seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for (i, t) in tags.iter().enumerate() {
        acc = splitmix64(acc ^ splitmix64(t.wrapping_add(i as u64 + 1)));
    }
    acc
}
