//! Benchmark fixtures: seeded inputs shared by the criterion benches.

use agtfuse_core::data::{generate_synthetic, SyntheticSpec};
use agtfuse_core::{Dataset, EmotionLabel, SplitMix64, VoteTriple, Widths};

/// Default-width synthetic data with `per_class` samples of every class.
pub fn dataset(per_class: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        counts: [per_class; 6],
        widths: Widths::uniform(64),
        seed,
        ..Default::default()
    })
    .expect("valid spec")
}

pub fn labels(n: usize, seed: u64) -> Vec<EmotionLabel> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| EmotionLabel::ALL[(rng.next_unit() * 6.0) as usize % 6])
        .collect()
}

pub fn triples(n: usize, seed: u64) -> Vec<VoteTriple> {
    let a = labels(n, seed);
    let b = labels(n, seed + 1);
    let c = labels(n, seed + 2);
    (0..n)
        .map(|i| VoteTriple::new(format!("{i:06}"), a[i], b[i], c[i]))
        .collect()
}
