use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Stratified three-way split. Each label (and the unlabeled group) is
/// shuffled independently and cut at `round(f_train * n)` and
/// `round(f_val * n)`; the test part takes the remainder. Partitions keep the
/// input order of their samples.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidParameter(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 7];
    for (i, s) in dataset.samples().iter().enumerate() {
        strata[s.label.map_or(6, |l| l.index())].push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for mut idx in strata {
        let n = idx.len();
        idx.shuffle(&mut rng);
        let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        parts[0].extend_from_slice(&idx[..n_train]);
        parts[1].extend_from_slice(&idx[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&idx[n_train + n_val..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Split {
        train: dataset.subset(&parts[0]),
        val: dataset.subset(&parts[1]),
        test: dataset.subset(&parts[2]),
    })
}
