use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Review;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Review>,
    pub valid: Vec<Review>,
    pub test: Vec<Review>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Shuffle and partition reviews.
///
/// The permutation is a Fisher-Yates shuffle driven by ChaCha8 seeded with
/// `seed` (`ChaCha8Rng::seed_from_u64`), which is platform independent.
/// Partition sizes are `round(n * train)`, `round(n * valid)` and the rest.
pub fn split(reviews: &[Review], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let SplitRatios { train, valid, test } = ratios;
    if [train, valid, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (train + valid + test - 1.0).abs() > 1e-9
    {
        return Err(Error::config(format!(
            "split ratios must be in [0, 1] and sum to 1, got {train}/{valid}/{test}"
        )));
    }
    let n = reviews.len();
    if n < 3 {
        return Err(Error::data(format!("need at least 3 reviews to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * train).round() as usize;
    let n_valid = (((n as f64) * valid).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| reviews[i].clone()).collect::<Vec<_>>();
    Ok(CorpusSplit {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
        seed,
        ratios,
    })
}
