//! Seeded resampling of per-record scores.
//!
//! The generator is PCG64 (128-bit LCG state, XSL-RR output) created as
//! `Pcg64::new(seed as u128, BOOTSTRAP_STREAM)`: increment `(stream << 1) | 1`,
//! initial state `(seed + increment)` advanced once. Each `next_u64` advances
//! the state and then applies XSL-RR to the new state. A draw from `0..n`
//! takes the high 64 bits of `next_u64() * n` computed in 128 bits. Sampling without
//! replacement is a partial Fisher-Yates shuffle over `0..len` using the same
//! draws, with `n` shrinking by one per pick.

use rand_core::RngCore;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::metrics::{prf, RecordScore};
use super::StatsError;

pub const BOOTSTRAP_STREAM: u128 = 0xa02b_dbf7_bb3c_0a7a_c28f_a16a_64ab_f96;
pub const DEFAULT_SAMPLE_SIZE: usize = 20;
pub const DEFAULT_RESAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub sample_size: usize,
    pub resamples: usize,
    pub seed: u64,
    pub with_replacement: bool,
}

impl BootstrapConfig {
    pub fn new(seed: u64) -> Self {
        BootstrapConfig {
            sample_size: DEFAULT_SAMPLE_SIZE,
            resamples: DEFAULT_RESAMPLES,
            seed,
            with_replacement: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    F1,
    FixRate,
}

impl Statistic {
    /// Value over a resample. Rates with an empty denominator are 0.
    pub fn compute(self, sample: &[&RecordScore]) -> f64 {
        let count = |f: fn(&RecordScore) -> bool| sample.iter().filter(|s| f(s)).count() as u64;
        let misuses = count(|s| s.misuse);
        match self {
            Statistic::F1 => prf(count(|s| s.true_positive), count(|s| s.flagged), misuses).f1,
            Statistic::FixRate => {
                if misuses == 0 {
                    0.0
                } else {
                    count(|s| s.fixed) as f64 / misuses as f64
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::F1 => "f1",
            Statistic::FixRate => "fix_rate",
        }
    }
}

fn below(rng: &mut Pcg64, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Index sets for every resample, in order.
pub fn resample_indices(len: usize, config: &BootstrapConfig) -> Result<Vec<Vec<usize>>, StatsError> {
    if len == 0 {
        return Err(StatsError::Bootstrap("no records to resample".into()));
    }
    if config.sample_size == 0 {
        return Err(StatsError::Bootstrap("sample size must be at least 1".into()));
    }
    if !config.with_replacement && config.sample_size > len {
        return Err(StatsError::Bootstrap(format!(
            "cannot draw {} of {len} records without replacement",
            config.sample_size
        )));
    }
    let mut rng = Pcg64::new(config.seed as u128, BOOTSTRAP_STREAM);
    Ok((0..config.resamples)
        .map(|_| {
            if config.with_replacement {
                (0..config.sample_size).map(|_| below(&mut rng, len)).collect()
            } else {
                let mut pool: Vec<usize> = (0..len).collect();
                for i in 0..config.sample_size {
                    let j = i + below(&mut rng, len - i);
                    pool.swap(i, j);
                }
                pool.truncate(config.sample_size);
                pool
            }
        })
        .collect())
}

/// One statistic value per resample.
pub fn bootstrap(
    scores: &[RecordScore],
    config: &BootstrapConfig,
    statistic: Statistic,
) -> Result<Vec<f64>, StatsError> {
    Ok(resample_indices(scores.len(), config)?
        .iter()
        .map(|idx| {
            let sample: Vec<&RecordScore> = idx.iter().map(|&i| &scores[i]).collect();
            statistic.compute(&sample)
        })
        .collect())
}
