//! Dunn's pairwise rank test with Bonferroni adjustment.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnPair {
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Mid-ranks (1-based) of `values`, ties sharing the average rank, plus the
/// sizes of the tie groups.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// All pairs `i < j` in row-major order.
pub fn dunn_test(groups: &[Vec<f64>]) -> Result<Vec<DunnPair>, StatsError> {
    if let Some((index, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(StatsError::GroupTooSmall {
            index,
            size: g.len(),
        });
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = pooled.len() as f64;
    let (ranks, ties) = mid_ranks(&pooled);
    let tie_term = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (12.0 * (n - 1.0));
    let spread = n * (n + 1.0) / 12.0 - tie_term;

    let mut means = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        means.push(ranks[offset..offset + g.len()].iter().sum::<f64>() / g.len() as f64);
        offset += g.len();
    }

    let k = groups.len();
    let comparisons = (k * (k.saturating_sub(1)) / 2) as f64;
    let norm = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let denom = spread * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64);
            let (z, p_raw) = if denom <= 0.0 {
                (0.0, 1.0)
            } else {
                let z = (means[i] - means[j]) / denom.sqrt();
                (z, (2.0 * norm.sf(z.abs())).min(1.0))
            };
            let p_adjusted = (p_raw * comparisons).min(1.0);
            out.push(DunnPair {
                i,
                j,
                z,
                p_raw,
                p_adjusted,
                significant: p_adjusted < ALPHA,
            });
        }
    }
    Ok(out)
}
