use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::domain::Dataset;

/// Snippet id to whether the model's explanation correctly describes the misuse.
pub type Adjudication = BTreeMap<String, bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdjudicationMode {
    /// A true flag counts only with a valid explanation on file.
    #[default]
    Strict,
    /// Every flag on a misuse counts.
    Raw,
}

impl std::str::FromStr for AdjudicationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(AdjudicationMode::Strict),
            "raw" => Ok(AdjudicationMode::Raw),
            _ => Err(format!("unknown adjudication mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub flagged: u64,
    pub total_misuses: u64,
    pub total_records: u64,
}

impl ConfusionCounts {
    pub fn validate(&self) -> Result<(), StatsError> {
        let bad = |m: &str| Err(StatsError::InvalidCounts(format!("{m}: {self:?}")));
        if self.tp > self.flagged {
            return bad("tp exceeds flagged");
        }
        if self.tp > self.total_misuses {
            return bad("tp exceeds total misuses");
        }
        if self.total_misuses > self.total_records {
            return bad("total misuses exceed total records");
        }
        Ok(())
    }

    pub fn from_scores(scores: &[RecordScore]) -> Self {
        let n = |f: fn(&RecordScore) -> bool| scores.iter().filter(|s| f(s)).count() as u64;
        ConfusionCounts {
            tp: n(|s| s.true_positive),
            flagged: n(|s| s.flagged),
            total_misuses: n(|s| s.misuse),
            total_records: scores.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision over flagged records, recall over all misuses, and their
/// harmonic mean. Precision is 0 when nothing was flagged.
pub fn detection_metrics(counts: &ConfusionCounts) -> Result<DetectionMetrics, StatsError> {
    if counts.total_misuses == 0 {
        return Err(StatsError::EmptyDataset);
    }
    counts.validate()?;
    Ok(prf(counts.tp, counts.flagged, counts.total_misuses))
}

/// Same as [`detection_metrics`] but total: recall is 0 when there are no misuses.
pub(crate) fn prf(tp: u64, flagged: u64, misuses: u64) -> DetectionMetrics {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, flagged);
    let recall = ratio(tp, misuses);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionMetrics {
        precision,
        recall,
        f1,
    }
}

pub fn fix_rate(correct_patches: u64, total_misuses: u64) -> Result<f64, StatsError> {
    if total_misuses == 0 {
        return Err(StatsError::EmptyDataset);
    }
    if correct_patches > total_misuses {
        return Err(StatsError::InvalidCounts(format!(
            "{correct_patches} correct patches for {total_misuses} misuses"
        )));
    }
    Ok(correct_patches as f64 / total_misuses as f64)
}

/// One record's contribution to the confusion counts and the fix rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordScore {
    pub misuse: bool,
    pub flagged: bool,
    pub true_positive: bool,
    pub fixed: bool,
}

/// Scores every dataset record, in dataset order.
///
/// `flagged` holds the ids answered "no"; `fixed` the ids whose patch was
/// validated. In STRICT mode every flagged misuse needs an adjudication entry.
pub fn score_records(
    dataset: &Dataset,
    flagged: &BTreeSet<String>,
    fixed: &BTreeSet<String>,
    adjudications: Option<&Adjudication>,
    mode: AdjudicationMode,
) -> Result<Vec<RecordScore>, StatsError> {
    let mut missing = Vec::new();
    let scores = dataset
        .records
        .iter()
        .map(|r| {
            let misuse = r.is_misuse();
            let is_flagged = flagged.contains(&r.id);
            let true_positive = misuse
                && is_flagged
                && match mode {
                    AdjudicationMode::Raw => true,
                    AdjudicationMode::Strict => match adjudications.and_then(|a| a.get(&r.id)) {
                        Some(valid) => *valid,
                        None => {
                            missing.push(r.id.clone());
                            false
                        }
                    },
                };
            RecordScore {
                misuse,
                flagged: is_flagged,
                true_positive,
                fixed: misuse && fixed.contains(&r.id),
            }
        })
        .collect();
    if !missing.is_empty() {
        return Err(StatsError::MissingAdjudication(missing));
    }
    Ok(scores)
}

pub fn adjudicated_counts(
    dataset: &Dataset,
    flagged: &BTreeSet<String>,
    adjudications: Option<&Adjudication>,
    mode: AdjudicationMode,
) -> Result<ConfusionCounts, StatsError> {
    let scores = score_records(dataset, flagged, &BTreeSet::new(), adjudications, mode)?;
    Ok(ConfusionCounts::from_scores(&scores))
}
