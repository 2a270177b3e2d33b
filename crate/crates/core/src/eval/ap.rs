use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// Mean of precision at every relevant rank.
    #[default]
    Uninterpolated,
    /// PASCAL VOC 2007 style: interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Uninterpolated average precision of a ranked list.
///
/// `flags[r]` marks whether the item at rank `r + 1` is relevant;
/// `n_relevant_total` counts relevant items including any never retrieved.
pub fn average_precision(flags: &[bool], n_relevant_total: usize) -> Result<f64> {
    average_precision_with(flags, n_relevant_total, ApMode::Uninterpolated)
}

pub fn average_precision_with(flags: &[bool], n_relevant_total: usize, mode: ApMode) -> Result<f64> {
    let hits = flags.iter().filter(|&&f| f).count();
    if n_relevant_total == 0 || hits > n_relevant_total {
        return Err(Error::OutOfRange {
            name: "n_relevant_total",
            value: n_relevant_total as f64,
            range: "[max(1, relevant flags), inf)",
        });
    }
    let total = n_relevant_total as f64;
    Ok(match mode {
        ApMode::Uninterpolated => {
            let mut found = 0usize;
            let mut sum = 0.0;
            for (rank, _) in flags.iter().enumerate().filter(|(_, &f)| f) {
                found += 1;
                sum += found as f64 / (rank + 1) as f64;
            }
            sum / total
        }
        ApMode::ElevenPoint => {
            // (recall, precision) after each rank
            let mut found = 0usize;
            let pr: Vec<(f64, f64)> = flags
                .iter()
                .enumerate()
                .map(|(rank, &f)| {
                    found += usize::from(f);
                    (found as f64 / total, found as f64 / (rank + 1) as f64)
                })
                .collect();
            let sum: f64 = (0..=10)
                .map(|level| {
                    let recall = level as f64 / 10.0;
                    pr.iter()
                        .filter(|(r, _)| *r >= recall - 1e-12)
                        .map(|&(_, p)| p)
                        .fold(0.0, f64::max)
                })
                .sum();
            sum / 11.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hit() {
        assert_eq!(average_precision(&[true], 1).unwrap(), 1.0);
    }

    #[test]
    fn all_misses() {
        assert_eq!(average_precision(&[false, false], 1).unwrap(), 0.0);
        assert_eq!(average_precision(&[], 3).unwrap(), 0.0);
    }

    #[test]
    fn hand_worked_example() {
        let ap = average_precision(&[true, false, true], 2).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn unretrieved_relevant_items_lower_ap() {
        assert_eq!(average_precision(&[true], 2).unwrap(), 0.5);
    }

    #[test]
    fn invalid_totals() {
        assert!(average_precision(&[], 0).is_err());
        assert!(average_precision(&[true, true], 1).is_err());
    }

    #[test]
    fn eleven_point() {
        assert_eq!(average_precision_with(&[true], 1, ApMode::ElevenPoint).unwrap(), 1.0);
        // recall 0.5 at precision 1, recall 1 at precision 2/3
        let ap = average_precision_with(&[true, false, true], 2, ApMode::ElevenPoint).unwrap();
        let expected = (6.0 * 1.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        assert!((ap - expected).abs() < 1e-15);
        assert_eq!(average_precision_with(&[false], 1, ApMode::ElevenPoint).unwrap(), 0.0);
    }
}
