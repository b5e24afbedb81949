use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data_model::{Label, SampleMeta};
use crate::error::{Error, Result};
use crate::spoof_classifier::decide;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub label: Label,
    /// Display probability.
    pub score: f64,
    pub predicted: Label,
    pub display_id: String,
    pub display_type: String,
    pub device_type: String,
}

impl ScoredSample {
    pub fn new(meta: &SampleMeta, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "score {score} of {} outside [0, 1]",
                meta.id
            )));
        }
        Ok(Self {
            sample_id: meta.id.clone(),
            label: meta.label,
            score,
            predicted: decide(score),
            display_id: meta.display_id.clone(),
            display_type: meta.display_type.clone(),
            device_type: meta.device_type.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub auroc: f64,
    pub ap: f64,
}

fn check_scores(samples: &[ScoredSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("no scored samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.score.is_nan()) {
        return Err(Error::InvalidArgument(format!("NaN score for {}", s.sample_id)));
    }
    Ok(())
}

pub fn accuracy(samples: &[ScoredSample]) -> Result<f64> {
    check_scores(samples)?;
    let correct = samples.iter().filter(|s| s.predicted == s.label).count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Probability that a random display pair outscores a random real pair,
/// ties counting one half.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    check_scores(samples)?;
    let n_pos = samples.iter().filter(|s| s.label.is_display()).count() as u64;
    let n_neg = samples.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Empty("AUROC needs both real and display pairs".into()));
    }
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // twice the Mann-Whitney U statistic, kept integral
    let mut twice_u = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let group = &sorted[i..j];
        let pos = group.iter().filter(|s| s.label.is_display()).count() as u64;
        let neg = group.len() as u64 - pos;
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok((twice_u as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// Ranking by descending score, ties by ascending sample id.
pub fn ranked(samples: &[ScoredSample]) -> Vec<&ScoredSample> {
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.sample_id.cmp(&b.sample_id),
        o => o,
    });
    sorted
}

/// Mean precision at the rank of each display pair.
pub fn average_precision(samples: &[ScoredSample]) -> Result<f64> {
    check_scores(samples)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, s) in ranked(samples).into_iter().enumerate() {
        if s.label.is_display() {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Empty("average precision needs a display pair".into()));
    }
    Ok(sum / hits as f64)
}

pub fn metrics(samples: &[ScoredSample]) -> Result<Metrics> {
    Ok(Metrics {
        accuracy: accuracy(samples)?,
        auroc: auroc(samples)?,
        ap: average_precision(samples)?,
    })
}

/// Metrics of a subset that may hold a single class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub auroc: Option<f64>,
    pub ap: Option<f64>,
}

pub fn group_metrics(samples: &[ScoredSample]) -> Result<GroupMetrics> {
    Ok(GroupMetrics {
        n: samples.len(),
        accuracy: accuracy(samples)?,
        auroc: auroc(samples).ok(),
        ap: average_precision(samples).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scored(labels: &[u8], scores: &[f64]) -> Vec<ScoredSample> {
        labels
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&l, &score))| {
                let label = if l == 1 { Label::Display } else { Label::Real };
                ScoredSample {
                    sample_id: format!("s{i:03}"),
                    label,
                    score,
                    predicted: decide(score),
                    display_id: if l == 1 { "d".into() } else { "none".into() },
                    display_type: String::new(),
                    device_type: String::new(),
                }
            })
            .collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&scored(&[1, 0], &[0.9, 0.1])).unwrap(), 1.0);
        assert_eq!(accuracy(&scored(&[1, 0], &[0.1, 0.9])).unwrap(), 0.0);
        assert_eq!(accuracy(&scored(&[1, 0, 1, 0], &[0.9, 0.1, 0.6, 0.7])).unwrap(), 0.75);
        // a tie at 0.5 is a display call
        assert_eq!(accuracy(&scored(&[1], &[0.5])).unwrap(), 1.0);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&scored(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1])).unwrap(), 1.0);
        assert_eq!(auroc(&scored(&[1, 0, 1, 0], &[0.3; 4])).unwrap(), 0.5);
        assert_eq!(auroc(&scored(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.1])).unwrap(), 0.75);
        assert!(auroc(&scored(&[1, 1], &[0.2, 0.3])).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&scored(&[0, 1, 0], &[0.1, 0.9, 0.5])).unwrap(), 1.0);
        let v = average_precision(&scored(&[1, 0, 1], &[0.9, 0.8, 0.7])).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&scored(&[1, 1, 0], &[0.9, 0.8, 0.7])).unwrap(), 1.0);
        assert!(average_precision(&scored(&[0, 0], &[0.9, 0.8])).is_err());
    }

    #[test]
    fn ap_ties_follow_sample_id() {
        // s000 (display) and s001 (real) tie; s000 ranks first
        assert_eq!(average_precision(&scored(&[1, 0], &[0.5, 0.5])).unwrap(), 1.0);
        assert_eq!(average_precision(&scored(&[0, 1], &[0.5, 0.5])).unwrap(), 0.5);
    }

    #[test]
    fn out_of_range_scores_rejected() {
        let meta = SampleMeta {
            id: "x".into(),
            label: Label::Real,
            display_id: "none".into(),
            display_type: "none".into(),
            device_type: "none".into(),
            object_category: "o".into(),
            split: None,
        };
        assert!(ScoredSample::new(&meta, 1.5).is_err());
        assert!(ScoredSample::new(&meta, f64::NAN).is_err());
        assert_eq!(ScoredSample::new(&meta, 0.5).unwrap().predicted, Label::Display);
    }
}
