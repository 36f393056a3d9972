//! Ranking metrics for beam predictors plus the reference baselines they
//! are compared against. All ranking is deterministic: probabilities sort
//! descending with the lower beam index winning ties.

use thiserror::Error;

use crate::geometry::{wrap_to_2pi, Vec2};
use crate::propagation::BeamCodebook;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// Scoring requires at least one prediction.
    #[error("no predictions to score")]
    NoPredictions,
    /// A label does not index into the probability vector.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    /// Prediction vectors must all have the same width.
    #[error("prediction widths differ: {0} vs {1}")]
    MixedWidths(usize, usize),
    /// Requested cutoff is outside 1..=classes.
    #[error("k must be in 1..={classes}, got {k}")]
    BadK { k: usize, classes: usize },
}

/// Class indices ordered by probability descending, index ascending on ties.
pub fn ranked_indices(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Position of `label` in the ranking, 0 meaning the top choice.
fn rank_of(probs: &[f64], label: usize) -> usize {
    ranked_indices(probs)
        .iter()
        .position(|&i| i == label)
        .unwrap()
}

fn validate(predictions: &[(Vec<f64>, usize)]) -> Result<usize, MetricsError> {
    let Some(first) = predictions.first() else {
        return Err(MetricsError::NoPredictions);
    };
    let classes = first.0.len();
    for (probs, label) in predictions {
        if probs.len() != classes {
            return Err(MetricsError::MixedWidths(classes, probs.len()));
        }
        if *label >= classes {
            return Err(MetricsError::LabelOutOfRange {
                label: *label,
                classes,
            });
        }
    }
    Ok(classes)
}

/// Fraction of predictions whose true label appears among the `k` highest
/// probabilities.
pub fn topk_accuracy(predictions: &[(Vec<f64>, usize)], k: usize) -> Result<f64, MetricsError> {
    let classes = validate(predictions)?;
    if k == 0 || k > classes {
        return Err(MetricsError::BadK { k, classes });
    }
    let hits = predictions
        .iter()
        .filter(|(probs, label)| rank_of(probs, *label) < k)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKReport {
    pub classes: usize,
    pub samples: usize,
    /// `accuracy[i]` is the top-(i+1) accuracy; non-decreasing by
    /// construction.
    pub accuracy: Vec<f64>,
    /// True-label counts per class over the scored set.
    pub label_histogram: Vec<usize>,
}

/// Scores top-1 through top-`max_k` in one pass over the rankings.
pub fn topk_report(
    predictions: &[(Vec<f64>, usize)],
    max_k: usize,
) -> Result<TopKReport, MetricsError> {
    let classes = validate(predictions)?;
    if max_k == 0 || max_k > classes {
        return Err(MetricsError::BadK { k: max_k, classes });
    }
    let mut hits_at = vec![0usize; max_k];
    let mut label_histogram = vec![0usize; classes];
    for (probs, label) in predictions {
        label_histogram[*label] += 1;
        let rank = rank_of(probs, *label);
        if rank < max_k {
            hits_at[rank] += 1;
        }
    }
    let mut accuracy = Vec::with_capacity(max_k);
    let mut cumulative = 0usize;
    for hits in hits_at {
        cumulative += hits;
        accuracy.push(cumulative as f64 / predictions.len() as f64);
    }
    Ok(TopKReport {
        classes,
        samples: predictions.len(),
        accuracy,
        label_histogram,
    })
}

/// Perfect-knowledge reference: probability one on the true label. Scores
/// 1.0 at every K; everything else is measured against this ceiling.
pub fn oracle_predictions(labels: &[usize], classes: usize) -> Vec<(Vec<f64>, usize)> {
    labels
        .iter()
        .map(|&label| {
            let mut probs = vec![0.0; classes];
            probs[label.min(classes.saturating_sub(1))] = 1.0;
            (probs, label)
        })
        .collect()
}

/// Constant predictor ranking beams by training-set frequency.
pub fn majority_predictions(
    train_labels: &[usize],
    classes: usize,
    eval_labels: &[usize],
) -> Vec<(Vec<f64>, usize)> {
    let mut histogram = vec![0usize; classes];
    for &label in train_labels {
        if label < classes {
            histogram[label] += 1;
        }
    }
    let total: usize = histogram.iter().sum::<usize>().max(1);
    let probs: Vec<f64> = histogram.iter().map(|&c| c as f64 / total as f64).collect();
    eval_labels.iter().map(|&l| (probs.clone(), l)).collect()
}

/// Nearest-neighbour vote over training positions. Neighbours are chosen by
/// Euclidean distance with index order breaking exact ties; the probability
/// vector is the vote share.
pub fn knn_predictions(
    train: &[(Vec2, usize)],
    queries: &[(Vec2, usize)],
    k: usize,
    classes: usize,
) -> Vec<(Vec<f64>, usize)> {
    let k = k.clamp(1, train.len().max(1));
    queries
        .iter()
        .map(|&(q, label)| {
            let mut dists: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, &(p, _))| (p.dist(q), i))
                .collect();
            dists.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            let mut votes = vec![0usize; classes];
            for &(_, idx) in dists.iter().take(k) {
                let vote = train[idx].1;
                if vote < classes {
                    votes[vote] += 1;
                }
            }
            let probs = votes.iter().map(|&v| v as f64 / k as f64).collect();
            (probs, label)
        })
        .collect()
}

/// Pure-geometry reference: point the beam along the bearing from the
/// dead-reckoned position to the base station, relative to the current yaw.
/// Each query is (position relative to session start, yaw, true label).
pub fn geometric_predictions(
    queries: &[(Vec2, f64, usize)],
    start_position: Vec2,
    bs_position: Vec2,
    codebook: &BeamCodebook,
) -> Vec<(Vec<f64>, usize)> {
    let classes = codebook.beams().len();
    queries
        .iter()
        .map(|&(rel, yaw, label)| {
            let estimated = start_position.add(rel);
            let bearing = bs_position.sub(estimated).bearing();
            let beam = codebook.nearest_beam(wrap_to_2pi(bearing - yaw));
            let mut probs = vec![0.0; classes];
            probs[beam] = 1.0;
            (probs, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;
    use rand::Rng;

    #[test]
    fn ranking_breaks_ties_toward_lower_index() {
        assert_eq!(ranked_indices(&[0.3, 0.3, 0.4]), vec![2, 0, 1]);
        assert_eq!(ranked_indices(&[0.5, 0.5, 0.5]), vec![0, 1, 2]);
    }

    #[test]
    fn hand_scored_rankings_are_exact() {
        let predictions = vec![
            (vec![0.7, 0.2, 0.1], 0), // rank 0
            (vec![0.2, 0.7, 0.1], 0), // rank 1
            (vec![0.1, 0.2, 0.7], 0), // rank 2
            (vec![0.3, 0.3, 0.4], 1), // tie: ranked [2, 0, 1], rank 2
        ];
        assert_eq!(topk_accuracy(&predictions, 1).unwrap(), 0.25);
        assert_eq!(topk_accuracy(&predictions, 2).unwrap(), 0.5);
        assert_eq!(topk_accuracy(&predictions, 3).unwrap(), 1.0);
        let report = topk_report(&predictions, 3).unwrap();
        assert_eq!(report.accuracy, vec![0.25, 0.5, 1.0]);
        assert_eq!(report.label_histogram, vec![3, 1, 0]);
        assert_eq!(report.samples, 4);
    }

    #[test]
    fn accuracy_is_monotone_in_k() {
        let mut rng = seeded_rng(7);
        let predictions: Vec<(Vec<f64>, usize)> = (0..200)
            .map(|_| {
                let probs: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
                (probs, rng.random_range(0..10))
            })
            .collect();
        let report = topk_report(&predictions, 10).unwrap();
        for pair in report.accuracy.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
        assert_eq!(*report.accuracy.last().unwrap(), 1.0);
    }

    #[test]
    fn uniform_random_predictions_match_chance() {
        let classes = 36;
        let per_class = 300;
        let mut rng = seeded_rng(8);
        let mut predictions = Vec::new();
        for label in 0..classes {
            for _ in 0..per_class {
                let probs: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
                predictions.push((probs, label));
            }
        }
        let report = topk_report(&predictions, 5).unwrap();
        let chance = 1.0 / classes as f64;
        assert!(
            (report.accuracy[0] - chance).abs() < 0.01,
            "top-1 {} vs chance {chance}",
            report.accuracy[0]
        );
        assert!(
            (report.accuracy[4] - 5.0 * chance).abs() < 0.015,
            "top-5 {} vs chance {}",
            report.accuracy[4],
            5.0 * chance
        );
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        assert!(matches!(
            topk_accuracy(&[], 1),
            Err(MetricsError::NoPredictions)
        ));
        let ragged = vec![(vec![0.5, 0.5], 0), (vec![0.5, 0.3, 0.2], 1)];
        assert!(matches!(
            topk_accuracy(&ragged, 1),
            Err(MetricsError::MixedWidths(2, 3))
        ));
        let oor = vec![(vec![0.5, 0.5], 2)];
        assert!(matches!(
            topk_accuracy(&oor, 1),
            Err(MetricsError::LabelOutOfRange { label: 2, classes: 2 })
        ));
        let fine = vec![(vec![0.5, 0.5], 0)];
        assert!(matches!(
            topk_accuracy(&fine, 3),
            Err(MetricsError::BadK { k: 3, classes: 2 })
        ));
        assert!(matches!(
            topk_accuracy(&fine, 0),
            Err(MetricsError::BadK { k: 0, classes: 2 })
        ));
    }

    #[test]
    fn oracle_is_perfect_at_every_k() {
        let labels: Vec<usize> = (0..36).collect();
        let report = topk_report(&oracle_predictions(&labels, 36), 5).unwrap();
        assert_eq!(report.accuracy, vec![1.0; 5]);
    }

    #[test]
    fn majority_ranks_by_training_frequency() {
        let train = vec![4, 4, 4, 9, 9, 2];
        let predictions = majority_predictions(&train, 12, &[9, 4, 2, 0]);
        // Ranking: 4 (3 votes), 9 (2), 2 (1), then index order.
        assert_eq!(topk_accuracy(&predictions, 1).unwrap(), 0.25);
        assert_eq!(topk_accuracy(&predictions, 2).unwrap(), 0.5);
        assert_eq!(topk_accuracy(&predictions, 3).unwrap(), 0.75);
    }

    #[test]
    fn knn_votes_by_distance_with_index_ties() {
        let train = vec![
            (Vec2::new(0.0, 0.0), 0),
            (Vec2::new(0.1, 0.0), 0),
            (Vec2::new(0.0, 0.1), 0),
            (Vec2::new(10.0, 10.0), 1),
            (Vec2::new(10.1, 10.0), 1),
            (Vec2::new(10.0, 10.1), 1),
        ];
        let queries = vec![(Vec2::new(0.5, 0.5), 0), (Vec2::new(9.5, 9.5), 1)];
        let predictions = knn_predictions(&train, &queries, 5, 4);
        assert_eq!(predictions[0].0, vec![0.6, 0.4, 0.0, 0.0]);
        assert_eq!(predictions[1].0, vec![0.4, 0.6, 0.0, 0.0]);
        assert_eq!(topk_accuracy(&predictions, 1).unwrap(), 1.0);

        // Two train points equidistant from the query: the lower index wins
        // the single slot.
        let tied = vec![(Vec2::new(1.0, 0.0), 3), (Vec2::new(-1.0, 0.0), 2)];
        let got = knn_predictions(&tied, &[(Vec2::ZERO, 3)], 1, 4);
        assert_eq!(got[0].0, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn geometric_baseline_points_at_the_base_station() {
        let codebook = BeamCodebook::build(36, 10f64.to_radians(), 15.0, -10.0).unwrap();
        let start = Vec2::new(5.0, 5.0);
        let bs = Vec2::new(25.0, 5.0);
        // Facing the BS directly: beam 0. Facing +y with the BS due +x:
        // relative bearing 3pi/2, beam 27.
        let queries = vec![
            (Vec2::ZERO, 0.0, 0),
            (Vec2::ZERO, std::f64::consts::FRAC_PI_2, 27),
        ];
        let predictions = geometric_predictions(&queries, start, bs, &codebook);
        assert_eq!(topk_accuracy(&predictions, 1).unwrap(), 1.0);
    }
}
