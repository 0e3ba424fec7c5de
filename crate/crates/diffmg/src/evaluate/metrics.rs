use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric needs at least one example")]
    Empty,
    #[error("{predictions} predictions for {labels} labels")]
    Length { predictions: usize, labels: usize },
    #[error("class id {0} outside [0, C)")]
    ClassRange(usize),
    #[error("AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("non-finite score")]
    NonFinite,
}

/// Unweighted mean of per-class F1 over classes `0..n_classes`. A class that
/// occurs in neither predictions nor labels contributes 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::Length {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() || n_classes == 0 {
        return Err(MetricError::Empty);
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= n_classes {
            return Err(MetricError::ClassRange(p));
        }
        if y >= n_classes {
            return Err(MetricError::ClassRange(y));
        }
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let total: f64 = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}

/// Area under the ROC curve as the Mann–Whitney statistic; tied scores
/// count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let p = n_pos as f64;
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / total
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        let m = macro_f1(&[1, 1, 0, 0], &[1, 0, 1, 0], 2).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        let m = macro_f1(&[1, 1, 1, 1], &[1, 0, 1, 0], 2).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_errors() {
        assert_eq!(macro_f1(&[], &[], 2), Err(MetricError::Empty));
        assert!(macro_f1(&[0], &[0, 1], 2).is_err());
        assert_eq!(macro_f1(&[3], &[0], 2), Err(MetricError::ClassRange(3)));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        let s = [0.9, 0.4, 0.6];
        let l = [true, false, true];
        assert_eq!(auc(&s, &l).unwrap(), 1.0);
        assert_eq!(pairwise_auc(&s, &l), 1.0);
        let s = [0.3, 0.4, 0.6];
        assert!((auc(&s, &l).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pairwise_auc(&s, &l), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_counting(data in proptest::collection::vec((0u8..6, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 * 0.25).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            // strictly increasing transform
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s).collect();
            prop_assert!((auc(&t, &labels).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn f1_invariant_under_relabeling(data in proptest::collection::vec((0usize..4, 0usize..4), 1..40), shift in 0usize..4) {
            let preds: Vec<usize> = data.iter().map(|d| d.0).collect();
            let gold: Vec<usize> = data.iter().map(|d| d.1).collect();
            let perm = |c: usize| (c + shift) % 4;
            let a = macro_f1(&preds, &gold, 4).unwrap();
            let b = macro_f1(&preds.iter().map(|&c| perm(c)).collect::<Vec<_>>(), &gold.iter().map(|&c| perm(c)).collect::<Vec<_>>(), 4).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
