use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::Ensemble;
use crate::tabular::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub f1: f64,
    pub auc: f64,
}

/// F1 of the positive class; 0 when there are no true or predicted positives.
pub fn f1_score(truth: &[bool], pred: &[bool]) -> f64 {
    let tp = truth.iter().zip(pred).filter(|(t, p)| **t && **p).count() as f64;
    let fp = truth.iter().zip(pred).filter(|(t, p)| !**t && **p).count() as f64;
    let fneg = truth.iter().zip(pred).filter(|(t, p)| **t && !**p).count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fneg)
    }
}

/// Mann-Whitney area under the ROC curve; ties count one half.
pub fn auc(truth: &[bool], scores: &[f64]) -> Result<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC is undefined for a single-class test set"));
    }
    // Average ranks over tie blocks, 1-based.
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && scores[idx[e + 1]] == scores[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[k..=e].iter().filter(|&&i| truth[i]).count() as f64;
        k = e + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Binary: F1 with positives at `p > 0.5` plus AUC. Multiclass: argmax
/// macro-F1 and one-vs-rest macro-AUC.
pub fn utility_metrics(ens: &Ensemble, test: &Dataset) -> Result<Utility> {
    utility_metrics_weighted(ens, test, None)
}

pub fn utility_metrics_weighted(ens: &Ensemble, test: &Dataset, weights: Option<&[f64]>) -> Result<Utility> {
    if test.is_empty() {
        return Err(Error::Empty("utility metrics need a non-empty test set".into()));
    }
    let probs: Vec<Vec<f64>> = test
        .rows
        .iter()
        .map(|r| crate::gbdt::margin_to_proba(&ens.predict_margin_weighted(r, weights), ens.n_classes))
        .collect();
    let k = ens.n_classes;
    if k == 2 {
        let truth: Vec<bool> = test.labels.iter().map(|&y| y == 1).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let pred: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
        return Ok(Utility {
            f1: f1_score(&truth, &pred),
            auc: auc(&truth, &scores)?,
        });
    }
    let argmax: Vec<usize> = probs
        .iter()
        .map(|p| (0..k).fold(0, |b, c| if p[c] > p[b] { c } else { b }))
        .collect();
    let mut f1 = 0.0;
    let mut a = 0.0;
    for c in 0..k {
        let truth: Vec<bool> = test.labels.iter().map(|&y| y == c).collect();
        let pred: Vec<bool> = argmax.iter().map(|&y| y == c).collect();
        f1 += f1_score(&truth, &pred);
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        a += auc(&truth, &scores)?;
    }
    Ok(Utility {
        f1: f1 / k as f64,
        auc: a / k as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{train_ensemble, BoostParams};
    use crate::tabular::synth;

    #[test]
    fn perfect_classifier() {
        let d = synth::two_feature_demo();
        let p = BoostParams {
            n_trees: 30,
            max_depth: 4,
            ..BoostParams::default()
        };
        let ens = train_ensemble(&d, &p).unwrap();
        let u = utility_metrics(&ens, &d).unwrap();
        assert_eq!((u.f1, u.auc), (1.0, 1.0));
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let truth = [true, false, true, false];
        assert_eq!(auc(&truth, &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auc(&truth, &[0.9, 0.1, 0.8, 0.2]).unwrap(), 1.0);
        assert!(auc(&[true, true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn all_positive_predictions() {
        let truth = [true, false, true, false];
        assert!((f1_score(&truth, &[true; 4]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_has_chance_auc() {
        let d = synth::pima_like(50, 8);
        let ens = crate::gbdt::Ensemble::new(BoostParams::default(), 2);
        assert_eq!(utility_metrics(&ens, &d).unwrap().auc, 0.5);
    }
}
