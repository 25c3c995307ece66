//! Histogram-based gradient-boosted decision trees for binary (log loss) and
//! multiclass (softmax) classification. Every node keeps the aggregated
//! gradient/Hessian statistics it was grown from.

mod ensemble;
mod histogram;
mod train;
pub(crate) mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ensemble::{margin_to_proba, Ensemble, Objective, TaggedTree, TreeTag};
pub use histogram::{best_split, build_histogram, BinEdges, BinnedRows, GradPair, Histogram, SplitCandidate};
pub use train::{train_ensemble, train_ensemble_with, train_tree, BoostState};
pub(crate) use train::{grow_tree, HistogramSource};
pub use tree::{Node, NodeStats, PathStep, Tree};

/// Probabilities are clamped to this distance from 0 and 1 before logit or loss.
pub const PROB_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub base_score: f64,
    pub n_bins: usize,
    pub min_child_hessian: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            base_score: 0.5,
            n_bins: 32,
            min_child_hessian: 0.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) || !(self.min_child_hessian >= 0.0) {
            return Err(Error::invalid("lambda, gamma and min_child_hessian must be non-negative"));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(Error::invalid("base_score must lie in (0, 1)"));
        }
        if self.n_bins < 2 {
            return Err(Error::invalid("n_bins must be at least 2"));
        }
        Ok(())
    }

    /// Leaf weight with the learning rate already applied.
    pub fn leaf_value(&self, stats: NodeStats) -> f64 {
        let denom = stats.h + self.lambda;
        if denom > 0.0 {
            -self.learning_rate * stats.g / denom
        } else {
            0.0
        }
    }

    /// Initial margin of every output: `logit(b)` for one output, `b` itself
    /// for each of several softmax outputs.
    pub fn base_margin(&self, n_outputs: usize) -> f64 {
        if n_outputs == 1 {
            logit(self.base_score)
        } else {
            self.base_score
        }
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = margins.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside (0, 1)")))
    }
}

/// Log-loss derivatives: `g = p - y`, `h = p (1 - p)`.
pub fn logloss_grad_hess(p: f64, y: u8) -> Result<(f64, f64)> {
    check_prob(p)?;
    Ok((p - f64::from(y), p * (1.0 - p)))
}

/// Per-class softmax derivatives with the doubled Hessian `2 p (1 - p)`.
pub fn softmax_grad_hess(p: f64, y_is_c: u8) -> Result<(f64, f64)> {
    check_prob(p)?;
    Ok((p - f64::from(y_is_c), 2.0 * p * (1.0 - p)))
}

/// Per-sample `(g, h)` for output `class` given the current margins of a sample.
/// No validation; probabilities are clamped.
pub(crate) fn grad_hess(margins: &[f64], label: usize, class: usize) -> (f64, f64) {
    if margins.len() == 1 {
        let p = clamp_prob(sigmoid(margins[0]));
        let y = if label == 1 { 1.0 } else { 0.0 };
        (p - y, p * (1.0 - p))
    } else {
        let p = clamp_prob(softmax(margins)[class]);
        let y = if label == class { 1.0 } else { 0.0 };
        (p - y, 2.0 * p * (1.0 - p))
    }
}

/// Margin gradient of the loss for every output of one sample.
pub(crate) fn grad_hess_all(margins: &[f64], label: usize) -> Vec<f64> {
    (0..margins.len()).map(|c| grad_hess(margins, label, c).0).collect()
}

/// Structure-score gain of splitting a node into (L, R).
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| {
        let d = h + lambda;
        if d > 0.0 {
            g * g / d
        } else {
            0.0
        }
    };
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}
