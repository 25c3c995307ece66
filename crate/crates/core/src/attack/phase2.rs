use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::phase1::require_stats;
use super::{FeatureBox, ReconstructedDataset};
use crate::assign_opt::{self, AssignmentProblem, LeafTarget, SampleStat, SolveStatus};
use crate::error::{Error, Result};
use crate::gbdt::{clamp_prob, margin_to_proba, Tree};

/// Solver summary for one analyzed tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    /// Seconds spent building and solving the problem.
    pub wall: f64,
}

pub fn reachable_leaves(bounds: &FeatureBox, tree: &Tree) -> Vec<usize> {
    bounds.reachable_leaves(tree)
}

/// Hessian-weighted mean of the leaf values the box can reach; the plain mean
/// when those Hessians sum to zero or are absent.
pub fn surrogate_foreign_leaf(bounds: &FeatureBox, tree: &Tree) -> f64 {
    let leaves = bounds.reachable_leaves(tree);
    let (mut num, mut den) = (0.0, 0.0);
    for &j in &leaves {
        if let Some(s) = tree.nodes[j].stats() {
            let w = s.h.max(0.0);
            num += w * tree.leaf_value(j);
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        leaves.iter().map(|&j| tree.leaf_value(j)).sum::<f64>() / leaves.len() as f64
    }
}

/// Adds `deltas[i][o]` to the margin of sample `i`, output `o`, then refreshes
/// `p`, `g` and `h` from the margins.
pub fn update_sample_stats(recon: &mut ReconstructedDataset, deltas: &[Vec<f64>]) -> Result<()> {
    if deltas.len() != recon.samples.len() {
        return Err(Error::invalid(format!(
            "{} accumulators for {} samples",
            deltas.len(),
            recon.samples.len()
        )));
    }
    let k = recon.n_classes;
    let n_out = recon.n_outputs();
    for (s, d) in recon.samples.iter_mut().zip(deltas) {
        if d.len() != n_out {
            return Err(Error::invalid("accumulator width differs from the model outputs"));
        }
        for (m, x) in s.margin.iter_mut().zip(d) {
            *m += x;
        }
        refresh(s, k);
    }
    Ok(())
}

pub(crate) fn refresh(s: &mut super::ReconstructedSample, n_classes: usize) {
    let proba = margin_to_proba(&s.margin, n_classes);
    if s.margin.len() == 1 {
        let p = clamp_prob(proba[1]);
        let y = if s.label == 1 { 1.0 } else { 0.0 };
        s.p = vec![p];
        s.g = vec![p - y];
        s.h = vec![p * (1.0 - p)];
    } else {
        s.p = proba.iter().map(|&p| clamp_prob(p)).collect();
        s.g = s
            .p
            .iter()
            .enumerate()
            .map(|(c, &p)| p - if s.label == c { 1.0 } else { 0.0 })
            .collect();
        s.h = s.p.iter().map(|&p| 2.0 * p * (1.0 - p)).collect();
    }
}

/// Assigns every sample to a reachable leaf of `tree` so that per-leaf sums of
/// the samples' output-`class` statistics match the leaf's `(G, H)`, then
/// shrinks each box to its leaf's path. Returns the assigned leaf values,
/// one per sample; sample statistics are left untouched.
pub fn feature_range_inference(
    recon: &mut ReconstructedDataset,
    tree: &Tree,
    class: usize,
    time_limit: f64,
) -> Result<(TreeOutcome, Vec<f64>)> {
    require_stats(tree)?;
    let start = Instant::now();
    let leaves = tree.leaves();
    let mut slot = vec![usize::MAX; tree.nodes.len()];
    for (k, &j) in leaves.iter().enumerate() {
        slot[j] = k;
    }
    let targets = leaves
        .iter()
        .map(|&j| {
            let s = tree.nodes[j].stats().expect("checked");
            LeafTarget { g: s.g, h: s.h }
        })
        .collect();
    let samples = recon
        .samples
        .iter()
        .map(|s| SampleStat {
            g: s.g[class],
            h: s.h[class],
            reachable: s.bounds.reachable_leaves(tree).into_iter().map(|j| slot[j]).collect(),
        })
        .collect();
    let problem = AssignmentProblem::new(samples, targets)?;
    let remaining = (time_limit - start.elapsed().as_secs_f64()).max(0.0);
    let sol = assign_opt::solve(&problem, remaining)?;
    let paths: Vec<_> = leaves.iter().map(|&j| tree.path_to(j)).collect();
    let values: Vec<f64> = sol
        .assignment
        .iter()
        .zip(&mut recon.samples)
        .map(|(&k, s)| {
            s.bounds.restrict_path(&paths[k]);
            tree.leaf_value(leaves[k])
        })
        .collect();
    Ok((
        TreeOutcome {
            status: sol.status,
            objective: sol.objective,
            wall: start.elapsed().as_secs_f64(),
        },
        values,
    ))
}
