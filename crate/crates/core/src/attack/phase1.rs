use serde::{Deserialize, Serialize};

use super::{FeatureBox, ReconstructedDataset, ReconstructedSample, Victim};
use crate::error::{Error, Result};
use crate::gbdt::{BoostParams, Node, Objective, Tree};
use crate::tabular::FeatureSchema;

/// Inferred sample count of one leaf; `estimate` is the unrounded quotient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafCount {
    pub leaf: usize,
    pub n: usize,
    pub estimate: f64,
    pub residual: f64,
}

/// Inferred labels of one leaf: `n1` samples of the positive (tree) class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSplit {
    pub leaf: usize,
    pub n0: usize,
    pub n1: usize,
    /// `G` recovered from the leaf value.
    pub g: f64,
    pub estimate: f64,
    pub residual: f64,
}

pub(crate) fn require_stats(tree: &Tree) -> Result<()> {
    if tree.has_stats() {
        Ok(())
    } else {
        Err(Error::StatisticsWithheld("the model carries no node gradient/Hessian sums".into()))
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside (0, 1)")))
    }
}

fn round_count(x: f64) -> usize {
    if x.is_finite() && x > 0.0 {
        x.round() as usize
    } else {
        0
    }
}

/// `N_j = round(H_j / h_j)` where `h_j` is the common per-sample Hessian of leaf `j`.
pub(crate) fn counts_with(tree: &Tree, unit_hessian: impl Fn(usize) -> f64) -> Result<Vec<LeafCount>> {
    require_stats(tree)?;
    Ok(tree
        .leaves()
        .into_iter()
        .map(|leaf| {
            let h = tree.nodes[leaf].stats().expect("checked").h;
            let estimate = h / unit_hessian(leaf);
            let n = round_count(estimate);
            LeafCount {
                leaf,
                n,
                estimate,
                residual: (n as f64 - estimate).abs(),
            }
        })
        .collect())
}

/// Leaf counts of a first tree grown while every sample had probability `b`.
pub fn infer_leaf_counts(first_tree: &Tree, b: f64) -> Result<Vec<LeafCount>> {
    check_prob(b)?;
    counts_with(first_tree, |_| b * (1.0 - b))
}

/// `G_j = -v_j / eta * (H_j + lambda)`, then `N1_j = round(N_j p_j - G_j)` clamped to `[0, N_j]`.
pub(crate) fn labels_with(
    tree: &Tree,
    counts: &[LeafCount],
    eta: f64,
    lambda: f64,
    prior: impl Fn(usize) -> f64,
) -> Result<Vec<LabelSplit>> {
    require_stats(tree)?;
    counts
        .iter()
        .map(|c| {
            let (value, stats) = match tree.nodes.get(c.leaf) {
                Some(Node::Leaf { value, stats }) => (*value, stats.expect("checked")),
                _ => return Err(Error::invalid(format!("node {} is not a leaf", c.leaf))),
            };
            let g = -value / eta * (stats.h + lambda);
            let estimate = c.n as f64 * prior(c.leaf) - g;
            let n1 = round_count(estimate).min(c.n);
            Ok(LabelSplit {
                leaf: c.leaf,
                n0: c.n - n1,
                n1,
                g,
                estimate,
                residual: (n1 as f64 - estimate).abs(),
            })
        })
        .collect()
}

pub fn infer_label_distribution(first_tree: &Tree, counts: &[LeafCount], eta: f64, lambda: f64, b: f64) -> Result<Vec<LabelSplit>> {
    check_prob(b)?;
    if !(eta > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    labels_with(first_tree, counts, eta, lambda, |_| b)
}

/// Scales counts down proportionally (largest remainder) so they sum to at most `cap`.
pub(crate) fn cap_counts(counts: &mut [usize], cap: usize) {
    let total: usize = counts.iter().sum();
    if total <= cap {
        return;
    }
    let scale = cap as f64 / total as f64;
    let exact: Vec<f64> = counts.iter().map(|&n| n as f64 * scale).collect();
    for (n, x) in counts.iter_mut().zip(&exact) {
        *n = x.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &o in order.iter().take(cap - assigned) {
        counts[o] += 1;
    }
}

/// One sample per inferred row. Positive-class samples of a leaf come first;
/// each box is the conjunction of the leaf's path predicates. Leaves whose
/// path is unsatisfiable contribute no samples.
pub fn init_dataset(
    first_tree: &Tree,
    labels: &[LabelSplit],
    schema: &FeatureSchema,
    params: &BoostParams,
    victim: Victim,
) -> ReconstructedDataset {
    let mut samples = Vec::new();
    let base = params.base_margin(1);
    for s in labels {
        let mut b = FeatureBox::unconstrained(schema);
        let path = first_tree.path_to(s.leaf);
        if !b.admits_path(&path) {
            continue;
        }
        b.restrict_path(&path);
        for label in std::iter::repeat_n(1, s.n1).chain(std::iter::repeat_n(0, s.n0)) {
            samples.push(ReconstructedSample {
                bounds: b.clone(),
                label,
                p: vec![params.base_score],
                g: vec![params.base_score - label as f64],
                h: vec![params.base_score * (1.0 - params.base_score)],
                margin: vec![base],
                origin_leaf: s.leaf,
            });
        }
    }
    ReconstructedDataset {
        samples,
        victim,
        source_params: params.clone(),
        n_classes: 2,
        objective: Objective::Logistic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Constraint;
    use crate::gbdt::tree::tests::demo_tree;
    use crate::tabular::synth;

    #[test]
    fn demo_counts_and_labels() {
        let t = demo_tree();
        let c = infer_leaf_counts(&t, 0.5).unwrap();
        assert_eq!(c.iter().map(|c| c.n).collect::<Vec<_>>(), vec![7, 4, 4]);
        let l = infer_label_distribution(&t, &c, 0.3, 1.0, 0.5).unwrap();
        assert_eq!(l.iter().map(|s| (s.n0, s.n1)).collect::<Vec<_>>(), vec![(7, 0), (0, 4), (3, 1)]);
        for (s, g) in l.iter().zip([3.5, -2.0, 1.0]) {
            assert!((s.g - g).abs() < 1e-5, "{} vs {g}", s.g);
            assert!(s.residual < 1e-4);
        }
    }

    #[test]
    fn empty_leaf_and_bad_base() {
        let t = Tree::single_leaf(0.0, Some(crate::gbdt::NodeStats::new(0.0, 0.0)));
        assert_eq!(infer_leaf_counts(&t, 0.3).unwrap()[0].n, 0);
        assert!(infer_leaf_counts(&t, 1.0).is_err());
        let w = demo_tree().withhold_stats();
        let e = infer_leaf_counts(&w, 0.5).unwrap_err();
        assert!(e.to_string().contains("statistics withheld"));
    }

    #[test]
    fn demo_boxes() {
        let d = synth::two_feature_demo();
        let t = demo_tree();
        let c = infer_leaf_counts(&t, 0.5).unwrap();
        let l = infer_label_distribution(&t, &c, 0.3, 1.0, 0.5).unwrap();
        let r = init_dataset(&t, &l, &d.schema, &BoostParams::default(), Victim::Global);
        assert_eq!(r.len(), 15);
        let iv = |s: &ReconstructedSample, j: usize| match s.bounds.features[j] {
            Constraint::Numerical(iv) => (iv.lo, iv.hi),
            _ => unreachable!(),
        };
        assert_eq!(iv(&r.samples[0], 0), (f64::NEG_INFINITY, 60.0));
        assert_eq!(iv(&r.samples[0], 1), (f64::NEG_INFINITY, f64::INFINITY));
        assert_eq!(iv(&r.samples[7], 0), (60.0, f64::INFINITY));
        assert_eq!(iv(&r.samples[7], 1), (f64::NEG_INFINITY, 29.0));
        assert_eq!(iv(&r.samples[11], 1), (29.0, f64::INFINITY));
        let labels: Vec<usize> = r.samples.iter().map(|s| s.label).collect();
        assert_eq!(labels, [0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn contradictory_path_yields_no_samples() {
        use crate::gbdt::{Node, NodeStats};
        let d = synth::two_feature_demo();
        let leaf = |n: f64| Node::Leaf {
            value: -0.3 * 0.5 * n / (0.25 * n + 1.0),
            stats: Some(NodeStats::new(0.5 * n, 0.25 * n)),
        };
        let split = |t: f64, l, r, n: f64| Node::Split {
            feature: 0,
            threshold: t,
            left: l,
            right: r,
            gain: Some(1.0),
            stats: Some(NodeStats::new(0.5 * n, 0.25 * n)),
        };
        // x < 10 then x >= 20 admits nothing; noise can still give that leaf mass.
        let t = Tree {
            nodes: vec![split(10.0, 1, 2, 10.0), split(20.0, 3, 4, 6.0), leaf(4.0), leaf(4.0), leaf(2.0)],
        };
        let c = infer_leaf_counts(&t, 0.5).unwrap();
        assert_eq!(c.iter().map(|c| c.n).collect::<Vec<_>>(), vec![4, 2, 4]);
        let l = infer_label_distribution(&t, &c, 0.3, 1.0, 0.5).unwrap();
        let r = init_dataset(&t, &l, &d.schema, &BoostParams::default(), Victim::Global);
        assert_eq!(r.len(), 8);
        assert!(r.samples.iter().all(|s| s.origin_leaf != 4));
    }

    #[test]
    fn single_leaf_tree_leaves_boxes_open() {
        let d = synth::pima_like(20, 0);
        let t = Tree::single_leaf(-0.1, Some(crate::gbdt::NodeStats::new(2.0, 5.0)));
        let c = infer_leaf_counts(&t, 0.5).unwrap();
        let l = infer_label_distribution(&t, &c, 0.3, 1.0, 0.5).unwrap();
        let r = init_dataset(&t, &l, &d.schema, &BoostParams::default(), Victim::Global);
        assert_eq!(r.len(), 20);
        assert!(r.samples.iter().all(|s| s.bounds == FeatureBox::unconstrained(&d.schema)));
    }

    #[test]
    fn cap_preserves_total() {
        let mut c = vec![10, 5, 3, 2];
        cap_counts(&mut c, 10);
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert_eq!(c, vec![5, 3, 1, 1]);
        let mut small = vec![1, 2];
        cap_counts(&mut small, 10);
        assert_eq!(small, vec![1, 2]);
    }
}
