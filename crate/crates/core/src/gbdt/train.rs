use std::collections::HashMap;
use std::sync::Arc;

use super::histogram::{best_split, BinEdges, BinnedRows, Histogram};
use super::{grad_hess, BoostParams, Ensemble, Node, NodeStats, Objective, TaggedTree, Tree, TreeTag};
use crate::error::{Error, Result};
use crate::tabular::Dataset;

/// Supplies the (possibly aggregated) histogram of the rows routed to a node.
pub(crate) trait HistogramSource {
    fn histogram(&mut self, node: usize) -> Histogram;
    /// Moves the rows of `node` into `left` (`x[feature] < threshold`) and `right`.
    fn split(&mut self, node: usize, feature: usize, threshold: f64, left: usize, right: usize);
}

/// Grows one tree depth-first from histograms. Node statistics come from the
/// root histogram total and, below it, from the chosen split's child sums.
pub(crate) fn grow_tree(src: &mut dyn HistogramSource, params: &BoostParams) -> Tree {
    struct Grower<'a> {
        src: &'a mut dyn HistogramSource,
        params: &'a BoostParams,
        nodes: Vec<Node>,
    }
    impl Grower<'_> {
        fn expand(&mut self, id: usize, stats: NodeStats, hist: Option<Histogram>, depth: usize) {
            let p = self.params;
            if depth < p.max_depth {
                let hist = hist.unwrap_or_else(|| self.src.histogram(id));
                if let Some(c) = best_split(&hist, p.lambda, p.gamma, p.min_child_hessian) {
                    drop(hist);
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(Node::Leaf { value: 0.0, stats: None });
                    self.nodes.push(Node::Leaf { value: 0.0, stats: None });
                    self.src.split(id, c.feature, c.threshold, left, right);
                    self.nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                        gain: Some(c.gain),
                        stats: Some(stats),
                    };
                    self.expand(left, nonneg(c.left), None, depth + 1);
                    self.expand(right, nonneg(c.right), None, depth + 1);
                    return;
                }
            }
            self.nodes[id] = Node::Leaf {
                value: p.leaf_value(stats),
                stats: Some(stats),
            };
        }
    }
    let root_hist = src.histogram(0);
    let root_stats = nonneg(root_hist.total.into());
    let mut g = Grower {
        src,
        params,
        nodes: vec![Node::Leaf { value: 0.0, stats: None }],
    };
    g.expand(0, root_stats, Some(root_hist), 0);
    Tree { nodes: g.nodes }
}

/// Hessian sums are non-negative; noisy (DP) sums are clamped at zero.
fn nonneg(s: NodeStats) -> NodeStats {
    NodeStats::new(s.g, s.h.max(0.0))
}

/// Histogram source over rows held in one place.
pub(crate) struct LocalSource<'a> {
    rows: &'a [Vec<f64>],
    binned: BinnedRows,
    g: &'a [f64],
    h: &'a [f64],
    edges: Arc<BinEdges>,
    members: HashMap<usize, Vec<usize>>,
}

impl<'a> LocalSource<'a> {
    pub(crate) fn new(rows: &'a [Vec<f64>], g: &'a [f64], h: &'a [f64], edges: Arc<BinEdges>) -> Self {
        let binned = BinnedRows::new(rows, &edges);
        let mut members = HashMap::new();
        members.insert(0, (0..rows.len()).collect());
        LocalSource {
            rows,
            binned,
            g,
            h,
            edges,
            members,
        }
    }

    pub(crate) fn members(&self, node: usize) -> &[usize] {
        self.members.get(&node).map_or(&[], Vec::as_slice)
    }
}

impl HistogramSource for LocalSource<'_> {
    fn histogram(&mut self, node: usize) -> Histogram {
        Histogram::from_binned(&self.binned, self.members(node), self.g, self.h, self.edges.clone())
    }

    fn split(&mut self, node: usize, feature: usize, threshold: f64, left: usize, right: usize) {
        let idx = self.members.remove(&node).unwrap_or_default();
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.rows[i][feature] < threshold);
        self.members.insert(left, l);
        self.members.insert(right, r);
    }
}

/// Trains one tree on per-row `(g, h)` with fixed bin edges.
pub fn train_tree(rows: &[Vec<f64>], g: &[f64], h: &[f64], params: &BoostParams, edges: Arc<BinEdges>) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::Empty("train_tree needs at least one row".into()));
    }
    if g.len() != rows.len() || h.len() != rows.len() {
        return Err(Error::invalid("gradient/Hessian length differs from row count"));
    }
    params.validate()?;
    let mut src = LocalSource::new(rows, g, h, edges);
    Ok(grow_tree(&mut src, params))
}

/// Running margins of a set of rows under a growing ensemble.
#[derive(Clone, Debug)]
pub struct BoostState {
    pub n_outputs: usize,
    /// `margins[i][k]` for row `i`, output `k`.
    pub margins: Vec<Vec<f64>>,
}

impl BoostState {
    pub fn new(n_rows: usize, n_outputs: usize, params: &BoostParams) -> Self {
        BoostState {
            n_outputs,
            margins: vec![vec![params.base_margin(n_outputs); n_outputs]; n_rows],
        }
    }

    /// Per-row `(g, h)` for output `class` from the current margins.
    pub fn grad_hess(&self, labels: &[usize], class: usize) -> (Vec<f64>, Vec<f64>) {
        self.margins
            .iter()
            .zip(labels)
            .map(|(m, &y)| grad_hess(m, y, class))
            .unzip()
    }

    pub fn add_tree(&mut self, tree: &Tree, class: usize, rows: &[Vec<f64>]) {
        self.add_weighted(tree, class, rows, 1.0);
    }

    pub fn add_weighted(&mut self, tree: &Tree, class: usize, rows: &[Vec<f64>], weight: f64) {
        for (m, r) in self.margins.iter_mut().zip(rows) {
            m[class] += weight * tree.predict(r);
        }
    }
}

/// Centralized boosting. Binary: one tree per round on log-loss statistics.
/// Multiclass: K trees per round on softmax statistics taken at round start.
pub fn train_ensemble(data: &Dataset, params: &BoostParams) -> Result<Ensemble> {
    train_ensemble_with(data, params, Objective::for_classes(data.n_classes()))
}

pub fn train_ensemble_with(data: &Dataset, params: &BoostParams, objective: Objective) -> Result<Ensemble> {
    if data.is_empty() {
        return Err(Error::Empty("train_ensemble on an empty dataset".into()));
    }
    params.validate()?;
    let edges = Arc::new(BinEdges::from_rows(&data.rows, data.n_features(), params.n_bins));
    let mut ens = Ensemble::with_objective(params.clone(), data.n_classes(), objective);
    let mut state = BoostState::new(data.len(), ens.n_outputs(), params);
    for round in 0..params.n_trees {
        let stats: Vec<_> = (0..state.n_outputs).map(|c| state.grad_hess(&data.labels, c)).collect();
        let mut trees = Vec::with_capacity(state.n_outputs);
        for (g, h) in &stats {
            trees.push(train_tree(&data.rows, g, h, params, edges.clone())?);
        }
        for (c, tree) in trees.into_iter().enumerate() {
            state.add_tree(&tree, c, &data.rows);
            ens.trees.push(TaggedTree {
                tag: TreeTag {
                    client_id: None,
                    round,
                    class_index: c,
                },
                tree,
            });
        }
    }
    Ok(ens)
}
