use std::collections::HashMap;
use std::sync::Arc;

use crate::defense::{clip_grad_hess, dp_histogram};
use crate::gbdt::{BinEdges, BinnedRows, Histogram, HistogramSource};
use crate::rng;

/// Noise applied by each client to its own node histograms.
pub(super) struct Noise {
    pub epsilon: f64,
    pub clip: f64,
    pub seed: u64,
    /// `(round, class)` of the tree being grown.
    pub tree: [u64; 2],
}

pub(super) struct ClientPart<'a> {
    pub rows: &'a [Vec<f64>],
    pub binned: &'a BinnedRows,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    members: HashMap<usize, Vec<usize>>,
}

impl<'a> ClientPart<'a> {
    pub fn new(rows: &'a [Vec<f64>], binned: &'a BinnedRows, g: Vec<f64>, h: Vec<f64>) -> Self {
        let mut members = HashMap::new();
        members.insert(0, (0..rows.len()).collect());
        ClientPart {
            rows,
            binned,
            g,
            h,
            members,
        }
    }
}

/// Server-side view of node growth: every node's histogram is the bin-wise
/// sum of the clients' (optionally noised) local histograms.
pub(super) struct FederatedSource<'a> {
    pub parts: Vec<ClientPart<'a>>,
    pub edges: Arc<BinEdges>,
    pub noise: Option<Noise>,
}

impl HistogramSource for FederatedSource<'_> {
    fn histogram(&mut self, node: usize) -> Histogram {
        let mut sum = Histogram::zeros(self.edges.clone());
        for (c, part) in self.parts.iter().enumerate() {
            let idx = part.members.get(&node).map_or(&[][..], Vec::as_slice);
            let local = match &self.noise {
                None => Histogram::from_binned(part.binned, idx, &part.g, &part.h, self.edges.clone()),
                Some(n) => {
                    let (g, h): (Vec<f64>, Vec<f64>) =
                        part.g.iter().zip(&part.h).map(|(&g, &h)| clip_grad_hess(g, h, n.clip)).unzip();
                    let clean = Histogram::from_binned(part.binned, idx, &g, &h, self.edges.clone());
                    let mut r = rng::stream(n.seed, "dp_histogram", &[c as u64, n.tree[0], n.tree[1], node as u64]);
                    dp_histogram(&clean, n.epsilon, n.clip, &mut r).expect("validated noise parameters")
                }
            };
            sum.accumulate(&local);
        }
        sum
    }

    fn split(&mut self, node: usize, feature: usize, threshold: f64, left: usize, right: usize) {
        for part in &mut self.parts {
            let idx = part.members.remove(&node).unwrap_or_default();
            let rows = part.rows;
            let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][feature] < threshold);
            part.members.insert(left, l);
            part.members.insert(right, r);
        }
    }
}
