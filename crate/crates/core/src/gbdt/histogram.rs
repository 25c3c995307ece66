use std::ops::{Add, AddAssign, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{split_gain, NodeStats};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradPair {
    pub g: f64,
    pub h: f64,
}

impl GradPair {
    pub fn new(g: f64, h: f64) -> Self {
        GradPair { g, h }
    }
}

impl Add for GradPair {
    type Output = GradPair;
    fn add(self, o: GradPair) -> GradPair {
        GradPair::new(self.g + o.g, self.h + o.h)
    }
}

impl AddAssign for GradPair {
    fn add_assign(&mut self, o: GradPair) {
        self.g += o.g;
        self.h += o.h;
    }
}

impl Sub for GradPair {
    type Output = GradPair;
    fn sub(self, o: GradPair) -> GradPair {
        GradPair::new(self.g - o.g, self.h - o.h)
    }
}

impl From<GradPair> for NodeStats {
    fn from(p: GradPair) -> NodeStats {
        NodeStats { g: p.g, h: p.h }
    }
}

/// Candidate thresholds per feature, strictly increasing. A value `x` falls in
/// bin `b` = number of thresholds `<= x`, so splitting at threshold `k`
/// sends `x < edges[k]` left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub per_feature: Vec<Vec<f64>>,
}

impl BinEdges {
    /// Quantile thresholds over `rows[idx]`. Features with at most `n_bins`
    /// distinct values get every distinct value except the minimum.
    pub fn quantiles(rows: &[Vec<f64>], idx: &[usize], n_features: usize, n_bins: usize) -> Self {
        let per_feature = (0..n_features)
            .map(|j| {
                let mut v: Vec<f64> = idx.iter().map(|&i| rows[i][j]).collect();
                v.sort_by(f64::total_cmp);
                quantile_edges(&v, n_bins)
            })
            .collect();
        BinEdges { per_feature }
    }

    pub fn from_rows(rows: &[Vec<f64>], n_features: usize, n_bins: usize) -> Self {
        let idx: Vec<usize> = (0..rows.len()).collect();
        Self::quantiles(rows, &idx, n_features, n_bins)
    }

    /// Merges client proposals: union, dedupe, and uniform subsampling down to
    /// `n_bins - 1` thresholds when the union is larger.
    pub fn merge(proposals: &[BinEdges], n_bins: usize) -> Self {
        let nf = proposals.first().map_or(0, |p| p.per_feature.len());
        let keep = n_bins.saturating_sub(1).max(1);
        let per_feature = (0..nf)
            .map(|j| {
                let mut all: Vec<f64> = proposals.iter().flat_map(|p| p.per_feature[j].iter().copied()).collect();
                all.sort_by(f64::total_cmp);
                all.dedup();
                if all.len() <= keep {
                    return all;
                }
                let m = all.len();
                let mut picked: Vec<f64> = (0..keep)
                    .map(|i| {
                        let pos = if keep == 1 {
                            m / 2
                        } else {
                            ((i as f64) * (m - 1) as f64 / (keep - 1) as f64).round() as usize
                        };
                        all[pos]
                    })
                    .collect();
                picked.dedup();
                picked
            })
            .collect();
        BinEdges { per_feature }
    }

    pub fn n_features(&self) -> usize {
        self.per_feature.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.per_feature[feature].len() + 1
    }

    pub fn bin_of(&self, feature: usize, x: f64) -> usize {
        self.per_feature[feature].partition_point(|&t| t <= x)
    }
}

fn quantile_edges(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let Some(&min) = sorted.first() else {
        return Vec::new();
    };
    let mut distinct = sorted.to_vec();
    distinct.dedup();
    if distinct.len() <= n_bins {
        return distinct[1..].to_vec();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..n_bins).map(|q| sorted[q * n / n_bins]).filter(|&v| v > min).collect();
    edges.dedup();
    edges
}

/// Bin index of every (row, feature), row-major.
#[derive(Clone, Debug)]
pub struct BinnedRows {
    n_features: usize,
    bins: Vec<u16>,
}

impl BinnedRows {
    pub fn new(rows: &[Vec<f64>], edges: &BinEdges) -> Self {
        let n_features = edges.n_features();
        let mut bins = Vec::with_capacity(rows.len() * n_features);
        for r in rows {
            for j in 0..n_features {
                bins.push(edges.bin_of(j, r[j]) as u16);
            }
        }
        BinnedRows { n_features, bins }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u16] {
        &self.bins[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// Per-feature, per-bin accumulated `(G, H)` plus the node total.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Arc<BinEdges>,
    pub bins: Vec<Vec<GradPair>>,
    pub total: GradPair,
}

impl Histogram {
    pub fn zeros(edges: Arc<BinEdges>) -> Self {
        let bins = (0..edges.n_features()).map(|j| vec![GradPair::default(); edges.n_bins(j)]).collect();
        Histogram {
            edges,
            bins,
            total: GradPair::default(),
        }
    }

    pub(crate) fn from_binned(binned: &BinnedRows, idx: &[usize], g: &[f64], h: &[f64], edges: Arc<BinEdges>) -> Self {
        let mut hist = Histogram::zeros(edges);
        for &i in idx {
            let p = GradPair::new(g[i], h[i]);
            for (j, &b) in binned.row(i).iter().enumerate() {
                hist.bins[j][b as usize] += p;
            }
            hist.total += p;
        }
        hist
    }

    /// Bin-wise sum. Both histograms must share edges.
    pub fn accumulate(&mut self, other: &Histogram) {
        debug_assert_eq!(*self.edges, *other.edges);
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        self.total += other.total;
    }

    pub fn feature_total(&self, feature: usize) -> GradPair {
        self.bins[feature].iter().fold(GradPair::default(), |acc, &p| acc + p)
    }
}

pub fn build_histogram(rows: &[Vec<f64>], g: &[f64], h: &[f64], edges: Arc<BinEdges>) -> Result<Histogram> {
    if g.len() != rows.len() || h.len() != rows.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} gradients and {} Hessians",
            rows.len(),
            g.len(),
            h.len()
        )));
    }
    let binned = BinnedRows::new(rows, &edges);
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(Histogram::from_binned(&binned, &idx, g, h, edges))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: NodeStats,
    pub right: NodeStats,
}

/// Highest-gain `(feature, threshold)` with both children above
/// `min_child_hessian`. Ties keep the lowest feature, then lowest threshold.
pub fn best_split(hist: &Histogram, lambda: f64, gamma: f64, min_child_hessian: f64) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for (j, bins) in hist.bins.iter().enumerate() {
        let total = hist.feature_total(j);
        let edges = &hist.edges.per_feature[j];
        let mut left = GradPair::default();
        for (k, &t) in edges.iter().enumerate() {
            left += bins[k];
            let right = total - left;
            if left.h < min_child_hessian || right.h < min_child_hessian {
                continue;
            }
            if left.h + lambda <= 0.0 || right.h + lambda <= 0.0 {
                continue;
            }
            let gain = split_gain(left.g, left.h, right.g, right.h, lambda, gamma);
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature: j,
                    threshold: t,
                    gain,
                    left: left.into(),
                    right: right.into(),
                });
            }
        }
    }
    best
}
