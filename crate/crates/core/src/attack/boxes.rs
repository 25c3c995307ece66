use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::gbdt::{Node, PathStep, Tree};
use crate::tabular::{FeatureKind, FeatureSchema, FeatureStats};

/// Numerical range `[lo, hi)`, or the single point `{lo}` when `lo == hi`.
/// Infinite bounds serialize as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(serialize_with = "ser_bound", deserialize_with = "de_lo")]
    pub lo: f64,
    #[serde(serialize_with = "ser_bound", deserialize_with = "de_hi")]
    pub hi: f64,
}

fn ser_bound<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_lo<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

fn de_hi<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Interval {
    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    /// Some value `< t` lies in the range.
    pub fn admits_below(&self, t: f64) -> bool {
        self.lo < t
    }

    /// Some value `>= t` lies in the range.
    pub fn admits_at_or_above(&self, t: f64) -> bool {
        if self.is_point() {
            self.lo >= t
        } else {
            self.hi > t
        }
    }

    /// Intersects the closed window `[a, b]`.
    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        if self.is_point() {
            a <= self.lo && self.lo <= b
        } else {
            self.lo <= b && a < self.hi
        }
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Constraint {
    Numerical(Interval),
    /// Ascending candidate category indices.
    Categorical { candidates: Vec<usize> },
}

/// Per-feature constraints of one reconstructed sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureBox {
    pub features: Vec<Constraint>,
}

impl FeatureBox {
    /// No constraint on any feature.
    pub fn unconstrained(schema: &FeatureSchema) -> Self {
        FeatureBox {
            features: schema
                .features
                .iter()
                .map(|f| match f.kind {
                    FeatureKind::Numerical => Constraint::Numerical(Interval::FULL),
                    FeatureKind::Categorical => Constraint::Categorical {
                        candidates: (0..f.category_count()).collect(),
                    },
                })
                .collect(),
        }
    }

    /// Zero-width box around an observed row.
    pub fn exact(schema: &FeatureSchema, row: &[f64]) -> Self {
        FeatureBox {
            features: schema
                .features
                .iter()
                .zip(row)
                .map(|(f, &x)| match f.kind {
                    FeatureKind::Numerical => Constraint::Numerical(Interval::point(x)),
                    FeatureKind::Categorical => Constraint::Categorical {
                        candidates: vec![x as usize],
                    },
                })
                .collect(),
        }
    }

    /// Whether the predicate `x[feature] < t` (`left`) or its negation can hold.
    pub fn admits(&self, feature: usize, t: f64, left: bool) -> bool {
        match &self.features[feature] {
            Constraint::Numerical(iv) => {
                if left {
                    iv.admits_below(t)
                } else {
                    iv.admits_at_or_above(t)
                }
            }
            Constraint::Categorical { candidates } => candidates.iter().any(|&c| ((c as f64) < t) == left),
        }
    }

    /// Narrows by one predicate. Callers check `admits` first.
    pub fn restrict(&mut self, feature: usize, t: f64, left: bool) {
        match &mut self.features[feature] {
            Constraint::Numerical(iv) => {
                if iv.is_point() {
                    return;
                }
                if left {
                    iv.hi = iv.hi.min(t);
                } else {
                    iv.lo = iv.lo.max(t);
                }
            }
            Constraint::Categorical { candidates } => candidates.retain(|&c| ((c as f64) < t) == left),
        }
    }

    pub fn restrict_path(&mut self, path: &[PathStep]) {
        for s in path {
            self.restrict(s.feature, s.threshold, s.left);
        }
    }

    pub fn admits_path(&self, path: &[PathStep]) -> bool {
        let mut b = self.clone();
        for s in path {
            if !b.admits(s.feature, s.threshold, s.left) {
                return false;
            }
            b.restrict(s.feature, s.threshold, s.left);
        }
        true
    }

    /// `self` lies inside `other` on every feature.
    pub fn is_subset_of(&self, other: &FeatureBox) -> bool {
        self.features.iter().zip(&other.features).all(|(a, b)| match (a, b) {
            (Constraint::Numerical(x), Constraint::Numerical(y)) => y.contains(x),
            (Constraint::Categorical { candidates: x }, Constraint::Categorical { candidates: y }) => {
                x.iter().all(|c| y.binary_search(c).is_ok())
            }
            _ => false,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.features.iter().any(|c| match c {
            Constraint::Numerical(iv) => iv.lo > iv.hi,
            Constraint::Categorical { candidates } => candidates.is_empty(),
        })
    }

    /// Leaves of `tree` whose path conjunction intersects the box, left first.
    pub fn reachable_leaves(&self, tree: &Tree) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, self.clone())];
        while let Some((id, b)) = stack.pop() {
            match tree.nodes[id] {
                Node::Leaf { .. } => out.push(id),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if b.admits(feature, threshold, false) {
                        let mut r = b.clone();
                        r.restrict(feature, threshold, false);
                        stack.push((right, r));
                    }
                    if b.admits(feature, threshold, true) {
                        let mut l = b;
                        l.restrict(feature, threshold, true);
                        stack.push((left, l));
                    }
                }
            }
        }
        assert!(!out.is_empty(), "a non-empty box reaches at least one leaf");
        out
    }

    /// Representative row: interval midpoints with infinite ends clamped to
    /// `bounds`, and the middle candidate of each categorical set.
    pub fn midpoint(&self, bounds: &FeatureStats) -> Vec<f64> {
        self.features
            .iter()
            .enumerate()
            .map(|(j, c)| match c {
                Constraint::Numerical(iv) => {
                    let (min, max) = bounds.range(j).unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                    let lo = if iv.lo.is_finite() { iv.lo } else { min };
                    let hi = if iv.hi.is_finite() { iv.hi } else { max };
                    let (lo, hi) = (lo.min(hi), hi.max(lo));
                    0.5 * (lo + hi)
                }
                Constraint::Categorical { candidates } => candidates[(candidates.len() - 1) / 2] as f64,
            })
            .collect()
    }
}
