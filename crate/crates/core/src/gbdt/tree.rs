use serde::{Deserialize, Serialize};

/// Aggregated gradient `G` and Hessian `H` of the samples routed to a node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl NodeStats {
    pub fn new(g: f64, h: f64) -> Self {
        NodeStats { g, h }
    }
}

/// A tree node. `stats` is `None` when the protocol withholds statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "NodeRecord", try_from = "NodeRecord")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: Option<f64>,
        stats: Option<NodeStats>,
    },
    Leaf {
        value: f64,
        stats: Option<NodeStats>,
    },
}

impl Node {
    pub fn stats(&self) -> Option<NodeStats> {
        match self {
            Node::Split { stats, .. } | Node::Leaf { stats, .. } => *stats,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Flat at-rest form of a node.
#[derive(Serialize, Deserialize)]
struct NodeRecord {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf_value: Option<f64>,
}

impl From<Node> for NodeRecord {
    fn from(n: Node) -> Self {
        let stats = n.stats();
        let mut rec = NodeRecord {
            kind: String::new(),
            feature: None,
            threshold: None,
            left: None,
            right: None,
            gain: None,
            g: stats.map(|s| s.g),
            h: stats.map(|s| s.h),
            leaf_value: None,
        };
        match n {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                gain,
                ..
            } => {
                rec.kind = "split".into();
                rec.feature = Some(feature);
                rec.threshold = Some(threshold);
                rec.left = Some(left);
                rec.right = Some(right);
                rec.gain = gain;
            }
            Node::Leaf { value, .. } => {
                rec.kind = "leaf".into();
                rec.leaf_value = Some(value);
            }
        }
        rec
    }
}

impl TryFrom<NodeRecord> for Node {
    type Error = String;

    fn try_from(r: NodeRecord) -> Result<Self, String> {
        let stats = match (r.g, r.h) {
            (Some(g), Some(h)) => Some(NodeStats { g, h }),
            (None, None) => None,
            _ => return Err("node carries only one of G and H".into()),
        };
        match r.kind.as_str() {
            "split" => Ok(Node::Split {
                feature: r.feature.ok_or("split without feature")?,
                threshold: r.threshold.ok_or("split without threshold")?,
                left: r.left.ok_or("split without left child")?,
                right: r.right.ok_or("split without right child")?,
                gain: r.gain,
                stats,
            }),
            "leaf" => Ok(Node::Leaf {
                value: r.leaf_value.ok_or("leaf without leaf_value")?,
                stats,
            }),
            other => Err(format!("unknown node kind {other:?}")),
        }
    }
}

/// One decision on a root-to-node path: `x[feature] < threshold` when `left`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathStep {
    pub feature: usize,
    pub threshold: f64,
    pub left: bool,
}

/// Arena-allocated binary tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(value: f64, stats: Option<NodeStats>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, stats }],
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Leaf reached by `row`: `x < threshold` goes left.
    pub fn route(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if row[feature] < threshold { left } else { right },
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_value(self.route(row))
    }

    pub fn leaf_value(&self, id: usize) -> f64 {
        match self.nodes[id] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    /// Leaf ids in depth-first, left-first order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                Node::Leaf { .. } => out.push(id),
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    /// Decisions from the root down to `target`.
    pub fn path_to(&self, target: usize) -> Vec<PathStep> {
        fn go(t: &Tree, id: usize, target: usize, acc: &mut Vec<PathStep>) -> bool {
            if id == target {
                return true;
            }
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = t.nodes[id]
            {
                acc.push(PathStep { feature, threshold, left: true });
                if go(t, left, target, acc) {
                    return true;
                }
                acc.last_mut().unwrap().left = false;
                if go(t, right, target, acc) {
                    return true;
                }
                acc.pop();
            }
            false
        }
        let mut acc = Vec::new();
        go(self, 0, target, &mut acc);
        acc
    }

    pub fn has_stats(&self) -> bool {
        self.nodes.iter().all(|n| n.stats().is_some())
    }

    /// Copy with every `G`, `H` and gain removed; only splits and leaf values remain.
    pub fn withhold_stats(&self) -> Tree {
        Tree {
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain: None,
                        stats: None,
                    },
                    Node::Leaf { value, .. } => Node::Leaf { value, stats: None },
                })
                .collect(),
        }
    }

    /// Split decisions and leaf values only, for structural comparisons.
    pub fn structure(&self) -> Vec<(Option<(usize, f64)>, Option<f64>)> {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Split { feature, threshold, .. } => (Some((feature, threshold)), None),
                Node::Leaf { value, .. } => (None, Some(value)),
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn demo_tree() -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 60.0,
                    left: 1,
                    right: 2,
                    gain: Some(1.7),
                    stats: Some(NodeStats::new(2.5, 3.75)),
                },
                Node::Leaf {
                    value: -0.381818,
                    stats: Some(NodeStats::new(3.5, 1.75)),
                },
                Node::Split {
                    feature: 1,
                    threshold: 29.0,
                    left: 3,
                    right: 4,
                    gain: Some(1.08),
                    stats: Some(NodeStats::new(-1.0, 2.0)),
                },
                Node::Leaf {
                    value: 0.3,
                    stats: Some(NodeStats::new(-2.0, 1.0)),
                },
                Node::Leaf {
                    value: -0.15,
                    stats: Some(NodeStats::new(1.0, 1.0)),
                },
            ],
        }
    }

    #[test]
    fn routing_uses_strict_less_than() {
        let t = demo_tree();
        assert_eq!(t.route(&[59.9, 40.0]), 1);
        assert_eq!(t.route(&[60.0, 28.9]), 3);
        assert_eq!(t.route(&[60.0, 29.0]), 4);
        assert_eq!(t.leaves(), vec![1, 3, 4]);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn paths() {
        let t = demo_tree();
        assert_eq!(
            t.path_to(3),
            vec![
                PathStep { feature: 0, threshold: 60.0, left: false },
                PathStep { feature: 1, threshold: 29.0, left: true }
            ]
        );
        assert!(t.path_to(0).is_empty());
    }

    #[test]
    fn serialized_keys_and_withholding() {
        let t = demo_tree();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"kind\":\"split\""));
        assert!(json.contains("\"G\":") && json.contains("\"H\":") && json.contains("\"leaf_value\":"));
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);

        let hidden = serde_json::to_string(&t.withhold_stats()).unwrap();
        assert!(!hidden.contains("\"G\"") && !hidden.contains("\"H\"") && !hidden.contains("gain"));
        assert!(!t.withhold_stats().has_stats());
        assert_eq!(t.withhold_stats().structure(), t.structure());
    }

    #[test]
    fn malformed_records_rejected() {
        let bad = r#"{"nodes":[{"kind":"leaf","G":1.0}]}"#;
        assert!(serde_json::from_str::<Tree>(bad).is_err());
        let bad = r#"{"nodes":[{"kind":"split","feature":0}]}"#;
        assert!(serde_json::from_str::<Tree>(bad).is_err());
    }
}
