//! Dataset reconstruction from shared tree statistics. Phase 1 inverts the
//! victim's first tree into per-leaf sample counts, labels and feature boxes;
//! phase 2 assigns those samples to the leaves of every later tree, shrinking
//! their boxes.

mod boxes;
mod chains;
mod export;
mod phase1;
mod phase2;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gbdt::{BoostParams, Objective};

pub use boxes::{Constraint, FeatureBox, Interval};
pub use chains::{identify_tree_chains, TreeChains};
pub use export::{write_csv_midpoints, write_ranges};
pub use phase1::{infer_label_distribution, infer_leaf_counts, init_dataset, LabelSplit, LeafCount};
pub use phase2::{feature_range_inference, reachable_leaves, surrogate_foreign_leaf, update_sample_stats, TreeOutcome};
pub use run::{attack, AttackOptions, AttackReport, Snapshot};

/// Whose data is reconstructed: one client, or the union of all clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VictimRepr", try_from = "VictimRepr")]
pub enum Victim {
    Client(usize),
    Global,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VictimRepr {
    Id(usize),
    Name(String),
}

impl From<Victim> for VictimRepr {
    fn from(v: Victim) -> Self {
        match v {
            Victim::Client(c) => VictimRepr::Id(c),
            Victim::Global => VictimRepr::Name("global".into()),
        }
    }
}

impl TryFrom<VictimRepr> for Victim {
    type Error = String;
    fn try_from(r: VictimRepr) -> Result<Self, String> {
        match r {
            VictimRepr::Id(c) => Ok(Victim::Client(c)),
            VictimRepr::Name(s) => s.parse(),
        }
    }
}

impl FromStr for Victim {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("global") {
            return Ok(Victim::Global);
        }
        s.parse::<usize>()
            .map(Victim::Client)
            .map_err(|_| format!("victim must be a client id or \"global\", got {s:?}"))
    }
}

impl fmt::Display for Victim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Victim::Client(c) => write!(f, "{c}"),
            Victim::Global => f.write_str("global"),
        }
    }
}

/// One reconstructed record. `p`, `g`, `h` and `margin` hold one entry per
/// model output (one for binary, K for multiclass).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedSample {
    #[serde(rename = "box")]
    pub bounds: FeatureBox,
    pub label: usize,
    pub p: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub margin: Vec<f64>,
    /// Leaf of the victim's first tree (of the label's class tree in multiclass).
    pub origin_leaf: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedDataset {
    pub samples: Vec<ReconstructedSample>,
    pub victim: Victim,
    pub source_params: BoostParams,
    pub n_classes: usize,
    pub objective: Objective,
}

impl ReconstructedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.objective.n_outputs(self.n_classes)
    }
}
