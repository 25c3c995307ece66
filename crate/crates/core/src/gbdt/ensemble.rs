use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sigmoid, softmax, BoostParams, Tree};
use crate::error::{Error, Result};

/// Loss driving the trees. Binary data defaults to `Logistic`; `Softmax`
/// with two classes is allowed for cross-checking the multiclass path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Logistic,
    Softmax,
}

impl Objective {
    pub fn for_classes(n_classes: usize) -> Self {
        if n_classes > 2 {
            Objective::Softmax
        } else {
            Objective::Logistic
        }
    }

    pub fn n_outputs(self, n_classes: usize) -> usize {
        match self {
            Objective::Logistic => 1,
            Objective::Softmax => n_classes,
        }
    }
}

/// Provenance of one tree. `client_id` is `None` where the protocol hides authorship.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTag {
    pub client_id: Option<usize>,
    pub round: usize,
    pub class_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedTree {
    #[serde(flatten)]
    pub tag: TreeTag,
    #[serde(flatten)]
    pub tree: Tree,
}

/// Ordered trees; multiclass rounds hold K consecutive trees, class-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub params: BoostParams,
    pub n_classes: usize,
    pub objective: Objective,
    pub trees: Vec<TaggedTree>,
}

impl Ensemble {
    pub fn new(params: BoostParams, n_classes: usize) -> Self {
        Self::with_objective(params, n_classes, Objective::for_classes(n_classes))
    }

    pub fn with_objective(params: BoostParams, n_classes: usize, objective: Objective) -> Self {
        Ensemble {
            params,
            n_classes,
            objective,
            trees: Vec::new(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.objective.n_outputs(self.n_classes)
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Base margin plus every reached leaf value, one entry per output.
    pub fn predict_margin(&self, row: &[f64]) -> Vec<f64> {
        self.predict_margin_weighted(row, None)
    }

    /// As `predict_margin`, scaling tree `t` by `weights[t]` when given.
    pub fn predict_margin_weighted(&self, row: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
        let k = self.n_outputs();
        let mut m = vec![self.params.base_margin(k); k];
        for (t, tt) in self.trees.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[t]);
            m[tt.tag.class_index] += w * tt.tree.predict(row);
        }
        m
    }

    /// Class probabilities, length `n_classes`.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        margin_to_proba(&self.predict_margin(row), self.n_classes)
    }

    /// Trees carrying the given client tag, in ensemble order.
    pub fn trees_of(&self, client: usize) -> Vec<&TaggedTree> {
        self.trees.iter().filter(|t| t.tag.client_id == Some(client)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Ensemble = serde_json::from_str(s)?;
        let k = e.n_outputs();
        if e.trees.iter().any(|t| t.tag.class_index >= k) {
            return Err(Error::Schema("class_index exceeds the number of outputs".into()));
        }
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Converts output margins to class probabilities.
pub fn margin_to_proba(margins: &[f64], n_classes: usize) -> Vec<f64> {
    if margins.len() == 1 {
        let p = sigmoid(margins[0]);
        let mut out = vec![0.0; n_classes.max(2)];
        out[0] = 1.0 - p;
        out[1] = p;
        out
    } else {
        softmax(margins)
    }
}
