//! In-process simulation of horizontal federated boosting protocols and the
//! per-client transcripts an observer receives.

mod histogram;
mod protocols;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::defense::DPConfig;
use crate::error::{Error, Result};
use crate::gbdt::{BoostParams, Ensemble};
use crate::tabular::Dataset;

pub use protocols::{run_bagging, run_cyclic, run_fedxgbllr, run_histogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Bagging,
    Cyclic,
    Fedxgbllr,
    Histogram,
    HardenedHistogram,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Bagging,
        Protocol::Cyclic,
        Protocol::Fedxgbllr,
        Protocol::Histogram,
        Protocol::HardenedHistogram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Bagging => "bagging",
            Protocol::Cyclic => "cyclic",
            Protocol::Fedxgbllr => "fedxgbllr",
            Protocol::Histogram => "histogram",
            Protocol::HardenedHistogram => "hardened_histogram",
        }
    }

    /// Histogram protocols train one shared model over the union of all clients.
    pub fn is_histogram(self) -> bool {
        matches!(self, Protocol::Histogram | Protocol::HardenedHistogram)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol {s:?}")))
    }
}

/// `rounds` counts boosting rounds for bagging, cyclic and the histogram
/// protocols, and weight-fitting steps for fedxgbllr, whose clients each
/// train `boost.n_trees` local trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub protocol: Protocol,
    pub n_clients: usize,
    pub rounds: usize,
    #[serde(default)]
    pub boost: BoostParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DPConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl FedConfig {
    pub fn new(protocol: Protocol, n_clients: usize, rounds: usize, boost: BoostParams) -> Self {
        FedConfig {
            protocol,
            n_clients,
            rounds,
            boost,
            defense: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients < 1 {
            return Err(Error::Config("n_clients must be at least 1".into()));
        }
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        self.boost.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d) = &self.defense {
            if !self.protocol.is_histogram() {
                return Err(Error::Config(format!(
                    "the histogram defense does not apply to the {} protocol",
                    self.protocol
                )));
            }
            d.validate()?;
        }
        Ok(())
    }

    /// Number of trees the global model grows per output.
    pub fn boosting_rounds(&self) -> usize {
        match self.protocol {
            Protocol::Fedxgbllr => self.boost.n_trees,
            _ => self.rounds,
        }
    }
}

/// Trees received in one protocol round, as indices into the view's model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    pub trees: Vec<usize>,
}

/// Everything one client observes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientView {
    pub observer: usize,
    pub protocol: Protocol,
    pub n_clients: usize,
    pub params: BoostParams,
    pub model: Ensemble,
    pub round_log: Vec<RoundEntry>,
}

impl ClientView {
    /// Node statistics are absent from the received trees.
    pub fn is_withheld(&self) -> bool {
        self.model.trees.iter().any(|t| !t.tree.has_stats())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FedOutcome {
    /// Trees with true authorship tags.
    pub global: Ensemble,
    pub views: Vec<ClientView>,
    /// Per-tree weights fitted after the fedxgbllr sharing round.
    pub weights: Option<Vec<f64>>,
}

/// Runs the configured protocol.
pub fn run(clients: &[Dataset], cfg: &FedConfig) -> Result<FedOutcome> {
    check_clients(clients, cfg)?;
    match cfg.protocol {
        Protocol::Bagging => run_bagging(clients, cfg),
        Protocol::Cyclic => run_cyclic(clients, cfg),
        Protocol::Fedxgbllr => run_fedxgbllr(clients, cfg),
        Protocol::Histogram | Protocol::HardenedHistogram => run_histogram(clients, cfg),
    }
}

fn check_clients(clients: &[Dataset], cfg: &FedConfig) -> Result<()> {
    cfg.validate()?;
    if clients.len() != cfg.n_clients {
        return Err(Error::Config(format!(
            "config names {} clients but {} datasets were given",
            cfg.n_clients,
            clients.len()
        )));
    }
    let first = &clients[0];
    for (c, d) in clients.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::Empty(format!("client {c} holds no rows")));
        }
        if d.schema != first.schema {
            return Err(Error::SchemaMismatch(format!("client {c} uses a different schema")));
        }
    }
    Ok(())
}
