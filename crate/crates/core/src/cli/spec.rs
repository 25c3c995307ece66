use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::Victim;
use crate::defense::DPConfig;
use crate::error::{Error, Result};
use crate::federation::{FedConfig, Protocol};
use crate::tabular::MissingPolicy;

/// Built-in generators, usable in place of a CSV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synthetic {
    /// The 15-row age/BMI table.
    Demo,
    Pima,
    Stroke,
}

/// Exactly one of `path` (with `schema`) and `synthetic` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<Synthetic>,
    /// Row count for the synthetic generators; ignored by `demo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default)]
    pub missing: MissingPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Dirichlet { alpha: f64 },
    /// Uniformly shuffled, near-equal shares.
    Iid,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Dirichlet { alpha: 0.3 }
    }
}

fn default_time_limit() -> f64 {
    600.0
}

fn default_top_k() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default = "default_victim")]
    pub victim: Victim,
    /// Client whose view the attacker holds; defaults to the victim, or 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<usize>,
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    /// Off: every reported time is 0, making reports byte-reproducible.
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_victim() -> Victim {
    Victim::Global
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            victim: Victim::Global,
            observer: None,
            chain: None,
            time_limit: default_time_limit(),
            top_k: default_top_k(),
            max_samples: None,
            timing: true,
        }
    }
}

impl AttackSpec {
    pub fn observer(&self) -> usize {
        self.observer.unwrap_or(match self.victim {
            Victim::Client(c) => c,
            Victim::Global => 0,
        })
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Held-out share for F1/AUC. At 0 utility is measured on the training union.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            test_fraction: default_test_fraction(),
        }
    }
}

/// One sweep dimension and its values.
#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    Depth(Vec<usize>),
    /// `None` is the undefended run.
    Epsilon(Vec<Option<f64>>),
    NClients(Vec<usize>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Depth(_) => "depth",
            Axis::Epsilon(_) => "epsilon",
            Axis::NClients(_) => "n_clients",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Depth(v) | Axis::NClients(v) => v.len(),
            Axis::Epsilon(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value labels, in sweep order.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Axis::Depth(v) | Axis::NClients(v) => v.iter().map(|x| x.to_string()).collect(),
            Axis::Epsilon(v) => v.iter().map(|e| epsilon_label(*e)).collect(),
        }
    }

    /// The spec for point `k`.
    pub fn apply(&self, base: &ExperimentSpec, k: usize) -> ExperimentSpec {
        let mut s = base.clone();
        match self {
            Axis::Depth(v) => s.federation.boost.max_depth = v[k],
            Axis::NClients(v) => s.federation.n_clients = v[k],
            Axis::Epsilon(v) => {
                s.federation.defense = v[k].map(|e| {
                    let clip = base.federation.defense.as_ref().map_or(1.0, |d| d.clip_r);
                    DPConfig {
                        clip_r: clip,
                        ..DPConfig::per_histogram(e)
                    }
                })
            }
        }
        s
    }
}

pub(crate) fn epsilon_label(e: Option<f64>) -> String {
    e.map_or_else(|| "inf".to_string(), |e| e.to_string())
}

fn parse_list<T: FromStr>(name: &str, s: &str) -> Result<Vec<T>> {
    if let Some((a, b)) = s.split_once("..") {
        let bad = || Error::Config(format!("bad range {s:?} for {name}"));
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        // Inclusive on both ends: `3..8` is six values.
        return (a..=b)
            .map(|x| x.to_string().parse().map_err(|_| bad()))
            .collect();
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value {x:?} for {name}")))
        })
        .collect()
}

impl FromStr for Axis {
    type Err = Error;

    /// `depth=3..8`, `epsilon=inf,1,0.125`, `n_clients=3,5,10`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep axis {s:?} must look like name=values")))?;
        let axis = match name.trim() {
            "depth" => Axis::Depth(parse_list("depth", values)?),
            "n_clients" => Axis::NClients(parse_list("n_clients", values)?),
            "epsilon" => Axis::Epsilon(
                values
                    .split(',')
                    .map(|x| match x.trim() {
                        "inf" => Ok(None),
                        v => v
                            .parse::<f64>()
                            .ok()
                            .filter(|e| *e > 0.0 && e.is_finite())
                            .map(Some)
                            .ok_or_else(|| Error::Config(format!("bad epsilon {v:?}"))),
                    })
                    .collect::<Result<_>>()?,
            ),
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        };
        if axis.is_empty() {
            return Err(Error::Config("sweep axis has no values".into()));
        }
        Ok(axis)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name(), self.labels().join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Root of every random stream in the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub data: DataSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    pub federation: FedConfig,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub evaluation: EvalSpec,
    /// Default axis for `sweep`, e.g. `"depth=3..8"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a TOML file; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.data.path, &mut spec.data.schema, &mut spec.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.path, &d.schema, &d.synthetic) {
            (Some(p), Some(s), None) => {
                for f in [p, s] {
                    if !f.is_file() {
                        return Err(Error::Config(format!("{} does not exist", f.display())));
                    }
                }
            }
            (None, None, Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "data needs either path and schema, or synthetic".into(),
                ))
            }
        }
        self.federation.validate()?;
        if let PartitionSpec::Dirichlet { alpha } = self.partition {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
            }
        }
        let a = &self.attack;
        let fed = &self.federation;
        if fed.protocol.is_histogram() && a.victim != Victim::Global {
            return Err(Error::Config(format!(
                "the {} protocol trains one shared model; victim must be \"global\"",
                fed.protocol
            )));
        }
        if !fed.protocol.is_histogram() && a.victim == Victim::Global {
            return Err(Error::Config(format!("the {} protocol needs a victim client id", fed.protocol)));
        }
        if let Victim::Client(c) = a.victim {
            if c >= fed.n_clients {
                return Err(Error::Config(format!("victim {c} outside 0..{}", fed.n_clients)));
            }
        }
        if a.observer() >= fed.n_clients {
            return Err(Error::Config(format!("observer {} outside 0..{}", a.observer(), fed.n_clients)));
        }
        if a.chain.is_some() && fed.protocol != Protocol::Bagging {
            return Err(Error::Config("chain applies to the bagging protocol only".into()));
        }
        if !(a.time_limit >= 0.0) {
            return Err(Error::Config("time_limit must be non-negative".into()));
        }
        if a.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.evaluation.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        if let Some(s) = &self.sweep {
            s.parse::<Axis>()?;
        }
        Ok(())
    }
}
