//! Experiment runner: partition, federated training, attack and evaluation
//! driven by one TOML spec. Every stage reads its inputs from, and writes
//! its outputs to, the run's output directory, so stages can also be run
//! one at a time.

mod spec;

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use spec::{AttackSpec, Axis, DataSpec, EvalSpec, ExperimentSpec, PartitionSpec, Synthetic};

use crate::attack::{attack, write_ranges, AttackOptions, AttackReport, Victim};
use crate::error::{Error, Result};
use crate::eval::{reconstruction_accuracy, tolerances_from, top_k_feature_ra, utility_metrics_weighted, MatchReport, Utility};
use crate::federation::{run, ClientView, FedOutcome};
use crate::gbdt::Ensemble;
use crate::rng::{derive_seed, stream};
use crate::tabular::{dirichlet_partition, feature_stats, load_csv, synth, train_test_split, write_csv, Dataset, FeatureSchema};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Training,
    Attack,
    Evaluation,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 1,
            Stage::Training => 2,
            Stage::Attack => 3,
            Stage::Evaluation => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Training => "training",
            Stage::Attack => "attack",
            Stage::Evaluation => "evaluation",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage.as_str(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait At<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> At<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Command-line overrides applied on top of a loaded spec.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub time_limit: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(o) = &self.out {
            spec.out = Some(o.clone());
        }
        if let Some(t) = self.time_limit {
            spec.attack.time_limit = t;
        }
    }
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: String,
    pub depth: usize,
    pub n_trees: usize,
    pub epsilon: String,
    #[serde(rename = "RA_all")]
    pub ra_all: f64,
    #[serde(rename = "RA_topk")]
    pub ra_topk: f64,
    #[serde(rename = "RA_phase1")]
    pub ra_phase1: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "AUC")]
    pub auc: f64,
    pub wall_clock: f64,
}

/// Client shards and the held-out test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub clients: Vec<Dataset>,
    pub test: Dataset,
}

pub(crate) const CLIENTS_DIR: &str = "clients";
pub(crate) const SCHEMA_FILE: &str = "schema.toml";
pub(crate) const TEST_FILE: &str = "test.csv";
pub(crate) const MODEL_FILE: &str = "global_model.json";
pub(crate) const WEIGHTS_FILE: &str = "weights.json";
pub(crate) const REPORT_FILE: &str = "attack_report.json";
pub(crate) const SUMMARY_FILE: &str = "summary.csv";

fn view_file(observer: usize) -> String {
    format!("view_{observer}.json")
}

fn out_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Loads the configured dataset.
pub fn load_data(spec: &ExperimentSpec) -> Result<Dataset> {
    let d = &spec.data;
    match (&d.path, &d.schema, d.synthetic) {
        (Some(p), Some(s), None) => load_csv(p, &FeatureSchema::from_path(s)?, d.missing),
        (None, None, Some(kind)) => {
            let seed = derive_seed(spec.seed, "synthetic", &[]);
            Ok(match kind {
                Synthetic::Demo => synth::two_feature_demo(),
                Synthetic::Pima => synth::pima_like(d.rows.unwrap_or(728), seed),
                Synthetic::Stroke => synth::stroke_like(d.rows.unwrap_or(5000), seed),
            })
        }
        _ => Err(Error::Config("data needs either path and schema, or synthetic".into())),
    }
}

fn iid_partition(data: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n > data.len() {
        return Err(Error::Config(format!("{n} clients but only {} rows", data.len())));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut stream(seed, "iid", &[]));
    Ok((0..n)
        .map(|c| {
            let mut part: Vec<usize> = idx.iter().skip(c).step_by(n).copied().collect();
            part.sort_unstable();
            data.subset(&part)
        })
        .collect())
}

/// Splits off the test set, then shards the rest across clients.
pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let data = load_data(spec)?;
    let frac = spec.evaluation.test_fraction;
    let (train, test) = if frac > 0.0 {
        train_test_split(&data, frac, derive_seed(spec.seed, "split", &[]))?
    } else {
        (data.clone(), data)
    };
    let n = spec.federation.n_clients;
    let seed = derive_seed(spec.seed, "partition", &[]);
    let clients = if n == 1 {
        vec![train]
    } else {
        match spec.partition {
            PartitionSpec::Dirichlet { alpha } => dirichlet_partition(&train, n, alpha, seed)?,
            PartitionSpec::Iid => iid_partition(&train, n, seed)?,
        }
    };
    Ok(Prepared {
        schema: test.schema.clone(),
        clients,
        test,
    })
}

pub fn write_prepared(p: &Prepared, out: &Path) -> Result<()> {
    let dir = out.join(CLIENTS_DIR);
    mkdir(&dir)?;
    let schema = out.join(SCHEMA_FILE);
    std::fs::write(&schema, p.schema.to_toml()).map_err(|e| Error::io(&schema, e))?;
    for (c, d) in p.clients.iter().enumerate() {
        write_csv(d, dir.join(format!("client_{c}.csv")))?;
    }
    write_csv(&p.test, out.join(TEST_FILE))
}

pub fn read_prepared(out: &Path, n_clients: usize) -> Result<Prepared> {
    let schema = FeatureSchema::from_path(out.join(SCHEMA_FILE))?;
    let policy = Default::default();
    let clients = (0..n_clients)
        .map(|c| load_csv(out.join(CLIENTS_DIR).join(format!("client_{c}.csv")), &schema, policy))
        .collect::<Result<Vec<_>>>()?;
    let test = load_csv(out.join(TEST_FILE), &schema, policy)?;
    Ok(Prepared { schema, clients, test })
}

/// Runs the federated protocol with seeds derived from the spec's root.
pub fn train(spec: &ExperimentSpec, p: &Prepared) -> Result<FedOutcome> {
    let mut cfg = spec.federation.clone();
    cfg.seed = derive_seed(spec.seed, "federation", &[]);
    if let Some(d) = &mut cfg.defense {
        d.seed = derive_seed(spec.seed, "defense", &[]);
    }
    run(&p.clients, &cfg)
}

pub fn write_training(spec: &ExperimentSpec, outcome: &FedOutcome, out: &Path) -> Result<()> {
    mkdir(out)?;
    outcome.global.save(out.join(MODEL_FILE))?;
    if let Some(w) = &outcome.weights {
        write_json(w, &out.join(WEIGHTS_FILE))?;
    }
    let observer = spec.attack.observer();
    outcome.views[observer].save(out.join(view_file(observer)))
}

pub fn attack_options(spec: &ExperimentSpec) -> AttackOptions {
    let a = &spec.attack;
    AttackOptions {
        victim: a.victim,
        chain: a.chain,
        time_limit: a.time_limit,
        max_samples: a.max_samples,
        snapshot_every: None,
        timing: a.timing,
    }
}

pub fn run_attack(spec: &ExperimentSpec, view: &ClientView, schema: &FeatureSchema) -> Result<AttackReport> {
    attack(view, schema, &attack_options(spec))
}

pub fn write_attack(report: &AttackReport, schema: &FeatureSchema, out: &Path) -> Result<()> {
    report.save(out.join(REPORT_FILE))?;
    write_ranges(&report.complete.dataset, schema, out.join("reconstruction.csv"))
}

/// Ground truth for the configured victim.
pub fn victim_data(spec: &ExperimentSpec, p: &Prepared) -> Result<Dataset> {
    match spec.attack.victim {
        Victim::Global => Dataset::concat(&p.clients),
        Victim::Client(c) => {
            let c = spec.attack.chain.unwrap_or(c);
            p.clients
                .get(c)
                .cloned()
                .ok_or_else(|| Error::Config(format!("victim {c} outside 0..{}", p.clients.len())))
        }
    }
}

/// Everything the evaluation stage computes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub all: MatchReport,
    pub top_k: MatchReport,
    pub phase1: MatchReport,
    pub utility: Utility,
    pub summary: Summary,
}

pub fn evaluate(
    spec: &ExperimentSpec,
    p: &Prepared,
    global: &Ensemble,
    weights: Option<&[f64]>,
    report: &AttackReport,
) -> Result<Evaluation> {
    let truth = victim_data(spec, p)?;
    let tol = tolerances_from(&feature_stats(&truth)?);
    let all = reconstruction_accuracy(&report.complete.dataset, &truth, &tol)?;
    let k = spec.attack.top_k.min(truth.n_features() + 1);
    let top_k = top_k_feature_ra(&report.complete.dataset, &truth, &tol, global, k)?;
    let phase1 = reconstruction_accuracy(&report.phase1.dataset, &truth, &tol)?;
    let utility = utility_metrics_weighted(global, &p.test, weights)?;
    let fed = &spec.federation;
    let epsilon = match &fed.defense {
        None => None,
        Some(d) => Some(d.epsilon_histogram(fed.boosting_rounds())?),
    };
    let summary = Summary {
        protocol: fed.protocol.to_string(),
        depth: fed.boost.max_depth,
        n_trees: fed.boosting_rounds(),
        epsilon: spec::epsilon_label(epsilon),
        ra_all: all.ra,
        ra_topk: top_k.ra,
        ra_phase1: phase1.ra,
        f1: utility.f1,
        auc: utility.auc,
        wall_clock: report.wall_clock_s,
    };
    Ok(Evaluation {
        all,
        top_k,
        phase1,
        utility,
        summary,
    })
}

pub fn write_evaluation(e: &Evaluation, out: &Path) -> Result<()> {
    write_json(&e.all, &out.join("match_report.json"))?;
    write_json(&e.top_k, &out.join("match_report_topk.json"))?;
    write_json(&e.phase1, &out.join("match_report_phase1.json"))?;
    write_json(&e.utility, &out.join("utility.json"))?;
    write_rows(std::slice::from_ref(&e.summary), &out.join(SUMMARY_FILE))
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `partition` subcommand.
pub fn cmd_partition(spec: &ExperimentSpec) -> StageResult<Prepared> {
    let p = prepare(spec).at(Stage::Config)?;
    write_prepared(&p, &out_dir(spec)).at(Stage::Config)?;
    Ok(p)
}

/// `train` subcommand: reuses a partition written earlier when present.
pub fn cmd_train(spec: &ExperimentSpec) -> StageResult<FedOutcome> {
    spec.validate().at(Stage::Config)?;
    let out = out_dir(spec);
    let p = if out.join(SCHEMA_FILE).is_file() {
        read_prepared(&out, spec.federation.n_clients).at(Stage::Config)?
    } else {
        cmd_partition(spec)?
    };
    let outcome = train(spec, &p).at(Stage::Training)?;
    write_training(spec, &outcome, &out).at(Stage::Training)?;
    Ok(outcome)
}

/// `attack` subcommand: reads the observer's view written by `train`.
pub fn cmd_attack(spec: &ExperimentSpec) -> StageResult<AttackReport> {
    spec.validate().at(Stage::Config)?;
    let out = out_dir(spec);
    let schema = FeatureSchema::from_path(out.join(SCHEMA_FILE)).at(Stage::Attack)?;
    let view = ClientView::load(out.join(view_file(spec.attack.observer()))).at(Stage::Attack)?;
    let report = run_attack(spec, &view, &schema).at(Stage::Attack)?;
    write_attack(&report, &schema, &out).at(Stage::Attack)?;
    Ok(report)
}

/// `evaluate` subcommand: scores the report written by `attack`.
pub fn cmd_evaluate(spec: &ExperimentSpec) -> StageResult<Evaluation> {
    spec.validate().at(Stage::Config)?;
    let out = out_dir(spec);
    let ev = (|| {
        let p = read_prepared(&out, spec.federation.n_clients)?;
        let global = Ensemble::load(out.join(MODEL_FILE))?;
        let weights_path = out.join(WEIGHTS_FILE);
        let weights: Option<Vec<f64>> = if weights_path.is_file() { Some(read_json(&weights_path)?) } else { None };
        let report = AttackReport::load(out.join(REPORT_FILE))?;
        evaluate(spec, &p, &global, weights.as_deref(), &report)
    })()
    .at(Stage::Evaluation)?;
    write_evaluation(&ev, &out).at(Stage::Evaluation)?;
    Ok(ev)
}

/// The whole pipeline in memory, writing every stage's outputs as it goes.
/// A failing stage leaves earlier outputs intact.
pub fn cmd_run(spec: &ExperimentSpec) -> StageResult<Evaluation> {
    let out = out_dir(spec);
    let p = cmd_partition(spec)?;
    let outcome = train(spec, &p).at(Stage::Training)?;
    write_training(spec, &outcome, &out).at(Stage::Training)?;
    let view = &outcome.views[spec.attack.observer()];
    let report = run_attack(spec, view, &p.schema).at(Stage::Attack)?;
    write_attack(&report, &p.schema, &out).at(Stage::Attack)?;
    let ev = evaluate(spec, &p, &outcome.global, outcome.weights.as_deref(), &report).at(Stage::Evaluation)?;
    write_evaluation(&ev, &out).at(Stage::Evaluation)?;
    Ok(ev)
}

/// One sweep point: the axis value and its summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub summary: Summary,
}

/// Column order of [`Summary`] rows.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "protocol", "depth", "n_trees", "epsilon", "RA_all", "RA_topk", "RA_phase1", "F1", "AUC", "wall_clock",
];

fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let header = ["axis", "value"].into_iter().chain(SUMMARY_COLUMNS);
    w.write_record(header)?;
    for r in rows {
        w.serialize((&r.axis, &r.value, &r.summary))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every axis point under `<out>/<axis>_<value>/` and writes the
/// aggregated `sweep.csv`.
pub fn cmd_sweep(spec: &ExperimentSpec, axis: Option<&Axis>) -> StageResult<Vec<SweepRow>> {
    let parsed;
    let axis = match (axis, &spec.sweep) {
        (Some(a), _) => a,
        (None, Some(s)) => {
            parsed = s.parse::<Axis>().at(Stage::Config)?;
            &parsed
        }
        (None, None) => return Err(Error::Config("sweep needs an axis".into())).at(Stage::Config),
    };
    let out = out_dir(spec);
    let mut rows = Vec::new();
    for (k, value) in axis.labels().into_iter().enumerate() {
        let mut point = axis.apply(spec, k);
        point.sweep = None;
        point.out = Some(out.join(format!("{}_{value}", axis.name())));
        let ev = cmd_run(&point)?;
        rows.push(SweepRow {
            axis: axis.name().to_string(),
            value,
            summary: ev.summary,
        });
    }
    mkdir(&out).at(Stage::Evaluation)?;
    write_sweep(&rows, &out.join("sweep.csv")).at(Stage::Evaluation)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_spec(out: &Path) -> ExperimentSpec {
        let mut s = ExperimentSpec::from_toml(
            r#"
seed = 11
[data]
synthetic = "demo"
[federation]
protocol = "fedxgbllr"
n_clients = 2
rounds = 1
boost = { n_trees = 1, max_depth = 2 }
[attack]
victim = 0
timing = false
[evaluation]
test_fraction = 0.0
"#,
        )
        .unwrap();
        s.out = Some(out.to_path_buf());
        s
    }

    #[test]
    fn stage_exit_codes() {
        let codes: Vec<i32> = [Stage::Config, Stage::Training, Stage::Attack, Stage::Evaluation]
            .iter()
            .map(|s| s.exit_code())
            .collect();
        assert_eq!(codes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn iid_partition_covers_every_row_once() {
        let d = synth::pima_like(101, 1);
        let parts = iid_partition(&d, 4, 9).unwrap();
        assert_eq!(parts.iter().map(Dataset::len).sum::<usize>(), 101);
        assert!(parts.iter().all(|p| p.len() >= 25));
    }

    #[test]
    fn demo_fedxgbllr_reconstructs_the_victim_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ev = cmd_run(&demo_spec(dir.path())).unwrap();
        assert_eq!(ev.summary.ra_all, 1.0);
        assert_eq!(ev.summary.protocol, "fedxgbllr");
        assert_eq!(ev.summary.epsilon, "inf");
        for f in [SUMMARY_FILE, REPORT_FILE, MODEL_FILE, "view_0.json", "reconstruction.csv"] {
            assert!(dir.path().join(f).is_file(), "{f} missing");
        }
    }

    #[test]
    fn staged_commands_match_the_full_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let full = cmd_run(&demo_spec(a.path())).unwrap();
        let sb = demo_spec(b.path());
        cmd_partition(&sb).unwrap();
        cmd_train(&sb).unwrap();
        cmd_attack(&sb).unwrap();
        let staged = cmd_evaluate(&sb).unwrap();
        assert_eq!(full.summary, staged.summary);
        let read = |d: &Path| std::fs::read(d.join(REPORT_FILE)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }

    #[test]
    fn attack_before_training_is_an_attack_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_attack(&demo_spec(dir.path())).unwrap_err();
        assert_eq!(err.stage, Stage::Attack);
    }
}
