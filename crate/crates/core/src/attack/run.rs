use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::chains::identify_tree_chains;
use super::phase1::{cap_counts, counts_with, labels_with, require_stats, LabelSplit, LeafCount};
use super::phase2::{feature_range_inference, refresh, surrogate_foreign_leaf, update_sample_stats, TreeOutcome};
use super::{FeatureBox, ReconstructedDataset, ReconstructedSample, Victim};
use crate::assign_opt::DEFAULT_TIME_LIMIT;
use crate::error::{Error, Result};
use crate::federation::{ClientView, Protocol};
use crate::gbdt::{margin_to_proba, Tree};
use crate::tabular::FeatureSchema;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackOptions {
    pub victim: Victim,
    /// Bagging only: which recovered chain to attack. Defaults to the victim id.
    pub chain: Option<usize>,
    /// Seconds per assignment problem.
    pub time_limit: f64,
    /// Upper bound on the reconstructed size; inferred counts are scaled down to fit.
    pub max_samples: Option<usize>,
    /// Keep a snapshot after every this many analyzed rounds.
    pub snapshot_every: Option<usize>,
    /// Record wall-clock times; when off every time is reported as 0.
    pub timing: bool,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            victim: Victim::Global,
            chain: None,
            time_limit: DEFAULT_TIME_LIMIT,
            max_samples: None,
            snapshot_every: None,
            timing: true,
        }
    }
}

impl AttackOptions {
    pub fn new(victim: Victim) -> Self {
        AttackOptions {
            victim,
            ..AttackOptions::default()
        }
    }
}

/// Reconstruction state after `rounds_analyzed` victim rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub rounds_analyzed: usize,
    #[serde(flatten)]
    pub dataset: ReconstructedDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub protocol: Protocol,
    pub victim: Victim,
    pub chain: Option<usize>,
    /// Per first-round victim tree (one per output): inferred leaf counts.
    pub leaf_counts: Vec<Vec<LeafCount>>,
    pub label_splits: Vec<Vec<LabelSplit>>,
    /// Cross-class assignments solved during multiclass first-round probing.
    pub phase1_solves: Vec<TreeOutcome>,
    pub phase1: Snapshot,
    pub snapshots: Vec<Snapshot>,
    #[serde(rename = "final")]
    pub complete: Snapshot,
    /// One entry per victim tree after the first round.
    pub per_tree: Vec<TreeOutcome>,
    pub chains_ambiguous: bool,
    pub wall_clock_s: f64,
}

/// Victim rounds (model indices per output, in round order) and the foreign
/// trees that entered the victim's training, each with its round.
struct Plan {
    units: Vec<(usize, Vec<usize>)>,
    foreign: Vec<(usize, usize)>,
    chain: Option<usize>,
    ambiguous: bool,
}

fn plan(view: &ClientView, opts: &AttackOptions) -> Result<Plan> {
    let k = view.model.n_outputs();
    let client = |what: &str| match opts.victim {
        Victim::Client(c) if c < view.n_clients => Ok(c),
        Victim::Client(c) => Err(Error::invalid(format!("victim {c} outside 0..{}", view.n_clients))),
        Victim::Global => Err(Error::invalid(format!("the {what} attack needs a victim client id"))),
    };
    let by_round = |idx: Vec<usize>| -> Vec<(usize, Vec<usize>)> {
        let mut units: Vec<(usize, Vec<usize>)> = Vec::new();
        for t in idx {
            let r = view.model.trees[t].tag.round;
            match units.last_mut() {
                Some((last, u)) if *last == r => u.push(t),
                _ => units.push((r, vec![t])),
            }
        }
        units
    };
    let foreign_of = |units: &[(usize, Vec<usize>)]| -> Vec<(usize, usize)> {
        let mine: std::collections::HashSet<usize> = units.iter().flat_map(|u| u.1.iter().copied()).collect();
        view.round_log
            .iter()
            .flat_map(|e| e.trees.iter().map(move |&t| (e.round, t)))
            .filter(|(_, t)| !mine.contains(t))
            .collect()
    };
    let p = match view.protocol {
        Protocol::HardenedHistogram => {
            return Err(Error::StatisticsWithheld("the hardened protocol shares no node statistics".into()))
        }
        Protocol::Histogram => {
            if opts.victim != Victim::Global {
                return Err(Error::invalid("histogram views only admit the global victim"));
            }
            Plan {
                units: by_round((0..view.model.len()).collect()),
                foreign: Vec::new(),
                chain: None,
                ambiguous: false,
            }
        }
        Protocol::Fedxgbllr => {
            let v = client("fedxgbllr")?;
            let idx = (0..view.model.len()).filter(|&t| view.model.trees[t].tag.client_id == Some(v)).collect();
            Plan {
                units: by_round(idx),
                foreign: Vec::new(),
                chain: None,
                ambiguous: false,
            }
        }
        Protocol::Cyclic => {
            let v = client("cyclic")?;
            let chains = identify_tree_chains(view, view.n_clients)?;
            let units: Vec<_> = by_round(chains.flat(v));
            let foreign = foreign_of(&units);
            Plan {
                units,
                foreign,
                chain: None,
                ambiguous: false,
            }
        }
        Protocol::Bagging => {
            let c = match (opts.chain, opts.victim) {
                (Some(c), _) | (None, Victim::Client(c)) => c,
                (None, Victim::Global) => return Err(Error::invalid("the bagging attack needs a chain index")),
            };
            let chains = identify_tree_chains(view, view.n_clients)?;
            if c >= chains.chains.len() {
                return Err(Error::invalid(format!("chain {c} outside 0..{}", chains.chains.len())));
            }
            let units: Vec<_> = chains.chains[c]
                .iter()
                .map(|u| (view.model.trees[u[0]].tag.round, u.clone()))
                .collect();
            let foreign = foreign_of(&units);
            Plan {
                units,
                foreign,
                chain: Some(c),
                ambiguous: chains.ambiguous,
            }
        }
    };
    if p.units.is_empty() {
        return Err(Error::Empty("the victim contributed no trees".into()));
    }
    for (r, u) in &p.units {
        if u.len() != k {
            return Err(Error::invalid(format!("round {r} has {} victim trees, expected {k}", u.len())));
        }
        for &t in u {
            require_stats(&view.model.trees[t].tree)?;
        }
    }
    Ok(p)
}

fn unit_trees<'a>(view: &'a ClientView, unit: &[usize]) -> Vec<&'a Tree> {
    let mut trees: Vec<(usize, &Tree)> = unit
        .iter()
        .map(|&t| (view.model.trees[t].tag.class_index, &view.model.trees[t].tree))
        .collect();
    trees.sort_by_key(|x| x.0);
    trees.into_iter().map(|x| x.1).collect()
}

/// Runs both phases against the victim's trees in `view`. `schema` is the
/// observer's own feature schema.
pub fn attack(view: &ClientView, schema: &FeatureSchema, opts: &AttackOptions) -> Result<AttackReport> {
    let start = Instant::now();
    let clock = |t: Instant| if opts.timing { t.elapsed().as_secs_f64() } else { 0.0 };
    let params = &view.params;
    params.validate()?;
    let plan = plan(view, opts)?;
    let n_classes = view.model.n_classes;
    let objective = view.model.objective;
    let n_out = view.model.n_outputs();
    let class_of = |t: usize| view.model.trees[t].tag.class_index;
    let base = vec![params.base_margin(n_out); n_out];

    let (r0, first) = (&plan.units[0].0, unit_trees(view, &plan.units[0].1));
    let mut foreign = plan.foreign.iter().peekable();
    let mut early: Vec<usize> = Vec::new();
    while let Some(&&(r, t)) = foreign.peek() {
        if r >= *r0 {
            break;
        }
        early.push(t);
        foreign.next();
    }

    // First-round probing: per-leaf priors from the foreign trees that preceded it.
    let prior_margin = |b: &FeatureBox| -> Vec<f64> {
        let mut m = base.clone();
        for &f in &early {
            m[class_of(f)] += surrogate_foreign_leaf(b, &view.model.trees[f].tree);
        }
        m
    };
    let mut leaf_counts = Vec::new();
    let mut label_splits = Vec::new();
    // (tree position, leaf, label, count, margin)
    let mut groups: Vec<(usize, usize, usize, usize, Vec<f64>)> = Vec::new();
    for (c, tree) in first.iter().enumerate() {
        let boxes: Vec<(usize, (FeatureBox, Option<Vec<f64>>))> = tree
            .leaves()
            .into_iter()
            .map(|j| {
                let mut b = FeatureBox::unconstrained(schema);
                let path = tree.path_to(j);
                if !b.admits_path(&path) {
                    return (j, (b, None));
                }
                b.restrict_path(&path);
                let m = prior_margin(&b);
                (j, (b, Some(m)))
            })
            .collect();
        let margin_of = |j: usize| -> Vec<f64> {
            let m = &boxes.iter().find(|x| x.0 == j).expect("leaf").1 .1;
            m.clone().unwrap_or_else(|| base.clone())
        };
        let p_of = |j: usize| {
            let p = margin_to_proba(&margin_of(j), n_classes);
            if n_out == 1 {
                p[1].clamp(1e-9, 1.0 - 1e-9)
            } else {
                p[c].clamp(1e-9, 1.0 - 1e-9)
            }
        };
        let scale = if n_out == 1 { 1.0 } else { 2.0 };
        let mut counts = counts_with(tree, |j| scale * p_of(j) * (1.0 - p_of(j)))?;
        // Contradictory paths hold no real row; noisy statistics can still give them mass.
        for k in &mut counts {
            if boxes.iter().any(|x| x.0 == k.leaf && x.1 .1.is_none()) {
                k.n = 0;
            }
        }
        let splits = labels_with(tree, &counts, params.learning_rate, params.lambda, p_of)?;
        for s in &splits {
            let m = margin_of(s.leaf);
            if n_out == 1 {
                groups.push((c, s.leaf, 1, s.n1, m.clone()));
                groups.push((c, s.leaf, 0, s.n0, m));
            } else {
                groups.push((c, s.leaf, c, s.n1, m));
            }
        }
        leaf_counts.push(counts);
        label_splits.push(splits);
    }
    if let Some(cap) = opts.max_samples {
        let mut n: Vec<usize> = groups.iter().map(|g| g.3).collect();
        cap_counts(&mut n, cap);
        for (g, n) in groups.iter_mut().zip(n) {
            g.3 = n;
        }
    }
    let mut samples = Vec::new();
    for (c, leaf, label, n, margin) in groups {
        let mut b = FeatureBox::unconstrained(schema);
        b.restrict_path(&first[c].path_to(leaf));
        for _ in 0..n {
            let mut s = ReconstructedSample {
                bounds: b.clone(),
                label,
                p: Vec::new(),
                g: Vec::new(),
                h: Vec::new(),
                margin: margin.clone(),
                origin_leaf: leaf,
            };
            refresh(&mut s, n_classes);
            samples.push(s);
        }
    }
    let mut recon = ReconstructedDataset {
        samples,
        victim: opts.victim,
        source_params: params.clone(),
        n_classes,
        objective,
    };
    if recon.is_empty() {
        return Err(Error::Empty("first-round probing inferred no samples".into()));
    }

    let mut phase1_solves = Vec::new();
    let mut deltas = vec![vec![0.0; n_out]; recon.len()];
    if n_out == 1 {
        for (d, s) in deltas.iter_mut().zip(&recon.samples) {
            d[0] = first[0].leaf_value(s.origin_leaf);
        }
    } else {
        for (c, tree) in first.iter().enumerate() {
            let (out, values) = feature_range_inference(&mut recon, tree, c, opts.time_limit)?;
            phase1_solves.push(TreeOutcome { wall: if opts.timing { out.wall } else { 0.0 }, ..out });
            for (d, v) in deltas.iter_mut().zip(values) {
                d[c] = v;
            }
        }
    }
    update_sample_stats(&mut recon, &deltas)?;
    let phase1 = Snapshot {
        rounds_analyzed: 1,
        dataset: recon.clone(),
    };

    let mut per_tree = Vec::new();
    let mut snapshots = Vec::new();
    for (done, (r, unit)) in plan.units.iter().enumerate().skip(1) {
        let mut fd = vec![vec![0.0; n_out]; recon.len()];
        let mut any = false;
        while let Some(&&(fr, t)) = foreign.peek() {
            if fr >= *r {
                break;
            }
            let tree = &view.model.trees[t].tree;
            for (d, s) in fd.iter_mut().zip(&recon.samples) {
                d[class_of(t)] += surrogate_foreign_leaf(&s.bounds, tree);
            }
            any = true;
            foreign.next();
        }
        if any {
            update_sample_stats(&mut recon, &fd)?;
        }
        let mut deltas = vec![vec![0.0; n_out]; recon.len()];
        for (c, tree) in unit_trees(view, unit).into_iter().enumerate() {
            let (out, values) = feature_range_inference(&mut recon, tree, c, opts.time_limit)?;
            per_tree.push(TreeOutcome { wall: if opts.timing { out.wall } else { 0.0 }, ..out });
            for (d, v) in deltas.iter_mut().zip(values) {
                d[c] = v;
            }
        }
        update_sample_stats(&mut recon, &deltas)?;
        if opts.snapshot_every.is_some_and(|e| e > 0 && (done + 1) % e == 0) {
            snapshots.push(Snapshot {
                rounds_analyzed: done + 1,
                dataset: recon.clone(),
            });
        }
    }
    Ok(AttackReport {
        protocol: view.protocol,
        victim: opts.victim,
        chain: plan.chain,
        leaf_counts,
        label_splits,
        phase1_solves,
        phase1,
        snapshots,
        complete: Snapshot {
            rounds_analyzed: plan.units.len(),
            dataset: recon,
        },
        per_tree,
        chains_ambiguous: plan.ambiguous,
        wall_clock_s: clock(start),
    })
}

impl AttackReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}
