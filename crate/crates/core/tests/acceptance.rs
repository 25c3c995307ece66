//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when a criterion outside `KNOWN_RED` fails.
//! `ACCEPTANCE_STRICT=1` makes every failure fatal.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use boostleak::assign_opt::{solve, solve_brute_force, AssignmentProblem, LeafTarget, SampleStat, SolveStatus};
use boostleak::attack::{
    attack, identify_tree_chains, infer_label_distribution, infer_leaf_counts, init_dataset, update_sample_stats, AttackOptions, Constraint, FeatureBox, Victim,
};
use boostleak::defense::DPConfig;
use boostleak::eval::{
    hungarian, match_from_hits, reconstruction_accuracy, tolerances_from, top_k_feature_ra, utility_metrics,
};
use boostleak::federation::{run, FedConfig, FedOutcome, Protocol};
use boostleak::gbdt::{train_ensemble, BoostParams, BoostState};
use boostleak::tabular::{dirichlet_partition, feature_stats, synth, Dataset, Feature, FeatureSchema, LabelSpec};
use boostleak::Error;

/// Criteria expected to fail; see the README's acceptance section.
const KNOWN_RED: &[usize] = &[5];

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
    secs: f64,
}

fn check(id: usize, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t = Instant::now();
    let (pass, detail) = f();
    Verdict {
        id,
        pass,
        detail,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn boost(depth: usize, trees: usize) -> BoostParams {
    BoostParams {
        max_depth: depth,
        n_trees: trees,
        ..BoostParams::default()
    }
}

// ---------------------------------------------------------------- 1

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Dataset {
    let schema = FeatureSchema::new(
        (0..f).map(|j| Feature::numerical(format!("x{j}"))).collect(),
        LabelSpec {
            name: "y".into(),
            classes: vec!["0".into(), "1".into()],
        },
    )
    .unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f).map(|_| (rng.random::<f64>() * 100.0).round()).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|r| usize::from(r[0] + 40.0 * rng.random::<f64>() > 70.0))
        .collect();
    Dataset::new(schema, rows, labels).unwrap()
}

fn criterion_1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let fixtures = 24;
    for k in 0..fixtures {
        let n = rng.random_range(20..=200);
        let f = rng.random_range(2..=6);
        let depth = rng.random_range(2..=5);
        let b = [0.3, 0.5, 0.7][k % 3];
        let data = random_dataset(&mut rng, n, f);
        let t = Instant::now();
        let params = BoostParams {
            base_score: b,
            ..boost(depth, 1)
        };
        let ens = train_ensemble(&data, &params).unwrap();
        let tree = &ens.trees[0].tree;
        let counts = infer_leaf_counts(tree, b).unwrap();
        let labels = infer_label_distribution(tree, &counts, params.learning_rate, params.lambda, b).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        for (c, l) in counts.iter().zip(&labels) {
            let rows: Vec<usize> = (0..n).filter(|&i| tree.route(&data.rows[i]) == c.leaf).collect();
            let n1 = rows.iter().filter(|&&i| data.labels[i] == 1).count();
            if c.n != rows.len() || l.n1 != n1 || l.n0 != rows.len() - n1 {
                return (false, format!("fixture {k}: leaf {} inferred {}/{} vs {}/{n1}", c.leaf, c.n, l.n1, rows.len()));
            }
            worst = worst.max(c.residual).max(l.residual);
        }
    }
    (
        worst < 1e-6 && slowest < 1.0,
        format!("{fixtures} fixtures exact, max residual {worst:.1e}, slowest {slowest:.3}s"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> (bool, String) {
    let d = synth::two_feature_demo();
    let params = BoostParams {
        learning_rate: 0.3,
        lambda: 1.0,
        base_score: 0.5,
        ..boost(2, 1)
    };
    let ens = train_ensemble(&d, &params).unwrap();
    let tree = &ens.trees[0].tree;
    let counts = infer_leaf_counts(tree, 0.5).unwrap();
    let labels = infer_label_distribution(tree, &counts, 0.3, 1.0, 0.5).unwrap();
    let mut recon = init_dataset(tree, &labels, &d.schema, &params, Victim::Global);
    let deltas: Vec<Vec<f64>> = recon.samples.iter().map(|s| vec![tree.leaf_value(s.origin_leaf)]).collect();
    update_sample_stats(&mut recon, &deltas).unwrap();
    let r2 = |x: f64| (x * 100.0).round() / 100.0;
    let stats: Vec<(usize, usize, f64, f64, f64)> = recon
        .samples
        .iter()
        .map(|s| (s.origin_leaf, s.label, r2(s.p[0]), r2(s.g[0]), r2(s.h[0])))
        .collect();
    let leaves = tree.leaves();
    let want = |leaf: usize, label: usize| -> (f64, f64, f64) {
        match (leaves.iter().position(|&j| j == leaf).unwrap(), label) {
            (0, _) => (0.41, 0.41, 0.24),
            (1, _) => (0.57, -0.43, 0.24),
            (_, 0) => (0.46, 0.46, 0.25),
            _ => (0.46, -0.54, 0.25),
        }
    };
    let stats_ok = stats.iter().all(|&(leaf, y, p, g, h)| (p, g, h) == want(leaf, y));
    let table: Vec<(usize, usize, usize)> = labels.iter().map(|l| (counts.iter().find(|c| c.leaf == l.leaf).unwrap().n, l.n0, l.n1)).collect();
    let table_ok = table == vec![(7, 7, 0), (4, 0, 4), (4, 3, 1)];
    let mut cuts: Vec<f64> = Vec::new();
    for s in &recon.samples {
        for c in &s.bounds.features {
            if let Constraint::Numerical(iv) = c {
                cuts.extend([iv.lo, iv.hi].into_iter().filter(|x| x.is_finite()));
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let ranges_ok = cuts == vec![29.0, 60.0];
    (
        stats_ok && table_ok && ranges_ok && recon.len() == 15,
        format!("leaf table {table:?}, cuts {cuts:?}, statistics match: {stats_ok}"),
    )
}

// ---------------------------------------------------------------- 3

fn random_problem(rng: &mut ChaCha8Rng) -> AssignmentProblem {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=4);
    let samples = (0..n)
        .map(|_| {
            let mut reach: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.6)).collect();
            if reach.is_empty() {
                reach.push(rng.random_range(0..m));
            }
            let p: f64 = rng.random_range(0.05..0.95);
            SampleStat {
                g: p - f64::from(u8::from(rng.random_bool(0.5))),
                h: p * (1.0 - p),
                reachable: reach,
            }
        })
        .collect::<Vec<_>>();
    // Targets from a random feasible assignment, perturbed half of the time.
    let mut leaves = vec![LeafTarget { g: 0.0, h: 0.0 }; m];
    for s in &samples {
        let j = s.reachable[rng.random_range(0..s.reachable.len())];
        leaves[j].g += s.g;
        leaves[j].h += s.h;
    }
    if rng.random_bool(0.5) {
        for l in &mut leaves {
            l.g += rng.random_range(-0.3..0.3);
            l.h += rng.random_range(0.0..0.2);
        }
    }
    AssignmentProblem::new(samples, leaves).unwrap()
}

/// Second-tree instance of a small real ensemble: true statistics, boxes from
/// the first tree's paths.
fn real_tree_problem(seed: u64) -> AssignmentProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=60);
    let data = synth::pima_like(n, seed);
    let params = boost(rng.random_range(2..=3), 2);
    let ens = train_ensemble(&data, &params).unwrap();
    let (first, second) = (&ens.trees[0].tree, &ens.trees[1].tree);
    let mut state = BoostState::new(n, 1, &params);
    state.add_tree(first, 0, &data.rows);
    let (g, h) = state.grad_hess(&data.labels, 0);
    let leaves = second.leaves();
    let slot = |j: usize| leaves.iter().position(|&x| x == j).unwrap();
    let samples = (0..n)
        .map(|i| {
            let mut b = FeatureBox::unconstrained(&data.schema);
            b.restrict_path(&first.path_to(first.route(&data.rows[i])));
            SampleStat {
                g: g[i],
                h: h[i],
                reachable: b.reachable_leaves(second).into_iter().map(slot).collect(),
            }
        })
        .collect();
    let targets = leaves
        .iter()
        .map(|&j| {
            let s = second.nodes[j].stats().unwrap();
            LeafTarget { g: s.g, h: s.h }
        })
        .collect();
    AssignmentProblem::new(samples, targets).unwrap()
}

fn criterion_3() -> (bool, String) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mismatched = 0;
    for _ in 0..200 {
        let p = random_problem(&mut rng);
        let a = solve(&p, 10.0).unwrap();
        let b = solve_brute_force(&p).unwrap();
        if a.status != SolveStatus::Optimal || (a.objective - b.objective).abs() > 1e-12 * (1.0 + b.objective) {
            mismatched += 1;
        }
    }
    let mut nonzero = 0;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let p = real_tree_problem(1000 + seed);
        let a = solve(&p, 5.0).unwrap();
        worst = worst.max(a.objective);
        if a.status != SolveStatus::Optimal || a.objective > 1e-9 {
            nonzero += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        mismatched == 0 && nonzero == 0 && secs < 60.0,
        format!("random: {mismatched}/200 mismatched; real trees: {nonzero}/50 above zero (worst {worst:.1e}); {secs:.1}s"),
    )
}

// ---------------------------------------------------------------- 4, 5, 6

struct PimaRun {
    ra_all: f64,
    ra_top5: f64,
    ra_phase1: f64,
    f1: f64,
    secs: f64,
    samples: usize,
}

fn pima_clients() -> Vec<Dataset> {
    dirichlet_partition(&synth::pima_like(728, 7), 3, 0.3, 7).unwrap()
}

fn pima_run(defense: Option<DPConfig>) -> Result<PimaRun, Error> {
    let t = Instant::now();
    let clients = pima_clients();
    let cfg = FedConfig {
        defense,
        seed: 7,
        ..FedConfig::new(Protocol::Histogram, 3, 100, boost(6, 100))
    };
    let out = run(&clients, &cfg)?;
    let union = Dataset::concat(&clients)?;
    let opts = AttackOptions {
        time_limit: 60.0,
        ..AttackOptions::new(Victim::Global)
    };
    let report = attack(&out.views[0], &union.schema, &opts)?;
    let tol = tolerances_from(&feature_stats(&union)?);
    let test = synth::pima_like(400, 8);
    Ok(PimaRun {
        ra_all: reconstruction_accuracy(&report.complete.dataset, &union, &tol)?.ra,
        ra_top5: top_k_feature_ra(&report.complete.dataset, &union, &tol, &out.global, 5)?.ra,
        ra_phase1: reconstruction_accuracy(&report.phase1.dataset, &union, &tol)?.ra,
        f1: utility_metrics(&out.global, &test)?.f1,
        secs: t.elapsed().as_secs_f64(),
        samples: report.complete.dataset.len(),
    })
}

fn criterion_4(r: &PimaRun) -> (bool, String) {
    (
        r.ra_all >= 0.60 && r.ra_top5 >= 0.75 && r.secs <= 7200.0,
        format!("RA(all) {:.4}, RA(top-5) {:.4}, {} samples, {:.1}s", r.ra_all, r.ra_top5, r.samples, r.secs),
    )
}

fn criterion_5(r: &PimaRun) -> (bool, String) {
    (
        r.ra_all >= r.ra_phase1 - 0.01,
        format!("RA(final) {:.4} vs RA(phase 1) {:.4}", r.ra_all, r.ra_phase1),
    )
}

fn criterion_6(base: &PimaRun) -> (bool, String) {
    let runs: Vec<PimaRun> = [1.0, 0.125]
        .iter()
        .map(|&e| pima_run(Some(DPConfig { seed: 9, ..DPConfig::per_histogram(e) })).unwrap())
        .collect();
    let ra = [base.ra_all, runs[0].ra_all, runs[1].ra_all];
    let monotone = ra.windows(2).all(|w| w[1] <= w[0] + 0.03);
    let drop = base.f1 - runs[1].f1;
    (
        monotone && ra[2] > 0.40 && drop >= 0.05,
        format!(
            "RA at eps inf/1/0.125: {:.4}/{:.4}/{:.4}; F1 {:.4} -> {:.4}",
            ra[0], ra[1], ra[2], base.f1, runs[1].f1
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> (bool, String) {
    let clients = pima_clients();
    let outcome = |p: Protocol| -> FedOutcome {
        let cfg = FedConfig {
            seed: 3,
            ..FedConfig::new(p, 3, 20, boost(4, 20))
        };
        run(&clients, &cfg).unwrap()
    };
    let open = outcome(Protocol::Histogram);
    let hard = outcome(Protocol::HardenedHistogram);
    let same = open.global.trees.len() == hard.global.trees.len()
        && open.global.trees.iter().zip(&hard.global.trees).all(|(a, b)| a.tree.structure() == b.tree.structure());
    let schema = &clients[0].schema;
    let mut aborted = 0;
    for v in &hard.views {
        match attack(v, schema, &AttackOptions::new(Victim::Global)) {
            Err(e @ Error::StatisticsWithheld(_)) if e.to_string().contains("statistics withheld") => aborted += 1,
            _ => {}
        }
    }
    (
        same && aborted == hard.views.len(),
        format!("{aborted}/{} hardened views aborted; splits identical: {same}", hard.views.len()),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> (bool, String) {
    let data = synth::stroke_like(5000, 17);
    let mut ras = Vec::new();
    for n in [3, 10, 30] {
        let clients = dirichlet_partition(&data, n, 0.3, 17).unwrap();
        let cfg = FedConfig {
            seed: 17,
            ..FedConfig::new(Protocol::Histogram, n, 10, boost(4, 10))
        };
        let out = run(&clients, &cfg).unwrap();
        let union = Dataset::concat(&clients).unwrap();
        let opts = AttackOptions {
            time_limit: 60.0,
            ..AttackOptions::new(Victim::Global)
        };
        let report = attack(&out.views[0], &union.schema, &opts).unwrap();
        let tol = tolerances_from(&feature_stats(&union).unwrap());
        ras.push(reconstruction_accuracy(&report.complete.dataset, &union, &tol).unwrap().ra);
    }
    let spread = ras.iter().cloned().fold(f64::MIN, f64::max) - ras.iter().cloned().fold(f64::MAX, f64::min);
    (
        spread <= 0.05,
        format!("RA at 3/10/30 clients: {:.4}/{:.4}/{:.4}, spread {spread:.4}", ras[0], ras[1], ras[2]),
    )
}

// ---------------------------------------------------------------- 9

fn brute_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(cost[row][j] + go(cost, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(cost, 0, &mut vec![false; cost.len()])
}

fn criterion_9() -> (bool, String) {
    let names: Vec<String> = ["a", "b", "c", "d", "label"].iter().map(|s| s.to_string()).collect();
    let row = |k: usize| (0..5).map(|f| f < k).collect::<Vec<bool>>();
    let hits = vec![
        vec![row(5), row(1), row(0), row(0)],
        vec![row(1), row(3), row(1), row(0)],
        vec![row(0), row(0), row(5), row(2)],
        vec![row(0), row(1), row(2), row(4)],
    ];
    let rep = match_from_hits(&hits, &[true; 5], &names).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut wrong = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let perm = hungarian(&cost).unwrap();
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if (total - brute_assignment(&cost)).abs() > 1e-9 {
            wrong += 1;
        }
    }
    (
        (rep.ra - 0.85).abs() < 1e-12 && wrong == 0,
        format!("worked example RA {:.4}; hungarian vs brute force: {wrong}/100 differ", rep.ra),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> (bool, String) {
    let sizes = [100, 250, 350];
    let (mut right, mut total) = (0, 0);
    for seed in 0..10u64 {
        let data = synth::pima_like(700, 100 + seed);
        let mut start = 0;
        let clients: Vec<Dataset> = sizes
            .iter()
            .map(|&n| {
                let idx: Vec<usize> = (start..start + n).collect();
                start += n;
                data.subset(&idx)
            })
            .collect();
        let cfg = FedConfig {
            seed,
            ..FedConfig::new(Protocol::Bagging, 3, 30, boost(3, 30))
        };
        let out = run(&clients, &cfg).unwrap();
        let chains = identify_tree_chains(&out.views[(seed % 3) as usize], 3).unwrap();
        let mut owners_used = [false; 3];
        for c in 0..chains.chains.len() {
            let flat = chains.flat(c);
            let owner_of = |t: usize| out.global.trees[t].tag.client_id.expect("bagging trees carry authorship");
            let mut votes = [0usize; 3];
            for &t in &flat {
                votes[owner_of(t)] += 1;
            }
            let owner = (0..3).max_by_key(|&o| votes[o]).unwrap();
            total += flat.len();
            if !owners_used[owner] {
                owners_used[owner] = true;
                right += votes[owner];
            }
        }
    }
    let rate = right as f64 / total as f64;
    (rate >= 0.95, format!("{right}/{total} trees in their provenance chain ({:.1}%)", 100.0 * rate))
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut verdicts = vec![
        check(1, criterion_1),
        check(2, criterion_2),
        check(3, criterion_3),
    ];
    let t = Instant::now();
    let pima = pima_run(None);
    let pima_secs = t.elapsed().as_secs_f64();
    match &pima {
        Ok(r) => {
            verdicts.push(Verdict { secs: pima_secs, ..check(4, || criterion_4(r)) });
            verdicts.push(check(5, || criterion_5(r)));
            verdicts.push(check(6, || criterion_6(r)));
        }
        Err(e) => {
            for id in [4, 5, 6] {
                verdicts.push(check(id, || (false, format!("pipeline failed: {e}"))));
            }
        }
    }
    verdicts.push(check(7, criterion_7));
    verdicts.push(check(8, criterion_8));
    verdicts.push(check(9, criterion_9));
    verdicts.push(check(10, criterion_10));

    let mut fatal = 0;
    for v in &verdicts {
        let known = KNOWN_RED.contains(&v.id);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2}: {tag}: {} [{:.1}s]", v.id, v.detail, v.secs);
        if !v.pass && (strict || !known) {
            fatal += 1;
        }
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("{passed}/{} criteria pass", verdicts.len());
    if fatal > 0 {
        std::process::exit(1);
    }
}
