//! Splits a bagging model into per-client chains from root Hessians alone,
//! then attacks one chain.

use boostleak::attack::{attack, identify_tree_chains, AttackOptions, Victim};
use boostleak::eval::{reconstruction_accuracy, tolerances_from};
use boostleak::federation::{run, FedConfig, Protocol};
use boostleak::gbdt::BoostParams;
use boostleak::tabular::{feature_stats, synth, Dataset};

fn main() -> boostleak::Result<()> {
    let clients: Vec<Dataset> = [120, 260, 400].iter().enumerate().map(|(c, &n)| synth::pima_like(n, 30 + c as u64)).collect();
    let boost = BoostParams {
        n_trees: 10,
        max_depth: 3,
        ..BoostParams::default()
    };
    let cfg = FedConfig {
        seed: 3,
        ..FedConfig::new(Protocol::Bagging, 3, 10, boost)
    };
    let out = run(&clients, &cfg)?;
    let chains = identify_tree_chains(&out.views[0], 3)?;
    for c in 0..3 {
        let trees = chains.flat(c);
        let owners: Vec<usize> = trees.iter().filter_map(|&t| out.global.trees[t].tag.client_id).collect();
        println!("chain {c}: trees {trees:?} owners {owners:?}");
    }
    let victim = 2;
    let opts = AttackOptions {
        time_limit: 10.0,
        ..AttackOptions::new(Victim::Client(victim))
    };
    let report = attack(&out.views[0], &clients[victim].schema, &opts)?;
    let tol = tolerances_from(&feature_stats(&clients[victim])?);
    let ra = reconstruction_accuracy(&report.complete.dataset, &clients[victim], &tol)?.ra;
    println!("client {victim}: {} rows reconstructed, RA {ra:.4}", report.complete.dataset.len());
    Ok(())
}
