//! Reconstructs the union of three clients' data from a histogram-aggregated
//! federated model and scores the reconstruction.

use boostleak::attack::{attack, AttackOptions, Victim};
use boostleak::eval::{reconstruction_accuracy, tolerances_from, top_k_feature_ra};
use boostleak::federation::{run, FedConfig, Protocol};
use boostleak::gbdt::BoostParams;
use boostleak::tabular::{dirichlet_partition, feature_stats, synth, Dataset};

fn main() -> boostleak::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let depth: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let trees: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let data = synth::pima_like(728, 7);
    let clients = dirichlet_partition(&data, 3, 0.3, 7)?;
    let boost = BoostParams {
        max_depth: depth,
        n_trees: trees,
        ..BoostParams::default()
    };
    let cfg = FedConfig::new(Protocol::Histogram, 3, trees, boost);
    let out = run(&clients, &cfg)?;
    let union = Dataset::concat(&clients)?;
    let opts = AttackOptions {
        time_limit: 60.0,
        ..AttackOptions::new(Victim::Global)
    };
    let report = attack(&out.views[0], &union.schema, &opts)?;
    let tol = tolerances_from(&feature_stats(&union)?);
    let all = reconstruction_accuracy(&report.complete.dataset, &union, &tol)?;
    let top = top_k_feature_ra(&report.complete.dataset, &union, &tol, &out.global, 5)?;
    let first = reconstruction_accuracy(&report.phase1.dataset, &union, &tol)?;
    println!("samples: {} reconstructed, {} original", report.complete.dataset.len(), union.len());
    println!("RA(all) = {:.4}  RA(top-5) = {:.4}  RA(phase 1) = {:.4}", all.ra, top.ra, first.ra);
    let statuses: Vec<String> = report.per_tree.iter().map(|t| format!("{:?}", t.status)).collect();
    let optimal = statuses.iter().filter(|s| *s == "Optimal").count();
    println!("{optimal}/{} trees solved to optimality in {:.1}s", statuses.len(), report.wall_clock_s);
    Ok(())
}
