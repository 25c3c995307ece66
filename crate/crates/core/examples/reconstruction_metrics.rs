//! Scores a reconstruction: tolerance matching, optimal pairing, per-feature
//! hit rates, and a midpoint CSV export.

use boostleak::attack::{attack, write_csv_midpoints, AttackOptions, Victim};
use boostleak::eval::{feature_importance, reconstruction_accuracy, tolerances_from, top_features, top_k_feature_ra};
use boostleak::federation::{run, FedConfig, Protocol};
use boostleak::gbdt::BoostParams;
use boostleak::tabular::{dirichlet_partition, feature_stats, synth, Dataset};

fn main() -> boostleak::Result<()> {
    let data = synth::stroke_like(1000, 5);
    let clients = dirichlet_partition(&data, 3, 0.3, 5)?;
    let union = Dataset::concat(&clients)?;
    let boost = BoostParams {
        n_trees: 10,
        max_depth: 4,
        ..BoostParams::default()
    };
    let out = run(&clients, &FedConfig::new(Protocol::Histogram, 3, 10, boost))?;
    let opts = AttackOptions {
        time_limit: 10.0,
        ..AttackOptions::new(Victim::Global)
    };
    let report = attack(&out.views[0], &union.schema, &opts)?;
    let stats = feature_stats(&union)?;
    let tol = tolerances_from(&stats);
    let all = reconstruction_accuracy(&report.complete.dataset, &union, &tol)?;
    println!("RA(all) {:.4} over {} pairs", all.ra, all.pairing.len());
    for f in &all.per_feature {
        println!("  {:<20} {:.3}", f.name, f.rate);
    }
    let imp = feature_importance(&out.global, union.n_features());
    let top: Vec<&str> = top_features(&imp, 5).iter().map(|&j| union.schema.features[j].name.as_str()).collect();
    let topk = top_k_feature_ra(&report.complete.dataset, &union, &tol, &out.global, 5)?;
    println!("RA(top-5: {}) {:.4}", top.join(", "), topk.ra);
    let path = std::env::temp_dir().join("reconstruction.csv");
    write_csv_midpoints(&report.complete.dataset, &union.schema, &stats, &path)?;
    println!("midpoints written to {}", path.display());
    Ok(())
}
