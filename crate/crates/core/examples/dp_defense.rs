//! Attack accuracy and model utility as Laplace noise on the shared
//! histograms grows.

use boostleak::attack::{attack, AttackOptions, Victim};
use boostleak::defense::DPConfig;
use boostleak::eval::{reconstruction_accuracy, tolerances_from, utility_metrics};
use boostleak::federation::{run, FedConfig, Protocol};
use boostleak::gbdt::BoostParams;
use boostleak::tabular::{dirichlet_partition, feature_stats, synth, Dataset};

fn main() -> boostleak::Result<()> {
    let data = synth::pima_like(728, 7);
    let test = synth::pima_like(400, 8);
    let clients = dirichlet_partition(&data, 3, 0.3, 7)?;
    let union = Dataset::concat(&clients)?;
    let tol = tolerances_from(&feature_stats(&union)?);
    let boost = BoostParams {
        n_trees: 30,
        max_depth: 4,
        ..BoostParams::default()
    };
    println!("epsilon   RA(all)  F1      AUC");
    for eps in [None, Some(4.0), Some(1.0), Some(0.125)] {
        let mut cfg = FedConfig::new(Protocol::Histogram, 3, boost.n_trees, boost.clone());
        cfg.defense = eps.map(|e| DPConfig {
            seed: 9,
            ..DPConfig::per_histogram(e)
        });
        let out = run(&clients, &cfg)?;
        let opts = AttackOptions {
            time_limit: 10.0,
            ..AttackOptions::new(Victim::Global)
        };
        let report = attack(&out.views[0], &union.schema, &opts)?;
        let ra = reconstruction_accuracy(&report.complete.dataset, &union, &tol)?.ra;
        let u = utility_metrics(&out.global, &test)?;
        let label = eps.map_or("inf".to_string(), |e| e.to_string());
        println!("{label:<9} {ra:.4}   {:.4}  {:.4}", u.f1, u.auc);
    }
    Ok(())
}
