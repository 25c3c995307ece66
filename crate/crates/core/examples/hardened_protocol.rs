//! The hardened histogram protocol trains the same trees while sending no
//! node statistics, so the attack stops before it starts.

use boostleak::attack::{attack, AttackOptions, Victim};
use boostleak::federation::{run, FedConfig, Protocol};
use boostleak::gbdt::BoostParams;
use boostleak::tabular::{dirichlet_partition, synth};

fn main() -> boostleak::Result<()> {
    let data = synth::pima_like(500, 2);
    let clients = dirichlet_partition(&data, 3, 0.3, 2)?;
    let boost = BoostParams {
        n_trees: 10,
        max_depth: 4,
        ..BoostParams::default()
    };
    let open = run(&clients, &FedConfig::new(Protocol::Histogram, 3, 10, boost.clone()))?;
    let hard = run(&clients, &FedConfig::new(Protocol::HardenedHistogram, 3, 10, boost))?;
    let same = open.global.trees.iter().zip(&hard.global.trees).all(|(a, b)| a.tree.structure() == b.tree.structure());
    println!("identical split structure: {same}");
    for (name, o) in [("histogram", &open), ("hardened", &hard)] {
        match attack(&o.views[1], &data.schema, &AttackOptions {
            time_limit: 5.0,
            ..AttackOptions::new(Victim::Global)
        }) {
            Ok(r) => println!("{name}: reconstructed {} rows", r.complete.dataset.len()),
            Err(e) => println!("{name}: {e}"),
        }
    }
    Ok(())
}
