//! Inverts the first tree of a 15-row model: per-leaf counts, label splits
//! and the feature boxes they imply.

use boostleak::attack::{infer_label_distribution, infer_leaf_counts, init_dataset, update_sample_stats, Constraint, Victim};
use boostleak::gbdt::{train_ensemble, BoostParams};
use boostleak::tabular::synth;

fn main() -> boostleak::Result<()> {
    let data = synth::two_feature_demo();
    let params = BoostParams {
        n_trees: 1,
        max_depth: 2,
        learning_rate: 0.3,
        lambda: 1.0,
        base_score: 0.5,
        ..BoostParams::default()
    };
    let model = train_ensemble(&data, &params)?;
    let tree = &model.trees[0].tree;
    let counts = infer_leaf_counts(tree, params.base_score)?;
    let labels = infer_label_distribution(tree, &counts, params.learning_rate, params.lambda, params.base_score)?;
    println!("leaf  value      n  n0  n1");
    for (c, l) in counts.iter().zip(&labels) {
        println!("{:>4}  {:>+.6}  {:>2}  {:>2}  {:>2}", c.leaf, tree.leaf_value(c.leaf), c.n, l.n0, l.n1);
    }
    let mut recon = init_dataset(tree, &labels, &data.schema, &params, Victim::Global);
    let deltas: Vec<Vec<f64>> = recon.samples.iter().map(|s| vec![tree.leaf_value(s.origin_leaf)]).collect();
    update_sample_stats(&mut recon, &deltas)?;
    println!("\nbox                                      label  p     g      h");
    for s in &recon.samples {
        let b: Vec<String> = s
            .bounds
            .features
            .iter()
            .map(|c| match c {
                Constraint::Numerical(iv) => format!("[{}, {})", iv.lo, iv.hi),
                other => format!("{other:?}"),
            })
            .collect();
        let b = b.join(" x ");
        println!("{b:<40} {}      {:.2}  {:+.2}  {:.2}", s.label, s.p[0], s.g[0], s.h[0]);
    }
    Ok(())
}
