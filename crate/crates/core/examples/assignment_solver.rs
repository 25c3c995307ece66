//! Solves one leaf-assignment problem built from a trained tree and checks
//! it against exhaustive enumeration.

use boostleak::assign_opt::{solve, solve_brute_force, AssignmentProblem, LeafTarget, SampleStat};
use boostleak::attack::FeatureBox;
use boostleak::gbdt::{train_ensemble, BoostParams};
use boostleak::tabular::synth;

fn main() -> boostleak::Result<()> {
    let data = synth::pima_like(14, 3);
    let params = BoostParams {
        n_trees: 2,
        max_depth: 2,
        ..BoostParams::default()
    };
    let model = train_ensemble(&data, &params)?;
    let (first, second) = (&model.trees[0].tree, &model.trees[1].tree);
    let leaves = second.leaves();
    let samples: Vec<SampleStat> = data
        .rows
        .iter()
        .zip(&data.labels)
        .map(|(row, &y)| {
            let p = 1.0 / (1.0 + (-first.predict(row)).exp());
            // The attacker only knows the first tree's box, not the row.
            let mut b = FeatureBox::unconstrained(&data.schema);
            b.restrict_path(&first.path_to(first.route(row)));
            let reach = b.reachable_leaves(second);
            SampleStat {
                g: p - y as f64,
                h: p * (1.0 - p),
                reachable: reach.iter().map(|l| leaves.iter().position(|x| x == l).unwrap()).collect(),
            }
        })
        .collect();
    let targets = leaves
        .iter()
        .map(|&l| {
            let s = second.nodes[l].stats().expect("open protocol");
            LeafTarget { g: s.g, h: s.h }
        })
        .collect();
    let problem = AssignmentProblem::new(samples, targets)?;
    println!("{} samples, {} leaves, {} feasible assignments", problem.samples.len(), problem.leaves.len(), problem.search_space());
    let fast = solve(&problem, 10.0)?;
    println!("solve:       {:?} objective {:.3e} ({:?})", fast.assignment, fast.objective, fast.status);
    match solve_brute_force(&problem) {
        Ok(exact) => println!("enumeration: {:?} objective {:.3e}", exact.assignment, exact.objective),
        Err(e) => println!("enumeration skipped: {e}"),
    }
    let truth: Vec<usize> = data.rows.iter().map(|r| leaves.iter().position(|&l| l == second.route(r)).unwrap()).collect();
    println!("true leaves: {truth:?} objective {:.3e}", problem.objective_of(&truth));
    Ok(())
}
