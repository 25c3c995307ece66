use proptest::prelude::*;

use boostleak::assign_opt::{solve, solve_brute_force, AssignmentProblem, LeafTarget, SampleStat, SolveStatus};
use boostleak::attack::{infer_label_distribution, infer_leaf_counts, init_dataset, FeatureBox, Victim};
use boostleak::defense::clip_grad_hess;
use boostleak::eval::{hungarian, reconstruction_accuracy, tolerances_from};
use boostleak::gbdt::{logit, sigmoid, train_ensemble, BoostParams, Ensemble};
use boostleak::tabular::{dirichlet_partition, feature_stats, Dataset, Feature, FeatureSchema, LabelSpec};

fn schema(k: usize) -> FeatureSchema {
    FeatureSchema::new(
        (0..k).map(|j| Feature::numerical(format!("x{j}"))).collect(),
        LabelSpec { name: "y".into(), classes: vec!["0".into(), "1".into()] },
    )
    .unwrap()
}

prop_compose! {
    fn dataset()(k in 2usize..5, n in 20usize..120)
        (rows in prop::collection::vec(prop::collection::vec(0i32..40, k), n),
         labels in prop::collection::vec(0usize..2, n), k in Just(k)) -> Dataset {
        let rows = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        Dataset::new(schema(k), rows, labels).unwrap()
    }
}

fn params(depth: usize, base: f64) -> BoostParams {
    BoostParams {
        n_trees: 1,
        max_depth: depth,
        base_score: base,
        ..BoostParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn first_tree_counts_and_labels_are_exact(d in dataset(), depth in 1usize..5, b in prop::sample::select(vec![0.3, 0.5, 0.7])) {
        let p = params(depth, b);
        let tree = &train_ensemble(&d, &p).unwrap().trees[0].tree;
        let counts = infer_leaf_counts(tree, b).unwrap();
        let labels = infer_label_distribution(tree, &counts, p.learning_rate, p.lambda, b).unwrap();
        for (c, l) in counts.iter().zip(&labels) {
            let members: Vec<usize> = (0..d.len()).filter(|&i| tree.route(&d.rows[i]) == c.leaf).collect();
            let pos = members.iter().filter(|&&i| d.labels[i] == 1).count();
            prop_assert_eq!(c.n, members.len());
            prop_assert_eq!((l.n0, l.n1), (members.len() - pos, pos));
        }
    }

    #[test]
    fn phase_one_boxes_hold_every_true_row(d in dataset(), depth in 1usize..5) {
        let p = params(depth, 0.5);
        let tree = &train_ensemble(&d, &p).unwrap().trees[0].tree;
        let counts = infer_leaf_counts(tree, 0.5).unwrap();
        let labels = infer_label_distribution(tree, &counts, p.learning_rate, p.lambda, 0.5).unwrap();
        let recon = init_dataset(tree, &labels, &d.schema, &p, Victim::Global);
        prop_assert_eq!(recon.len(), d.len());
        let tol = tolerances_from(&feature_stats(&d).unwrap());
        let ra = reconstruction_accuracy(&recon, &d, &tol).unwrap().ra;
        prop_assert!((ra - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_box_reaches_only_the_routed_leaf(d in dataset(), depth in 1usize..5) {
        let tree = &train_ensemble(&d, &params(depth, 0.5)).unwrap().trees[0].tree;
        for row in d.rows.iter().take(10) {
            prop_assert_eq!(FeatureBox::exact(&d.schema, row).reachable_leaves(tree), vec![tree.route(row)]);
        }
    }

    #[test]
    fn solver_matches_enumeration(
        stats in prop::collection::vec((-1.0f64..1.0, 0.0f64..0.25, prop::collection::vec(any::<bool>(), 3)), 1..7),
        targets in prop::collection::vec((-3.0f64..3.0, 0.0f64..2.0), 3),
    ) {
        let samples = stats
            .into_iter()
            .map(|(g, h, mask)| {
                let mut reachable: Vec<usize> = (0..3).filter(|&j| mask[j]).collect();
                if reachable.is_empty() {
                    reachable.push(0);
                }
                SampleStat { g, h, reachable }
            })
            .collect();
        let leaves = targets.into_iter().map(|(g, h)| LeafTarget { g, h }).collect();
        let p = AssignmentProblem::new(samples, leaves).unwrap();
        let got = solve(&p, 5.0).unwrap();
        let best = solve_brute_force(&p).unwrap();
        prop_assert!(p.is_feasible(&got.assignment));
        prop_assert_eq!(got.status, SolveStatus::Optimal);
        prop_assert!((got.objective - best.objective).abs() <= 1e-9 * (1.0 + best.objective));
    }

    #[test]
    fn dirichlet_shards_cover_the_data(d in dataset(), clients in 2usize..5, alpha in 0.05f64..5.0, seed in any::<u64>()) {
        prop_assume!(d.len() >= clients);
        let parts = dirichlet_partition(&d, clients, alpha, seed).unwrap();
        prop_assert_eq!(parts.len(), clients);
        prop_assert!(parts.iter().all(|p| !p.is_empty()));
        let mut got: Vec<(Vec<u64>, usize)> = parts
            .iter()
            .flat_map(|p| p.rows.iter().zip(&p.labels).map(|(r, &y)| (r.iter().map(|x| x.to_bits()).collect(), y)))
            .collect();
        let mut want: Vec<(Vec<u64>, usize)> = d.rows.iter().zip(&d.labels).map(|(r, &y)| (r.iter().map(|x| x.to_bits()).collect(), y)).collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn clipping_bounds_both_statistics(g in -50.0f64..50.0, h in 0.0f64..50.0, r in 0.01f64..10.0) {
        let (cg, ch) = clip_grad_hess(g, h, r);
        prop_assert!(cg.abs() <= r && (0.0..=2.0 * r).contains(&ch));
        prop_assert!(cg * g >= 0.0);
    }

    #[test]
    fn logit_inverts_sigmoid(x in -15.0f64..15.0) {
        prop_assert!((logit(sigmoid(x)) - x).abs() < 1e-6 * (1.0 + x.abs()));
    }

    #[test]
    fn hungarian_is_a_permutation_no_worse_than_identity(c in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 5), 5)) {
        let perm = hungarian(&c).unwrap();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..5).collect::<Vec<_>>());
        let cost: f64 = perm.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        let diag: f64 = (0..5).map(|i| c[i][i]).sum();
        prop_assert!(cost <= diag + 1e-12);
    }

    #[test]
    fn ensemble_json_round_trip_keeps_predictions(d in dataset(), depth in 1usize..4) {
        let ens = train_ensemble(&d, &BoostParams { n_trees: 3, max_depth: depth, ..BoostParams::default() }).unwrap();
        let back = Ensemble::from_json(&ens.to_json().unwrap()).unwrap();
        for row in &d.rows {
            prop_assert_eq!(ens.predict_margin(row), back.predict_margin(row));
        }
    }
}
