use std::sync::Arc;

use rand::seq::SliceRandom;

use super::histogram::{ClientPart, FederatedSource, Noise};
use super::{check_clients, ClientView, FedConfig, FedOutcome, Protocol, RoundEntry};
use crate::error::Result;
use crate::gbdt::{
    grad_hess_all, grow_tree, train_ensemble, train_tree, BinEdges, BinnedRows, BoostState, Ensemble, TaggedTree,
    Tree, TreeTag,
};
use crate::rng;
use crate::tabular::Dataset;

fn client_states(clients: &[Dataset], cfg: &FedConfig, n_outputs: usize) -> Vec<BoostState> {
    clients
        .iter()
        .map(|d| BoostState::new(d.len(), n_outputs, &cfg.boost))
        .collect()
}

/// Trains one tree per output on the client's current margins.
fn local_round(d: &Dataset, state: &BoostState, edges: &Arc<BinEdges>, cfg: &FedConfig) -> Result<Vec<Tree>> {
    (0..state.n_outputs)
        .map(|o| {
            let (g, h) = state.grad_hess(&d.labels, o);
            train_tree(&d.rows, &g, &h, &cfg.boost, edges.clone())
        })
        .collect()
}

fn push_trees(ens: &mut Ensemble, trees: Vec<Tree>, client_id: Option<usize>, round: usize) -> Vec<usize> {
    trees
        .into_iter()
        .enumerate()
        .map(|(class_index, tree)| {
            ens.trees.push(TaggedTree {
                tag: TreeTag {
                    client_id,
                    round,
                    class_index,
                },
                tree,
            });
            ens.trees.len() - 1
        })
        .collect()
}

fn advance(states: &mut [BoostState], clients: &[Dataset], ens: &Ensemble, from: usize) {
    for (s, d) in states.iter_mut().zip(clients) {
        for t in &ens.trees[from..] {
            s.add_tree(&t.tree, t.tag.class_index, &d.rows);
        }
    }
}

fn views_of(model: &Ensemble, cfg: &FedConfig, round_log: &[RoundEntry]) -> Vec<ClientView> {
    (0..cfg.n_clients)
        .map(|observer| ClientView {
            observer,
            protocol: cfg.protocol,
            n_clients: cfg.n_clients,
            params: cfg.boost.clone(),
            model: model.clone(),
            round_log: round_log.to_vec(),
        })
        .collect()
}

/// Every round each client fits one tree per output to the current global
/// model; the server appends them in a seeded arrival order. Views hide authorship.
pub fn run_bagging(clients: &[Dataset], cfg: &FedConfig) -> Result<FedOutcome> {
    check_clients(clients, cfg)?;
    let k = clients[0].n_classes();
    let mut global = Ensemble::new(cfg.boost.clone(), k);
    let mut states = client_states(clients, cfg, global.n_outputs());
    let edges: Vec<Arc<BinEdges>> = clients
        .iter()
        .map(|d| Arc::new(BinEdges::from_rows(&d.rows, d.n_features(), cfg.boost.n_bins)))
        .collect();
    let mut log = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let before = global.trees.len();
        let mut produced = clients
            .iter()
            .zip(&states)
            .zip(&edges)
            .map(|((d, s), e)| local_round(d, s, e, cfg).map(Some))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..cfg.n_clients).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "arrival", &[round as u64]));
        let mut trees = Vec::new();
        for c in order {
            let t = produced[c].take().expect("each client arrives once");
            trees.extend(push_trees(&mut global, t, Some(c), round));
        }
        log.push(RoundEntry { round, trees });
        advance(&mut states, clients, &global, before);
    }
    let mut hidden = global.clone();
    for t in &mut hidden.trees {
        t.tag.client_id = None;
    }
    let views = views_of(&hidden, cfg, &log);
    Ok(FedOutcome {
        global,
        views,
        weights: None,
    })
}

/// Round `t` is trained by client `t mod C` on the model so far.
pub fn run_cyclic(clients: &[Dataset], cfg: &FedConfig) -> Result<FedOutcome> {
    check_clients(clients, cfg)?;
    let k = clients[0].n_classes();
    let mut global = Ensemble::new(cfg.boost.clone(), k);
    let mut states = client_states(clients, cfg, global.n_outputs());
    let mut log = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let c = round % cfg.n_clients;
        let d = &clients[c];
        let edges = Arc::new(BinEdges::from_rows(&d.rows, d.n_features(), cfg.boost.n_bins));
        let before = global.trees.len();
        let trees = local_round(d, &states[c], &edges, cfg)?;
        let idx = push_trees(&mut global, trees, Some(c), round);
        log.push(RoundEntry { round, trees: idx });
        advance(&mut states, clients, &global, before);
    }
    let views = views_of(&global, cfg, &log);
    Ok(FedOutcome {
        global,
        views,
        weights: None,
    })
}

/// Clients share full local ensembles once; the server then fits one scalar
/// weight per tree by federated gradient descent on the log loss.
pub fn run_fedxgbllr(clients: &[Dataset], cfg: &FedConfig) -> Result<FedOutcome> {
    check_clients(clients, cfg)?;
    let k = clients[0].n_classes();
    let mut global = Ensemble::new(cfg.boost.clone(), k);
    for (c, d) in clients.iter().enumerate() {
        let local = train_ensemble(d, &cfg.boost)?;
        for mut t in local.trees {
            t.tag.client_id = Some(c);
            global.trees.push(t);
        }
    }
    let log = vec![RoundEntry {
        round: 0,
        trees: (0..global.trees.len()).collect(),
    }];
    let weights = fit_tree_weights(clients, &global, cfg.rounds);
    let views = views_of(&global, cfg, &log);
    Ok(FedOutcome {
        global,
        views,
        weights: Some(weights),
    })
}

/// Step size of the per-tree weight descent.
const WEIGHT_STEP: f64 = 0.5;

fn fit_tree_weights(clients: &[Dataset], ens: &Ensemble, steps: usize) -> Vec<f64> {
    let n_trees = ens.trees.len();
    let n_out = ens.n_outputs();
    let base = ens.params.base_margin(n_out);
    // Leaf outputs per client row and tree.
    let outputs: Vec<Vec<Vec<f64>>> = clients
        .iter()
        .map(|d| d.rows.iter().map(|r| ens.trees.iter().map(|t| t.tree.predict(r)).collect()).collect())
        .collect();
    let n_total: usize = clients.iter().map(Dataset::len).sum();
    let mut w = vec![1.0; n_trees];
    for _ in 0..steps {
        let mut grad = vec![0.0; n_trees];
        for (d, out) in clients.iter().zip(&outputs) {
            for (f, &y) in out.iter().zip(&d.labels) {
                let mut m = vec![base; n_out];
                for (t, tt) in ens.trees.iter().enumerate() {
                    m[tt.tag.class_index] += w[t] * f[t];
                }
                let g = grad_hess_all(&m, y);
                for (t, tt) in ens.trees.iter().enumerate() {
                    grad[t] += g[tt.tag.class_index] * f[t];
                }
            }
        }
        for (wt, gt) in w.iter_mut().zip(&grad) {
            *wt -= WEIGHT_STEP * gt / n_total as f64;
        }
    }
    w
}

/// One global model grown node by node from summed client histograms on
/// shared bin edges; optional client-side DP noise.
pub fn run_histogram(clients: &[Dataset], cfg: &FedConfig) -> Result<FedOutcome> {
    check_clients(clients, cfg)?;
    let k = clients[0].n_classes();
    let nf = clients[0].n_features();
    let mut global = Ensemble::new(cfg.boost.clone(), k);
    let n_out = global.n_outputs();
    let mut states = client_states(clients, cfg, n_out);
    let proposals: Vec<BinEdges> = clients
        .iter()
        .map(|d| BinEdges::from_rows(&d.rows, nf, cfg.boost.n_bins))
        .collect();
    let edges = Arc::new(BinEdges::merge(&proposals, cfg.boost.n_bins));
    let binned: Vec<BinnedRows> = clients.iter().map(|d| BinnedRows::new(&d.rows, &edges)).collect();
    let dp = match &cfg.defense {
        Some(d) => Some((d.epsilon_histogram(cfg.rounds)?, d.clip_r, rng::derive_seed(cfg.seed, "defense", &[d.seed]))),
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let before = global.trees.len();
        let mut trees = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let parts = clients
                .iter()
                .zip(&states)
                .zip(&binned)
                .map(|((d, s), b)| {
                    let (g, h) = s.grad_hess(&d.labels, o);
                    ClientPart::new(&d.rows, b, g, h)
                })
                .collect();
            let mut src = FederatedSource {
                parts,
                edges: edges.clone(),
                noise: dp.map(|(epsilon, clip, seed)| Noise {
                    epsilon,
                    clip,
                    seed,
                    tree: [round as u64, o as u64],
                }),
            };
            trees.push(grow_tree(&mut src, &cfg.boost));
        }
        let idx = push_trees(&mut global, trees, None, round);
        log.push(RoundEntry { round, trees: idx });
        advance(&mut states, clients, &global, before);
    }
    let mut visible = global.clone();
    if cfg.protocol == Protocol::HardenedHistogram {
        for t in &mut visible.trees {
            t.tree = t.tree.withhold_stats();
        }
    }
    let views = views_of(&visible, cfg, &log);
    Ok(FedOutcome {
        global,
        views,
        weights: None,
    })
}
