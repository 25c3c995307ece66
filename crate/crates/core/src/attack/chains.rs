use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::hungarian_rect;
use crate::federation::{ClientView, Protocol};

/// Per-client tree sequences. `chains[c][r]` lists the model indices (one per
/// output) of chain `c`'s round-`r` trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeChains {
    pub chains: Vec<Vec<Vec<usize>>>,
    /// Some round matched chains whose root Hessians tie.
    pub ambiguous: bool,
}

impl TreeChains {
    /// Model indices of chain `c` in round order.
    pub fn flat(&self, c: usize) -> Vec<usize> {
        self.chains[c].iter().flatten().copied().collect()
    }
}

/// Relative difference under which two root Hessians count as tied.
const TIE_TOL: f64 = 1e-9;

fn hessians(view: &ClientView, unit: &[usize]) -> (f64, Vec<f64>) {
    let mut root = 0.0;
    let mut all = Vec::new();
    for &t in unit {
        let tree = &view.model.trees[t].tree;
        root += tree.root().stats().map_or(0.0, |s| s.h);
        all.extend(tree.nodes.iter().map(|n| n.stats().map_or(0.0, |s| s.h)));
    }
    (root, all)
}

/// Groups bagging trees into per-client chains by matching each round's trees
/// to the previous round's with minimum root-Hessian distance; per-node
/// Hessian distance breaks ties. Cyclic views are split by index arithmetic.
pub fn identify_tree_chains(view: &ClientView, n_clients: usize) -> Result<TreeChains> {
    let k = view.model.n_outputs();
    let malformed = |m: String| Error::invalid(format!("malformed round structure: {m}"));
    if n_clients == 0 {
        return Err(malformed("no clients".into()));
    }
    match view.protocol {
        Protocol::Cyclic => {
            let mut chains = vec![Vec::new(); n_clients];
            for e in &view.round_log {
                if e.trees.len() != k {
                    return Err(malformed(format!("round {} carries {} trees", e.round, e.trees.len())));
                }
                chains[e.round % n_clients].push(e.trees.clone());
            }
            return Ok(TreeChains { chains, ambiguous: false });
        }
        Protocol::Bagging => {}
        p => return Err(Error::invalid(format!("tree chains are undefined for the {p} protocol"))),
    }
    let mut chains: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n_clients];
    let mut ambiguous = false;
    for (r, e) in view.round_log.iter().enumerate() {
        if e.trees.len() != n_clients * k {
            return Err(malformed(format!(
                "round {} carries {} trees, expected {}",
                e.round,
                e.trees.len(),
                n_clients * k
            )));
        }
        let units: Vec<Vec<usize>> = e.trees.chunks(k).map(<[usize]>::to_vec).collect();
        if r == 0 {
            for (c, u) in units.into_iter().enumerate() {
                chains[c].push(u);
            }
            continue;
        }
        let prev: Vec<(f64, Vec<f64>)> = chains.iter().map(|ch| hessians(view, ch.last().expect("seeded"))).collect();
        let cur: Vec<(f64, Vec<f64>)> = units.iter().map(|u| hessians(view, u)).collect();
        let scale = prev.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
        let node_dist = |a: &[f64], b: &[f64]| {
            let n = a.len().max(b.len());
            (0..n)
                .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let cost: Vec<Vec<f64>> = prev
            .iter()
            .map(|p| {
                cur.iter()
                    .map(|u| ((p.0 - u.0).abs() + 1e-9 * node_dist(&p.1, &u.1)) / scale)
                    .collect()
            })
            .collect();
        let roots: Vec<f64> = cur.iter().map(|u| u.0).collect();
        for a in 0..roots.len() {
            for b in a + 1..roots.len() {
                if (roots[a] - roots[b]).abs() <= TIE_TOL * (1.0 + roots[a].abs()) {
                    ambiguous = true;
                }
            }
        }
        let pairing = hungarian_rect(&cost)?;
        for (c, u) in pairing.into_iter().enumerate() {
            let u = u.expect("square cost matrix");
            chains[c].push(units[u].clone());
        }
    }
    Ok(TreeChains { chains, ambiguous })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{run, FedConfig};
    use crate::gbdt::BoostParams;
    use crate::tabular::synth;

    fn boost() -> BoostParams {
        BoostParams { max_depth: 3, ..BoostParams::default() }
    }

    #[test]
    fn bagging_chains_follow_provenance() {
        let data = synth::pima_like(700, 3);
        let sizes = [100, 250, 350];
        let mut start = 0;
        let clients: Vec<_> = sizes
            .iter()
            .map(|&n| {
                let idx: Vec<usize> = (start..start + n).collect();
                start += n;
                data.subset(&idx)
            })
            .collect();
        let cfg = FedConfig { seed: 5, ..FedConfig::new(Protocol::Bagging, 3, 30, boost()) };
        let out = run(&clients, &cfg).unwrap();
        let chains = identify_tree_chains(&out.views[0], 3).unwrap();
        for ch in &chains.chains {
            assert_eq!(ch.len(), 30);
            let owner = out.global.trees[ch[0][0]].tag.client_id;
            assert!(ch.iter().all(|u| out.global.trees[u[0]].tag.client_id == owner));
        }
        assert!(!chains.ambiguous);
    }

    #[test]
    fn identical_clients_flag_ambiguity() {
        let d = synth::pima_like(120, 1);
        let cfg = FedConfig::new(Protocol::Bagging, 2, 3, boost());
        let out = run(&[d.clone(), d], &cfg).unwrap();
        let chains = identify_tree_chains(&out.views[0], 2).unwrap();
        assert!(chains.ambiguous);
        assert_eq!(chains.chains.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3]);
    }

    #[test]
    fn cyclic_is_index_arithmetic() {
        let d = synth::pima_like(90, 2);
        let parts = vec![d.subset(&(0..30).collect::<Vec<_>>()), d.subset(&(30..60).collect::<Vec<_>>()), d.subset(&(60..90).collect::<Vec<_>>())];
        let out = run(&parts, &FedConfig::new(Protocol::Cyclic, 3, 7, boost())).unwrap();
        let chains = identify_tree_chains(&out.views[1], 3).unwrap();
        assert_eq!(chains.flat(0), vec![0, 3, 6]);
        assert_eq!(chains.flat(2), vec![2, 5]);
    }

    #[test]
    fn wrong_client_count_is_malformed() {
        let d = synth::pima_like(60, 2);
        let out = run(&[d.clone(), d], &FedConfig::new(Protocol::Bagging, 2, 2, boost())).unwrap();
        assert!(identify_tree_chains(&out.views[0], 3).is_err());
    }
}
