use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::Dataset;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 10_000;

/// Non-IID split: for every class, client shares are drawn from a symmetric
/// Dirichlet(alpha). Allocations are redrawn until each client holds a row.
pub fn dirichlet_partition(
    data: &Dataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Dataset>> {
    if n_clients < 2 {
        return Err(Error::invalid("dirichlet_partition needs at least 2 clients"));
    }
    if n_clients > data.len() {
        return Err(Error::invalid(format!(
            "{n_clients} clients but only {} rows",
            data.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes()];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
    }

    for _ in 0..MAX_ATTEMPTS {
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        for rows in by_class.iter().filter(|r| !r.is_empty()) {
            let draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if !(total > 0.0) {
                continue;
            }
            let n = rows.len();
            let mut acc = 0.0;
            let mut start = 0;
            for (c, d) in draws.iter().enumerate() {
                acc += d / total;
                let end = if c + 1 == n_clients {
                    n
                } else {
                    ((acc * n as f64).round() as usize).clamp(start, n)
                };
                assigned[c].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if assigned.iter().all(|a| !a.is_empty()) {
            return Ok(assigned
                .into_iter()
                .map(|mut idx| {
                    idx.sort_unstable();
                    data.subset(&idx)
                })
                .collect());
        }
    }
    Err(Error::invalid(format!(
        "no allocation giving every client a row after {MAX_ATTEMPTS} draws"
    )))
}

/// Stratified split: a `test_fraction` share of every class goes to the test set.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test_fraction must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..data.n_classes() {
        let mut rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_test = (rows.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}
