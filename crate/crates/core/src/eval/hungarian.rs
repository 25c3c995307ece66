use crate::error::{Error, Result};

/// Minimum-cost assignment of every row of an `n x m` cost (`n <= m`) to a
/// distinct column. `cost(i, j)` is queried repeatedly and must be pure.
pub(crate) fn assign_rows<F: Fn(usize, usize) -> f64>(n: usize, m: usize, cost: F) -> Vec<usize> {
    debug_assert!(n <= m);
    // Potentials u (rows), v (columns); p[j] is the row matched to column j, 1-based.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Exact minimum-cost perfect matching on a square matrix; `result[i]` is
/// the column paired with row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("hungarian needs a square matrix; use hungarian_rect"));
    }
    Ok(hungarian_rect(cost)?.into_iter().map(|c| c.expect("square")).collect())
}

/// Rectangular variant: every row is matched when `rows <= cols`, otherwise
/// every column is and surplus rows map to `None`.
pub fn hungarian_rect(cost: &[Vec<f64>]) -> Result<Vec<Option<usize>>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("ragged cost matrix"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::invalid("non-finite entry in cost matrix"));
    }
    Ok(match_by(n, m, |i, j| cost[i][j]))
}

pub(crate) fn match_by<F: Fn(usize, usize) -> f64>(n: usize, m: usize, cost: F) -> Vec<Option<usize>> {
    if n <= m {
        assign_rows(n, m, cost).into_iter().map(Some).collect()
    } else {
        let cols = assign_rows(m, n, |j, i| cost(i, j));
        let mut out = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identity_favoring() {
        let c: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        assert_eq!(hungarian(&c).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_by_two() {
        let c = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p, vec![0, 1]);
        assert_eq!(total(&c, &p), 2.0);
    }

    #[test]
    fn matches_factorial_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let c: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let best = permutations(n).iter().map(|p| total(&c, p)).fold(f64::INFINITY, f64::min);
            let got = total(&c, &hungarian(&c).unwrap());
            assert!((got - best).abs() < 1e-9, "{got} vs {best}");
        }
    }

    #[test]
    fn rectangular_both_orientations() {
        let c = vec![vec![5.0, 1.0, 9.0], vec![1.0, 7.0, 9.0]];
        assert_eq!(hungarian_rect(&c).unwrap(), vec![Some(1), Some(0)]);
        let t: Vec<Vec<f64>> = (0..3).map(|j| c.iter().map(|r| r[j]).collect()).collect();
        assert_eq!(hungarian_rect(&t).unwrap(), vec![Some(1), Some(0), None]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
        assert!(hungarian(&[]).unwrap().is_empty());
    }
}
