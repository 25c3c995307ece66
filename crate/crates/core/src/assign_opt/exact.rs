//! Zero-residual search over group counts. Each connected component of the
//! group/leaf reachability graph is searched independently by depth-first
//! branching with propagation: a leaf with one or two open groups left has
//! its counts fixed by its `(G, H)` residual.

use std::time::Instant;

/// Interchangeable samples: shared `(g, h)` and reachable leaves.
pub(crate) struct GroupSpec<'a> {
    pub g: f64,
    pub h: f64,
    pub leaves: &'a [usize],
    pub size: usize,
}

pub(crate) enum Outcome {
    /// Per group position counts with every leaf residual within tolerance.
    Found(Vec<Vec<usize>>),
    /// No zero-residual completion exists.
    Exhausted,
    TimedOut,
}

/// Search nodes granted to one component before it reports a timeout.
const NODE_BUDGET: u64 = 200_000;

/// Residual tolerance for a leaf with target magnitude `scale`.
fn tol(scale: f64) -> f64 {
    1e-7 * (1.0 + scale)
}

#[derive(Clone)]
struct State {
    left: Vec<usize>,
    open: Vec<Vec<bool>>,
    count: Vec<Vec<usize>>,
    rg: Vec<f64>,
    rh: Vec<f64>,
}

struct Component<'a> {
    groups: Vec<&'a GroupSpec<'a>>,
    /// Per group position: local leaf index.
    local: Vec<Vec<usize>>,
    /// Per local leaf: (group, position) pairs.
    members: Vec<Vec<(usize, usize)>>,
    tol: Vec<f64>,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
}

enum Step {
    Fail,
    Changed,
    Stable,
}

impl Component<'_> {
    fn assign(&self, s: &mut State, q: usize, pos: usize, x: usize) {
        let j = self.local[q][pos];
        let gr = self.groups[q];
        s.count[q][pos] += x;
        s.left[q] -= x;
        s.rg[j] -= x as f64 * gr.g;
        s.rh[j] -= x as f64 * gr.h;
        s.open[q][pos] = false;
    }

    fn open_at(&self, s: &State, j: usize) -> Vec<(usize, usize)> {
        self.members[j]
            .iter()
            .copied()
            .filter(|&(q, pos)| s.open[q][pos] && s.left[q] > 0)
            .collect()
    }

    /// Integer in `[0, max]` within tolerance of `x`.
    fn integral(x: f64, max: usize) -> Option<usize> {
        let r = x.round();
        if (x - r).abs() <= 1e-6 * (1.0 + x.abs()) && r >= 0.0 && r <= max as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    fn propagate_once(&self, s: &mut State) -> Step {
        let mut changed = false;
        for q in 0..self.groups.len() {
            if s.left[q] == 0 {
                continue;
            }
            let mut open = s.open[q].iter().enumerate().filter(|x| *x.1).map(|x| x.0);
            match (open.next(), open.next()) {
                (None, _) => return Step::Fail,
                (Some(pos), None) => {
                    let x = s.left[q];
                    self.assign(s, q, pos, x);
                    changed = true;
                }
                _ => {}
            }
        }
        for j in 0..self.members.len() {
            let open = self.open_at(s, j);
            let t = self.tol[j];
            let (mut glo, mut ghi, mut hlo, mut hhi) = (0.0, 0.0, 0.0, 0.0);
            for &(q, _) in &open {
                let gr = self.groups[q];
                let n = s.left[q] as f64;
                glo += n * gr.g.min(0.0);
                ghi += n * gr.g.max(0.0);
                hlo += n * gr.h.min(0.0);
                hhi += n * gr.h.max(0.0);
            }
            if s.rg[j] < glo - t || s.rg[j] > ghi + t || s.rh[j] < hlo - t || s.rh[j] > hhi + t {
                return Step::Fail;
            }
            match open.len() {
                0 => {}
                1 => {
                    let (q, pos) = open[0];
                    let gr = self.groups[q];
                    let est = if gr.h.abs() >= gr.g.abs() { s.rh[j] / gr.h } else { s.rg[j] / gr.g };
                    let Some(x) = Self::integral(est, s.left[q]) else {
                        return Step::Fail;
                    };
                    self.assign(s, q, pos, x);
                    if s.rg[j].abs() > t || s.rh[j].abs() > t {
                        return Step::Fail;
                    }
                    changed = true;
                }
                2 => {
                    let ((a, pa), (b, pb)) = (open[0], open[1]);
                    let (ga, gb) = (self.groups[a], self.groups[b]);
                    let det = ga.g * gb.h - gb.g * ga.h;
                    let scale = (ga.g.abs() + ga.h.abs()) * (gb.g.abs() + gb.h.abs());
                    if det.abs() <= 1e-9 * scale {
                        continue;
                    }
                    let xa = (s.rg[j] * gb.h - gb.g * s.rh[j]) / det;
                    let xb = (ga.g * s.rh[j] - s.rg[j] * ga.h) / det;
                    let (Some(xa), Some(xb)) = (Self::integral(xa, s.left[a]), Self::integral(xb, s.left[b])) else {
                        return Step::Fail;
                    };
                    self.assign(s, a, pa, xa);
                    self.assign(s, b, pb, xb);
                    if s.rg[j].abs() > t || s.rh[j].abs() > t {
                        return Step::Fail;
                    }
                    changed = true;
                }
                _ => {}
            }
        }
        if changed {
            Step::Changed
        } else {
            Step::Stable
        }
    }

    fn propagate(&self, s: &mut State) -> bool {
        loop {
            match self.propagate_once(s) {
                Step::Fail => return false,
                Step::Stable => return true,
                Step::Changed => {}
            }
        }
    }

    fn dfs(&mut self, mut s: State) -> Option<State> {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET || (self.nodes % 256 == 0 && Instant::now() >= self.deadline) {
            self.timed_out = true;
        }
        if self.timed_out || !self.propagate(&mut s) {
            return None;
        }
        // Branch at the open leaf with the fewest open groups.
        let mut pick: Option<(usize, Vec<(usize, usize)>)> = None;
        for j in 0..self.members.len() {
            let open = self.open_at(&s, j);
            if !open.is_empty() && pick.as_ref().is_none_or(|p| open.len() < p.1.len()) {
                pick = Some((j, open));
            }
        }
        let Some((j, open)) = pick else {
            return Some(s);
        };
        let &(q, pos) = open
            .iter()
            .max_by(|x, y| {
                let w = |&(q, _): &(usize, usize)| s.left[q] as f64 * self.groups[q].h.abs().max(self.groups[q].g.abs());
                w(x).total_cmp(&w(y)).then(y.cmp(x))
            })
            .expect("non-empty");
        // Proportional share of the leaf's remaining Hessian.
        let share: f64 = open.iter().map(|&(r, _)| s.left[r] as f64 * self.groups[r].h).sum();
        let est = if share.abs() > 0.0 { s.left[q] as f64 * s.rh[j] / share } else { 0.0 };
        let mut xs: Vec<usize> = (0..=s.left[q]).collect();
        xs.sort_by(|&a, &b| (a as f64 - est).abs().total_cmp(&(b as f64 - est).abs()).then(a.cmp(&b)));
        for x in xs {
            let mut next = s.clone();
            self.assign(&mut next, q, pos, x);
            if let Some(done) = self.dfs(next) {
                return Some(done);
            }
            if self.timed_out {
                return None;
            }
        }
        None
    }
}

/// Searches each connected component for counts that zero every leaf
/// residual; `targets` already exclude fixed contributions. Returns one
/// outcome per component together with its group indices.
pub(crate) fn zero_search(
    groups: &[GroupSpec<'_>],
    targets: &[(f64, f64)],
    deadline: Instant,
) -> Vec<(Vec<usize>, Outcome)> {
    let m = targets.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for g in groups {
        for w in g.leaves.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (q, g) in groups.iter().enumerate() {
        by_root.entry(find(&mut parent, g.leaves[0])).or_default().push(q);
    }
    let mut out = Vec::new();
    for (_, qs) in by_root {
        let mut leaf_ids: Vec<usize> = qs.iter().flat_map(|&q| groups[q].leaves.iter().copied()).collect();
        leaf_ids.sort_unstable();
        leaf_ids.dedup();
        let index = |j: usize| leaf_ids.binary_search(&j).expect("component leaf");
        let local: Vec<Vec<usize>> = qs.iter().map(|&q| groups[q].leaves.iter().map(|&j| index(j)).collect()).collect();
        let mut members = vec![Vec::new(); leaf_ids.len()];
        for (lq, l) in local.iter().enumerate() {
            for (pos, &j) in l.iter().enumerate() {
                members[j].push((lq, pos));
            }
        }
        let mut comp = Component {
            groups: qs.iter().map(|&q| &groups[q]).collect(),
            local,
            members,
            tol: leaf_ids.iter().map(|&j| tol(targets[j].0.abs() + targets[j].1.abs())).collect(),
            deadline,
            nodes: 0,
            timed_out: Instant::now() >= deadline,
        };
        let start = State {
            left: qs.iter().map(|&q| groups[q].size).collect(),
            open: qs.iter().map(|&q| vec![true; groups[q].leaves.len()]).collect(),
            count: qs.iter().map(|&q| vec![0; groups[q].leaves.len()]).collect(),
            rg: leaf_ids.iter().map(|&j| targets[j].0).collect(),
            rh: leaf_ids.iter().map(|&j| targets[j].1).collect(),
        };
        let outcome = if comp.timed_out {
            Outcome::TimedOut
        } else {
            match comp.dfs(start) {
                Some(s) => Outcome::Found(s.count),
                None if comp.timed_out => Outcome::TimedOut,
                None => Outcome::Exhausted,
            }
        };
        out.push((qs, outcome));
    }
    out
}
