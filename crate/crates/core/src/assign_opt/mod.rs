//! Sample-to-leaf assignment under reachability constraints, minimizing
//! `sum_j (sum_{i->j} g_i - G_j)^2 + (sum_{i->j} h_i - H_j)^2`.

mod exact;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration guard shared by brute force and branch-and-bound.
pub const MAX_ENUMERATION: f64 = 1e6;

/// Seconds per tree used when no limit is configured.
pub const DEFAULT_TIME_LIMIT: f64 = 600.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStat {
    pub g: f64,
    pub h: f64,
    /// Indices into `leaves`, ascending.
    pub reachable: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafTarget {
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    pub samples: Vec<SampleStat>,
    pub leaves: Vec<LeafTarget>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Global optimum proven (exhaustive search or zero objective).
    Optimal,
    /// Local optimum; the instance was too large for exact refinement.
    Heuristic,
    /// Stopped by the time limit; best incumbent returned.
    TimeLimited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Leaf index per sample.
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Objective after greedy start and after every accepted improvement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl AssignmentProblem {
    pub fn new(samples: Vec<SampleStat>, leaves: Vec<LeafTarget>) -> Result<Self> {
        let mut p = AssignmentProblem {
            samples,
            leaves,
        };
        for s in &mut p.samples {
            s.reachable.sort_unstable();
            s.reachable.dedup();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.leaves.len();
        if self.leaves.iter().any(|l| !l.g.is_finite() || !l.h.is_finite()) {
            return Err(Error::Solver("non-finite leaf target".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !s.g.is_finite() || !s.h.is_finite() {
                return Err(Error::Solver(format!("sample {i} has non-finite statistics")));
            }
            if s.reachable.is_empty() {
                return Err(Error::Solver(format!("sample {i} reaches no leaf")));
            }
            if s.reachable.iter().any(|&j| j >= m) {
                return Err(Error::Solver(format!("sample {i} references a leaf beyond {m}")));
            }
            if s.reachable.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Solver(format!("sample {i} reachable set not strictly ascending")));
            }
        }
        Ok(())
    }

    /// Objective of a complete assignment; sums run in sample order.
    pub fn objective_of(&self, assignment: &[usize]) -> f64 {
        let m = self.leaves.len();
        let mut sg = vec![0.0; m];
        let mut sh = vec![0.0; m];
        for (s, &j) in self.samples.iter().zip(assignment) {
            sg[j] += s.g;
            sh[j] += s.h;
        }
        self.leaves
            .iter()
            .enumerate()
            .map(|(j, t)| (sg[j] - t.g).powi(2) + (sh[j] - t.h).powi(2))
            .sum()
    }

    pub fn is_feasible(&self, assignment: &[usize]) -> bool {
        assignment.len() == self.samples.len()
            && self
                .samples
                .iter()
                .zip(assignment)
                .all(|(s, j)| s.reachable.binary_search(j).is_ok())
    }

    /// Objectives at or below this are rounding residue of an exact fit.
    pub fn zero_tolerance(&self) -> f64 {
        let scale: f64 = self.samples.iter().map(|s| s.g.abs() + s.h.abs()).sum();
        (1e-12 * (1.0 + scale)).powi(2)
    }

    /// Size of the feasible set, as a float to avoid overflow.
    pub fn search_space(&self) -> f64 {
        self.samples.iter().map(|s| s.reachable.len() as f64).product()
    }
}

/// Exhaustive enumeration; errors beyond [`MAX_ENUMERATION`] assignments.
pub fn solve_brute_force(p: &AssignmentProblem) -> Result<Assignment> {
    p.validate()?;
    if p.search_space() > MAX_ENUMERATION {
        return Err(Error::Solver(format!(
            "brute force over {} assignments exceeds the {MAX_ENUMERATION} guard",
            p.search_space()
        )));
    }
    let n = p.samples.len();
    let mut pos = vec![0usize; n];
    let mut cur: Vec<usize> = p.samples.iter().map(|s| s.reachable[0]).collect();
    let mut best = cur.clone();
    let mut best_obj = p.objective_of(&cur);
    'outer: loop {
        let mut i = 0;
        loop {
            if i == n {
                break 'outer;
            }
            pos[i] += 1;
            if pos[i] < p.samples[i].reachable.len() {
                cur[i] = p.samples[i].reachable[pos[i]];
                break;
            }
            pos[i] = 0;
            cur[i] = p.samples[i].reachable[0];
            i += 1;
        }
        let obj = p.objective_of(&cur);
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&cur);
        }
    }
    Ok(Assignment {
        assignment: best,
        objective: best_obj,
        status: SolveStatus::Optimal,
        trace: Vec::new(),
    })
}

/// Samples with identical `(g, h, reachable)` are interchangeable; local
/// search moves counts between leaves instead of individual samples.
struct Group {
    g: f64,
    h: f64,
    leaves: Vec<usize>,
    members: Vec<usize>,
    count: Vec<usize>,
}

struct Search<'a> {
    p: &'a AssignmentProblem,
    groups: Vec<Group>,
    rg: Vec<f64>,
    rh: Vec<f64>,
    obj: f64,
}

const IMPROVE_TOL: f64 = 1e-12;

/// Pair swaps are scanned only below this many occupied (group, leaf) slots.
const MAX_SWAP_SLOTS: usize = 2000;

impl<'a> Search<'a> {
    fn new(p: &'a AssignmentProblem) -> Self {
        let mut index: BTreeMap<(u64, u64, &[usize]), usize> = BTreeMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for (i, s) in p.samples.iter().enumerate() {
            let key = (s.g.to_bits(), s.h.to_bits(), s.reachable.as_slice());
            let q = *index.entry(key).or_insert_with(|| {
                groups.push(Group {
                    g: s.g,
                    h: s.h,
                    leaves: s.reachable.clone(),
                    members: Vec::new(),
                    count: vec![0; s.reachable.len()],
                });
                groups.len() - 1
            });
            groups[q].members.push(i);
        }
        let rg: Vec<f64> = p.leaves.iter().map(|t| -t.g).collect();
        let rh: Vec<f64> = p.leaves.iter().map(|t| -t.h).collect();
        let obj = rg.iter().zip(&rh).map(|(a, b)| a * a + b * b).sum();
        Search { p, groups, rg, rh, obj }
    }

    fn add_delta(&self, g: f64, h: f64, j: usize) -> f64 {
        2.0 * g * self.rg[j] + g * g + 2.0 * h * self.rh[j] + h * h
    }

    fn place(&mut self, q: usize, pos: usize, sign: f64) {
        let (g, h, j) = (self.groups[q].g, self.groups[q].h, self.groups[q].leaves[pos]);
        let (g, h) = (sign * g, sign * h);
        self.obj += self.add_delta(g, h, j);
        self.rg[j] += g;
        self.rh[j] += h;
        if sign > 0.0 {
            self.groups[q].count[pos] += 1;
        } else {
            self.groups[q].count[pos] -= 1;
        }
    }

    /// Largest-|h| first, each sample to the leaf whose objective grows least.
    fn greedy(&mut self) {
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        order.sort_by(|&a, &b| self.groups[b].h.abs().total_cmp(&self.groups[a].h.abs()).then(a.cmp(&b)));
        for q in order {
            for _ in 0..self.groups[q].members.len() {
                let (g, h) = (self.groups[q].g, self.groups[q].h);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (pos, &j) in self.groups[q].leaves.iter().enumerate() {
                    let d = self.add_delta(g, h, j);
                    if d < best_d {
                        best_d = d;
                        best = pos;
                    }
                }
                self.place(q, best, 1.0);
            }
        }
    }

    /// Per group: the occupied leaf with the largest score `2g rg + 2h rh` is
    /// the best source, the smallest score (other than the source) the best target.
    fn best_move(&self) -> Option<(usize, usize, usize, f64)> {
        let mut best: Option<(usize, usize, usize, f64)> = None;
        let tol = -IMPROVE_TOL * (1.0 + self.obj);
        for (q, gr) in self.groups.iter().enumerate() {
            if gr.leaves.len() < 2 {
                continue;
            }
            let score = |j: usize| 2.0 * gr.g * self.rg[j] + 2.0 * gr.h * self.rh[j];
            let mut src: Option<(usize, f64)> = None;
            let mut lo: [Option<(usize, f64)>; 2] = [None, None];
            for (pos, &j) in gr.leaves.iter().enumerate() {
                let sc = score(j);
                if gr.count[pos] > 0 && src.is_none_or(|(_, v)| sc > v) {
                    src = Some((pos, sc));
                }
                if lo[0].is_none_or(|(_, v)| sc < v) {
                    lo[1] = lo[0];
                    lo[0] = Some((pos, sc));
                } else if lo[1].is_none_or(|(_, v)| sc < v) {
                    lo[1] = Some((pos, sc));
                }
            }
            let Some((a, sa)) = src else { continue };
            let Some((b, sb)) = lo.into_iter().flatten().find(|&(b, _)| b != a) else {
                continue;
            };
            let d = sb - sa + 2.0 * (gr.g * gr.g + gr.h * gr.h);
            if d < tol && best.is_none_or(|x| d < x.3) {
                best = Some((q, a, b, d));
            }
        }
        best
    }

    fn best_swap(&self) -> Option<Swap> {
        let slots: Vec<(usize, usize)> = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(q, gr)| (0..gr.leaves.len()).filter(move |&a| gr.count[a] > 0).map(move |a| (q, a)))
            .collect();
        if slots.len() > MAX_SWAP_SLOTS {
            return None;
        }
        let mut best: Option<Swap> = None;
        for (x, &(q, a)) in slots.iter().enumerate() {
            let gq = &self.groups[q];
            let ja = gq.leaves[a];
            for &(r, b) in &slots[x + 1..] {
                if r == q {
                    continue;
                }
                let gr = &self.groups[r];
                let jb = gr.leaves[b];
                if ja == jb {
                    continue;
                }
                let (Ok(qb), Ok(ra)) = (gq.leaves.binary_search(&jb), gr.leaves.binary_search(&ja)) else {
                    continue;
                };
                let dg = gr.g - gq.g;
                let dh = gr.h - gq.h;
                let d = 2.0 * dg * (self.rg[ja] - self.rg[jb])
                    + 2.0 * dg * dg
                    + 2.0 * dh * (self.rh[ja] - self.rh[jb])
                    + 2.0 * dh * dh;
                if d < -IMPROVE_TOL * (1.0 + self.obj) && best.as_ref().is_none_or(|y| d < y.delta) {
                    best = Some(Swap {
                        q,
                        a,
                        qb,
                        r,
                        b,
                        ra,
                        delta: d,
                    });
                }
            }
        }
        best
    }

    fn specs(&self, which: &[usize]) -> Vec<exact::GroupSpec<'_>> {
        which
            .iter()
            .map(|&q| exact::GroupSpec {
                g: self.groups[q].g,
                h: self.groups[q].h,
                leaves: &self.groups[q].leaves,
                size: self.groups[q].members.len(),
            })
            .collect()
    }

    fn set_counts(&mut self, q: usize, counts: &[usize]) {
        for pos in 0..counts.len() {
            while self.groups[q].count[pos] > 0 {
                self.place(q, pos, -1.0);
            }
        }
        for (pos, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                self.place(q, pos, 1.0);
            }
        }
    }

    /// Replaces the counts of every component that admits a zero-residual
    /// completion. `Some(true)`: all leaf residuals are now within tolerance;
    /// `None`: the deadline interrupted the search.
    fn zero_refine(&mut self, deadline: Instant) -> Option<bool> {
        let m = self.p.leaves.len();
        let mut targets: Vec<(f64, f64)> = self.p.leaves.iter().map(|t| (t.g, t.h)).collect();
        let mut free = Vec::new();
        let mut touched = vec![false; m];
        for (q, gr) in self.groups.iter().enumerate() {
            if gr.leaves.len() == 1 {
                let n = gr.members.len() as f64;
                let t = &mut targets[gr.leaves[0]];
                t.0 -= n * gr.g;
                t.1 -= n * gr.h;
            } else {
                free.push(q);
                for &j in &gr.leaves {
                    touched[j] = true;
                }
            }
        }
        let specs = self.specs(&free);
        let outcomes = exact::zero_search(&specs, &targets, deadline);
        drop(specs);
        let mut all = (0..m).all(|j| {
            touched[j] || {
                let (g, h) = targets[j];
                g.abs() + h.abs() <= 1e-7 * (1.0 + self.p.leaves[j].g.abs() + self.p.leaves[j].h.abs())
            }
        });
        let mut interrupted = false;
        for (qs, outcome) in outcomes {
            match outcome {
                exact::Outcome::Found(counts) => {
                    for (&lq, c) in qs.iter().zip(counts) {
                        self.set_counts(free[lq], &c);
                    }
                }
                exact::Outcome::Exhausted => all = false,
                exact::Outcome::TimedOut => {
                    all = false;
                    interrupted = true;
                }
            }
        }
        self.obj = self.p.objective_of(&self.assignment());
        if interrupted {
            None
        } else {
            Some(all)
        }
    }

    /// Per-sample leaf ids from group counts, members in index order.
    fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.p.samples.len()];
        for gr in &self.groups {
            let mut it = gr.members.iter();
            for (pos, &c) in gr.count.iter().enumerate() {
                for _ in 0..c {
                    out[*it.next().expect("counts match members")] = gr.leaves[pos];
                }
            }
        }
        out
    }
}

/// One sample of group `q` moves from position `a` to `qb`; one of group
/// `r` moves from position `b` to `ra`.
struct Swap {
    q: usize,
    a: usize,
    qb: usize,
    r: usize,
    b: usize,
    ra: usize,
    delta: f64,
}

/// Anytime solver: greedy start, best-improvement moves and swaps, then
/// branch-and-bound when the instance is within [`MAX_ENUMERATION`].
pub fn solve(p: &AssignmentProblem, time_limit: f64) -> Result<Assignment> {
    p.validate()?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(time_limit.max(0.0));
    let mut s = Search::new(p);
    s.greedy();
    let mut trace = vec![p.objective_of(&s.assignment())];
    if time_limit <= 0.0 {
        return Ok(Assignment {
            assignment: s.assignment(),
            objective: trace[0],
            status: SolveStatus::TimeLimited,
            trace,
        });
    }
    let mut timed_out = false;
    loop {
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        if let Some((q, a, b, _)) = s.best_move() {
            s.place(q, a, -1.0);
            s.place(q, b, 1.0);
        } else if let Some(w) = s.best_swap() {
            s.place(w.q, w.a, -1.0);
            s.place(w.q, w.qb, 1.0);
            s.place(w.r, w.b, -1.0);
            s.place(w.r, w.ra, 1.0);
        } else {
            break;
        }
        trace.push(s.obj);
    }
    let mut exact_zero = false;
    if !timed_out && s.obj > p.zero_tolerance() {
        match s.zero_refine(deadline) {
            Some(true) => exact_zero = true,
            Some(false) => {}
            None => timed_out = true,
        }
        trace.push(s.obj);
    }
    let mut best = s.assignment();
    let mut best_obj = p.objective_of(&best);
    let mut status = if best_obj <= p.zero_tolerance() || exact_zero {
        SolveStatus::Optimal
    } else if timed_out {
        SolveStatus::TimeLimited
    } else {
        SolveStatus::Heuristic
    };
    if status == SolveStatus::Heuristic && p.search_space() <= MAX_ENUMERATION {
        let mut bb = BranchAndBound::new(p, best.clone(), best_obj, deadline);
        let complete = bb.run();
        if bb.best_obj < best_obj {
            best = bb.best.clone();
            best_obj = bb.best_obj;
            trace.push(best_obj);
        }
        status = if complete {
            SolveStatus::Optimal
        } else {
            SolveStatus::TimeLimited
        };
    }
    Ok(Assignment {
        assignment: best,
        objective: best_obj,
        status,
        trace,
    })
}

/// Depth-first exact search seeded with an incumbent. The bound relaxes each
/// leaf's remaining contribution to any value between the sums of the
/// negative and positive statistics that can still reach it.
struct BranchAndBound<'a> {
    p: &'a AssignmentProblem,
    order: Vec<usize>,
    /// `[depth][leaf]` = (neg g, pos g, neg h, pos h) over samples `order[depth..]`.
    suffix: Vec<Vec<[f64; 4]>>,
    rg: Vec<f64>,
    rh: Vec<f64>,
    cur: Vec<usize>,
    best: Vec<usize>,
    best_obj: f64,
    deadline: Instant,
    steps: u64,
    aborted: bool,
}

impl<'a> BranchAndBound<'a> {
    fn new(p: &'a AssignmentProblem, incumbent: Vec<usize>, obj: f64, deadline: Instant) -> Self {
        let n = p.samples.len();
        let m = p.leaves.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&p.samples[a], &p.samples[b]);
            (sb.g.abs() + sb.h.abs()).total_cmp(&(sa.g.abs() + sa.h.abs())).then(a.cmp(&b))
        });
        let mut suffix = vec![vec![[0.0; 4]; m]; n + 1];
        for d in (0..n).rev() {
            suffix[d] = suffix[d + 1].clone();
            let s = &p.samples[order[d]];
            for &j in &s.reachable {
                let e = &mut suffix[d][j];
                e[0] += s.g.min(0.0);
                e[1] += s.g.max(0.0);
                e[2] += s.h.min(0.0);
                e[3] += s.h.max(0.0);
            }
        }
        BranchAndBound {
            p,
            order,
            suffix,
            rg: p.leaves.iter().map(|t| -t.g).collect(),
            rh: p.leaves.iter().map(|t| -t.h).collect(),
            cur: incumbent.clone(),
            best: incumbent,
            best_obj: obj,
            deadline,
            steps: 0,
            aborted: false,
        }
    }

    fn bound(&self, depth: usize) -> f64 {
        fn gap(r: f64, lo: f64, hi: f64) -> f64 {
            if r + hi < 0.0 {
                (r + hi).powi(2)
            } else if r + lo > 0.0 {
                (r + lo).powi(2)
            } else {
                0.0
            }
        }
        self.suffix[depth]
            .iter()
            .enumerate()
            .map(|(j, e)| gap(self.rg[j], e[0], e[1]) + gap(self.rh[j], e[2], e[3]))
            .sum()
    }

    /// Returns `true` when the search space was exhausted.
    fn run(&mut self) -> bool {
        self.dfs(0);
        !self.aborted
    }

    fn dfs(&mut self, depth: usize) {
        if self.aborted {
            return;
        }
        self.steps += 1;
        if self.steps % 4096 == 0 && Instant::now() >= self.deadline {
            self.aborted = true;
            return;
        }
        if depth == self.order.len() {
            let obj = self.p.objective_of(&self.cur);
            if obj < self.best_obj {
                self.best_obj = obj;
                self.best.clone_from(&self.cur);
            }
            return;
        }
        let margin = 1e-9 * (1.0 + self.best_obj);
        if self.bound(depth) > self.best_obj + margin {
            return;
        }
        let i = self.order[depth];
        let s = &self.p.samples[i];
        let (g, h) = (s.g, s.h);
        for k in 0..s.reachable.len() {
            let j = self.p.samples[i].reachable[k];
            self.cur[i] = j;
            self.rg[j] += g;
            self.rh[j] += h;
            self.dfs(depth + 1);
            self.rg[j] -= g;
            self.rh[j] -= h;
        }
    }
}
