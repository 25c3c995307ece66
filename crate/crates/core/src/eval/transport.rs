use std::collections::HashMap;

/// Minimum-cost maximum matching between `n` rows and `m` columns of a
/// small non-negative integer cost table `cost[i * m + j]`.
///
/// Identical rows and identical columns are merged into classes and the
/// resulting transportation problem is solved by primal-dual min-cost flow.
/// Phases are bounded by the cost range, so large tables with few distinct
/// patterns are cheap. Members of a class are paired in index order.
pub(crate) fn match_classes(n: usize, m: usize, cost: &[u32]) -> Vec<Option<usize>> {
    debug_assert_eq!(cost.len(), n * m);
    let (row_class, row_reps) = classes(n, |i| &cost[i * m..(i + 1) * m]);
    let col_key: Vec<Vec<u32>> = (0..m).map(|j| row_reps.iter().map(|&i| cost[i * m + j]).collect()).collect();
    let (col_class, col_reps) = classes(m, |j| col_key[j].as_slice());
    let r = row_reps.len();
    let c = col_reps.len();
    let mut row_supply = vec![0i64; r];
    row_class.iter().for_each(|&k| row_supply[k] += 1);
    let mut col_demand = vec![0i64; c];
    col_class.iter().for_each(|&k| col_demand[k] += 1);

    let mut g = Flow::new(r + c + 2);
    let (s, t) = (0, r + c + 1);
    for a in 0..r {
        g.add(s, 1 + a, row_supply[a], 0);
    }
    for b in 0..c {
        g.add(1 + r + b, t, col_demand[b], 0);
    }
    let mut mid = Vec::with_capacity(r * c);
    for a in 0..r {
        for b in 0..c {
            let w = i64::from(col_key[col_reps[b]][a]);
            mid.push(g.add(1 + a, 1 + r + b, row_supply[a].min(col_demand[b]), w));
        }
    }
    g.min_cost_max_flow(s, t);

    // flows[a][b] is consumed while members are handed out in index order.
    let mut flows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); r];
    for a in 0..r {
        for b in 0..c {
            let f = g.flow_on(mid[a * c + b]);
            if f > 0 {
                flows[a].push((b, f));
            }
        }
    }
    let mut col_members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for j in (0..m).rev() {
        col_members[col_class[j]].push(j);
    }
    let mut out = vec![None; n];
    for i in 0..n {
        let a = row_class[i];
        if let Some((b, f)) = flows[a].first_mut() {
            out[i] = col_members[*b].pop();
            *f -= 1;
            if *f == 0 {
                flows[a].remove(0);
            }
        }
    }
    out
}

/// Class index per item and the first item of each class.
fn classes<'a, F: Fn(usize) -> &'a [u32]>(n: usize, key: F) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<&'a [u32], usize> = HashMap::new();
    let mut reps = Vec::new();
    let class = (0..n)
        .map(|i| {
            *seen.entry(key(i)).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    (class, reps)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
}

struct Flow {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Flow {
    fn new(nodes: usize) -> Self {
        Flow {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to: v, cap, cost });
        self.edges.push(Edge { to: u, cap: 0, cost: -cost });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow carried by forward edge `id` (its reverse residual).
    fn flow_on(&self, id: usize) -> i64 {
        self.edges[id + 1].cap
    }

    /// Primal-dual: Dijkstra on reduced costs, then a blocking flow on the
    /// zero reduced-cost subgraph, until the sink is unreachable.
    fn min_cost_max_flow(&mut self, s: usize, t: usize) {
        let n = self.adj.len();
        let mut pot = vec![0i64; n];
        loop {
            let dist = self.dijkstra(s, &pot);
            if dist[t] == i64::MAX {
                return;
            }
            let cap = dist.iter().filter(|&&d| d < i64::MAX).max().copied().unwrap_or(0);
            for v in 0..n {
                pot[v] += dist[v].min(cap);
            }
            while self.blocking_flow(s, t, &pot) > 0 {}
        }
    }

    fn reduced(&self, u: usize, id: usize, pot: &[i64]) -> i64 {
        let e = &self.edges[id];
        e.cost + pot[u] - pot[e.to]
    }

    fn dijkstra(&self, s: usize, pot: &[i64]) -> Vec<i64> {
        let n = self.adj.len();
        let mut dist = vec![i64::MAX; n];
        let mut done = vec![false; n];
        dist[s] = 0;
        // Dense graph: an O(V^2) scan beats a heap.
        loop {
            let mut u = usize::MAX;
            for v in 0..n {
                if !done[v] && dist[v] < i64::MAX && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                return dist;
            }
            done[u] = true;
            for &id in &self.adj[u] {
                let e = &self.edges[id];
                if e.cap > 0 && !done[e.to] {
                    let d = dist[u] + self.reduced(u, id, pot);
                    if d < dist[e.to] {
                        dist[e.to] = d;
                    }
                }
            }
        }
    }

    /// Dinic phase restricted to residual edges with zero reduced cost.
    fn blocking_flow(&mut self, s: usize, t: usize, pot: &[i64]) -> i64 {
        let n = self.adj.len();
        let mut level = vec![usize::MAX; n];
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &id in &self.adj[u] {
                let e = &self.edges[id];
                if e.cap > 0 && level[e.to] == usize::MAX && self.reduced(u, id, pot) == 0 {
                    level[e.to] = level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        if level[t] == usize::MAX {
            return 0;
        }
        let mut next = vec![0usize; n];
        let mut total = 0;
        loop {
            let f = self.push(s, t, i64::MAX, &level, &mut next, pot);
            if f == 0 {
                return total;
            }
            total += f;
        }
    }

    fn push(&mut self, u: usize, t: usize, limit: i64, level: &[usize], next: &mut [usize], pot: &[i64]) -> i64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let id = self.adj[u][next[u]];
            let (to, cap) = (self.edges[id].to, self.edges[id].cap);
            if cap > 0 && level[to] == level[u] + 1 && self.reduced(u, id, pot) == 0 {
                let f = self.push(to, t, limit.min(cap), level, next, pot);
                if f > 0 {
                    self.edges[id].cap -= f;
                    self.edges[id ^ 1].cap += f;
                    return f;
                }
            }
            next[u] += 1;
        }
        0
    }
}
