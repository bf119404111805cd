//! Transportation simplex on the bipartite spanning-tree basis.
//!
//! Nodes `0..n` are supplies, `n..n+m` demands. A basis is a spanning tree of
//! `n + m − 1` cells (some possibly at zero flow). Entering cells are priced
//! blockwise, falling back to Bland's rule after a run of degenerate pivots;
//! all ties go to the lowest row-major cell index.

use crate::{Error, Result};

/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;
/// Problems larger than this use the north-west corner start instead of the
/// least-cost one (which sorts every cell).
const LEAST_COST_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Hard limit on pivots; `None` picks a size-based default.
    pub max_pivots: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_pivots: None }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// Row-major `n × m` flows.
    pub flow: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tree {
    n: usize,
    m: usize,
    /// Basic cells as row-major indices.
    cells: Vec<usize>,
    flow: Vec<f64>,
    /// Per node, indices into `cells`.
    adj: Vec<Vec<usize>>,
    is_basic: Vec<bool>,
}

impl Tree {
    fn ends(&self, e: usize) -> (usize, usize) {
        let c = self.cells[e];
        (c / self.m, self.n + c % self.m)
    }

    fn push(&mut self, cell: usize, flow: f64) {
        let e = self.cells.len();
        self.cells.push(cell);
        self.flow.push(flow);
        let (r, c) = self.ends(e);
        self.adj[r].push(e);
        self.adj[c].push(e);
        self.is_basic[cell] = true;
    }

    fn replace(&mut self, e: usize, cell: usize, flow: f64) {
        let (r, c) = self.ends(e);
        self.adj[r].retain(|&k| k != e);
        self.adj[c].retain(|&k| k != e);
        self.is_basic[self.cells[e]] = false;
        self.cells[e] = cell;
        self.flow[e] = flow;
        let (r, c) = self.ends(e);
        self.adj[r].push(e);
        self.adj[c].push(e);
        self.is_basic[cell] = true;
    }
}

/// Potentials plus the rooted-tree structure used to trace cycles.
struct Rooted {
    pot: Vec<f64>,
    parent_edge: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
}

fn root_tree(tree: &Tree, cost: &[f64]) -> Rooted {
    let nodes = tree.n + tree.m;
    let mut r = Rooted {
        pot: vec![0.0; nodes],
        parent_edge: vec![usize::MAX; nodes],
        parent: vec![usize::MAX; nodes],
        depth: vec![0; nodes],
    };
    let mut seen = vec![false; nodes];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &e in &tree.adj[u] {
            let (row, col) = tree.ends(e);
            let v = if row == u { col } else { row };
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let c = cost[tree.cells[e]];
            // u_i + v_j = c_ij on basic cells.
            r.pot[v] = c - r.pot[u];
            r.parent[v] = u;
            r.parent_edge[v] = e;
            r.depth[v] = r.depth[u] + 1;
            stack.push(v);
        }
    }
    r
}

/// Tree path from row node to column node as edge indices, row end first.
fn tree_path(rooted: &Rooted, mut a: usize, mut b: usize) -> Vec<usize> {
    let mut from_a = Vec::new();
    let mut from_b = Vec::new();
    while rooted.depth[a] > rooted.depth[b] {
        from_a.push(rooted.parent_edge[a]);
        a = rooted.parent[a];
    }
    while rooted.depth[b] > rooted.depth[a] {
        from_b.push(rooted.parent_edge[b]);
        b = rooted.parent[b];
    }
    while a != b {
        from_a.push(rooted.parent_edge[a]);
        a = rooted.parent[a];
        from_b.push(rooted.parent_edge[b]);
        b = rooted.parent[b];
    }
    from_b.reverse();
    from_a.extend(from_b);
    from_a
}

struct Allocation {
    supply: Vec<f64>,
    demand: Vec<f64>,
    row_open: Vec<bool>,
    col_open: Vec<bool>,
    rows_left: usize,
    cols_left: usize,
}

impl Allocation {
    /// Ships `min(supply, demand)` and closes exactly one line, except on the
    /// final cell where both close.
    fn allocate(&mut self, tree: &mut Tree, i: usize, j: usize) {
        let x = self.supply[i].min(self.demand[j]);
        tree.push(i * tree.m + j, x);
        self.supply[i] -= x;
        self.demand[j] -= x;
        let row_done = self.supply[i] <= 0.0;
        let col_done = self.demand[j] <= 0.0;
        let close_row = if self.rows_left == 1 && self.cols_left == 1 {
            self.col_open[j] = false;
            self.cols_left = 0;
            true
        } else if row_done && self.rows_left > 1 {
            true
        } else if col_done && self.cols_left > 1 {
            false
        } else {
            self.rows_left > 1
        };
        if close_row {
            self.row_open[i] = false;
            self.rows_left -= 1;
        } else {
            self.col_open[j] = false;
            self.cols_left -= 1;
        }
    }
}

fn initial_basis(a: &[f64], b: &[f64], cost: &[f64]) -> Tree {
    let (n, m) = (a.len(), b.len());
    let mut tree = Tree {
        n,
        m,
        cells: Vec::with_capacity(n + m - 1),
        flow: Vec::with_capacity(n + m - 1),
        adj: vec![Vec::new(); n + m],
        is_basic: vec![false; n * m],
    };
    let mut st = Allocation {
        supply: a.to_vec(),
        demand: b.to_vec(),
        row_open: vec![true; n],
        col_open: vec![true; m],
        rows_left: n,
        cols_left: m,
    };
    if n * m <= LEAST_COST_LIMIT {
        let mut order: Vec<u32> = (0..(n * m) as u32).collect();
        order.sort_unstable_by(|&p, &q| cost[p as usize].total_cmp(&cost[q as usize]).then(p.cmp(&q)));
        for k in order {
            let k = k as usize;
            let (i, j) = (k / m, k % m);
            if st.row_open[i] && st.col_open[j] {
                st.allocate(&mut tree, i, j);
                if tree.cells.len() == n + m - 1 {
                    break;
                }
            }
        }
    } else {
        let (mut i, mut j) = (0, 0);
        while tree.cells.len() < n + m - 1 {
            st.allocate(&mut tree, i, j);
            if !st.row_open[i] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(tree.cells.len(), n + m - 1);
    tree
}

/// Recomputes basic flows from the marginals by peeling leaves, which keeps
/// marginal errors at rounding level regardless of pivot history.
fn peel_flows(tree: &mut Tree, a: &[f64], b: &[f64]) {
    let (n, m) = (tree.n, tree.m);
    let mut rest: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut degree: Vec<usize> = tree.adj.iter().map(|v| v.len()).collect();
    let mut used = vec![false; tree.cells.len()];
    let mut leaves: Vec<usize> = (0..n + m).filter(|&v| degree[v] == 1).collect();
    while let Some(v) = leaves.pop() {
        if degree[v] != 1 {
            continue;
        }
        let Some(&e) = tree.adj[v].iter().find(|&&e| !used[e]) else {
            continue;
        };
        used[e] = true;
        let (r, c) = tree.ends(e);
        let w = if r == v { c } else { r };
        let x = rest[v].max(0.0);
        tree.flow[e] = x;
        rest[v] -= x;
        rest[w] -= x;
        degree[v] -= 1;
        degree[w] -= 1;
        if degree[w] == 1 {
            leaves.push(w);
        }
    }
}

/// Solves `min Σ c_ij x_ij` over the transportation polytope of `(a, b)`.
/// `a`, `b` must be strictly positive with equal totals; `cost` is row-major.
pub fn solve_transport(a: &[f64], b: &[f64], cost: &[f64], opts: SimplexOptions) -> Result<SimplexSolution> {
    let (n, m) = (a.len(), b.len());
    debug_assert_eq!(cost.len(), n * m);
    let mut tree = initial_basis(a, b, cost);
    let scale = cost.iter().fold(0.0f64, |s, c| s.max(c.abs())).max(1.0);
    let eps = 1e-12 * scale;
    let limit = opts.max_pivots.unwrap_or(1000 + 20 * n * m);
    let total = n * m;
    let block = ((total as f64).sqrt() as usize).max(64).min(total);

    let mut pivots = 0usize;
    let mut pos = 0usize;
    let mut degenerate_run = 0usize;
    loop {
        let rooted = root_tree(&tree, cost);
        let reduced = |k: usize| cost[k] - rooted.pot[k / m] - rooted.pot[n + k % m];

        let entering = if degenerate_run >= DEGENERATE_RUN {
            (0..total).find(|&k| !tree.is_basic[k] && reduced(k) < -eps)
        } else {
            let mut found = None;
            let mut scanned = 0;
            while scanned < total && found.is_none() {
                let end = (pos + block).min(total);
                let mut best: Option<(f64, usize)> = None;
                for k in pos..end {
                    if tree.is_basic[k] {
                        continue;
                    }
                    let r = reduced(k);
                    if r < -eps && best.is_none_or(|(br, bk)| r < br || (r == br && k < bk)) {
                        best = Some((r, k));
                    }
                }
                scanned += end - pos;
                pos = if end == total { 0 } else { end };
                found = best.map(|(_, k)| k);
            }
            found
        };
        let Some(enter) = entering else {
            break;
        };
        if pivots >= limit {
            return Err(Error::PivotLimit(limit));
        }
        pivots += 1;

        let (ei, ej) = (enter / m, enter % m);
        let path = tree_path(&rooted, ei, n + ej);
        // Edges at even offsets along the row-to-column path lose flow.
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for (pos_in_path, &e) in path.iter().enumerate() {
            if pos_in_path % 2 == 1 {
                continue;
            }
            let f = tree.flow[e];
            if f < theta || (f == theta && leave != usize::MAX && tree.cells[e] < tree.cells[leave]) {
                theta = f;
                leave = e;
            }
        }
        let theta = theta.max(0.0);
        for (pos_in_path, &e) in path.iter().enumerate() {
            if pos_in_path % 2 == 0 {
                tree.flow[e] = (tree.flow[e] - theta).max(0.0);
            } else {
                tree.flow[e] += theta;
            }
        }
        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        tree.replace(leave, enter, theta);
    }

    peel_flows(&mut tree, a, b);
    let mut flow = vec![0.0; total];
    for (e, &c) in tree.cells.iter().enumerate() {
        flow[c] += tree.flow[e];
    }
    let value = flow.iter().zip(cost).filter(|(f, _)| **f > 0.0).map(|(f, c)| f * c).sum();
    Ok(SimplexSolution { flow, value, pivots })
}
