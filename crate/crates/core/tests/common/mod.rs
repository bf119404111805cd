//! Independent oracles shared by integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;

/// Random weights with small integer numerators over a common denominator.
pub fn rational_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let nums: Vec<u32> = (0..n).map(|_| rng.random_range(1..=6)).collect();
    let den: u32 = nums.iter().sum();
    nums.iter().map(|&k| k as f64 / den as f64).collect()
}

/// Minimum of `Σ c_ij x_ij` over every basic feasible solution of the
/// transportation polytope, found by enumerating all spanning trees of the
/// complete bipartite graph (`n + m − 1` cells, acyclic) and solving each
/// tree's flows by leaf elimination.
pub fn transport_by_vertex_enumeration(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut pick = Vec::with_capacity(k);
    choose(&cells, k, 0, &mut pick, &mut |sel: &[(usize, usize)]| {
        if let Some(flows) = tree_flows(n, m, sel, a, b) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let v: f64 = sel.iter().zip(&flows).map(|(&(i, j), f)| f * cost[i][j]).sum();
                best = best.min(v);
            }
        }
    });
    best
}

fn choose<F: FnMut(&[(usize, usize)])>(
    items: &[(usize, usize)],
    k: usize,
    start: usize,
    pick: &mut Vec<(usize, usize)>,
    f: &mut F,
) {
    if pick.len() == k {
        f(pick);
        return;
    }
    let need = k - pick.len();
    for s in start..=items.len().saturating_sub(need) {
        pick.push(items[s]);
        choose(items, k, s + 1, pick, f);
        pick.pop();
    }
}

fn tree_flows(n: usize, m: usize, sel: &[(usize, usize)], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    // Acyclicity via union-find; n + m − 1 acyclic edges span the graph.
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for &(i, j) in sel {
        let (r1, r2) = (find(&mut parent, i), find(&mut parent, n + j));
        if r1 == r2 {
            return None;
        }
        parent[r1] = r2;
    }
    let mut rest: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut flows = vec![f64::NAN; sel.len()];
    let mut done = vec![false; sel.len()];
    for _ in 0..sel.len() {
        // Find a node touching exactly one unassigned edge.
        let mut progressed = false;
        for v in 0..n + m {
            let inc: Vec<usize> = (0..sel.len())
                .filter(|&e| !done[e] && (sel[e].0 == v || n + sel[e].1 == v))
                .collect();
            if inc.len() == 1 {
                let e = inc[0];
                let (i, j) = sel[e];
                let w = if i == v { n + j } else { i };
                flows[e] = rest[v];
                rest[w] -= rest[v];
                rest[v] = 0.0;
                done[e] = true;
                progressed = true;
                break;
            }
        }
        if !progressed {
            return None;
        }
    }
    Some(flows)
}

/// Weighted least squares `Σ a_i (g_i − t_i)²` under
/// `lo_i ≤ g_{i+1} − g_i ≤ hi_i`, solved by enumerating for every increment
/// whether it is free, at its lower bound or at its upper bound. Blocks joined
/// by fixed increments collapse to one weighted mean.
pub fn chain_projection_by_enumeration(a: &[f64], t: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, f64) {
    let n = t.len();
    let k = n - 1;
    let mut best = (vec![], f64::INFINITY);
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        let states: Vec<usize> = (0..k)
            .map(|_| {
                let s = c % 3;
                c /= 3;
                s
            })
            .collect();
        let mut g = vec![0.0; n];
        let mut start = 0;
        while start < n {
            let mut end = start;
            let mut offs = vec![0.0];
            while end < k && states[end] != 0 {
                let d = if states[end] == 1 { lo[end] } else { hi[end] };
                offs.push(offs.last().unwrap() + d);
                end += 1;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (r, off) in offs.iter().enumerate() {
                num += a[start + r] * (t[start + r] - off);
                den += a[start + r];
            }
            let base = if den > 0.0 { num / den } else { t[start] };
            for (r, off) in offs.iter().enumerate() {
                g[start + r] = base + off;
            }
            start = end + 1;
        }
        let feasible = (0..k).all(|i| {
            let d = g[i + 1] - g[i];
            d >= lo[i] - 1e-12 && d <= hi[i] + 1e-12
        });
        if feasible {
            let v: f64 = (0..n).map(|i| a[i] * (g[i] - t[i]).powi(2)).sum();
            if v < best.1 {
                best = (g, v);
            }
        }
    }
    best
}
