//! Exact optimal transport on small discrete instances via the
//! transportation simplex (northwest-corner start, MODI pivoting).

use crate::error::{Error, Result};

/// Optimal transport plan: total cost and the nonzero flows (i, j, mass).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
}

/// Solve min sum c[i][j] x[ij] subject to row sums = supplies, column sums =
/// demands, x >= 0. Supplies and demands must balance within `tol`.
pub fn transport(
    supplies: &[f64],
    demands: &[f64],
    cost: &[Vec<f64>],
    tol: f64,
) -> Result<TransportPlan> {
    let m = supplies.len();
    let n = demands.len();
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("empty transport instance".into()));
    }
    if cost.len() != m || cost.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidInput("cost matrix shape mismatch".into()));
    }
    let total_s: f64 = supplies.iter().sum();
    let total_d: f64 = demands.iter().sum();
    if (total_s - total_d).abs() > tol * total_s.max(total_d).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "unbalanced transport instance ({total_s} vs {total_d})"
        )));
    }
    if supplies.iter().chain(demands).any(|&v| v < -tol) {
        return Err(Error::InvalidInput("negative mass".into()));
    }

    // Perturb the marginals to avoid degenerate pivots; the optimal basis of
    // the perturbed instance stays optimal for the original one, whose exact
    // flows are recomputed from that basis at the end.
    let eps = 1e-9 * total_s.max(1.0) / (m + n) as f64;
    let mut s: Vec<f64> = supplies
        .iter()
        .enumerate()
        .map(|(i, &v)| v + eps * (i + 1) as f64)
        .collect();
    let mut d: Vec<f64> = demands.to_vec();
    let bump: f64 = (1..=m).map(|i| eps * i as f64).sum();
    d[n - 1] += bump;

    // Northwest-corner initial basis (m + n - 1 arcs).
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(m + n - 1);
    {
        let (mut i, mut j) = (0, 0);
        let mut rs = s.clone();
        let mut rd = d.clone();
        while i < m && j < n {
            let f = rs[i].min(rd[j]);
            basis.push((i, j));
            flow.push(f);
            rs[i] -= f;
            rd[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if rs[i] <= rd[j] && i + 1 < m {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    if basis.len() != m + n - 1 {
        return Err(Error::DegenerateInput(
            "transportation basis is not a spanning tree".into(),
        ));
    }

    let max_pivots = 50 * (m + 1) * (n + 1);
    for _ in 0..max_pivots {
        let (u, v) = potentials(m, n, &basis, cost)?;
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            for j in 0..n {
                if basis.contains(&(i, j)) {
                    continue;
                }
                let r = cost[i][j] - u[i] - v[j];
                if r < -1e-12 && best.map_or(true, |(br, _, _)| r < br) {
                    best = Some((r, i, j));
                }
            }
        }
        let Some((_, ei, ej)) = best else {
            // Optimal basis found: recompute exact flows for the original
            // marginals on the basis tree.
            s = supplies.to_vec();
            d = demands.to_vec();
            let exact = tree_flows(m, n, &basis, &s, &d)?;
            let mut flows = Vec::new();
            let mut value = 0.0;
            for (&(i, j), &f) in basis.iter().zip(exact.iter()) {
                if f < -1e-9 * total_s.max(1.0) {
                    return Err(Error::DegenerateInput(
                        "negative flow on optimal transport basis".into(),
                    ));
                }
                let f = f.max(0.0);
                value += cost[i][j] * f;
                if f > 0.0 {
                    flows.push((i, j, f));
                }
            }
            return Ok(TransportPlan { cost: value, flows });
        };

        // Unique cycle created by the entering arc: path in the basis tree
        // from supply node ei to demand node ej.
        let path = tree_path(m, n, &basis, ei, m + ej)?;
        // Arcs along the path alternate -/+ starting with - (the entering arc
        // itself is the + arc closing the cycle).
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (step, &arc_idx) in path.iter().enumerate() {
            if step % 2 == 0 {
                if flow[arc_idx] < theta {
                    theta = flow[arc_idx];
                    leave = arc_idx;
                }
            }
        }
        if leave == usize::MAX {
            return Err(Error::DegenerateInput("transport cycle without minus arc".into()));
        }
        for (step, &arc_idx) in path.iter().enumerate() {
            if step % 2 == 0 {
                flow[arc_idx] -= theta;
            } else {
                flow[arc_idx] += theta;
            }
        }
        basis[leave] = (ei, ej);
        flow[leave] = theta;
    }
    Err(Error::NoConvergence {
        op: "transportation simplex",
        iters: max_pivots,
        residual: f64::NAN,
    })
}

/// Dual potentials on the basis tree (u[0] anchored to zero).
fn potentials(
    m: usize,
    n: usize,
    basis: &[(usize, usize)],
    cost: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    let mut changed = true;
    while changed {
        changed = false;
        for &(i, j) in basis {
            if u[i].is_nan() && !v[j].is_nan() {
                u[i] = cost[i][j] - v[j];
                changed = true;
            } else if !u[i].is_nan() && v[j].is_nan() {
                v[j] = cost[i][j] - u[i];
                changed = true;
            }
        }
    }
    if u.iter().any(|x| x.is_nan()) || v.iter().any(|x| x.is_nan()) {
        return Err(Error::DegenerateInput("disconnected transport basis".into()));
    }
    Ok((u, v))
}

/// Arc indices along the unique tree path between two nodes of the bipartite
/// basis tree (nodes 0..m are supplies, m..m+n are demands).
fn tree_path(
    m: usize,
    n: usize,
    basis: &[(usize, usize)],
    from: usize,
    to: usize,
) -> Result<Vec<usize>> {
    let nodes = m + n;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    for (idx, &(i, j)) in basis.iter().enumerate() {
        adj[i].push((m + j, idx));
        adj[m + j].push((i, idx));
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
    let mut seen = vec![false; nodes];
    let mut queue = std::collections::VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(x) = queue.pop_front() {
        if x == to {
            break;
        }
        for &(y, idx) in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                prev[y] = Some((x, idx));
                queue.push_back(y);
            }
        }
    }
    if !seen[to] {
        return Err(Error::DegenerateInput("transport basis path missing".into()));
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (p, idx) = prev[cur].unwrap();
        path.push(idx);
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Exact flows on a spanning-tree basis from the marginals: peel leaves.
fn tree_flows(
    m: usize,
    n: usize,
    basis: &[(usize, usize)],
    supplies: &[f64],
    demands: &[f64],
) -> Result<Vec<f64>> {
    let nodes = m + n;
    let mut balance: Vec<f64> = supplies
        .iter()
        .copied()
        .chain(demands.iter().map(|&d| -d))
        .collect();
    let mut degree = vec![0usize; nodes];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (idx, &(i, j)) in basis.iter().enumerate() {
        degree[i] += 1;
        degree[m + j] += 1;
        incident[i].push(idx);
        incident[m + j].push(idx);
    }
    let mut removed_arc = vec![false; basis.len()];
    let mut removed_node = vec![false; nodes];
    let mut flows = vec![0.0; basis.len()];
    let mut stack: Vec<usize> = (0..nodes).filter(|&x| degree[x] == 1).collect();
    while let Some(leaf) = stack.pop() {
        if removed_node[leaf] || degree[leaf] == 0 {
            continue;
        }
        let Some(&arc) = incident[leaf].iter().find(|&&a| !removed_arc[a]) else {
            continue;
        };
        let (i, j) = basis[arc];
        // Flow on the leaf arc equals the leaf's remaining balance, oriented
        // supply -> demand.
        let f = if leaf < m { balance[leaf] } else { -balance[leaf] };
        flows[arc] = f;
        let other = if leaf == i { m + j } else { i };
        balance[leaf] = 0.0;
        if other < m {
            balance[other] -= f;
        } else {
            balance[other] += f;
        }
        removed_arc[arc] = true;
        removed_node[leaf] = true;
        degree[leaf] = 0;
        degree[other] -= 1;
        if degree[other] == 1 {
            stack.push(other);
        }
    }
    if removed_arc.iter().any(|&r| !r) {
        return Err(Error::DegenerateInput("cyclic transport basis".into()));
    }
    Ok(flows)
}
