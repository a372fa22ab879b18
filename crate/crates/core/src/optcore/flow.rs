//! Min-cost flow by successive shortest paths with node potentials, plus the
//! transportation and b-matching wrappers built on it.

use crate::error::{Error, Result};

const CAP_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Residual network with paired forward/backward edges (`e ^ 1` is the twin).
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently carried by the forward edge `id`.
    pub fn flow(&self, id: usize) -> f64 {
        self.edges[id + 1].cap
    }

    /// Pushes up to `limit` units from `s` to `t` along successive shortest paths.
    /// With `profitable_only`, stops once the next path has nonnegative cost.
    /// Returns `(flow, cost)`.
    pub fn min_cost_flow(&mut self, s: usize, t: usize, limit: f64, profitable_only: bool) -> (f64, f64) {
        let nodes = self.adj.len();
        let mut potential = vec![0.0; nodes];
        if self.edges.iter().any(|e| e.cap > CAP_EPS && e.cost < 0.0) {
            self.bellman_ford(s, &mut potential);
        }
        let mut flow = 0.0;
        let mut cost = 0.0;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        while flow < limit - CAP_EPS {
            dist.fill(f64::INFINITY);
            prev.fill(usize::MAX);
            done.fill(false);
            dist[s] = 0.0;
            loop {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for v in 0..nodes {
                    if !done[v] && dist[v] < best {
                        best = dist[v];
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap <= CAP_EPS || done[edge.to] {
                        continue;
                    }
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let nd = dist[u] + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        prev[edge.to] = e;
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..nodes {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let path_cost = potential[t] - potential[s];
            if profitable_only && path_cost >= -1e-12 {
                break;
            }
            let mut push = limit - flow;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            let mut path_real = 0.0;
            while v != s {
                let e = prev[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                path_real += self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
            cost += push * path_real;
        }
        (flow, cost)
    }

    fn bellman_ford(&self, s: usize, potential: &mut [f64]) {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        dist[s] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > CAP_EPS && dist[u] + edge.cost < dist[edge.to] {
                        dist[edge.to] = dist[u] + edge.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for v in 0..nodes {
            potential[v] = if dist[v].is_finite() { dist[v] } else { 0.0 };
        }
    }
}

/// A transportation problem: demand rows must be met exactly, supply columns
/// may be left partly unused. `cost` is row-major, `demands.len() × supplies.len()`.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub supplies: Vec<f64>,
    pub demands: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub cost: f64,
    /// Row-major plan `f[r * supplies + c]`.
    pub plan: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl TransportPlan {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.plan[r * self.cols + c]
    }

    pub fn column_sum(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, c)).sum()
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        (0..self.cols).map(|c| self.get(r, c)).sum()
    }
}

fn is_integral(v: &[f64]) -> bool {
    v.iter().all(|x| (x - x.round()).abs() < 1e-12)
}

/// Relative slack tolerated between total demand and total supply.
pub const BALANCE_SLACK: f64 = 1e-9;

/// Minimum-cost transportation plan meeting every demand.
pub fn transport_solve(tp: &TransportProblem) -> Result<TransportPlan> {
    let rows = tp.demands.len();
    let cols = tp.supplies.len();
    if tp.cost.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "cost matrix has {} entries, expected {}x{}",
            tp.cost.len(),
            rows,
            cols
        )));
    }
    if tp.supplies.iter().chain(&tp.demands).any(|v| !(*v >= 0.0) || !v.is_finite())
        || tp.cost.iter().any(|c| !(*c >= 0.0) || !c.is_finite())
    {
        return Err(Error::InvalidInput(
            "supplies, demands and costs must be finite and nonnegative".into(),
        ));
    }
    let total_demand: f64 = tp.demands.iter().sum();
    let total_supply: f64 = tp.supplies.iter().sum();
    if total_demand > total_supply + BALANCE_SLACK * total_supply.max(1.0) {
        return Err(Error::Infeasible(format!(
            "transport demand {total_demand} exceeds supply {total_supply}"
        )));
    }
    let source = rows + cols;
    let sink = source + 1;
    let mut net = FlowNetwork::new(rows + cols + 2);
    for (r, &d) in tp.demands.iter().enumerate() {
        net.add_edge(source, r, d, 0.0);
    }
    let mut arc = vec![0usize; rows * cols];
    for r in 0..rows {
        if tp.demands[r] <= 0.0 {
            continue;
        }
        for c in 0..cols {
            arc[r * cols + c] = net.add_edge(r, rows + c, f64::INFINITY, tp.cost[r * cols + c]);
        }
    }
    for (c, &s) in tp.supplies.iter().enumerate() {
        net.add_edge(rows + c, sink, s, 0.0);
    }
    let target = total_demand.min(total_supply);
    net.min_cost_flow(source, sink, target, false);
    let mut plan = vec![0.0; rows * cols];
    for r in 0..rows {
        if tp.demands[r] <= 0.0 {
            continue;
        }
        for c in 0..cols {
            plan[r * cols + c] = net.flow(arc[r * cols + c]).max(0.0);
        }
    }
    if is_integral(&tp.demands) && is_integral(&tp.supplies) {
        for f in plan.iter_mut() {
            let rounded = f.round();
            if (*f - rounded).abs() > 1e-9 {
                return Err(Error::Numerical(format!("non-integral plan entry {f} on integral data")));
            }
            *f = rounded;
        }
    }
    let cost = plan.iter().zip(&tp.cost).map(|(f, c)| f * c).sum();
    Ok(TransportPlan {
        cost,
        plan,
        rows,
        cols,
    })
}

/// Integral assignment of unit clients to facilities with integer caps.
#[derive(Clone, Debug)]
pub struct Assignment {
    /// `facility_of[j]` is the column index serving row `j`.
    pub facility_of: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost assignment of `clients` unit demands to facilities with the given
/// caps; `cost` is row-major `clients × caps.len()`.
pub fn mcf_assign(clients: usize, caps: &[usize], cost: &[f64]) -> Result<Assignment> {
    let total: usize = caps.iter().sum();
    if total < clients {
        return Err(Error::Infeasible(format!(
            "total capacity {total} is below {clients} clients"
        )));
    }
    let tp = TransportProblem {
        supplies: caps.iter().map(|&c| c as f64).collect(),
        demands: vec![1.0; clients],
        cost: cost.to_vec(),
    };
    let plan = transport_solve(&tp)?;
    let mut facility_of = Vec::with_capacity(clients);
    for j in 0..clients {
        let i = (0..caps.len())
            .find(|&i| plan.get(j, i) > 0.5)
            .ok_or_else(|| Error::Numerical(format!("client row {j} left unassigned")))?;
        facility_of.push(i);
    }
    let cost = facility_of
        .iter()
        .enumerate()
        .map(|(j, &i)| cost[j * caps.len() + i])
        .sum();
    Ok(Assignment { facility_of, cost })
}

/// Maximum-weight partial transportation: rows with capacity `row_caps`,
/// columns with capacity `col_caps`, positive weights only are worth routing.
/// Returns the optimal value and the row-major plan.
pub fn max_weight_transport(weights: &[f64], row_caps: &[f64], col_caps: &[f64]) -> (f64, Vec<f64>) {
    let rows = row_caps.len();
    let cols = col_caps.len();
    let source = rows + cols;
    let sink = source + 1;
    let mut net = FlowNetwork::new(rows + cols + 2);
    let mut arcs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let w = weights[r * cols + c];
            if w > 1e-12 {
                arcs.push((r, c, net.add_edge(r, rows + c, f64::INFINITY, -w)));
            }
        }
    }
    if arcs.is_empty() {
        return (0.0, vec![0.0; rows * cols]);
    }
    for (r, &cap) in row_caps.iter().enumerate() {
        net.add_edge(source, r, cap, 0.0);
    }
    for (c, &cap) in col_caps.iter().enumerate() {
        net.add_edge(rows + c, sink, cap, 0.0);
    }
    let limit: f64 = row_caps.iter().sum::<f64>().min(col_caps.iter().sum());
    let (_, cost) = net.min_cost_flow(source, sink, limit, true);
    let mut plan = vec![0.0; rows * cols];
    for (r, c, e) in arcs {
        plan[r * cols + c] = net.flow(e).max(0.0);
    }
    (-cost, plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_demand_over_two_supplies() {
        let tp = TransportProblem {
            supplies: vec![1.0, 1.0],
            demands: vec![2.0],
            cost: vec![1.0, 3.0],
        };
        let p = transport_solve(&tp).unwrap();
        assert_eq!(p.cost, 4.0);
        assert_eq!(p.plan, vec![1.0, 1.0]);
    }

    #[test]
    fn identity_transport_costs_nothing() {
        let tp = TransportProblem {
            supplies: vec![0.3, 0.7, 1.5],
            demands: vec![0.3, 0.7, 1.5],
            cost: vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        };
        assert!(transport_solve(&tp).unwrap().cost.abs() < 1e-12);
    }

    #[test]
    fn excess_demand_is_infeasible() {
        let tp = TransportProblem {
            supplies: vec![1.0],
            demands: vec![2.0],
            cost: vec![0.0],
        };
        assert!(matches!(transport_solve(&tp), Err(Error::Infeasible(_))));
    }

    #[test]
    fn forced_assignment() {
        let a = mcf_assign(2, &[2], &[1.0, 2.0]).unwrap();
        assert_eq!(a.cost, 3.0);
    }

    #[test]
    fn diagonal_matching() {
        let a = mcf_assign(2, &[1, 1], &[0.0, 5.0, 5.0, 0.0]).unwrap();
        assert_eq!(a.cost, 0.0);
        assert_eq!(a.facility_of, vec![0, 1]);
    }

    #[test]
    fn max_weight_skips_negative_weights() {
        // two rows, one column of capacity 1: the heavier row wins
        let (v, plan) = max_weight_transport(&[2.0, 3.0], &[1.0, 1.0], &[1.0]);
        assert_eq!(v, 3.0);
        assert_eq!(plan, vec![0.0, 1.0]);
        let (v, _) = max_weight_transport(&[-1.0, -2.0], &[1.0, 1.0], &[1.0]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn max_weight_uses_augmenting_reroute() {
        // rows r0,r1; cols c0 (cap 1), c1 (cap 1)
        // w(r0,c0)=3, w(r0,c1)=2, w(r1,c0)=2.5, w(r1,c1)=0
        // best: r0->c1, r1->c0 = 4.5
        let (v, _) = max_weight_transport(&[3.0, 2.0, 2.5, 0.0], &[1.0, 1.0], &[1.0, 1.0]);
        assert!((v - 4.5).abs() < 1e-12);
    }
}
