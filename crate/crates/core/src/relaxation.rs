//! The basic LP, derived quantities, and configuration constraints.
//!
//! A configuration system for a facility set `B` describes the distribution of
//! the exact open subset `S ⊆ B` (`|S| ≤ ℓ₁`, or the overflow configuration ⊥)
//! together with a capacity-respecting fractional assignment per subset. Both
//! the feasibility check and the strengthened master LP are solved over columns
//! `(S, w)` where `w` is an integral assignment of clients to `S` within
//! capacities; a convex combination of such columns is exactly a feasible
//! assignment of the `z` variables. Columns are priced by max-weight transport.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::optcore::{lp_solve, lp_solve_warm, max_weight_transport, LinearProgram, LpStatus, Relation};
use crate::tol;

/// Default cap on the number of enumerated configurations per block.
pub const DEFAULT_BUDGET: usize = 200_000;

const PRICE_TOL: f64 = 1e-9;
const CHECK_TOL: f64 = 1e-8;
const MAX_ROUNDS: usize = 400;
const COLS_PER_ROUND: usize = 24;
/// Lagrangian bound above which the check stops with a cut.
const LB_EXIT: f64 = 1e-6;

/// Fractional opening `y` and connection `x` values (`x` is row-major `F × C`).
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSolution {
    nc: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FractionalSolution {
    pub fn new(nf: usize, nc: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != nf * nc || y.len() != nf {
            return Err(Error::InvalidInput("fractional solution dimensions".into()));
        }
        Ok(FractionalSolution { nc, x, y })
    }

    pub fn nf(&self) -> usize {
        self.y.len()
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.nc + j]
    }

    /// `x_{i,C}`: total demand served by facility `i`.
    pub fn load(&self, i: usize) -> f64 {
        self.x[i * self.nc..(i + 1) * self.nc].iter().sum()
    }

    /// `x_{F',j}`.
    pub fn x_set_client(&self, set: &[usize], j: usize) -> f64 {
        set.iter().map(|&i| self.x(i, j)).sum()
    }

    /// `x_{F',C}`.
    pub fn x_set(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.load(i)).sum()
    }

    /// `y_{F'}`.
    pub fn y_set(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.y[i]).sum()
    }

    /// Largest violation of the basic LP constraints.
    pub fn basic_violation(&self, inst: &Instance) -> f64 {
        let mut worst = (self.y.iter().sum::<f64>() - inst.k() as f64).max(0.0);
        for j in 0..self.nc {
            let s: f64 = (0..self.nf()).map(|i| self.x(i, j)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        for i in 0..self.nf() {
            for j in 0..self.nc {
                worst = worst.max(self.x(i, j) - self.y[i]).max(-self.x(i, j));
            }
            worst = worst.max(self.load(i) - inst.capacity(i) as f64 * self.y[i]);
            worst = worst.max(self.y[i] - 1.0).max(-self.y[i]);
        }
        worst
    }
}

/// Quantities derived from a fractional solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Derived {
    /// `d_av(j) = Σ_i x_ij d(i,j)`.
    pub d_av: Vec<f64>,
    /// `D_i = Σ_j x_ij (d(i,j) + d_av(j))`.
    pub big_d: Vec<f64>,
    pub lp_value: f64,
}

impl Derived {
    pub fn compute(inst: &Instance, fs: &FractionalSolution) -> Result<Self> {
        let (nf, nc) = (inst.nf(), inst.nc());
        let d_av: Vec<f64> = (0..nc)
            .map(|j| (0..nf).map(|i| fs.x(i, j) * inst.fc(i, j)).sum())
            .collect();
        let big_d: Vec<f64> = (0..nf)
            .map(|i| (0..nc).map(|j| fs.x(i, j) * (inst.fc(i, j) + d_av[j])).sum())
            .collect();
        let lp_value: f64 = d_av.iter().sum();
        let total: f64 = big_d.iter().sum();
        if (total - 2.0 * lp_value).abs() > tol::IDENTITY * (1.0 + lp_value) {
            return Err(Error::invariant(
                "relaxation",
                format!("D_F = {total} but 2 LP = {}", 2.0 * lp_value),
            ));
        }
        Ok(Derived {
            d_av,
            big_d,
            lp_value,
        })
    }

    /// `D_{F'}`.
    pub fn d_set(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.big_d[i]).sum()
    }
}

fn xvar(nc: usize, i: usize, j: usize) -> usize {
    i * nc + j
}

/// The basic LP: variables `x_ij` (index `i·nc + j`) then `y_i` (index
/// `nf·nc + i`); rows are the cardinality row, one full-connection row per
/// client, `x_ij ≤ y_i`, and one capacity row per facility.
pub fn build_basic_lp(inst: &Instance) -> LinearProgram {
    let (nf, nc) = (inst.nf(), inst.nc());
    let mut lp = LinearProgram::new();
    for i in 0..nf {
        for j in 0..nc {
            lp.add_var(inst.fc(i, j), 0.0, 1.0);
        }
    }
    for _ in 0..nf {
        lp.add_var(0.0, 0.0, 1.0);
    }
    let y = |i: usize| nf * nc + i;
    lp.add_row((0..nf).map(|i| (y(i), 1.0)).collect(), Relation::Le, inst.k() as f64);
    for j in 0..nc {
        lp.add_row((0..nf).map(|i| (xvar(nc, i, j), 1.0)).collect(), Relation::Eq, 1.0);
    }
    for i in 0..nf {
        for j in 0..nc {
            lp.add_row(vec![(xvar(nc, i, j), 1.0), (y(i), -1.0)], Relation::Le, 0.0);
        }
    }
    for i in 0..nf {
        let mut row: Vec<(usize, f64)> = (0..nc).map(|j| (xvar(nc, i, j), 1.0)).collect();
        row.push((y(i), -(inst.capacity(i) as f64)));
        lp.add_row(row, Relation::Le, 0.0);
    }
    lp
}

/// A configuration constraint system: the facility set `B` and `ℓ₁`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigSystem {
    pub facilities: Vec<usize>,
    pub l1: usize,
}

impl ConfigSystem {
    pub fn new(mut facilities: Vec<usize>, l1: usize) -> Self {
        facilities.sort_unstable();
        facilities.dedup();
        ConfigSystem { facilities, l1 }
    }
}

/// One configuration: an explicit subset of `B` or the overflow configuration ⊥.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Config {
    /// Sorted global facility indices.
    Set(Vec<usize>),
    Bottom,
}

/// `z_S`, `z_{S,i}` (aligned with `B`) and `z_{S,i,j}` (row-major `B × C`).
#[derive(Clone, Debug)]
pub struct ConfigEntry {
    pub config: Config,
    pub z: f64,
    pub z_open: Vec<f64>,
    pub z_conn: Vec<f64>,
}

/// A feasible assignment of the configuration variables for `B`.
#[derive(Clone, Debug)]
pub struct ConfigBlock {
    pub facilities: Vec<usize>,
    pub l1: usize,
    pub entries: Vec<ConfigEntry>,
}

impl ConfigBlock {
    pub fn system(&self) -> ConfigSystem {
        ConfigSystem::new(self.facilities.clone(), self.l1)
    }

    /// Re-checks every constraint family against `(x, y)`; returns the largest
    /// violation found.
    pub fn max_violation(&self, inst: &Instance, fs: &FractionalSolution) -> f64 {
        let nc = inst.nc();
        let b = &self.facilities;
        let mut worst = (self.entries.iter().map(|e| e.z).sum::<f64>() - 1.0).abs();
        for (p, &i) in b.iter().enumerate() {
            let open: f64 = self.entries.iter().map(|e| e.z_open[p]).sum();
            worst = worst.max((open - fs.y[i]).abs());
            for j in 0..nc {
                let conn: f64 = self.entries.iter().map(|e| e.z_conn[p * nc + j]).sum();
                worst = worst.max((conn - fs.x(i, j)).abs());
            }
        }
        for e in &self.entries {
            worst = worst.max(-e.z);
            for (p, &i) in b.iter().enumerate() {
                let zi = e.z_open[p];
                worst = worst.max(zi - e.z).max(-zi);
                if let Config::Set(s) = &e.config {
                    let target = if s.binary_search(&i).is_ok() { e.z } else { 0.0 };
                    worst = worst.max((zi - target).abs());
                }
                let mut load = 0.0;
                for j in 0..nc {
                    let zij = e.z_conn[p * nc + j];
                    worst = worst.max(zij - zi).max(-zij);
                    load += zij;
                }
                worst = worst.max(load - inst.capacity(i) as f64 * zi);
            }
            for j in 0..nc {
                let s: f64 = (0..b.len()).map(|p| e.z_conn[p * nc + j]).sum();
                worst = worst.max(s - e.z);
            }
            if e.config == Config::Bottom {
                let opened: f64 = e.z_open.iter().sum();
                worst = worst.max(self.l1 as f64 * e.z - opened);
            }
        }
        worst
    }
}

/// A separating inequality `constant + Σ y-terms + Σ x-terms ≤ 0` that holds for
/// every point satisfying the configuration system of `B`.
#[derive(Clone, Debug)]
pub struct ConfigCut {
    pub constant: f64,
    pub y: Vec<(usize, f64)>,
    pub x: Vec<(usize, usize, f64)>,
}

impl ConfigCut {
    pub fn evaluate(&self, fs: &FractionalSolution) -> f64 {
        self.constant
            + self.y.iter().map(|&(i, c)| c * fs.y[i]).sum::<f64>()
            + self.x.iter().map(|&(i, j, c)| c * fs.x(i, j)).sum::<f64>()
    }
}

/// Certificate that no configuration assignment exists for `B` at `(x, y)`.
#[derive(Clone, Debug)]
pub struct Violation {
    pub facilities: Vec<usize>,
    pub cut: ConfigCut,
    /// Lower bound on the L1 distance from `(x, y)` to the projection of the system.
    pub infeasibility: f64,
}

#[derive(Clone, Debug)]
pub enum ConfigCheck {
    Feasible(ConfigBlock),
    Violated(Violation),
}

fn binom_sum(n: usize, max_k: usize, cap: u128) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for t in 0..=max_k.min(n) {
        if t > 0 {
            c = c.saturating_mul((n - t + 1) as u128) / t as u128;
        }
        total = total.saturating_add(c);
        if total > cap {
            return total;
        }
    }
    total
}

/// Subsets of `0..size` with at most `l1` elements (by size, then
/// lexicographic), and whether ⊥ is present (`size > l1`).
pub fn enumerate_configs(size: usize, l1: usize, budget: usize) -> Result<(Vec<Vec<usize>>, bool)> {
    let count = binom_sum(size, l1, budget as u128 + 1);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded {
            size,
            l1,
            count,
            budget,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for t in 0..=l1.min(size) {
        let mut comb: Vec<usize> = (0..t).collect();
        loop {
            out.push(comb.clone());
            let mut p = t;
            while p > 0 && comb[p - 1] == size - t + p - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            comb[p - 1] += 1;
            for q in p..t {
                comb[q] = comb[q - 1] + 1;
            }
        }
    }
    Ok((out, size > l1))
}

/// A column: opening vector `mu` over `B` positions and assignment `w` over
/// `B × clients` (row-major by facility position).
#[derive(Clone, Debug)]
struct Pattern {
    config: Option<usize>,
    mu: Vec<f64>,
    w: Vec<f64>,
}

impl Pattern {
    /// `π·a` over the rows of the check LP.
    fn value(&self, pi: &[f64]) -> f64 {
        let nb = self.mu.len();
        pi[0] + self.mu.iter().zip(&pi[1..=nb]).map(|(a, b)| a * b).sum::<f64>() + self.w.iter().zip(&pi[1 + nb..]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn key(&self) -> (Option<usize>, Vec<i64>) {
        let mut k: Vec<i64> = self.mu.iter().map(|v| (v * 1e9).round() as i64).collect();
        k.extend(self.w.iter().map(|v| (v * 1e9).round() as i64));
        (self.config, k)
    }
}

/// Configuration enumeration and pricing for one block.
struct Pricer<'a> {
    inst: &'a Instance,
    facilities: &'a [usize],
    clients: Vec<usize>,
    configs: Vec<Vec<usize>>,
    bottom: bool,
    l1: usize,
}

impl<'a> Pricer<'a> {
    fn new(inst: &'a Instance, facilities: &'a [usize], clients: Vec<usize>, l1: usize, budget: usize) -> Result<Self> {
        let (configs, bottom) = enumerate_configs(facilities.len(), l1, budget)?;
        Ok(Pricer {
            inst,
            facilities,
            clients,
            configs,
            bottom,
            l1,
        })
    }

    /// Columns maximizing `constant + Σ fac_w·mu + Σ edge_w·w`, best first, only
    /// those with value above the pricing tolerance.
    fn price(&self, constant: f64, fac_w: &[f64], edge_w: &[f64], limit: usize) -> Result<Vec<(f64, Pattern)>> {
        let nb = self.facilities.len();
        let ncl = self.clients.len();
        let caps: Vec<f64> = self.facilities.iter().map(|&i| self.inst.capacity(i) as f64).collect();
        // Per facility: best total weight it could collect alone.
        let solo: Vec<f64> = (0..nb)
            .map(|p| {
                let mut ws: Vec<f64> = edge_w[p * ncl..(p + 1) * ncl].iter().copied().filter(|w| *w > 0.0).collect();
                ws.sort_by(|a, b| b.partial_cmp(a).unwrap());
                ws.iter().take(caps[p] as usize).sum()
            })
            .collect();
        let mut found: Vec<(f64, Pattern)> = Vec::new();
        let mut best_col = vec![0.0f64; ncl];
        for (c, set) in self.configs.iter().enumerate() {
            let base = constant + set.iter().map(|&p| fac_w[p]).sum::<f64>();
            let solo_sum: f64 = set.iter().map(|&p| solo[p]).sum();
            if base + solo_sum <= PRICE_TOL {
                continue;
            }
            best_col.fill(0.0);
            for &p in set {
                for (jj, b) in best_col.iter_mut().enumerate() {
                    *b = (*b).max(edge_w[p * ncl + jj]);
                }
            }
            let col_sum: f64 = best_col.iter().sum();
            if base + col_sum.min(solo_sum) <= PRICE_TOL {
                continue;
            }
            let mut weights = vec![0.0; ncl * set.len()];
            for jj in 0..ncl {
                for (q, &p) in set.iter().enumerate() {
                    weights[jj * set.len() + q] = edge_w[p * ncl + jj];
                }
            }
            let sub_caps: Vec<f64> = set.iter().map(|&p| caps[p]).collect();
            let (gain, plan) = max_weight_transport(&weights, &vec![1.0; ncl], &sub_caps);
            let value = base + gain;
            if value > PRICE_TOL {
                let mut mu = vec![0.0; nb];
                let mut w = vec![0.0; nb * ncl];
                for (q, &p) in set.iter().enumerate() {
                    mu[p] = 1.0;
                    for jj in 0..ncl {
                        w[p * ncl + jj] = plan[jj * set.len() + q].round();
                    }
                }
                found.push((value, Pattern { config: Some(c), mu, w }));
            }
        }
        if self.bottom {
            if let Some((value, pat)) = self.price_bottom(constant, fac_w, edge_w)? {
                found.push((value, pat));
            }
        }
        found.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        found.truncate(limit);
        Ok(found)
    }

    fn price_duals(&self, pi: &[f64], limit: usize) -> Result<Vec<(f64, Pattern)>> {
        let nb = self.facilities.len();
        self.price(pi[0], &pi[1..=nb], &pi[1 + nb..], limit)
    }

    /// Starting columns: the empty set, each facility alone, and the support
    /// of `y`, each with the assignment of largest `x` mass.
    fn seed_patterns(&self, fs: &FractionalSolution) -> Vec<Pattern> {
        let nb = self.facilities.len();
        let ncl = self.clients.len();
        let support: Vec<usize> = (0..nb).filter(|&p| fs.y[self.facilities[p]] > tol::MASS).collect();
        let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
        sets.extend(support.iter().map(|&p| vec![p]));
        if support.len() > 1 && support.len() <= self.l1 {
            sets.push(support.clone());
        }
        let mut out = Vec::new();
        for set in sets {
            let Some(c) = self.configs.iter().position(|s| *s == set) else { continue };
            let mut weights = vec![0.0; ncl * set.len()];
            for (jj, &j) in self.clients.iter().enumerate() {
                for (q, &p) in set.iter().enumerate() {
                    weights[jj * set.len() + q] = fs.x(self.facilities[p], j);
                }
            }
            let caps: Vec<f64> = set.iter().map(|&p| self.inst.capacity(self.facilities[p]) as f64).collect();
            let (_, plan) = max_weight_transport(&weights, &vec![1.0; ncl], &caps);
            let mut mu = vec![0.0; nb];
            let mut w = vec![0.0; nb * ncl];
            for (q, &p) in set.iter().enumerate() {
                mu[p] = 1.0;
                for jj in 0..ncl {
                    w[p * ncl + jj] = plan[jj * set.len() + q].round();
                }
            }
            out.push(Pattern { config: Some(c), mu, w });
        }
        out
    }

    fn price_bottom(&self, constant: f64, fac_w: &[f64], edge_w: &[f64]) -> Result<Option<(f64, Pattern)>> {
        let nb = self.facilities.len();
        let ncl = self.clients.len();
        let mut lp = LinearProgram::new();
        let mu: Vec<usize> = (0..nb).map(|p| lp.add_var(-fac_w[p], 0.0, 1.0)).collect();
        let w: Vec<usize> = (0..nb * ncl).map(|e| lp.add_var(-edge_w[e], 0.0, 1.0)).collect();
        lp.add_row(mu.iter().map(|&v| (v, 1.0)).collect(), Relation::Ge, self.l1 as f64);
        for p in 0..nb {
            for jj in 0..ncl {
                lp.add_row(vec![(w[p * ncl + jj], 1.0), (mu[p], -1.0)], Relation::Le, 0.0);
            }
            let mut row: Vec<(usize, f64)> = (0..ncl).map(|jj| (w[p * ncl + jj], 1.0)).collect();
            row.push((mu[p], -(self.inst.capacity(self.facilities[p]) as f64)));
            lp.add_row(row, Relation::Le, 0.0);
        }
        for jj in 0..ncl {
            lp.add_row((0..nb).map(|p| (w[p * ncl + jj], 1.0)).collect(), Relation::Le, 1.0);
        }
        let res = lp_solve(&lp)?;
        if res.status != LpStatus::Optimal {
            return Ok(None);
        }
        let value = constant - res.objective;
        if value <= PRICE_TOL {
            return Ok(None);
        }
        Ok(Some((
            value,
            Pattern {
                config: None,
                mu: mu.iter().map(|&v| res.x[v]).collect(),
                w: w.iter().map(|&v| res.x[v]).collect(),
            },
        )))
    }

    fn config_of(&self, pat: &Pattern) -> Config {
        match pat.config {
            Some(c) => Config::Set(self.configs[c].iter().map(|&p| self.facilities[p]).collect()),
            None => Config::Bottom,
        }
    }
}

fn clients_touching(fs: &FractionalSolution, facilities: &[usize]) -> Vec<usize> {
    (0..fs.nc())
        .filter(|&j| fs.x_set_client(facilities, j) > tol::MASS)
        .collect()
}

/// Scales duals `π` into a feasible point of the dual of the check LP, given
/// `best = max_p π·a_p`, and returns it with its objective, a lower bound on
/// the L1 infeasibility.
fn lagrangian_cut(pi: &[f64], best: f64, target: &[f64]) -> (Vec<f64>, f64) {
    let mut d = pi.to_vec();
    d[0] -= best.max(0.0);
    let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    d.iter_mut().for_each(|v| *v /= scale);
    let bound = d.iter().zip(target).map(|(a, b)| a * b).sum();
    (d, bound)
}

fn violation(b: &[usize], clients: &[usize], pi: &[f64], infeasibility: f64) -> Violation {
    let nb = b.len();
    let ncl = clients.len();
    let mut cut = ConfigCut {
        constant: pi[0],
        y: Vec::new(),
        x: Vec::new(),
    };
    for (p, &i) in b.iter().enumerate() {
        cut.y.push((i, pi[1 + p]));
        for (jj, &j) in clients.iter().enumerate() {
            let c = pi[1 + nb + p * ncl + jj];
            if c != 0.0 {
                cut.x.push((i, j, c));
            }
        }
    }
    Violation {
        facilities: b.to_vec(),
        cut,
        infeasibility,
    }
}

/// Decides whether the configuration system of `B` admits values consistent with
/// `(x, y)`. Returns the values, or a separating inequality when none exist.
pub fn config_check(inst: &Instance, fs: &FractionalSolution, facilities: &[usize], l1: usize, budget: usize) -> Result<ConfigCheck> {
    let mut b = facilities.to_vec();
    b.sort_unstable();
    b.dedup();
    let nb = b.len();
    let clients = clients_touching(fs, &b);
    let ncl = clients.len();
    let pricer = Pricer::new(inst, &b, clients.clone(), l1, budget)?;

    // Rows: add-to-one, add-to-y per facility, add-to-x per (facility, client).
    let nrows = 1 + nb + nb * ncl;
    let mut target = vec![1.0];
    target.extend(b.iter().map(|&i| fs.y[i]));
    for &i in &b {
        target.extend(clients.iter().map(|&j| fs.x(i, j)));
    }

    let mut columns: Vec<Pattern> = Vec::new();
    let mut seen = HashSet::new();
    for pat in pricer.seed_patterns(fs) {
        if seen.insert(pat.key()) {
            columns.push(pat);
        }
    }
    let mut center: Option<(Vec<f64>, f64)> = None;
    // Slack pairs come first so that earlier columns keep their indices.
    let slacks = 2 * nrows;
    let mut warm: Option<(usize, Vec<usize>)> = None;
    for _round in 0..MAX_ROUNDS {
        let mut lp = LinearProgram::new();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for row in rows.iter_mut() {
            let plus = lp.add_var(1.0, 0.0, f64::INFINITY);
            let minus = lp.add_var(1.0, 0.0, f64::INFINITY);
            row.push((plus, 1.0));
            row.push((minus, -1.0));
        }
        for pat in &columns {
            let v = lp.add_var(0.0, 0.0, f64::INFINITY);
            rows[0].push((v, 1.0));
            for p in 0..nb {
                if pat.mu[p] != 0.0 {
                    rows[1 + p].push((v, pat.mu[p]));
                }
                for jj in 0..ncl {
                    let a = pat.w[p * ncl + jj];
                    if a != 0.0 {
                        rows[1 + nb + p * ncl + jj].push((v, a));
                    }
                }
            }
        }
        for (r, row) in rows.into_iter().enumerate() {
            lp.add_row(row, Relation::Eq, target[r]);
        }
        let n = lp.num_vars();
        let hint = warm.as_ref().and_then(|(n_old, basis)| {
            basis
                .iter()
                .map(|&c| if c < *n_old { Some(c) } else if c < n_old + nrows { Some(c - n_old + n) } else { None })
                .collect::<Option<Vec<usize>>>()
        });
        let res = match &hint {
            Some(h) => lp_solve_warm(&lp, h)?,
            None => lp_solve(&lp)?,
        };
        warm = Some((n, res.basis.clone()));
        if res.status != LpStatus::Optimal {
            return Err(Error::Numerical("configuration check LP not optimal".into()));
        }
        log::trace!("config check round {_round}: {} columns, infeasibility {:.3e}", columns.len(), res.objective);
        if res.objective <= CHECK_TOL {
            let lambda = &res.x[slacks..slacks + columns.len()];
            return Ok(ConfigCheck::Feasible(assemble_block(inst, &pricer, &columns, lambda, l1)));
        }
        let pi = res.duals.clone();
        let mut priced = pricer.price_duals(&pi, COLS_PER_ROUND)?;
        let best = priced.first().map_or(0.0, |c| c.0);
        let (_, bound) = lagrangian_cut(&pi, best, &target);
        if center.as_ref().is_none_or(|c| bound > c.1) {
            center = Some((pi.clone(), bound));
        }
        let (pi_hat, bound_hat) = center.clone().expect("center set above");
        if bound_hat > LB_EXIT {
            let (pi_cut, _) = lagrangian_cut(&pi_hat, pricer.price_duals(&pi_hat, 1)?.first().map_or(0.0, |c| c.0), &target);
            return Ok(ConfigCheck::Violated(violation(&b, &clients, &pi_cut, bound_hat)));
        }
        let smooth: Vec<f64> = pi.iter().zip(&pi_hat).map(|(a, h)| 0.5 * (a + h)).collect();
        let extra = pricer.price_duals(&smooth, COLS_PER_ROUND)?;
        if let Some(&(v, _)) = extra.first() {
            let (_, b_s) = lagrangian_cut(&smooth, v, &target);
            if b_s > bound_hat {
                center = Some((smooth.clone(), b_s));
            }
        }
        priced.extend(extra.into_iter().filter(|(_, p)| p.value(&pi) > PRICE_TOL));
        let fresh: Vec<Pattern> = priced
            .into_iter()
            .map(|(_, p)| p)
            .filter(|p| seen.insert(p.key()))
            .collect();
        if fresh.is_empty() {
            return Ok(ConfigCheck::Violated(violation(&b, &clients, &pi, res.objective)));
        }
        columns.extend(fresh);
    }
    Err(Error::Numerical("configuration check did not converge".into()))
}

fn assemble_block(inst: &Instance, pricer: &Pricer, columns: &[Pattern], lambda: &[f64], l1: usize) -> ConfigBlock {
    let nb = pricer.facilities.len();
    let nc = inst.nc();
    let ncl = pricer.clients.len();
    let mut by_config: BTreeMap<Config, ConfigEntry> = BTreeMap::new();
    for (pat, &lam) in columns.iter().zip(lambda) {
        if lam <= 0.0 {
            continue;
        }
        let config = pricer.config_of(pat);
        let entry = by_config.entry(config.clone()).or_insert_with(|| ConfigEntry {
            config,
            z: 0.0,
            z_open: vec![0.0; nb],
            z_conn: vec![0.0; nb * nc],
        });
        entry.z += lam;
        for p in 0..nb {
            entry.z_open[p] += lam * pat.mu[p];
            for (jj, &j) in pricer.clients.iter().enumerate() {
                entry.z_conn[p * nc + j] += lam * pat.w[p * ncl + jj];
            }
        }
    }
    let mut entries: Vec<ConfigEntry> = by_config.into_values().collect();
    if entries.is_empty() {
        entries.push(ConfigEntry {
            config: Config::Set(Vec::new()),
            z: 1.0,
            z_open: vec![0.0; nb],
            z_conn: vec![0.0; nb * nc],
        });
    }
    ConfigBlock {
        facilities: pricer.facilities.to_vec(),
        l1,
        entries,
    }
}

/// Solves the basic LP, strengthened by the configuration systems given.
///
/// Facilities covered by a system have their `x`, `y` values expressed through
/// that system's configuration columns; the `x ≤ y` and capacity rows of those
/// facilities are implied by the columns and dropped. When a facility belongs to
/// several systems, the later systems are tied to the first by equality rows.
pub fn solve_relaxation(inst: &Instance, systems: &[ConfigSystem], budget: usize) -> Result<(FractionalSolution, Derived)> {
    let (nf, nc) = (inst.nf(), inst.nc());
    if systems.is_empty() {
        let lp = build_basic_lp(inst);
        let res = lp_solve(&lp)?;
        return match res.status {
            LpStatus::Optimal => {
                let x = res.x[..nf * nc].iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let y = res.x[nf * nc..].iter().map(|v| v.clamp(0.0, 1.0)).collect();
                let fs = FractionalSolution::new(nf, nc, x, y)?;
                let derived = Derived::compute(inst, &fs)?;
                Ok((fs, derived))
            }
            _ => Err(Error::Infeasible("basic LP has no feasible point".into())),
        };
    }
    Master::new(inst, systems, budget)?.solve()
}

struct Master<'a> {
    inst: &'a Instance,
    systems: &'a [ConfigSystem],
    pricers: Vec<Pricer<'a>>,
    all_clients: Vec<usize>,
    owner: Vec<Option<usize>>,
    columns: Vec<Vec<Pattern>>,
}

/// Row layout of one master LP build.
struct MasterRows {
    card: usize,
    client: usize,
    explicit_start: usize,
    one: Vec<usize>,
    /// `(system, facility position, row for y, first row for x)`.
    couplings: Vec<(usize, usize, usize, usize)>,
    total: usize,
}

impl<'a> Master<'a> {
    fn new(inst: &'a Instance, systems: &'a [ConfigSystem], budget: usize) -> Result<Self> {
        let nf = inst.nf();
        let all_clients: Vec<usize> = (0..inst.nc()).collect();
        let mut owner = vec![None; nf];
        for (s, sys) in systems.iter().enumerate() {
            for &i in &sys.facilities {
                if i >= nf {
                    return Err(Error::InvalidInput(format!("block references facility {i}")));
                }
                if owner[i].is_none() {
                    owner[i] = Some(s);
                }
            }
        }
        let pricers = systems
            .iter()
            .map(|sys| Pricer::new(inst, &sys.facilities, all_clients.clone(), sys.l1, budget))
            .collect::<Result<Vec<_>>>()?;
        Ok(Master {
            inst,
            systems,
            pricers,
            all_clients,
            owner,
            columns: vec![Vec::new(); systems.len()],
        })
    }

    fn layout(&self) -> MasterRows {
        let nf = self.inst.nf();
        let nc = self.inst.nc();
        let card = 0;
        let client = 1;
        let explicit_start = 1 + nc;
        let explicit = (0..nf).filter(|&i| self.owner[i].is_none()).count();
        let mut next = explicit_start + explicit * (nc + 1);
        let mut one = Vec::new();
        for _ in self.systems {
            one.push(next);
            next += 1;
        }
        let mut couplings = Vec::new();
        for (s, sys) in self.systems.iter().enumerate() {
            for (p, &i) in sys.facilities.iter().enumerate() {
                if self.owner[i] != Some(s) {
                    couplings.push((s, p, next, next + 1));
                    next += 1 + nc;
                }
            }
        }
        MasterRows {
            card,
            client,
            explicit_start,
            one,
            couplings,
            total: next,
        }
    }

    /// Column entries `(row, coefficient)` and cost for a pattern of system `s`.
    fn column(&self, rows: &MasterRows, s: usize, pat: &Pattern) -> (f64, Vec<(usize, f64)>) {
        let nc = self.inst.nc();
        let sys = &self.systems[s];
        let mut cost = 0.0;
        let mut entries = vec![(rows.one[s], 1.0)];
        let mut card = 0.0;
        let mut client = vec![0.0; nc];
        for (p, &i) in sys.facilities.iter().enumerate() {
            if self.owner[i] == Some(s) {
                card += pat.mu[p];
                for j in 0..nc {
                    let w = pat.w[p * nc + j];
                    client[j] += w;
                    cost += w * self.inst.fc(i, j);
                }
            }
        }
        if card != 0.0 {
            entries.push((rows.card, card));
        }
        for (j, v) in client.iter().enumerate() {
            if *v != 0.0 {
                entries.push((rows.client + j, *v));
            }
        }
        for &(cs, cp, yrow, xrow) in &rows.couplings {
            let i = self.systems[cs].facilities[cp];
            let sign = if cs == s {
                Some((cp, -1.0))
            } else if self.owner[i] == Some(s) {
                let p = sys.facilities.binary_search(&i).unwrap();
                Some((p, 1.0))
            } else {
                None
            };
            if let Some((p, sign)) = sign {
                if pat.mu[p] != 0.0 {
                    entries.push((yrow, sign * pat.mu[p]));
                }
                for j in 0..nc {
                    let w = pat.w[p * nc + j];
                    if w != 0.0 {
                        entries.push((xrow + j, sign * w));
                    }
                }
            }
        }
        (cost, entries)
    }

    /// Builds the restricted master. In phase one every row gets a pair of
    /// unit-cost artificials and the true costs are zero.
    fn build(&self, rows: &MasterRows, phase_one: bool) -> (LinearProgram, Vec<usize>, Vec<Vec<usize>>) {
        let inst = self.inst;
        let (nf, nc) = (inst.nf(), inst.nc());
        let mut lp = LinearProgram::new();
        let mut row_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.total];
        let explicit: Vec<usize> = (0..nf).filter(|&i| self.owner[i].is_none()).collect();
        // Explicit x_ij then y_i per uncovered facility.
        let mut explicit_vars = Vec::new();
        for (e, &i) in explicit.iter().enumerate() {
            let base = lp.num_vars();
            explicit_vars.push(base);
            for j in 0..nc {
                let v = lp.add_var(if phase_one { 0.0 } else { inst.fc(i, j) }, 0.0, 1.0);
                row_terms[rows.client + j].push((v, 1.0));
                row_terms[rows.explicit_start + e * (nc + 1) + j].push((v, 1.0));
                row_terms[rows.explicit_start + e * (nc + 1) + nc].push((v, 1.0));
            }
            let yv = lp.add_var(0.0, 0.0, 1.0);
            row_terms[rows.card].push((yv, 1.0));
            for j in 0..nc {
                row_terms[rows.explicit_start + e * (nc + 1) + j].push((yv, -1.0));
            }
            row_terms[rows.explicit_start + e * (nc + 1) + nc].push((yv, -(inst.capacity(i) as f64)));
        }
        // Coupled facilities owned by no system cannot occur; coupling rows tie
        // a non-owner system to the owner (explicit owners are impossible since
        // every member of a system has an owner).
        let mut column_vars = Vec::new();
        for (s, cols) in self.columns.iter().enumerate() {
            let mut vars = Vec::new();
            for pat in cols {
                let (cost, entries) = self.column(rows, s, pat);
                let v = lp.add_var(if phase_one { 0.0 } else { cost }, 0.0, f64::INFINITY);
                for (r, a) in entries {
                    row_terms[r].push((v, a));
                }
                vars.push(v);
            }
            column_vars.push(vars);
        }
        if phase_one {
            for (r, terms) in row_terms.iter_mut().enumerate() {
                let is_explicit_row = r >= rows.explicit_start && r < rows.explicit_start + explicit.len() * (nc + 1);
                if r == rows.card || is_explicit_row {
                    continue;
                }
                let plus = lp.add_var(1.0, 0.0, f64::INFINITY);
                let minus = lp.add_var(1.0, 0.0, f64::INFINITY);
                terms.push((plus, 1.0));
                terms.push((minus, -1.0));
            }
        }
        for (r, terms) in row_terms.into_iter().enumerate() {
            let is_explicit_row = r >= rows.explicit_start && r < rows.explicit_start + explicit.len() * (nc + 1);
            let (rel, rhs) = if r == rows.card {
                (Relation::Le, inst.k() as f64)
            } else if r >= rows.client && r < rows.client + nc {
                (Relation::Eq, 1.0)
            } else if is_explicit_row {
                (Relation::Le, 0.0)
            } else if rows.one.contains(&r) {
                (Relation::Eq, 1.0)
            } else {
                (Relation::Eq, 0.0)
            };
            lp.add_row(terms, rel, rhs);
        }
        (lp, explicit_vars, column_vars)
    }

    fn add_priced(&mut self, rows: &MasterRows, duals: &[f64], phase_one: bool, seen: &mut [HashSet<(Option<usize>, Vec<i64>)>]) -> Result<usize> {
        let nc = self.inst.nc();
        let mut added = 0;
        for s in 0..self.systems.len() {
            let nb = self.systems[s].facilities.len();
            // value of a pattern = Σ π·a − cost; evaluate coefficient-wise via unit patterns
            let constant = duals[rows.one[s]];
            let mut fac_w = vec![0.0; nb];
            let mut edge_w = vec![0.0; nb * nc];
            for p in 0..nb {
                let mut unit = Pattern {
                    config: None,
                    mu: vec![0.0; nb],
                    w: vec![0.0; nb * nc],
                };
                unit.mu[p] = 1.0;
                let (_, entries) = self.column(rows, s, &unit);
                fac_w[p] = entries.iter().map(|&(r, a)| duals[r] * a).sum::<f64>() - constant;
                for j in 0..nc {
                    let mut unit = Pattern {
                        config: None,
                        mu: vec![0.0; nb],
                        w: vec![0.0; nb * nc],
                    };
                    unit.w[p * nc + j] = 1.0;
                    let (cost, entries) = self.column(rows, s, &unit);
                    let gain: f64 = entries.iter().map(|&(r, a)| duals[r] * a).sum::<f64>() - constant;
                    edge_w[p * nc + j] = gain - if phase_one { 0.0 } else { cost };
                }
            }
            let priced = self.pricers[s].price(constant, &fac_w, &edge_w, COLS_PER_ROUND)?;
            for (_, pat) in priced {
                if seen[s].insert(pat.key()) {
                    self.columns[s].push(pat);
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    fn solve(mut self) -> Result<(FractionalSolution, Derived)> {
        let rows = self.layout();
        let mut seen = vec![HashSet::new(); self.systems.len()];
        let mut feasible = false;
        for _ in 0..MAX_ROUNDS {
            let (lp, _, _) = self.build(&rows, true);
            let res = lp_solve(&lp)?;
            if res.status != LpStatus::Optimal {
                return Err(Error::Infeasible("master LP has no feasible point".into()));
            }
            if res.objective <= CHECK_TOL {
                feasible = true;
                break;
            }
            if self.add_priced(&rows, &res.duals, true, &mut seen)? == 0 {
                return Err(Error::Infeasible(
                    "master LP with configuration constraints has no feasible point".into(),
                ));
            }
        }
        if !feasible {
            return Err(Error::Numerical("master phase one did not converge".into()));
        }
        for _ in 0..MAX_ROUNDS {
            let (lp, explicit_vars, column_vars) = self.build(&rows, false);
            let res = lp_solve(&lp)?;
            if res.status != LpStatus::Optimal {
                return Err(Error::Numerical("master LP lost feasibility".into()));
            }
            if self.add_priced(&rows, &res.duals, false, &mut seen)? == 0 {
                return self.extract(&res.x, &explicit_vars, &column_vars);
            }
        }
        Err(Error::Numerical("master column generation did not converge".into()))
    }

    fn extract(&self, sol: &[f64], explicit_vars: &[usize], column_vars: &[Vec<usize>]) -> Result<(FractionalSolution, Derived)> {
        let inst = self.inst;
        let (nf, nc) = (inst.nf(), inst.nc());
        let mut x = vec![0.0; nf * nc];
        let mut y = vec![0.0; nf];
        let explicit: Vec<usize> = (0..nf).filter(|&i| self.owner[i].is_none()).collect();
        for (e, &i) in explicit.iter().enumerate() {
            let base = explicit_vars[e];
            for j in 0..nc {
                x[i * nc + j] = sol[base + j];
            }
            y[i] = sol[base + nc];
        }
        for (s, sys) in self.systems.iter().enumerate() {
            for (pat, &v) in self.columns[s].iter().zip(&column_vars[s]) {
                let lam = sol[v];
                if lam == 0.0 {
                    continue;
                }
                for (p, &i) in sys.facilities.iter().enumerate() {
                    if self.owner[i] != Some(s) {
                        continue;
                    }
                    y[i] += lam * pat.mu[p];
                    for j in 0..nc {
                        x[i * nc + j] += lam * pat.w[p * nc + j];
                    }
                }
            }
        }
        let _ = &self.all_clients;
        for v in x.iter_mut().chain(y.iter_mut()) {
            *v = v.clamp(0.0, 1.0);
        }
        let fs = FractionalSolution::new(nf, nc, x, y)?;
        let derived = Derived::compute(inst, &fs)?;
        Ok((fs, derived))
    }
}

/// One atom `(χ, μ)` of the distribution induced by a configuration block.
#[derive(Clone, Debug)]
pub struct ZetaAtom {
    pub prob: f64,
    /// Row-major `B × C`.
    pub chi: Vec<f64>,
    /// Aligned with `B`.
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ZetaDistribution {
    pub facilities: Vec<usize>,
    pub nc: usize,
    pub atoms: Vec<ZetaAtom>,
}

impl ZetaAtom {
    pub fn mu_total(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn chi_total(&self) -> f64 {
        self.chi.iter().sum()
    }

    /// `χ_{i,C}` for the facility at position `p`.
    pub fn chi_load(&self, p: usize, nc: usize) -> f64 {
        self.chi[p * nc..(p + 1) * nc].iter().sum()
    }
}

/// Normalizes each configuration with positive mass into an atom.
pub fn build_zeta(block: &ConfigBlock, nc: usize) -> Result<ZetaDistribution> {
    let mut atoms = Vec::new();
    for e in &block.entries {
        if e.z <= tol::MASS {
            continue;
        }
        atoms.push(ZetaAtom {
            prob: e.z,
            chi: e.z_conn.iter().map(|v| (v / e.z).max(0.0)).collect(),
            mu: e.z_open.iter().map(|v| (v / e.z).clamp(0.0, 1.0)).collect(),
        });
    }
    let total: f64 = atoms.iter().map(|a| a.prob).sum();
    if atoms.is_empty() || total <= 0.0 {
        return Err(Error::invariant("zeta", "configuration block has no mass"));
    }
    for a in atoms.iter_mut() {
        a.prob /= total;
    }
    Ok(ZetaDistribution {
        facilities: block.facilities.clone(),
        nc,
        atoms,
    })
}

impl ZetaDistribution {
    /// Largest violation of the atom-wise and expectation properties.
    pub fn max_violation(&self, inst: &Instance, fs: &FractionalSolution, l1: usize) -> f64 {
        let nc = self.nc;
        let mut worst = (self.atoms.iter().map(|a| a.prob).sum::<f64>() - 1.0).abs();
        for a in &self.atoms {
            for (p, &i) in self.facilities.iter().enumerate() {
                for j in 0..nc {
                    worst = worst.max(a.chi[p * nc + j] - a.mu[p]);
                }
                worst = worst.max(a.chi_load(p, nc) - inst.capacity(i) as f64 * a.mu[p]);
            }
            let integral = a.mu.iter().all(|m| (m - m.round()).abs() <= tol::FEAS);
            if !integral {
                worst = worst.max(l1 as f64 - a.mu_total());
            }
        }
        for (p, &i) in self.facilities.iter().enumerate() {
            let ey: f64 = self.atoms.iter().map(|a| a.prob * a.mu[p]).sum();
            worst = worst.max((ey - fs.y[i]).abs());
            for j in 0..nc {
                let ex: f64 = self.atoms.iter().map(|a| a.prob * a.chi[p * nc + j]).sum();
                worst = worst.max((ex - fs.x(i, j)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_gap_instance, Facility};

    fn tiny() -> Instance {
        let fac = vec![Facility {
            id: "f".into(),
            capacity: 1,
        }];
        Instance::with_metric(fac, vec!["c".into()], 1, vec![0.0, 2.0, 2.0, 0.0]).unwrap()
    }

    #[test]
    fn forced_single_pair() {
        let inst = tiny();
        let lp = build_basic_lp(&inst);
        assert_eq!((lp.num_vars(), lp.num_rows()), (2, 4));
        let (fs, d) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).unwrap();
        assert_eq!((fs.x[0], fs.y[0]), (1.0, 1.0));
        assert_eq!(d.lp_value, 2.0);
    }

    #[test]
    fn counts_match_formula() {
        let inst = gen_gap_instance(3, 1.0).unwrap();
        let lp = build_basic_lp(&inst);
        let (nf, nc) = (inst.nf(), inst.nc());
        assert_eq!(lp.num_vars(), nf * nc + nf);
        assert_eq!(lp.num_rows(), 1 + nc + nf * nc + nf);
    }

    #[test]
    fn enumeration_order_and_budget() {
        let (c, bottom) = enumerate_configs(3, 2, 100).unwrap();
        assert_eq!(
            c,
            vec![vec![], vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]
        );
        assert!(bottom);
        assert!(matches!(enumerate_configs(20, 20, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn singleton_block_feasible() {
        let inst = tiny();
        let (fs, _) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).unwrap();
        match config_check(&inst, &fs, &[0], 3, DEFAULT_BUDGET).unwrap() {
            ConfigCheck::Feasible(b) => {
                assert_eq!(b.entries.len(), 1);
                assert_eq!(b.entries[0].config, Config::Set(vec![0]));
                assert!((b.entries[0].z - 1.0).abs() < 1e-9);
                assert!(b.max_violation(&inst, &fs) < 1e-9);
            }
            ConfigCheck::Violated(_) => panic!("expected feasible"),
        }
    }

    #[test]
    fn empty_block_feasible() {
        let inst = tiny();
        let (fs, _) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).unwrap();
        match config_check(&inst, &fs, &[], 3, DEFAULT_BUDGET).unwrap() {
            ConfigCheck::Feasible(b) => {
                assert_eq!(b.entries[0].config, Config::Set(vec![]));
                assert!((b.entries[0].z - 1.0).abs() < 1e-12);
            }
            ConfigCheck::Violated(_) => panic!("expected feasible"),
        }
    }

    #[test]
    fn gap_instance_block_cuts_and_strengthens() {
        let inst = gen_gap_instance(3, 1.0).unwrap();
        let all: Vec<usize> = (0..inst.nf()).collect();
        let (fs, d) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).unwrap();
        assert!(d.lp_value.abs() < 1e-9);
        let v = match config_check(&inst, &fs, &all, 6, DEFAULT_BUDGET).unwrap() {
            ConfigCheck::Violated(v) => v,
            ConfigCheck::Feasible(_) => panic!("basic LP point should be cut"),
        };
        assert!(v.cut.evaluate(&fs) > 1e-6);
        let sys = ConfigSystem::new(all.clone(), 6);
        let (fs2, d2) = solve_relaxation(&inst, &[sys], DEFAULT_BUDGET).unwrap();
        assert!(d2.lp_value > 1e-6);
        assert!(d2.lp_value <= 2.0 + 1e-9);
        assert!(fs2.basic_violation(&inst) < 1e-7);
        assert!(v.cut.evaluate(&fs2) <= 1e-7);
        match config_check(&inst, &fs2, &all, 6, DEFAULT_BUDGET).unwrap() {
            ConfigCheck::Feasible(b) => {
                assert!(b.max_violation(&inst, &fs2) < 1e-7);
                let z = build_zeta(&b, inst.nc()).unwrap();
                assert!(z.max_violation(&inst, &fs2, 6) < 1e-7);
            }
            ConfigCheck::Violated(v) => panic!("master point violates its own block: {}", v.infeasibility),
        }
    }

    #[test]
    fn bottom_configuration_priced() {
        let inst = gen_gap_instance(3, 1.0).unwrap();
        let all: Vec<usize> = (0..inst.nf()).collect();
        let (fs, d) = solve_relaxation(&inst, &[ConfigSystem::new(all.clone(), 2)], DEFAULT_BUDGET).unwrap();
        assert!(fs.basic_violation(&inst) < 1e-7);
        assert!(d.lp_value >= -1e-9);
        match config_check(&inst, &fs, &all, 2, DEFAULT_BUDGET).unwrap() {
            ConfigCheck::Feasible(b) => assert!(b.max_violation(&inst, &fs) < 1e-7),
            ConfigCheck::Violated(_) => panic!("expected feasible"),
        }
    }
}
