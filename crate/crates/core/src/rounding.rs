//! Dependent rounding of the local distributions, the facility removal
//! procedure and its schedule, and the final integral assignment.

use rand::Rng;

use crate::clustering::ClusterStructure;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::localsol::{emd, fuzzy_ceil, fuzzy_floor, LocalDistribution, LocalSolution};
use crate::optcore::{lp_solve, mcf_assign, transport_solve, LinearProgram, Relation, TransportProblem};

const STAGE: &str = "rounding";
const TIGHT: f64 = 1e-9;
const MEMBER_TOL: f64 = 1e-7;
const BALANCE_TOL: f64 = 1e-7;

/// A ranged row `lo ≤ Σ a x ≤ hi`.
#[derive(Clone, Debug)]
pub struct RangeRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
    pub label: String,
}

impl RangeRow {
    fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v]).sum()
    }
}

/// A polytope inside the unit box given by ranged rows.
#[derive(Clone, Debug, Default)]
pub struct Polytope {
    pub nvars: usize,
    pub rows: Vec<RangeRow>,
}

impl Polytope {
    /// Label of the first violated constraint, if any.
    pub fn violation(&self, x: &[f64], tol: f64) -> Option<String> {
        for (v, &xv) in x.iter().enumerate() {
            if xv < -tol || xv > 1.0 + tol {
                return Some(format!("box bound of variable {v}"));
            }
        }
        for r in &self.rows {
            let val = r.value(x);
            if val < r.lo - tol || val > r.hi + tol {
                return Some(format!("{} (value {val}, range [{}, {}])", r.label, r.lo, r.hi));
            }
        }
        None
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x, tol).is_none()
    }
}

fn is_integral(x: &[f64], tol: f64) -> bool {
    x.iter().all(|v| (v - v.round()).abs() <= tol)
}

/// Samples an integral point of an integral polytope whose expectation is `p`.
///
/// Each step finds a vertex `w` of the smallest face containing `p`, walks from
/// `w` through `p` to the face boundary point `z = p + t(p − w)`, and returns
/// `w` with probability `t/(1+t)`, otherwise continues from `z`.
pub fn sample_vertex<R: Rng>(poly: &Polytope, p: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if let Some(v) = poly.violation(p, MEMBER_TOL) {
        return Err(Error::invariant(STAGE, format!("sampling from a point outside the polytope: {v}")));
    }
    let mut p = p.to_vec();
    let limit = poly.nvars + poly.rows.len() + 4;
    for _ in 0..limit {
        if is_integral(&p, TIGHT) {
            return Ok(p.iter().map(|v| v.round()).collect());
        }
        let w = face_vertex(poly, &p, rng)?;
        let d: Vec<f64> = p.iter().zip(&w).map(|(a, b)| a - b).collect();
        let mut t = f64::INFINITY;
        for v in 0..poly.nvars {
            if d[v] > 1e-12 {
                t = t.min((1.0 - p[v]) / d[v]);
            } else if d[v] < -1e-12 {
                t = t.min(p[v] / -d[v]);
            }
        }
        for r in &poly.rows {
            let rd = r.value(&d);
            let rp = r.value(&p);
            if rd > 1e-12 {
                t = t.min((r.hi - rp) / rd);
            } else if rd < -1e-12 {
                t = t.min((rp - r.lo) / -rd);
            }
        }
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::invariant(STAGE, format!("degenerate step length {t}")));
        }
        if rng.gen::<f64>() < t / (1.0 + t) {
            return Ok(w);
        }
        for v in 0..poly.nvars {
            let z = (p[v] + t * d[v]).clamp(0.0, 1.0);
            p[v] = if (z - z.round()).abs() <= TIGHT { z.round() } else { z };
        }
    }
    Err(Error::invariant(STAGE, "vertex sampling did not terminate"))
}

fn face_vertex<R: Rng>(poly: &Polytope, p: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..8 {
        let mut lp = LinearProgram::new();
        for &pv in p {
            let (lo, hi) = if pv <= TIGHT {
                (0.0, 0.0)
            } else if pv >= 1.0 - TIGHT {
                (1.0, 1.0)
            } else {
                (0.0, 1.0)
            };
            lp.add_var(rng.gen_range(-1.0..1.0), lo, hi);
        }
        for r in &poly.rows {
            let val = r.value(p);
            if (val - r.lo).abs() <= TIGHT {
                lp.add_row(r.coeffs.clone(), Relation::Eq, r.lo);
            } else if (val - r.hi).abs() <= TIGHT {
                lp.add_row(r.coeffs.clone(), Relation::Eq, r.hi);
            } else {
                if r.lo.is_finite() {
                    lp.add_row(r.coeffs.clone(), Relation::Ge, r.lo);
                }
                if r.hi.is_finite() {
                    lp.add_row(r.coeffs.clone(), Relation::Le, r.hi);
                }
            }
        }
        let res = lp_solve(&lp)?;
        if !res.is_optimal() || !is_integral(&res.x, 1e-6) {
            continue;
        }
        let w: Vec<f64> = res.x.iter().map(|v| v.round()).collect();
        if poly.contains(&w, MEMBER_TOL) {
            return Ok(w);
        }
    }
    Err(Error::invariant(STAGE, "no integral vertex found on the face"))
}

/// Variable layout of the rounding polytope.
#[derive(Clone, Debug)]
pub struct MarginalLayout {
    /// Concentrated components with a distribution, ascending.
    pub components: Vec<usize>,
    /// First atom variable per entry of `components`.
    pub atom_offset: Vec<usize>,
    /// `q_J` variable per entry of `components`.
    pub q_index: Vec<usize>,
}

/// Builds the polytope and the marginal point `(ψ*, q*)` with
/// `ψ* = φ` and `q*_J = s_J − y_{U(J)}`.
pub fn build_marginal_point(
    cs: &ClusterStructure,
    dists: &[Option<LocalDistribution>],
    y: &[f64],
) -> Result<(Polytope, MarginalLayout, Vec<f64>)> {
    let components: Vec<usize> = (0..dists.len()).filter(|&c| dists[c].is_some()).collect();
    let mut atom_offset = Vec::new();
    let mut q_index = Vec::new();
    let mut n = 0;
    for &c in &components {
        atom_offset.push(n);
        n += dists[c].as_ref().unwrap().atoms.len();
        q_index.push(n);
        n += 1;
    }
    let mut point = vec![0.0; n];
    let y_of = |c: usize| -> f64 { cs.components[c].facilities.iter().map(|&i| y[i]).sum() };
    let mut size_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rows = Vec::new();
    for (k, &c) in components.iter().enumerate() {
        let dist = dists[c].as_ref().unwrap();
        let mut one = Vec::new();
        let mut size = Vec::new();
        for (a, (prob, atom)) in dist.atoms.iter().enumerate() {
            point[atom_offset[k] + a] = *prob;
            one.push((atom_offset[k] + a, 1.0));
            size.push((atom_offset[k] + a, atom.size() as f64));
        }
        size.push((q_index[k], -1.0));
        let q = dist.s - y_of(c);
        point[q_index[k]] = if q.abs() <= MEMBER_TOL { 0.0 } else { q };
        rows.push(RangeRow { coeffs: one, lo: 1.0, hi: 1.0, label: format!("distribution of component {c}") });
        let yc = y_of(c);
        rows.push(RangeRow {
            coeffs: size.clone(),
            lo: fuzzy_floor(yc) as f64,
            hi: fuzzy_ceil(yc) as f64,
            label: format!("size of component {c}"),
        });
        size_rows.push(size);
    }
    let position = |c: usize| components.iter().position(|&d| d == c);
    for (f, family) in cs.jc.iter().enumerate() {
        let ks: Vec<usize> = family.components.iter().filter_map(|&c| position(c)).collect();
        if ks.is_empty() {
            continue;
        }
        rows.push(RangeRow {
            coeffs: ks.iter().map(|&k| (q_index[k], 1.0)).collect(),
            lo: f64::NEG_INFINITY,
            hi: 1.0,
            label: format!("removal budget of family {f}"),
        });
        let yf: f64 = ks.iter().map(|&k| y_of(components[k])).sum();
        rows.push(RangeRow {
            coeffs: ks.iter().flat_map(|&k| size_rows[k].iter().copied()).collect(),
            lo: fuzzy_floor(yf) as f64,
            hi: fuzzy_ceil(yf) as f64,
            label: format!("size of family {f}"),
        });
    }
    if !components.is_empty() {
        let yall: f64 = components.iter().map(|&c| y_of(c)).sum();
        rows.push(RangeRow {
            coeffs: size_rows.iter().flat_map(|r| r.iter().copied()).collect(),
            lo: fuzzy_floor(yall) as f64,
            hi: fuzzy_ceil(yall) as f64,
            label: "size of all concentrated components".into(),
        });
    }
    let poly = Polytope { nvars: n, rows };
    if let Some(v) = poly.violation(&point, MEMBER_TOL) {
        return Err(Error::invariant(STAGE, format!("marginal point outside the polytope: {v}")));
    }
    Ok((poly, MarginalLayout { components, atom_offset, q_index }, point))
}

/// A set whose demand and supply must stay equal.
#[derive(Clone, Debug)]
pub struct BalanceSet {
    pub components: Vec<usize>,
    /// Representative positions.
    pub reps: Vec<usize>,
    pub facilities: Vec<usize>,
}

/// One set per concentrated component and one per non-concentrated region.
pub fn balance_sets(cs: &ClusterStructure) -> Vec<BalanceSet> {
    let mut out = Vec::new();
    for (c, comp) in cs.components.iter().enumerate() {
        if cs.concentrated[c] {
            out.push(BalanceSet { components: vec![c], reps: comp.reps.clone(), facilities: comp.facilities.clone() });
        }
    }
    for r in &cs.vn {
        out.push(BalanceSet { components: r.components.clone(), reps: r.reps.clone(), facilities: r.facilities.clone() });
    }
    out
}

/// Which set a removal acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// A concentrated component, or a root component of either class.
    Component(usize),
    /// A non-root region of non-concentrated components.
    Region(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemoveCase {
    /// The closed facility's demand is spread over `V′`.
    Spread,
    /// The smallest facility of `V′` is closed instead.
    Redistribute,
    /// Root component: the smallest facility of `V` is closed.
    Root,
}

#[derive(Clone, Debug)]
pub struct RemovalRecord {
    pub target: Target,
    /// Group whose schedule step issued the call.
    pub group: usize,
    pub closed: usize,
    pub case: RemoveCase,
    /// `1 + a` or `1 + a′`.
    pub factor: f64,
    pub transfer_cost: f64,
    /// `Σα` right after the call.
    pub demand_after: f64,
    /// Largest `|Σα − Σβ|` over balance sets right after the call.
    pub imbalance_after: f64,
}

/// Open set, supplies per facility and demands per representative.
#[derive(Clone, Debug)]
pub struct RoundState {
    pub open: Vec<bool>,
    pub beta: Vec<f64>,
    /// Demand per representative position.
    pub alpha: Vec<f64>,
    /// Product of scaling factors applied to each facility's supply.
    pub scaling: Vec<f64>,
    pub ledger: Vec<RemovalRecord>,
    pub transfer_cost: f64,
    sets: Vec<BalanceSet>,
    total_demand: f64,
}

/// Concatenates the chosen atoms and the non-concentrated local solutions.
pub fn assemble_initial(
    inst: &Instance,
    cs: &ClusterStructure,
    dists: &[Option<LocalDistribution>],
    layout: &MarginalLayout,
    vertex: &[f64],
    locals: &[LocalSolution],
) -> Result<(RoundState, Vec<bool>)> {
    let nf = inst.nf();
    let mut open = vec![false; nf];
    let mut beta = vec![0.0; nf];
    let mut owned = vec![false; nf];
    let mut q = vec![false; cs.components.len()];
    let mut place = |sol: &LocalSolution, open: &mut Vec<bool>, beta: &mut Vec<f64>| -> Result<()> {
        for (k, &i) in sol.facilities.iter().enumerate() {
            if owned[i] {
                return Err(Error::invariant(STAGE, format!("facility {i} claimed by two local solutions")));
            }
            owned[i] = true;
            beta[i] = sol.beta[k].max(0.0);
        }
        for &i in &sol.open {
            open[i] = true;
        }
        Ok(())
    };
    for (k, &c) in layout.components.iter().enumerate() {
        let dist = dists[c].as_ref().unwrap();
        let chosen: Vec<usize> =
            (0..dist.atoms.len()).filter(|&a| vertex[layout.atom_offset[k] + a] > 0.5).collect();
        if chosen.len() != 1 {
            return Err(Error::invariant(STAGE, format!("component {c} selects {} atoms", chosen.len())));
        }
        place(&dist.atoms[chosen[0]].1, &mut open, &mut beta)?;
        q[c] = vertex[layout.q_index[k]] > 0.5;
    }
    for sol in locals {
        place(sol, &mut open, &mut beta)?;
    }
    for i in 0..nf {
        if !open[i] && beta[i] > BALANCE_TOL {
            return Err(Error::invariant(STAGE, format!("closed facility {i} carries supply")));
        }
    }
    let state = RoundState {
        open,
        beta,
        alpha: cs.reps.alpha.clone(),
        scaling: vec![1.0; nf],
        ledger: Vec::new(),
        transfer_cost: 0.0,
        sets: balance_sets(cs),
        total_demand: inst.nc() as f64,
    };
    state.check_balance()?;
    Ok((state, q))
}

fn movement_cost(inst: &Instance, cs: &ClusterStructure, reps: &[usize], old: &[f64], new: &[f64]) -> Result<f64> {
    let mut from = Vec::new();
    let mut to = Vec::new();
    for k in 0..reps.len() {
        let diff = new[k] - old[k];
        if diff < 0.0 {
            from.push((reps[k], -diff));
        } else if diff > 0.0 {
            to.push((reps[k], diff));
        }
    }
    if from.is_empty() || to.is_empty() {
        return Ok(0.0);
    }
    let supply: f64 = from.iter().map(|x| x.1).sum();
    let demand: f64 = to.iter().map(|x| x.1).sum();
    let shrink = if demand > supply { supply / demand } else { 1.0 };
    let mut cost = Vec::with_capacity(from.len() * to.len());
    for &(b, _) in &to {
        for &(a, _) in &from {
            cost.push(inst.cc(cs.reps.reps[a], cs.reps.reps[b]));
        }
    }
    let plan = transport_solve(&TransportProblem {
        supplies: from.iter().map(|x| x.1).collect(),
        demands: to.iter().map(|x| x.1 * shrink).collect(),
        cost,
    })?;
    Ok(plan.cost)
}

impl RoundState {
    pub fn open_set(&self) -> Vec<usize> {
        (0..self.open.len()).filter(|&i| self.open[i]).collect()
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    fn open_in(&self, facilities: &[usize]) -> Vec<usize> {
        facilities.iter().copied().filter(|&i| self.open[i]).collect()
    }

    /// Total demand and the largest demand/supply gap over balance sets.
    pub fn balance_summary(&self) -> (f64, f64) {
        let gap = self
            .sets
            .iter()
            .map(|set| {
                let a: f64 = set.reps.iter().map(|&p| self.alpha[p]).sum();
                let b: f64 = set.facilities.iter().map(|&i| self.beta[i]).sum();
                (a - b).abs()
            })
            .fold(0.0, f64::max);
        (self.alpha.iter().sum(), gap)
    }

    /// Demand equals supply on every balance set and in total.
    pub fn check_balance(&self) -> Result<()> {
        for (s, set) in self.sets.iter().enumerate() {
            let a: f64 = set.reps.iter().map(|&p| self.alpha[p]).sum();
            let b: f64 = set.facilities.iter().map(|&i| self.beta[i]).sum();
            if (a - b).abs() > BALANCE_TOL * (1.0 + a) {
                return Err(Error::invariant(STAGE, format!("balance set {s}: demand {a} vs supply {b}")));
            }
        }
        let total: f64 = self.alpha.iter().sum();
        if (total - self.total_demand).abs() > BALANCE_TOL * (1.0 + total) {
            return Err(Error::invariant(STAGE, format!("total demand {total} != {}", self.total_demand)));
        }
        Ok(())
    }

    /// Balance sets touching the given components, merged into one
    /// component list, representative list and facility list.
    fn close_over_sets(&self, comps: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
        let ids: Vec<usize> = (0..self.sets.len())
            .filter(|&s| self.sets[s].components.iter().any(|c| comps.contains(c)))
            .collect();
        let mut components: Vec<usize> = ids.iter().flat_map(|&s| self.sets[s].components.iter().copied()).collect();
        let mut reps: Vec<usize> = ids.iter().flat_map(|&s| self.sets[s].reps.iter().copied()).collect();
        let mut facilities: Vec<usize> = ids.iter().flat_map(|&s| self.sets[s].facilities.iter().copied()).collect();
        components.sort_unstable();
        reps.sort_unstable();
        facilities.sort_unstable();
        (ids, components, reps, facilities)
    }

    /// EMD plan per balance set, keyed by (representative position, facility).
    fn plans(&self, inst: &Instance, cs: &ClusterStructure, sets: &[usize]) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::new();
        for &s in sets {
            let set = &self.sets[s];
            let clients: Vec<usize> = set.reps.iter().map(|&p| cs.reps.reps[p]).collect();
            let alpha: Vec<f64> = set.reps.iter().map(|&p| self.alpha[p]).collect();
            let beta: Vec<f64> = set.facilities.iter().map(|&i| self.beta[i]).collect();
            let plan = emd(inst, &clients, &alpha, &set.facilities, &beta)?;
            for (r, &p) in set.reps.iter().enumerate() {
                for (c, &i) in set.facilities.iter().enumerate() {
                    let f = plan.get(r, c);
                    if f > 0.0 {
                        out.push((p, i, f));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Closes one facility in `U(V ∪ V′)` and rebalances demands.
    pub fn remove(&mut self, inst: &Instance, cs: &ClusterStructure, target: Target, group: usize) -> Result<RemovalRecord> {
        let l = cs.l;
        let (v_comps, v_prime_comps, root) = match target {
            Target::Component(c) => {
                if cs.components[c].parent.is_none() {
                    (vec![c], vec![c], true)
                } else {
                    if !cs.concentrated[c] {
                        return Err(Error::invariant(STAGE, format!("component {c} is neither concentrated nor a root")));
                    }
                    let g = cs.group_of[c];
                    let pg = cs.groups[g]
                        .parent
                        .ok_or_else(|| Error::invariant(STAGE, format!("non-root component {c} in a root group")))?;
                    (vec![c], cs.groups[pg].components.clone(), false)
                }
            }
            Target::Region(r) => {
                let region = &cs.vn[r];
                if region.root {
                    (region.components.clone(), region.components.clone(), true)
                } else {
                    (region.components.clone(), cs.groups[region.group].components.clone(), false)
                }
            }
        };
        let (v_sets, _, v_reps, v_facs) = self.close_over_sets(&v_comps);
        let (vp_sets, vp_comps, vp_reps, vp_facs) = self.close_over_sets(&v_prime_comps);
        if !root && vp_comps.iter().any(|c| v_comps.contains(c)) {
            return Err(Error::invariant(STAGE, "V and V' overlap for a non-root removal"));
        }
        let open_v = self.open_in(&v_facs);
        let open_vp = self.open_in(&vp_facs);
        if open_v.is_empty() {
            return Err(Error::invariant(STAGE, format!("{target:?}: no open facility in U(V)")));
        }
        if (open_vp.len() as f64) < l - 6.0 {
            return Err(Error::invariant(STAGE, format!("{target:?}: only {} open facilities in U(V')", open_vp.len())));
        }
        let smallest = |set: &[usize], beta: &[f64]| -> usize {
            *set.iter().min_by(|&&a, &&b| beta[a].partial_cmp(&beta[b]).unwrap().then(a.cmp(&b))).unwrap()
        };
        let vp_demand: f64 = vp_reps.iter().map(|&p| self.alpha[p]).sum();
        let old_alpha = self.alpha.clone();
        let mut record_reps = vp_reps.clone();
        let (closed, case, factor) = {
            let i = smallest(&open_v, &self.beta);
            let a = if vp_demand > 0.0 { self.beta[i] / vp_demand } else { f64::INFINITY };
            if !root && a <= 1.0 / l {
                let plans = self.plans(inst, cs, &v_sets)?;
                let mut removed = 0.0;
                for &(p, fi, f) in &plans {
                    if fi == i {
                        self.alpha[p] -= f;
                        removed += f;
                    }
                }
                let a = removed / vp_demand;
                for &p in &vp_reps {
                    self.alpha[p] *= 1.0 + a;
                }
                for &f in &vp_facs {
                    self.beta[f] *= 1.0 + a;
                    self.scaling[f] *= 1.0 + a;
                }
                self.beta[i] = 0.0;
                self.open[i] = false;
                record_reps.extend(v_reps.iter().copied());
                (i, RemoveCase::Spread, 1.0 + a)
            } else {
                let i2 = smallest(&open_vp, &self.beta);
                let total: f64 = vp_facs.iter().map(|&f| self.beta[f]).sum();
                let rest = total - self.beta[i2];
                if rest <= 0.0 && self.beta[i2] > BALANCE_TOL {
                    return Err(Error::invariant(STAGE, format!("{target:?}: closing the last supplier of V'")));
                }
                let a2 = if rest > 0.0 { self.beta[i2] / rest } else { 0.0 };
                let plans = self.plans(inst, cs, &vp_sets)?;
                for &p in &vp_reps {
                    self.alpha[p] = 0.0;
                }
                for &(p, fi, f) in &plans {
                    if fi != i2 {
                        self.alpha[p] += (1.0 + a2) * f;
                    }
                }
                for &f in &vp_facs {
                    if f != i2 {
                        self.beta[f] *= 1.0 + a2;
                        self.scaling[f] *= 1.0 + a2;
                    }
                }
                self.beta[i2] = 0.0;
                self.open[i2] = false;
                (i2, if root { RemoveCase::Root } else { RemoveCase::Redistribute }, 1.0 + a2)
            }
        };
        record_reps.sort_unstable();
        record_reps.dedup();
        let old: Vec<f64> = record_reps.iter().map(|&p| old_alpha[p]).collect();
        let new: Vec<f64> = record_reps.iter().map(|&p| self.alpha[p]).collect();
        let transfer_cost = movement_cost(inst, cs, &record_reps, &old, &new)?;
        self.transfer_cost += transfer_cost;
        self.check_balance()?;
        let (demand_after, imbalance_after) = self.balance_summary();
        let rec = RemovalRecord { target, group, closed, case, factor, transfer_cost, demand_after, imbalance_after };
        self.ledger.push(rec.clone());
        Ok(rec)
    }

    /// Top-down removals over the groups, then `|S*| ≤ k` is asserted.
    pub fn run_schedule(&mut self, inst: &Instance, cs: &ClusterStructure, q: &[bool]) -> Result<()> {
        for g in 0..cs.groups.len() {
            let group = &cs.groups[g];
            if group.parent.is_none() {
                let j = group.components[0];
                if cs.concentrated[j] {
                    if q[j] {
                        self.remove(inst, cs, Target::Component(j), g)?;
                    }
                } else {
                    for _ in 0..2 {
                        if !self.open_in(&cs.components[j].facilities).is_empty() {
                            self.remove(inst, cs, Target::Component(j), g)?;
                        }
                    }
                }
            }
            if group.children.is_empty() {
                continue;
            }
            if let Some(r) = cs.vn.iter().position(|r| r.group == g && !r.root) {
                for _ in 0..2 {
                    if !self.open_in(&cs.vn[r].facilities).is_empty() {
                        self.remove(inst, cs, Target::Region(r), g)?;
                    }
                }
            }
            for &h in &group.children {
                for &j in &cs.groups[h].components {
                    if cs.concentrated[j] && q[j] {
                        self.remove(inst, cs, Target::Component(j), g)?;
                    }
                }
            }
        }
        if self.open_count() > inst.k() {
            return Err(Error::invariant(STAGE, format!("{} facilities open after removals, k = {}", self.open_count(), inst.k())));
        }
        Ok(())
    }
}

/// The final integral solution.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralSolution {
    /// Open facility indices, ascending.
    pub open: Vec<usize>,
    /// Facility index serving each client.
    pub assignment: Vec<usize>,
    /// Number of clients per facility.
    pub loads: Vec<usize>,
    pub cost: f64,
    /// `max_i load_i / u_i` over open facilities.
    pub max_violation: f64,
}

/// Assigns clients to `S*` with integral caps `⌈β*_i⌉`. With `eps` given,
/// asserts `β*_i ≤ (1+ε)u_i` and `load_i ≤ ⌈(1+ε)u_i⌉`.
pub fn final_assignment(inst: &Instance, state: &RoundState, eps: Option<f64>) -> Result<IntegralSolution> {
    let open = state.open_set();
    if open.len() > inst.k() {
        return Err(Error::invariant(STAGE, "more than k facilities open"));
    }
    let caps: Vec<usize> = open.iter().map(|&i| (state.beta[i] - 1e-9).max(0.0).ceil() as usize).collect();
    let mut cost = Vec::with_capacity(inst.nc() * open.len());
    for j in 0..inst.nc() {
        for &i in &open {
            cost.push(inst.fc(i, j));
        }
    }
    let asg = mcf_assign(inst.nc(), &caps, &cost)?;
    let assignment: Vec<usize> = asg.facility_of.iter().map(|&c| open[c]).collect();
    let mut loads = vec![0usize; inst.nf()];
    for &i in &assignment {
        loads[i] += 1;
    }
    let mut max_violation = 0.0f64;
    for &i in &open {
        let u = inst.capacity(i) as f64;
        if u > 0.0 {
            max_violation = max_violation.max(loads[i] as f64 / u);
        } else if loads[i] > 0 {
            max_violation = f64::INFINITY;
        }
        if let Some(eps) = eps {
            let bound = (1.0 + eps) * u;
            if state.beta[i] > bound + 1e-7 {
                return Err(Error::invariant(STAGE, format!("supply {} at facility {i} exceeds (1+eps)u = {bound}", state.beta[i])));
            }
            if loads[i] > (bound - 1e-9).ceil() as usize {
                return Err(Error::invariant(STAGE, format!("load {} at facility {i} exceeds ceil((1+eps)u)", loads[i])));
            }
        }
    }
    let total: f64 = assignment.iter().enumerate().map(|(j, &i)| inst.fc(i, j)).sum();
    Ok(IntegralSolution { open, assignment, loads, cost: total, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simplex(n: usize) -> Polytope {
        Polytope {
            nvars: n,
            rows: vec![RangeRow { coeffs: (0..n).map(|v| (v, 1.0)).collect(), lo: 1.0, hi: 1.0, label: "sum".into() }],
        }
    }

    #[test]
    fn integral_input_is_returned() {
        let poly = simplex(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_vertex(&poly, &[0.0, 1.0, 0.0], &mut rng).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_atom_frequencies() {
        let poly = simplex(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            let w = sample_vertex(&poly, &[0.5, 0.5], &mut rng).unwrap();
            assert!(poly.contains(&w, 0.0));
            hits += (w[0] == 1.0) as usize;
        }
        let sigma = (0.25 / n as f64).sqrt() * n as f64;
        assert!((hits as f64 - 0.5 * n as f64).abs() <= 3.0 * sigma);
    }

    #[test]
    fn laminar_pair_marginals() {
        let poly = Polytope {
            nvars: 5,
            rows: vec![
                RangeRow { coeffs: vec![(0, 1.0), (1, 1.0)], lo: 1.0, hi: 1.0, label: "a".into() },
                RangeRow { coeffs: vec![(2, 1.0), (3, 1.0)], lo: 1.0, hi: 1.0, label: "b".into() },
                RangeRow { coeffs: vec![(1, 1.0), (3, 1.0), (4, -1.0)], lo: 0.0, hi: 1.0, label: "c".into() },
            ],
        };
        let p = [0.4, 0.6, 0.7, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut mean = [0.0; 5];
        for _ in 0..n {
            let w = sample_vertex(&poly, &p, &mut rng).unwrap();
            assert!(poly.contains(&w, 0.0));
            for v in 0..5 {
                mean[v] += w[v] / n as f64;
            }
        }
        for v in 0..5 {
            let sigma = (p[v] * (1.0 - p[v]) / n as f64).sqrt();
            assert!((mean[v] - p[v]).abs() <= 4.0 * sigma, "variable {v}: {} vs {}", mean[v], p[v]);
        }
    }
}
