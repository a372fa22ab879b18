//! Local solutions: distributions for concentrated components, single
//! solutions for unions of non-concentrated components, and the earth mover
//! distance used to price them.

use rand::Rng;

use crate::clustering::{ClusterStructure, Region};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::optcore::{lp_solve, transport_solve, LinearProgram, Relation, TransportPlan, TransportProblem};
use crate::relaxation::{Derived, FractionalSolution, ZetaDistribution};

const STAGE: &str = "localsol";
const INT_TOL: f64 = 1e-9;
const CHECK_TOL: f64 = 1e-7;

/// An open set and a supply vector over a fixed facility list.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSolution {
    /// Facility ids of `U(V)`, ascending.
    pub facilities: Vec<usize>,
    /// Open facility ids, ascending.
    pub open: Vec<usize>,
    /// Supply per entry of `facilities`.
    pub beta: Vec<f64>,
}

impl LocalSolution {
    pub fn size(&self) -> usize {
        self.open.len()
    }

    pub fn supply(&self) -> f64 {
        self.beta.iter().sum()
    }

    fn with_extra(&self, count: usize) -> LocalSolution {
        let mut open = self.open.clone();
        for &i in &self.facilities {
            if open.len() >= self.open.len() + count {
                break;
            }
            if !open.contains(&i) {
                open.push(i);
            }
        }
        open.sort_unstable();
        LocalSolution {
            facilities: self.facilities.clone(),
            open,
            beta: self.beta.clone(),
        }
    }
}

/// Measurements kept alongside a distribution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Retained mass of good pairs.
    pub q: f64,
    /// Largest `ψ′/ψ` ratio seen while massaging.
    pub massage_ratio: f64,
    /// `E[EMD(α|_J, β)]`.
    pub expected_emd: f64,
    /// `D_B` of the facility set.
    pub d_b: f64,
}

#[derive(Clone, Debug)]
pub struct LocalDistribution {
    pub facilities: Vec<usize>,
    pub atoms: Vec<(f64, LocalSolution)>,
    /// Expected number of open facilities.
    pub s: f64,
    pub diagnostics: Diagnostics,
}

impl LocalDistribution {
    pub fn expected_size(&self) -> f64 {
        self.atoms.iter().map(|(p, a)| p * a.size() as f64).sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|(p, _)| p).sum()
    }

    /// Draws one atom index.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let mut t: f64 = rng.gen::<f64>() * self.total_probability();
        for (k, (p, _)) in self.atoms.iter().enumerate() {
            if t < *p {
                return k;
            }
            t -= p;
        }
        self.atoms.len() - 1
    }
}

/// `⌊s⌋` treating values within `1e-9` of an integer as that integer.
pub fn fuzzy_floor(s: f64) -> usize {
    let r = s.round();
    if (s - r).abs() <= INT_TOL {
        r as usize
    } else {
        s.floor() as usize
    }
}

/// `⌈s⌉` treating values within `1e-9` of an integer as that integer.
pub fn fuzzy_ceil(s: f64) -> usize {
    let r = s.round();
    if (s - r).abs() <= INT_TOL {
        r as usize
    } else {
        s.ceil() as usize
    }
}

/// Earth mover distance from demands at representatives (client indices) to
/// supplies at facilities.
pub fn emd(inst: &Instance, reps: &[usize], alpha: &[f64], facilities: &[usize], beta: &[f64]) -> Result<TransportPlan> {
    let mut cost = Vec::with_capacity(reps.len() * facilities.len());
    for &v in reps {
        for &i in facilities {
            cost.push(inst.fc(i, v));
        }
    }
    transport_solve(&TransportProblem {
        supplies: beta.iter().map(|b| b.max(0.0)).collect(),
        demands: alpha.iter().map(|a| a.max(0.0)).collect(),
        cost,
    })
}

fn component_demands(cs: &ClusterStructure, reps: &[usize]) -> (Vec<usize>, Vec<f64>) {
    (reps.iter().map(|&p| cs.reps.reps[p]).collect(), reps.iter().map(|&p| cs.reps.alpha[p]).collect())
}

/// Conditions `ψ` on small atoms so that every size is at most `⌈s⌉` and
/// `E max{|S|, ⌊s⌋} ≤ s`. Returns the new distribution and the largest
/// per-atom probability ratio.
pub fn massage_distribution(psi: &[(f64, LocalSolution)], l: f64, l1: f64) -> Result<(Vec<(f64, LocalSolution)>, f64)> {
    let s: f64 = psi.iter().map(|(p, a)| p * a.size() as f64).sum();
    if s > l1 + INT_TOL {
        return Err(Error::invariant(STAGE, format!("massage needs s = {s} <= l1 = {l1}")));
    }
    let lo = fuzzy_floor(s);
    let hi = fuzzy_ceil(s);
    let frac = s - lo as f64;
    let mut weights: Vec<f64> = if hi == lo || frac <= 1.0 - 1.0 / l {
        psi.iter().map(|(p, a)| if a.size() <= lo { *p } else { 0.0 }).collect()
    } else {
        psi.iter()
            .map(|(p, a)| match a.size() {
                n if n < hi => *p,
                n if n == hi => *p / (2.0 * l1),
                _ => 0.0,
            })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invariant(STAGE, "massage conditioned on an empty support"));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    let mut ratio = 0.0f64;
    let mut out = Vec::new();
    for ((p, a), w) in psi.iter().zip(weights) {
        if w > 0.0 {
            ratio = ratio.max(w / p);
            out.push((w, a.clone()));
        }
    }
    let upper = out.iter().all(|(_, a)| a.size() <= hi);
    let lower: f64 = out.iter().map(|(p, a)| p * a.size().max(lo) as f64).sum();
    if !upper || lower > s + INT_TOL {
        return Err(Error::invariant(STAGE, format!("massage post-conditions fail (E max = {lower}, s = {s})")));
    }
    Ok((out, ratio))
}

/// Pads every atom up to `⌊s⌋` facilities, then moves mass from the most
/// likely `⌊s⌋` atoms to padded `⌈s⌉` copies until the expectation is `s`.
fn pad_and_rebalance(atoms: Vec<(f64, LocalSolution)>, s: f64) -> Vec<(f64, LocalSolution)> {
    let lo = fuzzy_floor(s);
    let hi = fuzzy_ceil(s);
    let mut atoms: Vec<(f64, LocalSolution)> = atoms
        .into_iter()
        .map(|(p, a)| {
            if a.size() < lo {
                let extra = lo - a.size();
                (p, a.with_extra(extra))
            } else {
                (p, a)
            }
        })
        .collect();
    if hi > lo {
        loop {
            let current: f64 = atoms.iter().map(|(p, a)| p * a.size() as f64).sum();
            let gap = s - current;
            if gap <= 1e-13 {
                break;
            }
            let pick = atoms
                .iter()
                .enumerate()
                .filter(|(_, (p, a))| a.size() == lo && *p > 0.0)
                .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap().then(b.0.cmp(&a.0)))
                .map(|(k, _)| k);
            let Some(k) = pick else { break };
            let m = atoms[k].0.min(gap);
            atoms[k].0 -= m;
            let padded = atoms[k].1.with_extra(1);
            atoms.push((m, padded));
        }
    }
    atoms.retain(|(p, _)| *p > 0.0);
    atoms
}

fn check_distribution(
    inst: &Instance,
    dist: &LocalDistribution,
    y_b: f64,
    x_bc: f64,
    upper: f64,
    beta_factor: f64,
) -> Result<()> {
    let total = dist.total_probability();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invariant(STAGE, format!("probabilities sum to {total}")));
    }
    let s = dist.expected_size();
    if (s - dist.s).abs() > CHECK_TOL {
        return Err(Error::invariant(STAGE, format!("recorded s {} differs from E|S| {s}", dist.s)));
    }
    if s < y_b - CHECK_TOL || s > upper + CHECK_TOL {
        return Err(Error::invariant(STAGE, format!("E|S| = {s} outside [{y_b}, {upper}]")));
    }
    let (lo, hi) = (fuzzy_floor(dist.s), fuzzy_ceil(dist.s));
    for (_, a) in &dist.atoms {
        if a.size() != lo && a.size() != hi {
            return Err(Error::invariant(STAGE, format!("atom with {} facilities, s = {}", a.size(), dist.s)));
        }
        for (k, &i) in a.facilities.iter().enumerate() {
            let b = a.beta[k];
            if b < -CHECK_TOL {
                return Err(Error::invariant(STAGE, "negative supply"));
            }
            if a.open.binary_search(&i).is_err() {
                if b > CHECK_TOL {
                    return Err(Error::invariant(STAGE, format!("closed facility {i} has supply {b}")));
                }
            } else if b > beta_factor * inst.capacity(i) as f64 + CHECK_TOL {
                return Err(Error::invariant(STAGE, format!("facility {i} supply {b} exceeds scaled capacity")));
            }
        }
        if (a.supply() - x_bc).abs() > CHECK_TOL * (1.0 + x_bc) {
            return Err(Error::invariant(STAGE, format!("atom supply {} != demand {x_bc}", a.supply())));
        }
    }
    Ok(())
}

fn measure(inst: &Instance, cs: &ClusterStructure, reps: &[usize], dist: &mut LocalDistribution, der: &Derived) -> Result<()> {
    let (clients, alpha) = component_demands(cs, reps);
    let mut e = 0.0;
    for (p, a) in &dist.atoms {
        e += p * emd(inst, &clients, &alpha, &a.facilities, &a.beta)?.cost;
    }
    dist.diagnostics.expected_emd = e;
    dist.diagnostics.d_b = der.d_set(&dist.facilities);
    Ok(())
}

/// Distribution for a concentrated component with `y_B ≤ 2ℓ`, built from the
/// configuration distribution `zeta` of its facility set.
pub fn concentrated_distribution(
    inst: &Instance,
    fs: &FractionalSolution,
    der: &Derived,
    cs: &ClusterStructure,
    component: usize,
    zeta: &ZetaDistribution,
    l1: f64,
) -> Result<LocalDistribution> {
    let l = cs.l;
    let comp = &cs.components[component];
    let b = &comp.facilities;
    if zeta.facilities != *b {
        return Err(Error::invariant(STAGE, "zeta facilities differ from the component"));
    }
    if zeta.atoms.is_empty() {
        return Err(Error::invariant(STAGE, "empty zeta distribution"));
    }
    let y_b = fs.y_set(b);
    let x_bc = fs.x_set(b);
    let shrink = 1.0 - 1.0 / l;
    let nc = zeta.nc;

    let mut psi: Vec<(f64, LocalSolution)> = Vec::new();
    let mut q = 0.0;
    for atom in &zeta.atoms {
        let good_a = atom.mu_total() <= y_b / shrink + INT_TOL;
        let good_b = atom.chi_total() >= shrink * x_bc - INT_TOL;
        if !(good_a && good_b) {
            continue;
        }
        if atom.mu.iter().any(|m| m.min(1.0 - m).abs() > INT_TOL) {
            return Err(Error::invariant(STAGE, "good pair with fractional opening"));
        }
        q += atom.prob;
        let open: Vec<usize> = b.iter().zip(&atom.mu).filter(|(_, m)| **m > 0.5).map(|(&i, _)| i).collect();
        let beta = (0..b.len()).map(|p| atom.chi_load(p, nc) / shrink).collect();
        psi.push((atom.prob, LocalSolution { facilities: b.clone(), open, beta }));
    }
    if q < 1.0 / (2.0 * l) - INT_TOL {
        return Err(Error::invariant(STAGE, format!("good mass {q} below 1/(2l)")));
    }
    for (p, _) in psi.iter_mut() {
        *p /= q;
    }

    let full = b.len();
    loop {
        let s: f64 = psi.iter().map(|(p, a)| p * a.size() as f64).sum();
        let gap = y_b - s;
        if gap <= 1e-13 {
            break;
        }
        let pick = psi
            .iter()
            .enumerate()
            .filter(|(_, (p, a))| a.size() < full && *p > 0.0)
            .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap().then(b.0.cmp(&a.0)))
            .map(|(k, _)| k);
        let Some(k) = pick else { break };
        let m = psi[k].0.min(gap / (full - psi[k].1.size()) as f64);
        psi[k].0 -= m;
        let mut whole = psi[k].1.clone();
        whole.open = b.clone();
        psi.push((m, whole));
    }
    psi.retain(|(p, _)| *p > 0.0);

    let (clients, alpha) = component_demands(cs, &comp.reps);
    for (_, a) in psi.iter_mut() {
        let plan = emd(inst, &clients, &alpha, &a.facilities, &a.beta)?;
        for c in 0..a.beta.len() {
            a.beta[c] = plan.column_sum(c).min(a.beta[c]);
        }
    }

    let s_psi: f64 = psi.iter().map(|(p, a)| p * a.size() as f64).sum();
    let s_psi = if (s_psi - s_psi.round()).abs() <= INT_TOL { s_psi.round() } else { s_psi };
    let (massaged, ratio) = massage_distribution(&psi, l, l1)?;
    let atoms = pad_and_rebalance(massaged, s_psi);
    let mut dist = LocalDistribution {
        facilities: b.clone(),
        atoms,
        s: s_psi,
        diagnostics: Diagnostics {
            q,
            massage_ratio: ratio,
            ..Diagnostics::default()
        },
    };
    let upper = if x_bc > 0.0 { y_b * (1.0 + 2.0 * l * cs.pi[component] / x_bc) } else { y_b };
    check_distribution(inst, &dist, y_b, x_bc, upper.max(y_b), 1.0 / shrink)?;
    measure(inst, cs, &comp.reps, &mut dist, der)?;
    Ok(dist)
}

/// Minimizes `Σ u′_i λ_i c_i` subject to `Σ u′_i λ_i = demand`,
/// `Σ λ_i = y` and `λ ∈ [0, 1]`, returning a vertex with snapped entries.
fn two_row_lp(u: &[f64], c: &[f64], demand: f64, y: f64) -> Result<Vec<f64>> {
    let mut lp = LinearProgram::new();
    for k in 0..u.len() {
        lp.add_var(u[k] * c[k], 0.0, 1.0);
    }
    lp.add_row((0..u.len()).map(|k| (k, u[k])).collect(), Relation::Eq, demand);
    lp.add_row((0..u.len()).map(|k| (k, 1.0)).collect(), Relation::Eq, y);
    let res = lp_solve(&lp)?;
    if !res.is_optimal() {
        return Err(Error::invariant(STAGE, format!("local LP status {:?}", res.status)));
    }
    let lambda: Vec<f64> = res
        .x
        .iter()
        .map(|&v| {
            if v <= INT_TOL {
                0.0
            } else if v >= 1.0 - INT_TOL {
                1.0
            } else {
                v
            }
        })
        .collect();
    let fractional = lambda.iter().filter(|&&v| v > 0.0 && v < 1.0).count();
    if fractional > 2 {
        return Err(Error::invariant(STAGE, format!("local LP vertex has {fractional} fractional entries")));
    }
    Ok(lambda)
}

/// Effective capacities `u′_i = x_{i,C}/y_i` over the facilities with `y_i > 0`.
fn effective(fs: &FractionalSolution, b: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let kept: Vec<usize> = b.iter().copied().filter(|&i| fs.y[i] > 0.0).collect();
    let u = kept.iter().map(|&i| fs.load(i).max(0.0) / fs.y[i]).collect();
    (kept, u)
}

fn normalize_supply(beta: &mut [f64], target: f64) -> Result<()> {
    let total: f64 = beta.iter().sum();
    if total <= 0.0 {
        if target > CHECK_TOL {
            return Err(Error::invariant(STAGE, "no supply for positive demand"));
        }
        return Ok(());
    }
    let f = target / total;
    if (f - 1.0).abs() > 1e-6 {
        return Err(Error::invariant(STAGE, format!("supply {total} far from demand {target}")));
    }
    for v in beta.iter_mut() {
        *v *= f;
    }
    Ok(())
}

/// Single-representative component with `y_B > 2ℓ`: solve the two-row LP,
/// close the two support facilities carrying the least demand, then pad to
/// `s = y_B`.
pub fn large_y_local(inst: &Instance, fs: &FractionalSolution, der: &Derived, cs: &ClusterStructure, component: usize) -> Result<LocalDistribution> {
    let l = cs.l;
    let comp = &cs.components[component];
    if comp.reps.len() != 1 {
        return Err(Error::invariant(STAGE, "large-y component has several representatives"));
    }
    let v = cs.reps.reps[comp.reps[0]];
    let b = &comp.facilities;
    let y_b = fs.y_set(b);
    let x_bc = fs.x_set(b);
    let (kept, mut u) = effective(fs, b);
    let c: Vec<f64> = kept.iter().map(|&i| inst.fc(i, v)).collect();
    let y_kept: f64 = kept.iter().map(|&i| fs.y[i]).sum();
    let demand: f64 = kept.iter().map(|&i| fs.load(i).max(0.0)).sum();
    let mut lambda = two_row_lp(&u, &c, demand, y_kept)?;
    let support = lambda.iter().filter(|&&x| x > 0.0).count();
    if y_b >= 2.0 * l && (support as f64) < 2.0 * l {
        return Err(Error::invariant(STAGE, format!("support {support} below 2l")));
    }
    for _ in 0..2 {
        let carried: f64 = (0..kept.len()).map(|k| lambda[k] * u[k]).sum();
        let pick = (0..kept.len())
            .filter(|&k| lambda[k] > 0.0)
            .min_by(|&a, &b| (lambda[a] * u[a]).partial_cmp(&(lambda[b] * u[b])).unwrap().then(kept[a].cmp(&kept[b])));
        let Some(k) = pick else { break };
        let a = if carried > 0.0 { lambda[k] * u[k] / carried } else { 0.0 };
        lambda[k] = 0.0;
        for (m, uu) in u.iter_mut().enumerate() {
            if m != k {
                *uu /= 1.0 - a;
            }
        }
    }
    let mut beta = vec![0.0; b.len()];
    let mut open = Vec::new();
    for (k, &i) in kept.iter().enumerate() {
        if lambda[k] > 0.0 {
            open.push(i);
            beta[b.binary_search(&i).unwrap()] = lambda[k] * u[k];
        }
    }
    let carried: f64 = beta.iter().sum();
    if (carried - demand).abs() > CHECK_TOL * (1.0 + demand) {
        return Err(Error::invariant(STAGE, format!("supply {carried} != demand {demand} after removals")));
    }
    normalize_supply(&mut beta, x_bc)?;
    open.sort_unstable();
    let s = if (y_b - y_b.round()).abs() <= INT_TOL { y_b.round() } else { y_b };
    if open.len() > fuzzy_floor(s) {
        return Err(Error::invariant(STAGE, format!("{} open facilities exceed floor(y_B)", open.len())));
    }
    let atom = LocalSolution { facilities: b.clone(), open, beta };
    let atoms = pad_and_rebalance(vec![(1.0, atom)], s);
    let mut dist = LocalDistribution {
        facilities: b.clone(),
        atoms,
        s,
        diagnostics: Diagnostics { q: 1.0, massage_ratio: 1.0, ..Diagnostics::default() },
    };
    check_distribution(inst, &dist, y_b, x_bc, y_b, 1.0 / (1.0 - 1.0 / l))?;
    measure(inst, cs, &comp.reps, &mut dist, der)?;
    Ok(dist)
}

/// Single local solution for a region of non-concentrated components.
pub fn nonconcentrated_local(inst: &Instance, fs: &FractionalSolution, cs: &ClusterStructure, region: &Region) -> Result<LocalSolution> {
    let l = cs.l;
    let mut coef = vec![0.0; inst.nf()];
    for &c in &region.components {
        let comp = &cs.components[c];
        let far = if comp.l.is_finite() { l * l * comp.l } else { 0.0 };
        for &p in &comp.reps {
            let v = cs.reps.reps[p];
            for &i in &cs.reps.bundles[p] {
                coef[i] = inst.fc(i, v) + far;
            }
        }
    }
    let b = &region.facilities;
    let y_b = fs.y_set(b);
    let x_bc = fs.x_set(b);
    let (kept, u) = effective(fs, b);
    let c: Vec<f64> = kept.iter().map(|&i| coef[i]).collect();
    let y_kept: f64 = kept.iter().map(|&i| fs.y[i]).sum();
    let demand: f64 = kept.iter().map(|&i| fs.load(i).max(0.0)).sum();
    let lambda = two_row_lp(&u, &c, demand, y_kept)?;
    let mut beta = vec![0.0; b.len()];
    let mut open = Vec::new();
    for (k, &i) in kept.iter().enumerate() {
        if lambda[k] > 0.0 {
            open.push(i);
            beta[b.binary_search(&i).unwrap()] = lambda[k] * u[k];
        }
    }
    normalize_supply(&mut beta, x_bc)?;
    open.sort_unstable();
    let sol = LocalSolution { facilities: b.clone(), open, beta };
    let hi = fuzzy_ceil(y_b);
    if sol.size() < hi || sol.size() > hi + 1 {
        return Err(Error::invariant(STAGE, format!("{} open facilities for y_B = {y_b}", sol.size())));
    }
    for (k, &i) in b.iter().enumerate() {
        let open_i = sol.open.binary_search(&i).is_ok();
        if (!open_i && sol.beta[k] > CHECK_TOL) || sol.beta[k] > inst.capacity(i) as f64 * (1.0 + 1e-9) + CHECK_TOL {
            return Err(Error::invariant(STAGE, format!("facility {i} supply {} out of range", sol.beta[k])));
        }
    }
    if (sol.supply() - x_bc).abs() > CHECK_TOL * (1.0 + x_bc) {
        return Err(Error::invariant(STAGE, "non-concentrated supply differs from demand"));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Facility;
    use rand::SeedableRng;

    fn sol(facilities: &[usize], open: &[usize], beta: &[f64]) -> LocalSolution {
        LocalSolution { facilities: facilities.to_vec(), open: open.to_vec(), beta: beta.to_vec() }
    }

    fn line(fpos: &[f64], cpos: &[f64]) -> Instance {
        let fac = (0..fpos.len()).map(|i| Facility { id: format!("f{i}"), capacity: 2 }).collect();
        let cl = (0..cpos.len()).map(|j| format!("c{j}")).collect();
        let coords = fpos.iter().chain(cpos).map(|&p| [p, 0.0]).collect();
        Instance::with_coords(fac, cl, 1, coords).unwrap()
    }

    #[test]
    fn emd_examples() {
        let inst = line(&[0.0, 1.0, 3.0], &[0.0]);
        let plan = emd(&inst, &[0], &[2.0], &[1, 2], &[1.0, 1.0]).unwrap();
        assert!((plan.cost - 4.0).abs() < 1e-12);
        let plan = emd(&inst, &[0], &[1.0], &[0], &[1.0]).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert!(emd(&inst, &[0], &[3.0], &[1, 2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn massage_single_atom_is_identity() {
        let psi = vec![(1.0, sol(&[0, 1], &[0, 1], &[1.0, 1.0]))];
        let (out, ratio) = massage_distribution(&psi, 10.0, 30.0).unwrap();
        assert_eq!(out, psi);
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn massage_case_one_keeps_floor_atoms() {
        let psi = vec![(0.5, sol(&[0, 1], &[0], &[1.0, 0.0])), (0.5, sol(&[0, 1], &[0, 1], &[0.5, 0.5]))];
        let (out, ratio) = massage_distribution(&psi, 10.0, 30.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 1.0);
        assert_eq!(out[0].1.open, vec![0]);
        assert_eq!(ratio, 2.0);
    }

    #[test]
    fn massage_case_two_down_weights_ceiling() {
        let psi = vec![(0.05, sol(&[0, 1], &[0], &[1.0, 0.0])), (0.95, sol(&[0, 1], &[0, 1], &[0.5, 0.5]))];
        let (out, _) = massage_distribution(&psi, 10.0, 30.0).unwrap();
        assert_eq!(out.len(), 2);
        let e: f64 = out.iter().map(|(p, a)| p * a.size() as f64).sum();
        assert!(e <= 1.95 + 1e-9);
    }

    #[test]
    fn fuzzy_rounding() {
        assert_eq!(fuzzy_floor(2.9999999999), 3);
        assert_eq!(fuzzy_ceil(3.0000000001), 3);
        assert_eq!(fuzzy_floor(2.5), 2);
        assert_eq!(fuzzy_ceil(2.5), 3);
    }

    #[test]
    fn pad_reaches_target() {
        let atoms = vec![(1.0, sol(&[0, 1, 2], &[1], &[0.0, 1.0, 0.0]))];
        let out = pad_and_rebalance(atoms, 1.25);
        let e: f64 = out.iter().map(|(p, a)| p * a.size() as f64).sum();
        assert!((e - 1.25).abs() < 1e-12);
        assert_eq!(out[1].1.open, vec![0, 1]);
    }

    #[test]
    fn two_row_lp_vertex() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(2..9);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let demand: f64 = (0..n).map(|k| u[k] * y[k]).sum();
            let lambda = two_row_lp(&u, &c, demand, y.iter().sum()).unwrap();
            assert!(lambda.iter().filter(|&&v| v > 0.0 && v < 1.0).count() <= 2);
            let got: f64 = (0..n).map(|k| u[k] * lambda[k]).sum();
            assert!((got - demand).abs() < 1e-7);
        }
    }

    #[test]
    fn sampling_frequency() {
        let dist = LocalDistribution {
            facilities: vec![0, 1],
            atoms: vec![(0.25, sol(&[0, 1], &[0], &[1.0, 0.0])), (0.75, sol(&[0, 1], &[0, 1], &[0.5, 0.5]))],
            s: 1.75,
            diagnostics: Diagnostics::default(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| dist.atoms[dist.sample(&mut rng)].1.size() as f64).sum::<f64>() / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((mean - 1.75).abs() <= 3.0 * sigma);
    }
}
