//! Brute-force references used for verification: an exact solver over all
//! open sets and an LP-based earth mover distance.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::optcore::{lp_solve, LinearProgram, LpStatus, Relation};

/// Largest number of open sets the exact solver will enumerate.
pub const SUBSET_GUARD: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactResult {
    /// Open facility indices of the best set.
    pub open: Vec<usize>,
    /// Facility index per client.
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub feasible: bool,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Integral assignment of clients to `open` with the given caps, by the
/// transportation LP. `None` when the caps cannot hold every client.
fn assign_lp(inst: &Instance, open: &[usize], caps: &[f64]) -> Result<Option<(f64, Vec<usize>)>> {
    let nc = inst.nc();
    let mut lp = LinearProgram::new();
    for j in 0..nc {
        for &i in open {
            lp.add_var(inst.fc(i, j), 0.0, 1.0);
        }
    }
    let w = open.len();
    for j in 0..nc {
        lp.add_row((0..w).map(|c| (j * w + c, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for c in 0..w {
        lp.add_row((0..nc).map(|j| (j * w + c, 1.0)).collect(), Relation::Le, caps[c]);
    }
    let res = lp_solve(&lp)?;
    match res.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        s => return Err(Error::Numerical(format!("assignment LP ended with {s:?}"))),
    }
    let mut assignment = Vec::with_capacity(nc);
    for j in 0..nc {
        let c = (0..w)
            .find(|&c| res.x[j * w + c] > 0.5)
            .ok_or_else(|| Error::Numerical(format!("fractional assignment of client {j}")))?;
        if (0..w).any(|c| (res.x[j * w + c] - res.x[j * w + c].round()).abs() > 1e-6) {
            return Err(Error::Numerical(format!("fractional assignment of client {j}")));
        }
        assignment.push(open[c]);
    }
    let cost = assignment.iter().enumerate().map(|(j, &i)| inst.fc(i, j)).sum();
    Ok(Some((cost, assignment)))
}

/// Exact optimum with caps `⌊cap_scale · u_i⌋`, over all sets of
/// `min(k, |F|)` facilities in lexicographic order.
pub fn exact_solve(inst: &Instance, cap_scale: f64) -> Result<ExactResult> {
    if !(cap_scale >= 1.0) {
        return Err(Error::InvalidInput(format!("cap_scale must be at least 1, got {cap_scale}")));
    }
    let nf = inst.nf();
    let k = inst.k().min(nf);
    let count = binomial(nf, k);
    if count > SUBSET_GUARD {
        return Err(Error::InvalidInput(format!("{count} open sets exceed the guard of {SUBSET_GUARD}")));
    }
    let cap: Vec<f64> = (0..nf).map(|i| (cap_scale * inst.capacity(i) as f64 + 1e-9).floor()).collect();
    let mut best = ExactResult { open: Vec::new(), assignment: Vec::new(), cost: f64::INFINITY, feasible: false };
    let mut set: Vec<usize> = (0..k).collect();
    loop {
        let total: f64 = set.iter().map(|&i| cap[i]).sum();
        if total >= inst.nc() as f64 {
            let bound: f64 = (0..inst.nc())
                .map(|j| set.iter().map(|&i| inst.fc(i, j)).fold(f64::INFINITY, f64::min))
                .sum();
            if bound < best.cost - 1e-12 {
                let caps: Vec<f64> = set.iter().map(|&i| cap[i]).collect();
                if let Some((cost, assignment)) = assign_lp(inst, &set, &caps)? {
                    if cost < best.cost - 1e-12 {
                        best = ExactResult { open: set.clone(), assignment, cost, feasible: true };
                    }
                }
            }
        }
        let Some(pos) = (0..k).rev().find(|&p| set[p] < nf - k + p) else { break };
        set[pos] += 1;
        for p in pos + 1..k {
            set[p] = set[p - 1] + 1;
        }
    }
    Ok(best)
}

/// Earth mover distance by the explicit transportation LP.
pub fn reference_emd(inst: &Instance, reps: &[usize], alpha: &[f64], facilities: &[usize], beta: &[f64]) -> Result<f64> {
    let total_a: f64 = alpha.iter().sum();
    let total_b: f64 = beta.iter().sum();
    if total_a > total_b + 1e-9 * total_b.max(1.0) {
        return Err(Error::Infeasible(format!("demand {total_a} exceeds supply {total_b}")));
    }
    let w = facilities.len();
    let mut lp = LinearProgram::new();
    for &v in reps {
        for &i in facilities {
            lp.add_var(inst.fc(i, v), 0.0, f64::INFINITY);
        }
    }
    for (r, &a) in alpha.iter().enumerate() {
        lp.add_row((0..w).map(|c| (r * w + c, 1.0)).collect(), Relation::Eq, a.min(a * total_b / total_a.max(total_b)));
    }
    for (c, &b) in beta.iter().enumerate() {
        lp.add_row((0..reps.len()).map(|r| (r * w + c, 1.0)).collect(), Relation::Le, b);
    }
    let res = lp_solve(&lp)?;
    if !res.is_optimal() {
        return Err(Error::Numerical(format!("reference EMD LP ended with {:?}", res.status)));
    }
    Ok(res.objective)
}
