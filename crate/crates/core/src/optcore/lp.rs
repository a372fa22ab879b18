//! Bounded primal simplex on a dense tableau.
//!
//! Variables carry finite lower bounds and optional upper bounds. Every row gets
//! one logical column; rows whose logical cannot start basic feasibly get an
//! artificial column and go through a phase-one pass. Pricing is Dantzig's rule
//! until a run of degenerate pivots is seen, after which Bland's rule takes over
//! for the rest of the phase, so the method always terminates.

use crate::error::{Error, Result};
use crate::tol;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 40;
/// Fewest pivots between two refactorizations of the tableau.
const REINVERT_MIN: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A minimization problem `min c·x` subject to linear rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lo, hi]`; `hi` may be `f64::INFINITY`.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.costs.len() - 1
    }

    /// Adds a row given as sparse `(variable, coefficient)` pairs.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    /// Adds a row given as a dense coefficient vector of length `num_vars()`.
    pub fn add_dense_row(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) -> Result<usize> {
        if coeffs.len() != self.num_vars() {
            return Err(Error::InvalidInput(format!(
                "row has {} coefficients, problem has {} variables",
                coeffs.len(),
                self.num_vars()
            )));
        }
        let sparse = coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| (j, *a))
            .collect();
        Ok(self.add_row(sparse, relation, rhs))
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    pub fn set_relation(&mut self, row: usize, relation: Relation) {
        self.rows[row].relation = relation;
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let lhs = row_value(row, x);
            let gap = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if !lo.is_finite() || hi.is_nan() || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!(
                    "variable {j} has bounds [{lo}, {hi}]; lower bounds must be finite"
                )));
            }
            if !self.costs[j].is_finite() {
                return Err(Error::InvalidInput(format!("variable {j} has a non-finite cost")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("row {r} has a non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "row {r} references variable {j} with coefficient {a}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn row_value(row: &Row, x: &[f64]) -> f64 {
    row.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`lp_solve`].
///
/// `basis` lists the basic columns of the final tableau: indices below
/// `num_vars` are structural variables, `num_vars + r` is the logical of row `r`.
/// `duals` satisfy `c_j - Σ_r duals[r]·a_rj ≥ 0` at a lower bound and `≤ 0` at an
/// upper bound.
#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<usize>,
    pub duals: Vec<f64>,
}

impl LpResult {
    fn status_only(status: LpStatus, n: usize, m: usize) -> Self {
        LpResult {
            status,
            x: vec![0.0; n],
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            basis: Vec::new(),
            duals: vec![0.0; m],
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Logical,
    Artificial,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Dense B⁻¹A, row-major.
    t: Vec<f64>,
    beta: Vec<f64>,
    width: Vec<f64>,
    kind: Vec<Kind>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    d: Vec<f64>,
    /// Standard-form columns and right-hand side, for refactorization.
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    /// Costs of the current phase.
    cost: Vec<f64>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn row(&self, r: usize) -> &[f64] {
        &self.t[r * self.ncols..(r + 1) * self.ncols]
    }

    fn reset_costs(&mut self, c: &[f64]) {
        self.cost.copy_from_slice(c);
        self.d.copy_from_slice(c);
        for r in 0..self.m {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let row = r * self.ncols;
                for j in 0..self.ncols {
                    self.d[j] -= cb * self.t[row + j];
                }
            }
        }
        for r in 0..self.m {
            self.d[self.basis[r]] = 0.0;
        }
    }

    fn pivot(&mut self, pr: usize, q: usize) {
        let n = self.ncols;
        let piv = self.t[pr * n + q];
        let inv = 1.0 / piv;
        for j in 0..n {
            self.t[pr * n + j] *= inv;
        }
        self.t[pr * n + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(pr * n);
        let (prow, after) = rest.split_at_mut(n);
        for chunk in before.chunks_mut(n).chain(after.chunks_mut(n)) {
            let f = chunk[q];
            if f != 0.0 {
                for (x, p) in chunk.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                chunk[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (x, p) in self.d.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[pr];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[pr] = q;
    }

    /// Rebuilds `B⁻¹A`, the basic values and the reduced costs from a fresh
    /// factorization of the current basis. Returns the largest bound violation
    /// of the basic values before clamping, or `None` on a singular basis.
    fn reinvert(&mut self) -> Option<f64> {
        let (m, n) = (self.m, self.ncols);
        if m == 0 {
            return Some(0.0);
        }
        let mut bmat = vec![0.0; m * m];
        for (k, &c) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[c] {
                bmat[r * m + k] = a;
            }
        }
        let lu = DenseLu::factor(bmat, m)?;
        let mut dense = vec![0.0; m];
        for j in 0..n {
            if self.is_basic[j] {
                continue;
            }
            dense.fill(0.0);
            for &(r, a) in &self.cols[j] {
                dense[r] = a;
            }
            let col = lu.solve(&dense);
            for r in 0..m {
                self.t[r * n + j] = if col[r].abs() < 1e-14 { 0.0 } else { col[r] };
            }
        }
        for (k, &c) in self.basis.iter().enumerate() {
            for r in 0..m {
                self.t[r * n + c] = if r == k { 1.0 } else { 0.0 };
            }
        }
        let mut b = self.rhs.clone();
        for j in 0..n {
            if !self.is_basic[j] && self.at_upper[j] {
                for &(r, a) in &self.cols[j] {
                    b[r] -= a * self.width[j];
                }
            }
        }
        let beta = lu.solve(&b);
        let mut worst = 0.0f64;
        for (k, &c) in self.basis.iter().enumerate() {
            worst = worst.max(-beta[k]).max(beta[k] - self.width[c]);
            self.beta[k] = beta[k].clamp(0.0, self.width[c]);
        }
        let cost = self.cost.clone();
        self.reset_costs(&cost);
        Some(worst)
    }

    fn run(&mut self, allow: &dyn Fn(usize) -> bool, max_iter: usize) -> Result<PhaseEnd> {
        let mut bland = false;
        let mut streak = 0usize;
        let period = REINVERT_MIN.max(self.m / 2);
        let mut since = 0usize;
        let mut refreshed = false;
        for _ in 0..max_iter {
            if since >= period {
                let _ = self.reinvert();
                since = 0;
            }
            let mut q = usize::MAX;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if self.is_basic[j] || !allow(j) || self.width[j] <= 0.0 {
                    continue;
                }
                let dj = self.d[j];
                let score = if self.at_upper[j] { dj } else { -dj };
                if score > COST_TOL {
                    if bland {
                        q = j;
                        break;
                    }
                    if score > best {
                        best = score;
                        q = j;
                    }
                }
            }
            if q == usize::MAX {
                if since > 0 && !refreshed && self.reinvert().is_some() {
                    refreshed = true;
                    since = 0;
                    continue;
                }
                return Ok(PhaseEnd::Optimal);
            }
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let mut t_best = f64::INFINITY;
            let mut leave = usize::MAX;
            let mut leave_alpha = 0.0;
            for r in 0..self.m {
                let alpha = self.t[r * self.ncols + q] * dir;
                let b = self.basis[r];
                let t = if alpha > PIVOT_TOL {
                    (self.beta[r] / alpha).max(0.0)
                } else if alpha < -PIVOT_TOL && self.width[b].is_finite() {
                    ((self.width[b] - self.beta[r]) / -alpha).max(0.0)
                } else {
                    continue;
                };
                let better = if leave == usize::MAX || t < t_best - 1e-12 {
                    true
                } else if t <= t_best + 1e-12 {
                    if bland {
                        b < self.basis[leave]
                    } else {
                        alpha.abs() > leave_alpha
                    }
                } else {
                    false
                };
                if better {
                    t_best = t;
                    leave = r;
                    leave_alpha = alpha.abs();
                }
            }
            let flip = self.width[q];
            if leave == usize::MAX && !flip.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }
            if leave == usize::MAX || flip <= t_best {
                let delta = dir * flip;
                for r in 0..self.m {
                    let a = self.t[r * self.ncols + q];
                    if a != 0.0 {
                        self.beta[r] -= a * delta;
                    }
                }
                self.at_upper[q] = !self.at_upper[q];
                streak = 0;
                continue;
            }
            let delta = dir * t_best;
            for r in 0..self.m {
                let a = self.t[r * self.ncols + q];
                if a != 0.0 {
                    self.beta[r] -= a * delta;
                }
            }
            let entering_value = if self.at_upper[q] { self.width[q] } else { 0.0 } + delta;
            let out = self.basis[leave];
            let alpha = self.t[leave * self.ncols + q] * dir;
            self.at_upper[out] = alpha < 0.0;
            self.pivot(leave, q);
            self.beta[leave] = entering_value;
            self.at_upper[q] = false;
            since += 1;
            if t_best < 1e-12 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

/// Solves `lp` and returns an optimal basic solution, or reports infeasibility or
/// unboundedness.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpResult> {
    solve_from(lp, None)
}

/// Like [`lp_solve`], starting phase two from `basis` (numbered as
/// [`LpResult::basis`]) when it is a primal feasible basis of `lp`. Falls back
/// to a cold start otherwise.
pub fn lp_solve_warm(lp: &LinearProgram, basis: &[usize]) -> Result<LpResult> {
    solve_from(lp, Some(basis))
}

fn solve_from(lp: &LinearProgram, warm: Option<&[usize]>) -> Result<LpResult> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_rows();
    for j in 0..n {
        if lp.upper[j] < lp.lower[j] - tol::FEAS {
            return Ok(LpResult::status_only(LpStatus::Infeasible, n, m));
        }
    }
    let width: Vec<f64> = (0..n).map(|j| (lp.upper[j] - lp.lower[j]).max(0.0)).collect();
    let mut rhs = Vec::with_capacity(m);
    for row in &lp.rows {
        let shift: f64 = row.coeffs.iter().map(|&(j, a)| a * lp.lower[j]).sum();
        rhs.push(row.rhs - shift);
    }

    // Column layout: structurals, one logical per row, then artificials.
    let mut kind = vec![Kind::Structural; n];
    let mut col_width = width.clone();
    let mut logical_sign = vec![0.0; m];
    for (r, row) in lp.rows.iter().enumerate() {
        kind.push(Kind::Logical);
        let (sign, w) = match row.relation {
            Relation::Le => (1.0, f64::INFINITY),
            Relation::Ge => (-1.0, f64::INFINITY),
            Relation::Eq => (1.0, 0.0),
        };
        logical_sign[r] = sign;
        col_width.push(w);
    }
    let mut start_col = vec![0usize; m];
    let mut art_sign = Vec::new();
    let mut art_row = Vec::new();
    for r in 0..m {
        let b = rhs[r];
        let logical_ok = match lp.rows[r].relation {
            Relation::Le => b >= 0.0,
            Relation::Ge => b <= 0.0,
            Relation::Eq => b == 0.0,
        };
        if logical_ok {
            start_col[r] = n + r;
        } else {
            start_col[r] = n + m + art_sign.len();
            art_sign.push(if b >= 0.0 { 1.0 } else { -1.0 });
            art_row.push(r);
            kind.push(Kind::Artificial);
            col_width.push(f64::INFINITY);
        }
    }
    let ncols = n + m + art_sign.len();

    // Standard-form matrix in column-sparse form, kept for refinement.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    for (r, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                cols[j].push((r, a));
            }
        }
        cols[n + r].push((r, logical_sign[r]));
    }
    for (k, (&r, &s)) in art_row.iter().zip(&art_sign).enumerate() {
        cols[n + m + k].push((r, s));
    }
    for col in cols.iter_mut().take(n) {
        col.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for &(r, a) in col.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += a,
                _ => merged.push((r, a)),
            }
        }
        *col = merged;
    }

    // Initial tableau: the starting basis matrix is diagonal with entries ±1.
    let mut t = vec![0.0; m * ncols];
    let mut beta = vec![0.0; m];
    for r in 0..m {
        let bc = start_col[r];
        let sign = cols[bc][0].1;
        beta[r] = rhs[r] * sign;
    }
    for (j, col) in cols.iter().enumerate() {
        for &(r, a) in col {
            let sign = cols[start_col[r]][0].1;
            t[r * ncols + j] += a * sign;
        }
    }
    let mut is_basic = vec![false; ncols];
    for &c in &start_col {
        is_basic[c] = true;
    }
    let mut tab = Tableau {
        m,
        ncols,
        t,
        beta,
        width: col_width,
        kind,
        basis: start_col,
        at_upper: vec![false; ncols],
        is_basic,
        d: vec![0.0; ncols],
        cols,
        rhs: rhs.clone(),
        cost: vec![0.0; ncols],
    };
    let max_iter = 50 * (m + ncols) + 1000;
    let mut c2 = vec![0.0; ncols];
    c2[..n].copy_from_slice(&lp.costs);
    let artificial_start = n + m;

    if let Some(hint) = warm {
        let mut seen = vec![false; ncols];
        let valid = hint.len() == m && hint.iter().all(|&c| c < artificial_start && !std::mem::replace(&mut seen[c], true));
        if valid {
            let mut warm_tab = Tableau {
                basis: hint.to_vec(),
                is_basic: seen,
                at_upper: vec![false; ncols],
                t: tab.t.clone(),
                beta: tab.beta.clone(),
                width: tab.width.clone(),
                kind: tab.kind.clone(),
                d: tab.d.clone(),
                cols: tab.cols.clone(),
                rhs: tab.rhs.clone(),
                cost: c2.clone(),
                m,
                ncols,
            };
            for w in warm_tab.width.iter_mut().skip(artificial_start) {
                *w = 0.0;
            }
            let scale = 1.0 + rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if warm_tab.reinvert().is_some_and(|v| v <= tol::FEAS * scale) {
                match warm_tab.run(&|j| j < artificial_start, max_iter)? {
                    PhaseEnd::Unbounded => return Ok(LpResult::status_only(LpStatus::Unbounded, n, m)),
                    PhaseEnd::Optimal => return refine(lp, &warm_tab, &warm_tab.cols, &rhs, &c2),
                }
            }
        }
    }

    if !art_sign.is_empty() {
        let mut c1 = vec![0.0; ncols];
        for c in c1.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        tab.reset_costs(&c1);
        tab.run(&|_| true, max_iter)?;
        let infeas: f64 = (0..m)
            .filter(|&r| tab.kind[tab.basis[r]] == Kind::Artificial)
            .map(|r| tab.beta[r])
            .sum();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > tol::FEAS * scale {
            return Ok(LpResult::status_only(LpStatus::Infeasible, n, m));
        }
        for j in n + m..ncols {
            tab.width[j] = 0.0;
            tab.at_upper[j] = false;
        }
        for r in 0..m {
            if tab.kind[tab.basis[r]] != Kind::Artificial {
                continue;
            }
            let row = tab.row(r);
            let mut best = usize::MAX;
            let mut best_abs = PIVOT_TOL * 1e3;
            for j in 0..n + m {
                if !tab.is_basic[j] && row[j].abs() > best_abs {
                    best_abs = row[j].abs();
                    best = j;
                }
            }
            if best != usize::MAX {
                let value = if tab.at_upper[best] { tab.width[best] } else { 0.0 };
                tab.pivot(r, best);
                tab.beta[r] = value;
                tab.at_upper[best] = false;
            }
        }
    }

    tab.reset_costs(&c2);
    match tab.run(&|j| j < artificial_start, max_iter)? {
        PhaseEnd::Unbounded => return Ok(LpResult::status_only(LpStatus::Unbounded, n, m)),
        PhaseEnd::Optimal => {}
    }

    refine(lp, &tab, &tab.cols, &rhs, &c2)
}

/// Recomputes the vertex and the duals from the final basis with a fresh dense
/// factorization, then checks the residual against the original rows.
fn refine(
    lp: &LinearProgram,
    tab: &Tableau,
    cols: &[Vec<(usize, f64)>],
    rhs: &[f64],
    cost: &[f64],
) -> Result<LpResult> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let mut value = vec![0.0; tab.ncols];
    for j in 0..tab.ncols {
        if !tab.is_basic[j] && tab.at_upper[j] {
            value[j] = tab.width[j];
        }
    }
    let mut b = rhs.to_vec();
    for j in 0..tab.ncols {
        if value[j] != 0.0 {
            for &(r, a) in &cols[j] {
                b[r] -= a * value[j];
            }
        }
    }
    let mut xb = tab.beta.clone();
    let mut duals = vec![0.0; m];
    if m > 0 {
        let mut bmat = vec![0.0; m * m];
        for (k, &c) in tab.basis.iter().enumerate() {
            for &(r, a) in &cols[c] {
                bmat[r * m + k] = a;
            }
        }
        let lu = DenseLu::factor(bmat, m)
            .ok_or_else(|| Error::Numerical("singular basis during refinement".into()))?;
        xb = lu.solve(&b);
        let cb: Vec<f64> = tab.basis.iter().map(|&c| cost[c]).collect();
        duals = lu.solve_transpose(&cb);
    }
    for (k, &c) in tab.basis.iter().enumerate() {
        let mut v = xb[k];
        if v < 0.0 && v > -tol::FEAS {
            v = 0.0;
        }
        if tab.width[c].is_finite() && v > tab.width[c] && v < tab.width[c] + tol::FEAS {
            v = tab.width[c];
        }
        value[c] = v;
    }
    let x: Vec<f64> = (0..n).map(|j| lp.lower[j] + value[j]).collect();
    let residual = lp.max_violation(&x);
    if residual > tol::RESIDUAL_FAIL {
        return Err(Error::Numerical(format!(
            "residual {residual:.3e} after refinement"
        )));
    }
    let objective = lp.objective_at(&x);
    Ok(LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
        basis: tab.basis.clone(),
        duals,
    })
}

/// Dense LU factorization with partial pivoting.
pub(crate) struct DenseLu {
    lu: Vec<f64>,
    perm: Vec<usize>,
    n: usize,
}

impl DenseLu {
    pub(crate) fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-13 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f != 0.0 {
                    a[i * n + k] = f;
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                } else {
                    a[i * n + k] = 0.0;
                }
            }
        }
        Some(DenseLu { lu: a, perm, n })
    }

    /// Solves `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ y = c`.
    pub(crate) fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = c.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * z[j];
            }
            z[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i] * z[j];
            }
            z[i] = s;
        }
        let mut y = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = z[k];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Relation::Ge, 3.0);
        lp.add_row(vec![(x, 1.0)], Relation::Le, 10.0);
        let res = lp_solve(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.x[0] - 3.0).abs() < 1e-12);
        assert!((res.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_region_is_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Relation::Le, -1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn upper_bounds_and_equalities() {
        // max x + 2y s.t. x + y = 1.5, x,y in [0,1]  ->  y = 1, x = 0.5
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, 1.0);
        let y = lp.add_var(-2.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.5);
        let res = lp_solve(&lp).unwrap();
        assert!((res.x[0] - 0.5).abs() < 1e-12 && (res.x[1] - 1.0).abs() < 1e-12);
        assert!((res.objective + 2.5).abs() < 1e-12);
        // dual of the equality: reduced cost of x (basic) is zero
        assert!((res.duals[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn nonzero_lower_bounds_shift() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 2.0, 5.0);
        let y = lp.add_var(1.0, -1.0, 4.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 4.0);
        let res = lp_solve(&lp).unwrap();
        assert!((res.objective - 4.0).abs() < 1e-9);
        assert!(lp.max_violation(&res.x) < 1e-9);
    }

    #[test]
    fn dense_row_length_checked() {
        let mut lp = LinearProgram::new();
        lp.add_var(0.0, 0.0, 1.0);
        assert!(lp.add_dense_row(&[1.0, 2.0], Relation::Le, 1.0).is_err());
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(2.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 2.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], Relation::Eq, 4.0);
        let res = lp_solve(&lp).unwrap();
        assert!((res.objective - 2.0).abs() < 1e-9);
    }
}
