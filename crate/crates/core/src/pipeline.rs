//! End-to-end driver: parameters, the cutting-plane loop around the
//! relaxation, and the rounding stages, with a serializable report.

use std::fmt::Write as _;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clustering::{ClusterStructure, Surrogates};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::localsol::{concentrated_distribution, emd, large_y_local, nonconcentrated_local, LocalDistribution, LocalSolution};
use crate::relaxation::{build_zeta, config_check, solve_relaxation, ConfigBlock, ConfigCheck, ConfigSystem, Derived, FractionalSolution, DEFAULT_BUDGET};
use crate::rounding::{
    assemble_initial, balance_sets, build_marginal_point, final_assignment, sample_vertex, IntegralSolution, MarginalLayout, Polytope, RoundState,
};

/// Derived parameters `ℓ`, `ℓ₁`, `ℓ₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Params {
    pub l: usize,
    pub l1: usize,
    pub l2: u64,
}

/// `ℓ = max(8, ⌈8/ε⌉)`, `ℓ₁ = 3ℓ`, `ℓ₂ = ℓ³`.
pub fn params_from_eps(eps: f64) -> Params {
    let l = ((8.0 / eps - 1e-9).ceil() as usize).max(8);
    Params { l, l1: 3 * l, l2: (l as u64).pow(3) }
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub eps: f64,
    pub l: Option<usize>,
    pub l1: Option<usize>,
    pub l2: Option<u64>,
    pub seed: u64,
    pub max_iters: usize,
    pub budget: usize,
    /// Treat components whose configuration check cannot be settled as
    /// non-concentrated instead of failing.
    pub fallback: bool,
    pub surrogates: Surrogates,
}

impl SolveConfig {
    pub fn new(eps: f64) -> Self {
        SolveConfig {
            eps,
            l: None,
            l1: None,
            l2: None,
            seed: 0,
            max_iters: 20,
            budget: DEFAULT_BUDGET,
            fallback: true,
            surrogates: Surrogates::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn params(&self) -> Params {
        let base = params_from_eps(self.eps);
        let l = self.l.unwrap_or(base.l);
        Params {
            l,
            l1: self.l1.unwrap_or(if self.l.is_some() { 3 * l } else { base.l1 }),
            l2: self.l2.unwrap_or(if self.l.is_some() { (l as u64).pow(3) } else { base.l2 }),
        }
    }

    /// Whether the capacity guarantee applies (no override below the default `ℓ`).
    pub fn guarantees_capacity(&self) -> bool {
        self.params().l >= params_from_eps(self.eps).l
    }
}

/// Cost components of the rounding analysis.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// `LP + Σ_i x_{i,C} d(i, v(i))`: moving every client's demand to the representatives.
    pub initial_move: f64,
    /// Sum of EMD values between final demands and supplies over all balance sets.
    pub emd: f64,
    /// Demand moved by removals.
    pub transfer: f64,
}

/// Per concentrated component measurements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentReport {
    pub component: usize,
    pub good_mass: f64,
    pub massage_ratio: f64,
    pub expected_emd: f64,
    pub d_b: f64,
    pub atoms: usize,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub eps: f64,
    pub seed: u64,
    pub params: Params,
    pub open: Vec<String>,
    pub assignment: Vec<String>,
    #[serde(skip)]
    pub solution: IntegralSolution,
    pub cost: f64,
    pub lp_value: f64,
    pub ratio: f64,
    pub violation: f64,
    pub iterations: usize,
    pub lp_history: Vec<f64>,
    /// Facility sets whose configuration check failed, per iteration.
    pub violated: Vec<Vec<Vec<String>>>,
    pub fallback_count: usize,
    pub breakdown: CostBreakdown,
    pub removals: usize,
    pub max_scaling: f64,
    pub components: usize,
    pub concentrated: usize,
    pub groups: usize,
    pub component_reports: Vec<ComponentReport>,
}

impl SolveReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "eps: {}", self.eps);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "l: {}", self.params.l);
        let _ = writeln!(s, "l1: {}", self.params.l1);
        let _ = writeln!(s, "l2: {}", self.params.l2);
        let _ = writeln!(s, "open: {}", self.open.join(" "));
        let _ = writeln!(s, "open_count: {}", self.open.len());
        let _ = writeln!(s, "cost: {:.9}", self.cost);
        let _ = writeln!(s, "lp_value: {:.9}", self.lp_value);
        let _ = writeln!(s, "ratio: {:.9}", self.ratio);
        let _ = writeln!(s, "violation: {:.9}", self.violation);
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let hist: Vec<String> = self.lp_history.iter().map(|v| format!("{v:.9}")).collect();
        let _ = writeln!(s, "lp_history: {}", hist.join(" "));
        let cuts: Vec<String> = self.violated.iter().map(|it| it.iter().map(|b| format!("{{{}}}", b.join(","))).collect::<Vec<_>>().join(" ")).collect();
        let _ = writeln!(s, "violated: {}", cuts.join(" | "));
        let _ = writeln!(s, "fallback_count: {}", self.fallback_count);
        let _ = writeln!(s, "initial_move: {:.9}", self.breakdown.initial_move);
        let _ = writeln!(s, "emd: {:.9}", self.breakdown.emd);
        let _ = writeln!(s, "transfer: {:.9}", self.breakdown.transfer);
        let _ = writeln!(s, "removals: {}", self.removals);
        let _ = writeln!(s, "max_scaling: {:.9}", self.max_scaling);
        let _ = writeln!(s, "components: {}", self.components);
        let _ = writeln!(s, "concentrated: {}", self.concentrated);
        let _ = writeln!(s, "groups: {}", self.groups);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Lines `<client id> <facility id>`.
    pub fn assignment_text(&self, inst: &Instance) -> String {
        let mut s = String::new();
        for (j, f) in self.assignment.iter().enumerate() {
            let _ = writeln!(s, "{} {}", inst.clients()[j], f);
        }
        s
    }
}

fn check_capacity(inst: &Instance, eps: f64) -> Result<()> {
    let total = inst.top_k_capacity(|u| ((1.0 + eps) * u as f64 - 1e-9).ceil() as u64);
    if total < inst.nc() as u64 {
        return Err(Error::Infeasible(format!(
            "the k largest relaxed capacities sum to {total} < {} clients",
            inst.nc()
        )));
    }
    Ok(())
}

/// Intermediate objects of one solve, for inspection.
#[derive(Clone, Debug)]
pub struct Trace {
    pub fs: FractionalSolution,
    pub der: Derived,
    pub cs: ClusterStructure,
    /// Local distribution per concentrated component.
    pub dists: Vec<Option<LocalDistribution>>,
    /// Local solution per non-concentrated region.
    pub locals: Vec<LocalSolution>,
    pub polytope: Polytope,
    pub layout: MarginalLayout,
    /// Marginal point `(ψ*, q*)` inside the polytope.
    pub point: Vec<f64>,
    pub vertex: Vec<f64>,
    /// State after the removal schedule.
    pub state: RoundState,
}

/// Runs every stage and returns the report.
pub fn solve(inst: &Instance, cfg: &SolveConfig) -> Result<SolveReport> {
    solve_traced(inst, cfg).map(|(r, _)| r)
}

/// Like [`solve`], also returning the intermediate objects.
pub fn solve_traced(inst: &Instance, cfg: &SolveConfig) -> Result<(SolveReport, Trace)> {
    if !(cfg.eps > 0.0 && cfg.eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {}", cfg.eps)));
    }
    if cfg.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    check_capacity(inst, cfg.eps)?;
    let params = cfg.params();
    let (l, l1, l2) = (params.l as f64, params.l1, params.l2 as f64);
    let mut systems: Vec<ConfigSystem> = Vec::new();
    let mut lp_history = Vec::new();
    let mut violated_history = Vec::new();
    let mut fallback_count = 0;
    let mut iterations = 0;
    let (fs, der, mut cs, blocks) = loop {
        iterations += 1;
        let (fs, der) = solve_relaxation(inst, &systems, cfg.budget)?;
        if let Some(&prev) = lp_history.last() {
            if der.lp_value < prev - 1e-6 * (1.0 + prev) {
                return Err(Error::invariant("pipeline", format!("master LP decreased from {prev} to {}", der.lp_value)));
            }
        }
        lp_history.push(der.lp_value);
        info!("iteration {iterations}: LP = {:.6}", der.lp_value);
        let mut cs = ClusterStructure::build(inst, &fs, &der, l, l2, &cfg.surrogates)?;
        let mut blocks: Vec<Option<ConfigBlock>> = vec![None; cs.components.len()];
        let mut violated = Vec::new();
        let mut demote = Vec::new();
        for c in 0..cs.components.len() {
            if !cs.concentrated[c] || cs.components[c].weight > 2.0 * l {
                continue;
            }
            let b = cs.components[c].facilities.clone();
            match config_check(inst, &fs, &b, l1, cfg.budget) {
                Ok(ConfigCheck::Feasible(block)) => blocks[c] = Some(block),
                Ok(ConfigCheck::Violated(v)) => {
                    debug!("component {c}: configuration check violated by {:.3e}", v.infeasibility);
                    if systems.iter().any(|s| s.facilities == b) {
                        demote.push(c);
                    } else {
                        violated.push(c);
                    }
                }
                Err(e @ Error::BudgetExceeded { .. }) => {
                    if !cfg.fallback {
                        return Err(e);
                    }
                    debug!("component {c}: {e}");
                    demote.push(c);
                }
                Err(e) => return Err(e),
            }
        }
        if !violated.is_empty() {
            violated_history.push(
                violated
                    .iter()
                    .map(|&c| cs.components[c].facilities.iter().map(|&i| inst.facilities()[i].id.clone()).collect())
                    .collect(),
            );
        }
        let last = iterations >= cfg.max_iters;
        if !violated.is_empty() && last {
            if !cfg.fallback {
                return Err(Error::Numerical(format!("configuration checks still violated after {iterations} iterations")));
            }
            demote.extend(violated.iter().copied());
            violated.clear();
        }
        if violated.is_empty() {
            demote.sort_unstable();
            for &c in &demote {
                cs.demote(c);
                blocks[c] = None;
            }
            fallback_count += demote.len();
            break (fs, der, cs, blocks);
        }
        for c in violated {
            systems.push(ConfigSystem::new(cs.components[c].facilities.clone(), l1));
        }
    };
    cs.rebuild_partitions();

    let mut dists: Vec<Option<LocalDistribution>> = vec![None; cs.components.len()];
    let mut reports = Vec::new();
    for c in 0..cs.components.len() {
        if !cs.concentrated[c] {
            continue;
        }
        let dist = if cs.components[c].weight > 2.0 * l {
            large_y_local(inst, &fs, &der, &cs, c)?
        } else {
            let block = blocks[c].as_ref().ok_or_else(|| Error::invariant("pipeline", format!("component {c} has no configuration values")))?;
            let zeta = build_zeta(block, inst.nc())?;
            concentrated_distribution(inst, &fs, &der, &cs, c, &zeta, l1 as f64)?
        };
        reports.push(ComponentReport {
            component: c,
            good_mass: dist.diagnostics.q,
            massage_ratio: dist.diagnostics.massage_ratio,
            expected_emd: dist.diagnostics.expected_emd,
            d_b: dist.diagnostics.d_b,
            atoms: dist.atoms.len(),
            s: dist.s,
        });
        dists[c] = Some(dist);
    }
    let locals = cs.vn.iter().map(|r| nonconcentrated_local(inst, &fs, &cs, r)).collect::<Result<Vec<_>>>()?;

    let (poly, layout, point) = build_marginal_point(&cs, &dists, &fs.y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vertex = sample_vertex(&poly, &point, &mut rng)?;
    let (mut state, q) = assemble_initial(inst, &cs, &dists, &layout, &vertex, &locals)?;
    state.run_schedule(inst, &cs, &q)?;
    let max_scaling = state.scaling.iter().copied().fold(1.0, f64::max);
    if cfg.guarantees_capacity() && l > 6.0 {
        let cap = (1.0 + 1.0 / (l - 6.0)).powi(6);
        if max_scaling > cap + 1e-9 {
            return Err(Error::invariant("pipeline", format!("supply scaled by {max_scaling} > {cap}")));
        }
    }
    let eps = if cfg.guarantees_capacity() { Some(cfg.eps) } else { None };
    let solution = final_assignment(inst, &state, eps)?;

    let initial_move = der.lp_value
        + (0..inst.nf())
            .map(|i| fs.load(i) * inst.fc(i, cs.reps.reps[cs.reps.bundle_of[i]]))
            .sum::<f64>();
    let emd_total = final_emd(inst, &cs, &state)?;
    let lp_value = der.lp_value;
    let report = SolveReport {
        eps: cfg.eps,
        seed: cfg.seed,
        params,
        open: solution.open.iter().map(|&i| inst.facilities()[i].id.clone()).collect(),
        assignment: solution.assignment.iter().map(|&i| inst.facilities()[i].id.clone()).collect(),
        cost: solution.cost,
        lp_value,
        ratio: solution.cost / lp_value.max(1e-9),
        violation: solution.max_violation,
        iterations,
        lp_history,
        violated: violated_history,
        fallback_count,
        breakdown: CostBreakdown { initial_move, emd: emd_total, transfer: state.transfer_cost },
        removals: state.ledger.len(),
        max_scaling,
        components: cs.components.len(),
        concentrated: cs.concentrated.iter().filter(|&&c| c).count(),
        groups: cs.groups.len(),
        component_reports: reports,
        solution,
    };
    info!("cost {:.6}, ratio {:.4}, violation {:.4}", report.cost, report.ratio, report.violation);
    let trace = Trace { fs, der, cs, dists, locals, polytope: poly, layout, point, vertex, state };
    Ok((report, trace))
}

fn final_emd(inst: &Instance, cs: &ClusterStructure, state: &RoundState) -> Result<f64> {
    let mut total = 0.0;
    for set in balance_sets(cs) {
        let clients: Vec<usize> = set.reps.iter().map(|&p| cs.reps.reps[p]).collect();
        let alpha: Vec<f64> = set.reps.iter().map(|&p| state.alpha[p]).collect();
        let beta: Vec<f64> = set.facilities.iter().map(|&i| state.beta[i]).collect();
        total += emd(inst, &clients, &alpha, &set.facilities, &beta)?.cost;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_euclidean, gen_gap_instance, Facility};

    #[test]
    fn params_examples() {
        assert_eq!(params_from_eps(1.0), Params { l: 8, l1: 24, l2: 512 });
        assert_eq!(params_from_eps(0.1), Params { l: 80, l1: 240, l2: 512_000 });
        assert_eq!(params_from_eps(0.5), Params { l: 16, l1: 48, l2: 4096 });
        let mut cfg = SolveConfig::new(1.0);
        cfg.l = Some(3);
        cfg.l1 = Some(7);
        cfg.l2 = Some(11);
        assert_eq!(cfg.params(), Params { l: 3, l1: 7, l2: 11 });
    }

    #[test]
    fn single_facility() {
        let fac = vec![Facility { id: "a".into(), capacity: 5 }];
        let cl: Vec<String> = (0..3).map(|j| format!("c{j}")).collect();
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 0.0]];
        let inst = Instance::with_coords(fac, cl, 1, coords).unwrap();
        let r = solve(&inst, &SolveConfig::new(1.0)).unwrap();
        assert_eq!(r.open, vec!["a".to_string()]);
        assert!((r.cost - 6.0).abs() < 1e-9);
        assert!((r.ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gap_instance_end_to_end() {
        let inst = gen_gap_instance(3, 1.0).unwrap();
        let r = solve(&inst, &SolveConfig::new(1.0).with_seed(7)).unwrap();
        assert!(r.open.len() <= 5);
        assert!(r.cost > 0.0);
        for &i in &r.solution.open {
            assert!(r.solution.loads[i] <= 6);
        }
        assert!(r.lp_history.len() >= 2);
        assert!(r.lp_value > 0.0);
    }

    #[test]
    fn random_instances_feasible() {
        for seed in 0..6 {
            let inst = gen_euclidean(6, 12, 3, 3, 6, seed).unwrap();
            for eps in [1.0, 0.5] {
                let r = solve(&inst, &SolveConfig::new(eps).with_seed(seed)).unwrap();
                assert!(r.open.len() <= inst.k());
                assert_eq!(r.assignment.len(), inst.nc());
            }
        }
    }

    #[test]
    fn small_l_exercises_deeper_structure() {
        let inst = gen_euclidean(10, 20, 5, 3, 6, 3).unwrap();
        let mut cfg = SolveConfig::new(1.0).with_seed(1);
        cfg.l = Some(2);
        let r = solve(&inst, &cfg).unwrap();
        assert!(r.open.len() <= inst.k());
        assert!(r.components >= 1);
    }
}
