//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use capkm::cli::{bench_suite, evaluate, BenchRow};
use capkm::clustering::{check_components, check_groups, check_representatives, Surrogates};
use capkm::instance::{gen_euclidean, gen_gap_instance, gen_suite_instance, Instance};
use capkm::localsol::{emd, fuzzy_ceil, fuzzy_floor, LocalDistribution};
use capkm::optcore::{lp_solve, transport_solve, LinearProgram, Relation, TransportProblem};
use capkm::oracle::{exact_solve, reference_emd};
use capkm::pipeline::{solve, solve_traced, SolveConfig, SolveReport, Trace};
use capkm::relaxation::{solve_relaxation, DEFAULT_BUDGET};
use capkm::rounding::{sample_vertex, Polytope, RangeRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random instances in the feasibility battery (each solved at both ε).
const SUITE: u64 = 100;
const EPSILONS: [f64; 2] = [1.0, 0.5];
const RUNTIME_LIMIT: Duration = Duration::from_secs(300);
const GAP_LP_TOL: f64 = 1e-7;
const BOUND_TOL: f64 = 1e-6;
const LEMMA_TOL: f64 = 1e-7;
const DIST_TOL: f64 = 1e-7;
const SAMPLES: usize = 10_000;
const SIGMAS: f64 = 3.0;
const KERNEL_TOL: f64 = 1e-6;
const BALANCE_TOL: f64 = 1e-7;
const REGRESSION: f64 = 1.10;
/// ℓ overrides that reach removals and deeper clustering at desk scale.
const SMALL_L: [usize; 2] = [2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], summary: String) -> Outcome {
    match failures.first() {
        None => Outcome { pass: true, detail: summary },
        Some(first) => Outcome { pass: false, detail: format!("{summary}; {} failures, first: {first}", failures.len()) },
    }
}

struct Run {
    inst: Instance,
    seed: u64,
    eps: f64,
    l: Option<usize>,
    report: SolveReport,
    trace: Trace,
}

/// Solves the suite at default parameters and with small ℓ overrides.
fn run_suite() -> (Vec<Run>, Vec<String>, Duration) {
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    let start = Instant::now();
    for seed in 0..SUITE {
        let inst = gen_suite_instance(seed).expect("suite instance");
        for eps in EPSILONS {
            match solve_traced(&inst, &SolveConfig::new(eps).with_seed(seed)) {
                Ok((report, trace)) => runs.push(Run { inst: inst.clone(), seed, eps, l: None, report, trace }),
                Err(e) => errors.push(format!("seed {seed} eps {eps}: {e}")),
            }
        }
    }
    let elapsed = start.elapsed();
    for seed in 0..SUITE {
        let inst = gen_suite_instance(seed).expect("suite instance");
        for (l, eps) in SMALL_L.into_iter().flat_map(|l| EPSILONS.map(|e| (l, e))) {
            let mut cfg = SolveConfig::new(eps).with_seed(seed);
            cfg.l = Some(l);
            match solve_traced(&inst, &cfg) {
                Ok((report, trace)) => runs.push(Run { inst: inst.clone(), seed, eps, l: Some(l), report, trace }),
                Err(e) => errors.push(format!("seed {seed} eps {eps} l {l}: {e}")),
            }
        }
    }
    (runs, errors, elapsed)
}

fn relaxed_cap(u: u32, eps: f64) -> usize {
    ((1.0 + eps) * u as f64 - 1e-9).ceil() as usize
}

fn feasibility(runs: &[Run], errors: &[String], elapsed: Duration) -> Outcome {
    let mut failures: Vec<String> = errors.iter().filter(|e| !e.contains(" l ")).cloned().collect();
    let mut solved = 0;
    for r in runs.iter().filter(|r| r.l.is_none()) {
        solved += 1;
        let (inst, sol) = (&r.inst, &r.report.solution);
        let tag = format!("seed {} eps {}", r.seed, r.eps);
        if sol.open.len() > inst.k() {
            failures.push(format!("{tag}: {} open > k = {}", sol.open.len(), inst.k()));
        }
        if sol.assignment.len() != inst.nc() || r.report.assignment.len() != inst.nc() {
            failures.push(format!("{tag}: {} assignments for {} clients", sol.assignment.len(), inst.nc()));
        }
        let mut loads = vec![0usize; inst.nf()];
        for &i in &sol.assignment {
            loads[i] += 1;
            if !sol.open.contains(&i) {
                failures.push(format!("{tag}: client served by closed facility {i}"));
            }
        }
        for (i, &load) in loads.iter().enumerate() {
            if load > relaxed_cap(inst.capacity(i), r.eps) {
                failures.push(format!("{tag}: facility {i} load {load} > cap {}", relaxed_cap(inst.capacity(i), r.eps)));
            }
        }
        if let Err(e) = evaluate(inst, &r.report.assignment_text(inst), r.eps) {
            failures.push(format!("{tag}: eval rejects the assignment: {e}"));
        }
    }
    if elapsed > RUNTIME_LIMIT {
        failures.push(format!("runtime {:.1}s over {}s", elapsed.as_secs_f64(), RUNTIME_LIMIT.as_secs()));
    }
    outcome(&failures, format!("{solved} solves in {:.1}s", elapsed.as_secs_f64()))
}

fn gap_reproduction() -> Outcome {
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for u in [2u32, 3, 4] {
        let inst = gen_gap_instance(u, 1.0).expect("gap instance");
        let (_, der) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).expect("basic LP");
        let opt = exact_solve(&inst, 1.0).expect("oracle");
        if der.lp_value.abs() > GAP_LP_TOL {
            failures.push(format!("u={u}: LP {}", der.lp_value));
        }
        if !opt.feasible || (opt.cost - (u - 1) as f64).abs() > 1e-9 {
            failures.push(format!("u={u}: OPT {} != {}", opt.cost, u - 1));
        }
        parts.push(format!("u={u} LP={:.1e} OPT={}", der.lp_value, opt.cost));
    }
    outcome(&failures, parts.join(", "))
}

fn relaxation_bound(opts: &HashMap<u64, f64>) -> Outcome {
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    for (&seed, &opt) in opts {
        let inst = gen_suite_instance(seed).expect("suite instance");
        let (_, der) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).expect("basic LP");
        worst = worst.min(opt - der.lp_value);
        if der.lp_value > opt + BOUND_TOL {
            failures.push(format!("seed {seed}: LP {} > OPT {opt}", der.lp_value));
        }
    }
    outcome(&failures, format!("{} instances, min OPT-LP = {worst:.3e}", opts.len()))
}

fn clustering_suite(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let s = Surrogates::default();
    let (mut comps, mut groups) = (0, 0);
    for r in runs {
        let (inst, tr) = (&r.inst, &r.trace);
        let cs = &tr.cs;
        let tag = format!("seed {} eps {} l {:?}", r.seed, r.eps, r.l);
        let checks = [
            ("representatives", check_representatives(inst, &tr.fs, &tr.der, &cs.reps)),
            ("components", check_components(inst, &cs.reps, &cs.components, cs.l, &s)),
            ("groups", check_groups(inst, &cs.reps, &cs.components, &cs.groups, cs.l, &s)),
        ];
        for (name, res) in checks {
            if let Err(e) = res {
                failures.push(format!("{tag}: {name}: {e}"));
            }
        }
        let scale = inst.metric().iter().fold(1.0f64, |m, &d| m.max(d));
        for (c, comp) in cs.components.iter().enumerate() {
            if comp.l.is_finite() {
                let lhs = comp.l * cs.pi[c];
                let rhs = 10.0 * tr.der.d_set(&comp.facilities);
                if lhs > rhs + LEMMA_TOL * scale * (1.0 + lhs) {
                    failures.push(format!("{tag}: component {c}: L*pi = {lhs} > 10 D = {rhs}"));
                }
            }
        }
        comps += cs.components.len();
        groups += cs.groups.len();
    }
    outcome(&failures, format!("{} builds, {comps} components, {groups} groups", runs.len()))
}

fn distribution_ok(dist: &LocalDistribution, inst: &Instance, tr: &Trace, c: usize) -> Result<(), String> {
    let cs = &tr.cs;
    let b = &cs.components[c].facilities;
    let (y_b, x_bc, l) = (tr.fs.y_set(b), tr.fs.x_set(b), cs.l);
    // (e) a probability distribution.
    if dist.atoms.iter().any(|(p, _)| *p < 0.0) || (dist.total_probability() - 1.0).abs() > 1e-9 {
        return Err(format!("probabilities sum to {}", dist.total_probability()));
    }
    // (a) s range.
    let s = dist.expected_size();
    let upper = if cs.components[c].weight > 2.0 * l {
        y_b
    } else if x_bc > 0.0 {
        y_b * (1.0 + 2.0 * l * cs.pi[c] / x_bc)
    } else {
        y_b
    };
    if (s - dist.s).abs() > DIST_TOL || s < y_b - DIST_TOL || s > upper.max(y_b) + DIST_TOL {
        return Err(format!("s = {s} outside [{y_b}, {upper}]"));
    }
    let (lo, hi) = (fuzzy_floor(dist.s), fuzzy_ceil(dist.s));
    for (_, atom) in &dist.atoms {
        // (b) sizes.
        if atom.size() != lo && atom.size() != hi {
            return Err(format!("atom of size {} with s = {}", atom.size(), dist.s));
        }
        // (c) supplies.
        for (k, &i) in atom.facilities.iter().enumerate() {
            let beta = atom.beta[k];
            let open = atom.open.binary_search(&i).is_ok();
            if beta < -DIST_TOL || (!open && beta > DIST_TOL) || beta > inst.capacity(i) as f64 / (1.0 - 1.0 / l) + DIST_TOL {
                return Err(format!("facility {i}: supply {beta}, open {open}"));
            }
        }
        // (d) total supply.
        if (atom.supply() - x_bc).abs() > DIST_TOL * (1.0 + x_bc) {
            return Err(format!("supply {} != x_BC {x_bc}", atom.supply()));
        }
    }
    Ok(())
}

fn distributions(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let (mut count, mut sampled) = (0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for r in runs {
        for (c, dist) in r.trace.dists.iter().enumerate() {
            let Some(dist) = dist else { continue };
            count += 1;
            let tag = format!("seed {} eps {} l {:?} component {c}", r.seed, r.eps, r.l);
            if let Err(e) = distribution_ok(dist, &r.inst, &r.trace, c) {
                failures.push(format!("{tag}: {e}"));
            }
            let var: f64 = dist.atoms.iter().map(|(p, a)| p * (a.size() as f64 - dist.s).powi(2)).sum();
            let mean = (0..SAMPLES).map(|_| dist.atoms[dist.sample(&mut rng)].1.size() as f64).sum::<f64>() / SAMPLES as f64;
            let band = SIGMAS * (var / SAMPLES as f64).sqrt() + 1e-12;
            if (mean - dist.s).abs() > band {
                failures.push(format!("{tag}: sample mean {mean} vs s {} (band {band})", dist.s));
            }
            sampled += usize::from(var > 0.0);
        }
    }
    if sampled == 0 {
        failures.push("no distribution with fractional s was sampled".to_string());
    }
    outcome(&failures, format!("{count} distributions, {sampled} with fractional s sampled {SAMPLES}x"))
}

/// Three components, the last two in one family.
fn rounding_fixture() -> (Polytope, Vec<f64>) {
    let row = |coeffs: Vec<(usize, f64)>, lo: f64, hi: f64, label: &str| RangeRow { coeffs, lo, hi, label: label.into() };
    let size_a = vec![(0, 1.0), (1, 2.0), (2, -1.0)];
    let size_b = vec![(3, 1.0), (4, 2.0), (5, -1.0)];
    let size_c = vec![(6, 2.0), (7, 3.0), (8, -1.0)];
    let bc: Vec<(usize, f64)> = size_b.iter().chain(&size_c).copied().collect();
    let all: Vec<(usize, f64)> = size_a.iter().chain(&bc).copied().collect();
    let rows = vec![
        row(vec![(0, 1.0), (1, 1.0)], 1.0, 1.0, "distribution a"),
        row(vec![(3, 1.0), (4, 1.0)], 1.0, 1.0, "distribution b"),
        row(vec![(6, 1.0), (7, 1.0)], 1.0, 1.0, "distribution c"),
        row(size_a.clone(), 1.0, 2.0, "size a"),
        row(size_b, 1.0, 1.0, "size b"),
        row(size_c, 2.0, 3.0, "size c"),
        row(vec![(2, 1.0)], f64::NEG_INFINITY, 1.0, "removal budget a"),
        row(size_a, 1.0, 2.0, "size family a"),
        row(vec![(5, 1.0), (8, 1.0)], f64::NEG_INFINITY, 1.0, "removal budget bc"),
        row(bc, 3.0, 4.0, "size family bc"),
        row(all, 4.0, 5.0, "size all"),
    ];
    let point = vec![0.5, 0.5, 0.0, 0.6, 0.4, 0.4, 0.5, 0.5, 0.2];
    (Polytope { nvars: 9, rows }, point)
}

fn dependent_rounding() -> Outcome {
    let (poly, p) = rounding_fixture();
    let mut failures = Vec::new();
    if !poly.contains(&p, 1e-12) {
        failures.push("fixture point outside its polytope".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mean = vec![0.0; poly.nvars];
    for k in 0..SAMPLES {
        match sample_vertex(&poly, &p, &mut rng) {
            Ok(w) => {
                if w.iter().any(|v| v.fract() != 0.0) || !poly.contains(&w, 0.0) {
                    failures.push(format!("sample {k} not an integral member: {w:?}"));
                }
                mean.iter_mut().zip(&w).for_each(|(m, v)| *m += v / SAMPLES as f64);
            }
            Err(e) => failures.push(format!("sample {k}: {e}")),
        }
    }
    let mut worst: f64 = 0.0;
    for v in 0..poly.nvars {
        let sigma = (p[v] * (1.0 - p[v]) / SAMPLES as f64).sqrt();
        let dev = (mean[v] - p[v]).abs();
        if dev > SIGMAS * sigma + 1e-12 {
            failures.push(format!("coordinate {v}: mean {} vs {}", mean[v], p[v]));
        }
        if sigma > 0.0 {
            worst = worst.max(dev / sigma);
        }
    }
    outcome(&failures, format!("{SAMPLES} samples, worst deviation {worst:.2} sigma"))
}

fn lp_transport(tp: &TransportProblem) -> f64 {
    let (rows, cols) = (tp.demands.len(), tp.supplies.len());
    let mut lp = LinearProgram::new();
    for &c in &tp.cost {
        lp.add_var(c, 0.0, f64::INFINITY);
    }
    for (r, &d) in tp.demands.iter().enumerate() {
        lp.add_row((0..cols).map(|c| (r * cols + c, 1.0)).collect(), Relation::Eq, d);
    }
    for (c, &s) in tp.supplies.iter().enumerate() {
        lp.add_row((0..rows).map(|r| (r * cols + c, 1.0)).collect(), Relation::Le, s);
    }
    lp_solve(&lp).map(|r| r.objective).unwrap_or(f64::NAN)
}

fn kernels() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77_000 + case);
        let nf = rng.gen_range(1..=6);
        let nc = rng.gen_range(1..=8);
        let inst = gen_euclidean(nf, nc, 1, 1, 1, case).expect("instance");
        let reps: Vec<usize> = (0..nc).collect();
        let alpha: Vec<f64> = reps.iter().map(|_| rng.gen_range(0.0..2.0)).collect();
        let facilities: Vec<usize> = (0..nf).collect();
        let need: f64 = alpha.iter().sum();
        let raw: Vec<f64> = facilities.iter().map(|_| rng.gen_range(0.1..2.0)).collect();
        let scale = (need / raw.iter().sum::<f64>()).max(1.0) * rng.gen_range(1.0..1.5);
        let beta: Vec<f64> = raw.iter().map(|b| b * scale).collect();
        let flow = emd(&inst, &reps, &alpha, &facilities, &beta).map(|p| p.cost);
        let lp = reference_emd(&inst, &reps, &alpha, &facilities, &beta);
        match (flow, lp) {
            (Ok(f), Ok(l)) => {
                worst = worst.max((f - l).abs());
                if (f - l).abs() > KERNEL_TOL {
                    failures.push(format!("emd case {case}: {f} vs {l}"));
                }
            }
            (f, l) => failures.push(format!("emd case {case}: {f:?} / {l:?}")),
        }
    }
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(88_000 + case);
        let rows = rng.gen_range(1..=7);
        let cols = rng.gen_range(1..=7);
        let demands: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..3.0)).collect();
        let raw: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.1..3.0)).collect();
        let scale = (demands.iter().sum::<f64>() / raw.iter().sum::<f64>()).max(1.0) * rng.gen_range(1.0..1.6);
        let tp = TransportProblem {
            supplies: raw.iter().map(|s| s * scale).collect(),
            demands,
            cost: (0..rows * cols).map(|_| rng.gen_range(0.0..10.0)).collect(),
        };
        match transport_solve(&tp) {
            Ok(plan) => {
                let l = lp_transport(&tp);
                worst = worst.max((plan.cost - l).abs());
                if (plan.cost - l).abs() > KERNEL_TOL || l.is_nan() {
                    failures.push(format!("transport case {case}: {} vs {l}", plan.cost));
                }
            }
            Err(e) => failures.push(format!("transport case {case}: {e}")),
        }
    }
    outcome(&failures, format!("200 EMD + 100 transport cases, max diff {worst:.2e}"))
}

fn conservation(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let (mut removals, mut worst_scaling) = (0, 1.0f64);
    for r in runs {
        let nc = r.inst.nc() as f64;
        let tag = format!("seed {} eps {} l {:?}", r.seed, r.eps, r.l);
        for (k, rec) in r.trace.state.ledger.iter().enumerate() {
            removals += 1;
            if (rec.demand_after - nc).abs() > BALANCE_TOL {
                failures.push(format!("{tag}: removal {k}: total demand {} != {nc}", rec.demand_after));
            }
            if rec.imbalance_after > BALANCE_TOL {
                failures.push(format!("{tag}: removal {k}: imbalance {}", rec.imbalance_after));
            }
        }
        let (total, gap) = r.trace.state.balance_summary();
        if (total - nc).abs() > BALANCE_TOL || gap > BALANCE_TOL {
            failures.push(format!("{tag}: final demand {total}, imbalance {gap}"));
        }
        if r.l.is_none() {
            worst_scaling = worst_scaling.max(r.report.max_scaling);
            if r.report.max_scaling > 1.0 + r.eps + 1e-12 {
                failures.push(format!("{tag}: cumulative scaling {} > 1 + eps", r.report.max_scaling));
            }
        }
    }
    if removals == 0 {
        failures.push("no removal was exercised".to_string());
    }
    outcome(&failures, format!("{removals} removals checked, max scaling at default l {worst_scaling:.4}"))
}

fn baseline() -> HashMap<(u64, String), (f64, f64)> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/baseline_ratios.csv");
    let text = std::fs::read_to_string(path).expect("baseline file");
    let mut out = HashMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        out.insert((f[0].parse().expect("seed"), f[1].to_string()), (f[2].parse().expect("ratio"), f[3].parse().expect("ratio")));
    }
    out
}

fn quality(rows: &[BenchRow]) -> Outcome {
    let base = baseline();
    let mut failures = Vec::new();
    println!("{:>5} {:>5} {:>9} {:>9} {:>9} {:>9}", "seed", "eps", "cost/lp", "base", "cost/opt", "base");
    for r in rows {
        let fields = [r.lp, r.cost, r.opt, r.ratio_lp, r.ratio_opt, r.violation, r.seconds];
        if fields.iter().any(|v| v.is_nan()) {
            failures.push(format!("seed {} eps {}: NaN field", r.seed, r.eps));
        }
        match base.get(&(r.seed, r.eps.to_string())) {
            Some(&(b_lp, b_opt)) => {
                println!("{:>5} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}", r.seed, r.eps, r.ratio_lp, b_lp, r.ratio_opt, b_opt);
                if r.ratio_lp > b_lp * REGRESSION + 1e-9 || r.ratio_opt > b_opt * REGRESSION + 1e-9 {
                    failures.push(format!("seed {} eps {}: ratios {:.4}/{:.4} vs baseline {b_lp:.4}/{b_opt:.4}", r.seed, r.eps, r.ratio_lp, r.ratio_opt));
                }
            }
            None => failures.push(format!("seed {} eps {}: no baseline row", r.seed, r.eps)),
        }
    }
    let mean = |e: f64, f: fn(&BenchRow) -> f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.eps == e).map(f).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let summary = EPSILONS
        .iter()
        .map(|&e| format!("eps {e}: mean cost/LP {:.4}, cost/OPT {:.4}", mean(e, |r| r.ratio_lp), mean(e, |r| r.ratio_opt)))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(&failures, summary)
}

fn determinism() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..10 {
        let inst = gen_suite_instance(seed).expect("suite instance");
        let cfg = SolveConfig::new(1.0).with_seed(7);
        match (solve(&inst, &cfg), solve(&inst, &cfg)) {
            (Ok(a), Ok(b)) => {
                if a.to_text() != b.to_text() || a.to_json() != b.to_json() {
                    failures.push(format!("seed {seed}: reports differ"));
                }
            }
            (a, b) => failures.push(format!("seed {seed}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    outcome(&failures, "10 instances solved twice".to_string())
}

fn main() {
    let (runs, errors, elapsed) = run_suite();
    let mut opts = HashMap::new();
    for seed in 0..SUITE {
        let inst = gen_suite_instance(seed).expect("suite instance");
        if let Ok(r) = exact_solve(&inst, 1.0) {
            opts.insert(seed, r.cost);
        }
    }
    let override_errors: Vec<&String> = errors.iter().filter(|e| e.contains(" l ")).collect();
    for e in &override_errors {
        println!("note: small-l run failed: {e}");
    }
    let bench = bench_suite(20, 0, &EPSILONS).expect("bench suite");
    let results = [
        ("1 feasibility battery", feasibility(&runs, &errors, elapsed)),
        ("2 gap reproduction", gap_reproduction()),
        ("3 relaxation bound", relaxation_bound(&opts)),
        ("4 clustering invariants", clustering_suite(&runs)),
        ("5 distribution properties", distributions(&runs)),
        ("6 dependent rounding", dependent_rounding()),
        ("7 kernel cross-checks", kernels()),
        ("8 conservation", conservation(&runs)),
        ("9 quality tracking", quality(&bench)),
        ("10 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
