use capkm::cli::evaluate;
use capkm::instance::{gen_euclidean, parse_instance, Facility, Instance};
use capkm::localsol::{fuzzy_ceil, fuzzy_floor, massage_distribution, LocalSolution};
use capkm::optcore::{lp_solve, mcf_assign, LinearProgram, Relation};
use capkm::oracle::exact_solve;
use capkm::pipeline::{solve, SolveConfig};
use capkm::relaxation::{solve_relaxation, DEFAULT_BUDGET};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=6, 1usize..=10, any::<u64>()).prop_flat_map(|(nf, nc, seed)| {
        (1..=nf).prop_map(move |k| {
            let hi = (2 * nc).div_ceil(k).max(2) as u32;
            gen_euclidean(nf, nc, k, (hi / 2).max(1), hi, seed).unwrap()
        })
    })
}

fn fits(inst: &Instance) -> bool {
    inst.top_k_capacity(u64::from) >= inst.nc() as u64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn text_round_trip(inst in instance()) {
        let back = parse_instance(&inst.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), inst.to_text());
    }

    #[test]
    fn solve_respects_relaxed_caps(inst in instance().prop_filter("fits", fits), eps in prop_oneof![Just(1.0), Just(0.5)], seed in 0u64..1000) {
        let r = solve(&inst, &SolveConfig::new(eps).with_seed(seed)).unwrap();
        prop_assert!(r.open.len() <= inst.k());
        prop_assert_eq!(r.assignment.len(), inst.nc());
        let cost = evaluate(&inst, &r.assignment_text(&inst), eps).unwrap();
        prop_assert!((cost - r.cost).abs() <= 1e-9 * (1.0 + cost));
        prop_assert!(r.lp_value <= r.cost + 1e-6 * (1.0 + r.cost) || r.violation > 1.0);
    }

    #[test]
    fn exact_bounds_basic_lp(inst in instance().prop_filter("fits", fits)) {
        let (_, der) = solve_relaxation(&inst, &[], DEFAULT_BUDGET).unwrap();
        let opt = exact_solve(&inst, 1.0).unwrap();
        prop_assert!(opt.feasible);
        prop_assert!(der.lp_value <= opt.cost + 1e-6 * (1.0 + opt.cost));
    }

    #[test]
    fn exact_ignores_facility_order(inst in instance().prop_filter("fits", fits), rot in 0usize..6) {
        let nf = inst.nf();
        let order: Vec<usize> = (0..nf).map(|i| (i + rot) % nf).collect();
        let facilities: Vec<Facility> = order.iter().map(|&i| inst.facilities()[i].clone()).collect();
        let mut metric = vec![0.0; (nf + inst.nc()) * (nf + inst.nc())];
        let n = nf + inst.nc();
        let site = |a: usize| if a < nf { order[a] } else { a };
        for a in 0..n {
            for b in 0..n {
                metric[a * n + b] = inst.d(site(a), site(b));
            }
        }
        let permuted = Instance::with_metric(facilities, inst.clients().to_vec(), inst.k(), metric).unwrap();
        let a = exact_solve(&inst, 1.0).unwrap().cost;
        let b = exact_solve(&permuted, 1.0).unwrap().cost;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn mcf_matches_lp(clients in 1usize..7, caps in prop::collection::vec(0usize..4, 1..5), seed in any::<u64>()) {
        prop_assume!(caps.iter().sum::<usize>() >= clients);
        let cols = caps.len();
        let cost: Vec<f64> = (0..clients * cols).map(|t| ((seed >> (t % 60)) % 17) as f64 + t as f64 * 0.01).collect();
        let a = mcf_assign(clients, &caps, &cost).unwrap();
        let mut loads = vec![0; cols];
        for &c in &a.facility_of {
            loads[c] += 1;
        }
        prop_assert!(loads.iter().zip(&caps).all(|(l, c)| l <= c));
        let mut lp = LinearProgram::new();
        for &c in &cost {
            lp.add_var(c, 0.0, 1.0);
        }
        for r in 0..clients {
            lp.add_row((0..cols).map(|c| (r * cols + c, 1.0)).collect(), Relation::Eq, 1.0);
        }
        for (c, &cap) in caps.iter().enumerate() {
            lp.add_row((0..clients).map(|r| (r * cols + c, 1.0)).collect(), Relation::Le, cap as f64);
        }
        let res = lp_solve(&lp).unwrap();
        prop_assert!((res.objective - a.cost).abs() <= 1e-6 * (1.0 + a.cost));
    }

    #[test]
    fn fuzzy_rounding(s in 0.0f64..50.0) {
        prop_assert!(fuzzy_floor(s) as f64 <= s + 1e-9);
        prop_assert!(fuzzy_ceil(s) as f64 >= s - 1e-9);
        prop_assert!(fuzzy_ceil(s) - fuzzy_floor(s) <= 1);
    }

    #[test]
    fn massage_keeps_sizes_small(sizes in prop::collection::vec(0usize..6, 1..8), weights in prop::collection::vec(0.05f64..1.0, 8), l in 8.0f64..20.0) {
        let total: f64 = weights[..sizes.len()].iter().sum();
        let psi: Vec<(f64, LocalSolution)> = sizes
            .iter()
            .zip(&weights)
            .map(|(&n, &w)| (w / total, LocalSolution { facilities: (0..6).collect(), open: (0..n).collect(), beta: vec![0.0; 6] }))
            .collect();
        let s: f64 = psi.iter().map(|(p, a)| p * a.size() as f64).sum();
        let (out, ratio) = massage_distribution(&psi, l, 3.0 * l).unwrap();
        let mass: f64 = out.iter().map(|(p, _)| p).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-9);
        prop_assert!(ratio.is_finite() && ratio >= 1.0 - 1e-12);
        let hi = fuzzy_ceil(s);
        prop_assert!(out.iter().all(|(_, a)| a.size() <= hi));
        let lo = fuzzy_floor(s) as f64;
        let e: f64 = out.iter().map(|(p, a)| p * (a.size() as f64).max(lo)).sum();
        prop_assert!(e <= s + 1e-9, "E max = {e} > s = {s}");
    }
}
