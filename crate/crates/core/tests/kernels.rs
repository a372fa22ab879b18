use capkm::instance::gen_euclidean;
use capkm::localsol::emd;
use capkm::optcore::{lp_solve, transport_solve, LinearProgram, Relation, TransportProblem};
use capkm::oracle::reference_emd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

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
    let res = lp_solve(&lp).unwrap();
    assert!(res.is_optimal());
    res.objective
}

#[test]
fn flow_emd_matches_lp_emd() {
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let nf = rng.gen_range(1..=6);
        let nc = rng.gen_range(1..=8);
        let inst = gen_euclidean(nf, nc, 1, 1, nc as u32, case).unwrap();
        let reps: Vec<usize> = (0..nc).filter(|_| rng.gen_bool(0.7)).collect();
        let alpha: Vec<f64> = reps.iter().map(|_| rng.gen_range(0.0..2.0)).collect();
        let facilities: Vec<usize> = (0..nf).collect();
        let mut beta: Vec<f64> = facilities.iter().map(|_| rng.gen_range(0.0..2.0)).collect();
        let (a, b): (f64, f64) = (alpha.iter().sum(), beta.iter().sum());
        if b < a {
            let scale = if b > 0.0 { a / b * rng.gen_range(1.0..1.5) } else { 1.0 };
            beta.iter_mut().for_each(|x| *x = if b > 0.0 { *x * scale } else { a });
        }
        let flow = emd(&inst, &reps, &alpha, &facilities, &beta).unwrap().cost;
        let lp = reference_emd(&inst, &reps, &alpha, &facilities, &beta).unwrap();
        assert!((flow - lp).abs() <= TOL * (1.0 + lp), "case {case}: flow {flow} vs lp {lp}");
    }
}

#[test]
fn transport_matches_lp() {
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let rows = rng.gen_range(1..=7);
        let cols = rng.gen_range(1..=7);
        let demands: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..3.0)).collect();
        let need: f64 = demands.iter().sum();
        let raw: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.1..3.0)).collect();
        let have: f64 = raw.iter().sum();
        let scale = (need / have).max(1.0) * rng.gen_range(1.0..1.6);
        let supplies = raw.iter().map(|s| s * scale).collect();
        let cost = (0..rows * cols).map(|_| rng.gen_range(0.0..10.0)).collect();
        let tp = TransportProblem { supplies, demands, cost };
        let flow = transport_solve(&tp).unwrap().cost;
        let lp = lp_transport(&tp);
        assert!((flow - lp).abs() <= TOL * (1.0 + lp), "case {case}: flow {flow} vs lp {lp}");
    }
}

#[test]
fn emd_edge_cases() {
    let inst = gen_euclidean(2, 2, 1, 2, 2, 3).unwrap();
    let zero = emd(&inst, &[0, 1], &[0.0, 0.0], &[0, 1], &[1.0, 1.0]).unwrap().cost;
    assert_eq!(zero, 0.0);
    let single = emd(&inst, &[0], &[1.5], &[1], &[4.0]).unwrap().cost;
    assert!((single - 1.5 * inst.fc(1, 0)).abs() < 1e-9);
    assert!(emd(&inst, &[0], &[3.0], &[0], &[1.0]).is_err());
}
