mod common;

use common::{fd_gradient, max_abs_diff, random_game, run_flow};
use nalgebra::{DMatrix, DVector};
use nashflow::convex::ConvexSet;
use nashflow::gnep::PrimalDualState;
use nashflow::graph::CommGraph;
use nashflow::oracle::{ActiveConstraint, QuadraticGnep};
use nashflow::scenarios::{build_opf, build_thermal, OpfParams, ThermalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_agent_game() -> QuadraticGnep {
    let mut q = DMatrix::identity(3, 3) * 2.0;
    q[(0, 1)] = 0.3;
    q[(1, 2)] = -0.2;
    q[(2, 0)] = 0.1;
    QuadraticGnep {
        agent_dims: vec![1, 1, 1],
        q,
        b: DVector::from_vec(vec![-6.0, 0.0, 2.0]),
        e_mat: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
        e_vec: DVector::from_vec(vec![-1.0]),
        c_mat: DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]),
        d_vec: DVector::from_vec(vec![-0.5]),
        lower: vec![-5.0; 3],
        upper: vec![5.0; 3],
    }
}

#[test]
fn lagrangian_gradient_matches_finite_differences_on_opf_game() {
    let g = CommGraph::path(2).unwrap();
    let sc = build_opf(&g, &OpfParams::defaults(&g)).unwrap();
    let p = &sc.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w: Vec<f64> = (0..p.total_dim()).map(|_| rng.gen_range(10.0..90.0)).collect();
    let lambda: Vec<f64> = (0..p.eq_count()).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mu: Vec<f64> = (0..p.ineq_count()).map(|_| rng.gen_range(0.0..3.0)).collect();
    let s = PrimalDualState { w: w.clone(), lambda: lambda.clone(), mu: mu.clone() };
    for i in 0..p.agents() {
        let blk = p.block(i);
        let lag = |v: &[f64]| {
            let mut full = w.clone();
            full[blk.clone()].copy_from_slice(v);
            let f = p.objective_value(i, &full).expect("opf game has objective values");
            let h: f64 = p.equality(&full).iter().zip(&lambda).map(|(a, b)| a * b).sum();
            let gv: f64 = p.inequality(&full).iter().zip(&mu).map(|(a, b)| a * b).sum();
            f + h + gv
        };
        let fd = fd_gradient(lag, &w[blk.clone()], 1e-5);
        let analytic = p.lagrangian_gradient(&s, i).unwrap();
        let scale = analytic.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        assert!(max_abs_diff(&fd, &analytic) / scale < 1e-6, "agent {i}: {fd:?} vs {analytic:?}");
    }
}

#[test]
fn three_agent_flow_reaches_oracle_equilibrium() {
    let game = three_agent_game();
    let sol = game.solve_ve_active_set().unwrap();
    assert!(sol.active.contains(&ActiveConstraint::Inequality(0)), "inequality should bind: {:?}", sol.active);
    let problem = game.to_problem().unwrap();
    let mut s = problem.default_state();
    for _ in 0..200_000 {
        s = problem.primal_dual_step(&s, 1e-3, 1.0).unwrap();
    }
    assert!(max_abs_diff(&s.w, &sol.w) < 1e-3, "{:?} vs {:?}", s.w, sol.w);
}

#[test]
fn oracle_matches_linear_solve_without_active_constraints() {
    let q = DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, -0.5, 2.0, 0.4, 0.1, 0.0, 1.5]);
    let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let game = QuadraticGnep {
        agent_dims: vec![2, 1],
        q: q.clone(),
        b: b.clone(),
        e_mat: DMatrix::zeros(0, 3),
        e_vec: DVector::zeros(0),
        c_mat: DMatrix::zeros(0, 3),
        d_vec: DVector::zeros(0),
        lower: vec![f64::NEG_INFINITY; 3],
        upper: vec![f64::INFINITY; 3],
    };
    let sol = game.solve_ve_active_set().unwrap();
    let direct = q.lu().solve(&(-b)).unwrap();
    assert!(max_abs_diff(&sol.w, direct.as_slice()) < 1e-12);
    assert!(sol.active.is_empty());
}

#[test]
fn oracle_solutions_have_tiny_kkt_residual() {
    for seed in 0..20 {
        let game = random_game(seed);
        let sol = game.solve_ve_active_set().unwrap();
        let res = game.to_problem().unwrap().kkt_residual(&sol.state()).unwrap();
        assert!(res < 1e-10, "seed {seed}: residual {res:e}");
    }
}

#[test]
fn random_games_flow_matches_oracle() {
    for seed in 100..104 {
        let game = random_game(seed);
        let sol = game.solve_ve_active_set().unwrap();
        let s = run_flow(&game.to_problem().unwrap(), 1e-2, 500.0, 1e-9);
        assert!(max_abs_diff(&s.w, &sol.w) < 1e-3, "seed {seed}");
    }
}

#[test]
fn opf_oracle_is_feasible_and_reproduced_by_flow() {
    let g = CommGraph::path(3).unwrap();
    let sc = build_opf(&g, &OpfParams::defaults(&g)).unwrap();
    let sol = sc.game.solve_ve_active_set().unwrap();
    assert!(sc.problem.kkt_residual(&sol.state()).unwrap() < 1e-10);
    assert!(sc.problem.inequality(&sol.w).iter().all(|g| *g <= 1e-9));
    assert!(sc.problem.equality(&sol.w).iter().all(|h| h.abs() <= 1e-9));
    for (k, p) in sc.params.buses.iter().enumerate() {
        let pm = sol.w[2 * k];
        assert!(pm >= p.pm_min - 1e-9 && pm <= p.pm_max + 1e-9, "bus {k}: P_M = {pm}");
    }
    let s = run_flow(&sc.problem, 1e-3, 300.0, 1e-9);
    assert!(max_abs_diff(&s.w, &sol.w) < 1e-3);
}

#[test]
fn thermal_game_probe_is_positive_on_unit_box() {
    let g = CommGraph::path(10).unwrap();
    let sc = build_thermal(&g, &ThermalParams::defaults(10)).unwrap();
    let region = ConvexSet::boxed(vec![21.0; 10], vec![22.0; 10]).unwrap();
    let report = sc.problem.monotonicity_probe(1000, &region, 5).unwrap();
    assert!(report.min_ratio > 0.0 && report.strictly_monotone_witnessed);
}

#[test]
fn thermal_oracle_has_tiny_kkt_residual() {
    let g = CommGraph::path(10).unwrap();
    let sc = build_thermal(&g, &ThermalParams::defaults(10)).unwrap();
    let sol = sc.game.solve_ve_active_set().unwrap();
    assert!(sc.problem.kkt_residual(&sol.state()).unwrap() < 1e-10);
}
