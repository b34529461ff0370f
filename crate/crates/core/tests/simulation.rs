mod common;

use common::max_abs_diff;
use nalgebra::{DMatrix, DVector};
use nashflow::gnep::{GnepProblem, PrimalDualState};
use nashflow::graph::CommGraph;
use nashflow::linctrl::{CanonicalData, LinearNetwork};
use nashflow::scenarios::{build_opf, AuxLift, OpfParams};
use nashflow::sim::{convergence_metrics, simulate_algorithm1, simulate_flow, Equilibrium, SimOptions};

/// ẋ = −x + u + 0.5 with the game min ½‖(x̄, ū) − (2, 0)‖² s.t. −x̄ + ū + 0.5 = 0.
fn scalar_loop() -> (LinearNetwork, GnepProblem, [f64; 2]) {
    let net = LinearNetwork::new(
        vec![1],
        DMatrix::from_element(1, 1, -1.0),
        vec![DVector::from_element(1, 1.0)],
        DVector::from_element(1, 0.5),
    )
    .unwrap();
    let problem = GnepProblem::builder(vec![2], |_, w| vec![w[0] - 2.0, w[1]])
        .equality(DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]), DVector::from_element(1, 0.5))
        .build()
        .unwrap();
    // projection of (2, 0) onto the line −x + u + 0.5 = 0
    let (tx, tu) = (2.0, 0.0);
    let v = -tx + tu + 0.5;
    (net, problem, [tx + v / 2.0, tu - v / 2.0])
}

#[test]
fn scalar_loop_reaches_closed_form_equilibrium() {
    let (net, problem, star) = scalar_loop();
    let g = CommGraph::path(1).unwrap();
    let canon = CanonicalData::design(&net, &g, -1.0, 1.0).unwrap();
    let lift = AuxLift::identity(1, 1);
    let reference = Equilibrium::for_algorithm1(&lift, &star, &[star[0] - 2.0], &[]);
    let opts = SimOptions { record_every: 1000, ..SimOptions::new(1e-3, 60.0) };
    let traj = simulate_algorithm1(&net, &canon, &problem, &lift, &[0.0], &problem.default_state(), Some(&reference), &opts)
        .unwrap();
    let last = traj.last();
    assert!((last.x[0] - star[0]).abs() < 1e-3, "x = {}", last.x[0]);
    assert!((last.u[0] - star[1]).abs() < 1e-3, "u = {}", last.u[0]);
    assert!(last.err_phys.unwrap() < 1e-3);
}

#[test]
fn opf_started_at_equilibrium_stays_put() {
    let g = CommGraph::path(3).unwrap();
    let sc = build_opf(&g, &OpfParams::defaults(&g)).unwrap();
    let sol = sc.game.solve_ve_active_set().unwrap();
    let canon = CanonicalData::design(&sc.network, &sc.graph, -1.0, 1.0).unwrap();
    let eq = Equilibrium::for_algorithm1(&sc.lift, &sol.w, &sol.lambda, &sol.mu);
    let opts = SimOptions { record_every: 500, ..SimOptions::new(1e-3, 5.0) };
    let traj =
        simulate_algorithm1(&sc.network, &canon, &sc.problem, &sc.lift, &eq.x, &sol.state(), Some(&eq), &opts).unwrap();
    for s in &traj.samples {
        assert!(max_abs_diff(&s.x, &eq.x) < 1e-9, "t = {}", s.t);
        assert!(max_abs_diff(&s.aux, &sol.w) < 1e-9);
    }
}

#[test]
fn opf_error_decays_after_transient() {
    let g = CommGraph::path(3).unwrap();
    let sc = build_opf(&g, &OpfParams::defaults(&g)).unwrap();
    let sol = sc.game.solve_ve_active_set().unwrap();
    let canon = CanonicalData::design(&sc.network, &sc.graph, -1.0, 1.0).unwrap();
    let eq = Equilibrium::for_algorithm1(&sc.lift, &sol.w, &sol.lambda, &sol.mu);
    let opts = SimOptions { record_every: 1000, ..SimOptions::new(1e-3, 60.0) };
    let traj = simulate_algorithm1(
        &sc.network,
        &canon,
        &sc.problem,
        &sc.lift,
        &sc.initial_state(),
        &sc.problem.default_state(),
        Some(&eq),
        &opts,
    )
    .unwrap();
    let m = convergence_metrics(&traj, &eq).unwrap();
    let late: Vec<usize> = (0..m.times.len()).filter(|&k| m.times[k] >= 5.0).collect();
    // the Lyapunov value (decision plus multipliers) decreases sample to sample
    let v: Vec<f64> = late.iter().map(|&k| traj.samples[k].lyapunov.unwrap()).collect();
    for w in v.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    // the decision error alone rotates with the multipliers, so only its peaks shrink
    let e: Vec<f64> = late.iter().map(|&k| m.err_dm[k]).collect();
    let peaks: Vec<f64> = e.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).map(|w| w[1]).collect();
    assert!(peaks.len() >= 5);
    for w in peaks.windows(2) {
        assert!(w[1] < w[0], "peak {} -> {}", w[0], w[1]);
    }
}

#[test]
fn flow_at_fixed_point_is_constant_and_fully_monotone() {
    let (_, problem, star) = scalar_loop();
    let start = PrimalDualState { w: star.to_vec(), lambda: vec![star[0] - 2.0], mu: vec![] };
    let eq = Equilibrium { x: vec![], u: vec![], aux: star.to_vec(), lambda: start.lambda.clone(), mu: vec![] };
    let traj = simulate_flow(&problem, &start, Some(&eq), &SimOptions { record_every: 10, ..SimOptions::new(1e-2, 1.0) })
        .unwrap();
    let m = convergence_metrics(&traj, &eq).unwrap();
    assert!(m.err_dm.iter().all(|e| *e < 1e-12));
    assert_eq!(m.lyapunov_monotone_fraction, 1.0);
    assert_eq!(traj.lyapunov.unwrap().violations, 0);
}

#[test]
fn csv_header_names_every_channel() {
    let (_, problem, _) = scalar_loop();
    let traj = simulate_flow(&problem, &problem.default_state(), None, &SimOptions::new(0.1, 0.2)).unwrap();
    let csv = traj.to_csv_string();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,w_0_1,w_0_2,lambda_0,kkt,V,err_phys,err_dm,tracking");
    assert_eq!(lines.count(), traj.samples.len());
}
