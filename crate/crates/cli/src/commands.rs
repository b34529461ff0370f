use std::fs;
use std::path::Path;

use nashflow::config::{Config, CustomGame};
use nashflow::convex::ConvexSet;
use nashflow::gnep::{GnepProblem, PrimalDualState};
use nashflow::linalg::inf_dist;
use nashflow::linctrl::CanonicalData;
use nashflow::oracle::{OracleSolution, QuadraticGnep};
use nashflow::scenarios::{build_opf, build_thermal, OpfScenario, ThermalScenario};
use nashflow::sim::{
    simulate_algorithm1, simulate_algorithm2, simulate_flow, Algorithm, Equilibrium, RunSummary, Trajectory,
};
use nashflow::{Error, Result};

const DEFAULT_OUT: &str = "nashflow-out";
const ORACLE_KKT_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-3;
const FINAL_KKT_TOL: f64 = 1e-4;

enum Prepared {
    Opf(Box<OpfScenario>),
    Thermal(Box<ThermalScenario>),
    Custom { game: QuadraticGnep, problem: GnepProblem },
}

impl Prepared {
    fn build(cfg: &Config) -> Result<Self> {
        let threshold = cfg.run.parallel_min_agents;
        Ok(match cfg.run.scenario.as_str() {
            "opf" => {
                let (g, weights) = cfg.build_graph(3)?;
                let mut sc = build_opf(&g, &cfg.opf_params(&g, &weights))?;
                sc.problem = sc.problem.with_parallel_min_agents(threshold);
                Prepared::Opf(Box::new(sc))
            }
            "thermal" => {
                let (g, _) = cfg.build_graph(10)?;
                let mut sc = build_thermal(&g, &cfg.thermal_params(g.node_count()))?;
                sc.problem = sc.problem.with_parallel_min_agents(threshold);
                Prepared::Thermal(Box::new(sc))
            }
            _ => {
                let custom = cfg.custom.as_ref().expect("validated config has a custom section");
                let game = custom.to_quadratic()?;
                let problem = game.to_problem()?.with_parallel_min_agents(threshold);
                Prepared::Custom { game, problem }
            }
        })
    }

    fn game(&self) -> &QuadraticGnep {
        match self {
            Prepared::Opf(s) => &s.game,
            Prepared::Thermal(s) => &s.game,
            Prepared::Custom { game, .. } => game,
        }
    }

    fn problem(&self) -> &GnepProblem {
        match self {
            Prepared::Opf(s) => &s.problem,
            Prepared::Thermal(s) => &s.problem,
            Prepared::Custom { problem, .. } => problem,
        }
    }

    /// Simulates the configured loop; the oracle point, when given, feeds the monitors.
    fn simulate(&self, cfg: &Config, sol: Option<&OracleSolution>, summary_extra: &mut Vec<(String, f64)>) -> Result<Trajectory> {
        let opts = cfg.sim_options()?;
        match self {
            Prepared::Opf(sc) => {
                let canon = CanonicalData::design(&sc.network, &sc.graph, cfg.opf.pole, cfg.opf.margin)?;
                summary_extra.push(("epsilon".into(), canon.epsilon));
                summary_extra.push(("consensus_rounds".into(), canon.consensus.round_count() as f64));
                let eq = sol.map(|s| Equilibrium::for_algorithm1(&sc.lift, &s.w, &s.lambda, &s.mu));
                simulate_algorithm1(
                    &sc.network,
                    &canon,
                    &sc.problem,
                    &sc.lift,
                    &sc.initial_state(),
                    &sc.problem.default_state(),
                    eq.as_ref(),
                    &opts,
                )
            }
            Prepared::Thermal(sc) => {
                summary_extra.push(("m_est".into(), sc.m_est));
                let eq = sol.map(|s| Equilibrium::for_algorithm2(&sc.system, &s.w, &s.lambda, &s.mu)).transpose()?;
                let start = sc.problem.default_state();
                simulate_algorithm2(
                    &sc.system,
                    &sc.problem,
                    &sc.gains,
                    cfg.alg2_mode()?,
                    &sc.initial_state(),
                    &start.lambda,
                    &start.mu,
                    eq.as_ref(),
                    &opts,
                )
            }
            Prepared::Custom { problem, .. } => {
                let eq = sol.map(|s| Equilibrium { x: vec![], u: vec![], aux: s.w.clone(), lambda: s.lambda.clone(), mu: s.mu.clone() });
                simulate_flow(problem, &problem.default_state(), eq.as_ref(), &opts)
            }
        }
    }
}

/// The decision part of the last recorded auxiliary state.
fn final_decision(traj: &Trajectory, r: usize) -> Vec<f64> {
    let aux = &traj.last().aux;
    match traj.algorithm {
        Algorithm::Backstepping => {
            let depth = aux.len() / r;
            (0..r).map(|i| aux[i * depth]).collect()
        }
        _ => aux.clone(),
    }
}

pub fn run(cfg: &Config, out: Option<&Path>) -> Result<u8> {
    let prepared = Prepared::build(cfg)?;
    // reference equilibrium for monitors; a run without it still proceeds
    let sol = match prepared.game().solve_ve_active_set() {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("no reference equilibrium ({e}); error and Lyapunov monitors disabled");
            None
        }
    };
    let mut extra = Vec::new();
    let traj = prepared.simulate(cfg, sol.as_ref(), &mut extra)?;
    let mut summary = RunSummary::from_trajectory(&traj, cfg.run.settle_tol);
    summary.extra.extend(extra);
    let dir = out.unwrap_or(Path::new(DEFAULT_OUT));
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    fs::write(dir.join("trajectory.csv"), csv)?;
    fs::write(dir.join("summary.toml"), summary.to_toml())?;
    let last = traj.last();
    println!(
        "run complete: t = {}, kkt = {:e}, err_phys = {}, err_dm = {}",
        last.t,
        last.kkt,
        last.err_phys.map_or("n/a".into(), |v| format!("{v:e}")),
        last.err_dm.map_or("n/a".into(), |v| format!("{v:e}")),
    );
    println!("wrote {}", dir.display());
    Ok(0)
}

/// Probe box: finite bounds where the game has them, ±10 around them otherwise.
fn probe_region(game: &QuadraticGnep) -> Result<ConvexSet> {
    let mut lo = Vec::with_capacity(game.lower.len());
    let mut hi = Vec::with_capacity(game.lower.len());
    for (&l, &u) in game.lower.iter().zip(&game.upper) {
        let (a, b) = match (l.is_finite(), u.is_finite()) {
            (true, true) if u > l => (l, u),
            (true, true) => (l - 1.0, l + 1.0),
            (true, false) => (l, l + 10.0),
            (false, true) => (u - 10.0, u),
            (false, false) => (-10.0, 10.0),
        };
        lo.push(a);
        hi.push(b);
    }
    ConvexSet::boxed(lo, hi)
}

fn line(ok: bool, what: &str, detail: String) -> bool {
    println!("[{}] {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn verify(cfg: &Config) -> Result<u8> {
    let prepared = Prepared::build(cfg)?;
    let game = prepared.game();
    let problem = prepared.problem();
    let probe = problem.monotonicity_probe(cfg.run.probe_samples, &probe_region(game)?, cfg.run.seed)?;
    if !probe.strictly_monotone_witnessed {
        println!(
            "warning: monotonicity probe found a non-monotone pair (min ratio {:e}); the equilibrium is not certified",
            probe.min_ratio
        );
        println!("verify: FAIL");
        return Ok(1);
    }
    println!("monotonicity probe: min ratio {:e}", probe.min_ratio);
    let sol = game.solve_ve_active_set()?;
    let mut pass = true;
    let oracle_kkt = problem.kkt_residual(&sol.state())?;
    pass &= line(oracle_kkt < ORACLE_KKT_TOL, "oracle kkt residual", format!("{oracle_kkt:e} (< {ORACLE_KKT_TOL:e})"));
    if let Prepared::Thermal(sc) = &prepared {
        if sc.zones() == 1 {
            let x = closed_form_single_zone(sc);
            let d = (x - sol.w[0]).abs();
            pass &= line(d < 1e-9, "closed-form single-zone cross-check", format!("|{x} - {}| = {d:e}", sol.w[0]));
        }
    }
    let mut extra = Vec::new();
    let traj = prepared.simulate(cfg, Some(&sol), &mut extra)?;
    let w = final_decision(&traj, game.total_dim());
    let gap = inf_dist(&w, &sol.w);
    pass &= line(gap < GAP_TOL, "equilibrium gap", format!("{gap:e} (< {GAP_TOL:e})"));
    let kkt = traj.last().kkt;
    pass &= line(kkt <= FINAL_KKT_TOL, "final kkt residual", format!("{kkt:e} (<= {FINAL_KKT_TOL:e})"));
    if let Some(st) = traj.lyapunov {
        println!(
            "[INFO] Lyapunov monotone fraction: {} ({} of {} steps above 10 h^2, worst increase {:e})",
            st.monotone_fraction(),
            st.violations,
            st.steps,
            st.worst_increase
        );
    }
    println!("verify: {}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { 0 } else { 1 })
}

/// Scalar box-constrained minimizer of the single-zone game.
fn closed_form_single_zone(sc: &ThermalScenario) -> f64 {
    let z = &sc.params.zones[0];
    let ms_cp = z.m_s * sc.params.c_p;
    let (cx, cu) = (z.c1x + z.c2x, z.cu / (ms_cp * ms_cp));
    let (p, d) = (sc.p[0], sc.system.disturbance(0));
    let free = (cx * z.t_ref + cu * p * d) / (cx + cu * p * p);
    let lo = z.t_lo.max((ms_cp * z.u_lo + d) / p);
    let hi = z.t_hi.min((ms_cp * z.u_hi + d) / p);
    free.clamp(lo, hi)
}

pub fn oracle(cfg: &Config) -> Result<u8> {
    let prepared = Prepared::build(cfg)?;
    let sol = prepared.game().solve_ve_active_set()?;
    let kkt = prepared.problem().kkt_residual(&PrimalDualState { w: sol.w.clone(), lambda: sol.lambda.clone(), mu: sol.mu.clone() })?;
    let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    println!("w = [{}]", fmt(&sol.w));
    println!("lambda = [{}]", fmt(&sol.lambda));
    println!("mu = [{}]", fmt(&sol.mu));
    println!("active = {:?}", sol.active);
    println!("candidates = {}", sol.candidates_tried);
    println!("kkt = {kkt:e}");
    Ok(0)
}

pub fn export(cfg: &Config, out: Option<&Path>) -> Result<u8> {
    let prepared = Prepared::build(cfg)?;
    let g = prepared.game();
    let rows = |m: &nalgebra::DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    let mut resolved = cfg.clone();
    resolved.custom = Some(CustomGame {
        agent_dims: g.agent_dims.clone(),
        q: rows(&g.q),
        b: g.b.as_slice().to_vec(),
        e: rows(&g.e_mat),
        e_vec: g.e_vec.as_slice().to_vec(),
        c: rows(&g.c_mat),
        d: g.d_vec.as_slice().to_vec(),
        lower: Some(g.lower.clone()),
        upper: Some(g.upper.clone()),
    });
    let text = resolved.to_toml_string();
    match out {
        Some(p) => fs::write(p, text).map_err(Error::from)?,
        None => print!("{text}"),
    }
    Ok(0)
}
