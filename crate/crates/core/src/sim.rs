//! Fixed-step co-simulation of the physical plant and the decision/dual flows.
//!
//! Both loops use one shared step `h`. Monitors are evaluated at every step for
//! the Lyapunov check and stored at every `record_every`-th step.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::backstep::{
    control_law_nonlinear_2, dynamics, forward_transform_2, inverse_transform_2, steady_state_manifold, validate_gains,
    z_step, BacksteppingGains, StrictFeedbackSystem, ZState,
};
use crate::error::{BlowUp, Error, Result};
use crate::gnep::{FlowIntegrator, GnepProblem, PrimalDualState};
use crate::linalg::{inf_norm, l2_dist};
use crate::linctrl::{control_law_linear, CanonicalData, LinearNetwork};
use crate::scenarios::AuxLift;

/// Monitors above this magnitude abort the run.
pub const BLOWUP_LIMIT: f64 = 1e9;
/// Per-step Lyapunov increase tolerated, in units of h².
pub const LYAPUNOV_ALLOWANCE: f64 = 10.0;
const DUMP_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub integrator: FlowIntegrator,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { h: 1e-3, horizon: 300.0, record_every: 100, integrator: FlowIntegrator::ProjectedEuler }
    }
}

impl SimOptions {
    pub fn new(h: f64, horizon: f64) -> Self {
        SimOptions { h, horizon, ..Default::default() }
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("step size h = {} must be positive", self.h)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon {} must be nonnegative", self.horizon)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        Ok((self.horizon / self.h).round() as usize)
    }

    fn records(&self, k: usize, steps: usize) -> bool {
        k.is_multiple_of(self.record_every) || k == steps
    }
}

/// One recorded point of a trajectory. Optional monitors need a reference equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// w̄ for the linear loop, z (agent-major) for backstepping.
    pub aux: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub kkt: f64,
    pub lyapunov: Option<f64>,
    pub err_phys: Option<f64>,
    pub err_dm: Option<f64>,
    /// ‖x − x̄‖∞ for the linear loop, ‖z^{[≥2]}‖∞ for backstepping.
    pub tracking: f64,
}

/// Target point for error and Lyapunov monitors. Layouts match [`Sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub aux: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Equilibrium {
    /// Physical target from the affine lift of the decision equilibrium.
    pub fn for_algorithm1(lift: &AuxLift, w: &[f64], lambda: &[f64], mu: &[f64]) -> Self {
        let (x, u) = lift.apply(w);
        Equilibrium { x, u, aux: w.to_vec(), lambda: lambda.to_vec(), mu: mu.to_vec() }
    }

    /// Physical target from the steady-state manifold; z* = (w, 0, …, 0).
    pub fn for_algorithm2(sys: &dyn StrictFeedbackSystem, w: &[f64], lambda: &[f64], mu: &[f64]) -> Result<Self> {
        let (layers, u) = steady_state_manifold(sys, w)?;
        let depth = sys.depth();
        let mut z = vec![vec![0.0; w.len()]; depth];
        z[0] = w.to_vec();
        Ok(Equilibrium {
            x: agent_major(&layers),
            u,
            aux: agent_major(&z),
            lambda: lambda.to_vec(),
            mu: mu.to_vec(),
        })
    }

    fn lyapunov(&self, aux: &[f64], lambda: &[f64], mu: &[f64]) -> f64 {
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        0.5 * (sq(aux, &self.aux) + sq(lambda, &self.lambda) + sq(mu, &self.mu))
    }
}

/// Layer-major `v[l][i]` to agent-major `out[i * depth + l]`.
pub fn agent_major(layers: &[Vec<f64>]) -> Vec<f64> {
    let n = layers.first().map_or(0, Vec::len);
    (0..n).flat_map(|i| layers.iter().map(move |l| l[i])).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LyapunovStats {
    pub steps: usize,
    pub violations: usize,
    /// Largest one-step increase of V (negative when V always decreased).
    pub worst_increase: f64,
    pub allowance: f64,
}

impl LyapunovStats {
    fn new(h: f64) -> Self {
        LyapunovStats { steps: 0, violations: 0, worst_increase: f64::NEG_INFINITY, allowance: LYAPUNOV_ALLOWANCE * h * h }
    }

    fn push(&mut self, before: f64, after: f64) {
        let inc = after - before;
        self.steps += 1;
        self.worst_increase = self.worst_increase.max(inc);
        if inc > self.allowance {
            self.violations += 1;
        }
    }

    pub fn monotone_fraction(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            1.0 - self.violations as f64 / self.steps as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Linear,
    Backstepping,
    /// Decision and dual flow without a physical plant.
    FlowOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alg2Mode {
    #[default]
    ZDomain,
    XDomain,
}

impl std::str::FromStr for Alg2Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "z_domain" => Ok(Alg2Mode::ZDomain),
            "x" | "x_domain" => Ok(Alg2Mode::XDomain),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected z_domain|x_domain)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub h: f64,
    pub record_every: usize,
    pub x_labels: Vec<String>,
    pub u_labels: Vec<String>,
    pub aux_labels: Vec<String>,
    pub samples: Vec<Sample>,
    pub lyapunov: Option<LyapunovStats>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory holds at least the initial sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// CSV with one header row naming every channel.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let s0 = &self.samples[0];
        let mut header = vec!["t".to_string()];
        header.extend(self.x_labels.iter().cloned());
        header.extend(self.u_labels.iter().cloned());
        header.extend(self.aux_labels.iter().cloned());
        header.extend((0..s0.lambda.len()).map(|j| format!("lambda_{j}")));
        header.extend((0..s0.mu.len()).map(|j| format!("mu_{j}")));
        header.extend(["kkt", "V", "err_phys", "err_dm", "tracking"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            for v in s.x.iter().chain(&s.u).chain(&s.aux).chain(&s.lambda).chain(&s.mu) {
                row.push(v.to_string());
            }
            row.push(s.kkt.to_string());
            row.push(opt(s.lyapunov));
            row.push(opt(s.err_phys));
            row.push(opt(s.err_dm));
            row.push(s.tracking.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn linear_labels(dims: &[usize], prefix: &str) -> Vec<String> {
    dims.iter()
        .enumerate()
        .flat_map(|(i, &d)| (1..=d).map(move |k| format!("{prefix}_{i}_{k}")))
        .collect()
}

fn check_monitors(
    t: f64,
    values: &[(&str, f64)],
    states: &[(&str, &[f64])],
    history: &[Sample],
    current: impl FnOnce() -> Option<Sample>,
) -> Result<()> {
    let mut reason = None;
    for (name, v) in values {
        if !v.is_finite() || v.abs() > BLOWUP_LIMIT {
            reason = Some(format!("monitor {name} = {v:e}"));
            break;
        }
    }
    if reason.is_none() {
        for (name, s) in states {
            if let Some(k) = s.iter().position(|v| !v.is_finite()) {
                reason = Some(format!("{name}[{k}] = {}", s[k]));
                break;
            }
        }
    }
    match reason {
        None => Ok(()),
        Some(reason) => {
            let start = history.len().saturating_sub(DUMP_SAMPLES);
            let mut last_samples = history[start..].to_vec();
            last_samples.extend(current());
            Err(Error::BlowUp(Box::new(BlowUp { t, reason, last_samples })))
        }
    }
}

/// Linear-network loop: plant under the per-agent linear law, auxiliary flow at unit rate.
#[allow(clippy::too_many_arguments)]
pub fn simulate_algorithm1(
    net: &LinearNetwork,
    canon: &CanonicalData,
    problem: &GnepProblem,
    lift: &AuxLift,
    x0: &[f64],
    start: &PrimalDualState,
    reference: Option<&Equilibrium>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let steps = opts.steps()?;
    let n_agents = net.agents();
    if canon.agents.len() != n_agents || problem.agents() != n_agents {
        return Err(Error::DimensionMismatch { expected: n_agents, got: canon.agents.len() });
    }
    if x0.len() != net.state_dim() {
        return Err(Error::DimensionMismatch { expected: net.state_dim(), got: x0.len() });
    }
    if lift.decision_dim() != problem.total_dim() {
        return Err(Error::DimensionMismatch { expected: problem.total_dim(), got: lift.decision_dim() });
    }
    let (xb, ub) = lift.apply(&start.w);
    if xb.len() != net.state_dim() || ub.len() != n_agents {
        return Err(Error::DimensionMismatch { expected: net.state_dim(), got: xb.len() });
    }
    problem.validate_state(start)?;
    if let Some(r) = reference {
        if r.x.len() != x0.len() || r.aux.len() != start.w.len() {
            return Err(Error::DimensionMismatch { expected: x0.len(), got: r.x.len() });
        }
    }

    let h = opts.h;
    let parallel = n_agents >= problem.parallel_threshold();
    let control = |x: &[f64], w: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let (xbar, ubar) = lift.apply(w);
        let agent_u = |i: usize| {
            let r = net.range(i);
            control_law_linear(&canon.agents[i], &x[r.clone()], &xbar[r], ubar[i])
        };
        let u = if parallel {
            (0..n_agents).into_par_iter().map(agent_u).collect()
        } else {
            (0..n_agents).map(agent_u).collect()
        };
        (u, xbar)
    };

    let mut x = x0.to_vec();
    let mut pd = start.clone();
    let mut samples = Vec::with_capacity(steps / opts.record_every + 2);
    let mut stats = reference.map(|_| LyapunovStats::new(h));
    let mut v_now = reference.map(|r| r.lyapunov(&pd.w, &pd.lambda, &pd.mu));
    for k in 0..=steps {
        let t = k as f64 * h;
        let (u, xbar) = control(&x, &pd.w);
        let make_sample = |kkt: f64| Sample {
            t,
            x: x.clone(),
            u: u.clone(),
            aux: pd.w.clone(),
            lambda: pd.lambda.clone(),
            mu: pd.mu.clone(),
            kkt,
            lyapunov: v_now,
            err_phys: reference.map(|r| l2_dist(&x, &r.x)),
            err_dm: reference.map(|r| l2_dist(&pd.w, &r.aux)),
            tracking: x.iter().zip(&xbar).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        };
        if opts.records(k, steps) {
            let s = make_sample(problem.kkt_residual(&pd)?);
            let vals = [
                ("kkt", s.kkt),
                ("V", s.lyapunov.unwrap_or(0.0)),
                ("err_phys", s.err_phys.unwrap_or(0.0)),
                ("tracking", s.tracking),
            ];
            check_monitors(t, &vals, &[("u", &u)], &samples, || Some(s.clone()))?;
            samples.push(s);
        }
        if k == steps {
            break;
        }
        let dx = net.rhs(&x, &u);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += h * d;
        }
        pd = problem.step_with(opts.integrator, &pd, h, 1.0)?;
        if let (Some(r), Some(st), Some(v)) = (reference, stats.as_mut(), v_now) {
            let next = r.lyapunov(&pd.w, &pd.lambda, &pd.mu);
            st.push(v, next);
            v_now = Some(next);
        }
        let t_next = t + h;
        check_monitors(
            t_next,
            &[("V", v_now.unwrap_or(0.0))],
            &[("x", &x), ("wbar", &pd.w), ("lambda", &pd.lambda), ("mu", &pd.mu)],
            &samples,
            || None,
        )?;
    }

    Ok(Trajectory {
        algorithm: Algorithm::Linear,
        h,
        record_every: opts.record_every,
        x_labels: linear_labels(net.dims(), "x"),
        u_labels: (0..n_agents).map(|i| format!("u_{i}")).collect(),
        aux_labels: linear_labels(problem.agent_dims(), "wbar"),
        samples,
        lyapunov: stats,
    })
}

/// Strict-feedback loop.
///
/// `initial` is the physical state `x[l][i]` for depth 2, and the transformed
/// state `z[l][i]` for deeper chains (which only run in the z domain).
#[allow(clippy::too_many_arguments)]
pub fn simulate_algorithm2(
    sys: &dyn StrictFeedbackSystem,
    problem: &GnepProblem,
    gains: &BacksteppingGains,
    mode: Alg2Mode,
    initial: &[Vec<f64>],
    lambda0: &[f64],
    mu0: &[f64],
    reference: Option<&Equilibrium>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let steps = opts.steps()?;
    validate_gains(gains, gains.m_est)?;
    if opts.integrator != FlowIntegrator::ProjectedEuler {
        return Err(Error::Unsupported("the backstepping loop integrates with projected Euler only".into()));
    }
    let n = sys.agents();
    let depth = sys.depth();
    if problem.agents() != n {
        return Err(Error::DimensionMismatch { expected: n, got: problem.agents() });
    }
    if initial.len() != depth || initial.iter().any(|l| l.len() != n) {
        return Err(Error::DimensionMismatch { expected: n * depth, got: initial.iter().map(Vec::len).sum() });
    }
    if mode == Alg2Mode::XDomain && depth != 2 {
        return Err(Error::Unsupported(format!("x-domain simulation needs chain depth 2, got {depth}")));
    }
    problem.validate_state(&PrimalDualState { w: initial[0].clone(), lambda: lambda0.to_vec(), mu: mu0.to_vec() })?;
    if let Some(r) = reference {
        if r.aux.len() != n * depth || r.lambda.len() != lambda0.len() || r.mu.len() != mu0.len() {
            return Err(Error::DimensionMismatch { expected: n * depth, got: r.aux.len() });
        }
    }

    let h = opts.h;
    let k1 = gains.k1;
    let physical = depth == 2;
    let mut zs = if physical {
        ZState { z: forward_transform_2(sys, problem, k1, initial, lambda0, mu0)?, lambda: lambda0.to_vec(), mu: mu0.to_vec() }
    } else {
        ZState { z: initial.to_vec(), lambda: lambda0.to_vec(), mu: mu0.to_vec() }
    };
    let mut x = if physical { initial.to_vec() } else { Vec::new() };
    let mut samples = Vec::with_capacity(steps / opts.record_every + 2);
    let mut stats = reference.map(|_| LyapunovStats::new(h));
    let lyap = |zs: &ZState| reference.map(|r| r.lyapunov(&agent_major(&zs.z), &zs.lambda, &zs.mu));
    let mut v_now = lyap(&zs);

    for k in 0..=steps {
        let t = k as f64 * h;
        let u = if physical {
            if mode == Alg2Mode::ZDomain && opts.records(k, steps) {
                x = inverse_transform_2(sys, problem, k1, &zs.z, &zs.lambda, &zs.mu)?;
            }
            if mode == Alg2Mode::XDomain || opts.records(k, steps) {
                control_law_nonlinear_2(sys, problem, gains, &x, &zs.lambda, &zs.mu)?
            } else {
                Vec::new()
            }
        } else {
            Vec::new()
        };
        if opts.records(k, steps) {
            let aux = agent_major(&zs.z);
            let xf = agent_major(&x);
            let pd = PrimalDualState { w: zs.z[0].clone(), lambda: zs.lambda.clone(), mu: zs.mu.clone() };
            let s = Sample {
                t,
                err_phys: reference.filter(|_| physical).map(|r| l2_dist(&xf, &r.x)),
                err_dm: reference.map(|r| l2_dist(&aux, &r.aux)),
                tracking: zs.z[1..].iter().map(|l| inf_norm(l)).fold(0.0, f64::max),
                x: xf,
                u: u.clone(),
                aux,
                lambda: zs.lambda.clone(),
                mu: zs.mu.clone(),
                kkt: problem.kkt_residual(&pd)?,
                lyapunov: v_now,
            };
            let vals = [
                ("kkt", s.kkt),
                ("V", s.lyapunov.unwrap_or(0.0)),
                ("err_phys", s.err_phys.unwrap_or(0.0)),
                ("tracking", s.tracking),
            ];
            check_monitors(t, &vals, &[("x", &s.x), ("u", &s.u)], &samples, || Some(s.clone()))?;
            samples.push(s);
        }
        if k == steps {
            break;
        }
        match mode {
            Alg2Mode::ZDomain => zs = z_step(problem, gains, &zs, h)?,
            Alg2Mode::XDomain => {
                let dx = dynamics(sys, &x, &u);
                let (lambda, mu) = problem.dual_step(&x[0], &zs.lambda, &zs.mu, h * k1);
                for (layer, d) in x.iter_mut().zip(&dx) {
                    for (v, dv) in layer.iter_mut().zip(d) {
                        *v += h * dv;
                    }
                }
                zs = ZState { z: forward_transform_2(sys, problem, k1, &x, &lambda, &mu)?, lambda, mu };
            }
        }
        if let (Some(st), Some(v)) = (stats.as_mut(), v_now) {
            let next = lyap(&zs).expect("reference present");
            st.push(v, next);
            v_now = Some(next);
        }
        let flat = agent_major(&zs.z);
        check_monitors(
            t + h,
            &[("V", v_now.unwrap_or(0.0))],
            &[("z", &flat), ("lambda", &zs.lambda), ("mu", &zs.mu)],
            &samples,
            || None,
        )?;
    }

    let layered = |p: &str| (0..n).flat_map(|i| (1..=depth).map(move |l| format!("{p}_{i}_{l}"))).collect();
    Ok(Trajectory {
        algorithm: Algorithm::Backstepping,
        h,
        record_every: opts.record_every,
        x_labels: if physical { layered("x") } else { Vec::new() },
        u_labels: if physical { (0..n).map(|i| format!("u_{i}")).collect() } else { Vec::new() },
        aux_labels: layered("z"),
        samples,
        lyapunov: stats,
    })
}

/// Primal-dual flow alone at unit rate; the physical channels stay empty.
pub fn simulate_flow(
    problem: &GnepProblem,
    start: &PrimalDualState,
    reference: Option<&Equilibrium>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let steps = opts.steps()?;
    problem.validate_state(start)?;
    if let Some(r) = reference {
        if r.aux.len() != start.w.len() || r.lambda.len() != start.lambda.len() || r.mu.len() != start.mu.len() {
            return Err(Error::DimensionMismatch { expected: start.w.len(), got: r.aux.len() });
        }
    }
    let h = opts.h;
    let mut pd = start.clone();
    let mut samples = Vec::with_capacity(steps / opts.record_every + 2);
    let mut stats = reference.map(|_| LyapunovStats::new(h));
    let mut v_now = reference.map(|r| r.lyapunov(&pd.w, &pd.lambda, &pd.mu));
    for k in 0..=steps {
        let t = k as f64 * h;
        if opts.records(k, steps) {
            let s = Sample {
                t,
                x: Vec::new(),
                u: Vec::new(),
                aux: pd.w.clone(),
                lambda: pd.lambda.clone(),
                mu: pd.mu.clone(),
                kkt: problem.kkt_residual(&pd)?,
                lyapunov: v_now,
                err_phys: None,
                err_dm: reference.map(|r| l2_dist(&pd.w, &r.aux)),
                tracking: 0.0,
            };
            let vals = [("kkt", s.kkt), ("V", s.lyapunov.unwrap_or(0.0))];
            check_monitors(t, &vals, &[], &samples, || Some(s.clone()))?;
            samples.push(s);
        }
        if k == steps {
            break;
        }
        pd = problem.step_with(opts.integrator, &pd, h, 1.0)?;
        if let (Some(r), Some(st), Some(v)) = (reference, stats.as_mut(), v_now) {
            let next = r.lyapunov(&pd.w, &pd.lambda, &pd.mu);
            st.push(v, next);
            v_now = Some(next);
        }
        check_monitors(
            t + h,
            &[("V", v_now.unwrap_or(0.0))],
            &[("w", &pd.w), ("lambda", &pd.lambda), ("mu", &pd.mu)],
            &samples,
            || None,
        )?;
    }
    Ok(Trajectory {
        algorithm: Algorithm::FlowOnly,
        h,
        record_every: opts.record_every,
        x_labels: Vec::new(),
        u_labels: Vec::new(),
        aux_labels: linear_labels(problem.agent_dims(), "w"),
        samples,
        lyapunov: stats,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceMetrics {
    pub times: Vec<f64>,
    pub err_phys: Vec<f64>,
    pub err_dm: Vec<f64>,
    pub final_err_phys: f64,
    pub final_err_dm: f64,
    pub kkt_final: f64,
    pub lyapunov_monotone_fraction: f64,
}

impl ConvergenceMetrics {
    pub fn settle_time_phys(&self, tol: f64) -> Option<f64> {
        settle_time(&self.times, &self.err_phys, tol)
    }

    pub fn settle_time_dm(&self, tol: f64) -> Option<f64> {
        settle_time(&self.times, &self.err_dm, tol)
    }
}

/// First recorded time after which `values` stays below `tol`.
pub fn settle_time(times: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    let last_bad = values.iter().rposition(|v| !(*v < tol));
    match last_bad {
        None => times.first().copied(),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// ‖Y(t) − Y*‖₂ series for both channels and the Lyapunov decrease fraction.
///
/// Uses the per-step Lyapunov statistics when the run tracked them, otherwise
/// compares consecutive recorded samples with the allowance scaled by the
/// recording stride.
pub fn convergence_metrics(traj: &Trajectory, reference: &Equilibrium) -> Result<ConvergenceMetrics> {
    let s0 = traj.samples.first().ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    if s0.aux.len() != reference.aux.len() || (!s0.x.is_empty() && s0.x.len() != reference.x.len()) {
        return Err(Error::DimensionMismatch { expected: s0.aux.len(), got: reference.aux.len() });
    }
    let times = traj.times();
    let err_phys: Vec<f64> =
        traj.samples.iter().map(|s| if s.x.is_empty() { 0.0 } else { l2_dist(&s.x, &reference.x) }).collect();
    let err_dm: Vec<f64> = traj.samples.iter().map(|s| l2_dist(&s.aux, &reference.aux)).collect();
    let fraction = match traj.lyapunov {
        Some(st) => st.monotone_fraction(),
        None => {
            let v: Vec<f64> = traj.samples.iter().map(|s| reference.lyapunov(&s.aux, &s.lambda, &s.mu)).collect();
            let allow = LYAPUNOV_ALLOWANCE * traj.h * traj.h * traj.record_every as f64;
            let pairs = v.len().saturating_sub(1);
            if pairs == 0 {
                1.0
            } else {
                1.0 - v.windows(2).filter(|w| w[1] - w[0] > allow).count() as f64 / pairs as f64
            }
        }
    };
    Ok(ConvergenceMetrics {
        final_err_phys: *err_phys.last().expect("nonempty"),
        final_err_dm: *err_dm.last().expect("nonempty"),
        kkt_final: traj.last().kkt,
        lyapunov_monotone_fraction: fraction,
        times,
        err_phys,
        err_dm,
    })
}

/// Final metrics of a run, serialized as TOML.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub h: f64,
    pub horizon: f64,
    pub samples: usize,
    pub final_kkt: f64,
    pub final_tracking: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_err_phys: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_err_dm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_time_phys: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_worst_increase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_monotone_fraction: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

impl RunSummary {
    pub fn from_trajectory(traj: &Trajectory, settle_tol: f64) -> Self {
        let last = traj.last();
        let times = traj.times();
        let phys: Option<Vec<f64>> = traj.samples.iter().map(|s| s.err_phys).collect();
        RunSummary {
            algorithm: traj.algorithm,
            h: traj.h,
            horizon: last.t,
            samples: traj.samples.len(),
            final_kkt: last.kkt,
            final_tracking: last.tracking,
            final_err_phys: last.err_phys,
            final_err_dm: last.err_dm,
            settle_time_phys: phys.and_then(|p| settle_time(&times, &p, settle_tol)),
            lyapunov_steps: traj.lyapunov.map(|s| s.steps),
            lyapunov_violations: traj.lyapunov.map(|s| s.violations),
            lyapunov_worst_increase: traj.lyapunov.map(|s| s.worst_increase),
            lyapunov_monotone_fraction: traj.lyapunov.map(|s| s.monotone_fraction()),
            extra: BTreeMap::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary fields are plain values")
    }
}

/// Runs independent jobs on the rayon pool, preserving input order.
pub fn parallel_sweep<T, R, F>(jobs: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    jobs.par_iter().map(f).collect()
}
