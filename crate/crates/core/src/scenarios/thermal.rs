//! Multi-zone building temperature regulation with a two-state RC model per zone.
//!
//! x_{i1} is the slow (mass) temperature, x_{i2} the zone air temperature,
//! u_i the supply-air heating offset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backstep::{BacksteppingGains, MonotonicitySource, StrictFeedbackSystem};
use crate::error::{Error, Result};
use crate::gnep::GnepProblem;
use crate::graph::CommGraph;
use crate::linalg::min_sym_eigen;
use crate::oracle::QuadraticGnep;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneParams {
    pub c1: f64,
    pub c2: f64,
    pub m_s: f64,
    pub r: f64,
    pub r_ji: f64,
    pub r_oa: f64,
    pub p_d: f64,
    pub t_ref: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub c1x: f64,
    pub c2x: f64,
    pub cu: f64,
}

impl Default for ZoneParams {
    fn default() -> Self {
        ZoneParams {
            c1: 9163.0,
            c2: 169400.0,
            m_s: 0.01,
            r: 1.7,
            r_ji: 2.0,
            r_oa: 57.0,
            p_d: 0.1,
            t_ref: 21.6,
            t_lo: 20.6,
            t_hi: 21.7,
            u_lo: -30.0,
            u_hi: 8.0,
            c1x: 10.0,
            c2x: 10.0,
            cu: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalParams {
    pub zones: Vec<ZoneParams>,
    pub c_p: f64,
    pub t_oa: f64,
    pub k1: f64,
    pub k_i2: f64,
}

impl ThermalParams {
    pub fn uniform(zones: usize, zone: ZoneParams) -> Self {
        ThermalParams { zones: vec![zone; zones], c_p: 1012.0, t_oa: 25.0, k1: 0.1, k_i2: 1.2 }
    }

    pub fn defaults(zones: usize) -> Self {
        Self::uniform(zones, ZoneParams::default())
    }
}

/// The RC chain in strict-feedback form.
#[derive(Clone, Debug)]
pub struct ThermalSystem {
    zones: Vec<ZoneParams>,
    neighbors: Vec<Vec<usize>>,
    c_p: f64,
    d: Vec<f64>,
}

impl ThermalSystem {
    /// d_i = m̄ˢc_p T_oa + T_oa/R_oa + P_d.
    pub fn disturbance(&self, i: usize) -> f64 {
        self.d[i]
    }
}

impl StrictFeedbackSystem for ThermalSystem {
    fn agents(&self) -> usize {
        self.zones.len()
    }

    fn depth(&self) -> usize {
        2
    }

    fn gamma(&self, i: usize, level: usize, x: &[Vec<f64>]) -> f64 {
        let z = &self.zones[i];
        match level {
            1 => -x[0][i] / (z.c2 * z.r),
            _ => {
                let (x1, x2) = (x[0][i], x[1][i]);
                let nb: f64 = self.neighbors[i].iter().map(|&j| (x[1][j] - x2) / z.r_ji).sum();
                ((x1 - x2) / z.r - z.m_s * self.c_p * x2 - x2 / z.r_oa + nb + self.d[i]) / z.c1
            }
        }
    }

    fn theta(&self, i: usize, level: usize, _x: &[Vec<f64>]) -> f64 {
        let z = &self.zones[i];
        match level {
            1 => 1.0 / (z.c2 * z.r),
            _ => z.m_s * self.c_p / z.c1,
        }
    }

    fn gamma1_partials(&self, i: usize, x1: &[f64]) -> Option<Vec<f64>> {
        let z = &self.zones[i];
        let mut g = vec![0.0; x1.len()];
        g[i] = -1.0 / (z.c2 * z.r);
        Some(g)
    }

    fn theta1_partials(&self, _i: usize, x1: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x1.len()])
    }
}

#[derive(Clone, Debug)]
pub struct ThermalScenario {
    pub graph: CommGraph,
    pub params: ThermalParams,
    pub system: ThermalSystem,
    pub game: QuadraticGnep,
    pub problem: GnepProblem,
    /// Exact strong-monotonicity constant of the game.
    pub m_est: f64,
    pub gains: BacksteppingGains,
    /// p_i = m̄ˢc_p + 1/R_oa + Σ 1/R_ji.
    pub p: Vec<f64>,
}

impl ThermalScenario {
    pub fn zones(&self) -> usize {
        self.params.zones.len()
    }

    /// All temperatures at the outside-air value.
    pub fn initial_state(&self) -> Vec<Vec<f64>> {
        vec![vec![self.params.t_oa; self.zones()]; 2]
    }

    /// Manifold-substituted input (1/(m̄ˢc_p))(p_i x_i1 − Σ x_j1/R_ji − d_i).
    pub fn manifold_input(&self, x1: &[f64]) -> Vec<f64> {
        (0..self.zones())
            .map(|i| {
                let z = &self.params.zones[i];
                let nb: f64 = self.graph.neighbors(i).iter().map(|&j| x1[j] / z.r_ji).sum();
                (self.p[i] * x1[i] - nb - self.system.d[i]) / (z.m_s * self.params.c_p)
            })
            .collect()
    }

    /// Both sides of 2(c̄ˣ + c̄ᵘp_i) > Σ_j (c̄ᵢᵘ + c̄ⱼᵘ)/R_ij, per zone.
    pub fn monotonicity_margins(&self) -> Vec<(f64, f64)> {
        monotonicity_sides(&self.graph, &self.params, &self.p)
    }
}

fn cbar(params: &ThermalParams, i: usize) -> (f64, f64) {
    let z = &params.zones[i];
    let ms_cp = z.m_s * params.c_p;
    (z.c1x + z.c2x, z.cu / (ms_cp * ms_cp))
}

fn monotonicity_sides(graph: &CommGraph, params: &ThermalParams, p: &[f64]) -> Vec<(f64, f64)> {
    (0..params.zones.len())
        .map(|i| {
            let (cx, cu) = cbar(params, i);
            let rhs: f64 = graph
                .neighbors(i)
                .iter()
                .map(|&j| (cu + cbar(params, j).1) / params.zones[i].r_ji)
                .sum();
            (2.0 * (cx + cu * p[i]), rhs)
        })
        .collect()
}

/// Builds the thermal case study on a zone adjacency graph (a path by default).
pub fn build_thermal(graph: &CommGraph, params: &ThermalParams) -> Result<ThermalScenario> {
    let n = graph.node_count();
    if params.zones.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: params.zones.len() });
    }
    for (i, z) in params.zones.iter().enumerate() {
        let positive = [z.c1, z.c2, z.m_s, z.r, z.r_ji, z.r_oa];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(format!("zone {i}: capacitances, resistances and flow must be positive")));
        }
        if !(z.t_lo <= z.t_hi && z.u_lo <= z.u_hi) {
            return Err(Error::InvalidParameter(format!("zone {i}: inverted temperature or input bounds")));
        }
        if !(z.c1x >= 0.0 && z.c2x >= 0.0 && z.cu >= 0.0) {
            return Err(Error::InvalidParameter(format!("zone {i}: weights must be nonnegative")));
        }
    }
    if !(params.c_p > 0.0) {
        return Err(Error::InvalidParameter("c_p must be positive".into()));
    }
    let d: Vec<f64> = params
        .zones
        .iter()
        .map(|z| z.m_s * params.c_p * params.t_oa + params.t_oa / z.r_oa + z.p_d)
        .collect();
    let p: Vec<f64> = (0..n)
        .map(|i| {
            let z = &params.zones[i];
            z.m_s * params.c_p + 1.0 / z.r_oa + graph.neighbors(i).len() as f64 / z.r_ji
        })
        .collect();
    for (i, (lhs, rhs)) in monotonicity_sides(graph, params, &p).into_iter().enumerate() {
        if !(lhs > rhs) {
            return Err(Error::InvalidParameter(format!(
                "zone {i}: strong-monotonicity condition fails ({lhs} <= {rhs})"
            )));
        }
    }

    // P x gives p_i x_i − Σ x_j/R_ji per zone
    let mut pm = DMatrix::zeros(n, n);
    for i in 0..n {
        pm[(i, i)] = p[i];
        for &j in graph.neighbors(i) {
            pm[(i, j)] = -1.0 / params.zones[i].r_ji;
        }
    }
    let mut q = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let (cx, cu) = cbar(params, i);
        let z = &params.zones[i];
        for j in 0..n {
            q[(i, j)] = 2.0 * cu * p[i] * pm[(i, j)];
        }
        q[(i, i)] += 2.0 * cx;
        b[i] = -2.0 * cx * z.t_ref - 2.0 * cu * p[i] * d[i];
    }
    // rows: upper input bound, lower input bound, upper temperature, lower temperature
    let mut c_mat = DMatrix::zeros(4 * n, n);
    let mut d_vec = DVector::zeros(4 * n);
    for i in 0..n {
        let z = &params.zones[i];
        let ms_cp = z.m_s * params.c_p;
        for j in 0..n {
            c_mat[(i, j)] = pm[(i, j)];
            c_mat[(n + i, j)] = -pm[(i, j)];
        }
        d_vec[i] = -(ms_cp * z.u_hi + d[i]);
        d_vec[n + i] = ms_cp * z.u_lo + d[i];
        c_mat[(2 * n + i, i)] = 1.0;
        d_vec[2 * n + i] = -z.t_hi;
        c_mat[(3 * n + i, i)] = -1.0;
        d_vec[3 * n + i] = z.t_lo;
    }
    let game = QuadraticGnep {
        agent_dims: vec![1; n],
        q: q.clone(),
        b,
        e_mat: DMatrix::zeros(0, n),
        e_vec: DVector::zeros(0),
        c_mat,
        d_vec,
        lower: vec![f64::NEG_INFINITY; n],
        upper: vec![f64::INFINITY; n],
    };
    let m_est = min_sym_eigen(&q);
    if !(m_est > 0.0) {
        return Err(Error::NotMonotone(m_est));
    }
    let costs: Vec<(f64, f64, f64)> = (0..n).map(|i| (cbar(params, i).0, cbar(params, i).1, params.zones[i].t_ref)).collect();
    let (pm_v, d_v) = (pm.clone(), d.clone());
    let problem = game
        .problem_builder()?
        .objective_value(move |i, w| {
            let (cx, cu, t_ref) = costs[i];
            let s: f64 = (0..w.len()).map(|j| pm_v[(i, j)] * w[j]).sum::<f64>() - d_v[i];
            cx * (w[i] - t_ref).powi(2) + cu * s * s
        })
        .build()?;
    let system = ThermalSystem {
        zones: params.zones.clone(),
        neighbors: (0..n).map(|i| graph.neighbors(i).to_vec()).collect(),
        c_p: params.c_p,
        d,
    };
    let gains = BacksteppingGains {
        k1: params.k1,
        k: vec![vec![params.k_i2]; n],
        m_est,
        m_source: MonotonicitySource::Analytic,
    };
    Ok(ThermalScenario { graph: graph.clone(), params: params.clone(), system, game, problem, m_est, gains, p })
}
