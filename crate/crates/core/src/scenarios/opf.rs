//! Swing-equation network with a DC optimal-power-flow game.
//!
//! Per-bus state (δ, ω, P_M, P_v) with δ the phase in the frame rotating at
//! 2πω̃, input P_ref. The game is played over w_i = (P_M,i, θ_i); auxiliary
//! state/input targets come from the affine steady-state lift.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnep::GnepProblem;
use crate::graph::CommGraph;
use crate::linctrl::LinearNetwork;
use crate::oracle::QuadraticGnep;

use super::AuxLift;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusParams {
    pub m: f64,
    pub d: f64,
    pub r: f64,
    pub t_ch: f64,
    pub t_g: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub pm_max: f64,
    pub pm_min: f64,
    pub p_load: f64,
}

impl Default for BusParams {
    fn default() -> Self {
        BusParams {
            m: 10.0,
            d: 1.0,
            r: 0.05,
            t_ch: 0.3,
            t_g: 0.2,
            a: 0.1,
            b: 10.0,
            c: 0.0,
            pm_max: 100.0,
            pm_min: 10.0,
            p_load: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpfParams {
    pub buses: Vec<BusParams>,
    /// Line stiffness t_ij, aligned with `CommGraph::edges()`.
    pub line_t: Vec<f64>,
    pub line_capacity: Vec<f64>,
    pub omega_ref: f64,
}

impl OpfParams {
    pub fn uniform(graph: &CommGraph, bus: BusParams, t: f64, capacity: f64) -> Self {
        OpfParams {
            buses: vec![bus; graph.node_count()],
            line_t: vec![t; graph.edges().len()],
            line_capacity: vec![capacity; graph.edges().len()],
            omega_ref: 60.0,
        }
    }

    /// Paper defaults on the given topology.
    pub fn defaults(graph: &CommGraph) -> Self {
        Self::uniform(graph, BusParams::default(), 1.5, 80.0)
    }

    pub fn validate(&self, graph: &CommGraph) -> Result<()> {
        if self.buses.len() != graph.node_count() {
            return Err(Error::DimensionMismatch { expected: graph.node_count(), got: self.buses.len() });
        }
        if self.line_t.len() != graph.edges().len() || self.line_capacity.len() != graph.edges().len() {
            return Err(Error::DimensionMismatch { expected: graph.edges().len(), got: self.line_t.len() });
        }
        for (i, p) in self.buses.iter().enumerate() {
            let bad = |what: &str| Err(Error::InvalidParameter(format!("bus {i}: {what}")));
            if !(p.a > 0.0) {
                return bad("cost coefficient a must be positive");
            }
            if !(p.m > 0.0 && p.t_ch > 0.0 && p.t_g > 0.0 && p.r > 0.0) {
                return bad("m, T_CH, T_G and R must be positive");
            }
            if !(p.pm_min <= p.pm_max) {
                return bad("P_M lower limit exceeds upper limit");
            }
            if !p.d.is_finite() || !p.b.is_finite() || !p.c.is_finite() || !p.p_load.is_finite() {
                return bad("non-finite parameter");
            }
        }
        if self.line_t.iter().any(|t| !(*t > 0.0)) || self.line_capacity.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::InvalidParameter("line stiffness and capacity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OpfScenario {
    pub graph: CommGraph,
    pub params: OpfParams,
    pub network: LinearNetwork,
    pub game: QuadraticGnep,
    pub problem: GnepProblem,
    pub lift: AuxLift,
}

impl OpfScenario {
    pub fn buses(&self) -> usize {
        self.graph.node_count()
    }

    /// Σ_j t_ij over the lines at bus i.
    pub fn stiffness_sum(&self, i: usize) -> f64 {
        self.graph
            .edges()
            .iter()
            .zip(&self.params.line_t)
            .filter(|((a, b), _)| *a == i || *b == i)
            .map(|(_, t)| t)
            .sum()
    }

    /// Default initial condition: δ = 0, ω = ω̃, P_M = P_v = P̲_M.
    pub fn initial_state(&self) -> Vec<f64> {
        self.params
            .buses
            .iter()
            .flat_map(|p| [0.0, self.params.omega_ref, p.pm_min, p.pm_min])
            .collect()
    }

    /// The explicit canonical transform Q_i and last-row vector T_i of bus i
    /// (T_i equals −a_i of the companion form).
    pub fn explicit_canonical(&self, i: usize) -> (DMatrix<f64>, Vec<f64>) {
        let p = &self.params.buses[i];
        let s = self.stiffness_sum(i);
        let (m, d, r, tch, tg) = (p.m, p.d, p.r, p.t_ch, p.t_g);
        let q = DMatrix::from_row_slice(
            4,
            4,
            &[
                m * tch * tg / (2.0 * PI),
                0.0,
                0.0,
                0.0,
                0.0,
                m * tch * tg,
                0.0,
                0.0,
                -tch * tg * s,
                -d * tch * tg,
                tch * tg,
                0.0,
                d * tch * tg * s / m,
                tch * tg * (d * d / m - 2.0 * PI * s),
                -tg * (d * tch / m + 1.0),
                tg,
            ],
        );
        let t = vec![
            -2.0 * PI * s / (m * tch * tg),
            -(d * r + 1.0 + 2.0 * PI * r * s * (tch + tg)) / (m * tch * tg * r),
            -(m + d * (tch + tg) + 2.0 * PI * tch * tg * s) / (m * tch * tg),
            -1.0 / tch - 1.0 / tg - d / m,
        ];
        (q, t)
    }

    /// Steady-state (P̃_M, P̃_ref) at bus i from the phase angles.
    pub fn steady_state_powers(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        let w = self.params.omega_ref;
        (0..self.buses())
            .map(|i| {
                let p = &self.params.buses[i];
                let flow: f64 = self
                    .graph
                    .edges()
                    .iter()
                    .zip(&self.params.line_t)
                    .filter_map(|(&(a, b), &t)| {
                        if a == i {
                            Some(t * (theta[a] - theta[b]))
                        } else if b == i {
                            Some(t * (theta[b] - theta[a]))
                        } else {
                            None
                        }
                    })
                    .sum();
                (p.d * w + flow + p.p_load, (p.d + 1.0 / p.r) * w + flow + p.p_load)
            })
            .collect()
    }
}

/// Builds dynamics, game and lift for the OPF case study on `graph`.
pub fn build_opf(graph: &CommGraph, params: &OpfParams) -> Result<OpfScenario> {
    params.validate(graph)?;
    let n_bus = graph.node_count();
    let w_ref = params.omega_ref;
    let n = 4 * n_bus;
    let mut a = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    let mut b = Vec::with_capacity(n_bus);
    let mut s = vec![0.0; n_bus];
    for (&(i, j), &t) in graph.edges().iter().zip(&params.line_t) {
        s[i] += t;
        s[j] += t;
        a[(4 * i + 1, 4 * j)] = t / params.buses[i].m;
        a[(4 * j + 1, 4 * i)] = t / params.buses[j].m;
    }
    for (i, p) in params.buses.iter().enumerate() {
        let o = 4 * i;
        a[(o, o + 1)] = 2.0 * PI;
        a[(o + 1, o)] = -s[i] / p.m;
        a[(o + 1, o + 1)] = -p.d / p.m;
        a[(o + 1, o + 2)] = 1.0 / p.m;
        a[(o + 2, o + 2)] = -1.0 / p.t_ch;
        a[(o + 2, o + 3)] = 1.0 / p.t_ch;
        a[(o + 3, o + 1)] = -1.0 / (p.t_g * p.r);
        a[(o + 3, o + 3)] = -1.0 / p.t_g;
        b.push(DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0 / p.t_g]));
        c[o] = -2.0 * PI * w_ref;
        c[o + 1] = -p.p_load / p.m;
    }
    let network = LinearNetwork::new(vec![4; n_bus], a, b, c)?;

    // game over w_i = (P_M,i, θ_i)
    let r = 2 * n_bus;
    let mut q = DMatrix::zeros(r, r);
    let mut bv = DVector::zeros(r);
    let mut e_mat = DMatrix::zeros(n_bus, r);
    let mut e_vec = DVector::zeros(n_bus);
    let mut lower = vec![f64::NEG_INFINITY; r];
    let mut upper = vec![f64::INFINITY; r];
    for (i, p) in params.buses.iter().enumerate() {
        q[(2 * i, 2 * i)] = 2.0 * p.a;
        q[(2 * i + 1, 2 * i + 1)] = 2.0;
        bv[2 * i] = p.b;
        lower[2 * i] = p.pm_min;
        upper[2 * i] = p.pm_max;
        // power balance: P_L − P_M + Dω̃ + Σ t_ij(θ_i − θ_j) = 0
        e_mat[(i, 2 * i)] = -1.0;
        e_vec[i] = p.p_load + p.d * w_ref;
    }
    let l = 2 * graph.edges().len();
    let mut c_mat = DMatrix::zeros(l, r);
    let mut d_vec = DVector::zeros(l);
    for (k, ((&(i, j), &t), &cap)) in graph.edges().iter().zip(&params.line_t).zip(&params.line_capacity).enumerate() {
        e_mat[(i, 2 * i + 1)] += t;
        e_mat[(i, 2 * j + 1)] -= t;
        e_mat[(j, 2 * j + 1)] += t;
        e_mat[(j, 2 * i + 1)] -= t;
        c_mat[(2 * k, 2 * i + 1)] = t;
        c_mat[(2 * k, 2 * j + 1)] = -t;
        c_mat[(2 * k + 1, 2 * i + 1)] = -t;
        c_mat[(2 * k + 1, 2 * j + 1)] = t;
        d_vec[2 * k] = -cap;
        d_vec[2 * k + 1] = -cap;
    }
    let game = QuadraticGnep {
        agent_dims: vec![2; n_bus],
        q,
        b: bv,
        e_mat,
        e_vec,
        c_mat,
        d_vec,
        lower,
        upper,
    };
    let costs: Vec<(f64, f64, f64)> = params.buses.iter().map(|p| (p.a, p.b, p.c)).collect();
    let problem = game
        .problem_builder()?
        .objective_value(move |i, w| {
            let (a, b, c) = costs[i];
            let (pm, th) = (w[2 * i], w[2 * i + 1]);
            a * pm * pm + b * pm + c + th * th
        })
        .build()?;

    let mut sm = DMatrix::zeros(n, r);
    let mut sc = DVector::zeros(n);
    let mut um = DMatrix::zeros(n_bus, r);
    let mut uc = DVector::zeros(n_bus);
    for (i, p) in params.buses.iter().enumerate() {
        sm[(4 * i, 2 * i + 1)] = 1.0;
        sc[4 * i + 1] = w_ref;
        sm[(4 * i + 2, 2 * i)] = 1.0;
        sm[(4 * i + 3, 2 * i)] = 1.0;
        um[(i, 2 * i)] = 1.0;
        uc[i] = w_ref / p.r;
    }
    let lift = AuxLift::new(sm, sc, um, uc)?;
    Ok(OpfScenario { graph: graph.clone(), params: params.clone(), network, game, problem, lift })
}
