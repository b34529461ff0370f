//! Generalized Nash equilibrium problems with shared affine equality and
//! convex inequality constraints, and the projected primal-dual flow.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convex::{ConvexSet, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;

pub type ObjectiveGradFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;
pub type ObjectiveValueFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;
pub type ConstraintFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
/// `(w, lambda, mu, direction)` to `D_w(∇_{w_i} L_i)·direction`, stacked over all agents.
pub type HessianActionFn = dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// Agents at or above this count evaluate their gradients on the rayon pool.
pub const DEFAULT_PARALLEL_MIN_AGENTS: usize = 16;

#[derive(Clone)]
struct Inequality {
    count: usize,
    value: Arc<ConstraintFn>,
    jacobian: Arc<JacobianFn>,
}

#[derive(Clone)]
pub struct GnepProblem {
    agent_dims: Vec<usize>,
    offsets: Vec<usize>,
    objective_grad: Arc<ObjectiveGradFn>,
    objective_value: Option<Arc<ObjectiveValueFn>>,
    eq_matrix: DMatrix<f64>,
    eq_offset: DVector<f64>,
    inequality: Option<Inequality>,
    local_sets: Vec<ConvexSet>,
    hessian_action: Option<Arc<HessianActionFn>>,
    parallel_min_agents: usize,
}

impl fmt::Debug for GnepProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GnepProblem")
            .field("agent_dims", &self.agent_dims)
            .field("m", &self.eq_count())
            .field("l", &self.ineq_count())
            .finish()
    }
}

pub struct GnepBuilder {
    problem: GnepProblem,
}

impl GnepBuilder {
    pub fn equality(mut self, e: DMatrix<f64>, offset: DVector<f64>) -> Self {
        self.problem.eq_matrix = e;
        self.problem.eq_offset = offset;
        self
    }

    pub fn inequality(
        mut self,
        count: usize,
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.problem.inequality = Some(Inequality { count, value: Arc::new(value), jacobian: Arc::new(jacobian) });
        self
    }

    pub fn objective_value(mut self, f: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.problem.objective_value = Some(Arc::new(f));
        self
    }

    pub fn local_sets(mut self, sets: Vec<ConvexSet>) -> Self {
        self.problem.local_sets = sets;
        self
    }

    pub fn hessian_action(
        mut self,
        f: impl Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.problem.hessian_action = Some(Arc::new(f));
        self
    }

    pub fn parallel_min_agents(mut self, n: usize) -> Self {
        self.problem.parallel_min_agents = n.max(1);
        self
    }

    pub fn build(self) -> Result<GnepProblem> {
        let p = self.problem;
        let r = p.total_dim();
        if p.agent_dims.is_empty() || p.agent_dims.contains(&0) {
            return Err(Error::InvalidParameter("agent dimensions must be positive".into()));
        }
        if p.eq_matrix.ncols() != r && p.eq_matrix.nrows() > 0 {
            return Err(Error::DimensionMismatch { expected: r, got: p.eq_matrix.ncols() });
        }
        if p.eq_offset.len() != p.eq_matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: p.eq_matrix.nrows(), got: p.eq_offset.len() });
        }
        if p.local_sets.len() != p.agent_dims.len() {
            return Err(Error::DimensionMismatch { expected: p.agent_dims.len(), got: p.local_sets.len() });
        }
        for (s, &d) in p.local_sets.iter().zip(&p.agent_dims) {
            if s.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.dim() });
            }
        }
        Ok(p)
    }
}

/// Primal-dual iterate `(w, λ, μ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualState {
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Time-stepping scheme for the primal-dual flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlowIntegrator {
    #[default]
    ProjectedEuler,
    /// Korpelevich-style predictor/corrector. Same fixed points and invariants as Euler.
    ProjectedExtragradient,
}

impl std::str::FromStr for FlowIntegrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(FlowIntegrator::ProjectedEuler),
            "extragradient" => Ok(FlowIntegrator::ProjectedExtragradient),
            other => Err(Error::Config(format!("unknown integrator '{other}' (expected euler|extragradient)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub min_ratio: f64,
    pub strictly_monotone_witnessed: bool,
}

impl GnepProblem {
    pub fn builder(
        agent_dims: Vec<usize>,
        objective_grad: impl Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> GnepBuilder {
        let mut offsets = Vec::with_capacity(agent_dims.len());
        let mut acc = 0;
        for &d in &agent_dims {
            offsets.push(acc);
            acc += d;
        }
        let local_sets = agent_dims.iter().map(|&d| ConvexSet::AllSpace(d)).collect();
        GnepBuilder {
            problem: GnepProblem {
                agent_dims,
                offsets,
                objective_grad: Arc::new(objective_grad),
                objective_value: None,
                eq_matrix: DMatrix::zeros(0, acc),
                eq_offset: DVector::zeros(0),
                inequality: None,
                local_sets,
                hessian_action: None,
                parallel_min_agents: DEFAULT_PARALLEL_MIN_AGENTS,
            },
        }
    }

    pub fn agents(&self) -> usize {
        self.agent_dims.len()
    }

    pub fn agent_dims(&self) -> &[usize] {
        &self.agent_dims
    }

    pub fn total_dim(&self) -> usize {
        self.agent_dims.iter().sum()
    }

    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.agent_dims[i]
    }

    pub fn eq_count(&self) -> usize {
        self.eq_matrix.nrows()
    }

    pub fn ineq_count(&self) -> usize {
        self.inequality.as_ref().map_or(0, |g| g.count)
    }

    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }

    pub fn local_sets(&self) -> &[ConvexSet] {
        &self.local_sets
    }

    pub fn joint_set(&self) -> ConvexSet {
        ConvexSet::product(self.local_sets.clone())
    }

    pub fn has_hessian_action(&self) -> bool {
        self.hessian_action.is_some()
    }

    pub fn parallel_threshold(&self) -> usize {
        self.parallel_min_agents
    }

    pub fn with_parallel_min_agents(mut self, n: usize) -> Self {
        self.parallel_min_agents = n.max(1);
        self
    }

    pub fn objective_value(&self, i: usize, w: &[f64]) -> Option<f64> {
        self.objective_value.as_ref().map(|f| f(i, w))
    }

    pub fn objective_grad(&self, i: usize, w: &[f64]) -> Vec<f64> {
        (self.objective_grad)(i, w)
    }

    /// H(w) = E·w + e.
    pub fn equality(&self, w: &[f64]) -> Vec<f64> {
        let wv = DVector::from_column_slice(w);
        let h = &self.eq_matrix * wv + &self.eq_offset;
        h.as_slice().to_vec()
    }

    pub fn inequality(&self, w: &[f64]) -> Vec<f64> {
        match &self.inequality {
            Some(g) => (g.value)(w),
            None => Vec::new(),
        }
    }

    pub fn inequality_jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        match &self.inequality {
            Some(g) => (g.jacobian)(w),
            None => DMatrix::zeros(0, w.len()),
        }
    }

    pub fn hessian_action(&self, w: &[f64], lambda: &[f64], mu: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        match &self.hessian_action {
            Some(f) => Ok(f(w, lambda, mu, dir)),
            None => Err(Error::MissingDerivative("hessian_action")),
        }
    }

    /// Pseudo-gradient ∇F(w) = (∇_{w_i} f_i(w))_i.
    pub fn pseudo_gradient(&self, w: &[f64]) -> Vec<f64> {
        let blocks = self.map_agents(|i| (self.objective_grad)(i, w));
        blocks.concat()
    }

    fn map_agents<T: Send>(&self, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
        let n = self.agents();
        if n >= self.parallel_min_agents {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    pub fn validate_state(&self, s: &PrimalDualState) -> Result<()> {
        if s.w.len() != self.total_dim() {
            return Err(Error::DimensionMismatch { expected: self.total_dim(), got: s.w.len() });
        }
        if s.lambda.len() != self.eq_count() {
            return Err(Error::DimensionMismatch { expected: self.eq_count(), got: s.lambda.len() });
        }
        if s.mu.len() != self.ineq_count() {
            return Err(Error::DimensionMismatch { expected: self.ineq_count(), got: s.mu.len() });
        }
        for i in 0..self.agents() {
            if !self.local_sets[i].contains(&s.w[self.block(i)], MEMBERSHIP_TOL) {
                return Err(Error::InvariantViolation(format!("w_{i} outside W_{i}")));
            }
        }
        if let Some(k) = s.mu.iter().position(|&m| !(m >= -MEMBERSHIP_TOL)) {
            return Err(Error::InvariantViolation(format!("mu_{k} = {} is negative", s.mu[k])));
        }
        Ok(())
    }

    /// Default starting point: w = Π_W(0), λ = 0, μ = 0.
    pub fn default_state(&self) -> PrimalDualState {
        let zero = vec![0.0; self.total_dim()];
        PrimalDualState {
            w: self.joint_set().project_point(&zero).expect("dimension matches"),
            lambda: vec![0.0; self.eq_count()],
            mu: vec![0.0; self.ineq_count()],
        }
    }

    /// Eᵀλ + ∇G(w)ᵀμ, the multiplier part of ∇_w L.
    pub fn multiplier_gradient(&self, w: &[f64], lambda: &[f64], mu: &[f64]) -> DVector<f64> {
        let r = self.total_dim();
        let mut t = DVector::zeros(r);
        if self.eq_count() > 0 {
            t += self.eq_matrix.tr_mul(&DVector::from_column_slice(lambda));
        }
        if self.ineq_count() > 0 {
            let j = self.inequality_jacobian(w);
            t += j.tr_mul(&DVector::from_column_slice(mu));
        }
        t
    }

    pub fn lagrangian_gradient(&self, s: &PrimalDualState, i: usize) -> Result<Vec<f64>> {
        if i >= self.agents() {
            return Err(Error::InvalidAgent(i));
        }
        self.validate_state(s)?;
        let t = self.multiplier_gradient(&s.w, &s.lambda, &s.mu);
        let g = (self.objective_grad)(i, &s.w);
        Ok(g.iter().zip(self.block(i)).map(|(gi, k)| gi + t[k]).collect())
    }

    /// Stacked ∇_{w_i} L_i over all agents, with no invariant checks.
    pub fn full_lagrangian_gradient(&self, w: &[f64], lambda: &[f64], mu: &[f64]) -> Vec<f64> {
        let t = self.multiplier_gradient(w, lambda, mu);
        let mut g = self.pseudo_gradient(w);
        for (gk, tk) in g.iter_mut().zip(t.iter()) {
            *gk += tk;
        }
        g
    }

    /// Dual update shared by both algorithms: λ += h k H(w), μ = max(0, μ + h k G(w)).
    pub fn dual_step(&self, w: &[f64], lambda: &[f64], mu: &[f64], hk: f64) -> (Vec<f64>, Vec<f64>) {
        let hv = self.equality(w);
        let gv = self.inequality(w);
        let lam = lambda.iter().zip(&hv).map(|(l, h)| l + hk * h).collect();
        let m = mu.iter().zip(&gv).map(|(m, g)| (m + hk * g).max(0.0)).collect();
        (lam, m)
    }

    fn euler_from(&self, base: &PrimalDualState, eval: &PrimalDualState, hk: f64) -> PrimalDualState {
        let grad = self.full_lagrangian_gradient(&eval.w, &eval.lambda, &eval.mu);
        let mut w = Vec::with_capacity(base.w.len());
        for i in 0..self.agents() {
            let b = self.block(i);
            let trial: Vec<f64> = base.w[b.clone()].iter().zip(&grad[b]).map(|(x, g)| x - hk * g).collect();
            w.extend(self.local_sets[i].project_point(&trial).expect("dimension checked"));
        }
        let hv = self.equality(&eval.w);
        let gv = self.inequality(&eval.w);
        let lambda = base.lambda.iter().zip(&hv).map(|(l, h)| l + hk * h).collect();
        let mu = base.mu.iter().zip(&gv).map(|(m, g)| (m + hk * g).max(0.0)).collect();
        PrimalDualState { w, lambda, mu }
    }

    fn check_step(h: f64, rate: f64) -> Result<()> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("step size h = {h} must be positive")));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("rate k = {rate} must be positive")));
        }
        Ok(())
    }

    /// One projected forward-Euler step of the primal-dual flow at rate `rate`.
    pub fn primal_dual_step(&self, s: &PrimalDualState, h: f64, rate: f64) -> Result<PrimalDualState> {
        Self::check_step(h, rate)?;
        self.validate_state(s)?;
        Ok(self.euler_from(s, s, h * rate))
    }

    pub fn step_with(
        &self,
        integrator: FlowIntegrator,
        s: &PrimalDualState,
        h: f64,
        rate: f64,
    ) -> Result<PrimalDualState> {
        Self::check_step(h, rate)?;
        self.validate_state(s)?;
        let hk = h * rate;
        Ok(match integrator {
            FlowIntegrator::ProjectedEuler => self.euler_from(s, s, hk),
            FlowIntegrator::ProjectedExtragradient => {
                let predicted = self.euler_from(s, s, hk);
                self.euler_from(s, &predicted, hk)
            }
        })
    }

    pub fn kkt_residual(&self, s: &PrimalDualState) -> Result<f64> {
        self.validate_state(s)?;
        let grad = self.full_lagrangian_gradient(&s.w, &s.lambda, &s.mu);
        let mut res = 0.0f64;
        for i in 0..self.agents() {
            let b = self.block(i);
            let neg: Vec<f64> = grad[b.clone()].iter().map(|g| -g).collect();
            let p = self.local_sets[i].project_vector(&s.w[b], &neg)?;
            res = res.max(inf_norm(&p));
        }
        res = res.max(inf_norm(&self.equality(&s.w)));
        let gv = self.inequality(&s.w);
        res = res.max(gv.iter().fold(0.0, |a, g| a.max(g.max(0.0))));
        let comp: f64 = s.mu.iter().zip(&gv).map(|(m, g)| m * g).sum();
        Ok(res.max(comp.abs()))
    }

    /// Random-pair probe of (w−w′)ᵀ(∇F(w)−∇F(w′))/‖w−w′‖². A probe, not a proof.
    pub fn monotonicity_probe(&self, sample_count: usize, region: &ConvexSet, seed: u64) -> Result<MonotonicityReport> {
        if sample_count < 2 {
            return Err(Error::InvalidParameter("sample_count must be at least 2".into()));
        }
        let r = self.total_dim();
        if region.dim() != r {
            return Err(Error::DimensionMismatch { expected: r, got: region.dim() });
        }
        let bounds = region.bounds();
        if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::DegenerateRegion);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            bounds.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect()
        };
        let mut min_ratio = f64::INFINITY;
        for _ in 0..sample_count {
            let mut attempts = 0;
            let (a, b) = loop {
                let a = draw(&mut rng);
                let b = draw(&mut rng);
                let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                if d2 > 1e-24 {
                    break (a, b);
                }
                attempts += 1;
                if attempts >= 100 {
                    return Err(Error::DegenerateRegion);
                }
            };
            let ga = self.pseudo_gradient(&a);
            let gb = self.pseudo_gradient(&b);
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..r {
                let d = a[k] - b[k];
                num += d * (ga[k] - gb[k]);
                den += d * d;
            }
            min_ratio = min_ratio.min(num / den);
        }
        Ok(MonotonicityReport { min_ratio, strictly_monotone_witnessed: min_ratio > 0.0 })
    }
}
