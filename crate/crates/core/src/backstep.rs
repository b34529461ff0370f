//! Backstepping-based equilibrium seeking for strict-feedback networks.
//!
//! States are stored layer-major: `x[l][i]` is x_{i,l+1}. The chain of agent i is
//! ẋ_{iℓ} = Γ_{iℓ}(x^{[1∼ℓ]}) + Θ_{iℓ}(x^{[1∼ℓ]})·x_{i,ℓ+1}, with x_{i,n̄+1} = u_i.

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::gnep::{GnepProblem, PrimalDualState};

pub const THETA_GUARD: f64 = 1e-9;

pub trait StrictFeedbackSystem: Send + Sync {
    fn agents(&self) -> usize;
    fn depth(&self) -> usize;
    /// Γ_{iℓ} (ℓ is 1-based); only layers `0..level` of `x` are read.
    fn gamma(&self, i: usize, level: usize, x: &[Vec<f64>]) -> f64;
    fn theta(&self, i: usize, level: usize, x: &[Vec<f64>]) -> f64;
    /// ∂Γ_{i1}/∂x^{[1]}, needed by the depth-2 control law.
    fn gamma1_partials(&self, _i: usize, _x1: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// ∂Θ_{i1}/∂x^{[1]}, needed by the depth-2 control law.
    fn theta1_partials(&self, _i: usize, _x1: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

fn guarded_theta(sys: &dyn StrictFeedbackSystem, i: usize, level: usize, x: &[Vec<f64>]) -> Result<f64> {
    let v = sys.theta(i, level, x);
    if !(v.abs() >= THETA_GUARD) {
        return Err(Error::ThetaGuard { agent: i, level, value: v });
    }
    Ok(v)
}

/// Right-hand side of the strict-feedback chain.
pub fn dynamics(sys: &dyn StrictFeedbackSystem, x: &[Vec<f64>], u: &[f64]) -> Vec<Vec<f64>> {
    let depth = sys.depth();
    (0..depth)
        .map(|l| {
            (0..sys.agents())
                .map(|i| {
                    let next = if l + 1 < depth { x[l + 1][i] } else { u[i] };
                    sys.gamma(i, l + 1, x) + sys.theta(i, l + 1, x) * next
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonotonicitySource {
    Analytic,
    /// From a monotonicity probe only; a heuristic certificate.
    Probe,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacksteppingGains {
    pub k1: f64,
    /// `k[i][l]` is k_{i,l+2}.
    pub k: Vec<Vec<f64>>,
    pub m_est: f64,
    pub m_source: MonotonicitySource,
}

impl BacksteppingGains {
    pub fn uniform(agents: usize, depth: usize, k1: f64, k_rest: f64, m_est: f64) -> Self {
        BacksteppingGains {
            k1,
            k: vec![vec![k_rest; depth.saturating_sub(1)]; agents],
            m_est,
            m_source: MonotonicitySource::Analytic,
        }
    }
}

/// Checks k₁M > 1 and k_{iℓ} > 1; reports the first violation.
pub fn validate_gains(gains: &BacksteppingGains, m_est: f64) -> Result<()> {
    if !(m_est > 0.0) {
        return Err(Error::InvalidParameter(format!("monotonicity constant M = {m_est} must be positive")));
    }
    if !(gains.k1 * m_est > 1.0) {
        return Err(Error::GainViolation(format!("k1*M > 1 fails (k1 = {}, M = {m_est})", gains.k1)));
    }
    for (i, ks) in gains.k.iter().enumerate() {
        for (l, &k) in ks.iter().enumerate() {
            if !(k > 1.0) {
                return Err(Error::GainViolation(format!("k_i{} > 1 fails (agent {i}: k = {k})", l + 2)));
            }
        }
    }
    if gains.m_source == MonotonicitySource::Probe {
        log::warn!("monotonicity constant comes from a probe only; gain certification is heuristic");
    }
    Ok(())
}

/// Sum of all degree-`alpha` monomials (with repetition) in the first `beta`
/// gains; zero for `alpha <= 0`.
pub fn t_product(alpha: i64, beta: usize, gains: &[f64]) -> Result<f64> {
    if beta == 0 || beta > gains.len() {
        return Err(Error::InvalidParameter(format!("beta = {beta} outside 1..={}", gains.len())));
    }
    if alpha <= 0 {
        return Ok(0.0);
    }
    let alpha = alpha as usize;
    // complete homogeneous symmetric polynomial by dynamic programming
    let mut h = vec![0.0; alpha + 1];
    h[0] = 1.0;
    for &k in &gains[..beta] {
        for a in 1..=alpha {
            h[a] += k * h[a - 1];
        }
    }
    Ok(h[alpha])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZState {
    /// `z[l][i]` is z_{i,l+1}.
    pub z: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

fn check_scalar_agents(problem: &GnepProblem) -> Result<()> {
    if problem.agent_dims().iter().any(|&d| d != 1) {
        return Err(Error::Unsupported("strict-feedback games need scalar decisions per agent".into()));
    }
    if problem.local_sets().iter().any(|s| !s.is_all_space()) {
        return Err(Error::Unsupported("strict-feedback games need unconstrained local sets".into()));
    }
    Ok(())
}

/// One forward-Euler step of the transformed z-dynamics and the dual flow at rate k₁.
pub fn z_step(problem: &GnepProblem, gains: &BacksteppingGains, s: &ZState, h: f64) -> Result<ZState> {
    check_scalar_agents(problem)?;
    let depth = s.z.len();
    if depth == 0 || gains.k.len() != problem.agents() || gains.k.iter().any(|k| k.len() + 1 != depth) {
        return Err(Error::InvalidParameter("gain layout does not match the z state".into()));
    }
    let pd = PrimalDualState { w: s.z[0].clone(), lambda: s.lambda.clone(), mu: s.mu.clone() };
    // shared projected-Euler policy: z1 − h k1 ∇L and the dual update come from gnep
    let stepped = problem.primal_dual_step(&pd, h, gains.k1)?;
    let mut z = Vec::with_capacity(depth);
    let mut z1 = stepped.w;
    if depth > 1 {
        for (v, nx) in z1.iter_mut().zip(&s.z[1]) {
            *v += h * nx;
        }
    }
    z.push(z1);
    for l in 1..depth {
        let layer = (0..problem.agents())
            .map(|i| {
                let next = if l + 1 < depth { s.z[l + 1][i] } else { 0.0 };
                s.z[l][i] + h * (-gains.k[i][l - 1] * s.z[l][i] + next)
            })
            .collect();
        z.push(layer);
    }
    Ok(ZState { z, lambda: stepped.lambda, mu: stepped.mu })
}

fn check_depth2(sys: &dyn StrictFeedbackSystem, x: &[Vec<f64>]) -> Result<()> {
    if sys.depth() != 2 {
        return Err(Error::Unsupported(format!("x-domain maps need chain depth 2, got {}", sys.depth())));
    }
    if x.len() != 2 || x.iter().any(|l| l.len() != sys.agents()) {
        return Err(Error::DimensionMismatch { expected: 2 * sys.agents(), got: x.iter().map(|l| l.len()).sum() });
    }
    Ok(())
}

/// z₁ = x₁; z_{i2} = k₁∇_{z_{i1}}L_i + Θ_{i1} x_{i2} + Γ_{i1}.
pub fn forward_transform_2(
    sys: &dyn StrictFeedbackSystem,
    problem: &GnepProblem,
    k1: f64,
    x: &[Vec<f64>],
    lambda: &[f64],
    mu: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_depth2(sys, x)?;
    let grad = problem.full_lagrangian_gradient(&x[0], lambda, mu);
    let z2 = (0..sys.agents())
        .map(|i| Ok(k1 * grad[i] + guarded_theta(sys, i, 1, x)? * x[1][i] + sys.gamma(i, 1, x)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vec![x[0].clone(), z2])
}

/// Algebraic inverse of [`forward_transform_2`].
pub fn inverse_transform_2(
    sys: &dyn StrictFeedbackSystem,
    problem: &GnepProblem,
    k1: f64,
    z: &[Vec<f64>],
    lambda: &[f64],
    mu: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_depth2(sys, z)?;
    let grad = problem.full_lagrangian_gradient(&z[0], lambda, mu);
    let x1 = vec![z[0].clone()];
    let x2 = (0..sys.agents())
        .map(|i| {
            let th = guarded_theta(sys, i, 1, &x1)?;
            Ok((z[1][i] - k1 * grad[i] - sys.gamma(i, 1, &x1)) / th)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vec![z[0].clone(), x2])
}

/// Depth-2 backstepping control law; total derivatives expanded by the chain rule.
pub fn control_law_nonlinear_2(
    sys: &dyn StrictFeedbackSystem,
    problem: &GnepProblem,
    gains: &BacksteppingGains,
    x: &[Vec<f64>],
    lambda: &[f64],
    mu: &[f64],
) -> Result<Vec<f64>> {
    check_depth2(sys, x)?;
    let n = sys.agents();
    let k1 = gains.k1;
    let x1 = &x[0];
    let x2 = &x[1];
    let theta1 = (0..n).map(|i| guarded_theta(sys, i, 1, x)).collect::<Result<Vec<f64>>>()?;
    let x1dot: Vec<f64> = (0..n).map(|i| sys.gamma(i, 1, x) + theta1[i] * x2[i]).collect();
    let lambda_dot: Vec<f64> = problem.equality(x1).iter().map(|h| k1 * h).collect();
    let g: Vec<f64> = problem.inequality(x1).iter().map(|v| k1 * v).collect();
    let mu_dot = ConvexSet::NonnegativeOrthant(mu.len()).project_vector(mu, &g)?;
    let grad = problem.full_lagrangian_gradient(x1, lambda, mu);
    let curvature = problem.hessian_action(x1, lambda, mu, &x1dot)?;
    // d/dt of the multiplier part: Eᵀλ̇ + ∇Gᵀμ̇
    let dual_rate = problem.multiplier_gradient(x1, &lambda_dot, &mu_dot);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let dgamma = sys.gamma1_partials(i, x1).ok_or(Error::MissingDerivative("gamma1_partials"))?;
        let dtheta = sys.theta1_partials(i, x1).ok_or(Error::MissingDerivative("theta1_partials"))?;
        let gamma_dot: f64 = dgamma.iter().zip(&x1dot).map(|(a, b)| a * b).sum();
        let theta_dot: f64 = dtheta.iter().zip(&x1dot).map(|(a, b)| a * b).sum();
        let z2 = k1 * grad[i] + theta1[i] * x2[i] + sys.gamma(i, 1, x);
        let d_virtual = k1 * (curvature[i] + dual_rate[i]) + gamma_dot;
        let theta2 = guarded_theta(sys, i, 2, x)?;
        let k_i2 = gains.k[i][0];
        let bracket = k_i2 * z2 + d_virtual + x2[i] * theta_dot + theta1[i] * sys.gamma(i, 2, x);
        u.push(-bracket / (theta1[i] * theta2));
    }
    Ok(u)
}

/// Steady-state map: x̃_{i,ℓ+1} = −Γ_{iℓ}/Θ_{iℓ} for ℓ < n̄, ũ_i = −Γ_{in̄}/Θ_{in̄}.
pub fn steady_state_manifold(sys: &dyn StrictFeedbackSystem, x1: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = sys.agents();
    if x1.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x1.len() });
    }
    let mut x = vec![x1.to_vec()];
    for level in 1..=sys.depth() {
        let next = (0..n)
            .map(|i| Ok(-sys.gamma(i, level, &x) / guarded_theta(sys, i, level, &x)?))
            .collect::<Result<Vec<f64>>>()?;
        if level < sys.depth() {
            x.push(next);
        } else {
            return Ok((x, next));
        }
    }
    unreachable!("depth is at least one")
}
