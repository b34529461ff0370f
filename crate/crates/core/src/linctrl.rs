//! Tracking control for linear networks: controllable-canonical transforms,
//! stabilizer and Lyapunov design, coupling bounds and the choice of ε.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{CommGraph, ConsensusTrace};
use crate::linalg::{max_abs, min_sym_eigen, norm1, rcond};

/// Multiplicative margin applied when deriving η from σ‖P₀‖₁.
pub const ETA_MARGIN: f64 = 1.01;
/// σ used for agents with no coupling at all.
pub const SIGMA_FLOOR: f64 = 1e-12 * ETA_MARGIN;
pub const DEFAULT_EPS_GRID: usize = 64;

/// ẋ = A x + B u + c, with scalar input per agent.
#[derive(Clone, Debug)]
pub struct LinearNetwork {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    a: DMatrix<f64>,
    b: Vec<DVector<f64>>,
    c: DVector<f64>,
}

impl LinearNetwork {
    pub fn new(dims: Vec<usize>, a: DMatrix<f64>, b: Vec<DVector<f64>>, c: DVector<f64>) -> Result<Self> {
        let n: usize = dims.iter().sum();
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("agent state dimensions must be positive".into()));
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        if b.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), got: b.len() });
        }
        for (bi, &d) in b.iter().zip(&dims) {
            if bi.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: bi.len() });
            }
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(LinearNetwork { dims, offsets, a, b, c })
    }

    pub fn agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.a.view((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j])).into_owned()
    }

    pub fn b(&self, i: usize) -> &DVector<f64> {
        &self.b[i]
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.c
    }

    /// A x + B u + c.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = &self.a * DVector::from_column_slice(x) + &self.c;
        for (i, &ui) in u.iter().enumerate() {
            let r = self.range(i);
            for (k, row) in r.enumerate() {
                out[row] += self.b[i][k] * ui;
            }
        }
        out.as_slice().to_vec()
    }

    /// ‖A x + B u + c‖∞, zero at a steady state.
    pub fn steady_state_residual(&self, x: &[f64], u: &[f64]) -> f64 {
        crate::linalg::inf_norm(&self.rhs(x, u))
    }
}

/// Characteristic polynomial coefficients [c₀, …, c_{n−1}] of `a`
/// (monic, s^n + Σ c_k s^k), by Faddeev–LeVerrier.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n - k + 1];
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs.truncate(n);
    coeffs
}

/// Companion matrix with unit superdiagonal and last row −a.
pub fn companion(a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut m = shift_matrix(n);
    for (j, v) in a.iter().enumerate() {
        m[(n - 1, j)] = -v;
    }
    m
}

/// Â_ii: unit superdiagonal, zero last row.
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 1..n {
        m[(j - 1, j)] = 1.0;
    }
    m
}

pub fn last_unit(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    e
}

/// S(ε) = diag(ε^{j−1}).
pub fn scaling(eps: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|j| eps.powi(j as i32))))
}

/// S̄(ε) = diag(ε^{j−n}).
pub fn scaling_bar(eps: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|j| eps.powi(j as i32 - (n as i32 - 1)))))
}

/// Similarity T with T A T⁻¹ = companion(a), T b = e_n.
pub fn to_controllable_canonical(a_ii: &DMatrix<f64>, b_i: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = a_ii.nrows();
    if a_ii.ncols() != n || b_i.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b_i.len() });
    }
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b_i.clone();
    for k in 0..n {
        ctrb.set_column(k, &col);
        col = a_ii * col;
    }
    let rc = rcond(&ctrb);
    if rc < 1e-10 {
        return Err(Error::NotControllable { agent: 0, rcond: rc });
    }
    let inv = ctrb.try_inverse().expect("rcond checked");
    let mut t = DMatrix::zeros(n, n);
    let mut row = inv.row(n - 1).into_owned();
    for k in 0..n {
        t.set_row(k, &row);
        row = &row * a_ii;
    }
    Ok((t, char_poly(a_ii)))
}

/// max(‖T A T⁻¹ − companion(a)‖_max, ‖T b − e_n‖_max).
pub fn companion_residual(a_ii: &DMatrix<f64>, b_i: &DVector<f64>, t: &DMatrix<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let Some(t_inv) = t.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let r1 = max_abs(&(t * a_ii * t_inv - companion(a)));
    let r2 = (t * b_i - last_unit(n)).amax();
    r1.max(r2)
}

/// K₀ = −[c₀, …, c_{n−1}] with (s − pole)^n = s^n + Σ c_k s^k.
pub fn design_stabilizer(n: usize, pole: f64) -> Result<Vec<f64>> {
    if !(pole < 0.0) {
        return Err(Error::InvalidParameter(format!("pole {pole} must be negative")));
    }
    let p = -pole;
    let mut binom = 1.0;
    let mut k0 = vec![0.0; n];
    // c_k = C(n, k) p^{n−k}
    for k in 0..n {
        k0[k] = -binom * p.powi((n - k) as i32);
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    Ok(k0)
}

/// Closed loop Â + B̂ K₀ in canonical coordinates.
pub fn closed_loop(k0: &[f64]) -> DMatrix<f64> {
    let k: Vec<f64> = k0.iter().map(|v| -v).collect();
    companion(&k)
}

/// Solves P A + Aᵀ P = −I through (Aᵀ⊗I + I⊗Aᵀ) vec(P) = −vec(I).
pub fn solve_lyapunov(a_cl: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_cl.nrows();
    let at = a_cl.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let big = at.kronecker(&id) + id.kronecker(&at);
    let rhs = -DVector::from_column_slice(id.as_slice());
    let lu = big.lu();
    let sol = lu.solve(&rhs).ok_or(Error::NotHurwitz(f64::NAN))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    let asym = max_abs(&(&p - p.transpose()));
    if !asym.is_finite() || asym > 1e-8 * max_abs(&p).max(1.0) {
        return Err(Error::NotHurwitz(f64::NAN));
    }
    let p = (&p + p.transpose()) * 0.5;
    let min_eig = min_sym_eigen(&p);
    if !(min_eig > 0.0) {
        return Err(Error::NotHurwitz(f64::NAN));
    }
    Ok(p)
}

pub fn lyapunov_residual(p: &DMatrix<f64>, a_cl: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    max_abs(&(p * a_cl + a_cl.transpose() * p + DMatrix::<f64>::identity(n, n)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaPath {
    /// All coupling blocks satisfy the lower-triangular condition.
    Triangular,
    /// No coupling at all; σ is the floor value.
    Uncoupled,
    /// Certified only on a finite ε grid (heuristic).
    GridOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaCertificate {
    pub sigma: f64,
    pub path: SigmaPath,
}

fn is_lower_triangular(m: &DMatrix<f64>) -> bool {
    let tol = 1e-11 * max_abs(m).max(1.0);
    (0..m.nrows()).all(|s| (s + 1..m.ncols()).all(|c| m[(s, c)].abs() <= tol))
}

/// Bounds ‖S_i(ε) Â_ij S_j⁻¹(ε)‖₁ uniformly in ε ∈ (0, 1) for one agent's
/// coupling blocks `hat` (j ≠ i).
pub fn certify_sigma(agent: usize, hat: &[DMatrix<f64>], eps_grid: usize) -> Result<SigmaCertificate> {
    let nonzero: Vec<&DMatrix<f64>> = hat.iter().filter(|m| max_abs(m) > 0.0).collect();
    if nonzero.iter().all(|m| max_abs(m) <= 1e-14) {
        return Ok(SigmaCertificate { sigma: SIGMA_FLOOR, path: SigmaPath::Uncoupled });
    }
    if nonzero.iter().all(|m| is_lower_triangular(m)) {
        let s = nonzero.iter().map(|m| norm1(m)).fold(0.0, f64::max);
        return Ok(SigmaCertificate { sigma: s * ETA_MARGIN, path: SigmaPath::Triangular });
    }
    if eps_grid < 2 {
        return Err(Error::InvalidParameter("eps_grid must have at least 2 points".into()));
    }
    let (lo, hi) = (1e-4f64, 1.0 - 1e-4);
    let ratio = (hi / lo).powf(1.0 / (eps_grid - 1) as f64);
    let value = |eps: f64| -> f64 {
        nonzero
            .iter()
            .map(|m| {
                let mut scaled = (*m).clone();
                for s in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        scaled[(s, c)] *= eps.powi(s as i32 - c as i32);
                    }
                }
                norm1(&scaled)
            })
            .fold(0.0, f64::max)
    };
    let grid: Vec<f64> = (0..eps_grid).map(|k| lo * ratio.powi(k as i32)).collect();
    let vals: Vec<f64> = grid.iter().map(|&e| value(e)).collect();
    if vals[0] > vals[1] * (1.0 + 1e-9) {
        return Err(Error::SigmaNotCertifiable {
            agent,
            reason: format!("coupling norm grows as eps -> 0 ({:e} at {:e})", vals[0], grid[0]),
        });
    }
    let sup = vals.iter().copied().fold(0.0, f64::max);
    Ok(SigmaCertificate { sigma: sup * ETA_MARGIN, path: SigmaPath::GridOnly })
}

/// ε = 1/(2√n(N−1)·max σ_i‖P₀ᵢ‖₁ + 2 + margin).
pub fn choose_epsilon(sigmas: &[f64], p0_norms: &[f64], n: usize, agents: usize, margin: f64) -> Result<f64> {
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon margin {margin} must be nonnegative")));
    }
    let eta = sigmas.iter().zip(p0_norms).map(|(s, p)| s * p).fold(0.0, f64::max);
    Ok(epsilon_from_eta(eta, n, agents, margin))
}

pub fn epsilon_from_eta(eta: f64, n: usize, agents: usize, margin: f64) -> f64 {
    let denom = 2.0 * (n as f64).sqrt() * (agents.saturating_sub(1)) as f64 * eta + 2.0 + margin;
    (1.0 / denom).min(1.0 - f64::EPSILON)
}

/// Per-agent canonical design data.
#[derive(Clone, Debug)]
pub struct CanonicalAgent {
    pub transform: DMatrix<f64>,
    pub coeffs: Vec<f64>,
    pub k0: Vec<f64>,
    pub p0: DMatrix<f64>,
    pub sigma: SigmaCertificate,
    /// (K_i(ε) + a_i)·T_i, evaluated at the shared ε.
    pub feedback_row: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CanonicalData {
    pub agents: Vec<CanonicalAgent>,
    /// Â_ij = T_i A_ij T_j⁻¹ for j ≠ i (diagonal entries unused).
    pub hat_blocks: Vec<Vec<DMatrix<f64>>>,
    pub epsilon: f64,
    pub per_agent_epsilon: Vec<f64>,
    pub consensus: ConsensusTrace,
    pub state_dim: usize,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DesignResiduals {
    pub companion: f64,
    pub lyapunov: f64,
    pub scaling_b: f64,
    pub scaling_a: f64,
}

impl DesignResiduals {
    pub fn max(&self) -> f64 {
        self.companion.max(self.lyapunov).max(self.scaling_b).max(self.scaling_a)
    }
}

/// (K(ε) + a)·T with K(ε) = (1/ε) K₀ S̄(ε).
pub fn feedback_row(t: &DMatrix<f64>, a: &[f64], k0: &[f64], eps: f64) -> Vec<f64> {
    let n = a.len();
    let k0m = DMatrix::from_row_slice(1, n, k0);
    let k = k0m * scaling_bar(eps, n) / eps + DMatrix::from_row_slice(1, n, a);
    (k * t).as_slice().to_vec()
}

/// u_i = (K_i(ε) + a_i) T_i (x_i − x̄_i) + ū_i.
pub fn control_law_linear(agent: &CanonicalAgent, x_i: &[f64], xbar_i: &[f64], ubar_i: f64) -> f64 {
    agent.feedback_row.iter().zip(x_i).zip(xbar_i).map(|((g, x), xb)| g * (x - xb)).sum::<f64>() + ubar_i
}

impl CanonicalData {
    /// Full design: canonical forms, K₀, P₀, σ, and ε agreed by max-consensus on `graph`.
    pub fn design(net: &LinearNetwork, graph: &CommGraph, pole: f64, margin: f64) -> Result<Self> {
        let n_agents = net.agents();
        if graph.node_count() != n_agents {
            return Err(Error::DimensionMismatch { expected: n_agents, got: graph.node_count() });
        }
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon margin {margin} must be nonnegative")));
        }
        let mut partial = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let (t, a) = to_controllable_canonical(&net.block(i, i), net.b(i)).map_err(|e| match e {
                Error::NotControllable { rcond, .. } => Error::NotControllable { agent: i, rcond },
                other => other,
            })?;
            let k0 = design_stabilizer(net.dims()[i], pole)?;
            let p0 = solve_lyapunov(&closed_loop(&k0))?;
            partial.push((t, a, k0, p0));
        }
        let inverses: Vec<DMatrix<f64>> = partial
            .iter()
            .map(|(t, ..)| t.clone().try_inverse().expect("canonical transform is invertible"))
            .collect();
        let mut hat_blocks = vec![Vec::with_capacity(n_agents); n_agents];
        for i in 0..n_agents {
            for j in 0..n_agents {
                let blk = if i == j {
                    DMatrix::zeros(net.dims()[i], net.dims()[j])
                } else {
                    &partial[i].0 * net.block(i, j) * &inverses[j]
                };
                hat_blocks[i].push(blk);
            }
        }
        let mut sigmas = Vec::with_capacity(n_agents);
        for (i, row) in hat_blocks.iter().enumerate() {
            let others: Vec<DMatrix<f64>> =
                row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.clone()).collect();
            sigmas.push(certify_sigma(i, &others, DEFAULT_EPS_GRID)?);
        }
        let n = net.state_dim();
        let eta0: Vec<f64> =
            partial.iter().zip(&sigmas).map(|(p, s)| s.sigma * norm1(&p.3) * ETA_MARGIN).collect();
        let consensus = graph.max_consensus(&eta0)?;
        let per_agent_epsilon: Vec<f64> =
            consensus.final_values().iter().map(|&eta| epsilon_from_eta(eta, n, n_agents, margin)).collect();
        let epsilon = per_agent_epsilon[0];
        if per_agent_epsilon.iter().any(|&e| e != epsilon) {
            return Err(Error::Consensus(format!("agents disagree on epsilon: {per_agent_epsilon:?}")));
        }
        let bound = 2.0 * (n as f64).sqrt() * (n_agents - 1) as f64
            * partial.iter().zip(&sigmas).map(|(p, s)| s.sigma * norm1(&p.3)).fold(0.0, f64::max)
            + 2.0;
        if !(1.0 / epsilon > bound) {
            return Err(Error::InvariantViolation(format!("1/eps = {} does not exceed {bound}", 1.0 / epsilon)));
        }
        let agents = partial
            .into_iter()
            .zip(sigmas)
            .map(|((t, a, k0, p0), sigma)| {
                let feedback_row = feedback_row(&t, &a, &k0, epsilon);
                CanonicalAgent { transform: t, coeffs: a, k0, p0, sigma, feedback_row }
            })
            .collect();
        Ok(CanonicalData { agents, hat_blocks, epsilon, per_agent_epsilon, consensus, state_dim: n, margin })
    }

    /// Design invariants evaluated at the chosen ε.
    pub fn residuals(&self, net: &LinearNetwork) -> DesignResiduals {
        let mut r = DesignResiduals::default();
        for (i, ag) in self.agents.iter().enumerate() {
            let ni = ag.coeffs.len();
            r.companion = r.companion.max(companion_residual(&net.block(i, i), net.b(i), &ag.transform, &ag.coeffs));
            r.lyapunov = r.lyapunov.max(lyapunov_residual(&ag.p0, &closed_loop(&ag.k0)));
            let (sb, sa) = scaling_identity_residuals(self.epsilon, ni);
            r.scaling_b = r.scaling_b.max(sb);
            r.scaling_a = r.scaling_a.max(sa);
        }
        r
    }
}

/// Residuals of S(ε)B̂ = ε^{n−1}B̂ and ε S(ε)Â = Â S(ε).
pub fn scaling_identity_residuals(eps: f64, n: usize) -> (f64, f64) {
    let s = scaling(eps, n);
    let b = last_unit(n);
    let a = shift_matrix(n);
    let rb = (&s * &b - &b * eps.powi(n as i32 - 1)).amax();
    let ra = max_abs(&(&s * &a * eps - &a * &s));
    (rb, ra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_input_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = DVector::from_column_slice(&[0.0, 1.0]);
        let (t, c) = to_controllable_canonical(&a, &b).unwrap();
        assert!(max_abs(&(t - DMatrix::identity(2, 2))) < 1e-15);
        assert_eq!(c, vec![2.0, 3.0]);
    }

    #[test]
    fn swing_toy_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0 * std::f64::consts::PI, 0.0, 0.0]);
        let b = DVector::from_column_slice(&[0.0, 1.0]);
        let (t, c) = to_controllable_canonical(&a, &b).unwrap();
        assert!(companion_residual(&a, &b, &t, &c) < 1e-12);
    }

    #[test]
    fn uncontrollable() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(matches!(to_controllable_canonical(&a, &b), Err(Error::NotControllable { .. })));
    }

    #[test]
    fn stabilizers() {
        assert_eq!(design_stabilizer(1, -1.0).unwrap(), vec![-1.0]);
        assert_eq!(design_stabilizer(2, -1.0).unwrap(), vec![-1.0, -2.0]);
        assert_eq!(design_stabilizer(4, -1.0).unwrap(), vec![-1.0, -4.0, -6.0, -4.0]);
        assert!(design_stabilizer(2, 0.0).is_err());
    }

    #[test]
    fn quartic_closed_loop_has_fourfold_pole() {
        let acl = closed_loop(&design_stabilizer(4, -1.0).unwrap());
        // (A + I)^4 = 0 exactly for a single Jordan block at −1
        let shifted = &acl + DMatrix::<f64>::identity(4, 4);
        let p4 = &shifted * &shifted * &shifted * &shifted;
        assert!(max_abs(&p4) < 1e-12);
        let cp = char_poly(&acl);
        for (c, e) in cp.iter().zip([1.0, 4.0, 6.0, 4.0]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        let p2 = solve_lyapunov(&(-DMatrix::<f64>::identity(2, 2))).unwrap();
        assert!(max_abs(&(p2 - DMatrix::<f64>::identity(2, 2) * 0.5)) < 1e-15);
        let acl = closed_loop(&design_stabilizer(2, -1.0).unwrap());
        let p3 = solve_lyapunov(&acl).unwrap();
        assert!(lyapunov_residual(&p3, &acl) < 1e-12);
        assert!(min_sym_eigen(&p3) > 0.0);
        assert!(solve_lyapunov(&DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    #[test]
    fn sigma_paths() {
        let lower = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, -1.0, 0.25]);
        let c = certify_sigma(0, std::slice::from_ref(&lower), 64).unwrap();
        assert_eq!(c.path, SigmaPath::Triangular);
        assert!((c.sigma - 1.01 * 1.5).abs() < 1e-15);

        let zero = certify_sigma(0, &[DMatrix::zeros(2, 2)], 64).unwrap();
        assert_eq!(zero.path, SigmaPath::Uncoupled);
        assert_eq!(zero.sigma, 1e-12 * 1.01);

        let upper = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(certify_sigma(0, &[upper], 64), Err(Error::SigmaNotCertifiable { .. })));
    }

    #[test]
    fn epsilon_formula() {
        assert_eq!(choose_epsilon(&[0.0], &[1.0], 1, 1, 1.0).unwrap(), 1.0 / 3.0);
        assert!(choose_epsilon(&[1.0], &[1.0], 1, 1, -1.0).is_err());
        assert_eq!(choose_epsilon(&[0.0], &[1.0], 1, 1, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn scalar_control_law() {
        let agent = CanonicalAgent {
            transform: DMatrix::identity(1, 1),
            coeffs: vec![0.0],
            k0: vec![-1.0],
            p0: DMatrix::from_element(1, 1, 0.5),
            sigma: SigmaCertificate { sigma: SIGMA_FLOOR, path: SigmaPath::Uncoupled },
            feedback_row: feedback_row(&DMatrix::identity(1, 1), &[0.0], &[-1.0], 0.5),
        };
        assert_eq!(control_law_linear(&agent, &[3.0], &[1.0], 0.7), -2.0 * 2.0 + 0.7);
        assert_eq!(control_law_linear(&agent, &[1.0], &[1.0], 0.7), 0.7);
    }

    #[test]
    fn scaling_identities() {
        for &eps in &[0.9, 0.3, 1e-3] {
            let (rb, ra) = scaling_identity_residuals(eps, 4);
            assert!(rb < 1e-15 && ra < 1e-15);
        }
    }
}
