//! Active-set enumeration solver for the variational equilibrium of quadratic
//! GNEPs. Used as ground truth for the flow-based solvers.

use nalgebra::{DMatrix, DVector};

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::gnep::{GnepBuilder, GnepProblem, PrimalDualState};
use crate::linalg::{min_sym_eigen, null_space, solve_with_rcond};

pub const ORACLE_TOL: f64 = 1e-9;
pub const RCOND_MIN: f64 = 1e-12;
/// Maximum number of candidate KKT systems solved before giving up.
pub const CANDIDATE_BUDGET: u64 = 1 << 24;

/// Quadratic GNEP: ∇_{w_i} f_i = Q_i w + b_i, H = E w + e, G = C w + d,
/// plus per-coordinate box bounds.
#[derive(Clone, Debug)]
pub struct QuadraticGnep {
    pub agent_dims: Vec<usize>,
    /// Stacked Q_i rows (r×r game Jacobian).
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub c_mat: DMatrix<f64>,
    pub d_vec: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// One constraint considered by the enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActiveConstraint {
    Inequality(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Multipliers of active box faces, aligned with `active` entries that are faces.
    pub box_multipliers: Vec<(ActiveConstraint, f64)>,
    pub active: Vec<ActiveConstraint>,
    pub candidates_tried: u64,
}

impl OracleSolution {
    pub fn state(&self) -> PrimalDualState {
        PrimalDualState { w: self.w.clone(), lambda: self.lambda.clone(), mu: self.mu.clone() }
    }
}

impl QuadraticGnep {
    pub fn total_dim(&self) -> usize {
        self.agent_dims.iter().sum()
    }

    /// Checks dimensions and positive definiteness of sym(Q) on ker E.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let r = self.total_dim();
        let z = null_space(&self.e_mat, r);
        if z.ncols() > 0 {
            let reduced = z.transpose() * &self.q * &z;
            let min_eig = min_sym_eigen(&reduced);
            if !(min_eig > 0.0) {
                return Err(Error::NotMonotone(min_eig));
            }
        }
        Ok(())
    }

    /// Dimension and bound-order checks only.
    pub fn validate_shape(&self) -> Result<()> {
        let r = self.total_dim();
        let dims_ok = self.q.nrows() == r
            && self.q.ncols() == r
            && self.b.len() == r
            && self.e_mat.ncols() == r
            && self.e_vec.len() == self.e_mat.nrows()
            && self.c_mat.ncols() == r
            && self.d_vec.len() == self.c_mat.nrows()
            && self.lower.len() == r
            && self.upper.len() == r;
        if !dims_ok {
            return Err(Error::InvalidParameter("quadratic GNEP data has inconsistent dimensions".into()));
        }
        for (index, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo > hi {
                return Err(Error::InvalidBounds { index, lower: lo, upper: hi });
            }
        }
        Ok(())
    }

    pub fn local_sets(&self) -> Vec<ConvexSet> {
        let mut sets = Vec::new();
        let mut off = 0;
        for &d in &self.agent_dims {
            let lo = self.lower[off..off + d].to_vec();
            let hi = self.upper[off..off + d].to_vec();
            sets.push(if lo.iter().chain(&hi).all(|v| v.is_infinite()) {
                ConvexSet::AllSpace(d)
            } else {
                ConvexSet::boxed(lo, hi).expect("bounds validated")
            });
            off += d;
        }
        sets
    }

    /// The same game as a callback-based [`GnepProblem`].
    pub fn to_problem(&self) -> Result<GnepProblem> {
        self.problem_builder()?.build()
    }

    /// Builder pre-filled with this game's data, for adding e.g. objective values.
    /// Monotonicity is not required here; only the oracle demands it.
    pub fn problem_builder(&self) -> Result<GnepBuilder> {
        self.validate_shape()?;
        let offsets: Vec<usize> = self
            .agent_dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let (q, b) = (self.q.clone(), self.b.clone());
        let dims = self.agent_dims.clone();
        let grad = move |i: usize, w: &[f64]| -> Vec<f64> {
            let rows = q.rows(offsets[i], dims[i]);
            let wv = DVector::from_column_slice(w);
            (rows * wv + b.rows(offsets[i], dims[i])).as_slice().to_vec()
        };
        let (c, d) = (self.c_mat.clone(), self.d_vec.clone());
        let c2 = self.c_mat.clone();
        let qh = self.q.clone();
        let mut builder = GnepProblem::builder(self.agent_dims.clone(), grad)
            .equality(self.e_mat.clone(), self.e_vec.clone())
            .local_sets(self.local_sets())
            .hessian_action(move |_, _, _, dir| (&qh * DVector::from_column_slice(dir)).as_slice().to_vec());
        if self.c_mat.nrows() > 0 {
            builder = builder.inequality(
                self.c_mat.nrows(),
                move |w| (&c * DVector::from_column_slice(w) + &d).as_slice().to_vec(),
                move |_| c2.clone(),
            );
        }
        Ok(builder)
    }

    fn constraint_row(&self, c: ActiveConstraint) -> (DVector<f64>, f64) {
        let r = self.total_dim();
        match c {
            ActiveConstraint::Inequality(k) => (self.c_mat.row(k).transpose(), self.d_vec[k]),
            ActiveConstraint::Lower(j) => {
                let mut a = DVector::zeros(r);
                a[j] = -1.0;
                (a, self.lower[j])
            }
            ActiveConstraint::Upper(j) => {
                let mut a = DVector::zeros(r);
                a[j] = 1.0;
                (a, -self.upper[j])
            }
        }
    }

    fn candidates(&self) -> Vec<ActiveConstraint> {
        let mut out: Vec<ActiveConstraint> = (0..self.c_mat.nrows()).map(ActiveConstraint::Inequality).collect();
        for j in 0..self.total_dim() {
            if self.lower[j].is_finite() {
                out.push(ActiveConstraint::Lower(j));
            }
            if self.upper[j].is_finite() && self.upper[j] != self.lower[j] {
                out.push(ActiveConstraint::Upper(j));
            }
        }
        out
    }

    /// Enumerates active sets by ascending cardinality and returns the first
    /// consistent KKT point.
    pub fn solve_ve_active_set(&self) -> Result<OracleSolution> {
        self.validate()?;
        let r = self.total_dim();
        let m = self.e_mat.nrows();
        let cands = self.candidates();
        let max_card = r.saturating_sub(m).min(cands.len());
        let mut tried = 0u64;
        let mut singular = 0u64;
        for card in 0..=max_card {
            let mut idx: Vec<usize> = (0..card).collect();
            loop {
                let set: Vec<ActiveConstraint> = idx.iter().map(|&k| cands[k]).collect();
                if !opposite_faces(&set) {
                    tried += 1;
                    if tried > CANDIDATE_BUDGET {
                        return Err(Error::BudgetExceeded(CANDIDATE_BUDGET));
                    }
                    match self.try_active_set(&set) {
                        Candidate::Accept(sol) => {
                            let mut sol = *sol;
                            sol.candidates_tried = tried;
                            return Ok(sol);
                        }
                        Candidate::Singular => singular += 1,
                        Candidate::Reject => {}
                    }
                }
                if !next_combination(&mut idx, cands.len()) {
                    break;
                }
            }
        }
        Err(Error::NoActiveSet { tried, singular })
    }

    fn try_active_set(&self, set: &[ActiveConstraint]) -> Candidate {
        let r = self.total_dim();
        let m = self.e_mat.nrows();
        let a = set.len();
        let n = r + m + a;
        let mut k = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        k.view_mut((0, 0), (r, r)).copy_from(&self.q);
        rhs.rows_mut(0, r).copy_from(&(-&self.b));
        if m > 0 {
            k.view_mut((0, r), (r, m)).copy_from(&self.e_mat.transpose());
            k.view_mut((r, 0), (m, r)).copy_from(&self.e_mat);
            rhs.rows_mut(r, m).copy_from(&(-&self.e_vec));
        }
        for (t, &c) in set.iter().enumerate() {
            let (row, off) = self.constraint_row(c);
            k.view_mut((0, r + m + t), (r, 1)).copy_from(&row);
            k.view_mut((r + m + t, 0), (1, r)).copy_from(&row.transpose());
            rhs[r + m + t] = -off;
        }
        let Some((x, rc)) = solve_with_rcond(&k, &rhs) else {
            return Candidate::Singular;
        };
        if rc < RCOND_MIN {
            return Candidate::Singular;
        }
        let w: Vec<f64> = x.rows(0, r).iter().copied().collect();
        let lambda: Vec<f64> = x.rows(r, m).iter().copied().collect();
        let nu: Vec<f64> = x.rows(r + m, a).iter().copied().collect();
        if nu.iter().any(|&v| v < -ORACLE_TOL) {
            return Candidate::Reject;
        }
        // primal feasibility of everything (active rows hold with equality by construction)
        let wv = DVector::from_column_slice(&w);
        let g = &self.c_mat * &wv + &self.d_vec;
        if g.iter().any(|&v| v > ORACLE_TOL) {
            return Candidate::Reject;
        }
        if w.iter().zip(&self.lower).zip(&self.upper).any(|((&v, &lo), &hi)| v < lo - ORACLE_TOL || v > hi + ORACLE_TOL) {
            return Candidate::Reject;
        }
        if nu.iter().any(|&v| v.abs() <= ORACLE_TOL) {
            log::debug!("degenerate active set {set:?}: a multiplier is zero within tolerance");
        }
        let mut mu = vec![0.0; self.c_mat.nrows()];
        let mut box_multipliers = Vec::new();
        for (t, &c) in set.iter().enumerate() {
            let v = nu[t].max(0.0);
            match c {
                ActiveConstraint::Inequality(k) => mu[k] = v,
                face => box_multipliers.push((face, v)),
            }
        }
        // snap active box coordinates onto their faces so the iterate is exactly in W
        let mut w = w;
        for (j, v) in w.iter_mut().enumerate() {
            *v = v.max(self.lower[j]).min(self.upper[j]);
        }
        let mut active = set.to_vec();
        active.sort();
        Candidate::Accept(Box::new(OracleSolution { w, lambda, mu, box_multipliers, active, candidates_tried: 0 }))
    }
}

enum Candidate {
    Accept(Box<OracleSolution>),
    Singular,
    Reject,
}

fn opposite_faces(set: &[ActiveConstraint]) -> bool {
    set.iter().any(|c| matches!(c, ActiveConstraint::Lower(j) if set.contains(&ActiveConstraint::Upper(*j))))
}

/// Advances `idx` to the next k-combination of 0..n in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qg(dims: Vec<usize>, q: &[f64], b: &[f64]) -> QuadraticGnep {
        let r: usize = dims.iter().sum();
        QuadraticGnep {
            agent_dims: dims,
            q: DMatrix::from_row_slice(r, r, q),
            b: DVector::from_column_slice(b),
            e_mat: DMatrix::zeros(0, r),
            e_vec: DVector::zeros(0),
            c_mat: DMatrix::zeros(0, r),
            d_vec: DVector::zeros(0),
            lower: vec![f64::NEG_INFINITY; r],
            upper: vec![f64::INFINITY; r],
        }
    }

    #[test]
    fn clamped_scalar() {
        let mut g = qg(vec![1], &[1.0], &[-2.0]);
        g.lower = vec![0.0];
        g.upper = vec![1.0];
        let s = g.solve_ve_active_set().unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-14);
        assert_eq!(s.active, vec![ActiveConstraint::Upper(0)]);
        assert!((s.box_multipliers[0].1 - 1.0).abs() < 1e-14);
        let p = g.to_problem().unwrap();
        assert!(p.kkt_residual(&s.state()).unwrap() < 1e-10);
    }

    #[test]
    fn symmetric_equality() {
        let mut g = qg(vec![1, 1], &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        g.e_mat = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        g.e_vec = DVector::from_element(1, -2.0);
        let s = g.solve_ve_active_set().unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-14 && (s.w[1] - 1.0).abs() < 1e-14);
        assert!((s.lambda[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_monotone() {
        let g = qg(vec![1], &[-1.0], &[0.0]);
        assert!(matches!(g.solve_ve_active_set(), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn infeasible_reports_no_active_set() {
        let mut g = qg(vec![1], &[1.0], &[0.0]);
        g.lower = vec![0.0];
        g.upper = vec![1.0];
        g.c_mat = DMatrix::from_row_slice(1, 1, &[-1.0]);
        g.d_vec = DVector::from_element(1, 2.0); // 2 − w ≤ 0 impossible in [0, 1]
        assert!(matches!(g.solve_ve_active_set(), Err(Error::NoActiveSet { .. })));
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut idx = vec![0, 1];
        let mut n = 1;
        while next_combination(&mut idx, 4) {
            n += 1;
        }
        assert_eq!(n, 6);
    }
}
