//! Closed convex sets used as local constraint sets, with Euclidean and
//! tangent-cone ("vector") projections.
//!
//! Every supported set is a product of closed intervals, so all operations
//! reduce to per-component rules.

use crate::error::{Error, Result};

/// Tolerance for membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    AllSpace(usize),
    NonnegativeOrthant(usize),
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Product(Vec<ConvexSet>),
}

impl ConvexSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidBounds { index, lower: lo, upper: hi });
            }
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn product(factors: Vec<ConvexSet>) -> Self {
        ConvexSet::Product(factors)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::AllSpace(n) | ConvexSet::NonnegativeOrthant(n) => *n,
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Product(fs) => fs.iter().map(|f| f.dim()).sum(),
        }
    }

    /// Per-component interval bounds, flattened across products.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.dim());
        self.push_bounds(&mut out);
        out
    }

    fn push_bounds(&self, out: &mut Vec<(f64, f64)>) {
        match self {
            ConvexSet::AllSpace(n) => out.extend(std::iter::repeat_n((f64::NEG_INFINITY, f64::INFINITY), *n)),
            ConvexSet::NonnegativeOrthant(n) => out.extend(std::iter::repeat_n((0.0, f64::INFINITY), *n)),
            ConvexSet::Box { lower, upper } => out.extend(lower.iter().copied().zip(upper.iter().copied())),
            ConvexSet::Product(fs) => fs.iter().for_each(|f| f.push_bounds(out)),
        }
    }

    pub fn is_all_space(&self) -> bool {
        self.bounds().iter().all(|(lo, hi)| lo.is_infinite() && hi.is_infinite())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = self.dim();
        if expected != got {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        self.bounds()
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| v.is_finite() && v >= lo - tol && v <= hi + tol)
    }

    /// Euclidean projection.
    pub fn project_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self.bounds().iter().zip(x).map(|(&(lo, hi), &v)| v.max(lo).min(hi)).collect())
    }

    /// Projection of `v` onto the tangent cone of the set at `x`.
    pub fn project_vector(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        self.check_dim(v.len())?;
        let bounds = self.bounds();
        let mut out = Vec::with_capacity(x.len());
        for (index, ((&(lo, hi), &xi), &vi)) in bounds.iter().zip(x).zip(v).enumerate() {
            if !(xi >= lo - MEMBERSHIP_TOL && xi <= hi + MEMBERSHIP_TOL) {
                return Err(Error::NotInSet { index, value: xi });
            }
            let at_lower = xi <= lo + MEMBERSHIP_TOL;
            let at_upper = xi >= hi - MEMBERSHIP_TOL;
            let p = if at_lower && vi < 0.0 || at_upper && vi > 0.0 { 0.0 } else { vi };
            out.push(p);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_point_and_vector() {
        let s = ConvexSet::NonnegativeOrthant(1);
        assert_eq!(s.project_point(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(s.project_vector(&[0.0], &[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(s.project_vector(&[0.0], &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(s.project_vector(&[1.0], &[-2.0]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn box_clamps_each_component() {
        let s = ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.project_point(&[2.0, -1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.project_vector(&[1.0, 0.5], &[1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn degenerate_box_is_a_point() {
        let s = ConvexSet::boxed(vec![2.0], vec![2.0]).unwrap();
        assert_eq!(s.project_point(&[-7.0]).unwrap(), vec![2.0]);
        assert_eq!(s.project_vector(&[2.0], &[5.0]).unwrap(), vec![0.0]);
        assert_eq!(s.project_vector(&[2.0], &[-5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(ConvexSet::boxed(vec![1.0], vec![0.0]), Err(Error::InvalidBounds { .. })));
        let s = ConvexSet::AllSpace(2);
        assert!(matches!(s.project_point(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let o = ConvexSet::NonnegativeOrthant(1);
        assert!(matches!(o.project_vector(&[-1.0], &[1.0]), Err(Error::NotInSet { .. })));
    }

    #[test]
    fn product_flattens() {
        let s = ConvexSet::product(vec![
            ConvexSet::AllSpace(1),
            ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap(),
            ConvexSet::NonnegativeOrthant(1),
        ]);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.project_point(&[-5.0, 4.0, -1.0]).unwrap(), vec![-5.0, 1.0, 0.0]);
        assert!(s.contains(&[-5.0, 1.0, 0.0], MEMBERSHIP_TOL));
        assert!(!s.is_all_space());
        assert!(ConvexSet::AllSpace(3).is_all_space());
    }
}
