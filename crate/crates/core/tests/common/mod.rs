#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nashflow::gnep::{GnepProblem, PrimalDualState};
use nashflow::oracle::QuadraticGnep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded quadratic game: 2–4 agents with 1–2 coordinates each, a box [−2, 2],
/// one shared equality and 1–3 shared inequalities, all strictly feasible at a
/// random interior point. Linear terms are large so that some constraints bind.
pub fn random_game(seed: u64) -> QuadraticGnep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = rng.gen_range(2..=4);
    let agent_dims: Vec<usize> = (0..agents).map(|_| rng.gen_range(1..=2)).collect();
    let r: usize = agent_dims.iter().sum();
    let a = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
    let skew = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-0.5..0.5));
    let q = &a * a.transpose() + DMatrix::identity(r, r) * 0.5 + (&skew - skew.transpose());
    let b = DVector::from_fn(r, |_, _| rng.gen_range(-6.0..6.0));
    let w0 = DVector::from_fn(r, |_, _| rng.gen_range(-0.5..0.5));
    let e_mat = DMatrix::from_fn(1, r, |_, _| rng.gen_range(-1.0..1.0));
    let e_vec = -(&e_mat * &w0);
    let m = rng.gen_range(1..=3);
    let c_mat = DMatrix::from_fn(m, r, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
    let d_vec = -(&c_mat * &w0) - slack;
    QuadraticGnep {
        agent_dims,
        q,
        b,
        e_mat,
        e_vec,
        c_mat,
        d_vec,
        lower: vec![-2.0; r],
        upper: vec![2.0; r],
    }
}

/// Runs the projected-Euler flow until the KKT residual drops below `tol` or
/// `horizon` elapses.
pub fn run_flow(problem: &GnepProblem, h: f64, horizon: f64, tol: f64) -> PrimalDualState {
    let mut s = problem.default_state();
    let steps = (horizon / h).round() as usize;
    for k in 0..steps {
        if k % 100 == 0 && problem.kkt_residual(&s).unwrap() <= tol {
            break;
        }
        s = problem.primal_dual_step(&s, h, 1.0).unwrap();
    }
    s
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central finite difference of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], delta: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += delta;
            m[k] -= delta;
            (f(&p) - f(&m)) / (2.0 * delta)
        })
        .collect()
}
