use super::{CompositeProblem, ProblemError, Result};
use crate::linalg::{inner, InnerProductSpace};
use crate::random::{randn, rng};
use crate::zpoint::ZPoint;

pub const ADJOINT_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

/// Worst relative errors seen by [`validate_derivatives`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValidationReport {
    pub adjoint: f64,
    pub gradient: f64,
    pub jacobian: f64,
}

/// Checks `map_vjp` against `map_jvp`, and `f_grad`, `map_jvp` against central
/// differences, at `trials` random manifold points along random unit
/// directions.
pub fn validate_derivatives<P: CompositeProblem + ?Sized>(
    problem: &P,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let m = problem.manifold();
    let (rows, cols) = m.ambient_shape();
    let shape = problem.z_shape();
    let mut g = rng(seed);
    let mut rep = ValidationReport::default();
    for t in 0..trials {
        let x = m.random_point(seed.wrapping_mul(1_000_003).wrapping_add(t as u64));
        let mut v = randn(rows, cols, &mut g);
        v /= crate::linalg::frob_norm(&v);
        let w = ZPoint::new(shape.iter().map(|&(r, c)| randn(r, c, &mut g)).collect());

        let jv = problem.map_jvp(&x, &v);
        let jtw = problem.map_vjp(&x, &w);
        let lhs = jv.inner(&w);
        let rhs = inner(&v, &jtw);
        let scale = jv.norm() * w.norm() + jtw.norm() + f64::MIN_POSITIVE;
        rep.adjoint = rep.adjoint.max((lhs - rhs).abs() / scale);

        let xp = &x + &(&v * FD_STEP);
        let xm = &x - &(&v * FD_STEP);
        let fd = (problem.f_value(&xp) - problem.f_value(&xm)) / (2.0 * FD_STEP);
        let grad = problem.f_grad(&x);
        let an = inner(&grad, &v);
        let scale = grad.norm().max(fd.abs()).max(f64::MIN_POSITIVE);
        rep.gradient = rep.gradient.max((fd - an).abs() / scale);

        let fdj = problem
            .map_value(&xp)
            .sub(&problem.map_value(&xm))
            .scaled(0.5 / FD_STEP);
        let scale = jv.norm().max(fdj.norm()).max(f64::MIN_POSITIVE);
        rep.jacobian = rep.jacobian.max(fdj.sub(&jv).norm() / scale);
    }
    for (map, error, bound) in [
        ("adjoint", rep.adjoint, ADJOINT_TOL),
        ("f_grad", rep.gradient, FD_TOL),
        ("map_jvp", rep.jacobian, FD_TOL),
    ] {
        if !(error <= bound) {
            return Err(ProblemError::ValidationFailed { map, error, bound });
        }
    }
    Ok(rep)
}
