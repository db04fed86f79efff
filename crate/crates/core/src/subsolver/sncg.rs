use super::{
    DualEval, InnerStep, Result, SubSolveResult, SubStatus, SubproblemSpec, SubsolverError,
};
use crate::linalg::{cg_solve, CgStatus, InnerProductSpace};
use crate::problem::CompositeProblem;
use crate::zpoint::ZPoint;

/// Semismooth Newton-CG parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SncgParams {
    /// CG iteration cap `n_l`.
    pub cg_max_iter: usize,
    /// `η̄`.
    pub eta_bar: f64,
    /// `τ`.
    pub tau: f64,
    /// `τ₁`.
    pub tau1: f64,
    /// `τ₂`.
    pub tau2: f64,
    /// Armijo constant `ϱ₁`.
    pub rho1: f64,
    /// Backtracking factor `δ`.
    pub delta: f64,
    pub max_backtracks: usize,
}

impl Default for SncgParams {
    fn default() -> Self {
        Self {
            cg_max_iter: 100,
            eta_bar: 1e-2,
            tau: 0.1,
            tau1: 1.0,
            tau2: 1e-3,
            rho1: 1e-4,
            delta: 0.5,
            max_backtracks: 60,
        }
    }
}

/// Minimizes the dual by semismooth Newton steps with a shifted generalized
/// Hessian solved inexactly by CG and an Armijo line search.
///
/// Stops at the first iterate whose recovered direction passes the
/// inexactness rule. `budget` caps the number of Newton steps.
pub fn sncg_solve<P: CompositeProblem + ?Sized>(
    spec: &SubproblemSpec<'_, P>,
    mu: f64,
    zeta0: &ZPoint,
    budget: usize,
    params: &SncgParams,
) -> Result<SubSolveResult> {
    let mut cur = spec.eval(zeta0)?;
    let mut trace = Vec::new();
    for l in 0.. {
        let (ok, _) = spec.inexactness_met(&cur, mu)?;
        if ok || cur.grad_norm == 0.0 {
            return Ok(SubSolveResult::from_eval(
                cur,
                l,
                SubStatus::Converged,
                trace,
            ));
        }
        if l >= budget {
            return Ok(SubSolveResult::from_eval(
                cur,
                l,
                SubStatus::BudgetExhausted,
                trace,
            ));
        }
        match newton_step(spec, &cur, params)? {
            Some((next, step)) => {
                trace.push(step);
                cur = next;
            }
            None => {
                return Ok(SubSolveResult::from_eval(
                    cur,
                    l,
                    SubStatus::LineSearchStalled,
                    trace,
                ))
            }
        }
    }
    unreachable!()
}

fn newton_step<P: CompositeProblem + ?Sized>(
    spec: &SubproblemSpec<'_, P>,
    cur: &DualEval,
    p: &SncgParams,
) -> Result<Option<(DualEval, InnerStep)>> {
    let gn = cur.grad_norm;
    let eta = p.eta_bar.min(gn.powf(1.0 + p.tau));
    let eps = p.tau1 * p.tau2.min(gn);
    let hess = spec.ghess(&cur.zeta)?;
    let rhs = cur.grad.scaled(-1.0);
    let cg = cg_solve(
        |d: &ZPoint| {
            let mut out = hess.apply(d);
            out.axpy(eps, d);
            out
        },
        &rhs,
        eta / gn,
        p.cg_max_iter,
    );
    if cg.status == CgStatus::NonPositiveCurvature {
        return Err(SubsolverError::NonPositiveCurvature);
    }
    let mut d = cg.x;
    let mut slope = cur.grad.inner(&d);
    let fallback = !(slope < 0.0);
    if fallback {
        d = rhs;
        slope = -gn * gn;
    }
    let mut t = 1.0;
    for m in 0..=p.max_backtracks {
        let bound = cur.phi + p.rho1 * t * slope;
        let cand = spec.eval(&cur.zeta.plus_scaled(t, &d))?;
        if cand.phi <= bound || rounding_level_accept(cur, &cand, &d, t, slope, p.rho1) {
            let step = InnerStep {
                phi_before: cur.phi,
                phi: cand.phi,
                bound,
                step: t,
                backtracks: m,
                cg_iters: cg.iterations,
                grad_norm: cand.grad_norm,
                gap: cand.gap,
                restarted: false,
                fallback,
            };
            return Ok(Some((cand, step)));
        }
        t *= p.delta;
    }
    Ok(None)
}

/// Once the predicted decrease is below the rounding level of `Φ` the
/// Armijo test cannot resolve it; accept a step whose value is unchanged up to
/// rounding and whose directional derivative has not overshot,
/// `⟨∇Φ(ζ + td), d⟩ ≤ (1 − 2ϱ₁)|⟨∇Φ(ζ), d⟩|`.
fn rounding_level_accept(
    cur: &DualEval,
    cand: &DualEval,
    d: &ZPoint,
    t: f64,
    slope: f64,
    rho1: f64,
) -> bool {
    let noise = 4.0 * f64::EPSILON * cur.phi.abs();
    -rho1 * t * slope <= noise
        && cand.phi <= cur.phi + noise
        && cand.grad.inner(d) <= -(1.0 - 2.0 * rho1) * slope
}
