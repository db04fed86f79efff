use super::{DualEval, InnerStep, Result, SubSolveResult, SubStatus, SubproblemSpec};
use crate::linalg::InnerProductSpace;
use crate::problem::{jacobian_norm_estimate, CompositeProblem};
use crate::zpoint::ZPoint;

/// Accelerated dual gradient parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApgParams {
    /// Doublings of the Lipschitz estimate allowed per iteration.
    pub max_doublings: usize,
}

impl Default for ApgParams {
    fn default() -> Self {
        Self { max_doublings: 60 }
    }
}

/// Minimizes the dual by accelerated gradient descent with backtracking on
/// the Lipschitz estimate and function-value restarts, which keep `Φ` along
/// the main sequence nonincreasing.
///
/// Same stopping rule as Newton-CG; `budget` caps the number of gradient
/// steps.
pub fn apg_solve<P: CompositeProblem + ?Sized>(
    spec: &SubproblemSpec<'_, P>,
    mu: f64,
    zeta0: &ZPoint,
    budget: usize,
    params: &ApgParams,
) -> Result<SubSolveResult> {
    let mut cur = spec.eval(zeta0)?;
    let (ok, _) = spec.inexactness_met(&cur, mu)?;
    if ok || cur.grad_norm == 0.0 {
        return Ok(SubSolveResult::from_eval(
            cur,
            0,
            SubStatus::Converged,
            Vec::new(),
        ));
    }
    let jn = jacobian_norm_estimate(spec.problem, &spec.lin.x);
    let mut lip = (1.0 + jn).powi(2) / spec.alpha;
    let mut t = 1.0f64;
    let mut y = cur.clone();
    let mut trace = Vec::new();
    for l in 0.. {
        if l >= budget {
            return Ok(SubSolveResult::from_eval(
                cur,
                l,
                SubStatus::BudgetExhausted,
                trace,
            ));
        }
        let mut restarted = false;
        let (mut next, mut info) = match gradient_step(spec, &y, &mut lip, params)? {
            Some(s) => s,
            None => return Ok(stalled(cur, l, trace)),
        };
        if next.phi > cur.phi {
            restarted = true;
            t = 1.0;
            (next, info) = match gradient_step(spec, &cur, &mut lip, params)? {
                Some(s) => s,
                None => return Ok(stalled(cur, l, trace)),
            };
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = if restarted { 0.0 } else { (t - 1.0) / t_next };
        let y_zeta = next.zeta.plus_scaled(momentum, &next.zeta.sub(&cur.zeta));
        trace.push(InnerStep {
            phi_before: cur.phi,
            phi: next.phi,
            bound: info.0,
            step: 1.0 / lip,
            backtracks: info.1,
            cg_iters: 0,
            grad_norm: next.grad_norm,
            gap: next.gap,
            restarted,
            fallback: false,
        });
        t = t_next;
        cur = next;
        let (ok, _) = spec.inexactness_met(&cur, mu)?;
        if ok || cur.grad_norm == 0.0 {
            return Ok(SubSolveResult::from_eval(
                cur,
                l + 1,
                SubStatus::Converged,
                trace,
            ));
        }
        y = if momentum == 0.0 {
            cur.clone()
        } else {
            spec.eval(&y_zeta)?
        };
    }
    unreachable!()
}

fn stalled(cur: DualEval, l: usize, trace: Vec<InnerStep>) -> SubSolveResult {
    SubSolveResult::from_eval(cur, l, SubStatus::LineSearchStalled, trace)
}

/// `y − ∇Φ(y)/L`, doubling `L` until `⟨∇Φ(y⁺) − ∇Φ(y), y⁺ − y⟩ ≤ (L/2)‖y⁺ − y‖²`.
///
/// For convex `Φ` this bounds the Bregman distance and so implies
/// `Φ(y⁺) ≤ Φ(y) − ‖∇Φ(y)‖²/(2L)`, without differencing function values
/// that agree to rounding near the solution. Returns the new point with that
/// bound and the doubling count.
fn gradient_step<P: CompositeProblem + ?Sized>(
    spec: &SubproblemSpec<'_, P>,
    y: &DualEval,
    lip: &mut f64,
    params: &ApgParams,
) -> Result<Option<(DualEval, (f64, usize))>> {
    let g2 = y.grad_norm * y.grad_norm;
    for m in 0..=params.max_doublings {
        let cand = spec.eval(&y.zeta.plus_scaled(-1.0 / *lip, &y.grad))?;
        let dy = cand.zeta.sub(&y.zeta);
        let curv = cand.grad.sub(&y.grad).inner(&dy);
        if curv <= 0.5 * *lip * dy.inner(&dy) {
            let bound = y.phi - g2 / (2.0 * *lip);
            return Ok(Some((cand, (bound, m))));
        }
        *lip *= 2.0;
    }
    Ok(None)
}
