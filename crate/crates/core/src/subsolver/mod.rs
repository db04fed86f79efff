//! The strongly convex model subproblem and its dual.
//!
//! At a feasible `x` with metric `Q = αI + β∇F(x)F′(x)` the model is
//!
//! ```text
//! Θ_kj(v) = f(x) + ⟨∇f(x), v⟩ + ½α‖v‖² + ½β‖F′(x)v‖² + ϑ(F(x) + F′(x)v)
//! ```
//!
//! over tangent `v`. It is solved through the smooth dual
//!
//! ```text
//! Φ(ζ) = ‖𝒢(∇F ζ + ∇f)‖²/(2α) + ‖ζ‖²/(2β) − e_{ϑ/β}(F + ζ/β)
//! ```
//!
//! whose gradient is `z − F − F′v` with `v = −𝒢(∇F ζ + ∇f)/α` and
//! `z = prox_{ϑ/β}(F + ζ/β)`. Weak duality gives `Θ_kj(v) + Φ(ζ) ≥ f(x)`,
//! so the gap bounds the primal suboptimality of any recovered `v`.

mod apg;
mod sncg;

use thiserror::Error;

pub use apg::{apg_solve, ApgParams};
pub use sncg::{sncg_solve, SncgParams};

use crate::linalg::{frob_norm, inner, InnerProductSpace, Mat};
use crate::manifold::{ManifoldError, TangentProjector};
use crate::problem::CompositeProblem;
use crate::prox::ProxError;
use crate::zpoint::ZPoint;

/// Weak duality may be violated by at most this much before it is treated
/// as a bug.
pub const WEAK_DUALITY_TOL: f64 = 1e-10;
/// Tangency required of directions passed to [`SubproblemSpec::theta_kj`],
/// relative to `max(1, ‖v‖)`.
pub const TANGENT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SubsolverError {
    #[error("direction is not tangent (residual {0:e})")]
    NotTangent(f64),
    #[error("dual point has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        expected: Vec<(usize, usize)>,
        got: Vec<(usize, usize)>,
    },
    #[error("weak duality violated: gap {0:e}")]
    WeakDualityViolated(f64),
    #[error("generalized Hessian lost positive definiteness")]
    NonPositiveCurvature,
    #[error("non-finite value in the dual iteration")]
    NonFinite,
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Prox(#[from] ProxError),
}

pub type Result<T> = std::result::Result<T, SubsolverError>;

/// Everything about the outer iterate `x` that the subproblems reuse.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub x: Mat,
    pub f_x: f64,
    pub grad_f: Mat,
    pub map_x: ZPoint,
    /// `Θ(x) = f(x) + ϑ(F(x))`.
    pub theta_x: f64,
    pub projector: TangentProjector,
}

impl Linearization {
    pub fn new<P: CompositeProblem + ?Sized>(problem: &P, x: &Mat) -> Result<Self> {
        let projector = problem.manifold().projector(x)?;
        let f_x = problem.f_value(x);
        let map_x = problem.map_value(x);
        let theta_x = f_x + problem.regularizer().eval(&map_x)?;
        Ok(Self {
            x: x.clone(),
            f_x,
            grad_f: problem.f_grad(x),
            map_x,
            theta_x,
            projector,
        })
    }
}

/// One subproblem `(k, j)`: a linearization plus the metric weights.
pub struct SubproblemSpec<'a, P: CompositeProblem + ?Sized> {
    pub problem: &'a P,
    pub lin: &'a Linearization,
    pub alpha: f64,
    pub beta: f64,
}

impl<P: CompositeProblem + ?Sized> Clone for SubproblemSpec<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<P: CompositeProblem + ?Sized> Copy for SubproblemSpec<'_, P> {}

/// The dual objective, its gradient and the primal quantities recovered
/// from one `ζ`.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub zeta: ZPoint,
    pub phi: f64,
    pub grad: ZPoint,
    pub grad_norm: f64,
    /// `v = −𝒢(∇F ζ + ∇f)/α`.
    pub v: Mat,
    pub v_norm: f64,
    /// `F′(x)v`.
    pub jv: ZPoint,
    /// `prox_{ϑ/β}(F + ζ/β)`.
    pub z: ZPoint,
    /// `Θ_kj(v)`.
    pub theta_v: f64,
    /// `Θ_kj(v) + Φ(ζ) − f(x)`.
    pub gap: f64,
}

impl<'a, P: CompositeProblem + ?Sized> SubproblemSpec<'a, P> {
    pub fn new(problem: &'a P, lin: &'a Linearization, alpha: f64, beta: f64) -> Self {
        Self {
            problem,
            lin,
            alpha,
            beta,
        }
    }

    fn check_shape(&self, zeta: &ZPoint) -> Result<()> {
        let expected = self.lin.map_x.shape();
        let got = zeta.shape();
        if expected != got {
            return Err(SubsolverError::ShapeMismatch { expected, got });
        }
        Ok(())
    }

    /// `Θ_kj(v)` with `F′(x)v` already known.
    fn theta_with_jv(&self, v: &Mat, jv: &ZPoint) -> Result<f64> {
        let lin = self.lin;
        let lin_map = lin.map_x.add(jv);
        let vv = inner(v, v);
        Ok(lin.f_x
            + inner(&lin.grad_f, v)
            + 0.5 * self.alpha * vv
            + 0.5 * self.beta * jv.inner(jv)
            + self.problem.regularizer().eval(&lin_map)?)
    }

    /// The model value at a tangent direction.
    pub fn theta_kj(&self, v: &Mat) -> Result<f64> {
        let res = self.lin.projector.residual(v);
        if !(res <= TANGENT_TOL * frob_norm(v).max(1.0)) {
            return Err(SubsolverError::NotTangent(res));
        }
        let jv = self.problem.map_jvp(&self.lin.x, v);
        self.theta_with_jv(v, &jv)
    }

    /// `Θ_kj(0) = Θ(x)`.
    pub fn theta_zero(&self) -> f64 {
        self.lin.theta_x
    }

    /// `v = −𝒢(∇F ζ + ∇f)/α` and `z = prox_{ϑ/β}(F + ζ/β)`.
    pub fn recover_primal(&self, zeta: &ZPoint) -> Result<(Mat, ZPoint)> {
        let e = self.eval(zeta)?;
        Ok((e.v, e.z))
    }

    pub fn dual_value(&self, zeta: &ZPoint) -> Result<f64> {
        Ok(self.eval(zeta)?.phi)
    }

    pub fn dual_grad(&self, zeta: &ZPoint) -> Result<ZPoint> {
        Ok(self.eval(zeta)?.grad)
    }

    /// Evaluates the dual at `ζ` together with its recovered primal point.
    pub fn eval(&self, zeta: &ZPoint) -> Result<DualEval> {
        self.check_shape(zeta)?;
        let lin = self.lin;
        let reg = self.problem.regularizer();
        let gamma = 1.0 / self.beta;

        let mut s = self.problem.map_vjp(&lin.x, zeta);
        s += &lin.grad_f;
        let g = lin.projector.apply(&s);
        let v = &g * (-1.0 / self.alpha);
        let jv = self.problem.map_jvp(&lin.x, &v);

        let w = lin.map_x.plus_scaled(gamma, zeta);
        let z = reg.prox(gamma, &w)?;
        // ‖ζ‖²/(2β) − e_{ϑ/β}(w) expanded around z, free of the large
        // cancelling terms when β is small
        let zf = z.sub(&lin.map_x);
        let phi = inner(&g, &g) / (2.0 * self.alpha) + zeta.inner(&zf)
            - 0.5 * self.beta * zf.inner(&zf)
            - reg.eval(&z)?;

        // ∇Φ = α⁻¹F′𝒢(∇Fζ + ∇f) + z − F = z − F − F′v
        let grad = zf.sub(&jv);
        let grad_norm = grad.norm();
        let theta_v = self.theta_with_jv(&v, &jv)?;
        let gap = theta_v + phi - lin.f_x;
        if !(phi.is_finite() && grad_norm.is_finite() && theta_v.is_finite()) {
            return Err(SubsolverError::NonFinite);
        }
        let v_norm = frob_norm(&v);
        Ok(DualEval {
            zeta: zeta.clone(),
            phi,
            grad,
            grad_norm,
            v,
            v_norm,
            jv,
            z,
            theta_v,
            gap,
        })
    }

    /// Generalized Hessian action `α⁻¹F′𝒢(∇F d) + β⁻¹ J d`, with `J` a Clarke
    /// Jacobian element of the prox at `F + ζ/β`.
    pub fn ghess_apply(&self, zeta: &ZPoint, d: &ZPoint) -> Result<ZPoint> {
        self.check_shape(zeta)?;
        self.check_shape(d)?;
        let op = self.ghess(zeta)?;
        Ok(op.apply(d))
    }

    pub(crate) fn ghess(&self, zeta: &ZPoint) -> Result<GHess<'_, 'a, P>> {
        let gamma = 1.0 / self.beta;
        let w = self.lin.map_x.plus_scaled(gamma, zeta);
        let jac = self
            .problem
            .regularizer()
            .prox_jacobian_element(gamma, &w)?;
        Ok(GHess { spec: self, jac })
    }

    /// Checks the inexactness rule for a dual evaluation.
    pub fn inexactness_met(&self, e: &DualEval, mu: f64) -> Result<(bool, f64)> {
        inexactness_met(
            self.theta_zero(),
            e.theta_v,
            e.phi,
            self.lin.f_x,
            e.v_norm,
            mu,
        )
    }
}

pub(crate) struct GHess<'s, 'a, P: CompositeProblem + ?Sized> {
    spec: &'s SubproblemSpec<'a, P>,
    jac: crate::prox::ProxJacobian,
}

impl<P: CompositeProblem + ?Sized> GHess<'_, '_, P> {
    pub(crate) fn apply(&self, d: &ZPoint) -> ZPoint {
        let s = self.spec;
        let u = s.lin.projector.apply(&s.problem.map_vjp(&s.lin.x, d));
        let mut out = s.problem.map_jvp(&s.lin.x, &u);
        out.scale(1.0 / s.alpha);
        out.axpy(1.0 / s.beta, &self.jac.apply(d));
        out
    }
}

/// Rounding allowance for comparisons between sums of the given magnitudes.
fn rounding_slack(terms: &[f64]) -> f64 {
    4.0 * f64::EPSILON * terms.iter().map(|t| t.abs()).sum::<f64>()
}

/// The duality-gap acceptance rule: `Θ_kj(v) ≤ Θ_kj(0)` and
/// `Θ_kj(v) + Φ(ζ) − f(x) ≤ (μ/2)‖v‖²`, each up to rounding of the summed
/// terms. Returns the decision and the gap.
pub fn inexactness_met(
    theta_zero: f64,
    theta_v: f64,
    phi: f64,
    f_x: f64,
    v_norm: f64,
    mu: f64,
) -> Result<(bool, f64)> {
    let gap = theta_v + phi - f_x;
    if gap < -WEAK_DUALITY_TOL {
        return Err(SubsolverError::WeakDualityViolated(gap));
    }
    let descent = theta_v <= theta_zero + rounding_slack(&[theta_zero]);
    let small_gap = gap <= 0.5 * mu * v_norm * v_norm + rounding_slack(&[theta_v, phi, f_x]);
    Ok((descent && small_gap, gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStatus {
    Converged,
    BudgetExhausted,
    LineSearchStalled,
}

/// One dual iteration, recorded after the step is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub phi_before: f64,
    pub phi: f64,
    /// The accepted sufficient-decrease bound, `Φ(ζˡ) + ϱ₁δᵐ⟨∇Φ, d⟩` for
    /// Newton-CG and `Φ(y) − ‖∇Φ(y)‖²/(2L)` for the gradient method.
    pub bound: f64,
    pub step: f64,
    pub backtracks: usize,
    pub cg_iters: usize,
    pub grad_norm: f64,
    pub gap: f64,
    pub restarted: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SubSolveResult {
    pub v: Mat,
    pub zeta: ZPoint,
    pub theta_v: f64,
    pub phi: f64,
    pub gap: f64,
    pub grad_norm: f64,
    pub inner_iters: usize,
    pub status: SubStatus,
    pub trace: Vec<InnerStep>,
}

impl SubSolveResult {
    pub(crate) fn from_eval(
        e: DualEval,
        inner_iters: usize,
        status: SubStatus,
        trace: Vec<InnerStep>,
    ) -> Self {
        Self {
            v: e.v,
            zeta: e.zeta,
            theta_v: e.theta_v,
            phi: e.phi,
            gap: e.gap,
            grad_norm: e.grad_norm,
            inner_iters,
            status,
            trace,
        }
    }
}

/// Which dual method solves the subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    Sncg,
    Apg,
}

impl std::str::FromStr for InnerSolver {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sncg" => Ok(Self::Sncg),
            "apg" => Ok(Self::Apg),
            _ => Err(format!("unknown inner solver `{s}` (expected sncg or apg)")),
        }
    }
}

impl std::fmt::Display for InnerSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sncg => "sncg",
            Self::Apg => "apg",
        })
    }
}

/// Runs the chosen method with its default parameters.
pub fn solve<P: CompositeProblem + ?Sized>(
    method: InnerSolver,
    spec: &SubproblemSpec<'_, P>,
    mu: f64,
    zeta0: &ZPoint,
    budget: usize,
) -> Result<SubSolveResult> {
    match method {
        InnerSolver::Sncg => sncg_solve(spec, mu, zeta0, budget, &SncgParams::default()),
        InnerSolver::Apg => apg_solve(spec, mu, zeta0, budget, &ApgParams::default()),
    }
}
