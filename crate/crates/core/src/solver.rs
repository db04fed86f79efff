//! The outer method.
//!
//! Each outer iteration linearizes at `xᵏ`, picks `α_{k,0}` from
//! Barzilai-Borwein curvature estimates, and solves the model subproblem
//! with `α_{k,j} = σʲα_{k,0}` until the retracted step decreases `Θ` by at
//! least `(γ̄/2)‖v‖²` below the model value. The accepted step is retracted to
//! give `xᵏ⁺¹`.

use std::time::Instant;

use thiserror::Error;

use crate::linalg::{frob_norm, inner, InnerProductSpace, Mat};
use crate::manifold::{ManifoldError, FEASIBILITY_TOL};
use crate::problem::{jacobian_norm_estimate, CompositeProblem};
use crate::subsolver::{
    self, InnerSolver, Linearization, SubStatus, SubproblemSpec, SubsolverError,
};
use crate::zpoint::ZPoint;

/// `‖v‖ ≤ ZERO_STEP_TOL·max(1, ‖x‖)` counts as a zero step.
pub const ZERO_STEP_TOL: f64 = 1e-12;
/// `α_{k,0}` is this fraction of the clamped curvature estimate.
pub const ALPHA_INIT_FACTOR: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point is infeasible (error {0:e})")]
    InfeasibleStart(f64),
    #[error("no step accepted at iteration {k} after {escalations} escalations (α = {alpha:e})")]
    InnerLoopDiverged {
        k: usize,
        escalations: usize,
        alpha: f64,
    },
    #[error("objective is not finite at iteration {0}")]
    NonFinite(usize),
    #[error("subproblem at iteration {k}: {source}")]
    Subsolver {
        k: usize,
        #[source]
        source: SubsolverError,
    },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Upper bound on the metric part `β∇FF′`; not used by the iteration.
    pub alpha_bar: f64,
    pub sigma: f64,
    pub gamma_bar: f64,
    pub mu_max: f64,
    pub beta0: f64,
    pub beta_decay: f64,
    pub beta_floor: f64,
    pub beta_period: usize,
    /// `α₀,₀`; the problem's default when `None`.
    pub alpha00: Option<f64>,
    pub eps_star: f64,
    pub max_outer: usize,
    pub max_inner_j: usize,
    pub inner: InnerSolver,
    /// Dual iterations per subproblem; a method-specific default when `None`.
    pub inner_budget: Option<usize>,
    pub stationarity_tol: Option<f64>,
    /// Keep every iterate and accepted dual point in the result.
    pub record_iterates: bool,
    /// Record wall time; disable for bit-identical traces.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha_min: 1e-6,
            alpha_max: 1e6,
            alpha_bar: 1e6,
            sigma: 2.5,
            gamma_bar: 1e-5,
            mu_max: 500.0,
            beta0: 0.01,
            beta_decay: 1.1,
            beta_floor: 1e-6,
            beta_period: 50,
            alpha00: None,
            eps_star: 1e-8,
            max_outer: 5000,
            max_inner_j: 60,
            inner: InnerSolver::Sncg,
            inner_budget: None,
            stationarity_tol: None,
            record_iterates: false,
            timing: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.alpha_min) && pos(self.alpha_max) && self.alpha_min <= self.alpha_max) {
            return bad("need 0 < alpha_min <= alpha_max");
        }
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return bad("sigma must exceed 1");
        }
        if !pos(self.alpha_bar) || !pos(self.gamma_bar) || !pos(self.mu_max) || !pos(self.beta0) {
            return bad("alpha_bar, gamma_bar, mu_max and beta0 must be positive");
        }
        if !(self.beta_decay >= 1.0) || !pos(self.beta_floor) || self.beta_period == 0 {
            return bad("need beta_decay >= 1, beta_floor > 0, beta_period >= 1");
        }
        if let Some(a) = self.alpha00 {
            if !pos(a) {
                return bad("alpha00 must be positive");
            }
        }
        if !(self.eps_star >= 0.0) {
            return bad("eps_star must be nonnegative");
        }
        if self.inner_budget == Some(0) {
            return bad("inner_budget must be at least 1");
        }
        if let Some(t) = self.stationarity_tol {
            if !pos(t) {
                return bad("stationarity_tol must be positive");
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.inner_budget.unwrap_or(match self.inner {
            InnerSolver::Sncg => 500,
            InnerSolver::Apg => 100_000,
        })
    }
}

/// `μ_k = max(μ_max/√k, 1)`, and `μ_max` at `k = 0`.
pub fn mu_schedule(k: usize, cfg: &SolverConfig) -> f64 {
    if k == 0 {
        cfg.mu_max
    } else {
        (cfg.mu_max / (k as f64).sqrt()).max(1.0)
    }
}

/// `β_{k+1}` from `β_k`: divided by the decay every `beta_period` iterations
/// (including `k = 0`), never below the floor.
pub fn beta_schedule(k: usize, beta: f64, cfg: &SolverConfig) -> f64 {
    if k % cfg.beta_period == 0 {
        (beta / cfg.beta_decay).max(cfg.beta_floor)
    } else {
        beta
    }
}

/// Barzilai-Borwein curvature of `f` along the last step,
/// `max(‖Δy‖²/|⟨Δx,Δy⟩|, |⟨Δx,Δy⟩|/‖Δx‖²)`.
///
/// An unchanged gradient gives zero. Other degenerate denominators fall back
/// to `fallback`.
pub fn grad_curvature_estimate(dx: &Mat, dy: &Mat, fallback: f64) -> f64 {
    let yy = inner(dy, dy);
    if yy == 0.0 {
        return 0.0;
    }
    let xy = inner(dx, dy).abs();
    let xx = inner(dx, dx);
    if xy == 0.0 || xx == 0.0 {
        return fallback;
    }
    let est = (yy / xy).max(xy / xx);
    if est.is_finite() {
        est
    } else {
        fallback
    }
}

/// `‖∇F(x)ζ‖/‖ζ‖`, or a power-iteration estimate of `‖F′(x)‖` when `ζ = 0`.
pub fn jacobian_curvature_estimate<P: CompositeProblem + ?Sized>(
    problem: &P,
    x: &Mat,
    zeta: &ZPoint,
) -> f64 {
    let zn = zeta.norm();
    if zn == 0.0 {
        jacobian_norm_estimate(problem, x)
    } else {
        frob_norm(&problem.map_vjp(x, zeta)) / zn
    }
}

/// `α_{k,0} = 0.2·min(max(lip ϑ · L_∇F + L_∇f, α_min), α_max)`.
pub fn alpha_init(lip_theta: f64, l_jac: f64, l_grad: f64, cfg: &SolverConfig) -> f64 {
    ALPHA_INIT_FACTOR
        * (lip_theta * l_jac + l_grad)
            .max(cfg.alpha_min)
            .min(cfg.alpha_max)
}

/// Relative objective change `|Θ(xᵏ) − Θ(xᵏ⁻¹)| / max(1, |Θ(xᵏ)|)`.
pub fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / cur.abs().max(1.0)
}

/// Whether the relative-objective stop fires.
pub fn terminate(prev: f64, cur: f64, eps_star: f64) -> bool {
    relative_change(prev, cur) <= eps_star
}

/// Witnesses for approximate stationarity built from a dual point.
#[derive(Debug, Clone)]
pub struct StationarityCertificate {
    pub z_bar: ZPoint,
    /// A subgradient of `ϑ` at `z̄`.
    pub xi_bar: ZPoint,
    /// `‖Π_{T_x M}(∇f(x) + ∇F(x)ξ̄)‖`.
    pub riem_residual: f64,
    /// `‖F(x) − z̄‖`.
    pub lin_residual: f64,
    /// `‖z̄ − prox_ϑ(z̄ + ξ̄)‖`, zero up to rounding when `ξ̄ ∈ ∂ϑ(z̄)`.
    pub membership_residual: f64,
}

impl StationarityCertificate {
    pub fn max_residual(&self) -> f64 {
        self.riem_residual.max(self.lin_residual)
    }
}

/// `z̄ = prox_{ϑ/β}(F(x) + ζ/β)`, `ξ̄ = ζ − β(z̄ − F(x))` and the two
/// stationarity residuals at `x`.
pub fn stationarity_measure<P: CompositeProblem + ?Sized>(
    problem: &P,
    x: &Mat,
    zeta: &ZPoint,
    beta: f64,
) -> Result<StationarityCertificate> {
    let reg = problem.regularizer();
    let fx = problem.map_value(x);
    let gamma = 1.0 / beta;
    let wrap = |e: crate::prox::ProxError| SolverError::Subsolver {
        k: 0,
        source: e.into(),
    };
    let z_bar = reg
        .prox(gamma, &fx.plus_scaled(gamma, zeta))
        .map_err(wrap)?;
    let diff = z_bar.sub(&fx);
    let xi_bar = zeta.plus_scaled(-beta, &diff);
    let projector = problem.manifold().projector(x)?;
    let mut s = problem.map_vjp(x, &xi_bar);
    s += &problem.f_grad(x);
    let riem_residual = frob_norm(&projector.apply(&s));
    let back = reg.prox(1.0, &z_bar.add(&xi_bar)).map_err(wrap)?;
    Ok(StationarityCertificate {
        riem_residual,
        lin_residual: diff.norm(),
        membership_residual: back.sub(&z_bar).norm(),
        z_bar,
        xi_bar,
    })
}

/// One accepted outer step `xᵏ → xᵏ⁺¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub k: usize,
    /// `Θ(xᵏ⁺¹)`.
    pub objective: f64,
    pub v_norm: f64,
    /// Accepted `α_{k,j_k}`.
    pub alpha: f64,
    /// `α_{k,0}`.
    pub alpha0: f64,
    pub jk: usize,
    /// Dual iterations summed over all `j` at this `k`.
    pub inner_iters: usize,
    pub beta: f64,
    pub mu: f64,
    /// Feasibility error of `xᵏ⁺¹`.
    pub feas_err: f64,
    pub time_ms: f64,
    /// `Θ_{k,j_k}(vᵏ)`.
    pub model_value: f64,
    pub gap: f64,
    /// Smallest duality gap seen over every dual iterate at this `k`.
    pub min_gap: f64,
    /// Curvature estimates behind `α_{k,0}` (zero at `k = 0`).
    pub l_jac: f64,
    pub l_grad: f64,
    /// The accepted subproblem did not meet the inexactness rule within its
    /// budget but still decreased the model.
    pub inexact_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Relative objective change fell below `eps_star`.
    Converged,
    /// The subproblem returned a zero step.
    Stationary,
    /// Both certificate residuals fell below `stationarity_tol`.
    Certified,
    MaxOuter,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::Stationary => "stationary",
            Self::Certified => "certified",
            Self::MaxOuter => "max_outer",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub x: Mat,
    pub objective: f64,
    pub initial_objective: f64,
    pub trace: Vec<IterateTrace>,
    pub certificate: StationarityCertificate,
    pub status: RunStatus,
    /// `x⁰, x¹, …` when `record_iterates` is set.
    pub iterates: Vec<Mat>,
    /// Accepted dual point of each outer step when `record_iterates` is set.
    pub duals: Vec<ZPoint>,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

struct Accepted {
    x_next: Mat,
    theta_next: f64,
    res: subsolver::SubSolveResult,
    alpha: f64,
    jk: usize,
    inner_iters: usize,
    min_gap: f64,
    fallback: bool,
}

enum StepOutcome {
    Accepted(Accepted),
    Zero { res: subsolver::SubSolveResult },
}

/// Runs the outer method from a feasible `x0`.
pub fn run<P: CompositeProblem + ?Sized>(
    problem: &P,
    x0: &Mat,
    cfg: &SolverConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let manifold = problem.manifold();
    let feas = manifold.feasibility_error(x0)?;
    if !(feas <= FEASIBILITY_TOL) {
        return Err(SolverError::InfeasibleStart(feas));
    }
    let lip_theta = problem.regularizer().lipschitz_bound(&problem.z_shape());
    let start = Instant::now();

    let mut x = x0.clone();
    let mut lin = Linearization::new(problem, &x).map_err(|e| sub_err(0, e))?;
    let initial_objective = lin.theta_x;
    let mut beta = cfg.beta0;
    let mut zeta = ZPoint::zeros(&problem.z_shape());
    let mut prev_step: Option<(Mat, Mat, f64)> = None;
    let mut last_alpha = cfg.alpha00.unwrap_or_else(|| problem.default_alpha00());
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut duals = Vec::new();
    if cfg.record_iterates {
        iterates.push(x.clone());
    }

    let mut status = RunStatus::MaxOuter;
    let mut final_zeta_beta: Option<(ZPoint, f64)> = None;
    for k in 0..cfg.max_outer {
        let mu = mu_schedule(k, cfg);
        let (alpha0, l_jac, l_grad) = match &prev_step {
            None => (last_alpha, 0.0, 0.0),
            Some((dx, dy, alpha_prev)) => {
                let l_jac = jacobian_curvature_estimate(problem, &x, &zeta);
                let l_grad = grad_curvature_estimate(dx, dy, alpha_prev / ALPHA_INIT_FACTOR);
                (alpha_init(lip_theta, l_jac, l_grad, cfg), l_jac, l_grad)
            }
        };

        let outcome = inner_loop(problem, &lin, k, alpha0, beta, mu, &zeta, cfg)?;
        let acc = match outcome {
            StepOutcome::Zero { res } => {
                status = RunStatus::Stationary;
                final_zeta_beta = Some((res.zeta, beta));
                break;
            }
            StepOutcome::Accepted(acc) => acc,
        };

        if let Some(tol) = cfg.stationarity_tol {
            let cert = stationarity_measure(problem, &x, &acc.res.zeta, beta)?;
            if cert.max_residual() <= tol {
                status = RunStatus::Certified;
                final_zeta_beta = Some((acc.res.zeta, beta));
                break;
            }
        }

        let feas_err = manifold.feasibility_error(&acc.x_next)?;
        let x_next = acc.x_next;
        let lin_next = Linearization::new(problem, &x_next).map_err(|e| sub_err(k + 1, e))?;
        if !lin_next.theta_x.is_finite() {
            return Err(SolverError::NonFinite(k + 1));
        }
        trace.push(IterateTrace {
            k,
            objective: acc.theta_next,
            v_norm: frob_norm(&acc.res.v),
            alpha: acc.alpha,
            alpha0,
            jk: acc.jk,
            inner_iters: acc.inner_iters,
            beta,
            mu,
            feas_err,
            time_ms: if cfg.timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
            model_value: acc.res.theta_v,
            gap: acc.res.gap,
            min_gap: acc.min_gap,
            l_jac,
            l_grad,
            inexact_fallback: acc.fallback,
        });
        prev_step = Some((&x_next - &x, &lin_next.grad_f - &lin.grad_f, acc.alpha));
        last_alpha = acc.alpha;
        zeta = acc.res.zeta;
        if cfg.record_iterates {
            iterates.push(x_next.clone());
            duals.push(zeta.clone());
        }
        let theta_prev = lin.theta_x;
        beta = beta_schedule(k, beta, cfg);
        x = x_next;
        lin = lin_next;
        if terminate(theta_prev, lin.theta_x, cfg.eps_star) {
            status = RunStatus::Converged;
            break;
        }
    }

    let (cert_zeta, cert_beta) = match final_zeta_beta {
        Some(zb) => zb,
        None => {
            // one more solve at the returned point
            let k = trace.len();
            let mu = mu_schedule(k, cfg);
            let spec = SubproblemSpec::new(problem, &lin, last_alpha, beta);
            let res = subsolver::solve(cfg.inner, &spec, mu, &zeta, cfg.budget())
                .map_err(|e| sub_err(k, e))?;
            (res.zeta, beta)
        }
    };
    let certificate = stationarity_measure(problem, &x, &cert_zeta, cert_beta)?;
    Ok(RunResult {
        objective: lin.theta_x,
        x,
        initial_objective,
        trace,
        certificate,
        status,
        iterates,
        duals,
    })
}

fn sub_err(k: usize, source: SubsolverError) -> SolverError {
    SolverError::Subsolver { k, source }
}

/// The `j` loop: escalate `α` until the retracted step is accepted.
#[allow(clippy::too_many_arguments)]
fn inner_loop<P: CompositeProblem + ?Sized>(
    problem: &P,
    lin: &Linearization,
    k: usize,
    alpha0: f64,
    beta: f64,
    mu: f64,
    zeta0: &ZPoint,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let manifold = problem.manifold();
    let x = &lin.x;
    let zero_tol = ZERO_STEP_TOL * frob_norm(x).max(1.0);
    let mut alpha = alpha0;
    let mut warm = zeta0.clone();
    let mut inner_iters = 0;
    let mut min_gap = f64::INFINITY;
    for j in 0..=cfg.max_inner_j {
        let spec = SubproblemSpec::new(problem, lin, alpha, beta);
        let res = subsolver::solve(cfg.inner, &spec, mu, &warm, cfg.budget())
            .map_err(|e| sub_err(k, e))?;
        inner_iters += res.inner_iters;
        min_gap = res
            .trace
            .iter()
            .map(|s| s.gap)
            .fold(min_gap.min(res.gap), f64::min);
        warm = res.zeta.clone();
        let fallback = res.status != SubStatus::Converged;
        let usable = !fallback || res.theta_v <= spec.theta_zero();
        let v_norm = frob_norm(&res.v);
        if usable && v_norm <= zero_tol {
            return Ok(StepOutcome::Zero { res });
        }
        if usable {
            if let Ok(x_next) = manifold.retract(x, &res.v) {
                let theta_next = problem.objective(&x_next);
                if theta_next <= res.theta_v - 0.5 * cfg.gamma_bar * v_norm * v_norm {
                    return Ok(StepOutcome::Accepted(Accepted {
                        x_next,
                        theta_next,
                        res,
                        alpha,
                        jk: j,
                        inner_iters,
                        min_gap,
                        fallback,
                    }));
                }
            }
        }
        if j < cfg.max_inner_j {
            alpha *= cfg.sigma;
        }
    }
    Err(SolverError::InnerLoopDiverged {
        k,
        escalations: cfg.max_inner_j,
        alpha,
    })
}
