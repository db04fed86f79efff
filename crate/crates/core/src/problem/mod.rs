//! Composite problems `min_{x∈M} f(x) + ϑ(F(x))`.
//!
//! [`CompositeProblem`] is the solver's only view of an application: the
//! manifold, `f` with its gradient, `F` with its Jacobian action and adjoint,
//! and the regularizer `ϑ`. Three instances are provided:
//!
//! * [`SparseSpectralClustering`]: `⟨A, XXᵀ⟩ + λ‖XXᵀ‖₁` on Stiefel,
//! * [`GroupSparsePca`]: `−tr(XᵀCX) + λ‖X‖_{2,1} + ρ‖E∘(XᵀCX)‖₁` on Stiefel,
//! * [`SymplecticDecomposition`]: `‖XX⁺A − A‖_F + λ‖X‖₁` on symplectic Stiefel.

mod data;
mod gpca;
mod io;
mod psd;
mod ssc;
mod validate;

use thiserror::Error;

pub use data::{gen_data_pca, gen_data_psd_type1, gen_data_ssc, SscData};
pub use gpca::{make_group_pca, off_diagonal_mask, GroupSparsePca};
pub use io::{read_matrix, read_matrix_bin, read_matrix_csv, write_matrix_bin, MATRIX_MAGIC};
pub use psd::{make_psd, symplectic_inverse, SymplecticDecomposition};
pub use ssc::{make_ssc, SparseSpectralClustering};
pub use validate::{validate_derivatives, ValidationReport};

use crate::linalg::{power_iteration, Mat};
use crate::manifold::{ManifoldError, ManifoldKind};
use crate::prox::{ProxError, ProxRegularizer};
use crate::random::{randn, rng};
use crate::zpoint::{ZPoint, ZShape};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("column {column} is constant and cannot be normalized")]
    DegenerateColumn { column: usize },
    #[error("derivative validation failed for {map}: error {error:e} exceeds {bound:e}")]
    ValidationFailed {
        map: &'static str,
        error: f64,
        bound: f64,
    },
    #[error("malformed matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Prox(#[from] ProxError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// A smooth-plus-convex-composite objective on an embedded manifold.
///
/// `map_vjp` must be the adjoint of `map_jvp` in the Frobenius pairing;
/// [`validate_derivatives`] checks this together with finite differences.
pub trait CompositeProblem: Send + Sync {
    fn name(&self) -> &'static str;
    fn manifold(&self) -> ManifoldKind;
    fn regularizer(&self) -> &ProxRegularizer;
    fn z_shape(&self) -> ZShape;

    fn f_value(&self, x: &Mat) -> f64;
    fn f_grad(&self, x: &Mat) -> Mat;
    /// `F(x)`.
    fn map_value(&self, x: &Mat) -> ZPoint;
    /// `F′(x)v`.
    fn map_jvp(&self, x: &Mat, v: &Mat) -> ZPoint;
    /// `∇F(x)w`, the adjoint of `F′(x)`.
    fn map_vjp(&self, x: &Mat, w: &ZPoint) -> Mat;

    /// Initial `α₀,₀` for the outer method.
    fn default_alpha00(&self) -> f64 {
        1.0
    }

    /// `Θ(x) = f(x) + ϑ(F(x))`.
    fn objective(&self, x: &Mat) -> f64 {
        let z = self.map_value(x);
        self.f_value(x)
            + self
                .regularizer()
                .eval(&z)
                .expect("F(x) has the regularizer's shape by construction")
    }
}

impl<P: CompositeProblem + ?Sized> CompositeProblem for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn manifold(&self) -> ManifoldKind {
        (**self).manifold()
    }
    fn regularizer(&self) -> &ProxRegularizer {
        (**self).regularizer()
    }
    fn z_shape(&self) -> ZShape {
        (**self).z_shape()
    }
    fn f_value(&self, x: &Mat) -> f64 {
        (**self).f_value(x)
    }
    fn f_grad(&self, x: &Mat) -> Mat {
        (**self).f_grad(x)
    }
    fn map_value(&self, x: &Mat) -> ZPoint {
        (**self).map_value(x)
    }
    fn map_jvp(&self, x: &Mat, v: &Mat) -> ZPoint {
        (**self).map_jvp(x, v)
    }
    fn map_vjp(&self, x: &Mat, w: &ZPoint) -> Mat {
        (**self).map_vjp(x, w)
    }
    fn default_alpha00(&self) -> f64 {
        (**self).default_alpha00()
    }
    fn objective(&self, x: &Mat) -> f64 {
        (**self).objective(x)
    }
}

const NORM_ESTIMATE_STEPS: usize = 20;
const NORM_ESTIMATE_SEED: u64 = 0x5eed_0f_a11;

/// Spectral norm of a matrix by power iteration on `MᵀM`.
pub fn spectral_norm_estimate(m: &Mat) -> f64 {
    let start = randn(m.ncols(), 1, &mut rng(NORM_ESTIMATE_SEED));
    power_iteration(|v: &Mat| m.t().dot(&m.dot(v)), start, NORM_ESTIMATE_STEPS).sqrt()
}

/// `‖F′(x)‖` by power iteration on `∇F(x)F′(x)`.
pub fn jacobian_norm_estimate<P: CompositeProblem + ?Sized>(problem: &P, x: &Mat) -> f64 {
    let (r, c) = x.dim();
    let start = randn(r, c, &mut rng(NORM_ESTIMATE_SEED));
    power_iteration(
        |v: &Mat| problem.map_vjp(x, &problem.map_jvp(x, v)),
        start,
        NORM_ESTIMATE_STEPS,
    )
    .sqrt()
}

pub(crate) fn check_symmetric(a: &Mat) -> Result<()> {
    let (r, c) = a.dim();
    if r != c {
        return Err(ProblemError::DimensionMismatch(format!(
            "expected a square matrix, got {r}x{c}"
        )));
    }
    let scale = crate::linalg::frob_norm(a);
    let asym = crate::linalg::frob_norm(&(a - &a.t()));
    if asym > 1e-12 * scale.max(1.0) {
        return Err(ProblemError::NotSymmetric(asym));
    }
    Ok(())
}

pub(crate) fn check_finite(a: &Mat, what: &str) -> Result<()> {
    if crate::linalg::all_finite(a) {
        Ok(())
    } else {
        Err(ProblemError::InvalidParameter(format!(
            "{what} has non-finite entries"
        )))
    }
}
