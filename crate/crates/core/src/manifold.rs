//! Embedded matrix manifolds: tangent projection, retraction and feasibility.
//!
//! Three manifolds are supported:
//!
//! * Stiefel `St(n, r) = {X ∈ ℝⁿˣʳ : XᵀX = I_r}` with the QR retraction,
//! * symplectic Stiefel `Sp(2r, 2n) = {X ∈ ℝ²ⁿˣ²ʳ : XᵀJ₂ₙX = J₂ᵣ}` with a Cayley
//!   retraction,
//! * the unit sphere in ℝⁿ (stored as an `n × 1` matrix), mostly for tests.
//!
//! Projections are orthogonal in the ambient Frobenius inner product.

use thiserror::Error;

use crate::linalg::{
    check_spd, frob_norm, lu_solve, qr_positive, solve_lyapunov_eig, sym, sym_eig, LinalgError,
    Mat, SymEig,
};
use crate::random::{randn, rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("dimension mismatch: manifold expects {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid manifold parameters: {0}")]
    InvalidKind(String),
    #[error("point is not on the manifold (feasibility error {0:e})")]
    InfeasiblePoint(f64),
    #[error("direction is not tangent (residual {0:e})")]
    NotTangent(f64),
    #[error("retraction failed: {0}")]
    RetractionFailure(#[source] LinalgError),
}

pub type Result<T> = std::result::Result<T, ManifoldError>;

/// Feasibility tolerance required of points handed to the projector.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Tangency tolerance for retraction inputs, relative to `max(1, ‖x‖‖v‖)`.
pub const RETRACTION_TANGENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    Stiefel {
        n: usize,
        r: usize,
    },
    /// Ambient space is `2n × 2r`.
    SymplecticStiefel {
        n: usize,
        r: usize,
    },
    Sphere {
        n: usize,
    },
}

/// `J_{2k} = [[0, I_k], [−I_k, 0]]`.
pub fn j_matrix(k: usize) -> Mat {
    let mut j = Mat::zeros((2 * k, 2 * k));
    for i in 0..k {
        j[[i, k + i]] = 1.0;
        j[[k + i, i]] = -1.0;
    }
    j
}

/// `J_{2k} M` for `M` with `2k` rows.
pub fn j_left(m: &Mat) -> Mat {
    let k = m.nrows() / 2;
    let mut out = Mat::zeros(m.raw_dim());
    out.slice_mut(ndarray::s![..k, ..])
        .assign(&m.slice(ndarray::s![k.., ..]));
    out.slice_mut(ndarray::s![k.., ..])
        .assign(&m.slice(ndarray::s![..k, ..]).mapv(|v| -v));
    out
}

/// `M J_{2k}` for `M` with `2k` columns.
pub fn j_right(m: &Mat) -> Mat {
    let k = m.ncols() / 2;
    let mut out = Mat::zeros(m.raw_dim());
    out.slice_mut(ndarray::s![.., ..k])
        .assign(&m.slice(ndarray::s![.., k..]).mapv(|v| -v));
    out.slice_mut(ndarray::s![.., k..])
        .assign(&m.slice(ndarray::s![.., ..k]));
    out
}

impl ManifoldKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Stiefel { n, r } if r == 0 || r > n => Err(ManifoldError::InvalidKind(format!(
                "Stiefel requires 1 <= r <= n, got n = {n}, r = {r}"
            ))),
            Self::SymplecticStiefel { n, r } if r == 0 || r > n => Err(ManifoldError::InvalidKind(
                format!("symplectic Stiefel requires 1 <= r <= n, got n = {n}, r = {r}"),
            )),
            Self::Sphere { n } if n == 0 => {
                Err(ManifoldError::InvalidKind("sphere requires n >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Shape of points and tangent vectors.
    pub fn ambient_shape(&self) -> (usize, usize) {
        match *self {
            Self::Stiefel { n, r } => (n, r),
            Self::SymplecticStiefel { n, r } => (2 * n, 2 * r),
            Self::Sphere { n } => (n, 1),
        }
    }

    fn check_dims(&self, x: &Mat) -> Result<()> {
        let expected = self.ambient_shape();
        if x.dim() != expected {
            return Err(ManifoldError::DimensionMismatch {
                expected,
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn feasibility_error(&self, x: &Mat) -> Result<f64> {
        self.check_dims(x)?;
        Ok(match *self {
            Self::Stiefel { r, .. } => frob_norm(&(x.t().dot(x) - Mat::eye(r))),
            Self::SymplecticStiefel { r, .. } => frob_norm(&(x.t().dot(&j_left(x)) - j_matrix(r))),
            Self::Sphere { .. } => {
                let nrm2: f64 = x.iter().map(|v| v * v).sum();
                (nrm2 - 1.0).abs()
            }
        })
    }

    /// Violation of the linearized constraint at `x` in direction `v`.
    pub fn tangent_residual(&self, x: &Mat, v: &Mat) -> f64 {
        match *self {
            Self::Stiefel { .. } => {
                let xtv = x.t().dot(v);
                frob_norm(&(&xtv + &xtv.t()))
            }
            Self::SymplecticStiefel { .. } => {
                let m = v.t().dot(&j_left(x));
                frob_norm(&(&m - &m.t()))
            }
            Self::Sphere { .. } => x
                .iter()
                .zip(v.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs(),
        }
    }

    /// Builds the tangent-space projector at a feasible point.
    pub fn projector(&self, x: &Mat) -> Result<TangentProjector> {
        let err = self.feasibility_error(x)?;
        if !(err <= FEASIBILITY_TOL) {
            return Err(ManifoldError::InfeasiblePoint(err));
        }
        let data = match self {
            Self::SymplecticStiefel { .. } => {
                let gram = sym(&x.t().dot(x));
                let eig = sym_eig(&gram).map_err(|_| ManifoldError::InfeasiblePoint(err))?;
                check_spd(&eig).map_err(|_| ManifoldError::InfeasiblePoint(err))?;
                ProjectorData::Symplectic {
                    jx: j_left(x),
                    gram_eig: eig,
                }
            }
            _ => ProjectorData::Plain,
        };
        Ok(TangentProjector {
            kind: *self,
            x: x.clone(),
            data,
        })
    }

    pub fn tangent_project(&self, x: &Mat, u: &Mat) -> Result<TangentVector> {
        let p = self.projector(x)?;
        self.check_dims(u)?;
        Ok(TangentVector {
            base: x.clone(),
            dir: p.apply(u),
        })
    }

    /// `R_x(v)`: QR for Stiefel, Cayley for symplectic Stiefel, normalization
    /// for the sphere. `R_x(0) = x` exactly.
    pub fn retract(&self, x: &Mat, v: &Mat) -> Result<Mat> {
        self.check_dims(x)?;
        self.check_dims(v)?;
        let vnorm = frob_norm(v);
        if vnorm == 0.0 {
            return Ok(x.clone());
        }
        let res = self.tangent_residual(x, v);
        if !(res <= RETRACTION_TANGENCY_TOL * (frob_norm(x) * vnorm).max(1.0)) {
            return Err(ManifoldError::NotTangent(res));
        }
        match *self {
            Self::Stiefel { .. } => qr_positive(&(x + v))
                .map(|(q, _)| q)
                .map_err(ManifoldError::RetractionFailure),
            Self::Sphere { .. } => {
                let y = x + v;
                let n = frob_norm(&y);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(ManifoldError::RetractionFailure(LinalgError::Singular));
                }
                Ok(y / n)
            }
            Self::SymplecticStiefel { .. } => cayley(x, v),
        }
    }

    /// Seeded random point: QR of a Gaussian matrix (Stiefel), normalized
    /// Gaussian (sphere), or a Cayley step of norm one from the canonical
    /// embedding (symplectic Stiefel).
    pub fn random_point(&self, seed: u64) -> Mat {
        let mut g = rng(seed);
        match *self {
            Self::Stiefel { n, r } => loop {
                if let Ok((q, _)) = qr_positive(&randn(n, r, &mut g)) {
                    break q;
                }
            },
            Self::Sphere { n } => loop {
                let y = randn(n, 1, &mut g);
                let nrm = frob_norm(&y);
                if nrm > 0.0 {
                    break y / nrm;
                }
            },
            Self::SymplecticStiefel { n, r } => {
                let e = canonical_symplectic(n, r);
                let proj = self.projector(&e).expect("canonical point is feasible");
                loop {
                    let mut v = proj.apply(&randn(2 * n, 2 * r, &mut g));
                    let nrm = frob_norm(&v);
                    if nrm == 0.0 {
                        continue;
                    }
                    v /= nrm;
                    if let Ok(x) = cayley(&e, &v) {
                        break x;
                    }
                }
            }
        }
    }
}

/// `E = [I_r 0; 0 0; 0 I_r; 0 0]`, which satisfies `EᵀJ₂ₙE = J₂ᵣ`.
pub fn canonical_symplectic(n: usize, r: usize) -> Mat {
    let mut e = Mat::zeros((2 * n, 2 * r));
    for i in 0..r {
        e[[i, i]] = 1.0;
        e[[n + i, r + i]] = 1.0;
    }
    e
}

/// Cayley retraction on the symplectic Stiefel manifold.
///
/// For tangent `v` at `x`, `Ω = J S` with the symmetric
/// `S = W Pᵀ + P Wᵀ − P (xᵀW) Pᵀ`, `W = −J v`, `P = x (xᵀx)⁻¹`, is Hamiltonian
/// and satisfies `Ω x = v`. The result `(I − Ω/2)⁻¹(I + Ω/2) x` is then
/// symplectic. `Ω` has rank at most `4r`, so the inverse is applied through
/// the Sherman–Morrison–Woodbury identity with a `4r × 4r` solve.
fn cayley(x: &Mat, v: &Mat) -> Result<Mat> {
    let p = x.ncols();
    let w = j_left(v).mapv(|t| -t);
    let gram = x.t().dot(x);
    let gram_inv = lu_solve(&gram, &Mat::eye(p)).map_err(ManifoldError::RetractionFailure)?;
    let pm = x.dot(&gram_inv);
    let m = sym(&x.t().dot(&w));

    // L = [W P], K = [[0, I], [I, −M]], Ω = (J L K) Lᵀ
    let mut l = Mat::zeros((x.nrows(), 2 * p));
    l.slice_mut(ndarray::s![.., ..p]).assign(&w);
    l.slice_mut(ndarray::s![.., p..]).assign(&pm);
    let mut k = Mat::zeros((2 * p, 2 * p));
    for i in 0..p {
        k[[i, p + i]] = 1.0;
        k[[p + i, i]] = 1.0;
    }
    k.slice_mut(ndarray::s![p.., p..]).assign(&m.mapv(|t| -t));
    let u = j_left(&l.dot(&k));

    let y0 = x + &(u.dot(&l.t().dot(x)) * 0.5);
    let small = Mat::eye(2 * p) - l.t().dot(&u) * 0.5;
    let corr = lu_solve(&small, &l.t().dot(&y0)).map_err(ManifoldError::RetractionFailure)?;
    let y = &y0 + &(u.dot(&corr) * 0.5);
    if !y.iter().all(|t| t.is_finite()) {
        return Err(ManifoldError::RetractionFailure(LinalgError::Singular));
    }
    Ok(y)
}

#[derive(Debug, Clone)]
enum ProjectorData {
    Plain,
    Symplectic { jx: Mat, gram_eig: SymEig },
}

/// Orthogonal projection onto `T_x M` at a fixed feasible `x`.
#[derive(Debug, Clone)]
pub struct TangentProjector {
    kind: ManifoldKind,
    x: Mat,
    data: ProjectorData,
}

impl TangentProjector {
    pub fn base(&self) -> &Mat {
        &self.x
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn apply(&self, u: &Mat) -> Mat {
        let x = &self.x;
        match (&self.kind, &self.data) {
            // (I − xxᵀ)u + x skew(xᵀu) = u − x sym(xᵀu)
            (ManifoldKind::Stiefel { .. }, _) => u - &x.dot(&sym(&x.t().dot(u))),
            (ManifoldKind::Sphere { .. }, _) => {
                let c: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                u - &(x * c)
            }
            // u + J x u*, with xᵀx u* + u* xᵀx = uᵀJx − (Jx)ᵀu
            (
                ManifoldKind::SymplecticStiefel { .. },
                ProjectorData::Symplectic { jx, gram_eig },
            ) => {
                let a = u.t().dot(jx);
                let rhs = &a - &a.t();
                let ustar = solve_lyapunov_eig(gram_eig, &rhs);
                u + &jx.dot(&ustar)
            }
            (ManifoldKind::SymplecticStiefel { .. }, ProjectorData::Plain) => {
                unreachable!("symplectic projector always carries its Gram factorization")
            }
        }
    }

    pub fn residual(&self, v: &Mat) -> f64 {
        self.kind.tangent_residual(&self.x, v)
    }
}

/// A direction together with the point it is tangent at.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: Mat,
    pub dir: Mat,
}
