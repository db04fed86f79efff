//! Dense kernels used by the geometry and the solvers.
//!
//! Everything here works on [`Mat`] (`ndarray::Array2<f64>`). The factorizations
//! are small and hand-written: thin Householder QR with a positive-diagonal
//! convention, cyclic Jacobi for symmetric eigenproblems, a Lyapunov solver
//! built on the eigendecomposition, LU with partial pivoting, and a
//! matrix-free conjugate gradient method generic over [`InnerProductSpace`].

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

pub type Mat = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error(
        "matrix is numerically rank deficient (min |R_ii| = {min_diag:e}, threshold {threshold:e})"
    )]
    RankDeficient { min_diag: f64, threshold: f64 },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e}, scale {scale:e})")]
    NotSymmetric { asymmetry: f64, scale: f64 },
    #[error(
        "matrix is not positive definite (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})"
    )]
    NotSpd { min_eig: f64, max_eig: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A real inner-product space, enough structure for CG and power iteration.
pub trait InnerProductSpace: Clone {
    fn inner(&self, other: &Self) -> f64;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
    fn zeros_like(&self) -> Self;

    fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

impl InnerProductSpace for Array2<f64> {
    fn inner(&self, other: &Self) -> f64 {
        inner(self, other)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.scaled_add(a, x);
    }
    fn scale(&mut self, a: f64) {
        self.mapv_inplace(|v| v * a);
    }
    fn zeros_like(&self) -> Self {
        Array2::zeros(self.raw_dim())
    }
}

impl InnerProductSpace for Array1<f64> {
    fn inner(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.scaled_add(a, x);
    }
    fn scale(&mut self, a: f64) {
        self.mapv_inplace(|v| v * a);
    }
    fn zeros_like(&self) -> Self {
        Array1::zeros(self.len())
    }
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frob_norm(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Skew-symmetric part `(A − Aᵀ)/2` of a square matrix.
pub fn skew(a: &Mat) -> Mat {
    (a - &a.t()) * 0.5
}

/// Symmetric part `(A + Aᵀ)/2` of a square matrix.
pub fn sym(a: &Mat) -> Mat {
    (a + &a.t()) * 0.5
}

pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Thin QR `M = QR` with `diag(R) > 0`.
///
/// Householder reflections; the sign of each column of `Q` is chosen so that
/// `R` has a strictly positive diagonal, which makes the factor unique and
/// the QR retraction well defined.
pub fn qr_positive(m: &Mat) -> Result<(Mat, Mat)> {
    let (rows, cols) = m.dim();
    if rows < cols {
        return Err(LinalgError::DimensionMismatch {
            expected: (cols, cols),
            got: (rows, cols),
        });
    }
    let scale = frob_norm(m);
    let mut a = m.clone();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(cols);

    for k in 0..cols {
        let mut v: Array1<f64> = a.column(k).slice(ndarray::s![k..]).to_owned();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            reflectors.push(Array1::zeros(rows - k));
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.mapv_inplace(|x| x / vnorm);
        // A[k.., k..] -= 2 v (vᵀ A[k.., k..])
        for j in k..cols {
            let mut col = a.slice_mut(ndarray::s![k.., j]);
            let d: f64 = col.iter().zip(v.iter()).map(|(c, w)| c * w).sum();
            col.scaled_add(-2.0 * d, &v);
        }
        reflectors.push(v);
    }

    let mut r = Mat::zeros((cols, cols));
    for i in 0..cols {
        for j in i..cols {
            r[[i, j]] = a[[i, j]];
        }
    }

    // Q = H_0 H_1 ... H_{c-1} [I; 0]
    let mut q = Mat::zeros((rows, cols));
    for j in 0..cols {
        q[[j, j]] = 1.0;
    }
    for k in (0..cols).rev() {
        let v = &reflectors[k];
        for j in 0..cols {
            let mut col = q.slice_mut(ndarray::s![k.., j]);
            let d: f64 = col.iter().zip(v.iter()).map(|(c, w)| c * w).sum();
            col.scaled_add(-2.0 * d, v);
        }
    }

    for i in 0..cols {
        if r[[i, i]] < 0.0 {
            r.row_mut(i).mapv_inplace(|x| -x);
            q.column_mut(i).mapv_inplace(|x| -x);
        }
    }

    let min_diag = (0..cols).map(|i| r[[i, i]]).fold(f64::INFINITY, f64::min);
    let threshold = 1e-12 * scale;
    if cols > 0 && !(min_diag > threshold) {
        return Err(LinalgError::RankDeficient {
            min_diag,
            threshold,
        });
    }
    Ok((q, r))
}

/// Symmetric eigendecomposition `S = Q diag(λ) Qᵀ`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Mat,
}

impl SymEig {
    pub fn reconstruct(&self) -> Mat {
        let q = &self.eigenvectors;
        let ql = q * &self.eigenvalues.view().insert_axis(Axis(0));
        ql.dot(&q.t())
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// The input is symmetrized before factoring; asymmetry beyond
/// `1e-10·‖S‖_F` is rejected.
pub fn sym_eig(s: &Mat) -> Result<SymEig> {
    let (n, c) = s.dim();
    if n != c {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (n, c),
        });
    }
    let scale = frob_norm(s);
    let asym = frob_norm(&(s - &s.t()));
    if asym > 1e-10 * scale {
        return Err(LinalgError::NotSymmetric {
            asymmetry: asym,
            scale,
        });
    }
    let mut a = sym(s);
    let mut v = Mat::eye(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cth = 1.0 / (t * t + 1.0).sqrt();
                let sth = t * cth;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = cth * akp - sth * akq;
                    a[[k, q]] = sth * akp + cth * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = cth * apk - sth * aqk;
                    a[[q, k]] = sth * apk + cth * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = cth * vkp - sth * vkq;
                    v[[k, q]] = sth * vkp + cth * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = Mat::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Solves `SU + US = M` for symmetric positive definite `S`.
pub fn solve_lyapunov_spd(s: &Mat, m: &Mat) -> Result<Mat> {
    if s.dim() != m.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: s.dim(),
            got: m.dim(),
        });
    }
    let eig = sym_eig(s)?;
    check_spd(&eig)?;
    Ok(solve_lyapunov_eig(&eig, m))
}

/// Rejects eigendecompositions whose smallest eigenvalue is not above
/// `1e-12·λ_max`.
pub fn check_spd(eig: &SymEig) -> Result<()> {
    let n = eig.eigenvalues.len();
    let max_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if n > 0 && !(min_eig > 1e-12 * max_eig && max_eig > 0.0) {
        return Err(LinalgError::NotSpd { min_eig, max_eig });
    }
    Ok(())
}

/// Lyapunov solve `SU + US = M` given a precomputed eigendecomposition of an
/// SPD `S`.
pub fn solve_lyapunov_eig(eig: &SymEig, m: &Mat) -> Mat {
    let n = eig.eigenvalues.len();
    let q = &eig.eigenvectors;
    let mut mt = q.t().dot(m).dot(q);
    for i in 0..n {
        for j in 0..n {
            mt[[i, j]] /= eig.eigenvalues[i] + eig.eigenvalues[j];
        }
    }
    q.dot(&mt).dot(&q.t())
}

/// Solves `AX = B` by LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let (n, c) = a.dim();
    if n != c || b.nrows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (b.nrows(), c),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[[i, k]].abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if !(pmax > f64::EPSILON * scale * n as f64) {
            return Err(LinalgError::Singular);
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..x.ncols() {
                x.swap([k, j], [piv, j]);
            }
        }
        for i in (k + 1)..n {
            let l = lu[[i, k]] / lu[[k, k]];
            lu[[i, k]] = l;
            for j in (k + 1)..n {
                lu[[i, j]] -= l * lu[[k, j]];
            }
            for j in 0..x.ncols() {
                x[[i, j]] -= l * x[[k, j]];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..x.ncols() {
            let mut acc = x[[k, j]];
            for i in (k + 1)..n {
                acc -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = acc / lu[[k, k]];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Converged,
    MaxIterations,
    /// `⟨p, Ap⟩ ≤ 0` was observed: the operator is not positive definite.
    NonPositiveCurvature,
}

#[derive(Debug, Clone)]
pub struct CgOutcome<V> {
    pub x: V,
    pub iterations: usize,
    /// Achieved `‖apply(x) − b‖`.
    pub residual: f64,
    pub status: CgStatus,
}

/// Conjugate gradients for `apply(x) = b` with `apply` symmetric positive
/// definite, started from zero. Stops when `‖r‖ ≤ tol·‖b‖`.
pub fn cg_solve<V, F>(apply: F, b: &V, tol: f64, max_iter: usize) -> CgOutcome<V>
where
    V: InnerProductSpace,
    F: Fn(&V) -> V,
{
    let mut x = b.zeros_like();
    let bnorm = b.norm();
    let target = tol * bnorm;
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            status: CgStatus::Converged,
        };
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.inner(&r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= target {
            break;
        }
        let ap = apply(&p);
        let pap = p.inner(&ap);
        if !(pap > 0.0) {
            return CgOutcome {
                x,
                iterations,
                residual: rr.sqrt(),
                status: CgStatus::NonPositiveCurvature,
            };
        }
        let step = rr / pap;
        x.axpy(step, &p);
        r.axpy(-step, &ap);
        let rr_new = r.inner(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.scale(beta);
        p.axpy(1.0, &r);
        iterations += 1;
    }
    let residual = rr.sqrt();
    let status = if residual <= target {
        CgStatus::Converged
    } else {
        CgStatus::MaxIterations
    };
    CgOutcome {
        x,
        iterations,
        residual,
        status,
    }
}

/// Largest eigenvalue estimate of a symmetric PSD operator by `steps` rounds of
/// power iteration from `start`.
pub fn power_iteration<V, F>(apply: F, start: V, steps: usize) -> f64
where
    V: InnerProductSpace,
    F: Fn(&V) -> V,
{
    let mut v = start;
    let n0 = v.norm();
    if n0 == 0.0 {
        return 0.0;
    }
    v.scale(1.0 / n0);
    let mut est = 0.0;
    for _ in 0..steps {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw;
        v = w;
        v.scale(1.0 / nw);
    }
    est
}
