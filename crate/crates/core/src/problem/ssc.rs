use super::{
    check_finite, check_symmetric, spectral_norm_estimate, CompositeProblem, ProblemError, Result,
};
use crate::linalg::{inner, Mat};
use crate::manifold::ManifoldKind;
use crate::prox::ProxRegularizer;
use crate::zpoint::{ZPoint, ZShape};

/// Sparse spectral clustering: `min ⟨A, XXᵀ⟩ + λ‖XXᵀ‖₁` over `St(n, r)`.
///
/// `F(X) = XXᵀ` is stored as a full `n × n` block; the entrywise prox keeps
/// symmetric inputs symmetric.
#[derive(Debug, Clone)]
pub struct SparseSpectralClustering {
    a: Mat,
    r: usize,
    reg: ProxRegularizer,
    alpha00: f64,
}

pub fn make_ssc(a: Mat, lambda: f64, r: usize) -> Result<SparseSpectralClustering> {
    check_symmetric(&a)?;
    check_finite(&a, "A")?;
    let n = a.nrows();
    if r == 0 || r > n {
        return Err(ProblemError::InvalidParameter(format!(
            "need 1 <= r <= n, got r = {r}, n = {n}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    let alpha00 = 0.5 * spectral_norm_estimate(&a);
    Ok(SparseSpectralClustering {
        a,
        r,
        reg: ProxRegularizer::l1(lambda)?,
        alpha00,
    })
}

impl SparseSpectralClustering {
    pub fn laplacian(&self) -> &Mat {
        &self.a
    }
}

impl CompositeProblem for SparseSpectralClustering {
    fn name(&self) -> &'static str {
        "ssc"
    }

    fn manifold(&self) -> ManifoldKind {
        ManifoldKind::Stiefel {
            n: self.a.nrows(),
            r: self.r,
        }
    }

    fn regularizer(&self) -> &ProxRegularizer {
        &self.reg
    }

    fn z_shape(&self) -> ZShape {
        let n = self.a.nrows();
        vec![(n, n)]
    }

    fn f_value(&self, x: &Mat) -> f64 {
        // ⟨A, XXᵀ⟩ = ⟨AX, X⟩
        inner(&self.a.dot(x), x)
    }

    fn f_grad(&self, x: &Mat) -> Mat {
        self.a.dot(x) * 2.0
    }

    fn map_value(&self, x: &Mat) -> ZPoint {
        ZPoint::single(x.dot(&x.t()))
    }

    fn map_jvp(&self, x: &Mat, v: &Mat) -> ZPoint {
        let xvt = x.dot(&v.t());
        ZPoint::single(&xvt + &xvt.t())
    }

    fn map_vjp(&self, x: &Mat, w: &ZPoint) -> Mat {
        let w = &w.blocks[0];
        (w + &w.t()).dot(x)
    }

    fn default_alpha00(&self) -> f64 {
        self.alpha00
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_norm;
    use crate::problem::validate_derivatives;
    use crate::random::{randn, rng};

    #[test]
    fn identity_example() {
        let p = make_ssc(Mat::eye(2), 0.1, 2).unwrap();
        let x = Mat::eye(2);
        assert_eq!(p.f_value(&x), 2.0);
        assert_eq!(p.f_grad(&x), Mat::eye(2) * 2.0);
        assert_eq!(p.map_value(&x).blocks[0], Mat::eye(2));
        assert_eq!(
            p.map_jvp(&x, &Mat::zeros((2, 2))).blocks[0],
            Mat::zeros((2, 2))
        );
    }

    #[test]
    fn rejects_bad_input() {
        let mut a = Mat::eye(3);
        a[[0, 1]] = 1.0;
        assert!(matches!(
            make_ssc(a, 0.1, 1),
            Err(ProblemError::NotSymmetric(_))
        ));
        assert!(make_ssc(Mat::eye(3), 0.1, 4).is_err());
        assert!(make_ssc(Mat::eye(3), 0.0, 1).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let mut g = rng(3);
        let b = randn(6, 6, &mut g);
        let p = make_ssc(&b + &b.t(), 0.05, 2).unwrap();
        for seed in 0..10 {
            let x = p.manifold().random_point(seed);
            let v = randn(6, 2, &mut g);
            let w = ZPoint::single(randn(6, 6, &mut g));
            let lhs = crate::linalg::InnerProductSpace::inner(&p.map_jvp(&x, &v), &w);
            let rhs = inner(&v, &p.map_vjp(&x, &w));
            assert!((lhs - rhs).abs() <= 1e-10 * (frob_norm(&v) * frob_norm(&w.blocks[0]) + 1.0));
        }
    }

    #[test]
    fn derivatives_validate() {
        let mut g = rng(4);
        let b = randn(6, 6, &mut g);
        let p = make_ssc(&b + &b.t(), 0.05, 2).unwrap();
        validate_derivatives(&p, 20, 1).unwrap();
    }
}
