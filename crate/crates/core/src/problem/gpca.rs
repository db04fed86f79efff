use super::{check_finite, spectral_norm_estimate, CompositeProblem, ProblemError, Result};
use crate::linalg::{inner, Mat};
use crate::manifold::ManifoldKind;
use crate::prox::ProxRegularizer;
use crate::zpoint::{ZPoint, ZShape};

/// Group-sparse PCA with an orthogonality penalty on the scores.
///
/// Minimizes `−tr(XᵀCX) + λ‖X‖_{2,1} + ρ‖E∘(XᵀCX)‖₁` over `St(n, r)`, with
/// `C = BᵀB` and `E` the off-diagonal mask. The inner map is
/// `F(X) = (X, E∘(XᵀCX))`.
#[derive(Debug, Clone)]
pub struct GroupSparsePca {
    c: Mat,
    mask: Mat,
    r: usize,
    reg: ProxRegularizer,
    alpha00: f64,
}

/// Off-diagonal ones mask of size `r × r`.
pub fn off_diagonal_mask(r: usize) -> Mat {
    Mat::from_shape_fn((r, r), |(i, j)| if i == j { 0.0 } else { 1.0 })
}

pub fn make_group_pca(b: &Mat, lambda: f64, rho: f64, r: usize) -> Result<GroupSparsePca> {
    check_finite(b, "B")?;
    let n = b.ncols();
    if r == 0 || r > n {
        return Err(ProblemError::DimensionMismatch(format!(
            "need 1 <= r <= n, got r = {r}, n = {n}"
        )));
    }
    for (name, v) in [("λ", lambda), ("ρ", rho)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ProblemError::InvalidParameter(format!(
                "{name} must be nonnegative, got {v}"
            )));
        }
    }
    let c = b.t().dot(b);
    let alpha00 = 0.5 * spectral_norm_estimate(&c);
    let reg = ProxRegularizer::product(vec![
        (ProxRegularizer::group_l21(lambda)?, (n, r)),
        (ProxRegularizer::l1(rho)?, (r, r)),
    ])?;
    Ok(GroupSparsePca {
        c,
        mask: off_diagonal_mask(r),
        r,
        reg,
        alpha00,
    })
}

impl GroupSparsePca {
    pub fn covariance(&self) -> &Mat {
        &self.c
    }

    /// `‖E∘(XᵀCX)‖₁`.
    pub fn infeasibility(&self, x: &Mat) -> f64 {
        let s = x.t().dot(&self.c.dot(x));
        (&s * &self.mask).iter().map(|v| v.abs()).sum()
    }
}

impl CompositeProblem for GroupSparsePca {
    fn name(&self) -> &'static str {
        "gpca"
    }

    fn manifold(&self) -> ManifoldKind {
        ManifoldKind::Stiefel {
            n: self.c.nrows(),
            r: self.r,
        }
    }

    fn regularizer(&self) -> &ProxRegularizer {
        &self.reg
    }

    fn z_shape(&self) -> ZShape {
        vec![(self.c.nrows(), self.r), (self.r, self.r)]
    }

    fn f_value(&self, x: &Mat) -> f64 {
        -inner(&self.c.dot(x), x)
    }

    fn f_grad(&self, x: &Mat) -> Mat {
        self.c.dot(x) * -2.0
    }

    fn map_value(&self, x: &Mat) -> ZPoint {
        let s = x.t().dot(&self.c.dot(x));
        ZPoint::new(vec![x.clone(), &s * &self.mask])
    }

    fn map_jvp(&self, x: &Mat, v: &Mat) -> ZPoint {
        let vtcx = v.t().dot(&self.c.dot(x));
        let d = &vtcx + &vtcx.t();
        ZPoint::new(vec![v.clone(), &d * &self.mask])
    }

    fn map_vjp(&self, x: &Mat, w: &ZPoint) -> Mat {
        let m = &w.blocks[1] * &self.mask;
        &w.blocks[0] + &self.c.dot(x).dot(&(&m + &m.t()))
    }

    fn default_alpha00(&self) -> f64 {
        self.alpha00
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_data_pca, validate_derivatives};

    #[test]
    fn value_at_canonical_point() {
        let b = Mat::from_shape_vec((2, 3), vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let p = make_group_pca(&b, 0.5, 0.2, 2).unwrap();
        let x = Mat::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.f_value(&x), -5.0);
        let z = p.map_value(&x);
        assert_eq!(z.blocks[0], x);
        assert_eq!(z.blocks[1], Mat::zeros((2, 2)));
        assert!((p.objective(&x) - (-5.0 + 0.5 * 2.0)).abs() < 1e-15);
        assert_eq!(p.infeasibility(&x), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let b = Mat::eye(3);
        assert!(make_group_pca(&b, -1.0, 0.0, 2).is_err());
        assert!(make_group_pca(&b, 1.0, f64::NAN, 2).is_err());
        assert!(matches!(
            make_group_pca(&b, 1.0, 1.0, 4),
            Err(ProblemError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rank_one_mask_is_zero() {
        let b = gen_data_pca(5, 4, 1).unwrap();
        let p = make_group_pca(&b, 0.4, 0.3, 1).unwrap();
        let x = p.manifold().random_point(3);
        let z = p.map_value(&x);
        assert_eq!(z.blocks[1], Mat::zeros((1, 1)));
        let l21: f64 = x.iter().map(|v| v.abs()).sum();
        assert!((p.objective(&x) - (p.f_value(&x) + 0.4 * l21)).abs() < 1e-14);
    }

    #[test]
    fn derivatives_validate() {
        let b = gen_data_pca(8, 6, 2).unwrap();
        let p = make_group_pca(&b, 0.3, 0.7, 3).unwrap();
        validate_derivatives(&p, 20, 5).unwrap();
    }
}
