use super::{check_finite, CompositeProblem, ProblemError, Result};
use crate::linalg::Mat;
use crate::manifold::{j_left, j_right, ManifoldKind};
use crate::prox::ProxRegularizer;
use crate::zpoint::{ZPoint, ZShape};

const PSD_ALPHA00: f64 = 1e-5;

/// Sparse proper symplectic decomposition of a `2n × 2m` snapshot matrix.
///
/// Minimizes `‖XX⁺A − A‖_F + λ‖X‖₁` over `Sp(2r, 2n)` with the symplectic
/// inverse `X⁺ = J₂ᵣᵀXᵀJ₂ₙ`. There is no smooth part.
#[derive(Debug, Clone)]
pub struct SymplecticDecomposition {
    a: Mat,
    n: usize,
    r: usize,
    reg: ProxRegularizer,
}

/// `X⁺ = J₂ᵣᵀXᵀJ₂ₙ`.
pub fn symplectic_inverse(x: &Mat) -> Mat {
    -j_left(&j_right(&x.t().to_owned()))
}

pub fn make_psd(a: Mat, lambda: f64, r: usize) -> Result<SymplecticDecomposition> {
    check_finite(&a, "A")?;
    let (rows, cols) = a.dim();
    if rows == 0 || rows % 2 != 0 || cols == 0 || cols % 2 != 0 {
        return Err(ProblemError::DimensionMismatch(format!(
            "A must be 2n x 2m, got {rows}x{cols}"
        )));
    }
    let n = rows / 2;
    if r == 0 || r > n {
        return Err(ProblemError::DimensionMismatch(format!(
            "need 1 <= r <= n, got r = {r}, n = {n}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ProblemError::InvalidParameter(format!(
            "λ must be nonnegative, got {lambda}"
        )));
    }
    let reg = ProxRegularizer::product(vec![
        (ProxRegularizer::frob(1.0)?, (rows, cols)),
        (ProxRegularizer::l1(lambda)?, (rows, 2 * r)),
    ])?;
    Ok(SymplecticDecomposition { a, n, r, reg })
}

impl SymplecticDecomposition {
    pub fn snapshots(&self) -> &Mat {
        &self.a
    }

    /// `‖XX⁺A − A‖_F`.
    pub fn reconstruction_error(&self, x: &Mat) -> f64 {
        crate::linalg::frob_norm(&self.map_value(x).blocks[0])
    }
}

impl CompositeProblem for SymplecticDecomposition {
    fn name(&self) -> &'static str {
        "psd"
    }

    fn manifold(&self) -> ManifoldKind {
        ManifoldKind::SymplecticStiefel {
            n: self.n,
            r: self.r,
        }
    }

    fn regularizer(&self) -> &ProxRegularizer {
        &self.reg
    }

    fn z_shape(&self) -> ZShape {
        vec![self.a.dim(), (2 * self.n, 2 * self.r)]
    }

    fn f_value(&self, _x: &Mat) -> f64 {
        0.0
    }

    fn f_grad(&self, x: &Mat) -> Mat {
        Mat::zeros(x.dim())
    }

    fn map_value(&self, x: &Mat) -> ZPoint {
        let xpa = symplectic_inverse(x).dot(&self.a);
        ZPoint::new(vec![x.dot(&xpa) - &self.a, x.clone()])
    }

    fn map_jvp(&self, x: &Mat, v: &Mat) -> ZPoint {
        let xpa = symplectic_inverse(x).dot(&self.a);
        let vpa = symplectic_inverse(v).dot(&self.a);
        ZPoint::new(vec![v.dot(&xpa) + x.dot(&vpa), v.clone()])
    }

    fn map_vjp(&self, x: &Mat, w: &ZPoint) -> Mat {
        // ⟨W, XV⁺A⟩ = ⟨J₂ₙ(AWᵀX)J₂ᵣᵀ, V⟩
        let w1 = &w.blocks[0];
        let xpa = symplectic_inverse(x).dot(&self.a);
        let awx = self.a.dot(&w1.t()).dot(x);
        w1.dot(&xpa.t()) - j_right(&j_left(&awx)) + &w.blocks[1]
    }

    fn default_alpha00(&self) -> f64 {
        PSD_ALPHA00
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::j_matrix;
    use crate::problem::{gen_data_psd_type1, validate_derivatives};

    #[test]
    fn identity_example() {
        let a = gen_data_psd_type1(3, 2, 7);
        let p = make_psd(a, 0.25, 2).unwrap();
        let x = Mat::eye(4);
        assert_eq!(symplectic_inverse(&x), Mat::eye(4));
        let z = p.map_value(&x);
        assert!(z.blocks[0].iter().all(|v| v.abs() < 1e-15));
        assert!((p.objective(&x) - 4.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn symplectic_inverse_is_left_inverse() {
        let m = ManifoldKind::SymplecticStiefel { n: 3, r: 2 };
        for seed in 0..5 {
            let x = m.random_point(seed);
            let err = &symplectic_inverse(&x).dot(&x) - &Mat::eye(4);
            assert!(crate::linalg::frob_norm(&err) < 1e-10);
        }
        let j = j_matrix(2);
        assert_eq!(symplectic_inverse(&j), j.t().dot(&j.t()).dot(&j));
    }

    #[test]
    fn zero_weight_is_reconstruction_error() {
        let a = gen_data_psd_type1(4, 3, 1);
        let p = make_psd(a, 0.0, 1).unwrap();
        let x = p.manifold().random_point(2);
        assert_eq!(p.objective(&x), p.reconstruction_error(&x));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            make_psd(Mat::zeros((3, 2)), 0.1, 1),
            Err(ProblemError::DimensionMismatch(_))
        ));
        assert!(matches!(
            make_psd(Mat::zeros((4, 2)), 0.1, 3),
            Err(ProblemError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn derivatives_validate() {
        let a = gen_data_psd_type1(3, 2, 11);
        let p = make_psd(a, 0.1, 2).unwrap();
        validate_derivatives(&p, 20, 9).unwrap();
    }

    #[test]
    fn derivatives_validate_rectangular() {
        let a = gen_data_psd_type1(5, 4, 12);
        let p = make_psd(a, 0.1, 2).unwrap();
        validate_derivatives(&p, 20, 3).unwrap();
    }
}
