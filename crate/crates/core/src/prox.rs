//! Convex regularizers with closed-form proximal maps.
//!
//! Each regularizer acts on a [`ZPoint`]. The atomic kinds act on a single
//! block; [`ProxRegularizer::Product`] assigns one atomic regularizer to each
//! block of a product space.

use ndarray::{Array1, Axis};
use thiserror::Error;

use crate::linalg::{frob_norm, Mat};
use crate::zpoint::ZPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("shape mismatch: regularizer expects {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<(usize, usize)>,
        got: Vec<(usize, usize)>,
    },
    #[error("prox parameter must be positive, got {0}")]
    NonpositiveGamma(f64),
    #[error("regularizer weight must be nonnegative and finite, got {0}")]
    InvalidWeight(f64),
    #[error("nested product regularizers are not supported")]
    NestedProduct,
}

pub type Result<T> = std::result::Result<T, ProxError>;

#[derive(Debug, Clone, PartialEq)]
pub enum ProxRegularizer {
    /// `λ‖Z‖₁`, entrywise.
    L1 { lambda: f64 },
    /// `λ Σᵢ ‖Z_{i·}‖`, the row group norm.
    GroupL21 { lambda: f64 },
    /// `λ‖Z‖_F`.
    FrobNorm { lambda: f64 },
    /// Separable sum over the blocks of a product space.
    Product(Vec<(ProxRegularizer, (usize, usize))>),
}

fn check_weight(lambda: f64) -> Result<f64> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(lambda)
    } else {
        Err(ProxError::InvalidWeight(lambda))
    }
}

impl ProxRegularizer {
    pub fn l1(lambda: f64) -> Result<Self> {
        Ok(Self::L1 {
            lambda: check_weight(lambda)?,
        })
    }

    pub fn group_l21(lambda: f64) -> Result<Self> {
        Ok(Self::GroupL21 {
            lambda: check_weight(lambda)?,
        })
    }

    pub fn frob(lambda: f64) -> Result<Self> {
        Ok(Self::FrobNorm {
            lambda: check_weight(lambda)?,
        })
    }

    pub fn product(parts: Vec<(ProxRegularizer, (usize, usize))>) -> Result<Self> {
        for (p, _) in &parts {
            if matches!(p, ProxRegularizer::Product(_)) {
                return Err(ProxError::NestedProduct);
            }
            p.validate()?;
        }
        Ok(Self::Product(parts))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::L1 { lambda } | Self::GroupL21 { lambda } | Self::FrobNorm { lambda } => {
                check_weight(*lambda).map(|_| ())
            }
            Self::Product(parts) => {
                for (p, _) in parts {
                    if matches!(p, ProxRegularizer::Product(_)) {
                        return Err(ProxError::NestedProduct);
                    }
                    p.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Pairs each block of `z` with the atomic regularizer acting on it.
    fn atoms<'a>(&'a self, z: &'a ZPoint) -> Result<Vec<(&'a ProxRegularizer, &'a Mat)>> {
        match self {
            Self::Product(parts) => {
                let expected: Vec<_> = parts.iter().map(|(_, s)| *s).collect();
                let got = z.shape();
                if expected != got {
                    return Err(ProxError::ShapeMismatch { expected, got });
                }
                Ok(parts.iter().map(|(p, _)| p).zip(z.blocks.iter()).collect())
            }
            atom => {
                if z.blocks.len() != 1 {
                    return Err(ProxError::ShapeMismatch {
                        expected: vec![z.blocks.first().map(|b| b.dim()).unwrap_or((0, 0))],
                        got: z.shape(),
                    });
                }
                Ok(vec![(atom, &z.blocks[0])])
            }
        }
    }

    pub fn eval(&self, z: &ZPoint) -> Result<f64> {
        Ok(self
            .atoms(z)?
            .into_iter()
            .map(|(atom, b)| atom_eval(atom, b))
            .sum())
    }

    /// `argmin_w { ϑ(w) + ‖w − z‖²/(2γ) }`.
    pub fn prox(&self, gamma: f64, z: &ZPoint) -> Result<ZPoint> {
        check_gamma(gamma)?;
        Ok(ZPoint::new(
            self.atoms(z)?
                .into_iter()
                .map(|(atom, b)| atom_prox(atom, gamma, b))
                .collect(),
        ))
    }

    /// Moreau envelope `e_{γϑ}(z) = ‖z − p‖²/(2γ) + ϑ(p)` with `p = prox(γ, z)`.
    pub fn moreau(&self, gamma: f64, z: &ZPoint) -> Result<f64> {
        let p = self.prox(gamma, z)?;
        let d = z.sub(&p);
        let dn = crate::linalg::InnerProductSpace::norm(&d);
        Ok(dn * dn / (2.0 * gamma) + self.eval(&p)?)
    }

    /// One element of the Clarke generalized Jacobian of `prox(γ, ·)` at `z`.
    ///
    /// At kinks (`|zᵢ| = γλ` or `‖block‖ = γλ`) the zero derivative is chosen.
    pub fn prox_jacobian_element(&self, gamma: f64, z: &ZPoint) -> Result<ProxJacobian> {
        check_gamma(gamma)?;
        Ok(ProxJacobian {
            blocks: self
                .atoms(z)?
                .into_iter()
                .map(|(atom, b)| atom_jacobian(atom, gamma, b))
                .collect(),
        })
    }

    /// Global Lipschitz constant of `ϑ` in the Frobenius norm, for a codomain
    /// with the given block shapes.
    pub fn lipschitz_bound(&self, shape: &[(usize, usize)]) -> f64 {
        match self {
            Self::L1 { lambda } => {
                let d: usize = shape.iter().map(|(r, c)| r * c).sum();
                lambda * (d as f64).sqrt()
            }
            Self::GroupL21 { lambda } => {
                let m: usize = shape.iter().map(|(r, _)| *r).sum();
                lambda * (m as f64).sqrt()
            }
            Self::FrobNorm { lambda } => *lambda,
            Self::Product(parts) => parts
                .iter()
                .map(|(p, s)| {
                    let l = p.lipschitz_bound(std::slice::from_ref(s));
                    l * l
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ProxError::NonpositiveGamma(gamma))
    }
}

fn atom_eval(atom: &ProxRegularizer, z: &Mat) -> f64 {
    match atom {
        ProxRegularizer::L1 { lambda } => lambda * z.iter().map(|v| v.abs()).sum::<f64>(),
        ProxRegularizer::GroupL21 { lambda } => {
            lambda
                * z.axis_iter(Axis(0))
                    .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .sum::<f64>()
        }
        ProxRegularizer::FrobNorm { lambda } => lambda * frob_norm(z),
        ProxRegularizer::Product(_) => unreachable!("products are flattened by atoms()"),
    }
}

fn atom_prox(atom: &ProxRegularizer, gamma: f64, z: &Mat) -> Mat {
    match atom {
        ProxRegularizer::L1 { lambda } => {
            let t = gamma * lambda;
            z.mapv(|v| v.signum() * (v.abs() - t).max(0.0))
        }
        ProxRegularizer::GroupL21 { lambda } => {
            let t = gamma * lambda;
            let mut out = z.clone();
            for mut row in out.axis_iter_mut(Axis(0)) {
                let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let factor = if nrm > t { 1.0 - t / nrm } else { 0.0 };
                row.mapv_inplace(|v| v * factor);
            }
            out
        }
        ProxRegularizer::FrobNorm { lambda } => {
            let t = gamma * lambda;
            let nrm = frob_norm(z);
            let factor = if nrm > t { 1.0 - t / nrm } else { 0.0 };
            z * factor
        }
        ProxRegularizer::Product(_) => unreachable!("products are flattened by atoms()"),
    }
}

/// `d ↦ shrink·d + rank1·u⟨u, d⟩` for a unit direction `u`; all zero when the
/// block is shrunk to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NormFactor {
    pub shrink: f64,
    pub rank1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockJacobian {
    /// Diagonal with 0/1 entries.
    Mask(Mat),
    /// One norm factor per row; `units` holds `b_i/‖b_i‖` row-wise.
    Rows {
        factors: Vec<NormFactor>,
        units: Mat,
    },
    /// Norm factor for the whole block.
    Whole { factor: NormFactor, unit: Mat },
}

/// A symmetric PSD linear operator on the codomain with spectrum in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxJacobian {
    pub blocks: Vec<BlockJacobian>,
}

impl ProxJacobian {
    pub fn apply(&self, d: &ZPoint) -> ZPoint {
        ZPoint::new(
            self.blocks
                .iter()
                .zip(d.blocks.iter())
                .map(|(jb, db)| match jb {
                    BlockJacobian::Mask(mask) => mask * db,
                    BlockJacobian::Rows { factors, units } => {
                        let mut out = db.clone();
                        for (i, f) in factors.iter().enumerate() {
                            let u = units.row(i);
                            let ud: f64 = u.iter().zip(db.row(i).iter()).map(|(a, b)| a * b).sum();
                            let mut row = out.row_mut(i);
                            row.mapv_inplace(|v| v * f.shrink);
                            row.scaled_add(f.rank1 * ud, &u);
                        }
                        out
                    }
                    BlockJacobian::Whole { factor, unit } => {
                        let ud = crate::linalg::inner(unit, db);
                        db * factor.shrink + unit * (factor.rank1 * ud)
                    }
                })
                .collect(),
        )
    }
}

fn norm_factor(nrm: f64, t: f64) -> NormFactor {
    if t == 0.0 {
        // prox is the identity
        NormFactor {
            shrink: 1.0,
            rank1: 0.0,
        }
    } else if nrm > t {
        NormFactor {
            shrink: 1.0 - t / nrm,
            rank1: t / nrm,
        }
    } else {
        NormFactor {
            shrink: 0.0,
            rank1: 0.0,
        }
    }
}

fn atom_jacobian(atom: &ProxRegularizer, gamma: f64, z: &Mat) -> BlockJacobian {
    match atom {
        ProxRegularizer::L1 { lambda } => {
            let t = gamma * lambda;
            BlockJacobian::Mask(z.mapv(|v| if t == 0.0 || v.abs() > t { 1.0 } else { 0.0 }))
        }
        ProxRegularizer::GroupL21 { lambda } => {
            let t = gamma * lambda;
            let mut units = z.clone();
            let mut factors = Vec::with_capacity(z.nrows());
            for mut row in units.axis_iter_mut(Axis(0)) {
                let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                factors.push(norm_factor(nrm, t));
                if nrm > 0.0 {
                    row.mapv_inplace(|v| v / nrm);
                }
            }
            BlockJacobian::Rows { factors, units }
        }
        ProxRegularizer::FrobNorm { lambda } => {
            let t = gamma * lambda;
            let nrm = frob_norm(z);
            let unit = if nrm > 0.0 { z / nrm } else { z.clone() };
            BlockJacobian::Whole {
                factor: norm_factor(nrm, t),
                unit,
            }
        }
        ProxRegularizer::Product(_) => unreachable!("products are flattened by atoms()"),
    }
}

/// Row norms of a matrix, shared by metrics and tests.
pub fn row_norms(z: &Mat) -> Array1<f64> {
    Array1::from_iter(
        z.axis_iter(Axis(0))
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, InnerProductSpace};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z1(m: Mat) -> ZPoint {
        ZPoint::single(m)
    }

    fn randz(shape: &[(usize, usize)], rng: &mut ChaCha8Rng, scale: f64) -> ZPoint {
        ZPoint::new(
            shape
                .iter()
                .map(|&d| crate::random::randn(d.0, d.1, rng) * scale)
                .collect::<Vec<Mat>>(),
        )
    }

    fn all_regs() -> Vec<(ProxRegularizer, Vec<(usize, usize)>)> {
        vec![
            (ProxRegularizer::l1(0.7).unwrap(), vec![(3, 2)]),
            (ProxRegularizer::group_l21(0.9).unwrap(), vec![(4, 3)]),
            (ProxRegularizer::frob(1.3).unwrap(), vec![(2, 3)]),
            (
                ProxRegularizer::product(vec![
                    (ProxRegularizer::group_l21(0.5).unwrap(), (4, 2)),
                    (ProxRegularizer::l1(0.3).unwrap(), (2, 2)),
                ])
                .unwrap(),
                vec![(4, 2), (2, 2)],
            ),
        ]
    }

    #[test]
    fn eval_examples() {
        let l1 = ProxRegularizer::l1(2.0).unwrap();
        assert_eq!(l1.eval(&z1(array![[1.0, -3.0]])).unwrap(), 8.0);
        let g = ProxRegularizer::group_l21(1.0).unwrap();
        assert_eq!(g.eval(&z1(array![[3.0, 4.0], [0.0, 0.0]])).unwrap(), 5.0);
        let f = ProxRegularizer::frob(1.0).unwrap();
        assert_eq!(f.eval(&z1(Mat::zeros((2, 2)))).unwrap(), 0.0);
    }

    #[test]
    fn prox_examples() {
        let l1 = ProxRegularizer::l1(1.0).unwrap();
        let p = l1.prox(1.0, &z1(array![[3.0, -0.5, 1.0]])).unwrap();
        assert_eq!(p.blocks[0], array![[2.0, 0.0, 0.0]]);

        let f = ProxRegularizer::frob(1.0).unwrap();
        let z = array![[3.0, 0.0], [0.0, 4.0]];
        let p = f.prox(2.0, &z1(z.clone())).unwrap();
        assert!(crate::linalg::frob_norm(&(&p.blocks[0] - &(&z * 0.6))) < 1e-15);

        let g = ProxRegularizer::group_l21(2.0).unwrap();
        let p = g.prox(1.0, &z1(array![[3.0, 4.0], [0.3, 0.4]])).unwrap();
        // factor 1 − γλ/‖row‖ = 3/5 on the first row, second row zeroed
        let expected = array![[1.8, 2.4], [0.0, 0.0]];
        assert!(crate::linalg::frob_norm(&(&p.blocks[0] - &expected)) < 1e-14);
    }

    #[test]
    fn errors() {
        let l1 = ProxRegularizer::l1(1.0).unwrap();
        assert!(matches!(
            l1.prox(0.0, &z1(Mat::zeros((1, 1)))),
            Err(ProxError::NonpositiveGamma(_))
        ));
        assert!(matches!(
            ProxRegularizer::l1(-1.0),
            Err(ProxError::InvalidWeight(_))
        ));
        let prod = ProxRegularizer::product(vec![(l1.clone(), (2, 2))]).unwrap();
        assert!(matches!(
            prod.eval(&z1(Mat::zeros((3, 2)))),
            Err(ProxError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ProxRegularizer::product(vec![(prod, (2, 2))]),
            Err(ProxError::NestedProduct)
        ));
    }

    #[test]
    fn moreau_examples() {
        let l1 = ProxRegularizer::l1(1.0).unwrap();
        assert!((l1.moreau(1.0, &z1(array![[3.0]])).unwrap() - 2.5).abs() < 1e-15);
        for (reg, shape) in all_regs() {
            assert_eq!(reg.moreau(0.7, &ZPoint::zeros(&shape)).unwrap(), 0.0);
        }
    }

    #[test]
    fn moreau_is_the_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (reg, shape) in all_regs() {
            for _ in 0..5 {
                let gamma = rng.random_range(0.1..2.0);
                let z = randz(&shape, &mut rng, 2.0);
                let e = reg.moreau(gamma, &z).unwrap();
                assert!(e <= reg.eval(&z).unwrap() + 1e-12);
                for _ in 0..50 {
                    let w = randz(&shape, &mut rng, 2.0);
                    let d = z.sub(&w).norm();
                    assert!(e <= d * d / (2.0 * gamma) + reg.eval(&w).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn prox_satisfies_subgradient_inequality() {
        // (z − p)/γ ∈ ∂ϑ(p)  ⇔  ϑ(w) ≥ ϑ(p) + ⟨(z − p)/γ, w − p⟩ for all w
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (reg, shape) in all_regs() {
            let gamma = 0.8;
            let z = randz(&shape, &mut rng, 1.5);
            let p = reg.prox(gamma, &z).unwrap();
            let g = z.sub(&p).scaled(1.0 / gamma);
            let vp = reg.eval(&p).unwrap();
            for _ in 0..100 {
                let w = randz(&shape, &mut rng, 2.0);
                assert!(reg.eval(&w).unwrap() >= vp + g.inner(&w.sub(&p)) - 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let l1 = ProxRegularizer::l1(1.0).unwrap();
        let j = l1
            .prox_jacobian_element(1.0, &z1(array![[3.0, 0.5]]))
            .unwrap();
        assert_eq!(j.blocks[0], BlockJacobian::Mask(array![[1.0, 0.0]]));
        let j = l1.prox_jacobian_element(1.0, &z1(array![[1.0]])).unwrap();
        assert_eq!(j.blocks[0], BlockJacobian::Mask(array![[0.0]]));
        let zero = ProxRegularizer::l1(0.0).unwrap();
        let j = zero.prox_jacobian_element(1.0, &z1(array![[0.0]])).unwrap();
        assert_eq!(j.blocks[0], BlockJacobian::Mask(array![[1.0]]));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // Frobenius block with ‖z‖ = 2γλ
        let f = ProxRegularizer::frob(0.5).unwrap();
        let gamma = 1.5;
        let mut z = randz(&[(3, 2)], &mut rng, 1.0);
        let n = z.norm();
        z.scale(2.0 * gamma * 0.5 / n);
        let mut cases = vec![(f, z)];
        for (reg, shape) in all_regs() {
            cases.push((reg, randz(&shape, &mut rng, 1.5)));
        }
        for (reg, z) in cases {
            let j = reg.prox_jacobian_element(gamma, &z).unwrap();
            for _ in 0..10 {
                let d = randz(&z.shape(), &mut rng, 1.0);
                let h = 1e-6;
                let fd = reg
                    .prox(gamma, &z.plus_scaled(h, &d))
                    .unwrap()
                    .sub(&reg.prox(gamma, &z.plus_scaled(-h, &d)).unwrap())
                    .scaled(1.0 / (2.0 * h));
                let jd = j.apply(&d);
                assert!(fd.sub(&jd).norm() <= 1e-6 * jd.norm().max(1.0));
            }
        }
    }

    #[test]
    fn jacobian_spectrum_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (reg, shape) in all_regs() {
            let z = randz(&shape, &mut rng, 1.0);
            let j = reg.prox_jacobian_element(0.6, &z).unwrap();
            let dim: usize = shape.iter().map(|(r, c)| r * c).sum();
            let mut dense = Mat::zeros((dim, dim));
            for col in 0..dim {
                let mut e = ZPoint::zeros(&shape);
                let mut k = col;
                for b in &mut e.blocks {
                    if k < b.len() {
                        let c = b.ncols();
                        b[[k / c, k % c]] = 1.0;
                        break;
                    }
                    k -= b.len();
                }
                let je = j.apply(&e);
                let flat: Vec<f64> = je.blocks.iter().flat_map(|b| b.iter().cloned()).collect();
                for (row, v) in flat.into_iter().enumerate() {
                    dense[[row, col]] = v;
                }
            }
            let eig = sym_eig(&dense).unwrap();
            assert!(eig
                .eigenvalues
                .iter()
                .all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
        }
    }

    #[test]
    fn moreau_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (reg, shape) in all_regs() {
            let gamma = 0.9;
            let z = randz(&shape, &mut rng, 1.5);
            let grad = z.sub(&reg.prox(gamma, &z).unwrap()).scaled(1.0 / gamma);
            let d = randz(&shape, &mut rng, 1.0);
            let h = 1e-5;
            let fd = (reg.moreau(gamma, &z.plus_scaled(h, &d)).unwrap()
                - reg.moreau(gamma, &z.plus_scaled(-h, &d)).unwrap())
                / (2.0 * h);
            let an = grad.inner(&d);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
        }
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(
            ProxRegularizer::l1(2.0).unwrap().lipschitz_bound(&[(3, 3)]),
            6.0
        );
        assert_eq!(
            ProxRegularizer::frob(3.0)
                .unwrap()
                .lipschitz_bound(&[(5, 2)]),
            3.0
        );
        assert_eq!(
            ProxRegularizer::group_l21(1.0)
                .unwrap()
                .lipschitz_bound(&[(4, 7)]),
            2.0
        );
        let prod = ProxRegularizer::product(vec![
            (ProxRegularizer::frob(3.0).unwrap(), (2, 2)),
            (ProxRegularizer::l1(1.0).unwrap(), (4, 4)),
        ])
        .unwrap();
        assert!((prod.lipschitz_bound(&[(2, 2), (4, 4)]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for (reg, shape) in all_regs() {
            let l = reg.lipschitz_bound(&shape);
            for _ in 0..50 {
                let a = randz(&shape, &mut rng, 2.0);
                let b = randz(&shape, &mut rng, 2.0);
                let diff = (reg.eval(&a).unwrap() - reg.eval(&b).unwrap()).abs();
                assert!(diff <= l * a.sub(&b).norm() + 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn prox_is_nonexpansive(seed in any::<u64>(), gamma in 0.01f64..5.0, which in 0usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (reg, shape) = all_regs().swap_remove(which);
                let a = randz(&shape, &mut rng, 2.0);
                let b = randz(&shape, &mut rng, 2.0);
                let pa = reg.prox(gamma, &a).unwrap();
                let pb = reg.prox(gamma, &b).unwrap();
                prop_assert!(pa.sub(&pb).norm() <= a.sub(&b).norm() * (1.0 + 1e-12));
            }
        }
    }
}
