//! Points of the codomain space of the inner map `F`.
//!
//! Some problems map into a product of matrix spaces, so a [`ZPoint`] is an
//! ordered list of matrix blocks with a fixed shape per problem.

use crate::linalg::{frob_norm, inner, InnerProductSpace, Mat};

/// Block shapes `(rows, cols)` of a codomain.
pub type ZShape = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ZPoint {
    pub blocks: Vec<Mat>,
}

impl ZPoint {
    pub fn new(blocks: Vec<Mat>) -> Self {
        Self { blocks }
    }

    pub fn single(block: Mat) -> Self {
        Self {
            blocks: vec![block],
        }
    }

    pub fn zeros(shape: &[(usize, usize)]) -> Self {
        Self {
            blocks: shape.iter().map(|&d| Mat::zeros(d)).collect(),
        }
    }

    pub fn shape(&self) -> ZShape {
        self.blocks.iter().map(|b| b.dim()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&self, other: &ZPoint) -> ZPoint {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ZPoint) -> ZPoint {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, a: f64) -> ZPoint {
        ZPoint::new(self.blocks.iter().map(|b| b * a).collect())
    }

    /// `self + a * x` as a new point.
    pub fn plus_scaled(&self, a: f64, x: &ZPoint) -> ZPoint {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn zip_with(&self, other: &ZPoint, f: impl Fn(&Mat, &Mat) -> Mat) -> ZPoint {
        debug_assert_eq!(self.shape(), other.shape());
        ZPoint::new(
            self.blocks
                .iter()
                .zip(other.blocks.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        )
    }
}

impl InnerProductSpace for ZPoint {
    fn inner(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(other.blocks.iter())
            .map(|(a, b)| inner(a, b))
            .sum()
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (b, xb) in self.blocks.iter_mut().zip(x.blocks.iter()) {
            b.scaled_add(a, xb);
        }
    }

    fn scale(&mut self, a: f64) {
        for b in &mut self.blocks {
            b.mapv_inplace(|v| v * a);
        }
    }

    fn zeros_like(&self) -> Self {
        ZPoint::zeros(&self.shape())
    }

    fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let n = frob_norm(b);
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }
}
