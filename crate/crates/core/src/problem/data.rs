use super::{ProblemError, Result};
use crate::linalg::{frob_norm, Mat};
use crate::random::{randn, rng};
use rand::Rng;

/// Gaussian data matrix with centered, unit-norm columns.
pub fn gen_data_pca(m: usize, n: usize, seed: u64) -> Result<Mat> {
    let mut b = randn(m, n, &mut rng(seed));
    for (j, mut col) in b.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / m as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        if !(norm > 1e-12) {
            return Err(ProblemError::DegenerateColumn { column: j });
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(b)
}

/// Gaussian `2n × 2m` snapshot matrix with unit Frobenius norm.
pub fn gen_data_psd_type1(m: usize, n: usize, seed: u64) -> Mat {
    let a = randn(2 * n, 2 * m, &mut rng(seed));
    let s = frob_norm(&a);
    a / s
}

/// A clustering instance: normalized graph Laplacian plus ground truth.
#[derive(Debug, Clone)]
pub struct SscData {
    pub laplacian: Mat,
    pub labels: Vec<usize>,
}

/// Points from `k` Gaussian blobs in the plane, a Gaussian similarity graph,
/// and its normalized Laplacian `I − D^{-1/2}WD^{-1/2}`.
pub fn gen_data_ssc(n: usize, k: usize, seed: u64) -> Result<SscData> {
    if k == 0 || k > n {
        return Err(ProblemError::InvalidParameter(format!(
            "need 1 <= clusters <= n, got {k} clusters for {n} points"
        )));
    }
    let mut g = rng(seed);
    let noise = randn(n, 2, &mut g);
    let radius = 3.0;
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        labels.swap(i, g.random_range(0..=i));
    }
    let mut pts = Mat::zeros((n, 2));
    for (i, &c) in labels.iter().enumerate() {
        let t = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
        pts[[i, 0]] = radius * t.cos() + noise[[i, 0]];
        pts[[i, 1]] = radius * t.sin() + noise[[i, 1]];
    }
    let mut w = Mat::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let dx = pts[[i, 0]] - pts[[j, 0]];
            let dy = pts[[i, 1]] - pts[[j, 1]];
            let s = (-(dx * dx + dy * dy) / 2.0).exp();
            w[[i, j]] = s;
            w[[j, i]] = s;
        }
    }
    let dinv: Vec<f64> = w
        .rows()
        .into_iter()
        .map(|r| 1.0 / r.sum().max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let laplacian = Mat::from_shape_fn((n, n), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        let (lo, hi) = (i.min(j), i.max(j));
        id - dinv[lo] * w[[i, j]] * dinv[hi]
    });
    Ok(SscData { laplacian, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_columns_are_standardized() {
        for (m, n, seed) in [(20, 100, 1), (2, 3, 9), (7, 1, 4)] {
            let b = gen_data_pca(m, n, seed).unwrap();
            for col in b.columns() {
                assert!((col.sum() / m as f64).abs() <= 1e-12);
                assert!((col.dot(&col).sqrt() - 1.0).abs() <= 1e-12);
            }
            assert_eq!(b, gen_data_pca(m, n, seed).unwrap());
        }
    }

    #[test]
    fn pca_single_row_is_degenerate() {
        assert!(matches!(
            gen_data_pca(1, 4, 0),
            Err(ProblemError::DegenerateColumn { column: 0 })
        ));
    }

    #[test]
    fn psd_data_is_normalized() {
        let a = gen_data_psd_type1(5, 3, 2);
        assert_eq!(a.dim(), (6, 10));
        assert!((frob_norm(&a) - 1.0).abs() <= 1e-12);
        assert_eq!(a, gen_data_psd_type1(5, 3, 2));
        assert_ne!(a, gen_data_psd_type1(5, 3, 3));
    }

    #[test]
    fn ssc_laplacian_is_normalized() {
        let d = gen_data_ssc(30, 3, 5).unwrap();
        let a = &d.laplacian;
        assert_eq!(a, &a.t());
        for c in 0..3 {
            assert_eq!(d.labels.iter().filter(|&&l| l == c).count(), 10);
        }
        let eig = crate::linalg::sym_eig(a).unwrap();
        assert!(eig.eigenvalues[0].abs() < 1e-10);
        assert!(eig
            .eigenvalues
            .iter()
            .all(|&v| v > -1e-10 && v < 2.0 + 1e-10));
    }
}
