//! Clustering and sparsity metrics.

use std::collections::HashMap;

use rand::Rng as _;
use rivmpl::linalg::Mat;
use rivmpl::random::rng;
use thiserror::Error;

/// Relative threshold below which an entry or row counts as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-4;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {k} distinct points, found {distinct}")]
    DegenerateInput { k: usize, distinct: usize },
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    InvalidParameter(String),
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct(points: &Mat) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// k-means with k-means++ seeding and Lloyd iterations; the best of
/// `restarts` runs by within-cluster sum of squares.
pub fn kmeans(
    points: &Mat,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>, MetricsError> {
    let n = points.nrows();
    if k == 0 || restarts == 0 {
        return Err(MetricsError::InvalidParameter(
            "k and restarts must be positive".into(),
        ));
    }
    if k > n {
        return Err(MetricsError::InvalidParameter(format!(
            "k = {k} exceeds {n} points"
        )));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(MetricsError::DegenerateInput { k, distinct });
    }
    let mut g = rng(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let (labels, inertia) = lloyd(points, k, &mut g);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    Ok(best.unwrap().1)
}

fn seed_centers(points: &Mat, k: usize, g: &mut rivmpl::random::Rng) -> Mat {
    let n = points.nrows();
    let mut centers = Mat::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(g.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = g.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            g.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

fn lloyd(points: &Mat, k: usize, g: &mut rivmpl::random::Rng) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let mut centers = seed_centers(points, k, g);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(points.row(i), centers.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Mat::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &points.row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers
                    .row_mut(c)
                    .assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // empty cluster: move it to the worst-served point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centers.row(labels[a]));
                        let db = sq_dist(points.row(b), centers.row(labels[b]));
                        da.total_cmp(&db)
                    })
                    .unwrap();
                centers.row_mut(c).assign(&points.row(far));
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centers.row(labels[i])))
        .sum();
    (labels, inertia)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    let mut counts: Vec<usize> = counts.collect();
    counts.sort_unstable();
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
/// Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::InvalidParameter("empty labelings".into()));
    }
    let n = a.len() as f64;
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cb: HashMap<usize, usize> = HashMap::new();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    // sorted so the sum does not depend on hash order, keeping nmi(a, b) = nmi(b, a)
    let mut terms: Vec<(usize, usize, usize)> = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let (p, q) = (ca[&x], cb[&y]);
            (c, p.min(q), p.max(q))
        })
        .collect();
    terms.sort_unstable();
    let mi: f64 = terms
        .iter()
        .map(|&(c, p, q)| {
            let c = c as f64;
            c / n * (c * n / (p as f64 * q as f64)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn fraction_small(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let small = values
        .iter()
        .filter(|v| v.abs() <= SPARSITY_THRESHOLD * max)
        .count();
    small as f64 / values.len() as f64
}

/// Fraction of entries of `Z = XXᵀ` at most `1e-4·‖Z‖_∞`; 1 for `Z = 0`.
pub fn sparsity_z(x: &Mat) -> f64 {
    let z = x.dot(&x.t());
    fraction_small(&z.iter().copied().collect::<Vec<_>>())
}

/// Fraction of rows of `X` with norm at most `1e-4·maxᵢ‖Xᵢ‖`; 1 for `X = 0`.
pub fn row_sparsity(x: &Mat) -> f64 {
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    fraction_small(&norms)
}

/// Entrywise ℓ1 norm of `E ∘ (XᵀCX)`.
pub fn infeasibility(x: &Mat, c: &Mat, mask: &Mat) -> f64 {
    let s = x.t().dot(&c.dot(x));
    s.iter().zip(mask.iter()).map(|(v, e)| (v * e).abs()).sum()
}
