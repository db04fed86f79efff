//! Brute-force primal solver for tiny model subproblems.
//!
//! Works in explicit coordinates: an orthonormal tangent basis from the null
//! space of the linearized constraints, the Jacobian as a dense matrix, and
//! the regularizer written as a weighted sum of Euclidean norms over index
//! groups. The nonsmooth terms are replaced by their Moreau envelopes with a
//! parameter driven to zero, and each smoothed problem is solved by damped
//! Newton from the previous solution.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rivmpl::linalg::Mat;
use rivmpl::manifold::{j_left, ManifoldKind};
use rivmpl::problem::CompositeProblem;
use rivmpl::prox::ProxRegularizer;
use rivmpl::zpoint::ZPoint;

/// A weighted norm `λ‖w_g‖` over flat codomain indices.
#[derive(Debug, Clone)]
pub struct Group {
    pub lambda: f64,
    pub idx: Vec<usize>,
}

pub fn groups_of(reg: &ProxRegularizer, shape: &[(usize, usize)]) -> Vec<Group> {
    let parts: Vec<(ProxRegularizer, (usize, usize))> = match reg {
        ProxRegularizer::Product(parts) => parts.clone(),
        other => vec![(other.clone(), shape[0])],
    };
    let mut out = Vec::new();
    let mut offset = 0;
    for (r, (rows, cols)) in parts {
        match r {
            ProxRegularizer::L1 { lambda } => {
                for i in 0..rows * cols {
                    out.push(Group {
                        lambda,
                        idx: vec![offset + i],
                    });
                }
            }
            ProxRegularizer::GroupL21 { lambda } => {
                for i in 0..rows {
                    out.push(Group {
                        lambda,
                        idx: (0..cols).map(|j| offset + i * cols + j).collect(),
                    });
                }
            }
            ProxRegularizer::FrobNorm { lambda } => out.push(Group {
                lambda,
                idx: (offset..offset + rows * cols).collect(),
            }),
            ProxRegularizer::Product(_) => panic!("nested product"),
        }
        offset += rows * cols;
    }
    out
}

pub fn flatten(z: &ZPoint) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.blocks.iter().flat_map(|b| b.iter().copied()))
}

fn flatten_mat(m: &Mat) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

fn unflatten_mat(v: &DVector<f64>, dim: (usize, usize)) -> Mat {
    Mat::from_shape_vec(dim, v.iter().copied().collect()).unwrap()
}

pub fn theta_groups(groups: &[Group], w: &DVector<f64>) -> f64 {
    groups
        .iter()
        .map(|g| g.lambda * g.idx.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt())
        .sum()
}

/// Moreau envelope of the group norm sum with parameter `mu`, its gradient
/// and Hessian.
fn smoothed(groups: &[Group], w: &DVector<f64>, mu: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = w.len();
    let mut val = 0.0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for g in groups {
        let nrm = g.idx.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
        let thr = mu * g.lambda;
        if nrm <= thr {
            val += nrm * nrm / (2.0 * mu);
            for &i in &g.idx {
                grad[i] += w[i] / mu;
                hess[(i, i)] += 1.0 / mu;
            }
        } else {
            val += g.lambda * nrm - 0.5 * mu * g.lambda * g.lambda;
            let c = g.lambda / nrm;
            for &i in &g.idx {
                grad[i] += c * w[i];
                for &j in &g.idx {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    hess[(i, j)] += c * (eye - w[i] * w[j] / (nrm * nrm));
                }
            }
        }
    }
    (val, grad, hess)
}

/// Orthonormal basis (columns, ambient row-major coordinates) of the tangent
/// space at `x`, from the null space of the linearized constraint map.
pub fn tangent_basis(kind: ManifoldKind, x: &Mat) -> DMatrix<f64> {
    let dim = x.dim();
    let n = x.len();
    let constraint = |v: &Mat| -> Vec<f64> {
        match kind {
            ManifoldKind::Stiefel { .. } => {
                let a = x.t().dot(v);
                (&a + &a.t()).iter().copied().collect()
            }
            ManifoldKind::SymplecticStiefel { .. } => {
                let a = v.t().dot(&j_left(x));
                (&a - &a.t()).iter().copied().collect()
            }
            ManifoldKind::Sphere { .. } => vec![x.iter().zip(v.iter()).map(|(a, b)| a * b).sum()],
        }
    };
    let rows = constraint(&Mat::zeros(dim)).len();
    let mut a = DMatrix::zeros(rows, n);
    for j in 0..n {
        let mut e = Mat::zeros(dim);
        e[[j / dim.1, j % dim.1]] = 1.0;
        for (i, c) in constraint(&e).into_iter().enumerate() {
            a[(i, j)] = c;
        }
    }
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// The subproblem in tangent coordinates `v = Bc`.
pub struct Coords {
    pub basis: DMatrix<f64>,
    pub jac: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub fx: f64,
    pub map_x: DVector<f64>,
    pub groups: Vec<Group>,
    pub alpha: f64,
    pub beta: f64,
    pub dim: (usize, usize),
}

impl Coords {
    pub fn new<P: CompositeProblem + ?Sized>(p: &P, x: &Mat, alpha: f64, beta: f64) -> Self {
        let basis = tangent_basis(p.manifold(), x);
        let dim = x.dim();
        let d = basis.ncols();
        let map_x = flatten(&p.map_value(x));
        let mut jac = DMatrix::zeros(map_x.len(), d);
        for k in 0..d {
            let v = unflatten_mat(&basis.column(k).into_owned(), dim);
            jac.set_column(k, &flatten(&p.map_jvp(x, &v)));
        }
        let grad = basis.transpose() * flatten_mat(&p.f_grad(x));
        Self {
            basis,
            jac,
            grad,
            fx: p.f_value(x),
            map_x,
            groups: groups_of(p.regularizer(), &p.z_shape()),
            alpha,
            beta,
            dim,
        }
    }

    pub fn value(&self, c: &DVector<f64>) -> f64 {
        let jc = &self.jac * c;
        self.fx
            + self.grad.dot(c)
            + 0.5 * self.alpha * c.dot(c)
            + 0.5 * self.beta * jc.dot(&jc)
            + theta_groups(&self.groups, &(&self.map_x + &jc))
    }

    fn smooth(&self, c: &DVector<f64>, mu: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let jc = &self.jac * c;
        let (e, ge, he) = smoothed(&self.groups, &(&self.map_x + &jc), mu);
        let val =
            self.grad.dot(c) + 0.5 * self.alpha * c.dot(c) + 0.5 * self.beta * jc.dot(&jc) + e;
        let jt = self.jac.transpose();
        let grad = &self.grad + c * self.alpha + &jt * (&jc * self.beta + ge);
        let d = c.len();
        let hess =
            DMatrix::identity(d, d) * self.alpha + &jt * (&self.jac * self.beta + he * &self.jac);
        (val, grad, hess)
    }

    pub fn to_ambient(&self, c: &DVector<f64>) -> Mat {
        unflatten_mat(&(&self.basis * c), self.dim)
    }

    pub fn to_coords(&self, v: &Mat) -> DVector<f64> {
        self.basis.transpose() * flatten_mat(v)
    }

    /// Smoothing homotopy with damped Newton. Returns the best point found
    /// by true objective value.
    pub fn solve(&self) -> (DVector<f64>, f64) {
        let d = self.basis.ncols();
        let mut c = DVector::zeros(d);
        let mut best = (c.clone(), self.value(&c));
        let mut mu = 1e-2;
        while mu >= 1e-13 {
            for _ in 0..200 {
                let (val, g, h) = self.smooth(&c, mu);
                let step = match h.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => -&g,
                };
                let slope = g.dot(&step);
                if !(slope < 0.0) || g.norm() <= 1e-15 {
                    break;
                }
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..80 {
                    let cand = &c + &step * t;
                    if self.smooth(&cand, mu).0 <= val + 1e-4 * t * slope {
                        c = cand;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !moved {
                    break;
                }
                let v = self.value(&c);
                if v < best.1 {
                    best = (c.clone(), v);
                }
            }
            mu *= 0.1;
        }
        best
    }
}

/// `f(x) = ⟨c, x⟩`, `F(x) = Bx − b` on the unit sphere of column vectors.
pub struct AffineSphere {
    pub n: usize,
    pub c: Mat,
    pub b_mat: Mat,
    pub b: Mat,
    pub reg: ProxRegularizer,
}

impl CompositeProblem for AffineSphere {
    fn name(&self) -> &'static str {
        "affine"
    }
    fn manifold(&self) -> ManifoldKind {
        ManifoldKind::Sphere { n: self.n }
    }
    fn regularizer(&self) -> &ProxRegularizer {
        &self.reg
    }
    fn z_shape(&self) -> Vec<(usize, usize)> {
        vec![self.b.dim()]
    }
    fn f_value(&self, x: &Mat) -> f64 {
        rivmpl::linalg::inner(&self.c, x)
    }
    fn f_grad(&self, _x: &Mat) -> Mat {
        self.c.clone()
    }
    fn map_value(&self, x: &Mat) -> ZPoint {
        ZPoint::single(self.b_mat.dot(x) - &self.b)
    }
    fn map_jvp(&self, _x: &Mat, v: &Mat) -> ZPoint {
        ZPoint::single(self.b_mat.dot(v))
    }
    fn map_vjp(&self, _x: &Mat, w: &ZPoint) -> Mat {
        self.b_mat.t().dot(&w.blocks[0])
    }
}

/// A tiny random subproblem: problem, feasible point and metric weights.
pub struct TinySpec {
    pub problem: Box<dyn CompositeProblem>,
    pub x: Mat,
    pub alpha: f64,
    pub beta: f64,
}

/// `count` random subproblems with ambient dimension at most 10, cycling
/// through an affine sphere problem, two clustering shapes, group PCA and
/// symplectic decomposition.
pub fn tiny_specs(count: usize, seed: u64) -> Vec<TinySpec> {
    use rand::Rng;
    use rivmpl::problem::{gen_data_pca, gen_data_psd_type1, make_group_pca, make_psd, make_ssc};
    use rivmpl::random::{randn, rng};

    let mut g = rng(seed);
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(7919).wrapping_add(i as u64);
            let lam = g.random_range(0.02..0.4);
            let problem: Box<dyn CompositeProblem> = match i % 5 {
                0 => Box::new(AffineSphere {
                    n: 5,
                    c: randn(5, 1, &mut g),
                    b_mat: randn(4, 5, &mut g),
                    b: randn(4, 1, &mut g) * 0.3,
                    reg: ProxRegularizer::l1(lam).unwrap(),
                }),
                1 | 2 => {
                    let (n, r) = if i % 5 == 1 { (4, 2) } else { (5, 1) };
                    let b = randn(n, n, &mut g);
                    Box::new(make_ssc(&b + &b.t(), lam, r).unwrap())
                }
                3 => {
                    let b = gen_data_pca(6, 5, s).unwrap();
                    let rho = g.random_range(0.05..1.0);
                    Box::new(make_group_pca(&b, lam, rho, 2).unwrap())
                }
                _ => Box::new(make_psd(gen_data_psd_type1(2, 2, s), lam, 1).unwrap()),
            };
            let x = problem.manifold().random_point(s);
            let alpha = 10f64.powf(g.random_range(-1.0..1.0));
            let beta = 10f64.powf(g.random_range(-2.0..0.0));
            TinySpec {
                problem,
                x,
                alpha,
                beta,
            }
        })
        .collect()
}
