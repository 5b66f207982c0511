//! Small dense linear algebra: Frobenius helpers, a cyclic Jacobi symmetric
//! eigensolver and a one-sided Jacobi SVD.
//!
//! Both decompositions are self-contained so that spectral checks never share
//! code with the dynamics they verify. They are meant for matrices of order
//! at most a few dozen.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::rng::gaussian_matrix;

pub fn frobenius_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_inner(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    (a + &a.t()) * 0.5
}

pub fn is_square(a: &ArrayView2<f64>) -> bool {
    a.nrows() == a.ncols()
}

/// Eigen-decomposition `A = V diag(λ) Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues sorted in descending order.
    pub values: Array1<f64>,
    /// Unit eigenvectors as columns, in the order of `values`.
    pub vectors: Array2<f64>,
}

impl SymEigen {
    pub fn top_vector(&self) -> Array1<f64> {
        self.vectors.column(0).to_owned()
    }

    pub fn top_value(&self) -> f64 {
        self.values[0]
    }

    /// `λ₁ − λ₂`, or `+∞` for a 1×1 matrix.
    pub fn top_gap(&self) -> f64 {
        if self.values.len() < 2 {
            f64::INFINITY
        } else {
            self.values[0] - self.values[1]
        }
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass falls below
/// `1e-15 · ‖A‖_F` (or 100 sweeps).
pub fn sym_eigen(a: &ArrayView2<f64>) -> Result<SymEigen> {
    if !is_square(a) {
        return Err(shape_err(format!("eigensolver needs a square matrix, got {:?}", a.dim())));
    }
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale = frobenius_norm(a).max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymEigen { values, vectors })
}

/// Thin SVD `A = U diag(σ) Vᵀ` with `σ` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    /// `(σ₁, σ₂)`, with `σ₂ = 0` for rank-deficient shapes.
    pub fn top_two(&self) -> (f64, f64) {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        let s2 = self.singular_values.get(1).copied().unwrap_or(0.0);
        (s1, s2)
    }

    /// Number of singular values with `σ_r / σ₁ > rel_threshold`.
    pub fn numerical_rank(&self, rel_threshold: f64) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        if s1 == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s / s1 > rel_threshold).count()
    }
}

/// One-sided (Hestenes) Jacobi SVD. Relative accuracy of small singular
/// values is much better than going through `AᵀA`.
pub fn svd(a: &ArrayView2<f64>) -> Svd {
    let (rows, cols) = a.dim();
    if rows < cols {
        let t = svd(&a.t());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let mut w = a.to_owned();
    let mut v = Array2::<f64>::eye(cols);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..rows {
                    alpha += w[[k, p]] * w[[k, p]];
                    beta += w[[k, q]] * w[[k, q]];
                    gamma += w[[k, p]] * w[[k, q]];
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for k in 0..rows {
                    let wp = w[[k, p]];
                    let wq = w[[k, q]];
                    w[[k, p]] = c * wp - sn * wq;
                    w[[k, q]] = sn * wp + c * wq;
                }
                for k in 0..cols {
                    let vp = v[[k, p]];
                    let vq = v[[k, q]];
                    v[[k, p]] = c * vp - sn * vq;
                    v[[k, q]] = sn * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).dot(&w.column(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Array2::<f64>::zeros((rows, cols));
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > 0.0 {
            let col = w.column(src).mapv(|x| x / norms[src]);
            u.column_mut(dst).assign(&col);
        }
    }
    Svd {
        u,
        singular_values: Array1::from_iter(order.iter().map(|&i| norms[i])),
        v: v.select(Axis(1), &order),
    }
}

/// Random orthogonal matrix (Gram–Schmidt on a Gaussian draw).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    loop {
        let g = gaussian_matrix(rng, n, n, 1.0);
        let mut q = Array2::<f64>::zeros((n, n));
        let mut ok = true;
        for j in 0..n {
            let mut col = g.column(j).to_owned();
            for k in 0..j {
                let proj = q.column(k).dot(&col);
                col.scaled_add(-proj, &q.column(k));
            }
            let norm = col.dot(&col).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).assign(&(col / norm));
        }
        if ok {
            return q;
        }
    }
}

/// `Q diag(values) Qᵀ` for a random orthogonal `Q`.
pub fn random_symmetric_with_spectrum(rng: &mut impl Rng, values: &[f64]) -> Array2<f64> {
    let n = values.len();
    let q = random_orthogonal(rng, n);
    let scaled = &q * &Array1::from(values.to_vec());
    let out = scaled.dot(&q.t());
    symmetrize(&out)
}

/// Product `mats[hi-1] · … · mats[lo]`, or the identity of order `dim` when
/// the range is empty.
pub fn chain_product(mats: &[Array2<f64>], lo: usize, hi: usize, dim: usize) -> Array2<f64> {
    let mut acc = Array2::<f64>::eye(dim);
    for m in &mats[lo..hi] {
        acc = m.dot(&acc);
    }
    acc
}

pub fn submatrix(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx).select(Axis(1), idx)
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky.
pub fn cholesky_solve(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if !is_square(a) || b.nrows() != n {
        return Err(shape_err(format!("cholesky_solve of {:?} with {:?}", a.dim(), b.dim())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let d = a[[j, j]] - (0..j).map(|k| l[[j, k]] * l[[j, k]]).sum::<f64>();
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("matrix is not positive definite (pivot {j} = {d})")));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            l[[i, j]] = (a[[i, j]] - (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum::<f64>()) / d;
        }
    }
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[[i, k]] * col[k]).sum();
            col[i] = (col[i] - s) / l[[i, i]];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[[k, i]] * col[k]).sum();
            col[i] = (col[i] - s) / l[[i, i]];
        }
    }
    Ok(x)
}
