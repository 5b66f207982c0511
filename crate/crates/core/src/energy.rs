//! Contrastive covariance and energy.
//!
//! ```text
//! C_α[a, b] = Σ_i Σ_{j≠i} α_ij (a_i − a_j)(b_i − b_j)ᵀ − Σ_i β_i (a_i − a_i')(b_i − b_i')ᵀ
//! E_α       = ½ tr C_α[z, z]
//! ```
//!
//! The covariance is accumulated with plain loops over pairs; `N` is small
//! in every use here.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{shape_err, Result};
use crate::export;
use crate::importance::PairImportance;
use crate::linalg::{self, SymEigen};
use crate::loss_family::DistanceSet;

fn check_rows(pi: &PairImportance, mats: &[(&str, &ArrayView2<f64>)]) -> Result<()> {
    for (name, m) in mats {
        if m.nrows() != pi.len() {
            return Err(shape_err(format!("{name} has {} rows, importance has {}", m.nrows(), pi.len())));
        }
    }
    Ok(())
}

/// `C_α[a, b]` as a `p×q` matrix. Row sums `β` are recomputed from `α`.
pub fn contrastive_cov(
    pi: &PairImportance,
    a: &ArrayView2<f64>,
    a_aug: &ArrayView2<f64>,
    b: &ArrayView2<f64>,
    b_aug: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_rows(pi, &[("a", a), ("a_aug", a_aug), ("b", b), ("b_aug", b_aug)])?;
    if a.dim() != a_aug.dim() || b.dim() != b_aug.dim() {
        return Err(shape_err("views of one argument differ in shape"));
    }
    let n = pi.len();
    let (p, q) = (a.ncols(), b.ncols());
    let alpha = pi.alpha();
    let mut out = Array2::<f64>::zeros((p, q));
    let mut da = vec![0.0; p];
    let mut db = vec![0.0; q];
    let mut accumulate = |w: f64, da: &[f64], db: &[f64]| {
        for r in 0..p {
            let s = w * da[r];
            for c in 0..q {
                out[[r, c]] += s * db[c];
            }
        }
    };
    for i in 0..n {
        let mut beta = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = alpha[[i, j]];
            beta += w;
            if w == 0.0 {
                continue;
            }
            for r in 0..p {
                da[r] = a[[i, r]] - a[[j, r]];
            }
            for c in 0..q {
                db[c] = b[[i, c]] - b[[j, c]];
            }
            accumulate(w, &da, &db);
        }
        if beta != 0.0 {
            for r in 0..p {
                da[r] = a[[i, r]] - a_aug[[i, r]];
            }
            for c in 0..q {
                db[c] = b[[i, c]] - b_aug[[i, c]];
            }
            accumulate(-beta, &da, &db);
        }
    }
    Ok(out)
}

/// `½ tr C_α[z, z]`.
pub fn energy(pi: &PairImportance, z: &ArrayView2<f64>, z_aug: &ArrayView2<f64>) -> Result<f64> {
    let c = contrastive_cov(pi, z, z_aug, z, z_aug)?;
    Ok(0.5 * c.diag().sum())
}

/// `Σ_{i≠j} α_ij (d²_ij − d²_i)`; equals [`energy`] on the same batch.
pub fn energy_from_distances(pi: &PairImportance, dist: &DistanceSet) -> Result<f64> {
    let n = dist.len();
    if pi.len() != n {
        return Err(shape_err(format!("importance for {} samples, distances for {n}", pi.len())));
    }
    let alpha = pi.alpha();
    let mut e = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            e += alpha[[i, j]] * (dist.d2_cross[[i, j]] - dist.d2_intra[i]);
        }
    }
    Ok(e)
}

/// A symmetric contrastive covariance `C_α[a, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveCov {
    pub matrix: Array2<f64>,
    pub source_dim: usize,
}

impl ContrastiveCov {
    /// `C_α[x, x]` of raw inputs, symmetrised.
    pub fn from_inputs(pi: &PairImportance, x: &ArrayView2<f64>, x_aug: &ArrayView2<f64>) -> Result<Self> {
        let c = contrastive_cov(pi, x, x_aug, x, x_aug)?;
        Ok(ContrastiveCov { matrix: linalg::symmetrize(&c), source_dim: x.ncols() })
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        linalg::sym_eigen(&self.matrix.view())
    }

    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.eigen()?.top_value())
    }

    /// `½ tr(W C Wᵀ)` for a linear map `W` applied to every sample.
    pub fn energy_under(&self, w: &ArrayView2<f64>) -> f64 {
        0.5 * w.dot(&self.matrix).dot(&w.t()).diag().sum()
    }

    pub fn to_csv(&self) -> String {
        export::matrix_csv(&self.matrix.view(), "c")
    }

    /// Eigenvalues, descending, one per line.
    pub fn eigenvalues_csv(&self) -> Result<String> {
        let e = self.eigen()?;
        Ok(export::column_csv("eigenvalue", &e.values.to_vec()))
    }
}

/// `β` recomputed from `α`.
pub fn row_sums(pi: &PairImportance) -> Array1<f64> {
    pi.alpha().sum_axis(Axis(1))
}
