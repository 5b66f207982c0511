//! Output-level gradients, the loss/energy gradient identity, a small
//! reversible MLP encoder and the α-CL update step.
//!
//! For `α` taken from the loss gradient,
//!
//! ```text
//! ∂L/∂z = −∂E_α/∂z   (α held fixed on the right)
//! ```
//!
//! so descending the loss is the same as ascending the energy with frozen
//! pair weights. [`verify_gradient_identity`] measures the residual of that
//! identity; the two sides are computed by separate routines.

mod encoder;
mod step;

pub use encoder::{Activation, Encoder, ForwardTrace, Head, Layer};
pub use encoder::normalized_inner;
pub use step::{
    ascent_direction, Direction, Objective,
    alpha_cl_step, backprop_through_alpha_step, batch_alpha, composite_energy, loss_descent_step,
    AlphaSource, StepResult,
};

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{shape_err, Result};
use crate::importance::{alpha_from_gradient, PairImportance};
use crate::loss_family::{check_pair, eval_loss, DistanceSet, LossSpec};

/// Gradient of `Σ_i Σ_{k≠i} w_ik (d²_i − d²_ik)` with respect to `z` and `z'`.
///
/// With `w = α` this is the loss gradient.
pub fn grad_pair_weighted(
    w: &ArrayView2<f64>,
    z: &ArrayView2<f64>,
    z_aug: &ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_pair(z, z_aug)?;
    let (n, k) = z.dim();
    if w.dim() != (n, n) {
        return Err(shape_err(format!("pair weights {:?} for {n} samples", w.dim())));
    }
    let mut g = Array2::<f64>::zeros((n, k));
    let mut g_aug = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let mut beta = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let wij = w[[i, j]];
            let wji = w[[j, i]];
            beta += wij;
            for c in 0..k {
                g[[i, c]] += wij * (z[[j, c]] - z_aug[[i, c]]) + wji * (z[[j, c]] - z[[i, c]]);
            }
        }
        for c in 0..k {
            g_aug[[i, c]] = beta * (z_aug[[i, c]] - z[[i, c]]);
        }
    }
    Ok((g, g_aug))
}

/// `(∂L/∂z, ∂L/∂z')` with `α` from the loss gradient.
pub fn grad_loss_wrt_outputs(
    spec: &LossSpec,
    z: &ArrayView2<f64>,
    z_aug: &ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let dist = DistanceSet::from_outputs(z, z_aug)?;
    let xi = eval_loss(spec, &dist)?.xi;
    let pi = alpha_from_gradient(spec, &dist, &xi)?;
    grad_pair_weighted(&pi.alpha().view(), z, z_aug)
}

/// `(∂E_α/∂z, ∂E_α/∂z')` with `α` fixed, in the covariance grouping:
/// `Σ_j (α_ij + α_ji)(z_i − z_j) − β_i (z_i − z_i')` and `β_i (z_i − z_i')`.
pub fn grad_energy_wrt_outputs(
    pi: &PairImportance,
    z: &ArrayView2<f64>,
    z_aug: &ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_pair(z, z_aug)?;
    let (n, k) = z.dim();
    if pi.len() != n {
        return Err(shape_err(format!("importance for {} samples, outputs for {n}", pi.len())));
    }
    let alpha = pi.alpha();
    let mut g = Array2::<f64>::zeros((n, k));
    let mut g_aug = Array2::<f64>::zeros((n, k));
    let mut scatter = vec![0.0; k];
    for i in 0..n {
        scatter.iter_mut().for_each(|v| *v = 0.0);
        let mut beta = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let s = alpha[[i, j]] + alpha[[j, i]];
            beta += alpha[[i, j]];
            for c in 0..k {
                scatter[c] += s * (z[[i, c]] - z[[j, c]]);
            }
        }
        for c in 0..k {
            let gap = z[[i, c]] - z_aug[[i, c]];
            g[[i, c]] = scatter[c] - beta * gap;
            g_aug[[i, c]] = beta * gap;
        }
    }
    Ok((g, g_aug))
}

/// Result of a gradient-identity check, serialisable for reports.
#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub loss: String,
    pub grad_outputs: Array2<f64>,
    pub grad_outputs_aug: Array2<f64>,
    /// Per-layer weight gradients when an encoder was involved.
    pub grad_weights: Vec<Array2<f64>>,
    pub max_identity_residual: f64,
    /// Some margin lies within `1e-4` of a kink of `ψ`; the identity is
    /// then only meaningful for the chosen subgradient.
    pub near_kink: bool,
}

/// Max-norm of `∂L/∂z + ∂E_α/∂z` over both views.
pub fn verify_gradient_identity(spec: &LossSpec, z: &ArrayView2<f64>, z_aug: &ArrayView2<f64>) -> Result<GradReport> {
    let dist = DistanceSet::from_outputs(z, z_aug)?;
    let xi = eval_loss(spec, &dist)?.xi;
    let pi = alpha_from_gradient(spec, &dist, &xi)?;
    let (gl, gl_aug) = grad_loss_wrt_outputs(spec, z, z_aug)?;
    let (ge, ge_aug) = grad_energy_wrt_outputs(&pi, z, z_aug)?;
    let residual = (&gl + &ge)
        .iter()
        .chain((&gl_aug + &ge_aug).iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(GradReport {
        loss: spec.to_string(),
        grad_outputs: gl,
        grad_outputs_aug: gl_aug,
        grad_weights: Vec::new(),
        max_identity_residual: residual,
        near_kink: near_kink(spec, &dist, 1e-4),
    })
}

/// Whether any margin `d²_i − d²_ij` lies within `zone` of a kink of `ψ`.
pub fn near_kink(spec: &LossSpec, dist: &DistanceSet, zone: f64) -> bool {
    let kinks = spec.psi_kinks();
    if kinks.is_empty() {
        return false;
    }
    let n = dist.len();
    (0..n).any(|i| {
        (0..n).filter(|&j| j != i).any(|j| kinks.iter().any(|k| (dist.margin(i, j) - k).abs() < zone))
    })
}
