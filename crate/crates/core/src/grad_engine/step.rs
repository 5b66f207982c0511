//! Parameter updates: the α-CL ascent step and its two baselines.

use ndarray::{Array2, ArrayView2};

use super::encoder::Encoder;
use super::{grad_energy_wrt_outputs, grad_pair_weighted};
use crate::energy::energy_from_distances;
use crate::error::{Error, Result};
use crate::importance::{alpha_direct, alpha_from_gradient, costs, solve, DirectAlpha, PairImportance, RegularizerSpec};
use crate::loss_family::{eval_loss, Batch, DistanceSet, LossSpec};

/// Where the pair weights of an α-CL step come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSource {
    /// `α = φ′(ξ)ψ′(·)` of a loss in the family.
    FromGradient(LossSpec),
    /// Solution of a regularised row problem on the current costs.
    Regularized(RegularizerSpec),
    /// Set directly from distances.
    Direct(DirectAlpha),
    /// The same weights at every step.
    Fixed(PairImportance),
}

/// `α` for the current outputs.
pub fn batch_alpha(source: &AlphaSource, dist: &DistanceSet) -> Result<PairImportance> {
    match source {
        AlphaSource::FromGradient(spec) => {
            let xi = eval_loss(spec, dist)?.xi;
            alpha_from_gradient(spec, dist, &xi)
        }
        AlphaSource::Regularized(reg) => solve(&costs(dist).view(), reg),
        AlphaSource::Direct(cfg) => alpha_direct(dist, cfg),
        AlphaSource::Fixed(pi) => {
            if pi.len() != dist.len() {
                return Err(crate::error::shape_err(format!(
                    "fixed importance for {} samples, batch has {}",
                    pi.len(),
                    dist.len()
                )));
            }
            Ok(pi.clone())
        }
    }
}

/// What one update optimises.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Ascend `E_α` with `α` recomputed and then frozen.
    AlphaCl(AlphaSource),
    /// Descend the loss directly.
    LossDescent(LossSpec),
    /// Ascend `E_{α(θ)}` including the dependence of `α` on the weights.
    BackpropAlpha(LossSpec),
}

/// Per-layer update direction (already signed for ascent) and the
/// objective values at the current weights.
#[derive(Debug, Clone)]
pub struct Direction {
    pub grads: Vec<Array2<f64>>,
    pub energy: f64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub encoder: Encoder,
    pub direction: Direction,
}

pub fn ascent_direction(enc: &Encoder, x: &ArrayView2<f64>, x_aug: &ArrayView2<f64>, obj: &Objective) -> Result<Direction> {
    let tr = enc.forward(x)?;
    let tr_aug = enc.forward(x_aug)?;
    let (z, z_aug) = (tr.output.view(), tr_aug.output.view());
    let dist = DistanceSet::from_outputs(&z, &z_aug)?;
    let (g, g_aug, energy, loss) = match obj {
        Objective::AlphaCl(source) => {
            let pi = batch_alpha(source, &dist)?;
            let (g, ga) = grad_energy_wrt_outputs(&pi, &z, &z_aug)?;
            let loss = match source {
                AlphaSource::FromGradient(spec) => Some(eval_loss(spec, &dist)?.loss),
                _ => None,
            };
            (g, ga, energy_from_distances(&pi, &dist)?, loss)
        }
        Objective::LossDescent(spec) => {
            let v = eval_loss(spec, &dist)?;
            let pi = alpha_from_gradient(spec, &dist, &v.xi)?;
            let (g, ga) = grad_pair_weighted(&pi.alpha().view(), &z, &z_aug)?;
            (-g, -ga, energy_from_distances(&pi, &dist)?, Some(v.loss))
        }
        Objective::BackpropAlpha(spec) => {
            let (w, energy) = composite_pair_weights(spec, &dist)?;
            let (g, ga) = grad_pair_weighted(&w.view(), &z, &z_aug)?;
            (g, ga, energy, Some(eval_loss(spec, &dist)?.loss))
        }
    };
    let grads = enc.backward_pair((&tr, &tr_aug), (&g.view(), &g_aug.view()))?;
    Ok(Direction { grads, energy, loss })
}

/// `θ ← θ + η ∇_θ E_{sg(α)}(θ)`.
pub fn alpha_cl_step(enc: &Encoder, batch: &Batch, source: &AlphaSource, eta: f64) -> Result<StepResult> {
    step(enc, batch, &Objective::AlphaCl(source.clone()), eta)
}

/// `θ ← θ − η ∇_θ L(θ)`.
pub fn loss_descent_step(enc: &Encoder, batch: &Batch, spec: &LossSpec, eta: f64) -> Result<StepResult> {
    step(enc, batch, &Objective::LossDescent(*spec), eta)
}

/// `θ ← θ + η ∇_θ E_{α(θ)}(θ)`, differentiating through `α` (InfoNCE only).
pub fn backprop_through_alpha_step(enc: &Encoder, batch: &Batch, spec: &LossSpec, eta: f64) -> Result<StepResult> {
    step(enc, batch, &Objective::BackpropAlpha(*spec), eta)
}

fn step(enc: &Encoder, batch: &Batch, obj: &Objective, eta: f64) -> Result<StepResult> {
    let direction = ascent_direction(enc, &batch.inputs.view(), &batch.inputs_aug.view(), obj)?;
    let encoder = enc.updated(&direction.grads, eta)?;
    Ok(StepResult { encoder, direction })
}

/// `E_{α(θ)}` with `α` the InfoNCE weights of the same outputs.
pub fn composite_energy(spec: &LossSpec, z: &ArrayView2<f64>, z_aug: &ArrayView2<f64>) -> Result<f64> {
    let dist = DistanceSet::from_outputs(z, z_aug)?;
    Ok(composite_pair_weights(spec, &dist)?.1)
}

/// `∂E/∂x_ik` for the margins `x_ik = d²_i − d²_ik`, where
/// `E = −Σ α_ik x_ik` and `α_ik = e^{x_ik/τ}/(ε + Σ_j e^{x_ij/τ})`:
/// `−α_ik (1 + (x_ik − x̄_i)/τ)` with `x̄_i = Σ_j α_ij x_ij`.
fn composite_pair_weights(spec: &LossSpec, dist: &DistanceSet) -> Result<(Array2<f64>, f64)> {
    if !spec.is_infonce() {
        return Err(Error::Unsupported(format!(
            "differentiating through the pair weights is implemented for infonce only, not {}",
            spec.kind
        )));
    }
    let xi = eval_loss(spec, dist)?.xi;
    let pi = alpha_from_gradient(spec, dist, &xi)?;
    let alpha = pi.alpha();
    let n = dist.len();
    let mut w = Array2::zeros((n, n));
    let mut energy = 0.0;
    for i in 0..n {
        let mean: f64 = (0..n).filter(|&j| j != i).map(|j| alpha[[i, j]] * dist.margin(i, j)).sum();
        energy -= mean;
        for k in (0..n).filter(|&k| k != i) {
            w[[i, k]] = -alpha[[i, k]] * (1.0 + (dist.margin(i, k) - mean) / spec.tau);
        }
    }
    Ok((w, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad_engine::encoder::{normalized_inner, Activation, Head};
    use crate::importance::RegularizerSpec;
    use crate::loss_family::LossKind;
    use crate::rng::{gaussian_matrix, seeded};
    use crate::testutil::{assert_fd_close, fd_grad};

    fn setup(seed: u64, head: Head) -> (Encoder, Batch) {
        let mut rng = seeded(seed);
        let acts = [Activation::Relu, Activation::Linear];
        let enc = Encoder::random(&mut rng, &[4, 16, 3], &acts, head).unwrap();
        let x = gaussian_matrix(&mut rng, 8, 4, 1.0);
        let xa = &x + &gaussian_matrix(&mut rng, 8, 4, 0.3);
        (enc, Batch::new(x, xa).unwrap())
    }

    fn outputs(enc: &Encoder, b: &Batch) -> (Array2<f64>, Array2<f64>) {
        (enc.forward(&b.inputs.view()).unwrap().output, enc.forward(&b.inputs_aug.view()).unwrap().output)
    }

    #[test]
    fn zero_step_is_identity() {
        let (enc, b) = setup(1, Head::L2);
        let src = AlphaSource::Regularized(RegularizerSpec::entropy(0.5));
        assert_eq!(alpha_cl_step(&enc, &b, &src, 0.0).unwrap().encoder, enc);
        let spec = LossSpec::infonce(0.5, 0.0);
        assert_eq!(backprop_through_alpha_step(&enc, &b, &spec, 0.0).unwrap().encoder, enc);
    }

    #[test]
    fn alpha_cl_with_gradient_alpha_is_loss_descent() {
        for kind in [LossKind::InfoNce, LossKind::SoftTriplet, LossKind::ModifiedTriplet] {
            let (enc, b) = setup(2, Head::L2);
            let spec = LossSpec::new(kind).with_tau(0.5);
            let a = alpha_cl_step(&enc, &b, &AlphaSource::FromGradient(spec), 0.1).unwrap().encoder;
            let l = loss_descent_step(&enc, &b, &spec, 0.1).unwrap().encoder;
            for (x, y) in a.layers.iter().zip(&l.layers) {
                assert!(x.weight.iter().zip(y.weight.iter()).all(|(p, q)| (p - q).abs() <= 1e-10));
            }
        }
    }

    #[test]
    fn descent_direction_matches_loss_finite_differences() {
        let (enc, b) = setup(3, Head::None);
        let spec = LossSpec::infonce(0.7, 0.0);
        let dir =
            ascent_direction(&enc, &b.inputs.view(), &b.inputs_aug.view(), &Objective::LossDescent(spec)).unwrap();
        for l in 0..enc.layers.len() {
            let fd = fd_grad(
                |w| {
                    let mut e = enc.clone();
                    e.layers[l].weight = w.clone();
                    let (z, za) = outputs(&e, &b);
                    -eval_loss(&spec, &DistanceSet::from_outputs(&z.view(), &za.view()).unwrap()).unwrap().loss
                },
                &enc.layers[l].weight,
            );
            assert_fd_close(&dir.grads[l], &fd);
        }
    }

    #[test]
    fn backprop_alpha_matches_composite_finite_differences() {
        for eps in [0.0, 0.5] {
            let (enc, b) = setup(4, Head::L2);
            let spec = LossSpec::infonce(0.6, eps);
            let obj = Objective::BackpropAlpha(spec);
            let dir = ascent_direction(&enc, &b.inputs.view(), &b.inputs_aug.view(), &obj).unwrap();
            for l in 0..enc.layers.len() {
                let fd = fd_grad(
                    |w| {
                        let mut e = enc.clone();
                        e.layers[l].weight = w.clone();
                        let (z, za) = outputs(&e, &b);
                        composite_energy(&spec, &z.view(), &za.view()).unwrap()
                    },
                    &enc.layers[l].weight,
                );
                assert_fd_close(&dir.grads[l], &fd);
            }
            let frozen = ascent_direction(
                &enc,
                &b.inputs.view(),
                &b.inputs_aug.view(),
                &Objective::AlphaCl(AlphaSource::FromGradient(spec)),
            )
            .unwrap();
            let diff: f64 =
                dir.grads.iter().zip(&frozen.grads).map(|(p, q)| (p - q).iter().map(|v| v.abs()).sum::<f64>()).sum();
            assert!(diff > 1e-6);
        }
        let (enc, b) = setup(4, Head::L2);
        assert!(matches!(
            backprop_through_alpha_step(&enc, &b, &LossSpec::quadratic(), 0.1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn direct_alpha_step_separates_close_pair() {
        let mut rng = seeded(5);
        let enc = Encoder::random(&mut rng, &[3, 3], &[Activation::Linear], Head::None).unwrap();
        let mut x = gaussian_matrix(&mut rng, 5, 3, 2.0);
        let row0 = x.row(0).to_owned();
        x.row_mut(1).assign(&(&row0 + 0.05));
        let b = Batch::new(x.clone(), x).unwrap();
        let before = {
            let (z, za) = outputs(&enc, &b);
            DistanceSet::from_outputs(&z.view(), &za.view()).unwrap().d2_cross[[0, 1]]
        };
        let src = AlphaSource::Direct(DirectAlpha::new(4.0, 0.5, true));
        let next = alpha_cl_step(&enc, &b, &src, 0.05).unwrap().encoder;
        let (z, za) = outputs(&next, &b);
        let after = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap().d2_cross[[0, 1]];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn weight_norm_is_conserved_under_heads() {
        for head in [Head::L2, Head::LayerNorm] {
            for seed in 0..5 {
                let (enc, b) = setup(10 + seed, head);
                let src = AlphaSource::FromGradient(LossSpec::infonce(0.5, 0.0));
                let dir =
                    ascent_direction(&enc, &b.inputs.view(), &b.inputs_aug.view(), &Objective::AlphaCl(src)).unwrap();
                for (layer, g) in enc.layers.iter().zip(&dir.grads) {
                    assert!(normalized_inner(&layer.weight.view(), &g.view()).abs() <= 1e-8);
                }
            }
        }
    }
}
