//! Bias-free MLP encoder with optional normalisation head.
//!
//! Every activation satisfies `h(x) = h′(x)·x`, so each layer acts on a
//! sample as the linear map `D_l W_l` with `D_l` the gating diagonal.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::linalg::frobenius_norm;
use crate::rng::gaussian_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    /// `max(x, 0)`; the derivative at 0 is taken to be 0.
    Relu,
}

impl Activation {
    #[inline]
    fn gate(self, u: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Head {
    #[default]
    None,
    /// `y = x/‖x‖`.
    L2,
    /// `y = (x − mean x)/‖x − mean x‖`.
    LayerNorm,
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Head::None),
            "l2" | "l2_normalize" => Ok(Head::L2),
            "layer_norm" | "layernorm" => Ok(Head::LayerNorm),
            _ => Err(Error::Parse(format!("unknown head `{s}`"))),
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::None => "none",
            Head::L2 => "l2",
            Head::LayerNorm => "layer_norm",
        })
    }
}

/// Dense layer `f_out = h(W f_in)` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<Layer>,
    pub head: Head,
}

/// Cached forward pass of one view of a batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`.
    pub activations: Vec<Array2<f64>>,
    /// Pre-activations `W_l f_{l−1}` per layer.
    pub preactivations: Vec<Array2<f64>>,
    /// Final outputs (after the head).
    pub output: Array2<f64>,
    /// Per-sample heads: unit output direction and the norm it divided by.
    head_dirs: Array2<f64>,
    head_norms: Array1<f64>,
}

impl ForwardTrace {
    /// Output of the last layer, before the head.
    pub fn pre_head(&self) -> &Array2<f64> {
        self.activations.last().expect("trace has at least the input")
    }

    /// Gating diagonal `D_l` entries for every sample of layer `l` (1-based).
    pub fn gates(&self, enc: &Encoder, l: usize) -> Array2<f64> {
        let act = enc.layers[l - 1].activation;
        self.preactivations[l - 1].mapv(|u| act.gate(u))
    }
}

impl Encoder {
    /// Validates that the weight shapes chain.
    pub fn new(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("encoder needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(shape_err(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    l + 1,
                    pair[0].weight.nrows(),
                    l + 2,
                    pair[1].weight.ncols()
                )));
            }
        }
        Ok(Encoder { layers, head })
    }

    /// Gaussian init with entries of variance `1/fan_in`.
    pub fn random(rng: &mut impl Rng, dims: &[usize], activations: &[Activation], head: Head) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                weight: gaussian_matrix(rng, w[1], w[0], 1.0 / (w[0] as f64).sqrt()),
                activation,
            })
            .collect();
        Encoder::new(layers, head)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.nrows())
    }

    pub fn weights(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().map(|l| &l.weight).collect()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<ForwardTrace> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!("input width {} for encoder expecting {}", x.ncols(), self.input_dim())));
        }
        let mut activations = vec![x.to_owned()];
        let mut preactivations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let u = activations.last().unwrap().dot(&layer.weight.t());
            let f = match layer.activation {
                Activation::Linear => u.clone(),
                Activation::Relu => u.mapv(|v| v.max(0.0)),
            };
            preactivations.push(u);
            activations.push(f);
        }
        let last = activations.last().unwrap();
        let n = last.nrows();
        let (output, head_dirs, head_norms) = match self.head {
            Head::None => (last.clone(), Array2::zeros((0, 0)), Array1::zeros(0)),
            Head::L2 | Head::LayerNorm => {
                let mut out = last.clone();
                let mut norms = Array1::zeros(n);
                for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                    if self.head == Head::LayerNorm {
                        let mean = row.mean().unwrap_or(0.0);
                        row.mapv_inplace(|v| v - mean);
                    }
                    let norm = row.dot(&row).sqrt();
                    if norm == 0.0 {
                        return Err(Error::Singular { sample: i });
                    }
                    row.mapv_inplace(|v| v / norm);
                    norms[i] = norm;
                }
                (out.clone(), out, norms)
            }
        };
        Ok(ForwardTrace { activations, preactivations, output, head_dirs, head_norms })
    }

    /// Applies the head Jacobian (symmetric) to output-space gradients.
    fn head_backward(&self, trace: &ForwardTrace, g_out: &ArrayView2<f64>) -> Array2<f64> {
        match self.head {
            Head::None => g_out.to_owned(),
            Head::L2 | Head::LayerNorm => {
                let mut g = g_out.to_owned();
                for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
                    let y = trace.head_dirs.row(i);
                    if self.head == Head::LayerNorm {
                        let mean = row.mean().unwrap_or(0.0);
                        row.mapv_inplace(|v| v - mean);
                    }
                    let proj = row.dot(&y);
                    let norm = trace.head_norms[i];
                    Zip::from(&mut row).and(&y).for_each(|r, &yv| *r = (*r - proj * yv) / norm);
                }
                g
            }
        }
    }

    /// Weight gradients of `Σ_i ⟨g_out[i], z[i]⟩` through this trace.
    pub fn backward(&self, trace: &ForwardTrace, g_out: &ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if trace.activations.len() != self.layers.len() + 1 || g_out.dim() != trace.output.dim() {
            return Err(shape_err("trace does not match this encoder or gradient"));
        }
        let mut g = self.head_backward(trace, g_out);
        let mut grads = vec![Array2::zeros((0, 0)); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                Zip::from(&mut g).and(&trace.preactivations[l]).for_each(|gv, &u| *gv *= layer.activation.gate(u));
            }
            grads[l] = g.t().dot(&trace.activations[l]);
            if l > 0 {
                g = g.dot(&layer.weight);
            }
        }
        Ok(grads)
    }

    /// Gradients summed over both views of a batch.
    pub fn backward_pair(
        &self,
        traces: (&ForwardTrace, &ForwardTrace),
        grads: (&ArrayView2<f64>, &ArrayView2<f64>),
    ) -> Result<Vec<Array2<f64>>> {
        let a = self.backward(traces.0, grads.0)?;
        let b = self.backward(traces.1, grads.1)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| x + y).collect())
    }

    /// `W_l ← W_l + scale · Δ_l`.
    pub fn updated(&self, deltas: &[Array2<f64>], scale: f64) -> Result<Encoder> {
        if deltas.len() != self.layers.len() {
            return Err(shape_err(format!("{} updates for {} layers", deltas.len(), self.layers.len())));
        }
        let mut out = self.clone();
        for (layer, d) in out.layers.iter_mut().zip(deltas) {
            if d.dim() != layer.weight.dim() {
                return Err(shape_err(format!("update {:?} for weight {:?}", d.dim(), layer.weight.dim())));
            }
            if scale != 0.0 {
                layer.weight.scaled_add(scale, d);
            }
        }
        Ok(out)
    }
}

/// `⟨W, ∇W⟩_F / (‖W‖_F ‖∇W‖_F)`, or 0 when either norm vanishes.
pub fn normalized_inner(w: &ArrayView2<f64>, g: &ArrayView2<f64>) -> f64 {
    let denom = frobenius_norm(w) * frobenius_norm(g);
    if denom == 0.0 {
        0.0
    } else {
        crate::linalg::frobenius_inner(w, g) / denom
    }
}
