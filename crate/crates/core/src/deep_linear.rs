//! Gradient flow of a deep linear encoder `z = W_L ⋯ W_1 x` with fixed `α`.
//!
//! The energy is `E = ½ tr(W X_α Wᵀ)` with `W` the layer product and
//! `X_α = C_α[x, x]`, and each layer moves along
//!
//! ```text
//! Ẇ_l = W_{>l}ᵀ W_{>l} W_l (W_{<l} X_α W_{<l}ᵀ)
//! ```
//!
//! Under unit Frobenius norms on every layer the maximiser is aligned rank
//! one, `2E = λ_max(X_α)`, and the first-layer input direction is the top
//! eigenvector of `X_α`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::energy::ContrastiveCov;
use crate::error::{shape_err, Error, Result};
use crate::importance::PairImportance;
use crate::linalg::{self, frobenius_norm, svd, sym_eigen};
use crate::loss_family::Batch;
use crate::rng::gaussian_matrix;

/// Which set the weights are projected back onto after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    /// Plain Euler steps.
    None,
    /// `‖W_l‖_F = 1` for every layer.
    #[default]
    Frobenius,
    /// Every row of `W_l` has norm `1/√n_l` for hidden layers; `‖W_L‖_F = 1`.
    PerFilter,
}

impl FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Constraint::None),
            "frobenius" => Ok(Constraint::Frobenius),
            "per_filter" => Ok(Constraint::PerFilter),
            _ => Err(Error::Parse(format!("unknown constraint `{s}`"))),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::None => "none",
            Constraint::Frobenius => "frobenius",
            Constraint::PerFilter => "per_filter",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepLinState {
    /// `weights[l]` is `W_{l+1}` of shape `n_{l+1} × n_l`.
    pub weights: Vec<Array2<f64>>,
    pub x_alpha: Array2<f64>,
    pub step: usize,
    pub eta: f64,
}

impl DeepLinState {
    pub fn new(weights: Vec<Array2<f64>>, x_alpha: Array2<f64>, eta: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("need at least one layer".into()));
        }
        if !linalg::is_square(&x_alpha.view()) || x_alpha.nrows() != weights[0].ncols() {
            return Err(shape_err(format!(
                "X_alpha {:?} does not match input width {}",
                x_alpha.dim(),
                weights[0].ncols()
            )));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(shape_err(format!("layer {} -> {} widths do not chain", l + 1, l + 2)));
            }
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {eta}")));
        }
        Ok(DeepLinState { weights, x_alpha: linalg::symmetrize(&x_alpha), step: 0, eta })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// `W = W_L ⋯ W_1`.
    pub fn product(&self) -> Array2<f64> {
        product(&self.weights, 0, self.depth(), self.x_alpha.nrows())
    }

    /// `2E = tr(W X_α Wᵀ)`.
    pub fn two_energy(&self) -> f64 {
        two_energy(&self.weights, &self.x_alpha)
    }
}

/// `weights[hi-1] ⋯ weights[lo]`, identity of order `dim` when empty.
fn product(weights: &[Array2<f64>], lo: usize, hi: usize, dim: usize) -> Array2<f64> {
    linalg::chain_product(weights, lo, hi, dim)
}

pub fn two_energy(weights: &[Array2<f64>], x_alpha: &Array2<f64>) -> f64 {
    let w = product(weights, 0, weights.len(), x_alpha.nrows());
    w.dot(x_alpha).dot(&w.t()).diag().sum()
}

/// `X_α = C_α[x, x]` of the batch inputs, symmetrised.
pub fn build_x_alpha(pi: &PairImportance, batch: &Batch) -> Result<Array2<f64>> {
    Ok(ContrastiveCov::from_inputs(pi, &batch.inputs.view(), &batch.inputs_aug.view())?.matrix)
}

/// `Ẇ_l` for every layer, all from the same weights.
pub fn velocities(weights: &[Array2<f64>], x_alpha: &Array2<f64>) -> Vec<Array2<f64>> {
    let depth = weights.len();
    let n0 = x_alpha.nrows();
    // below[l] = W_{<l} X W_{<l}ᵀ, built up from the input side.
    let mut below = Vec::with_capacity(depth);
    let mut prefix = Array2::<f64>::eye(n0);
    for w in weights {
        below.push(prefix.dot(x_alpha).dot(&prefix.t()));
        prefix = w.dot(&prefix);
    }
    let mut out = vec![Array2::zeros((0, 0)); depth];
    let n_out = weights[depth - 1].nrows();
    let mut suffix = Array2::<f64>::eye(n_out);
    for l in (0..depth).rev() {
        let above = suffix.t().dot(&suffix);
        out[l] = above.dot(&weights[l]).dot(&below[l]);
        suffix = suffix.dot(&weights[l]);
    }
    out
}

/// Projects weights onto the constraint set in place.
pub fn project(weights: &mut [Array2<f64>], constraint: Constraint) {
    let depth = weights.len();
    match constraint {
        Constraint::None => {}
        Constraint::Frobenius => {
            for w in weights.iter_mut() {
                let n = frobenius_norm(&w.view());
                if n > 0.0 {
                    w.mapv_inplace(|v| v / n);
                }
            }
        }
        Constraint::PerFilter => {
            for (l, w) in weights.iter_mut().enumerate() {
                if l + 1 == depth {
                    let n = frobenius_norm(&w.view());
                    if n > 0.0 {
                        w.mapv_inplace(|v| v / n);
                    }
                } else {
                    let target = 1.0 / (w.nrows() as f64).sqrt();
                    for mut row in w.axis_iter_mut(Axis(0)) {
                        let n = row.dot(&row).sqrt();
                        if n > 0.0 {
                            row.mapv_inplace(|v| v * target / n);
                        }
                    }
                }
            }
        }
    }
}

/// One simultaneous explicit Euler step followed by projection.
pub fn flow_step(state: &DeepLinState, constraint: Constraint) -> Result<DeepLinState> {
    let mut next = state.clone();
    next.step += 1;
    if state.eta == 0.0 {
        return Ok(next);
    }
    let v = velocities(&state.weights, &state.x_alpha);
    for (w, dw) in next.weights.iter_mut().zip(&v) {
        w.scaled_add(state.eta, dw);
    }
    project(&mut next.weights, constraint);
    if next.weights.iter().any(|w| w.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite { step: next.step, detail: format!("weights diverged at eta = {}", state.eta) });
    }
    Ok(next)
}

/// I.i.d. Gaussian weights for widths `dims = [n_0, …, n_L]`, projected.
pub fn random_weights(rng: &mut impl Rng, dims: &[usize], constraint: Constraint) -> Vec<Array2<f64>> {
    let mut w: Vec<Array2<f64>> = dims.windows(2).map(|d| gaussian_matrix(rng, d[1], d[0], 1.0)).collect();
    let c = if constraint == Constraint::None { Constraint::Frobenius } else { constraint };
    project(&mut w, c);
    w
}

// ── Runs and diagnostics ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub eta: f64,
    pub max_steps: usize,
    /// Stop once `|2E_t − 2E_{t−1}| < tol`.
    pub tol: f64,
    pub constraint: Constraint,
    /// Halve `η` whenever a step would decrease `2E`.
    pub backtrack: bool,
    /// Singular values and drift are recorded every `record_every` steps
    /// (and at the last step); `2E` is recorded every step.
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            eta: 1e-2,
            max_steps: 50_000,
            tol: 1e-10,
            constraint: Constraint::Frobenius,
            backtrack: true,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowDiagnostics {
    /// `2E` after every accepted step; entry 0 is the initial state.
    pub energy_trace: Vec<f64>,
    /// Steps at which singular values and drift were recorded.
    pub recorded_steps: Vec<usize>,
    /// Per recorded step, per layer `(σ₁, σ₂)`.
    pub top_two_singulars: Vec<Vec<(f64, f64)>>,
    /// Per recorded step, the largest balancedness drift over interfaces.
    pub balancedness_drift: Vec<f64>,
    pub converged: bool,
    pub final_eta: f64,
    pub halvings: usize,
}

impl FlowDiagnostics {
    fn record(&mut self, state: &DeepLinState, initial: &[Array2<f64>]) {
        self.recorded_steps.push(state.step);
        self.top_two_singulars.push(state.weights.iter().map(|w| svd(&w.view()).top_two()).collect());
        let drift = interface_terms(&state.weights)
            .iter()
            .zip(interface_terms(initial))
            .map(|(now, start)| frobenius_norm(&(now - &start).view()))
            .fold(0.0, f64::max);
        self.balancedness_drift.push(drift);
    }

    /// Rows `step, 2E, σ₁(W_1), σ₂(W_1), …, drift` at the recorded steps.
    pub fn to_csv(&self) -> String {
        let layers = self.top_two_singulars.first().map_or(0, |s| s.len());
        let mut header = vec!["step".to_string(), "two_energy".to_string()];
        for l in 1..=layers {
            header.push(format!("sigma1_w{l}"));
            header.push(format!("sigma2_w{l}"));
        }
        header.push("drift".into());
        let mut out = header.join(",");
        out.push('\n');
        for (r, &step) in self.recorded_steps.iter().enumerate() {
            let mut cells = vec![step.to_string(), crate::export::fmt_f64(self.energy_trace[step])];
            for &(s1, s2) in &self.top_two_singulars[r] {
                cells.push(crate::export::fmt_f64(s1));
                cells.push(crate::export::fmt_f64(s2));
            }
            cells.push(crate::export::fmt_f64(self.balancedness_drift[r]));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `W_l W_lᵀ − W_{l+1}ᵀ W_{l+1}` for each interface `l = 1 … L−1`.
fn interface_terms(weights: &[Array2<f64>]) -> Vec<Array2<f64>> {
    weights.windows(2).map(|p| p[0].dot(&p[0].t()) - p[1].t().dot(&p[1])).collect()
}

/// Frobenius drift of each conserved interface quantity from `initial`.
pub fn balancedness_residual(state: &DeepLinState, initial: &DeepLinState) -> Result<Vec<f64>> {
    if state.depth() != initial.depth() {
        return Err(shape_err(format!("{} layers vs {} initial layers", state.depth(), initial.depth())));
    }
    Ok(interface_terms(&state.weights)
        .iter()
        .zip(interface_terms(&initial.weights))
        .map(|(a, b)| frobenius_norm(&(a - &b).view()))
        .collect())
}

/// Iterates [`flow_step`] until the energy settles or `max_steps` is hit.
pub fn run_flow(initial: Vec<Array2<f64>>, x_alpha: Array2<f64>, cfg: &FlowConfig) -> Result<(DeepLinState, FlowDiagnostics)> {
    if cfg.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be >= 1".into()));
    }
    let mut state = DeepLinState::new(initial, x_alpha, cfg.eta)?;
    let start = state.weights.clone();
    let mut diag = FlowDiagnostics { energy_trace: vec![state.two_energy()], ..Default::default() };
    diag.record(&state, &start);
    for _ in 0..cfg.max_steps {
        let before = *diag.energy_trace.last().unwrap();
        let mut next = flow_step(&state, cfg.constraint)?;
        let mut after = next.two_energy();
        if cfg.backtrack {
            while after < before && state.eta > f64::MIN_POSITIVE {
                state.eta *= 0.5;
                diag.halvings += 1;
                next = flow_step(&state, cfg.constraint)?;
                after = next.two_energy();
            }
        }
        state = next;
        diag.energy_trace.push(after);
        let settled = (after - before).abs() < cfg.tol;
        if state.step % cfg.record_every == 0 || settled {
            diag.record(&state, &start);
        }
        if settled {
            diag.converged = true;
            break;
        }
    }
    if diag.recorded_steps.last() != Some(&state.step) {
        diag.record(&state, &start);
    }
    diag.final_eta = state.eta;
    Ok((state, diag))
}

// ── Alignment ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// `σ₂/σ₁` per layer.
    pub sigma_ratios: Vec<f64>,
    /// `v_0, v_1, …, v_L`: the right singular vector of `W_1`, then the left
    /// singular vector of every layer.
    pub chain: Vec<Array1<f64>>,
    /// `|⟨u(W_l), v(W_{l+1})⟩|` per interface; 1 for an aligned chain.
    pub chain_cosines: Vec<f64>,
    /// `|cos(v_0, reference)|`.
    pub input_cosine: f64,
    /// Largest `| |v_l[k]| − 1/√n_l |` over hidden layers, per-filter mode only.
    pub per_filter_deviation: Option<f64>,
    /// `λ₁ − λ₂` of `W_{>1}ᵀ W_{>1}`; positive means the top eigenvalue is
    /// distinct.
    pub upper_gram_gap: f64,
}

impl AlignmentReport {
    pub fn is_aligned(&self, ratio_tol: f64, cos_tol: f64) -> bool {
        self.sigma_ratios.iter().all(|&r| r <= ratio_tol)
            && self.chain_cosines.iter().all(|&c| c >= 1.0 - cos_tol)
            && self.input_cosine >= 1.0 - cos_tol
    }

    pub fn max_sigma_ratio(&self) -> f64 {
        self.sigma_ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Rank-one alignment diagnostics. Without a reference the top eigenvector
/// of `X_α` is used.
pub fn check_alignment(state: &DeepLinState, reference: Option<&Array1<f64>>, per_filter: bool) -> Result<AlignmentReport> {
    let reference = match reference {
        Some(r) => {
            if r.len() != state.x_alpha.nrows() {
                return Err(shape_err(format!("reference of length {} for input width {}", r.len(), state.x_alpha.nrows())));
            }
            r.clone()
        }
        None => sym_eigen(&state.x_alpha.view())?.top_vector(),
    };
    let decomps: Vec<_> = state.weights.iter().map(|w| svd(&w.view())).collect();
    let sigma_ratios = decomps
        .iter()
        .map(|d| {
            let (s1, s2) = d.top_two();
            if s1 > 0.0 {
                s2 / s1
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut chain = vec![decomps[0].v.column(0).to_owned()];
    chain.extend(decomps.iter().map(|d| d.u.column(0).to_owned()));
    let chain_cosines = decomps
        .windows(2)
        .map(|p| p[0].u.column(0).dot(&p[1].v.column(0)).abs())
        .collect();
    let input_cosine = unit_cos(&chain[0].view(), &reference.view());
    let per_filter_deviation = per_filter.then(|| {
        let mut dev: f64 = 0.0;
        for v in &chain[1..state.depth()] {
            let target = 1.0 / (v.len() as f64).sqrt();
            for &x in v {
                dev = dev.max((x.abs() - target).abs());
            }
        }
        dev
    });
    let upper = product(&state.weights, 1, state.depth(), state.weights[0].nrows());
    let upper_gram_gap = sym_eigen(&upper.t().dot(&upper).view())?.top_gap();
    Ok(AlignmentReport { sigma_ratios, chain, chain_cosines, input_cosine, per_filter_deviation, upper_gram_gap })
}

fn unit_cos(a: &ndarray::ArrayView1<f64>, b: &ndarray::ArrayView1<f64>) -> f64 {
    let d = (a.dot(a) * b.dot(b)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        a.dot(b).abs() / d
    }
}

/// Random symmetric `n×n` matrix with `λ_max = top` and every other
/// eigenvalue at most `top − gap`, drawn from `[lo, top − gap]`.
pub fn random_x_alpha(rng: &mut impl Rng, n: usize, top: f64, gap: f64, lo: f64) -> Array2<f64> {
    let mut spectrum = vec![top];
    for _ in 1..n {
        spectrum.push(rng.random_range(lo..=(top - gap)));
    }
    linalg::random_symmetric_with_spectrum(rng, &spectrum)
}

/// `λ_max(X_α)` via the Jacobi oracle.
pub fn lambda_max(x_alpha: &ArrayView2<f64>) -> Result<f64> {
    Ok(sym_eigen(x_alpha)?.top_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform_matrix};
    use crate::testutil::{assert_fd_close, fd_grad};
    use ndarray::array;

    #[test]
    fn velocity_is_energy_gradient() {
        let mut rng = seeded(1);
        let w = random_weights(&mut rng, &[4, 3, 5, 2], Constraint::Frobenius);
        let x = random_x_alpha(&mut rng, 4, 1.0, 0.2, -1.0);
        let v = velocities(&w, &x);
        for l in 0..3 {
            let fd = fd_grad(
                |wl| {
                    let mut ws = w.clone();
                    ws[l] = wl.clone();
                    0.5 * two_energy(&ws, &x)
                },
                &w[l],
            );
            assert_fd_close(&v[l], &fd);
        }
    }

    #[test]
    fn zero_eta_is_identity() {
        let mut rng = seeded(2);
        let w = random_weights(&mut rng, &[3, 3], Constraint::Frobenius);
        let s = DeepLinState::new(w, Array2::eye(3), 0.0).unwrap();
        let n = flow_step(&s, Constraint::Frobenius).unwrap();
        assert_eq!(n.weights, s.weights);
    }

    #[test]
    fn single_layer_finds_top_eigenvector() {
        let x = array![[2.0, 0.0], [0.0, 1.0]];
        let w = vec![array![[0.6, 0.8]]];
        let cfg = FlowConfig { eta: 0.1, ..Default::default() };
        let (s, d) = run_flow(w, x, &cfg).unwrap();
        assert!(d.converged);
        assert!((s.weights[0][[0, 0]].abs() - 1.0).abs() < 1e-5);
        assert!((s.two_energy() - 2.0).abs() < 1e-8);
        assert!(d.energy_trace.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn orthogonal_init_stalls() {
        let x = array![[2.0, 0.0], [0.0, 1.0]];
        let cfg = FlowConfig { eta: 0.1, max_steps: 500, ..Default::default() };
        let (s, _) = run_flow(vec![array![[0.0, 1.0]]], x, &cfg).unwrap();
        assert_eq!(s.weights[0], array![[0.0, 1.0]]);
        assert_eq!(s.two_energy(), 1.0);
    }

    #[test]
    fn energy_matches_encoder_path() {
        use crate::energy::energy;
        use crate::rng::gaussian_matrix;
        let mut rng = seeded(3);
        let x = gaussian_matrix(&mut rng, 6, 4, 1.0);
        let xa = &x + &gaussian_matrix(&mut rng, 6, 4, 0.4);
        let pi = PairImportance::new(uniform_matrix(&mut rng, 6, 6, 0.1, 1.0)).unwrap();
        let batch = Batch::new(x.clone(), xa.clone()).unwrap();
        let xalpha = build_x_alpha(&pi, &batch).unwrap();
        let w = random_weights(&mut rng, &[4, 5, 3], Constraint::Frobenius);
        let s = DeepLinState::new(w, xalpha, 0.0).unwrap();
        let p = s.product();
        let via_outputs = energy(&pi, &x.dot(&p.t()).view(), &xa.dot(&p.t()).view()).unwrap();
        assert!((via_outputs - 0.5 * s.two_energy()).abs() < 1e-10);
    }

    #[test]
    fn x_alpha_sign_structure() {
        let mut rng = seeded(4);
        let x = crate::rng::gaussian_matrix(&mut rng, 5, 3, 1.0);
        let b = Batch::new(x.clone(), x.clone()).unwrap();
        let xa = build_x_alpha(&PairImportance::uniform(5).unwrap(), &b).unwrap();
        assert!(sym_eigen(&xa.view()).unwrap().values.iter().all(|&l| l >= -1e-12));
        let zero = build_x_alpha(&PairImportance::new(Array2::zeros((5, 5))).unwrap(), &b).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        // Two samples close together whose views are far apart.
        let x = array![[0.0, 0.0], [0.1, 0.0]];
        let xa = array![[0.0, 3.0], [0.1, -3.0]];
        let xm = build_x_alpha(&PairImportance::uniform(2).unwrap(), &Batch::new(x, xa).unwrap()).unwrap();
        assert!(sym_eigen(&xm.view()).unwrap().values.iter().any(|&l| l < 0.0));
    }

    #[test]
    fn hand_built_aligned_chain() {
        let v0 = array![0.6, 0.8];
        let v1 = array![1.0, 0.0, 0.0];
        let v2 = array![0.0, 1.0];
        let outer = |a: &Array1<f64>, b: &Array1<f64>| {
            a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
        };
        let w = vec![outer(&v1, &v0), outer(&v2, &v1)];
        let s = DeepLinState::new(w, Array2::eye(2), 0.0).unwrap();
        let rep = check_alignment(&s, Some(&v0), false).unwrap();
        assert!(rep.is_aligned(1e-12, 1e-12));
        assert!((rep.input_cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_filter_projection() {
        let mut rng = seeded(5);
        let w = random_weights(&mut rng, &[3, 4, 2], Constraint::PerFilter);
        for row in w[0].rows() {
            assert!((row.dot(&row) - 0.25).abs() < 1e-14);
        }
        assert!((frobenius_norm(&w[1].view()) - 1.0).abs() < 1e-14);
        assert!((frobenius_norm(&w[0].view()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unconstrained_drift_is_second_order() {
        let mut rng = seeded(6);
        let w = random_weights(&mut rng, &[4, 4, 4], Constraint::Frobenius);
        let x = random_x_alpha(&mut rng, 4, 1.0, 0.1, -0.5);
        let s0 = DeepLinState::new(w, x, 1e-3).unwrap();
        let s1 = flow_step(&s0, Constraint::None).unwrap();
        let g = velocities(&s0.weights, &s0.x_alpha);
        let exact = &g[0].dot(&g[0].t()) - &g[1].t().dot(&g[1]);
        let want = frobenius_norm(&exact.view()) * 1e-6;
        let got = balancedness_residual(&s1, &s0).unwrap()[0];
        assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    }
}
