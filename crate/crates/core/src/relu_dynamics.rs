//! Two-layer ReLU dynamics on orthogonal-mixture data.
//!
//! Inputs are nonnegative and one-hot, `x_i = a_i e_{m_i}`, and the
//! augmentation only rescales, `x_i' = γ_i x_i`. With `W_1 ≥ 0` every gate
//! that matters is open, so the ReLU network follows the linear two-layer
//! flow except that a first-layer weight which reaches zero stays there.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::energy::ContrastiveCov;
use crate::error::{shape_err, Error, Result};
use crate::grad_engine::{ascent_direction, Activation, AlphaSource, Encoder, Head, Layer, Objective};
use crate::importance::PairImportance;
use crate::linalg::{frobenius_norm, svd, sym_eigen};
use crate::loss_family::Batch;
use crate::rng::{gaussian_matrix, seeded};

/// Entries of `W_1` at or below this are treated as stuck at zero.
pub const STICKY_THRESHOLD: f64 = 1e-12;
/// Relative singular-value threshold for the numerical rank of `W_1`.
pub const RANK_THRESHOLD: f64 = 1e-6;

// ── Data ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureConfig {
    pub modes: usize,
    pub samples: usize,
    /// Uniform range of the amplitudes `a_i`.
    pub amplitude: (f64, f64),
    /// Uniform range of the augmentation scales `γ_i`.
    pub gamma: (f64, f64),
    pub seed: u64,
}

impl MixtureConfig {
    pub fn new(modes: usize, samples: usize, seed: u64) -> Self {
        MixtureConfig { modes, samples, amplitude: (0.5, 1.5), gamma: (0.5, 1.5), seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub batch: Batch,
    /// Mode index of every sample.
    pub modes: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub gammas: Vec<f64>,
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
    }
    Ok(())
}

fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// The first `M` samples cover every mode once; the rest pick modes
/// uniformly.
pub fn generate_mixture(cfg: &MixtureConfig) -> Result<Mixture> {
    if cfg.modes < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 modes, got {}", cfg.modes)));
    }
    if cfg.samples < cfg.modes {
        return Err(Error::InvalidParameter(format!(
            "{} samples cannot cover {} modes",
            cfg.samples, cfg.modes
        )));
    }
    check_range("amplitude", cfg.amplitude)?;
    check_range("gamma", cfg.gamma)?;
    let mut rng = seeded(cfg.seed);
    let (n, m) = (cfg.samples, cfg.modes);
    let mut x = Array2::zeros((n, m));
    let mut xa = Array2::zeros((n, m));
    let mut modes = Vec::with_capacity(n);
    let mut amplitudes = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    for i in 0..n {
        let mode = if i < m { i } else { rng.random_range(0..m) };
        let a = sample_range(&mut rng, cfg.amplitude);
        let g = sample_range(&mut rng, cfg.gamma);
        x[[i, mode]] = a;
        xa[[i, mode]] = g * a;
        modes.push(mode);
        amplitudes.push(a);
        gammas.push(g);
    }
    Ok(Mixture { batch: Batch::new(x, xa)?, modes, amplitudes, gammas })
}

// ── State and steps ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Relu2State {
    /// `K × M`, nonnegative.
    pub w1: Array2<f64>,
    /// `out × K`.
    pub w2: Array2<f64>,
    pub eta: f64,
    pub step: usize,
}

impl Relu2State {
    pub fn new(w1: Array2<f64>, w2: Array2<f64>, eta: f64) -> Result<Self> {
        if w2.ncols() != w1.nrows() {
            return Err(shape_err(format!("W2 {:?} does not follow W1 {:?}", w2.dim(), w1.dim())));
        }
        if w1.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("W1 must be nonnegative".into()));
        }
        Ok(Relu2State { w1, w2, eta, step: 0 })
    }

    /// `|Gaussian|` first layer and Gaussian second layer, both on the unit
    /// Frobenius sphere.
    pub fn random(rng: &mut impl Rng, hidden: usize, modes: usize, out: usize, eta: f64) -> Self {
        let w1 = gaussian_matrix(rng, hidden, modes, 1.0).mapv(f64::abs);
        let w2 = gaussian_matrix(rng, out, hidden, 1.0);
        Relu2State { w1: unit(w1), w2: unit(w2), eta, step: 0 }
    }

    /// `tr(W_2 W_1 X_α W_1ᵀ W_2ᵀ)`.
    pub fn two_energy(&self, x_alpha: &Array2<f64>) -> f64 {
        let w = self.w2.dot(&self.w1);
        w.dot(x_alpha).dot(&w.t()).diag().sum()
    }

    pub fn encoder(&self) -> Encoder {
        Encoder {
            layers: vec![
                Layer { weight: self.w1.clone(), activation: Activation::Relu },
                Layer { weight: self.w2.clone(), activation: Activation::Linear },
            ],
            head: Head::None,
        }
    }

    /// Number of strictly positive entries of `W_1`.
    pub fn support(&self) -> usize {
        self.w1.iter().filter(|&&v| v > 0.0).count()
    }
}

fn unit(m: Array2<f64>) -> Array2<f64> {
    let n = frobenius_norm(&m.view());
    if n > 0.0 {
        m / n
    } else {
        m
    }
}

/// `(f_1, z)` with `f_1 = max(W_1 x, 0)` and `z = W_2 f_1`, samples in rows.
pub fn relu_forward(state: &Relu2State, x: &ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.ncols() != state.w1.ncols() {
        return Err(shape_err(format!("input width {} for W1 {:?}", x.ncols(), state.w1.dim())));
    }
    let f1 = x.dot(&state.w1.t()).mapv(|v| v.max(0.0));
    let z = f1.dot(&state.w2.t());
    Ok((f1, z))
}

fn check_x_alpha(state: &Relu2State, x_alpha: &Array2<f64>) -> Result<()> {
    let m = state.w1.ncols();
    if x_alpha.dim() != (m, m) {
        return Err(shape_err(format!("X_alpha {:?} for {m} modes", x_alpha.dim())));
    }
    Ok(())
}

/// Linear two-layer step with the sticky rule: entries of `W_1` at zero get
/// no update, entries pushed below zero are clamped to exactly zero, then
/// both layers are renormalised.
pub fn sticky_flow_step(state: &Relu2State, x_alpha: &Array2<f64>) -> Result<Relu2State> {
    check_x_alpha(state, x_alpha)?;
    let (w1, w2) = (&state.w1, &state.w2);
    let mut v1 = w2.t().dot(w2).dot(w1).dot(x_alpha);
    let v2 = w2.dot(w1).dot(x_alpha).dot(&w1.t());
    ndarray::Zip::from(&mut v1).and(w1).for_each(|v, &w| {
        if w <= STICKY_THRESHOLD {
            *v = 0.0;
        }
    });
    let mut n1 = w1 + &(&v1 * state.eta);
    n1.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
    let n2 = w2 + &(&v2 * state.eta);
    finish(state, n1, n2)
}

fn finish(state: &Relu2State, w1: Array2<f64>, w2: Array2<f64>) -> Result<Relu2State> {
    let next = Relu2State { w1: unit(w1), w2: unit(w2), eta: state.eta, step: state.step + 1 };
    if next.w1.iter().chain(next.w2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: next.step, detail: "relu weights diverged".into() });
    }
    Ok(next)
}

/// The same step computed by backpropagation through the actual ReLU
/// network with `α` fixed, followed by the same clamp and renormalisation.
pub fn relu_gradient_step(state: &Relu2State, batch: &Batch, pi: &PairImportance) -> Result<Relu2State> {
    let enc = state.encoder();
    let obj = Objective::AlphaCl(AlphaSource::Fixed(pi.clone()));
    let dir = ascent_direction(&enc, &batch.inputs.view(), &batch.inputs_aug.view(), &obj)?;
    let mut n1 = &state.w1 + &(&dir.grads[0] * state.eta);
    n1.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
    let n2 = &state.w2 + &(&dir.grads[1] * state.eta);
    finish(state, n1, n2)
}

/// `X_α` of a mixture batch.
pub fn mixture_x_alpha(pi: &PairImportance, batch: &Batch) -> Result<Array2<f64>> {
    Ok(ContrastiveCov::from_inputs(pi, &batch.inputs.view(), &batch.inputs_aug.view())?.matrix)
}

// ── Runs ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct StickyRunConfig {
    pub max_steps: usize,
    /// Stop once the largest entry change of a step is below `tol`.
    pub tol: f64,
    /// Stop as soon as `W_1` has a single positive entry.
    pub stop_at_one_hot: bool,
    /// Record `W_1` and `2E` every this many steps (0 disables).
    pub record_every: usize,
}

impl Default for StickyRunConfig {
    fn default() -> Self {
        StickyRunConfig { max_steps: 200_000, tol: 1e-13, stop_at_one_hot: false, record_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickyRun {
    pub state: Relu2State,
    pub converged: bool,
    /// `(step, 2E, W_1 entries row-major)` at the recorded steps.
    pub trace: Vec<(usize, f64, Vec<f64>)>,
}

impl StickyRun {
    pub fn to_csv(&self) -> String {
        let (k, m) = self.state.w1.dim();
        let mut header = vec!["step".to_string(), "two_energy".to_string()];
        for r in 0..k {
            for c in 0..m {
                header.push(format!("w1_{r}_{c}"));
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for (step, e, w) in &self.trace {
            let mut cells = vec![step.to_string(), crate::export::fmt_f64(*e)];
            cells.extend(w.iter().map(|&v| crate::export::fmt_f64(v)));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn run_sticky(initial: Relu2State, x_alpha: &Array2<f64>, cfg: &StickyRunConfig) -> Result<StickyRun> {
    let mut state = initial;
    let mut trace = Vec::new();
    let record = |s: &Relu2State, trace: &mut Vec<_>| {
        trace.push((s.step, s.two_energy(x_alpha), s.w1.iter().copied().collect::<Vec<f64>>()));
    };
    if cfg.record_every > 0 {
        record(&state, &mut trace);
    }
    let mut converged = false;
    for _ in 0..cfg.max_steps {
        if cfg.stop_at_one_hot && state.support() == 1 {
            converged = true;
            break;
        }
        let next = sticky_flow_step(&state, x_alpha)?;
        let change = next
            .w1
            .iter()
            .zip(state.w1.iter())
            .chain(next.w2.iter().zip(state.w2.iter()))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        state = next;
        if cfg.record_every > 0 && state.step % cfg.record_every == 0 {
            record(&state, &mut trace);
        }
        if !cfg.stop_at_one_hot && change < cfg.tol {
            converged = true;
            break;
        }
    }
    if cfg.stop_at_one_hot && state.support() == 1 {
        converged = true;
    }
    if cfg.record_every > 0 && trace.last().map(|t| t.0) != Some(state.step) {
        record(&state, &mut trace);
    }
    Ok(StickyRun { state, converged, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneNodeRun {
    pub seed: u64,
    pub w1: Array1<f64>,
    /// Mode of the closest coordinate vector.
    pub winner: usize,
    /// `‖w_1 − e_winner‖`.
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Single hidden unit: runs from `seeds.len()` random nonnegative starts.
pub fn one_node_experiment(
    x_alpha: &Array2<f64>,
    seeds: &[u64],
    eta: f64,
    max_steps: usize,
) -> Result<Vec<OneNodeRun>> {
    let m = x_alpha.nrows();
    let cfg = StickyRunConfig { max_steps, stop_at_one_hot: true, ..Default::default() };
    seeds
        .iter()
        .map(|&seed| {
            let mut rng = seeded(seed);
            let init = Relu2State::random(&mut rng, 1, m, 1, eta);
            let run = run_sticky(init, x_alpha, &cfg)?;
            let w1 = run.state.w1.row(0).to_owned();
            let winner = w1.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
            let residual =
                w1.iter().enumerate().map(|(i, &v)| (v - if i == winner { 1.0 } else { 0.0 }).powi(2)).sum::<f64>().sqrt();
            Ok(OneNodeRun { seed, w1, winner, residual, steps: run.state.step, converged: run.converged })
        })
        .collect()
}

/// Number of runs won by each mode.
pub fn winner_histogram(runs: &[OneNodeRun], modes: usize) -> Vec<usize> {
    let mut h = vec![0; modes];
    for r in runs {
        h[r.winner] += 1;
    }
    h
}

// ── Classification ──────────────────────────────────────────────────────────

/// Shape of a converged first layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Diversity {
    /// `W_1 = v e_mᵀ` with `v ≥ 0`.
    Rank1SingleMode { v: Array1<f64>, mode: usize },
    /// Numerical rank above one.
    HigherRank { rank: usize },
    /// Rank one but spread over several modes; converged states should never
    /// land here.
    Rank1MultiMode { modes: Vec<usize> },
}

impl Diversity {
    pub fn is_violation(&self) -> bool {
        matches!(self, Diversity::Rank1MultiMode { .. })
    }
}

/// Classifies a converged `W_1`; declines when `E ≤ 0`.
pub fn diversity_classify(state: &Relu2State, x_alpha: &Array2<f64>) -> Result<Diversity> {
    check_x_alpha(state, x_alpha)?;
    let e = state.two_energy(x_alpha);
    if !(e > 0.0) {
        return Err(Error::InvalidParameter(format!("classification needs positive energy, got 2E = {e}")));
    }
    Ok(classify_w1(&state.w1))
}

pub fn classify_w1(w1: &Array2<f64>) -> Diversity {
    let d = svd(&w1.view());
    let rank = d.numerical_rank(RANK_THRESHOLD);
    if rank > 1 {
        return Diversity::HigherRank { rank };
    }
    let s1 = d.singular_values.first().copied().unwrap_or(0.0);
    let active: Vec<usize> = (0..w1.ncols())
        .filter(|&c| {
            let col = w1.column(c);
            col.dot(&col).sqrt() > RANK_THRESHOLD * s1
        })
        .collect();
    if active.len() == 1 {
        let mode = active[0];
        Diversity::Rank1SingleMode { v: w1.column(mode).to_owned(), mode }
    } else {
        Diversity::Rank1MultiMode { modes: active }
    }
}

// ── X_α structure ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct XAlphaStructure {
    /// Why the check did not apply, if it did not.
    pub skipped: Option<String>,
    /// Largest off-diagonal entry; negative when the first property holds.
    pub max_off_diagonal: f64,
    /// Smallest entry of the top eigenvector (sign chosen so the largest
    /// magnitude entry is positive).
    pub min_top_eigvec_entry: f64,
    pub top_eigvec: Array1<f64>,
}

impl XAlphaStructure {
    pub fn off_diagonal_negative(&self) -> bool {
        self.max_off_diagonal < 0.0
    }

    pub fn top_eigvec_has_negative(&self) -> bool {
        self.min_top_eigvec_entry < 0.0
    }

    pub fn passed(&self) -> bool {
        self.skipped.is_none() && self.off_diagonal_negative() && self.top_eigvec_has_negative()
    }
}

/// Sign structure of `X_α` on one-hot data with modes in columns.
pub fn xalpha_structure_check(pi: &PairImportance, batch: &Batch) -> Result<XAlphaStructure> {
    let x = &batch.inputs;
    let m = x.ncols();
    let skip = |why: String| XAlphaStructure {
        skipped: Some(why),
        max_off_diagonal: f64::NAN,
        min_top_eigvec_entry: f64::NAN,
        top_eigvec: Array1::zeros(0),
    };
    if m < 2 {
        return Ok(skip(format!("{m} mode(s); need at least 2")));
    }
    let alpha = pi.alpha();
    let n = pi.len();
    if n != x.nrows() {
        return Err(shape_err(format!("importance for {n} samples, batch has {}", x.nrows())));
    }
    if (0..n).any(|i| (0..n).any(|j| i != j && !(alpha[[i, j]] > 0.0))) {
        return Ok(skip("some off-diagonal importance is not positive".into()));
    }
    let covered = x.axis_iter(Axis(1)).all(|col| col.iter().any(|&v| v > 0.0));
    if !covered {
        return Ok(skip("not every mode appears in the batch".into()));
    }
    let xa = mixture_x_alpha(pi, batch)?;
    let mut max_off = f64::NEG_INFINITY;
    for r in 0..m {
        for c in 0..m {
            if r != c {
                max_off = max_off.max(xa[[r, c]]);
            }
        }
    }
    let mut v = sym_eigen(&xa.view())?.top_vector();
    let lead = v.iter().copied().fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if lead < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    let min_entry = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(XAlphaStructure { skipped: None, max_off_diagonal: max_off, min_top_eigvec_entry: min_entry, top_eigvec: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep_linear::{flow_step, Constraint, DeepLinState};
    use crate::linalg::max_abs_diff;
    use crate::rng::uniform_matrix;
    use ndarray::array;

    fn setup(seed: u64, m: usize, n: usize) -> (Mixture, PairImportance, Array2<f64>) {
        let mix = generate_mixture(&MixtureConfig::new(m, n, seed)).unwrap();
        let mut rng = seeded(seed ^ 0xABCD);
        let pi = PairImportance::new(uniform_matrix(&mut rng, n, n, 0.2, 1.0)).unwrap();
        let xa = mixture_x_alpha(&pi, &mix.batch).unwrap();
        (mix, pi, xa)
    }

    #[test]
    fn mixture_contract() {
        let mix = generate_mixture(&MixtureConfig::new(3, 6, 1)).unwrap();
        let b = &mix.batch;
        for i in 0..6 {
            let pos: Vec<usize> = (0..3).filter(|&c| b.inputs[[i, c]] > 0.0).collect();
            assert_eq!(pos, vec![mix.modes[i]]);
            assert!(b.inputs.row(i).iter().all(|&v| v >= 0.0));
            let g = b.inputs_aug[[i, mix.modes[i]]] / b.inputs[[i, mix.modes[i]]];
            assert!(g > 0.0 && (g - mix.gammas[i]).abs() < 1e-12);
        }
        let cfg = MixtureConfig { gamma: (1.0, 1.0), ..MixtureConfig::new(3, 6, 2) };
        let mix = generate_mixture(&cfg).unwrap();
        assert_eq!(mix.batch.inputs, mix.batch.inputs_aug);
        assert!(generate_mixture(&MixtureConfig::new(4, 3, 0)).is_err());
        assert!(generate_mixture(&MixtureConfig::new(1, 3, 0)).is_err());
    }

    #[test]
    fn coverage_over_seeds() {
        for seed in 0..100 {
            let mix = generate_mixture(&MixtureConfig::new(5, 9, seed)).unwrap();
            for m in 0..5 {
                assert!(mix.modes.contains(&m));
            }
        }
    }

    #[test]
    fn forward_matches_linear_and_clamp_is_invisible() {
        let (mix, _, _) = setup(3, 3, 8);
        let mut rng = seeded(3);
        let s = Relu2State::random(&mut rng, 3, 3, 2, 0.1);
        let x = mix.batch.inputs.view();
        let (_, z) = relu_forward(&s, &x).unwrap();
        assert!(max_abs_diff(&z.view(), &x.dot(&s.w1.t()).dot(&s.w2.t()).view()) < 1e-15);

        // Negative entries in W1 behave like zeros on one-hot nonnegative data.
        let mut neg = s.clone();
        neg.w1[[0, 1]] = -0.3;
        let f_neg = x.dot(&neg.w1.t()).mapv(|v: f64| v.max(0.0)).dot(&neg.w2.t());
        let mut clamped = neg.clone();
        clamped.w1.mapv_inplace(|v| v.max(0.0));
        let (_, z_cl) = relu_forward(&clamped, &x).unwrap();
        assert!(max_abs_diff(&f_neg.view(), &z_cl.view()) < 1e-15);

        let (_, z0) = relu_forward(&s, &Array2::zeros((2, 3)).view()).unwrap();
        assert!(z0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interior_step_is_linear_flow() {
        let (_, _, xa) = setup(4, 3, 8);
        let mut rng = seeded(4);
        let s = Relu2State::random(&mut rng, 3, 3, 2, 0.01);
        let lin = DeepLinState::new(vec![s.w1.clone(), s.w2.clone()], xa.clone(), 0.01).unwrap();
        let a = sticky_flow_step(&s, &xa).unwrap();
        let b = flow_step(&lin, Constraint::Frobenius).unwrap();
        assert!(max_abs_diff(&a.w1.view(), &b.weights[0].view()) < 1e-12);
        assert!(max_abs_diff(&a.w2.view(), &b.weights[1].view()) < 1e-12);
    }

    #[test]
    fn zero_entries_stick() {
        let (_, _, xa) = setup(5, 3, 8);
        // Row 0 concentrates on mode 0; the off-diagonal coupling would push
        // its mode-1 component negative.
        let w1 = array![[1.0, 0.0, 0.0], [0.2, 0.3, 0.4]];
        let w2 = array![[1.0, 0.5]];
        let mut s = Relu2State::new(unit(w1), unit(w2), 0.05).unwrap();
        for _ in 0..50 {
            s = sticky_flow_step(&s, &xa).unwrap();
            assert_eq!(s.w1[[0, 1]], 0.0);
            assert_eq!(s.w1[[0, 2]], 0.0);
            assert!(s.w1.iter().all(|&v| v >= 0.0));
            assert!((frobenius_norm(&s.w1.view()) - 1.0).abs() < 1e-14);
            assert!((frobenius_norm(&s.w2.view()) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_gradient_step_matches_sticky_step() {
        let (mix, pi, xa) = setup(6, 3, 10);
        let mut rng = seeded(6);
        let mut s = Relu2State::random(&mut rng, 4, 3, 3, 0.05);
        for _ in 0..300 {
            let a = sticky_flow_step(&s, &xa).unwrap();
            let b = relu_gradient_step(&s, &mix.batch, &pi).unwrap();
            assert!(max_abs_diff(&a.w1.view(), &b.w1.view()) <= 1e-8);
            assert!(max_abs_diff(&a.w2.view(), &b.w2.view()) <= 1e-8);
            s = a;
        }
    }

    #[test]
    fn energy_through_relu_forward() {
        use crate::energy::energy;
        let (mix, pi, xa) = setup(7, 4, 9);
        let mut rng = seeded(7);
        let s = Relu2State::random(&mut rng, 3, 4, 2, 0.1);
        let (_, z) = relu_forward(&s, &mix.batch.inputs.view()).unwrap();
        let (_, za) = relu_forward(&s, &mix.batch.inputs_aug.view()).unwrap();
        let e = energy(&pi, &z.view(), &za.view()).unwrap();
        assert!((2.0 * e - s.two_energy(&xa)).abs() < 1e-10);
    }

    #[test]
    fn one_node_fixed_point_and_convergence() {
        let (_, _, xa) = setup(8, 3, 9);
        let s = Relu2State::new(array![[0.0, 1.0, 0.0]], array![[1.0]], 0.05).unwrap();
        let next = sticky_flow_step(&s, &xa).unwrap();
        assert_eq!(next.w1, s.w1);
        let runs = one_node_experiment(&xa, &(0..10).collect::<Vec<_>>(), 0.05, 200_000).unwrap();
        for r in &runs {
            assert!(r.converged && r.residual <= 1e-6, "{r:?}");
        }
        assert_eq!(winner_histogram(&runs, 3).iter().sum::<usize>(), 10);
    }

    #[test]
    fn classification_fixtures() {
        let w1 = array![[0.0, 0.6, 0.0], [0.0, 0.8, 0.0]];
        assert_eq!(classify_w1(&w1), Diversity::Rank1SingleMode { v: array![0.6, 0.8], mode: 1 });
        let w1 = array![[0.3, 0.4, 0.0], [0.6, 0.8, 0.0]];
        assert!(classify_w1(&w1).is_violation());
        let w1 = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(classify_w1(&w1), Diversity::HigherRank { rank: 2 });
        let s = Relu2State::new(array![[1.0, 0.0]], array![[1.0]], 0.1).unwrap();
        assert!(diversity_classify(&s, &array![[-1.0, 0.0], [0.0, -1.0]]).is_err());
    }

    #[test]
    fn structure_check_cases() {
        let mix = generate_mixture(&MixtureConfig::new(2, 4, 9)).unwrap();
        let rep = xalpha_structure_check(&PairImportance::uniform(4).unwrap(), &mix.batch).unwrap();
        assert!(rep.passed(), "{rep:?}");

        let x = array![[1.0], [0.5], [0.7]];
        let b = Batch::new(x.clone(), x).unwrap();
        let rep = xalpha_structure_check(&PairImportance::uniform(3).unwrap(), &b).unwrap();
        assert!(rep.skipped.is_some());
    }
}
