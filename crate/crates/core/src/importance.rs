//! Pairwise importance `α`.
//!
//! `α_ij ≥ 0` weighs how strongly sample `j` is pushed away from sample `i`.
//! It can be read off the loss gradient, obtained from a regularised linear
//! program over each row, or set directly from distances.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};
use crate::export;
use crate::loss_family::{DistanceSet, LossSpec};

/// `α` with zero diagonal and cached row sums `β_i = Σ_{j≠i} α_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairImportance {
    alpha: Array2<f64>,
    beta: Array1<f64>,
}

impl PairImportance {
    /// Wraps a square nonnegative matrix; the diagonal is forced to zero.
    pub fn new(mut alpha: Array2<f64>) -> Result<Self> {
        let (n, m) = alpha.dim();
        if n != m {
            return Err(shape_err(format!("importance must be square, got {:?}", alpha.dim())));
        }
        for i in 0..n {
            alpha[[i, i]] = 0.0;
        }
        if let Some(bad) = alpha.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("importance entries must be finite and >= 0, got {bad}")));
        }
        let beta = alpha.sum_axis(ndarray::Axis(1));
        Ok(PairImportance { alpha, beta })
    }

    /// `α_ij = w` for all `i ≠ j`.
    pub fn constant(n: usize, w: f64) -> Result<Self> {
        PairImportance::new(Array2::from_elem((n, n), w))
    }

    /// Rows summing to one: `α_ij = 1/(N−1)`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        PairImportance::constant(n, 1.0 / (n as f64 - 1.0))
    }

    pub fn alpha(&self) -> &Array2<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.alpha
    }

    /// Full `N×N` matrix, header `j0,j1,...`.
    pub fn to_csv(&self) -> String {
        export::matrix_csv(&self.alpha.view(), "j")
    }
}

/// Costs of the per-row linear program: `c_ij = d²_ij − d²_i`, zero diagonal.
pub fn costs(dist: &DistanceSet) -> Array2<f64> {
    let n = dist.len();
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { -dist.margin(i, j) })
}

/// `α_ij = φ′(ξ_i) ψ′(d²_i − d²_ij)`.
pub fn alpha_from_gradient(spec: &LossSpec, dist: &DistanceSet, xi: &Array1<f64>) -> Result<PairImportance> {
    let n = dist.len();
    if xi.len() != n {
        return Err(shape_err(format!("{} aggregates for {n} samples", xi.len())));
    }
    let mut alpha = Array2::zeros((n, n));
    for i in 0..n {
        let dphi = spec.phi(xi[i])?.1;
        for j in (0..n).filter(|&j| j != i) {
            alpha[[i, j]] = dphi * spec.psi(dist.margin(i, j))?.1;
        }
    }
    PairImportance::new(alpha)
}

/// Row budgets `τ⁻¹ ξ_i φ′(ξ_i)` of the feasible set that the gradient `α`
/// occupies; this is `ξ_i/(ξ_i+ε)` for InfoNCE.
pub fn loss_budget(spec: &LossSpec, xi: &Array1<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(xi.len());
    for (o, &x) in out.iter_mut().zip(xi.iter()) {
        *o = x * spec.phi(x)?.1 / spec.tau;
    }
    Ok(out)
}

// ── Regularised solvers ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// `τ Σ α log α`.
    Entropy,
    /// `τ/(γ−1) Σ α^{1−γ}`, `γ > 1`.
    Inverse,
    /// `τ/2 Σ α²`.
    Square,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::Entropy => "entropy",
            RegularizerKind::Inverse => "inverse",
            RegularizerKind::Square => "square",
        }
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entropy" => Ok(RegularizerKind::Entropy),
            "inverse" => Ok(RegularizerKind::Inverse),
            "square" => Ok(RegularizerKind::Square),
            _ => Err(Error::Parse(format!("unknown regularizer `{s}`"))),
        }
    }
}

/// Regulariser and row budget for the per-row problem
/// `min_α Σ_j c_ij α_ij + R(α_i·)` s.t. `Σ_{j≠i} α_ij = budget_i`, `α ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub tau: f64,
    pub gamma: f64,
    /// `None` means every row sums to one.
    pub row_budget: Option<Array1<f64>>,
}

impl RegularizerSpec {
    pub fn entropy(tau: f64) -> Self {
        RegularizerSpec { kind: RegularizerKind::Entropy, tau, gamma: 2.0, row_budget: None }
    }

    pub fn inverse(tau: f64, gamma: f64) -> Self {
        RegularizerSpec { kind: RegularizerKind::Inverse, tau, gamma, row_budget: None }
    }

    pub fn square(tau: f64) -> Self {
        RegularizerSpec { kind: RegularizerKind::Square, tau, gamma: 2.0, row_budget: None }
    }

    pub fn with_budget(mut self, budget: Array1<f64>) -> Self {
        self.row_budget = Some(budget);
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.kind == RegularizerKind::Inverse && !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if let Some(b) = &self.row_budget {
            if self.kind != RegularizerKind::Entropy {
                return Err(Error::Unsupported(format!(
                    "row budgets other than 1 need the entropy regularizer, not {}",
                    self.kind.name()
                )));
            }
            if b.len() != n {
                return Err(shape_err(format!("{} budgets for {n} rows", b.len())));
            }
            if b.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter("row budgets must be positive".into()));
            }
        }
        Ok(())
    }

    fn budget(&self, i: usize) -> f64 {
        self.row_budget.as_ref().map_or(1.0, |b| b[i])
    }
}

impl fmt::Display for RegularizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "reg={} tau={}", self.kind.name(), self.tau)?;
        if self.kind == RegularizerKind::Inverse {
            write!(f, " gamma={}", self.gamma)?;
        }
        Ok(())
    }
}

impl FromStr for RegularizerSpec {
    type Err = Error;

    /// `reg=inverse tau=0.5 gamma=2`; budgets are always 1 in text form.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = RegularizerSpec::entropy(1.0);
        for token in s.split(|ch: char| ch.is_whitespace() || ch == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            let num = || value.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{value}`")));
            match key {
                "reg" | "kind" => spec.kind = value.parse()?,
                "tau" => spec.tau = num()?,
                "gamma" => spec.gamma = num()?,
                _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
            }
        }
        spec.validate(0)?;
        Ok(spec)
    }
}

fn check_costs(costs: &ArrayView2<f64>) -> Result<usize> {
    let (n, m) = costs.dim();
    if n != m {
        return Err(shape_err(format!("costs must be square, got {:?}", costs.dim())));
    }
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    Ok(n)
}

/// Dispatches on `reg.kind`.
pub fn solve(costs: &ArrayView2<f64>, reg: &RegularizerSpec) -> Result<PairImportance> {
    match reg.kind {
        RegularizerKind::Entropy => alpha_entropy(costs, reg),
        RegularizerKind::Inverse => alpha_inverse(costs, reg),
        RegularizerKind::Square => alpha_square(costs, reg),
    }
}

/// Closed form `α_ij = b_i · softmax_j(−c_ij/τ)`.
pub fn alpha_entropy(costs: &ArrayView2<f64>, reg: &RegularizerSpec) -> Result<PairImportance> {
    let n = check_costs(costs)?;
    reg.validate(n)?;
    let mut alpha = Array2::zeros((n, n));
    for i in 0..n {
        let off: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let logits: Vec<f64> = off.iter().map(|&j| -costs[[i, j]] / reg.tau).collect();
        let row = softmax(&logits);
        let b = reg.budget(i);
        for (&j, p) in off.iter().zip(row) {
            alpha[[i, j]] = b * p;
        }
    }
    PairImportance::new(alpha)
}

/// Stationarity `α_ij = (τ/(c_ij+μ))^{1/γ}` with the multiplier `μ` found by
/// bisection on the strictly decreasing row sum.
pub fn alpha_inverse(costs: &ArrayView2<f64>, reg: &RegularizerSpec) -> Result<PairImportance> {
    let n = check_costs(costs)?;
    reg.validate(n)?;
    let mut alpha = Array2::zeros((n, n));
    for i in 0..n {
        let row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| costs[[i, j]]).collect();
        let (vals, _) = inverse_row(&row, reg.tau, reg.gamma)?;
        for (k, j) in (0..n).filter(|&j| j != i).enumerate() {
            alpha[[i, j]] = vals[k];
        }
    }
    PairImportance::new(alpha)
}

/// One row of the inverse-regularised problem; returns `(α, μ)`.
pub fn inverse_row(c: &[f64], tau: f64, gamma: f64) -> Result<(Vec<f64>, f64)> {
    const MAX_ITER: usize = 200;
    const TOL: f64 = 1e-12;
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    let eval = |mu: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = c.iter().map(|&cj| (tau / (cj + mu)).powf(1.0 / gamma)).collect();
        let s = a.iter().sum();
        (a, s)
    };
    let mut lo = -cmin + 1e-12 * cmin.abs().max(1.0);
    let (_, s_lo) = eval(lo);
    if !(s_lo >= 1.0) {
        return Err(Error::RootFinding(format!(
            "row sum {s_lo} < 1 already at the lower bracket mu = {lo}"
        )));
    }
    let mut step = 1.0_f64.max(cmin.abs());
    let mut hi = lo + step;
    let mut expansions = 0;
    while eval(hi).1 >= 1.0 {
        step *= 2.0;
        hi = lo + step;
        expansions += 1;
        if expansions > 2000 || !hi.is_finite() {
            return Err(Error::RootFinding(format!("could not bracket: mu_hi = {hi}")));
        }
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let (a, s) = eval(mid);
        if (s - 1.0).abs() <= TOL || mid == lo || mid == hi {
            return Ok((a, mid));
        }
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, s) = eval(0.5 * (lo + hi));
    Err(Error::RootFinding(format!(
        "no convergence after {MAX_ITER} iterations: bracket [{lo}, {hi}], row sum {s}, first entry {}",
        a.first().copied().unwrap_or(f64::NAN)
    )))
}

/// Euclidean projection of `−c/τ` onto the simplex, via sort and threshold.
pub fn alpha_square(costs: &ArrayView2<f64>, reg: &RegularizerSpec) -> Result<PairImportance> {
    let n = check_costs(costs)?;
    reg.validate(n)?;
    let mut alpha = Array2::zeros((n, n));
    for i in 0..n {
        let off: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let y: Vec<f64> = off.iter().map(|&j| -costs[[i, j]] / reg.tau).collect();
        for (&j, v) in off.iter().zip(project_simplex(&y)) {
            alpha[[i, j]] = v;
        }
    }
    PairImportance::new(alpha)
}

/// `argmin_{p ∈ Δ} ‖p − y‖²`.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

// ── Direct setting ──────────────────────────────────────────────────────────

/// Which distance is raised to the power `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectDistance {
    /// `‖z_i − z_j‖`.
    #[default]
    Euclidean,
    /// `sqrt(d²_ij) = ‖z_i − z_j‖/√2`.
    HalfSquareRoot,
}

impl FromStr for DirectDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euclidean" => Ok(DirectDistance::Euclidean),
            "half_square_root" => Ok(DirectDistance::HalfSquareRoot),
            _ => Err(Error::Parse(format!("unknown distance `{s}`"))),
        }
    }
}

impl fmt::Display for DirectDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectDistance::Euclidean => "euclidean",
            DirectDistance::HalfSquareRoot => "half_square_root",
        })
    }
}

/// `α_ij ∝ exp(−d_ij^p/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectAlpha {
    pub p: f64,
    pub tau: f64,
    pub normalized: bool,
    pub distance: DirectDistance,
}

impl DirectAlpha {
    pub fn new(p: f64, tau: f64, normalized: bool) -> Self {
        DirectAlpha { p, tau, normalized, distance: DirectDistance::Euclidean }
    }

    pub fn with_distance(mut self, distance: DirectDistance) -> Self {
        self.distance = distance;
        self
    }
}

pub fn alpha_direct(dist: &DistanceSet, cfg: &DirectAlpha) -> Result<PairImportance> {
    if !(cfg.p > 1.0 && cfg.p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {}", cfg.p)));
    }
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {}", cfg.tau)));
    }
    let n = dist.len();
    let scale = match cfg.distance {
        DirectDistance::Euclidean => 2.0,
        DirectDistance::HalfSquareRoot => 1.0,
    };
    let mut alpha = Array2::zeros((n, n));
    for i in 0..n {
        let off: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let logits: Vec<f64> = off
            .iter()
            .map(|&j| -(scale * dist.d2_cross[[i, j]]).sqrt().powf(cfg.p) / cfg.tau)
            .collect();
        let row = if cfg.normalized { softmax(&logits) } else { logits.iter().map(|l| l.exp()).collect() };
        for (&j, v) in off.iter().zip(row) {
            alpha[[i, j]] = v;
        }
    }
    PairImportance::new(alpha)
}

// ── Feasibility ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `|β_i − τ⁻¹ ξ_i φ′(ξ_i)|` per row.
    pub budget_residual: Vec<f64>,
    pub max_budget_residual: f64,
    pub negative_entries: usize,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.negative_entries == 0 && self.max_budget_residual <= tol
    }
}

/// Compares `α` with the feasible set induced by `spec` at aggregates `ξ`.
pub fn check_feasible(pi: &PairImportance, xi: &Array1<f64>, spec: &LossSpec) -> Result<FeasibilityReport> {
    if xi.len() != pi.len() {
        return Err(shape_err(format!("{} aggregates for {} rows", xi.len(), pi.len())));
    }
    let budget = loss_budget(spec, xi)?;
    let beta = pi.alpha.sum_axis(ndarray::Axis(1));
    let budget_residual: Vec<f64> = beta.iter().zip(budget.iter()).map(|(b, t)| (b - t).abs()).collect();
    let max_budget_residual = budget_residual.iter().copied().fold(0.0, f64::max);
    let negative_entries = pi.alpha.iter().filter(|&&v| v < 0.0).count();
    Ok(FeasibilityReport { budget_residual, max_budget_residual, negative_entries })
}
