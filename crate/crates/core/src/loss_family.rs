//! The pair-weighted contrastive loss family.
//!
//! A loss is determined by two monotonically increasing scalar functions
//! `φ` and `ψ`:
//!
//! ```text
//! L = Σ_i φ(ξ_i),   ξ_i = Σ_{j≠i} ψ(d²_i − d²_ij)
//! ```
//!
//! with the *halved* squared distances `d²_i = ‖z_i − z_i'‖²/2` (the two views
//! of one sample) and `d²_ij = ‖z_i − z_j‖²/2` (two different samples). The
//! factor ½ is part of the definition and every formula downstream relies on
//! it.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};

// ── Batch geometry ──────────────────────────────────────────────────────────

/// `N` samples in rows, each with an augmented view, plus optional encoder
/// outputs for both views.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub inputs_aug: Array2<f64>,
    pub outputs: Option<Array2<f64>>,
    pub outputs_aug: Option<Array2<f64>>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, inputs_aug: Array2<f64>) -> Result<Self> {
        if inputs.dim() != inputs_aug.dim() {
            return Err(shape_err(format!(
                "inputs {:?} and augmented inputs {:?} differ",
                inputs.dim(),
                inputs_aug.dim()
            )));
        }
        if inputs.nrows() < 2 {
            return Err(Error::TooFewSamples(inputs.nrows()));
        }
        Ok(Batch { inputs, inputs_aug, outputs: None, outputs_aug: None })
    }

    /// A batch that only carries outputs (inputs are copies of them).
    pub fn from_outputs(z: Array2<f64>, z_aug: Array2<f64>) -> Result<Self> {
        Batch::new(z.clone(), z_aug.clone())?.with_outputs(z, z_aug)
    }

    pub fn with_outputs(mut self, z: Array2<f64>, z_aug: Array2<f64>) -> Result<Self> {
        check_pair(&z.view(), &z_aug.view())?;
        if z.nrows() != self.inputs.nrows() {
            return Err(shape_err(format!(
                "{} outputs for {} inputs",
                z.nrows(),
                self.inputs.nrows()
            )));
        }
        self.outputs = Some(z);
        self.outputs_aug = Some(z_aug);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

pub(crate) fn check_pair(z: &ArrayView2<f64>, z_aug: &ArrayView2<f64>) -> Result<()> {
    if z.dim() != z_aug.dim() {
        return Err(shape_err(format!("views {:?} and {:?} differ", z.dim(), z_aug.dim())));
    }
    if z.nrows() < 2 {
        return Err(Error::TooFewSamples(z.nrows()));
    }
    Ok(())
}

/// Halved squared distances of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSet {
    /// `d²_i` between the two views of sample `i`.
    pub d2_intra: Array1<f64>,
    /// `d²_ij` between samples `i` and `j`; symmetric, zero diagonal.
    pub d2_cross: Array2<f64>,
}

impl DistanceSet {
    /// Validating constructor for hand-built distance sets.
    pub fn new(d2_intra: Array1<f64>, d2_cross: Array2<f64>) -> Result<Self> {
        let n = d2_intra.len();
        if d2_cross.dim() != (n, n) {
            return Err(shape_err(format!("cross distances {:?} for {n} samples", d2_cross.dim())));
        }
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        if d2_intra.iter().chain(d2_cross.iter()).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("distances must be finite and nonnegative".into()));
        }
        for i in 0..n {
            if d2_cross[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero self distance at {i}")));
            }
            for j in (i + 1)..n {
                if d2_cross[[i, j]] != d2_cross[[j, i]] {
                    return Err(Error::InvalidParameter(format!("asymmetric distance at ({i},{j})")));
                }
            }
        }
        Ok(DistanceSet { d2_intra, d2_cross })
    }

    pub fn from_outputs(z: &ArrayView2<f64>, z_aug: &ArrayView2<f64>) -> Result<Self> {
        check_pair(z, z_aug)?;
        let n = z.nrows();
        let mut d2_intra = Array1::zeros(n);
        let mut d2_cross = Array2::zeros((n, n));
        for i in 0..n {
            d2_intra[i] = half_sq_dist(z.row(i).iter(), z_aug.row(i).iter());
            for j in (i + 1)..n {
                let d = half_sq_dist(z.row(i).iter(), z.row(j).iter());
                d2_cross[[i, j]] = d;
                d2_cross[[j, i]] = d;
            }
        }
        Ok(DistanceSet { d2_intra, d2_cross })
    }

    pub fn len(&self) -> usize {
        self.d2_intra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d2_intra.is_empty()
    }

    /// Argument of `ψ` for pair `(i, j)`: `d²_i − d²_ij`.
    #[inline]
    pub fn margin(&self, i: usize, j: usize) -> f64 {
        self.d2_intra[i] - self.d2_cross[[i, j]]
    }
}

fn half_sq_dist<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    0.5 * a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

pub fn pairwise_distances(batch: &Batch) -> Result<DistanceSet> {
    match (&batch.outputs, &batch.outputs_aug) {
        (Some(z), Some(z_aug)) => DistanceSet::from_outputs(&z.view(), &z_aug.view()),
        _ => Err(Error::InvalidParameter("batch has no encoder outputs".into())),
    }
}

// ── Loss catalog ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    InfoNce,
    Mine,
    Triplet,
    SoftTriplet,
    NPlusOneTuplet,
    LiftedStructured,
    ModifiedTriplet,
    TripletContrastive,
    Quadratic,
}

impl LossKind {
    pub const ALL: [LossKind; 9] = [
        LossKind::InfoNce,
        LossKind::Mine,
        LossKind::Triplet,
        LossKind::SoftTriplet,
        LossKind::NPlusOneTuplet,
        LossKind::LiftedStructured,
        LossKind::ModifiedTriplet,
        LossKind::TripletContrastive,
        LossKind::Quadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::InfoNce => "infonce",
            LossKind::Mine => "mine",
            LossKind::Triplet => "triplet",
            LossKind::SoftTriplet => "soft_triplet",
            LossKind::NPlusOneTuplet => "n_plus_one_tuplet",
            LossKind::LiftedStructured => "lifted_structured",
            LossKind::ModifiedTriplet => "modified_triplet",
            LossKind::TripletContrastive => "triplet_contrastive",
            LossKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .or(match key.as_str() {
                "nce" => Some(LossKind::InfoNce),
                "tuplet" | "n+1_tuplet" => Some(LossKind::NPlusOneTuplet),
                "lifted" => Some(LossKind::LiftedStructured),
                _ => None,
            })
            .ok_or_else(|| Error::Parse(format!("unknown loss kind `{s}`")))
    }
}

/// A concrete `(φ, ψ)` pair with its hyperparameters.
///
/// `tau` is the temperature, `epsilon` the additive offset or margin, and
/// `c` the sigmoid slope of the modified triplet loss. Parameters a given
/// kind does not use are carried along and ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub tau: f64,
    pub epsilon: f64,
    pub c: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind, tau: 1.0, epsilon: 0.0, c: 1.0 }
    }

    pub fn infonce(tau: f64, epsilon: f64) -> Self {
        LossSpec { tau, epsilon, ..LossSpec::new(LossKind::InfoNce) }
    }

    pub fn quadratic() -> Self {
        LossSpec::new(LossKind::Quadratic)
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("slope c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// `(φ(x), φ′(x))`.
    pub fn phi(&self, x: f64) -> Result<(f64, f64)> {
        let LossSpec { tau, epsilon: eps, .. } = *self;
        let out = match self.kind {
            LossKind::InfoNce => {
                let arg = eps + x;
                if !(arg > 0.0) {
                    return Err(Error::Domain { function: "infonce phi", x });
                }
                (tau * arg.ln(), tau / arg)
            }
            LossKind::Mine => {
                if !(x > 0.0) {
                    return Err(Error::Domain { function: "mine phi", x });
                }
                (x.ln(), 1.0 / x)
            }
            LossKind::SoftTriplet => {
                if !(x > -1.0) {
                    return Err(Error::Domain { function: "soft triplet phi", x });
                }
                (tau * x.ln_1p(), tau / (1.0 + x))
            }
            LossKind::NPlusOneTuplet => {
                if !(x > -1.0) {
                    return Err(Error::Domain { function: "tuplet phi", x });
                }
                (x.ln_1p(), 1.0 / (1.0 + x))
            }
            LossKind::LiftedStructured => {
                if !(x > 0.0) {
                    return Err(Error::Domain { function: "lifted structured phi", x });
                }
                let l = x.ln();
                if l > 0.0 {
                    (l * l, 2.0 * l / x)
                } else {
                    (0.0, 0.0)
                }
            }
            LossKind::Triplet
            | LossKind::ModifiedTriplet
            | LossKind::TripletContrastive
            | LossKind::Quadratic => (x, 1.0),
        };
        finite_pair("phi", x, out)
    }

    /// `(ψ(x), ψ′(x))`.
    pub fn psi(&self, x: f64) -> Result<(f64, f64)> {
        let LossSpec { tau, epsilon: eps, c, .. } = *self;
        let out = match self.kind {
            LossKind::InfoNce => {
                let e = exp_checked("infonce psi", x / tau, x)?;
                (e, e / tau)
            }
            LossKind::Mine | LossKind::NPlusOneTuplet => {
                let e = exp_checked("exponential psi", x, x)?;
                (e, e)
            }
            LossKind::Triplet => {
                // At the kink x = −ε the subgradient 0 is used.
                let m = x + eps;
                if m > 0.0 {
                    (m, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            LossKind::SoftTriplet => {
                let e = exp_checked("soft triplet psi", x / tau + eps, x)?;
                (e, e / tau)
            }
            LossKind::LiftedStructured => {
                let e = exp_checked("lifted structured psi", x + eps, x)?;
                (e, e)
            }
            LossKind::ModifiedTriplet => {
                let s = sigmoid(c * x);
                (s, c * s * (1.0 - s))
            }
            LossKind::TripletContrastive | LossKind::Quadratic => (x, 1.0),
        };
        finite_pair("psi", x, out)
    }

    /// Points where `ψ` is not differentiable.
    pub fn psi_kinks(&self) -> Vec<f64> {
        match self.kind {
            LossKind::Triplet => vec![-self.epsilon],
            _ => Vec::new(),
        }
    }

    /// Points where `φ′` is not differentiable (relevant to second-order
    /// finite-difference accuracy only).
    pub fn phi_kinks(&self) -> Vec<f64> {
        match self.kind {
            LossKind::LiftedStructured => vec![1.0],
            _ => Vec::new(),
        }
    }

    /// Whether ψ is an exponential `e^{x/τ}` so that `α` is a softmax.
    pub fn is_infonce(&self) -> bool {
        self.kind == LossKind::InfoNce
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::infonce(1.0, 0.0)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={} tau={} eps={} c={}", self.kind, self.tau, self.epsilon, self.c)
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses whitespace- or comma-separated `key=value` tokens; `kind` is
    /// required, other keys default.
    fn from_str(s: &str) -> Result<Self> {
        let mut kind = None;
        let mut spec = LossSpec::new(LossKind::InfoNce);
        for token in s.split(|ch: char| ch.is_whitespace() || ch == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number `{value}` for `{key}`")))
            };
            match key {
                "kind" | "loss" => kind = Some(value.parse::<LossKind>()?),
                "tau" => spec.tau = num()?,
                "eps" | "epsilon" => spec.epsilon = num()?,
                "c" => spec.c = num()?,
                _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
            }
        }
        spec.kind = kind.ok_or_else(|| Error::Parse("missing `kind=`".into()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn exp_checked(function: &'static str, arg: f64, x: f64) -> Result<f64> {
    let e = arg.exp();
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Overflow { function, x })
    }
}

fn finite_pair(which: &'static str, x: f64, out: (f64, f64)) -> Result<(f64, f64)> {
    if out.0.is_finite() && out.1.is_finite() {
        Ok(out)
    } else {
        Err(Error::Overflow { function: which, x })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn eval_phi_pair(spec: &LossSpec, x: f64) -> Result<(f64, f64)> {
    spec.phi(x)
}

pub fn eval_psi_pair(spec: &LossSpec, x: f64) -> Result<(f64, f64)> {
    spec.psi(x)
}

/// Loss value together with the per-sample aggregates `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub xi: Array1<f64>,
}

/// `ξ_i = Σ_{j≠i} ψ(d²_i − d²_ij)`.
pub fn aggregates(spec: &LossSpec, dist: &DistanceSet) -> Result<Array1<f64>> {
    let n = dist.len();
    let mut xi = Array1::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            acc += spec.psi(dist.margin(i, j))?.0;
        }
        xi[i] = acc;
    }
    Ok(xi)
}

pub fn eval_loss(spec: &LossSpec, dist: &DistanceSet) -> Result<LossValue> {
    let xi = aggregates(spec, dist)?;
    let mut loss = 0.0;
    for &x in xi.iter() {
        loss += spec.phi(x)?.0;
    }
    Ok(LossValue { loss, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use ndarray::array;
    use proptest::prelude::*;

    fn all_specs() -> Vec<LossSpec> {
        LossKind::ALL
            .iter()
            .map(|&k| LossSpec::new(k).with_tau(0.7).with_epsilon(0.3).with_c(1.5))
            .collect()
    }

    #[test]
    fn identical_views_give_zero_intra() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let d = DistanceSet::from_outputs(&z.view(), &z.view()).unwrap();
        assert_eq!(d.d2_intra.to_vec(), vec![0.0, 0.0]);
        assert_eq!(d.d2_cross[[0, 1]], 1.0);
        assert_eq!(d.d2_cross[[0, 0]], 0.0);
    }

    #[test]
    fn distances_match_double_loop() {
        let mut rng = seeded(1);
        let z = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let za = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let d = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap();
        for i in 0..4 {
            let mut s = 0.0;
            for k in 0..3 {
                s += (z[[i, k]] - za[[i, k]]).powi(2);
            }
            assert!((d.d2_intra[i] - s / 2.0).abs() < 1e-12);
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (z[[i, k]] - z[[j, k]]).powi(2);
                }
                assert!((d.d2_cross[[i, j]] - s / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(matches!(DistanceSet::from_outputs(&a.view(), &b.view()), Err(Error::Shape(_))));
        let one = Array2::<f64>::zeros((1, 2));
        assert_eq!(DistanceSet::from_outputs(&one.view(), &one.view()), Err(Error::TooFewSamples(1)));
        let batch = Batch::new(a.clone(), a).unwrap();
        assert!(pairwise_distances(&batch).is_err());
    }

    #[test]
    fn catalog_hand_values() {
        let nce = LossSpec::infonce(1.0, 1.0);
        assert_eq!(nce.phi(0.0).unwrap(), (0.0, 1.0));
        assert_eq!(LossSpec::infonce(1.0, 0.0).psi(0.0).unwrap(), (1.0, 1.0));
        assert_eq!(LossSpec::new(LossKind::Triplet).phi(3.7).unwrap(), (3.7, 1.0));
        let trip = LossSpec::new(LossKind::Triplet).with_epsilon(0.1);
        assert_eq!(trip.psi(-0.2).unwrap(), (0.0, 0.0));
        assert_eq!(trip.psi(-0.1).unwrap(), (0.0, 0.0));
        let e = std::f64::consts::E;
        assert_eq!(LossSpec::new(LossKind::Mine).psi(1.0).unwrap(), (e, e));
        let (v, d) = LossSpec::new(LossKind::LiftedStructured).phi(e).unwrap();
        assert!((v - 1.0).abs() < 1e-15 && (d - 2.0 / e).abs() < 1e-15);
        let h = 1e-6;
        let lifted = LossSpec::new(LossKind::LiftedStructured);
        let fd = (lifted.phi(e + h).unwrap().0 - lifted.phi(e - h).unwrap().0) / (2.0 * h);
        assert!((fd - 2.0 / e).abs() < 1e-8);
        assert_eq!(lifted.phi(0.5).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn domain_and_overflow_are_typed_errors() {
        assert!(matches!(LossSpec::infonce(1.0, 0.0).phi(0.0), Err(Error::Domain { .. })));
        assert!(matches!(LossSpec::new(LossKind::Mine).phi(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(LossSpec::new(LossKind::SoftTriplet).phi(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(LossSpec::new(LossKind::Mine).phi(f64::NAN), Err(Error::Domain { .. })));
        assert!(matches!(LossSpec::infonce(0.01, 0.0).psi(10.0), Err(Error::Overflow { .. })));
        assert!(LossSpec::new(LossKind::ModifiedTriplet).psi(1e6).is_ok());
    }

    #[test]
    fn tiny_batch_loss() {
        let z = Array2::<f64>::zeros((2, 3));
        let d = DistanceSet::from_outputs(&z.view(), &z.view()).unwrap();
        let v = eval_loss(&LossSpec::infonce(1.0, 0.0), &d).unwrap();
        assert_eq!(v.xi.to_vec(), vec![1.0, 1.0]);
        assert_eq!(v.loss, 0.0);
    }

    #[test]
    fn infonce_matches_log_softmax_form() {
        let mut rng = seeded(3);
        let z = gaussian_matrix(&mut rng, 6, 4, 1.0);
        let za = &z + &gaussian_matrix(&mut rng, 6, 4, 0.3);
        let tau = 0.5;
        let d = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap();
        let got = eval_loss(&LossSpec::infonce(tau, 0.0), &d).unwrap().loss;
        // −τ Σ_i log( exp(−d²_i/τ) / Σ_{j≠i} exp(−d²_ij/τ) )
        let mut want = 0.0;
        for i in 0..6 {
            let sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
                a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 2.0
            };
            let num = (-sq(z.row(i), za.row(i)) / tau).exp();
            let den: f64 = (0..6).filter(|&j| j != i).map(|j| (-sq(z.row(i), z.row(j)) / tau).exp()).sum();
            want += -tau * (num / den).ln();
        }
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn quadratic_matches_double_loop() {
        let mut rng = seeded(4);
        let z = gaussian_matrix(&mut rng, 5, 3, 1.0);
        let za = gaussian_matrix(&mut rng, 5, 3, 1.0);
        let d = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap();
        let got = eval_loss(&LossSpec::quadratic(), &d).unwrap().loss;
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    want += d.d2_intra[i] - d.d2_cross[[i, j]];
                }
            }
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn spec_text_round_trip() {
        let s: LossSpec = "kind=infonce tau=0.5 eps=0".parse().unwrap();
        assert_eq!(s, LossSpec::infonce(0.5, 0.0));
        for spec in all_specs() {
            let back: LossSpec = spec.to_string().parse().unwrap();
            assert_eq!(back, spec);
        }
        assert!("tau=1".parse::<LossSpec>().is_err());
        assert!("kind=bogus".parse::<LossSpec>().is_err());
        assert!("kind=infonce tau=-1".parse::<LossSpec>().is_err());
        assert!("kind=infonce foo=1".parse::<LossSpec>().is_err());
    }

    fn in_phi_domain(spec: &LossSpec, x: f64) -> bool {
        spec.phi(x).is_ok()
    }

    #[test]
    fn catalog_derivatives_match_finite_differences() {
        let mut rng = seeded(9);
        for spec in all_specs() {
            let mut checked = 0;
            while checked < 50 {
                let x: f64 = rand::Rng::random_range(&mut rng, -3.0..3.0);
                let near = |ks: Vec<f64>| ks.iter().any(|k| (x - k).abs() < 1e-4);
                let h = 1e-6 * x.abs().max(1.0);
                if !near(spec.psi_kinks()) {
                    let fd = (spec.psi(x + h).unwrap().0 - spec.psi(x - h).unwrap().0) / (2.0 * h);
                    let an = spec.psi(x).unwrap().1;
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{spec} psi at {x}: {fd} vs {an}");
                    assert!(an >= 0.0);
                }
                if in_phi_domain(&spec, x - h) && !near(spec.phi_kinks()) {
                    let fd = (spec.phi(x + h).unwrap().0 - spec.phi(x - h).unwrap().0) / (2.0 * h);
                    let an = spec.phi(x).unwrap().1;
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{spec} phi at {x}: {fd} vs {an}");
                    assert!(an >= 0.0);
                }
                checked += 1;
            }
        }
    }

    proptest! {
        #[test]
        fn row_shift_leaves_infonce_aggregate_unchanged(shift in 0.0f64..5.0, seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let z = gaussian_matrix(&mut rng, 5, 3, 1.0);
            let za = gaussian_matrix(&mut rng, 5, 3, 1.0);
            let d = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap();
            let spec = LossSpec::infonce(0.8, 0.0);
            let xi = aggregates(&spec, &d).unwrap();
            // Shift row 0 only: d²_0 and every d²_0j move together.
            let mut shifted = d.clone();
            shifted.d2_intra[0] += shift;
            for j in 1..5 {
                shifted.d2_cross[[0, j]] += shift;
            }
            let xs = aggregates(&spec, &shifted).unwrap();
            prop_assert!((xi[0] - xs[0]).abs() <= 1e-12 * xi[0].max(1.0));
        }

        #[test]
        fn scaling_outputs_scales_distances(c in 0.1f64..3.0, seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let z = gaussian_matrix(&mut rng, 4, 3, 1.0);
            let za = gaussian_matrix(&mut rng, 4, 3, 1.0);
            let d = DistanceSet::from_outputs(&z.view(), &za.view()).unwrap();
            let ds = DistanceSet::from_outputs(&(&z * c).view(), &(&za * c).view()).unwrap();
            for (a, b) in d.d2_cross.iter().zip(ds.d2_cross.iter()) {
                prop_assert!((a * c * c - b).abs() <= 1e-12 * b.max(1.0));
            }
            for spec in all_specs() {
                if let Ok(v) = eval_loss(&spec, &ds) {
                    prop_assert!(v.loss.is_finite());
                }
            }
        }

        #[test]
        fn derivatives_are_nonnegative(x in -5.0f64..5.0) {
            for spec in all_specs() {
                prop_assert!(spec.psi(x).unwrap().1 >= 0.0);
                if let Ok((_, d)) = spec.phi(x) {
                    prop_assert!(d >= 0.0);
                }
            }
        }
    }
}
