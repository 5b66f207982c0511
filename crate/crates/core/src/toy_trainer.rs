//! Synthetic contrastive training and linear-probe evaluation.
//!
//! A small MLP encoder is trained on Gaussian clusters with noise
//! augmentation, then frozen and scored by a closed-form ridge probe.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grad_engine::{ascent_direction, Activation, AlphaSource, Encoder, Head, Objective};
use crate::importance::{DirectAlpha, RegularizerSpec};
use crate::linalg::cholesky_solve;
use crate::loss_family::LossSpec;
use crate::rng::{derive_seed, gaussian_matrix, seeded, substream};

pub const RIDGE_LAMBDA: f64 = 1e-4;

// ── Task ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Standard deviation of each cluster center coordinate.
    pub separation: f64,
    /// Within-cluster standard deviation.
    pub cluster_std: f64,
    /// Standard deviation of the additive augmentation noise.
    pub noise: f64,
    /// Optional uniform range of a positive per-view scale.
    pub scale: Option<(f64, f64)>,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn new(classes: usize, samples_per_class: usize, input_dim: usize, seed: u64) -> Self {
        SyntheticTask {
            classes,
            samples_per_class,
            input_dim,
            separation: 1.0,
            cluster_std: 0.3,
            noise: 0.3,
            scale: None,
            seed,
        }
    }

    /// Four overlapping clusters in 32 dimensions, 128 samples each.
    pub fn four_class(seed: u64) -> Self {
        SyntheticTask { separation: 0.5, cluster_std: 0.5, noise: 0.3, ..SyntheticTask::new(4, 128, 32, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.samples_per_class < 1 || self.input_dim < 1 {
            return Err(Error::InvalidParameter(format!(
                "task needs at least 2 classes, 1 sample per class and 1 input dim, got {}/{}/{}",
                self.classes, self.samples_per_class, self.input_dim
            )));
        }
        for (name, v) in [("separation", self.separation), ("cluster_std", self.cluster_std), ("noise", self.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if let Some((lo, hi)) = self.scale {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!("scale range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Samples are grouped by class.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = seeded(self.seed);
        let centers = gaussian_matrix(&mut rng, self.classes, self.input_dim, self.separation);
        let n = self.classes * self.samples_per_class;
        let mut inputs = gaussian_matrix(&mut rng, n, self.input_dim, self.cluster_std);
        let mut labels = Vec::with_capacity(n);
        for c in 0..self.classes {
            for s in 0..self.samples_per_class {
                let i = c * self.samples_per_class + s;
                let mut row = inputs.row_mut(i);
                row += &centers.row(c);
                labels.push(c);
            }
        }
        Ok(Dataset { inputs, labels, classes: self.classes })
    }

    /// One augmented view of each row.
    pub fn augment(&self, x: &ArrayView2<f64>, rng: &mut impl Rng) -> Array2<f64> {
        let mut out = x.to_owned() + gaussian_matrix(rng, x.nrows(), x.ncols(), self.noise);
        if let Some((lo, hi)) = self.scale {
            for mut row in out.axis_iter_mut(Axis(0)) {
                let s = if lo == hi { lo } else { rng.random_range(lo..hi) };
                row *= s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

// ── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum LossVariant {
    InfoNce { tau: f64, epsilon: f64 },
    Quadratic,
    BackpropAlpha { tau: f64 },
    AlphaCl(RegularizerSpec),
    AlphaClDirect(DirectAlpha),
}

impl LossVariant {
    pub fn objective(&self) -> Objective {
        match self {
            LossVariant::InfoNce { tau, epsilon } => Objective::LossDescent(LossSpec::infonce(*tau, *epsilon)),
            LossVariant::Quadratic => Objective::LossDescent(LossSpec::quadratic()),
            LossVariant::BackpropAlpha { tau } => Objective::BackpropAlpha(LossSpec::infonce(*tau, 0.0)),
            LossVariant::AlphaCl(reg) => Objective::AlphaCl(AlphaSource::Regularized(reg.clone())),
            LossVariant::AlphaClDirect(d) => Objective::AlphaCl(AlphaSource::Direct(*d)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::InfoNce { .. } => "infonce",
            LossVariant::Quadratic => "quadratic",
            LossVariant::BackpropAlpha { .. } => "backprop_alpha",
            LossVariant::AlphaCl(_) => "alpha_cl",
            LossVariant::AlphaClDirect(_) => "alpha_cl_direct",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossVariant::InfoNce { tau, epsilon } => write!(f, "infonce tau={tau} eps={epsilon}"),
            LossVariant::Quadratic => f.write_str("quadratic"),
            LossVariant::BackpropAlpha { tau } => write!(f, "backprop_alpha tau={tau}"),
            LossVariant::AlphaCl(reg) => write!(f, "alpha_cl {reg}"),
            LossVariant::AlphaClDirect(d) => write!(
                f,
                "alpha_cl_direct p={} tau={} normalized={} distance={}",
                d.p, d.tau, d.normalized, d.distance
            ),
        }
    }
}

/// `name key=value ...`, e.g. `infonce tau=0.5`, `alpha_cl reg=inverse tau=0.5 gamma=2`
/// or `alpha_cl_direct p=4 tau=0.5 normalized=true`.
impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let pairs = rest
            .split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`"))))
            .collect::<Result<Vec<_>>>()?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("`{v}` is not a number")));
        let mut tau = None;
        let mut epsilon = 0.0;
        let mut p = 4.0;
        let mut normalized = true;
        let mut distance = Default::default();
        match name {
            "alpha_cl" => return Ok(LossVariant::AlphaCl(rest.parse()?)),
            "infonce" | "quadratic" | "backprop_alpha" | "alpha_cl_direct" => {}
            _ => return Err(Error::Parse(format!("unknown loss variant `{name}`"))),
        }
        for (k, v) in pairs {
            match (name, k) {
                (_, "tau") if name != "quadratic" => tau = Some(num(v)?),
                ("infonce", "eps" | "epsilon") => epsilon = num(v)?,
                ("alpha_cl_direct", "p") => p = num(v)?,
                ("alpha_cl_direct", "normalized") => {
                    normalized = v.parse().map_err(|_| Error::Parse(format!("`{v}` is not a boolean")))?
                }
                ("alpha_cl_direct", "distance") => distance = v.parse()?,
                _ => return Err(Error::Parse(format!("unknown key `{k}` for {name}"))),
            }
        }
        Ok(match name {
            "infonce" => LossVariant::InfoNce { tau: tau.unwrap_or(0.5), epsilon },
            "quadratic" => LossVariant::Quadratic,
            "backprop_alpha" => LossVariant::BackpropAlpha { tau: tau.unwrap_or(0.5) },
            _ => LossVariant::AlphaClDirect(DirectAlpha::new(p, tau.unwrap_or(0.5), normalized).with_distance(distance)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { eta: f64 },
    Adam { eta: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(eta: f64) -> Self {
        Optimizer::Adam { eta, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            Optimizer::Sgd { eta } | Optimizer::Adam { eta, .. } => eta,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(1e-3)
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Sgd { eta } => write!(f, "sgd eta={eta}"),
            Optimizer::Adam { eta, beta1, beta2, eps } => {
                write!(f, "adam eta={eta} beta1={beta1} beta2={beta2} eps={eps}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: LossVariant,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hidden widths; every hidden layer uses ReLU, the last layer is linear.
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub head: Head,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: LossVariant) -> Self {
        TrainConfig {
            variant,
            optimizer: Optimizer::default(),
            batch_size: 32,
            epochs: 20,
            hidden: vec![32],
            output_dim: 8,
            head: Head::L2,
            seed: 0,
        }
    }

    /// Settings used for the variant comparison on [`SyntheticTask::four_class`]:
    /// a 2-d ℓ2-normalised embedding trained for 60 epochs with Adam at `1e-2`.
    pub fn comparison(variant: LossVariant, seed: u64) -> Self {
        TrainConfig { optimizer: Optimizer::adam(1e-2), epochs: 60, output_dim: 2, seed, ..TrainConfig::new(variant) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.output_dim < 1 || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        let eta = self.optimizer.eta();
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be finite and nonnegative, got {eta}")));
        }
        Ok(())
    }

    pub fn initial_encoder(&self, input_dim: usize) -> Result<Encoder> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        let mut acts = vec![Activation::Relu; self.hidden.len()];
        acts.push(Activation::Linear);
        Encoder::random(&mut substream(self.seed, 0), &dims, &acts, self.head)
    }
}

// ── Optimizer state ─────────────────────────────────────────────────────────

struct OptState {
    opt: Optimizer,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl OptState {
    fn new(opt: Optimizer, enc: &Encoder) -> Self {
        let zeros: Vec<_> = enc.weights().iter().map(|w| Array2::zeros(w.dim())).collect();
        OptState { opt, m: zeros.clone(), v: zeros, t: 0 }
    }

    /// Ascending update from the already signed direction.
    fn apply(&mut self, enc: &Encoder, grads: &[Array2<f64>]) -> Result<Encoder> {
        match self.opt {
            Optimizer::Sgd { eta } => enc.updated(grads, eta),
            Optimizer::Adam { eta, beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let mut steps = Vec::with_capacity(grads.len());
                for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grads) {
                    ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                    let mut step = Array2::zeros(g.dim());
                    ndarray::Zip::from(&mut step)
                        .and(&*m)
                        .and(&*v)
                        .for_each(|s, &m, &v| *s = (m / c1) / ((v / c2).sqrt() + eps));
                    steps.push(step);
                }
                enc.updated(&steps, eta)
            }
        }
    }
}

// ── Training ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_energy: f64,
    /// Absent for variants without a loss value.
    pub mean_loss: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub total_steps: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,steps,mean_energy,mean_loss\n");
        for r in &self.epochs {
            let loss = r.mean_loss.map(crate::export::fmt_f64).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.steps, crate::export::fmt_f64(r.mean_energy), loss));
        }
        out
    }
}

pub fn train(task: &SyntheticTask, data: &Dataset, cfg: &TrainConfig) -> Result<(Encoder, TrainLog)> {
    train_observed(task, data, cfg, |_, _| {})
}

/// As [`train`], calling `observe(step, encoder)` after every update.
pub fn train_observed(
    task: &SyntheticTask,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, &Encoder),
) -> Result<(Encoder, TrainLog)> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let obj = cfg.variant.objective();
    let mut enc = cfg.initial_encoder(data.inputs.ncols())?;
    let mut opt = OptState::new(cfg.optimizer, &enc);
    let mut rng = substream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut e_sum, mut l_sum, mut has_loss, mut steps) = (0.0, 0.0, true, 0);
        for chunk in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let raw = data.inputs.select(Axis(0), chunk);
            let x = task.augment(&raw.view(), &mut rng);
            let x_aug = task.augment(&raw.view(), &mut rng);
            let dir = ascent_direction(&enc, &x.view(), &x_aug.view(), &obj)?;
            let step = log.total_steps + 1;
            if !dir.energy.is_finite() || dir.grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite { step, detail: format!("{} diverged", cfg.variant.name()) });
            }
            enc = opt.apply(&enc, &dir.grads)?;
            log.total_steps = step;
            observe(step, &enc);
            e_sum += dir.energy;
            match dir.loss {
                Some(l) => l_sum += l,
                None => has_loss = false,
            }
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        log.epochs.push(EpochRecord {
            epoch,
            mean_energy: e_sum / denom,
            mean_loss: has_loss.then_some(l_sum / denom),
            steps,
        });
    }
    Ok((enc, log))
}

// ── Probe ───────────────────────────────────────────────────────────────────

/// Whether sample `i` is held out: one in five by a seed-stable hash.
pub fn is_held_out(seed: u64, i: usize) -> bool {
    derive_seed(seed, i as u64) % 5 == 0
}

/// Held-out accuracy of a ridge one-vs-rest classifier with bias on
/// `features`.
pub fn probe_features(features: &ArrayView2<f64>, labels: &[usize], classes: usize, seed: u64) -> Result<f64> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(crate::error::shape_err(format!("{} labels for {n} feature rows", labels.len())));
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| !is_held_out(seed, i));
    if train.is_empty() || test.is_empty() {
        return Err(Error::TooFewSamples(n));
    }
    let design = |idx: &[usize]| {
        let mut f = Array2::ones((idx.len(), d + 1));
        for (r, &i) in idx.iter().enumerate() {
            f.row_mut(r).slice_mut(ndarray::s![..d]).assign(&features.row(i));
        }
        f
    };
    let f_train = design(&train);
    let mut y = Array2::<f64>::zeros((train.len(), classes));
    for (r, &i) in train.iter().enumerate() {
        y[[r, labels[i]]] = 1.0;
    }
    let gram = f_train.t().dot(&f_train) + Array2::<f64>::eye(d + 1) * RIDGE_LAMBDA;
    let w = cholesky_solve(&gram.view(), &f_train.t().dot(&y).view())?;
    let scores = design(&test).dot(&w);
    let correct = test
        .iter()
        .zip(scores.axis_iter(Axis(0)))
        .filter(|(&i, s)| argmax(s) == labels[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

fn argmax(v: &ndarray::ArrayView1<f64>) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) }).0
}

/// Probe accuracy of frozen encoder outputs on the clean inputs.
pub fn linear_probe(enc: &Encoder, data: &Dataset, seed: u64) -> Result<f64> {
    let z = enc.forward(&data.inputs.view())?.output;
    probe_features(&z.view(), &data.labels, data.classes, seed)
}

/// Trains and probes one configuration.
pub fn train_and_probe(task: &SyntheticTask, cfg: &TrainConfig) -> Result<(f64, TrainLog)> {
    let data = task.generate()?;
    let (enc, log) = train(task, &data, cfg)?;
    Ok((linear_probe(&enc, &data, cfg.seed)?, log))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest entrywise gap between two weight lists.
pub fn weight_gap(a: &Encoder, b: &Encoder) -> f64 {
    a.weights()
        .iter()
        .zip(b.weights())
        .map(|(x, y)| crate::linalg::max_abs_diff(&x.view(), &y.view()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task(seed: u64) -> SyntheticTask {
        SyntheticTask::new(4, 30, 6, seed)
    }

    #[test]
    fn dataset_is_deterministic_and_labelled() {
        let t = small_task(3);
        let a = t.generate().unwrap();
        assert_eq!(a, t.generate().unwrap());
        assert_eq!(a.len(), 120);
        assert!((0..4).all(|c| a.labels.iter().filter(|&&l| l == c).count() == 30));
        assert_ne!(a, small_task(4).generate().unwrap());
    }

    #[test]
    fn augmentation_scales_and_perturbs() {
        let t = SyntheticTask { noise: 0.0, scale: Some((2.0, 2.0)), ..small_task(1) };
        let d = t.generate().unwrap();
        let v = t.augment(&d.inputs.view(), &mut seeded(0));
        assert!(crate::linalg::max_abs_diff(&v.view(), &(&d.inputs * 2.0).view()) < 1e-15);
        let t = SyntheticTask { noise: 0.0, ..small_task(1) };
        assert_eq!(t.augment(&d.inputs.view(), &mut seeded(0)), d.inputs);
        assert!(SyntheticTask { scale: Some((0.0, 1.0)), ..small_task(1) }.validate().is_err());
    }

    #[test]
    fn zero_rate_keeps_initialisation() {
        let t = small_task(2);
        let d = t.generate().unwrap();
        for opt in [Optimizer::Sgd { eta: 0.0 }, Optimizer::adam(0.0)] {
            let cfg = TrainConfig { optimizer: opt, epochs: 1, ..TrainConfig::new(LossVariant::InfoNce { tau: 0.5, epsilon: 0.0 }) };
            let (enc, log) = train(&t, &d, &cfg).unwrap();
            assert_eq!(enc, cfg.initial_encoder(6).unwrap());
            assert_eq!(log.epochs.len(), 1);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let t = small_task(5);
        let d = t.generate().unwrap();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::new(LossVariant::InfoNce { tau: 0.5, epsilon: 0.0 }) };
        let (a, la) = train(&t, &d, &cfg).unwrap();
        let (b, lb) = train(&t, &d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.epochs.iter().all(|r| r.mean_loss.is_some()));
    }

    #[test]
    fn backprop_alpha_diverges_from_stop_gradient() {
        let t = small_task(6);
        let d = t.generate().unwrap();
        let run = |v: LossVariant| {
            let cfg = TrainConfig { epochs: 1, optimizer: Optimizer::Sgd { eta: 0.05 }, ..TrainConfig::new(v) };
            let mut traj = Vec::new();
            train_observed(&t, &d, &cfg, |_, e| traj.push(e.clone())).unwrap();
            traj
        };
        let a = run(LossVariant::BackpropAlpha { tau: 0.5 });
        let b = run(LossVariant::AlphaCl(RegularizerSpec::entropy(0.5)));
        assert!((0..a.len().min(10)).any(|s| weight_gap(&a[s], &b[s]) > 1e-6));
    }

    #[test]
    fn variant_parsing_round_trip() {
        for s in ["infonce tau=0.5 eps=0", "quadratic", "backprop_alpha tau=0.3", "alpha_cl reg=inverse tau=0.5 gamma=2", "alpha_cl_direct p=4 tau=0.5"] {
            let v: LossVariant = s.parse().unwrap();
            let again: LossVariant = v.to_string().parse().unwrap();
            assert_eq!(v, again, "{s}");
        }
        assert!("softmax".parse::<LossVariant>().is_err());
        assert!("quadratic tau=1".parse::<LossVariant>().is_err());
    }

    #[test]
    fn probe_bounds() {
        let t = SyntheticTask { separation: 3.0, ..SyntheticTask::new(3, 100, 5, 8) };
        let d = t.generate().unwrap();
        let raw = probe_features(&d.inputs.view(), &d.labels, 3, 0).unwrap();
        assert!(raw > 0.95, "{raw}");

        let cfg = TrainConfig::new(LossVariant::Quadratic);
        let enc = cfg.initial_encoder(5).unwrap();
        assert!(linear_probe(&enc, &d, 0).unwrap() >= 1.0 / 3.0);

        let mut shuffled = d.labels.clone();
        shuffled.shuffle(&mut seeded(1));
        let acc = probe_features(&d.inputs.view(), &shuffled, 3, 0).unwrap();
        assert!((acc - 1.0 / 3.0).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn held_out_fraction() {
        let held = (0..10_000).filter(|&i| is_held_out(7, i)).count();
        assert!((held as f64 / 10_000.0 - 0.2).abs() < 0.02);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
