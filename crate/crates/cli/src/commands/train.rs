use alphacl::grad_engine::Head;
use alphacl::importance::{DirectAlpha, RegularizerSpec};
use alphacl::rng::derive_seed;
use alphacl::toy_trainer::{
    median, train_and_probe, train_observed, weight_gap, LossVariant, Optimizer, SyntheticTask, TrainConfig,
};
use serde::Serialize;

use super::{Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[
    ("variant", "infonce tau=0.5 eps=0"),
    ("optimizer", "adam"),
    ("lr", "0.01"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("opt_eps", "1e-8"),
    ("batch_size", "32"),
    ("epochs", "60"),
    ("hidden", "32"),
    ("output_dim", "2"),
    ("head", "l2"),
    ("task_seed", "100"),
    ("classes", "4"),
    ("per_class", "128"),
    ("input_dim", "32"),
    ("separation", "0.5"),
    ("cluster_std", "0.5"),
    ("noise", "0.3"),
    ("scale", "none"),
    ("min_accuracy", "0.5"),
    ("seed", "0"),
];

pub fn task_from_config(cfg: &Config) -> Result<SyntheticTask, CliError> {
    let scale = match cfg.raw("scale")? {
        "none" => None,
        _ => match cfg.list::<f64>("scale")?.as_slice() {
            &[lo, hi] => Some((lo, hi)),
            _ => return Err(CliError::Usage("scale must be `none` or `lo,hi`".into())),
        },
    };
    let task = SyntheticTask {
        separation: cfg.get("separation")?,
        cluster_std: cfg.get("cluster_std")?,
        noise: cfg.get("noise")?,
        scale,
        ..SyntheticTask::new(cfg.get("classes")?, cfg.get("per_class")?, cfg.get("input_dim")?, cfg.get("task_seed")?)
    };
    task.validate()?;
    Ok(task)
}

pub fn train_config(cfg: &Config) -> Result<TrainConfig, CliError> {
    let eta = cfg.get("lr")?;
    let optimizer = match cfg.raw("optimizer")? {
        "sgd" => Optimizer::Sgd { eta },
        "adam" => Optimizer::Adam { eta, beta1: cfg.get("beta1")?, beta2: cfg.get("beta2")?, eps: cfg.get("opt_eps")? },
        other => return Err(CliError::Usage(format!("unknown optimizer `{other}`; choose sgd or adam"))),
    };
    let tc = TrainConfig {
        variant: cfg.get("variant")?,
        optimizer,
        batch_size: cfg.get("batch_size")?,
        epochs: cfg.get("epochs")?,
        hidden: cfg.list("hidden")?,
        output_dim: cfg.get("output_dim")?,
        head: cfg.get::<Head>("head")?,
        seed: cfg.get("seed")?,
    };
    tc.validate()?;
    Ok(tc)
}

#[derive(Debug, Serialize)]
struct Summary {
    variant: String,
    seed: u64,
    probe_accuracy: f64,
}

pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let task = task_from_config(cfg)?;
    let tc = train_config(cfg)?;
    let (acc, log) = train_and_probe(&task, &tc)?;
    out.write("train_log.csv", &log.to_csv())?;
    out.write_json("train.json", &Summary { variant: tc.variant.to_string(), seed: tc.seed, probe_accuracy: acc })?;
    let min: f64 = cfg.get("min_accuracy")?;
    Ok(Report { checks: vec![Check::at_least(format!("{} probe accuracy", tc.variant.name()), acc, min)] })
}

/// InfoNCE and entropy-regularised α-CL with matching temperature must follow
/// the same parameter trajectory for the first 100 steps.
pub fn trajectory_identity(seed: u64) -> Result<Vec<Check>, CliError> {
    let task = SyntheticTask::four_class(derive_seed(seed, 0));
    let data = task.generate()?;
    let record = |variant: LossVariant| -> Result<Vec<_>, CliError> {
        let cfg = TrainConfig { epochs: 7, ..TrainConfig::comparison(variant, derive_seed(seed, 1)) };
        let mut traj = Vec::new();
        train_observed(&task, &data, &cfg, |step, enc| {
            if step <= 100 {
                traj.push(enc.clone())
            }
        })?;
        Ok(traj)
    };
    let a = record(LossVariant::InfoNce { tau: 0.5, epsilon: 0.0 })?;
    let b = record(LossVariant::AlphaCl(RegularizerSpec::entropy(0.5)))?;
    let worst = a.iter().zip(&b).map(|(x, y)| weight_gap(x, y)).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("trajectory gap infonce vs entropy alpha-CL", worst, 1e-10),
        Check::holds("trajectory length", a.len() == 100 && b.len() == 100, format!("{} / {} steps", a.len(), b.len())),
    ])
}

/// Median probe accuracy over ten seeds for InfoNCE, quadratic and direct α.
pub fn comparison(seed: u64) -> Result<Vec<Check>, CliError> {
    let variants = [
        LossVariant::InfoNce { tau: 0.5, epsilon: 0.0 },
        LossVariant::Quadratic,
        LossVariant::AlphaClDirect(DirectAlpha::new(4.0, 0.5, true)),
    ];
    let mut medians = Vec::new();
    for v in &variants {
        let mut accs = Vec::new();
        for s in 0..10 {
            let task = SyntheticTask::four_class(derive_seed(seed, 100 + s));
            accs.push(train_and_probe(&task, &TrainConfig::comparison(v.clone(), derive_seed(seed, s)))?.0);
        }
        medians.push(median(&accs));
    }
    let (nce, quad, direct) = (medians[0], medians[1], medians[2]);
    Ok(vec![
        Check::holds("median accuracy quadratic < infonce", quad < nce, format!("{quad:.4} vs {nce:.4}")),
        Check::at_least("median accuracy direct alpha", direct, nce - 0.02),
    ])
}
