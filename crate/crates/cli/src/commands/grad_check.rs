use alphacl::grad_engine::verify_gradient_identity;
use alphacl::loss_family::{LossKind, LossSpec};
use alphacl::rng::{derive_seed, gaussian_matrix, seeded};
use rand::Rng;
use serde::Serialize;

use super::{Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[
    ("loss", "all"),
    ("tau", "0.5"),
    ("eps", "0.1"),
    ("c", "2"),
    ("n", "16"),
    ("dim", "8"),
    ("batches", "100"),
    ("tol", "1e-8"),
    ("seed", "0"),
];

#[derive(Debug, Clone, Serialize)]
pub struct LossResult {
    pub loss: String,
    pub spec: String,
    pub batches: usize,
    pub kink_batches: usize,
    pub max_residual: f64,
}

pub struct Params {
    pub kinds: Vec<LossKind>,
    pub tau: f64,
    pub eps: f64,
    pub c: f64,
    pub n: usize,
    pub dim: usize,
    pub batches: usize,
    pub tol: f64,
}

impl Params {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let loss = cfg.raw("loss")?;
        let kinds = if loss == "all" {
            LossKind::ALL.to_vec()
        } else {
            cfg.list::<LossKind>("loss")?
        };
        Ok(Params {
            kinds,
            tau: cfg.get("tau")?,
            eps: cfg.get("eps")?,
            c: cfg.get("c")?,
            n: cfg.get("n")?,
            dim: cfg.get("dim")?,
            batches: cfg.get("batches")?,
            tol: cfg.get("tol")?,
        })
    }
}

/// Batches in which a margin sits on a kink of `ψ` are counted but not scored.
pub fn suite(p: &Params, seed: u64) -> Result<(Vec<Check>, Vec<LossResult>), CliError> {
    let mut checks = Vec::new();
    let mut results = Vec::new();
    for (idx, &kind) in p.kinds.iter().enumerate() {
        let spec = LossSpec::new(kind).with_tau(p.tau).with_epsilon(p.eps).with_c(p.c);
        let mut rng = seeded(derive_seed(seed, idx as u64));
        let (mut worst, mut kinks): (f64, usize) = (0.0, 0);
        for _ in 0..p.batches {
            let scale = rng.random_range(0.1..0.6);
            let z = gaussian_matrix(&mut rng, p.n, p.dim, scale);
            let za = &z + &gaussian_matrix(&mut rng, p.n, p.dim, 0.3 * scale);
            let rep = verify_gradient_identity(&spec, &z.view(), &za.view())?;
            if rep.near_kink {
                kinks += 1;
                continue;
            }
            worst = worst.max(rep.max_identity_residual);
        }
        checks.push(
            Check::at_most(format!("gradient identity {kind}"), worst, p.tol)
                .with_detail(format!("{} batches, {kinks} on a kink", p.batches)),
        );
        results.push(LossResult {
            loss: kind.to_string(),
            spec: spec.to_string(),
            batches: p.batches,
            kink_batches: kinks,
            max_residual: worst,
        });
    }
    Ok((checks, results))
}

pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let p = Params::from_config(cfg)?;
    let seed: u64 = cfg.get("seed")?;
    let (checks, results) = suite(&p, seed)?;
    out.write_json("grad_check.json", &serde_json::json!({ "tol": p.tol, "losses": results }))?;
    if let Some(&kind) = p.kinds.first() {
        let spec = LossSpec::new(kind).with_tau(p.tau).with_epsilon(p.eps).with_c(p.c);
        let mut rng = seeded(derive_seed(seed, u64::MAX));
        let z = gaussian_matrix(&mut rng, p.n, p.dim, 0.3);
        let za = &z + &gaussian_matrix(&mut rng, p.n, p.dim, 0.1);
        out.write_json("grad_report_example.json", &verify_gradient_identity(&spec, &z.view(), &za.view())?)?;
    }
    Ok(Report { checks })
}
