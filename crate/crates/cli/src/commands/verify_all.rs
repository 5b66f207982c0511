use std::sync::Mutex;

use alphacl::deep_linear::{balancedness_residual, flow_step, random_weights, random_x_alpha, Constraint, DeepLinState};
use alphacl::grad_engine::{ascent_direction, normalized_inner, Activation, AlphaSource, Encoder, Head, Objective};
use alphacl::loss_family::LossSpec;
use alphacl::rng::{derive_seed, gaussian_matrix, substream};
use rand::Rng;
use serde::Serialize;

use super::{alpha_solve, flow, grad_check, relu, train, Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[("threads", "0"), ("seed", "0")];

pub const SUITES: [&str; 10] = [
    "gradient_identity",
    "solvers",
    "pca",
    "conservation",
    "sticky",
    "one_node",
    "structure",
    "diversity",
    "trajectory",
    "comparison",
];

fn defaults(table: &[(&str, &str)]) -> Config {
    Config::from_defaults(table)
}

fn relu_suite(experiment: &str, seed: u64) -> Result<Vec<Check>, CliError> {
    let mut cfg = defaults(relu::DEFAULTS);
    cfg.overlay([("experiment", experiment)], "verify-all")?;
    Ok(relu::experiments(&relu::Params::from_config(&cfg)?, seed)?.0)
}

/// Weights stay orthogonal to their gradient under normalized heads, and the
/// balancedness drift of an unconstrained Euler step shrinks like `η²`.
fn conservation(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut rng = substream(seed, 0);
    let mut worst: f64 = 0.0;
    for draw in 0..40 {
        let head = if draw % 2 == 0 { Head::L2 } else { Head::LayerNorm };
        let depth = 2 + draw % 3;
        let mut dims = vec![6];
        for _ in 1..depth {
            dims.push(rng.random_range(16..32));
        }
        dims.push(4);
        let mut acts = vec![Activation::Relu; depth - 1];
        acts.push(Activation::Linear);
        let enc = Encoder::random(&mut rng, &dims, &acts, head)?;
        let x = gaussian_matrix(&mut rng, 12, 6, 1.0);
        let xa = &x + &gaussian_matrix(&mut rng, 12, 6, 0.2);
        let obj = Objective::AlphaCl(AlphaSource::FromGradient(LossSpec::infonce(0.5, 0.0)));
        let dir = ascent_direction(&enc, &x.view(), &xa.view(), &obj)?;
        for (w, g) in enc.weights().iter().zip(&dir.grads) {
            worst = worst.max(normalized_inner(&w.view(), &g.view()).abs());
        }
    }
    let etas = [4e-3, 2e-3, 1e-3];
    let mut ratios = Vec::new();
    for run in 0..3 {
        let mut rng = substream(derive_seed(seed, run), 4);
        let x = random_x_alpha(&mut rng, 6, 1.0, 0.1, -1.0);
        let w = random_weights(&mut rng, &[6, 6, 6, 6], Constraint::Frobenius);
        let mut drift = Vec::new();
        for &eta in &etas {
            let start = DeepLinState::new(w.clone(), x.clone(), eta)?;
            let mut s = start.clone();
            for _ in 0..20 {
                s = flow_step(&s, Constraint::None)?;
            }
            drift.push(balancedness_residual(&s, &start)?.into_iter().fold(0.0, f64::max));
        }
        ratios.push(drift[0] / drift[1]);
        ratios.push(drift[1] / drift[2]);
    }
    let off = ratios.iter().map(|r| (r - 4.0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("max normalized <W, grad W>", worst, 1e-8),
        Check::at_most("drift ratio per eta halving, |r - 4|", off, 0.4),
    ])
}

pub fn suite(name: &str, seed: u64) -> Result<Vec<Check>, CliError> {
    match name {
        "gradient_identity" => {
            let p = grad_check::Params::from_config(&defaults(grad_check::DEFAULTS))?;
            Ok(grad_check::suite(&p, seed)?.0)
        }
        "solvers" => {
            let p = alpha_solve::Params::from_config(&defaults(alpha_solve::DEFAULTS))?;
            Ok(alpha_solve::suite(&p, seed)?.0)
        }
        "pca" => {
            let p = flow::Params::from_config(&defaults(flow::DEFAULTS))?;
            let mut checks = Vec::new();
            for run in 0..5 {
                checks.extend(flow::run_one(&p, derive_seed(seed, run))?.checks);
            }
            Ok(checks)
        }
        "conservation" => conservation(seed),
        "sticky" | "one_node" | "structure" | "diversity" => relu_suite(name, seed),
        "trajectory" => train::trajectory_identity(seed),
        "comparison" => train::comparison(seed),
        other => Err(CliError::Usage(format!("unknown suite `{other}`"))),
    }
}

#[derive(Debug, Serialize)]
struct SuiteResult {
    suite: &'static str,
    seed: u64,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    checks: Vec<Check>,
}

/// Suites are claimed from a shared counter by `threads` workers; results are
/// reported in the fixed suite order whatever the scheduling.
pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let seed: u64 = cfg.get("seed")?;
    let threads = match cfg.get::<usize>("threads")? {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(SUITES.len());
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<SuiteResult>>> = SUITES.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = {
                    let mut n = next.lock().expect("counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&name) = SUITES.get(idx) else { break };
                let s = derive_seed(seed, idx as u64);
                let res = match suite(name, s) {
                    Ok(checks) => SuiteResult { suite: name, seed: s, passed: checks.iter().all(|c| c.pass), error: None, checks },
                    Err(e) => SuiteResult { suite: name, seed: s, passed: false, error: Some(e.to_string()), checks: Vec::new() },
                };
                *slots[idx].lock().expect("slot") = Some(res);
            });
        }
    });
    let results: Vec<SuiteResult> =
        slots.into_iter().map(|m| m.into_inner().expect("slot").expect("every suite ran")).collect();
    out.write_json("verify_all.json", &results)?;
    let mut checks = Vec::new();
    for r in &results {
        match &r.error {
            Some(e) => checks.push(Check::holds(format!("[{}] completed", r.suite), false, e.clone())),
            None => checks.extend(r.checks.iter().map(|c| Check { name: format!("[{}] {}", r.suite, c.name), ..c.clone() })),
        }
    }
    Ok(Report { checks })
}
