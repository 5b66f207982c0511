use alphacl::export::matrix_csv;
use alphacl::importance::{inverse_row, solve, RegularizerKind, RegularizerSpec};
use alphacl::rng::{derive_seed, seeded};
use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use super::{Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[
    ("reg", "all"),
    ("entropy_tau", "0.5"),
    ("inverse_tau", "0.5"),
    ("gamma", "2"),
    ("square_tau", "5"),
    ("n", "4"),
    ("matrices", "50"),
    ("cost_lo", "-2"),
    ("cost_hi", "2"),
    ("tol", "1e-9"),
    ("seed", "0"),
];

pub struct Params {
    pub specs: Vec<RegularizerSpec>,
    pub n: usize,
    pub matrices: usize,
    pub cost_range: (f64, f64),
    pub tol: f64,
}

impl Params {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let all = [RegularizerKind::Entropy, RegularizerKind::Inverse, RegularizerKind::Square];
        let kinds = if cfg.raw("reg")? == "all" { all.to_vec() } else { cfg.list::<RegularizerKind>("reg")? };
        let specs = kinds
            .into_iter()
            .map(|k| -> Result<_, CliError> {
                Ok(match k {
                    RegularizerKind::Entropy => RegularizerSpec::entropy(cfg.get("entropy_tau")?),
                    RegularizerKind::Inverse => RegularizerSpec::inverse(cfg.get("inverse_tau")?, cfg.get("gamma")?),
                    RegularizerKind::Square => RegularizerSpec::square(cfg.get("square_tau")?),
                })
            })
            .collect::<Result<_, _>>()?;
        let (lo, hi): (f64, f64) = (cfg.get("cost_lo")?, cfg.get("cost_hi")?);
        if !(lo < hi) {
            return Err(CliError::Usage(format!("cost_lo {lo} must be below cost_hi {hi}")));
        }
        Ok(Params { specs, n: cfg.get("n")?, matrices: cfg.get("matrices")?, cost_range: (lo, hi), tol: cfg.get("tol")? })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverResult {
    pub regularizer: String,
    pub matrices: usize,
    /// Largest violation of the solver's optimality conditions.
    pub max_residual: f64,
    pub max_row_sum_error: f64,
}

/// Residual of the optimality conditions for one row `α` with costs `c`.
fn row_residual(alpha: &[f64], c: &[f64], reg: &RegularizerSpec) -> Result<f64, CliError> {
    Ok(match reg.kind {
        RegularizerKind::Entropy => {
            let m = c.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = c.iter().map(|&x| (-(x - m) / reg.tau).exp()).collect();
            let s: f64 = w.iter().sum();
            alpha.iter().zip(&w).map(|(a, w)| (a - w / s).abs()).fold(0.0, f64::max)
        }
        RegularizerKind::Inverse => {
            // Stationarity (c_j + μ) α_j^γ = τ with the solver's own multiplier.
            let (_, mu) = inverse_row(c, reg.tau, reg.gamma)?;
            alpha
                .iter()
                .zip(c)
                .map(|(a, cj)| ((cj + mu) * a.powf(reg.gamma) - reg.tau).abs() / reg.tau)
                .fold(0.0, f64::max)
        }
        RegularizerKind::Square => {
            // c_j + τ α_j equals a common θ on the support and is at least θ off it.
            let support: Vec<f64> = alpha.iter().zip(c).filter(|(a, _)| **a > 0.0).map(|(a, cj)| cj + reg.tau * a).collect();
            let theta = support.iter().sum::<f64>() / support.len().max(1) as f64;
            let spread = support.iter().map(|v| (v - theta).abs()).fold(0.0, f64::max);
            let outside = alpha
                .iter()
                .zip(c)
                .filter(|(a, _)| **a == 0.0)
                .map(|(_, cj)| (theta - cj).max(0.0))
                .fold(0.0, f64::max);
            spread.max(outside) / reg.tau
        }
    })
}

pub fn suite(p: &Params, seed: u64) -> Result<(Vec<Check>, Vec<SolverResult>, Vec<(String, Array2<f64>, Array2<f64>)>), CliError> {
    let mut checks = Vec::new();
    let mut results = Vec::new();
    let mut examples = Vec::new();
    for (idx, reg) in p.specs.iter().enumerate() {
        let mut rng = seeded(derive_seed(seed, idx as u64));
        let (mut worst, mut sum_err): (f64, f64) = (0.0, 0.0);
        for m in 0..p.matrices {
            let mut c = Array2::from_shape_fn((p.n, p.n), |_| rng.random_range(p.cost_range.0..p.cost_range.1));
            c.diag_mut().fill(0.0);
            let alpha = solve(&c.view(), reg)?;
            for i in 0..p.n {
                let off: Vec<usize> = (0..p.n).filter(|&j| j != i).collect();
                let a: Vec<f64> = off.iter().map(|&j| alpha.alpha()[[i, j]]).collect();
                let ci: Vec<f64> = off.iter().map(|&j| c[[i, j]]).collect();
                worst = worst.max(row_residual(&a, &ci, reg)?);
                sum_err = sum_err.max((a.iter().sum::<f64>() - 1.0).abs());
            }
            if m == 0 {
                examples.push((reg.kind.name().to_string(), c, alpha.into_matrix()));
            }
        }
        checks.push(Check::at_most(format!("{} optimality", reg.kind.name()), worst, p.tol));
        checks.push(Check::at_most(format!("{} row sums", reg.kind.name()), sum_err, p.tol));
        results.push(SolverResult {
            regularizer: reg.to_string(),
            matrices: p.matrices,
            max_residual: worst,
            max_row_sum_error: sum_err,
        });
    }
    Ok((checks, results, examples))
}

pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let p = Params::from_config(cfg)?;
    let (checks, results, examples) = suite(&p, cfg.get("seed")?)?;
    for (name, c, alpha) in &examples {
        out.write(&format!("costs_{name}.csv"), &matrix_csv(&c.view(), "c"))?;
        out.write(&format!("alpha_{name}.csv"), &matrix_csv(&alpha.view(), "alpha"))?;
    }
    out.write_json("alpha_solve.json", &serde_json::json!({ "tol": p.tol, "solvers": results }))?;
    Ok(Report { checks })
}
