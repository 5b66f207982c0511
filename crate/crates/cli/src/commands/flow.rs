use alphacl::deep_linear::{check_alignment, lambda_max, random_weights, random_x_alpha, run_flow, Constraint, FlowConfig};
use alphacl::export::fmt_f64;
use alphacl::rng::substream;
use serde::Serialize;

use super::{gnuplot_enabled, Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[
    ("layers", "5"),
    ("dim", "8"),
    ("eta", "0.05"),
    ("max_steps", "50000"),
    ("tol", "1e-10"),
    ("constraint", "frobenius"),
    ("backtrack", "true"),
    ("record_every", "100"),
    ("top", "1"),
    ("gap", "0.1"),
    ("lo", "-1"),
    ("energy_tol", "1e-4"),
    ("ratio_tol", "1e-3"),
    ("cos_tol", "1e-4"),
    ("gnuplot", "false"),
    ("seed", "0"),
];

#[derive(Debug, Clone)]
pub struct Params {
    pub layers: usize,
    pub dim: usize,
    pub flow: FlowConfig,
    pub spectrum: (f64, f64, f64),
    pub energy_tol: f64,
    pub ratio_tol: f64,
    pub cos_tol: f64,
}

impl Params {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let layers: usize = cfg.get("layers")?;
        let dim: usize = cfg.get("dim")?;
        if layers == 0 || dim < 2 {
            return Err(CliError::Usage(format!("need layers >= 1 and dim >= 2, got {layers} and {dim}")));
        }
        let (top, gap, lo): (f64, f64, f64) = (cfg.get("top")?, cfg.get("gap")?, cfg.get("lo")?);
        if !(top > 0.0 && gap > 0.0 && lo <= top - gap) {
            return Err(CliError::Usage(format!("spectrum needs top > 0, gap > 0, lo <= top - gap; got {top}, {gap}, {lo}")));
        }
        Ok(Params {
            layers,
            dim,
            flow: FlowConfig {
                eta: cfg.get("eta")?,
                max_steps: cfg.get("max_steps")?,
                tol: cfg.get("tol")?,
                constraint: cfg.get::<Constraint>("constraint")?,
                backtrack: cfg.get("backtrack")?,
                record_every: cfg.get("record_every")?,
            },
            spectrum: (top, gap, lo),
            energy_tol: cfg.get("energy_tol")?,
            ratio_tol: cfg.get("ratio_tol")?,
            cos_tol: cfg.get("cos_tol")?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSummary {
    pub seed: u64,
    pub steps: usize,
    pub converged: bool,
    pub final_eta: f64,
    pub halvings: usize,
    pub two_energy: f64,
    pub lambda_max: f64,
    pub sigma_ratios: Vec<f64>,
    pub input_cosine: f64,
    pub chain_cosines: Vec<f64>,
}

pub struct FlowRun {
    pub summary: FlowSummary,
    pub csv: String,
    pub checks: Vec<Check>,
}

/// `X_α` and the initial weights are both drawn from stream 3 of `seed`.
pub fn run_one(p: &Params, seed: u64) -> Result<FlowRun, CliError> {
    let mut rng = substream(seed, 3);
    let (top, gap, lo) = p.spectrum;
    let x = random_x_alpha(&mut rng, p.dim, top, gap, lo);
    let w = random_weights(&mut rng, &vec![p.dim; p.layers + 1], p.flow.constraint);
    let lam = lambda_max(&x.view())?;
    let (state, diag) = run_flow(w, x, &p.flow)?;
    let rep = check_alignment(&state, None, false)?;
    let two_energy = state.two_energy();
    let mut csv = String::new();
    for (i, line) in diag.to_csv().lines().enumerate() {
        csv.push_str(line);
        csv.push(',');
        csv.push_str(&if i == 0 { "lambda_max".to_string() } else { fmt_f64(lam) });
        csv.push('\n');
    }
    let checks = vec![
        Check::at_most(format!("seed {seed} |2E - lambda_max|"), (two_energy - lam).abs(), p.energy_tol),
        Check::at_most(format!("seed {seed} max sigma2/sigma1"), rep.max_sigma_ratio(), p.ratio_tol),
        Check::at_most(format!("seed {seed} 1 - |cos(v0, u_max)|"), 1.0 - rep.input_cosine, p.cos_tol),
    ];
    Ok(FlowRun {
        summary: FlowSummary {
            seed,
            steps: state.step,
            converged: diag.converged,
            final_eta: diag.final_eta,
            halvings: diag.halvings,
            two_energy,
            lambda_max: lam,
            sigma_ratios: rep.sigma_ratios.clone(),
            input_cosine: rep.input_cosine,
            chain_cosines: rep.chain_cosines.clone(),
        },
        csv,
        checks,
    })
}

fn gnuplot_script(layers: usize) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead outside\nset xlabel 'step'\nset ylabel 'singular value'\nset logscale x\nplot ",
    );
    let series: Vec<String> = (0..layers)
        .flat_map(|l| {
            let c1 = 3 + 2 * l;
            [format!("'flow.csv' using ($1+1):{c1} with lines lw 2 dt 1 lc {l}"), format!("'flow.csv' using ($1+1):{} with lines dt 2 lc {l}", c1 + 1)]
        })
        .collect();
    s.push_str(&series.join(", \\\n     "));
    s.push('\n');
    s
}

pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let p = Params::from_config(cfg)?;
    let run = run_one(&p, cfg.get("seed")?)?;
    out.write("flow.csv", &run.csv)?;
    out.write_json("flow.json", &run.summary)?;
    if gnuplot_enabled(cfg)? {
        out.write("flow.gp", &gnuplot_script(p.layers))?;
    }
    Ok(Report { checks: run.checks })
}
