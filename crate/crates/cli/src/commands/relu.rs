use alphacl::export::matrix_csv;
use alphacl::importance::PairImportance;
use alphacl::relu_dynamics::{
    diversity_classify, generate_mixture, mixture_x_alpha, one_node_experiment, relu_gradient_step, run_sticky,
    sticky_flow_step, winner_histogram, xalpha_structure_check, Diversity, Mixture, MixtureConfig, Relu2State,
    StickyRunConfig,
};
use alphacl::rng::{derive_seed, substream, uniform_matrix};
use ndarray::Array2;
use serde::Serialize;

use super::{gnuplot_enabled, Check, Report};
use crate::config::Config;
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULTS: &[(&str, &str)] = &[
    ("experiment", "all"),
    ("modes", "4"),
    ("hidden", "4"),
    ("out_dim", "4"),
    ("samples", "12"),
    ("eta", "0.05"),
    ("max_steps", "200000"),
    ("runs", "20"),
    ("sticky_steps", "1000"),
    ("sticky_tol", "1e-8"),
    ("one_node_modes", "2,3,5"),
    ("one_node_tol", "1e-6"),
    ("amp_lo", "0.5"),
    ("amp_hi", "1.5"),
    ("gamma_lo", "0.5"),
    ("gamma_hi", "1.5"),
    ("diversity_gamma_lo", "1.5"),
    ("diversity_gamma_hi", "2.5"),
    ("alpha_lo", "0.2"),
    ("alpha_hi", "1.0"),
    ("gnuplot", "false"),
    ("seed", "0"),
];

#[derive(Debug, Clone)]
pub struct Params {
    pub experiments: Vec<String>,
    pub modes: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub samples: usize,
    pub eta: f64,
    pub max_steps: usize,
    pub runs: usize,
    pub sticky_steps: usize,
    pub sticky_tol: f64,
    pub one_node_modes: Vec<usize>,
    pub one_node_tol: f64,
    pub amplitude: (f64, f64),
    pub gamma: (f64, f64),
    /// Stronger augmentation for the diversity runs, where rank-2 optima exist.
    pub diversity_gamma: (f64, f64),
    pub alpha: (f64, f64),
}

pub const EXPERIMENTS: [&str; 4] = ["sticky", "one_node", "structure", "diversity"];

impl Params {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let experiments = if cfg.raw("experiment")? == "all" {
            EXPERIMENTS.iter().map(|s| s.to_string()).collect()
        } else {
            let list: Vec<String> = cfg.list("experiment")?;
            if let Some(bad) = list.iter().find(|e| !EXPERIMENTS.contains(&e.as_str())) {
                return Err(CliError::Usage(format!("unknown experiment `{bad}`; choose from {EXPERIMENTS:?} or all")));
            }
            list
        };
        let (alo, ahi): (f64, f64) = (cfg.get("alpha_lo")?, cfg.get("alpha_hi")?);
        if !(alo > 0.0 && ahi > alo) {
            return Err(CliError::Usage(format!("alpha range must satisfy 0 < lo < hi, got ({alo}, {ahi})")));
        }
        Ok(Params {
            experiments,
            modes: cfg.get("modes")?,
            hidden: cfg.get("hidden")?,
            out_dim: cfg.get("out_dim")?,
            samples: cfg.get("samples")?,
            eta: cfg.get("eta")?,
            max_steps: cfg.get("max_steps")?,
            runs: cfg.get("runs")?,
            sticky_steps: cfg.get("sticky_steps")?,
            sticky_tol: cfg.get("sticky_tol")?,
            one_node_modes: cfg.list("one_node_modes")?,
            one_node_tol: cfg.get("one_node_tol")?,
            amplitude: (cfg.get("amp_lo")?, cfg.get("amp_hi")?),
            gamma: (cfg.get("gamma_lo")?, cfg.get("gamma_hi")?),
            diversity_gamma: (cfg.get("diversity_gamma_lo")?, cfg.get("diversity_gamma_hi")?),
            alpha: (alo, ahi),
        })
    }

    fn draw(&self, modes: usize, samples: usize, seed: u64) -> Result<(Mixture, PairImportance, Array2<f64>), CliError> {
        self.draw_with(self.gamma, modes, samples, seed)
    }

    fn draw_with(
        &self,
        gamma: (f64, f64),
        modes: usize,
        samples: usize,
        seed: u64,
    ) -> Result<(Mixture, PairImportance, Array2<f64>), CliError> {
        let cfg = MixtureConfig { amplitude: self.amplitude, gamma, ..MixtureConfig::new(modes, samples, seed) };
        let mix = generate_mixture(&cfg)?;
        let mut rng = substream(seed, 1);
        let pi = PairImportance::new(uniform_matrix(&mut rng, samples, samples, self.alpha.0, self.alpha.1))?;
        let xa = mixture_x_alpha(&pi, &mix.batch)?;
        Ok((mix, pi, xa))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub seed: u64,
    pub steps: usize,
    pub converged: bool,
    pub two_energy: f64,
    /// `rank1_single_mode`, `higher_rank`, `rank1_multi_mode` or `declined`.
    pub branch: String,
    pub rank: usize,
    pub mode: Option<usize>,
}

#[derive(Debug, Default, Serialize)]
pub struct ReluOutputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sticky_max_gap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub one_node: Vec<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_passed: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diversity: Vec<Classification>,
    #[serde(skip)]
    pub files: Vec<(String, String)>,
}

fn sticky(p: &Params, seed: u64, checks: &mut Vec<Check>, out: &mut ReluOutputs) -> Result<(), CliError> {
    let mut worst: f64 = 0.0;
    for r in 0..p.runs.min(10) {
        let s = derive_seed(seed, r as u64);
        let (mix, pi, xa) = p.draw(p.modes, p.samples, s)?;
        let mut state = Relu2State::random(&mut substream(s, 2), p.hidden, p.modes, p.out_dim, p.eta);
        for _ in 0..p.sticky_steps {
            let a = sticky_flow_step(&state, &xa)?;
            let b = relu_gradient_step(&state, &mix.batch, &pi)?;
            let gap = a.w1.iter().zip(b.w1.iter()).chain(a.w2.iter().zip(b.w2.iter())).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            worst = worst.max(gap);
            state = a;
        }
    }
    checks.push(Check::at_most("sticky vs ReLU gradient step", worst, p.sticky_tol));
    out.sticky_max_gap = Some(worst);
    Ok(())
}

fn one_node(p: &Params, seed: u64, checks: &mut Vec<Check>, out: &mut ReluOutputs) -> Result<(), CliError> {
    for &m in &p.one_node_modes {
        let mut runs = Vec::new();
        for r in 0..p.runs.max(1) * 5 {
            let s = derive_seed(seed, (m * 100_000 + r) as u64);
            let (_, _, xa) = p.draw(m, 3 * m, s)?;
            runs.extend(one_node_experiment(&xa, &[derive_seed(s, 2)], p.eta, p.max_steps)?);
        }
        let bad = runs.iter().filter(|r| !r.converged || r.residual > p.one_node_tol).count();
        let worst = runs.iter().map(|r| r.residual).fold(0.0, f64::max);
        checks.push(
            Check::at_most(format!("one-node M={m} max ||w1 - e_m||"), worst, p.one_node_tol),
        );
        checks.push(Check::holds(format!("one-node M={m} every run one-hot"), bad == 0, format!("{bad} of {} not", runs.len())));
        out.one_node.push(serde_json::json!({
            "modes": m,
            "runs": runs.len(),
            "winners": winner_histogram(&runs, m),
            "max_residual": worst,
            "max_steps": runs.iter().map(|r| r.steps).max().unwrap_or(0),
        }));
    }
    Ok(())
}

fn structure(p: &Params, seed: u64, checks: &mut Vec<Check>, out: &mut ReluOutputs) -> Result<(), CliError> {
    let draws = (p.runs * 5 / 2).max(1);
    let (mut passed, mut applicable) = (0, 0);
    for r in 0..draws {
        let s = derive_seed(seed, r as u64);
        let m = 2 + r % 5;
        let (mix, pi, _) = p.draw(m, m + (r % (2 * m + 1)), s)?;
        let rep = xalpha_structure_check(&pi, &mix.batch)?;
        if rep.skipped.is_none() {
            applicable += 1;
            passed += usize::from(rep.passed());
        }
    }
    checks.push(Check::holds(
        "X_alpha sign structure",
        passed == applicable && applicable > 0,
        format!("{passed}/{applicable} draws"),
    ));
    out.structure_passed = Some(passed);
    Ok(())
}

fn diversity(p: &Params, seed: u64, checks: &mut Vec<Check>, out: &mut ReluOutputs) -> Result<(), CliError> {
    let mut first_higher: Option<Relu2State> = None;
    let mut traced = false;
    for r in 0..p.runs {
        let s = derive_seed(seed, r as u64);
        let (_, _, xa) = p.draw_with(p.diversity_gamma, p.modes, p.samples, s)?;
        let init = Relu2State::random(&mut substream(s, 2), p.hidden, p.modes, p.out_dim, p.eta);
        let cfg = StickyRunConfig { max_steps: p.max_steps, record_every: if traced { 0 } else { 1 }, ..Default::default() };
        let run = run_sticky(init, &xa, &cfg)?;
        if !traced {
            out.files.push(("relu_trace.csv".into(), run.to_csv()));
            traced = true;
        }
        let e = run.state.two_energy(&xa);
        let (branch, rank, mode) = match diversity_classify(&run.state, &xa) {
            Ok(Diversity::Rank1SingleMode { mode, .. }) => ("rank1_single_mode", 1, Some(mode)),
            Ok(Diversity::HigherRank { rank }) => {
                if first_higher.is_none() {
                    first_higher = Some(run.state.clone());
                }
                ("higher_rank", rank, None)
            }
            Ok(Diversity::Rank1MultiMode { .. }) => ("rank1_multi_mode", 1, None),
            Err(_) => ("declined", 0, None),
        };
        out.diversity.push(Classification {
            seed: s,
            steps: run.state.step,
            converged: run.converged,
            two_energy: e,
            branch: branch.into(),
            rank,
            mode,
        });
    }
    let converged: Vec<&Classification> = out.diversity.iter().filter(|c| c.converged).collect();
    let higher = converged.iter().filter(|c| c.branch == "higher_rank").count();
    let unclassified = converged.iter().filter(|c| c.branch == "rank1_multi_mode" || c.branch == "declined").count();
    checks.push(Check::holds("diversity: some run reaches rank >= 2", higher > 0, format!("{higher}/{} converged runs", converged.len())));
    checks.push(Check::holds("diversity: every converged state classified", unclassified == 0, format!("{unclassified} unclassified")));
    if let Some(state) = first_higher {
        out.files.push(("relu_w1.csv".into(), matrix_csv(&state.w1.view(), "mode")));
        out.files.push(("relu_w2tw2.csv".into(), matrix_csv(&state.w2.t().dot(&state.w2).view(), "node")));
    }
    Ok(())
}

pub fn experiments(p: &Params, seed: u64) -> Result<(Vec<Check>, ReluOutputs), CliError> {
    let mut checks = Vec::new();
    let mut out = ReluOutputs::default();
    for (i, e) in p.experiments.iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        match e.as_str() {
            "sticky" => sticky(p, s, &mut checks, &mut out)?,
            "one_node" => one_node(p, s, &mut checks, &mut out)?,
            "structure" => structure(p, s, &mut checks, &mut out)?,
            "diversity" => diversity(p, s, &mut checks, &mut out)?,
            _ => unreachable!("validated in Params::from_config"),
        }
    }
    Ok((checks, out))
}

const HEATMAP_GP: &str = "set datafile separator ','\nset view map\nset xlabel 'mode'\nset ylabel 'hidden node'\n\
set multiplot layout 1,2\nset title 'W1'\nplot 'relu_w1.csv' matrix rowheaders columnheaders with image\n\
set title 'W2^T W2'\nplot 'relu_w2tw2.csv' matrix rowheaders columnheaders with image\nunset multiplot\n";

pub fn run(cfg: &Config, out: &mut OutDir) -> Result<Report, CliError> {
    let p = Params::from_config(cfg)?;
    let (checks, outputs) = experiments(&p, cfg.get("seed")?)?;
    for (name, text) in &outputs.files {
        out.write(name, text)?;
    }
    out.write_json("relu.json", &outputs)?;
    if gnuplot_enabled(cfg)? && outputs.files.iter().any(|(n, _)| n == "relu_w1.csv") {
        out.write("relu.gp", HEATMAP_GP)?;
    }
    Ok(Report { checks })
}
