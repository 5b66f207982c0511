//! `alphacl`: command-line driver for the experiments and verification suites.
//!
//! Exit codes: 0 when every executed check passes, 1 when a check fails or a
//! run errors, 2 for usage and configuration errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Check, Report};
use config::Config;
use output::{resolve_out_dir, unix_millis, OutDir, RunManifest, MANIFEST_FILE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(alphacl::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<alphacl::Error> for CliError {
    fn from(e: alphacl::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "alphacl", version, about = "Pair-weighted contrastive learning experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $ALPHACL_OUT_DIR/<subcommand> or alphacl-out/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Declares a subcommand's flags; each maps onto one config key.
macro_rules! flag_args {
    ($name:ident { $($field:ident : $ty:ty => $key:literal),* $(,)? }) => {
        #[derive(Debug, Args)]
        struct $name {
            #[command(flatten)]
            common: Common,
            $(
                #[arg(long)]
                $field: Option<$ty>,
            )*
        }

        impl $name {
            fn overrides(&self) -> Vec<(&'static str, String)> {
                #[allow(unused_mut)]
                let mut v = Vec::new();
                if let Some(s) = self.common.seed {
                    v.push(("seed", s.to_string()));
                }
                $(
                    if let Some(x) = &self.$field {
                        v.push(($key, x.to_string()));
                    }
                )*
                v
            }
        }
    };
}

flag_args!(GradCheckArgs {
    loss: String => "loss",
    tau: f64 => "tau",
    eps: f64 => "eps",
    c: f64 => "c",
    n: usize => "n",
    dim: usize => "dim",
    batches: usize => "batches",
    tol: f64 => "tol",
});

flag_args!(AlphaSolveArgs {
    reg: String => "reg",
    entropy_tau: f64 => "entropy_tau",
    inverse_tau: f64 => "inverse_tau",
    gamma: f64 => "gamma",
    square_tau: f64 => "square_tau",
    n: usize => "n",
    matrices: usize => "matrices",
    tol: f64 => "tol",
});

flag_args!(FlowArgs {
    layers: usize => "layers",
    dim: usize => "dim",
    eta: f64 => "eta",
    max_steps: usize => "max_steps",
    constraint: String => "constraint",
    record_every: usize => "record_every",
    gap: f64 => "gap",
    gnuplot: bool => "gnuplot",
});

flag_args!(ReluArgs {
    experiment: String => "experiment",
    modes: usize => "modes",
    hidden: usize => "hidden",
    out_dim: usize => "out_dim",
    samples: usize => "samples",
    eta: f64 => "eta",
    runs: usize => "runs",
    gamma_lo: f64 => "gamma_lo",
    gamma_hi: f64 => "gamma_hi",
    diversity_gamma_lo: f64 => "diversity_gamma_lo",
    diversity_gamma_hi: f64 => "diversity_gamma_hi",
    gnuplot: bool => "gnuplot",
});

flag_args!(TrainArgs {
    variant: String => "variant",
    optimizer: String => "optimizer",
    lr: f64 => "lr",
    batch_size: usize => "batch_size",
    epochs: usize => "epochs",
    hidden: String => "hidden",
    output_dim: usize => "output_dim",
    head: String => "head",
    task_seed: u64 => "task_seed",
    classes: usize => "classes",
    per_class: usize => "per_class",
    input_dim: usize => "input_dim",
});

flag_args!(VerifyAllArgs {
    threads: usize => "threads",
});

#[derive(Debug, Args)]
struct RerunArgs {
    /// Manifest written by an earlier run.
    manifest: PathBuf,
    /// Output directory (default: `rerun/` next to the manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Loss/energy gradient identity over the loss catalog.
    GradCheck(GradCheckArgs),
    /// Pair-importance solvers against their optimality conditions.
    AlphaSolve(AlphaSolveArgs),
    /// Deep linear gradient flow and its rank-one limit.
    Flow(FlowArgs),
    /// Two-layer ReLU experiments on orthogonal-mixture data.
    Relu(ReluArgs),
    /// Train the toy encoder with one loss variant and probe it.
    Train(TrainArgs),
    /// Every property suite, in parallel with derived seeds.
    VerifyAll(VerifyAllArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

struct Plan {
    subcommand: &'static str,
    config: Config,
    out: PathBuf,
}

fn resolve(
    subcommand: &'static str,
    defaults: &[(&str, &str)],
    common: &Common,
    flags: Vec<(&'static str, String)>,
) -> Result<Plan, CliError> {
    let mut config = Config::from_defaults(defaults);
    if let Some(path) = &common.config {
        config.overlay_file(path)?;
    }
    config.overlay(flags, "flags")?;
    Ok(Plan { subcommand, config, out: resolve_out_dir(common.out.as_deref(), subcommand) })
}

fn plan(cmd: Command) -> Result<Plan, CliError> {
    use commands::*;
    match cmd {
        Command::GradCheck(a) => resolve("grad-check", grad_check::DEFAULTS, &a.common, a.overrides()),
        Command::AlphaSolve(a) => resolve("alpha-solve", alpha_solve::DEFAULTS, &a.common, a.overrides()),
        Command::Flow(a) => resolve("flow", flow::DEFAULTS, &a.common, a.overrides()),
        Command::Relu(a) => resolve("relu", relu::DEFAULTS, &a.common, a.overrides()),
        Command::Train(a) => resolve("train", train::DEFAULTS, &a.common, a.overrides()),
        Command::VerifyAll(a) => resolve("verify-all", verify_all::DEFAULTS, &a.common, a.overrides()),
        Command::Rerun(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let (subcommand, defaults) = commands::lookup(&m.subcommand)
                .ok_or_else(|| CliError::Usage(format!("manifest names unknown subcommand `{}`", m.subcommand)))?;
            let mut config = Config::from_defaults(defaults);
            config.overlay(&m.config, "manifest")?;
            let out = a.out.unwrap_or_else(|| a.manifest.parent().unwrap_or(std::path::Path::new(".")).join("rerun"));
            Ok(Plan { subcommand, config, out })
        }
    }
}

fn execute(plan: &Plan, out: &mut OutDir) -> Result<Report, CliError> {
    use commands::*;
    let cfg = &plan.config;
    match plan.subcommand {
        "grad-check" => grad_check::run(cfg, out),
        "alpha-solve" => alpha_solve::run(cfg, out),
        "flow" => flow::run(cfg, out),
        "relu" => relu::run(cfg, out),
        "train" => train::run(cfg, out),
        "verify-all" => verify_all::run(cfg, out),
        other => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    }
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.line());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let plan = match plan(cli.command) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("alphacl: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let started = unix_millis();
    let mut out = match OutDir::create(plan.out.clone()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("alphacl: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let result = execute(&plan, &mut out);
    let (status, code, error) = match &result {
        Ok(report) => {
            print_checks(&report.checks);
            if report.passed() {
                ("pass", 0u8, None)
            } else {
                let failures = report.failure_report(plan.subcommand);
                match out.write_json("failures.json", &failures) {
                    Ok(()) => println!("{}", serde_json::to_string(&failures).unwrap_or_default()),
                    Err(e) => eprintln!("alphacl: {e}"),
                }
                ("fail", 1, None)
            }
        }
        Err(e) => {
            eprintln!("alphacl: {e}");
            ("error", e.exit_code(), Some(e.to_string()))
        }
    };
    let manifest = RunManifest {
        subcommand: plan.subcommand.to_string(),
        config: plan.config.values().clone(),
        seed: plan.config.get("seed").unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: unix_millis(),
        status: status.to_string(),
        exit_code: i32::from(code),
        outputs: out.written().to_vec(),
        error,
    };
    if let Err(e) = out.write_json(MANIFEST_FILE, &manifest) {
        eprintln!("alphacl: {e}");
        return ExitCode::from(1);
    }
    println!("outputs in {}", out.root().display());
    ExitCode::from(code)
}
