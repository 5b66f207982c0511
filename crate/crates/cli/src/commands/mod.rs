//! One module per subcommand. Each exposes its default configuration and a
//! `run` that writes outputs and returns the checks it executed.

pub mod alpha_solve;
pub mod flow;
pub mod grad_check;
pub mod relu;
pub mod train;
pub mod verify_all;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), pass: value <= limit, value, limit, detail: String::new() }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), pass: value >= limit, value, limit, detail: String::new() }
    }

    pub fn holds(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Check { name: name.into(), pass, value: v, limit: 1.0, detail: detail.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn line(&self) -> String {
        let mut s = format!("{}: {:.3e} (limit {:.1e})", self.name, self.value, self.limit);
        if !self.detail.is_empty() {
            s.push(' ');
            s.push_str(&self.detail);
        }
        s
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failure_report(&self, subcommand: &str) -> serde_json::Value {
        let failed: Vec<&Check> = self.checks.iter().filter(|c| !c.pass).collect();
        serde_json::json!({ "subcommand": subcommand, "failed": failed })
    }
}

/// Subcommand name and defaults, for replaying manifests.
pub fn lookup(name: &str) -> Option<(&'static str, &'static [(&'static str, &'static str)])> {
    Some(match name {
        "grad-check" => ("grad-check", grad_check::DEFAULTS),
        "alpha-solve" => ("alpha-solve", alpha_solve::DEFAULTS),
        "flow" => ("flow", flow::DEFAULTS),
        "relu" => ("relu", relu::DEFAULTS),
        "train" => ("train", train::DEFAULTS),
        "verify-all" => ("verify-all", verify_all::DEFAULTS),
        _ => return None,
    })
}

pub fn gnuplot_enabled(cfg: &crate::config::Config) -> Result<bool, crate::CliError> {
    cfg.get("gnuplot")
}
