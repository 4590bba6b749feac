//! `qmslab`: run dissipative bosonic experiments from JSON scenario files and
//! certify the analytic bounds against the numerics.
//!
//! Exit codes: 0 success, 1 usage, 2 schema or runtime failure, 3 resource
//! budget exceeded, 4 dominance assertion failed.

mod config;
mod report;
mod run;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use config::ScenarioConfig;
use run::{run_scenario, Ctx, ScenarioOutcome};

/// Failures carry their process exit code class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
    Schema(String),
    Budget(String),
    Dominance(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) | Failure::Schema(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Dominance(_) => 4,
        }
    }

    pub fn from_core(e: qmslab_core::Error) -> Self {
        match e {
            qmslab_core::Error::Budget { .. } => Failure::Budget(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m)
            | Failure::Invalid(m)
            | Failure::Schema(m)
            | Failure::Budget(m)
            | Failure::Dominance(m) => write!(f, "{m}"),
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    (
        "twophoton-regularization",
        include_str!("../scenarios/twophoton-regularization.json"),
    ),
    (
        "twophoton-cptp",
        include_str!("../scenarios/twophoton-cptp.json"),
    ),
    (
        "catcode-convergence",
        include_str!("../scenarios/catcode-convergence.json"),
    ),
    (
        "catcode-perturbed",
        include_str!("../scenarios/catcode-perturbed.json"),
    ),
    (
        "catcode-steady",
        include_str!("../scenarios/catcode-steady.json"),
    ),
    (
        "multimode-chain",
        include_str!("../scenarios/multimode-chain.json"),
    ),
];

#[derive(Parser)]
#[command(
    name = "qmslab",
    version,
    about = "Dissipative bosonic quantum Markov semigroups on truncated Fock spaces, \
             with certified moment bounds"
)]
struct Cli {
    /// Scenario file path, or the name of a bundled scenario.
    #[arg(long, global = true, env = "QMSLAB_CONFIG")]
    config: Option<String>,

    /// Output directory for scenario results.
    #[arg(long, global = true, env = "QMSLAB_OUT", default_value = "out")]
    out: PathBuf,

    /// Seed for all randomized probe sampling.
    #[arg(long, global = true, env = "QMSLAB_SEED", default_value_t = 20250810)]
    seed: u64,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, env = "QMSLAB_JOBS")]
    jobs: Option<usize>,

    /// Cap on the total Hilbert-space dimension D^m.
    #[arg(long = "budget-dim", global = true, env = "QMSLAB_BUDGET_DIM", default_value_t = qmslab_core::gksl::DEFAULT_DIM_BUDGET)]
    budget_dim: usize,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a master equation and record trajectory scalars.
    Evolve,
    /// Compare trajectory moments against a closed-form bound.
    Certify,
    /// Cat-code convergence and perturbation experiments.
    Catcode,
    /// Weighted multi-mode stability check on a lattice model.
    Multimode,
    /// Fan a scenario out over a parameter list and merge the reports.
    Sweep {
        /// Parameter to vary: a unique key name or a JSON pointer like
        /// /certify/certificate/k.
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values (parsed as JSON scalars).
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Run the full acceptance suite.
    Selftest,
}

fn load_config(spec: &str) -> Result<(String, String), Failure> {
    let path = PathBuf::from(spec);
    if path.exists() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        return Ok((text, path.display().to_string()));
    }
    if let Some((name, text)) = BUNDLED.iter().find(|(n, _)| *n == spec) {
        return Ok((text.to_string(), format!("bundled:{name}")));
    }
    let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
    Err(Failure::Usage(format!(
        "'{spec}' is neither a file nor a bundled scenario (bundled: {})",
        names.join(", ")
    )))
}

fn require_section(cfg: &ScenarioConfig, want: &str) -> Result<(), Failure> {
    if cfg.kind() != want {
        return Err(Failure::Schema(format!(
            "subcommand '{want}' needs a scenario with a '{want}' section, found '{}'",
            cfg.kind()
        )));
    }
    Ok(())
}

fn scenario_command(cli: &Cli, want: &str) -> Result<ScenarioOutcome, Failure> {
    let spec = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required for this subcommand".into()))?;
    let (text, origin) = load_config(spec)?;
    let cfg = ScenarioConfig::parse(&text)?;
    require_section(&cfg, want)?;
    let ctx = Ctx {
        out: cli.out.clone(),
        seed: cli.seed,
        budget_dim: cli.budget_dim,
    };
    eprintln!("running scenario '{}' from {origin}", cfg.name);
    let outcome = run_scenario(&cfg, &ctx)?;
    eprintln!(
        "scenario '{}': {}",
        outcome.name,
        if outcome.pass { "PASS" } else { "FAIL (dominance)" }
    );
    Ok(outcome)
}

/// Find the unique JSON pointer ending in `key`, for sweep addressing.
fn find_pointer(value: &serde_json::Value, key: &str) -> Vec<String> {
    fn walk(v: &serde_json::Value, path: &str, key: &str, hits: &mut Vec<String>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, child) in map {
                    let p = format!("{path}/{k}");
                    if k == key {
                        hits.push(p.clone());
                    }
                    walk(child, &p, key, hits);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(child, &format!("{path}/{i}"), key, hits);
                }
            }
            _ => {}
        }
    }
    let mut hits = Vec::new();
    walk(value, "", key, &mut hits);
    hits
}

fn sanitize(v: &str) -> String {
    v.chars()
        .map(|c| if c.is_alphanumeric() || "-._".contains(c) { c } else { '_' })
        .collect()
}

fn sweep_command(cli: &Cli, param: &str, values: &[String]) -> Result<u8, Failure> {
    let spec = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required for sweep".into()))?;
    let (text, _) = load_config(spec)?;
    let base: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("config: {e}")))?;

    let pointer = if param.starts_with('/') {
        param.to_string()
    } else {
        let hits = find_pointer(&base, param);
        match hits.len() {
            1 => hits.into_iter().next().unwrap(),
            0 => return Err(Failure::Schema(format!("parameter '{param}' not found"))),
            n => {
                return Err(Failure::Schema(format!(
                    "parameter '{param}' is ambiguous ({n} occurrences); use a JSON pointer"
                )))
            }
        }
    };
    if base.pointer(&pointer).is_none() {
        return Err(Failure::Schema(format!("no config entry at '{pointer}'")));
    }

    let ctx = Ctx {
        out: cli.out.clone(),
        seed: cli.seed,
        budget_dim: cli.budget_dim,
    };
    let base_name = base
        .get("name")
        .and_then(|n| n.as_str())
        .unwrap_or("sweep")
        .to_string();

    let cells: Vec<(usize, String)> = values
        .iter()
        .cloned()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .collect();

    let results: Vec<(String, Result<ScenarioOutcome, Failure>)> = cells
        .par_iter()
        .map(|(_, raw)| {
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            let mut doc = base.clone();
            *doc.pointer_mut(&pointer).unwrap() = parsed.clone();
            let cell_name = format!(
                "{base_name}__{}={}",
                sanitize(pointer.rsplit('/').next().unwrap_or("param")),
                sanitize(raw)
            );
            if let Some(n) = doc.get_mut("name") {
                *n = serde_json::Value::String(cell_name.clone());
            }
            let outcome = (|| {
                let cfg = ScenarioConfig::parse(&doc.to_string())?;
                run_scenario(&cfg, &ctx)
            })();
            (cell_name, outcome)
        })
        .collect();

    let mut rows = Vec::new();
    let mut worst: u8 = 0;
    for (cell, res) in &results {
        match res {
            Ok(o) => {
                if !o.pass {
                    worst = worst.max(4);
                }
                rows.push(serde_json::json!({
                    "cell": cell, "pass": o.pass, "summary": o.summary,
                }));
            }
            Err(f) => {
                worst = worst.max(f.code());
                rows.push(serde_json::json!({
                    "cell": cell, "pass": false, "error": f.to_string(),
                }));
            }
        }
    }

    let dir = report::OutputDir::create(&ctx.out, &format!("{base_name}__sweep"))?;
    let mut csv = String::from("cell,pass\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{}\n",
            row["cell"].as_str().unwrap_or(""),
            row["pass"]
        ));
    }
    dir.write("sweep.csv", &csv)?;
    dir.write_json(
        "sweep.json",
        &serde_json::json!({ "param": pointer, "cells": rows }),
    )?;
    eprintln!("sweep complete: {} cells", results.len());
    Ok(worst)
}

fn selftest_command(cli: &Cli) -> u8 {
    let reports = qmslab_core::suite::run_all(cli.seed);
    let mut failed = false;
    for r in &reports {
        println!("{}", r.line());
        failed |= !r.pass;
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    println!("selftest: {passed}/{} criteria passed", reports.len());
    if failed {
        4
    } else {
        0
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }

    let result: Result<u8, Failure> = match &cli.cmd {
        Cmd::Evolve => scenario_command(&cli, "evolve").map(|o| if o.pass { 0 } else { 4 }),
        Cmd::Certify => scenario_command(&cli, "certify").map(|o| if o.pass { 0 } else { 4 }),
        Cmd::Catcode => scenario_command(&cli, "catcode").map(|o| if o.pass { 0 } else { 4 }),
        Cmd::Multimode => scenario_command(&cli, "multimode").map(|o| if o.pass { 0 } else { 4 }),
        Cmd::Sweep { param, values } => sweep_command(&cli, param, values),
        Cmd::Selftest => Ok(selftest_command(&cli)),
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
