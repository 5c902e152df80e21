#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use crate::commands::Suite;
use crate::config::{parse_assignment, RunConfig, ENV_OUTPUT_ROOT};
use crate::output::Output;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 1.
    Invalid(String),
    /// Divergence, degeneracy, failed verification: exit code 2.
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<thinfilm::Error> for CliError {
    fn from(e: thinfilm::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

/// Thin film experiments around the self-similar droplet.
///
/// Any configuration key can be overridden as `--section.key=value`, e.g. `--model.dim=2`
/// or `--initial.kind=eigen --initial.rank=1 --initial.amplitude=1`.
#[derive(Parser, Debug)]
#[command(name = "tfe", version)]
struct Cli {
    /// TOML configuration file; unspecified keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Run a parameter sweep, e.g. `--sweep disc.k_max=8,12,16`; repeat for a product.
    #[arg(long, global = true)]
    sweep: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Eigenvalues of the discrete operator.
    Spectrum,
    /// Linear evolution from the initial datum (`exact` or `euler`).
    EvolveLinear,
    /// Nonlinear evolution (`picard` or `semi-implicit`).
    EvolveNonlinear,
    /// Nonlinearity, physical profile and free boundary of the initial datum.
    Transform,
    /// Whitney norms of the linear flow and of its nonlinearity.
    Norms,
    /// Numerical verification suites.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Configuration utilities.
    Config {
        /// Print the full default configuration as TOML.
        #[arg(long)]
        print_defaults: bool,
    },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Spectrum => "spectrum".into(),
            Command::EvolveLinear => "evolve-linear".into(),
            Command::EvolveNonlinear => "evolve-nonlinear".into(),
            Command::Transform => "transform".into(),
            Command::Norms => "norms".into(),
            Command::Verify { suite } => format!("verify {suite:?}").to_lowercase(),
            Command::Config { .. } => "config".into(),
        }
    }
}

/// Separates `--section.key=value` overrides from the clap arguments.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--") {
            Some(body) if body.split('=').next().is_some_and(|k| k.contains('.')) => {
                overrides.push(parse_assignment(body)?);
            }
            _ => rest.push(a),
        }
    }
    Ok((rest, overrides))
}

fn run_one(cfg: &RunConfig, cmd: &Command) -> Result<(), CliError> {
    let dir = cfg.output_dir();
    let mut out = Output::open(&dir, cfg)?;
    let result = match cmd {
        Command::Spectrum => commands::spectrum(cfg, &mut out),
        Command::EvolveLinear => commands::evolve_linear(cfg, &mut out),
        Command::EvolveNonlinear => commands::evolve_nonlinear(cfg, &mut out),
        Command::Transform => commands::transform(cfg, &mut out),
        Command::Norms => commands::norms(cfg, &mut out),
        Command::Verify { suite } => commands::verify(cfg, &mut out, *suite).and_then(|passed| {
            if passed {
                Ok(())
            } else {
                Err(CliError::Numerical(format!("{} failed, see {}", cmd.name(), dir.join("report.json").display())))
            }
        }),
        Command::Config { .. } => unreachable!("handled before dispatch"),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    out.finish(&cmd.name(), cfg, &status)?;
    result
}

/// Expands `key=a,b,c` sweeps into labelled override sets (cartesian product).
fn expand_sweeps(sweeps: &[String]) -> Result<Vec<(String, Vec<(String, String)>)>, CliError> {
    let mut sets: Vec<(String, Vec<(String, String)>)> = vec![(String::new(), Vec::new())];
    for s in sweeps {
        let (key, values) = parse_assignment(s)?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Invalid(format!("sweep `{s}` has no values")));
        }
        let mut next = Vec::new();
        for (label, ov) in &sets {
            for v in &values {
                let mut ov = ov.clone();
                ov.push((key.clone(), v.to_string()));
                let sep = if label.is_empty() { "" } else { "__" };
                next.push((format!("{label}{sep}{key}={v}"), ov));
            }
        }
        sets = next;
    }
    Ok(sets)
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let (args, overrides) = split_overrides(args)?;
    let defaults = RunConfig::default().to_toml();
    let help = format!(
        "Output root: relative output.dir values resolve against ${ENV_OUTPUT_ROOT} when set.\n\
         Exit codes: 0 success, 1 invalid input, 2 numerical failure or failed verification.\n\n\
         Defaults:\n\n{defaults}"
    );
    let matches = match Cli::command().after_long_help(help).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            // help and version requests exit 0, usage errors are validation errors
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Command::Config { print_defaults } = cli.command {
        let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
        if print_defaults {
            print!("{defaults}");
        } else {
            print!("{}", cfg.to_toml());
        }
        return Ok(());
    }
    if cli.sweep.is_empty() {
        let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
        return run_one(&cfg, &cli.command);
    }
    let base = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let root = base.output_dir();
    let mut runs = Vec::new();
    for (label, sweep_ov) in expand_sweeps(&cli.sweep)? {
        let mut ov = overrides.clone();
        ov.extend(sweep_ov);
        ov.push(("output.dir".into(), root.join(&label).display().to_string()));
        runs.push((label, RunConfig::load(cli.config.as_deref(), &ov)?));
    }
    let results: Vec<Result<(), CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs.iter().map(|(_, cfg)| s.spawn(|| run_one(cfg, &cli.command))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let index: Vec<_> = runs
        .iter()
        .zip(&results)
        .map(|((label, cfg), r)| {
            json!({"dir": label, "config_hash": cfg.hash(),
                   "status": r.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into())})
        })
        .collect();
    std::fs::create_dir_all(&root).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = serde_json::to_string_pretty(&json!({"command": cli.command.name(), "runs": index}))
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(root.join("sweep.json"), text).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut worst: Option<CliError> = None;
    for ((label, _), r) in runs.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("{label}: {e}");
            if worst.as_ref().is_none_or(|w| e.code() > w.code()) {
                worst = Some(e);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tfe: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_from_flags() {
        let args = ["tfe", "--model.dim=2", "spectrum", "--config", "a.toml", "--disc.k_max=4"];
        let (rest, ov) = split_overrides(args.iter().map(|s| s.to_string()).collect()).unwrap();
        assert_eq!(rest, ["tfe", "spectrum", "--config", "a.toml"]);
        assert_eq!(ov.len(), 2);
        assert_eq!(ov[1], ("disc.k_max".to_string(), "4".to_string()));
    }

    #[test]
    fn sweeps_form_a_product() {
        let sets = expand_sweeps(&["disc.k_max=4,8".into(), "model.dim=1,2".into()]).unwrap();
        assert_eq!(sets.len(), 4);
        assert_eq!(sets[3].0, "disc.k_max=8__model.dim=2");
    }
}
