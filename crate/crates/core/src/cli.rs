//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::error::Error;
use crate::harness::{
    converge, evaluate, ode_oracle, sweep, ScenarioConfig, Suite, SweepParam, DEFAULT_CONVERGENCE_HORIZON,
};
use crate::io::{
    checks_text, convergence_csv, load_config, oracle_csv, sweep_csv, write_atomic, write_run,
};
use crate::timestepper::{run, RunOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "haptosim", version, about = "Haptotaxis–virus model simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; omitted keys take the default scenario's values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `outputs.dir` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one scenario and write its functionals and snapshots.
    Run(Common),
    /// Run a scenario and evaluate check suites against it.
    Check {
        #[command(flatten)]
        common: Common,
        /// all, boundedness, decay, stabilization or lyapunov
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
    /// Run one variant per value of a model constant.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// mu, beta, d_w or d_z
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Grid-refinement study against the finest grid.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Cells per direction; each must divide the largest.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_CONVERGENCE_HORIZON)]
        horizon: f64,
    },
    /// Integrate the homogeneous ODE reduction of a uniform initial state.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-5)]
        dt_ref: f64,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn setup(common: &Common) -> Result<(ScenarioConfig, PathBuf), Error> {
    let cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::paper_default(),
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

/// Runs and writes artifacts; `Err` carries the exit code after a failed run.
fn run_and_write(cfg: &ScenarioConfig, out: &Path) -> Result<Result<RunOutput, i32>, Error> {
    match run(cfg) {
        Ok(output) => {
            write_run(out, cfg, &output, None)?;
            info!("{} records, stop reason {}", output.records.len(), output.stop_reason);
            Ok(Ok(output))
        }
        Err(failure) => {
            if failure.error.is_numerical() {
                write_run(out, cfg, &failure.partial, Some(&failure.error))?;
            }
            eprintln!("error: {failure}");
            Ok(Err(exit_code(&failure.error)))
        }
    }
}

fn execute(command: Command) -> Result<i32, Error> {
    match command {
        Command::Run(common) => {
            let (cfg, out) = setup(&common)?;
            Ok(match run_and_write(&cfg, &out)? {
                Ok(output) => {
                    println!("stop_reason={}", output.stop_reason);
                    EXIT_OK
                }
                Err(code) => code,
            })
        }
        Command::Check { common, suite } => {
            let (cfg, out) = setup(&common)?;
            let output = match run_and_write(&cfg, &out)? {
                Ok(o) => o,
                Err(code) => return Ok(code),
            };
            let reports = evaluate(&cfg, &output, suite);
            let text = checks_text(&reports);
            write_atomic(&out.join("checks.txt"), text.as_bytes())?;
            print!("{text}");
            Ok(if reports.iter().all(|r| r.passed()) { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Sweep { common, param, values } => {
            let (cfg, out) = setup(&common)?;
            let report = sweep(&cfg, param, &values);
            let mut code = EXIT_OK;
            for row in &report.rows {
                let dir = out.join(format!("{param}={}", row.value));
                match &row.outcome {
                    Ok(o) => write_run(&dir, &row.config, &o.output, None)?,
                    Err(e) => {
                        warn!("{param}={}: {e}", row.value);
                        code = EXIT_NUMERICAL;
                    }
                }
            }
            let text = sweep_csv(&report);
            write_atomic(&out.join("sweep.csv"), text.as_bytes())?;
            print!("{text}");
            Ok(code)
        }
        Command::Converge { common, grids, horizon } => {
            let (cfg, out) = setup(&common)?;
            let report = converge(&cfg, &grids, horizon)?;
            let text = convergence_csv(&report);
            write_atomic(&out.join("convergence.csv"), text.as_bytes())?;
            print!("{text}");
            match report.observed_order() {
                Some(p) => println!("observed_order={p:.4}"),
                None => println!("observed_order=not applicable (errors at rounding level)"),
            }
            Ok(EXIT_OK)
        }
        Command::Oracle { common, dt_ref } => {
            let (cfg, out) = setup(&common)?;
            let initial = cfg.initial.homogeneous_values().ok_or_else(|| {
                Error::Config(format!(
                    "oracle needs spatially uniform initial data, got kind `{}`",
                    cfg.initial.kind()
                ))
            })?;
            let samples = ode_oracle(initial, &cfg.params, cfg.controls.t_end, cfg.outputs.cadence, dt_ref)?;
            let text = oracle_csv(&samples);
            write_atomic(&out.join("oracle.csv"), text.as_bytes())?;
            info!("{} oracle samples", samples.len());
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero_and_bad_flag_exits_two() {
        assert_eq!(cli_main(["haptosim", "--help"]), EXIT_OK);
        assert_eq!(cli_main(["haptosim", "run", "--bogus"]), EXIT_USAGE);
        assert_eq!(cli_main(["haptosim", "check", "--suite", "nope"]), EXIT_USAGE);
    }

    #[test]
    fn missing_config_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("absent.toml");
        let code = cli_main([
            "haptosim".into(),
            "run".into(),
            OsString::from("--config"),
            cfg.into_os_string(),
        ]);
        assert_eq!(code, EXIT_USAGE);
    }
}
