//! Drives a run from a TOML configuration, writes the run directory and
//! prints the check report.
//!
//! ```text
//! cargo run --release --example config_file -- my.toml out/
//! ```

use std::path::PathBuf;

use haptosim::harness::{evaluate, Suite};
use haptosim::io::{checks_text, echo_config, parse_config, write_run};
use haptosim::timestepper::run;

const SAMPLE: &str = r#"
[params]
beta = 0.25

[grid]
nx = 16
ny = 16

[controls]
t_end = 10.0

[initial.z]
amplitude = 0.2
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let text = match args.next() {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "out/config_file".into()));
    let cfg = parse_config(&text)?;
    print!("{}", echo_config(&cfg));
    let output = run(&cfg)?;
    write_run(&out_dir, &cfg, &output, None)?;
    print!("{}", checks_text(&evaluate(&cfg, &output, Suite::All)));
    println!("artifacts in {}", out_dir.display());
    Ok(())
}
