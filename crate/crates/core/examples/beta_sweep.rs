//! Sweeps the virus replication rate β on a coarse grid and reports the
//! fitted decay rate of ∫w + ∫z against 1 − β.

use haptosim::harness::{sweep, ScenarioConfig, SweepParam};
use haptosim::model::Grid;

fn main() -> haptosim::Result<()> {
    let base = ScenarioConfig::paper_default()
        .with_grid(Grid::unit_square(16)?)
        .with_t_end(20.0);
    let report = sweep(&base, SweepParam::Beta, &[0.25, 0.5, 0.9, 2.0]);
    println!("{:>6} {:>10} {:>10} {:>14} {:>14}", "beta", "rate", "1-beta", "decay", "stabilization");
    for row in &report.rows {
        match &row.outcome {
            Ok(o) => println!(
                "{:6.2} {:10.4} {:10.4} {:>14} {:>14}",
                row.value,
                o.wz_rate.unwrap_or(f64::NAN),
                1.0 - row.value,
                o.status("decay").to_string(),
                o.status("stabilization").to_string()
            ),
            Err(e) => println!("{:6.2} failed: {e}", row.value),
        }
    }
    Ok(())
}
