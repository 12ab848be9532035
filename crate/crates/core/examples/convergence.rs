//! Grid-refinement study of the full system against the finest grid.

use haptosim::harness::{converge, ScenarioConfig};

fn main() -> haptosim::Result<()> {
    let report = converge(&ScenarioConfig::paper_default(), &[16, 32, 64, 128], 0.5)?;
    println!("dt = {:e}, horizon = {}", report.dt, report.horizon);
    for row in &report.rows {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!("n = {:4}  error = {:>11}  order = {:>11}", row.n, fmt(row.error), fmt(row.order));
    }
    match report.observed_order() {
        Some(p) => println!("observed order {p:.3}"),
        None => println!("errors at rounding level; order not applicable"),
    }
    Ok(())
}
