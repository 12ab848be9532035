//! The default scenario: 64×64 unit square, μ = 1, β = 0.5, Gaussian bumps,
//! integrated to t = 60 (or the time given as the first argument).
//!
//! ```text
//! cargo run --release --example paper_default -- 20
//! ```

use haptosim::harness::{evaluate, ScenarioConfig, Suite};
use haptosim::timestepper::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::paper_default();
    if let Some(t_end) = std::env::args().nth(1) {
        cfg.controls.t_end = t_end.parse()?;
    }
    let started = std::time::Instant::now();
    let out = run(&cfg)?;
    let last = out.records.last().expect("at least one record");
    println!(
        "t = {:.3} after {} steps ({} rejected) in {:.1?}, stop: {}",
        last.t,
        out.audit.steps,
        out.audit.rejections,
        started.elapsed(),
        out.stop_reason
    );
    println!(
        "‖u−1‖₂ = {:.3e}  ‖v‖∞ = {:.3e}  ∫w+∫z = {:.3e}  min u = {:.4}",
        last.l2_u_minus_1, last.linf_v, last.wz_mass, last.min_u
    );
    for report in evaluate(&cfg, &out, Suite::All) {
        print!("{report}");
    }
    Ok(())
}
