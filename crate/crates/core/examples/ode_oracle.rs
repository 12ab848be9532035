//! Uniform initial data stays uniform, so the PDE reduces to four ODEs.
//! Compares a 16×16 run with the Runge–Kutta reference.

use haptosim::harness::{ode_oracle, ScenarioConfig};
use haptosim::timestepper::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::homogeneous_oracle(16, 10.0);
    cfg.outputs.cadence = 1.0;
    cfg.controls.fixed_dt = Some(1e-4);
    cfg.controls.stop_at_equilibrium = false;
    let out = run(&cfg)?;
    let initial = cfg.initial.homogeneous_values().expect("uniform data");
    let reference = ode_oracle(initial, &cfg.params, 10.0, 1.0, 1e-5)?;

    println!("{:>5} {:>12} {:>12} {:>12}", "t", "u (pde)", "u (ode)", "max error");
    for (rec, sample) in out.records.iter().zip(&reference) {
        let pde = [rec.linf_u, rec.linf_v, rec.linf_w, rec.linf_z];
        let err = (0..4).map(|i| (pde[i] - sample.y[i]).abs()).fold(0.0, f64::max);
        println!("{:5.1} {:12.8} {:12.8} {:12.3e}", rec.t, pde[0], sample.y[0], err);
    }
    Ok(())
}
