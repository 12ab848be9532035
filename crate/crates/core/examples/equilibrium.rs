//! The constant state (1, 0, 0, 0) is a fixed point of the discrete scheme.

use haptosim::harness::ScenarioConfig;
use haptosim::model::equilibrium_residual;
use haptosim::timestepper::Simulation;

fn main() -> haptosim::Result<()> {
    let cfg = ScenarioConfig::equilibrium(32, 1.0);
    let mut sim = Simulation::new(cfg.params, cfg.grid, cfg.controls, cfg.initial_state()?)?;
    sim.advance_steps(2_000)?;
    println!(
        "t = {:.4} after {} steps, residual = {:e}",
        sim.state().t,
        sim.audit().steps,
        equilibrium_residual(sim.state())
    );
    Ok(())
}
