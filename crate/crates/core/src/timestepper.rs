//! Positivity-preserving explicit time integration.
//!
//! `u`, `w` and `z` advance by forward Euler on flux-form transport and
//! diffusion plus the reaction terms, all evaluated at the start of the
//! step. `v` advances exactly per cell, `v ← v·exp(−dt·(u + w))`, so it can
//! never grow. A step whose result is non-finite or leaves the positive cone
//! is rejected and retried with half the time step.

use std::fmt;

use log::warn;

use crate::diagnostics::{FunctionalRecord, Monitor};
use crate::discretization::{drift_outflow_rates_into, haptotaxis_into, laplacian_into};
use crate::error::{Error, Result};
use crate::harness::ScenarioConfig;
use crate::model::{equilibrium_residual, reaction_point, Field, Grid, Parameters, State};

/// Records with residual below this count toward the equilibrium stop.
pub const EQUILIBRIUM_STOP_RESIDUAL: f64 = 1e-10;
/// Consecutive qualifying records needed to stop at equilibrium.
pub const EQUILIBRIUM_STOP_RECORDS: usize = 100;

const DT_GROWTH: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    pub dt_init: f64,
    pub dt_min: f64,
    pub safety: f64,
    pub t_end: f64,
    pub cfl_diff: f64,
    /// Largest fraction by which one step may decrease a positive cell.
    pub positivity_guard: f64,
    /// Use this step size instead of the adaptive one (still halved on
    /// rejection).
    pub fixed_dt: Option<f64>,
    /// Stop once the equilibrium residual stays below
    /// [`EQUILIBRIUM_STOP_RESIDUAL`] for [`EQUILIBRIUM_STOP_RECORDS`] records.
    pub stop_at_equilibrium: bool,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-12,
            safety: 0.9,
            t_end: 60.0,
            cfl_diff: 0.25,
            positivity_guard: 0.9,
            fixed_dt: None,
            stop_at_equilibrium: true,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, constraint, value| Err(Error::InvalidParameter { name, constraint, value });
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.dt_init) {
            return bad("dt_init", "must be finite and > 0", self.dt_init);
        }
        if !pos(self.dt_min) || self.dt_min > self.dt_init {
            return bad("dt_min", "must be > 0 and <= dt_init", self.dt_min);
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad("safety", "must lie in (0, 1]", self.safety);
        }
        if !pos(self.t_end) {
            return bad("t_end", "must be finite and > 0", self.t_end);
        }
        if !pos(self.cfl_diff) {
            return bad("cfl_diff", "must be finite and > 0", self.cfl_diff);
        }
        if !(self.positivity_guard > 0.0 && self.positivity_guard < 1.0) {
            return bad("positivity_guard", "must lie in (0, 1)", self.positivity_guard);
        }
        if let Some(dt) = self.fixed_dt {
            if !pos(dt) {
                return bad("fixed_dt", "must be finite and > 0", dt);
            }
        }
        Ok(())
    }
}

/// The admissible step and the individual bounds it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableDt {
    pub dt: f64,
    pub diffusive: f64,
    pub advective: f64,
    pub reaction: f64,
    /// Bound from the summed per-cell loss rates of every explicit update.
    pub positivity: f64,
    /// The bound fell below `dt_min`; `dt` was raised to `dt_min`.
    pub clamped: bool,
}

/// `min(safety·min(diffusive, advective, reaction), positivity)`.
///
/// The diffusive, advective and reaction bounds are the classical per-term
/// limits. The positivity bound sums, per cell and per field, every term of
/// the explicit update that is proportional to the cell's own value and
/// caps `dt·rate` by `positivity_guard`; cells holding exactly zero are
/// skipped since their update only receives non-negative inflow.
pub fn stable_dt(state: &State, params: &Parameters, grid: &Grid, controls: &StepControls) -> StableDt {
    let mut rates = vec![0.0; grid.len()];
    stable_dt_with(state, params, grid, controls, &mut rates)
}

fn stable_dt_with(
    state: &State,
    params: &Parameters,
    grid: &Grid,
    controls: &StepControls,
    drift_rates: &mut [f64],
) -> StableDt {
    let (hx, hy) = (grid.hx(), grid.hy());
    let h2 = (hx * hx).min(hy * hy);
    let d_max = 1f64.max(params.d_w()).max(params.d_z());
    let diffusive = controls.cfl_diff * h2 / d_max;

    let max_grad = drift_outflow_rates_into(drift_rates, state.v.values(), grid);
    let advective = if max_grad > 0.0 { hx.min(hy) / max_grad } else { f64::INFINITY };

    let stencil = 2.0 / (hx * hx) + 2.0 / (hy * hy);
    let (u, w, z) = (state.u.values(), state.w.values(), state.z.values());
    let mut reaction_rate = 0.0f64;
    let mut total_rate = 0.0f64;
    for k in 0..grid.len() {
        let ru = z[k] + params.mu() * (u[k] - 1.0).max(0.0);
        reaction_rate = reaction_rate.max(ru);
        total_rate = total_rate.max(stencil + drift_rates[k] + ru);
        if w[k] > 0.0 {
            reaction_rate = reaction_rate.max(1.0);
            total_rate = total_rate.max(params.d_w() * stencil + 1.0);
        }
        if z[k] > 0.0 {
            let rz = 1.0 + u[k];
            reaction_rate = reaction_rate.max(rz);
            total_rate = total_rate.max(params.d_z() * stencil + rz);
        }
    }
    let reaction = if reaction_rate > 0.0 {
        controls.positivity_guard / reaction_rate
    } else {
        f64::INFINITY
    };
    let positivity = controls.positivity_guard / total_rate;
    let mut dt = (controls.safety * diffusive.min(advective).min(reaction)).min(positivity);
    let clamped = dt < controls.dt_min;
    if clamped {
        warn!(
            "stable time step {dt:e} below dt_min {:e} at t = {}; using dt_min",
            controls.dt_min, state.t
        );
        dt = controls.dt_min;
    }
    StableDt {
        dt,
        diffusive,
        advective,
        reaction,
        positivity,
        clamped,
    }
}

/// Why a trial step was refused.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    NonFinite { field: &'static str, index: usize },
    Negative { field: &'static str, index: usize, value: f64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NonFinite { field, index } => {
                write!(f, "non-finite `{field}` at cell {index}")
            }
            Rejection::Negative { field, index, value } => {
                write!(f, "`{field}` left the admissible range at cell {index} ({value:e})")
            }
        }
    }
}

impl std::error::Error for Rejection {}

/// Scratch buffers for repeated stepping on one grid.
#[derive(Debug, Clone)]
struct Workspace {
    lap_u: Vec<f64>,
    drift: Vec<f64>,
    lap_w: Vec<f64>,
    lap_z: Vec<f64>,
    rates: Vec<f64>,
    /// Buffers for the next state, recycled from the previous one.
    spare: [Vec<f64>; 4],
}

impl Workspace {
    fn new(grid: &Grid) -> Self {
        let n = grid.len();
        Self {
            lap_u: vec![0.0; n],
            drift: vec![0.0; n],
            lap_w: vec![0.0; n],
            lap_z: vec![0.0; n],
            rates: vec![0.0; n],
            spare: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    fn recycle(&mut self, old: State) {
        self.spare = [old.u.into_values(), old.v.into_values(), old.w.into_values(), old.z.into_values()];
    }

    fn step(
        &mut self,
        state: &State,
        params: &Parameters,
        grid: &Grid,
        dt: f64,
    ) -> std::result::Result<(State, StepStats), Rejection> {
        let n = grid.len();
        let (u, v, w, z) = (
            &state.u.values()[..n],
            &state.v.values()[..n],
            &state.w.values()[..n],
            &state.z.values()[..n],
        );
        laplacian_into(&mut self.lap_u, u, grid, 1.0);
        haptotaxis_into(&mut self.drift, u, v, grid);
        laplacian_into(&mut self.lap_w, w, grid, params.d_w());
        laplacian_into(&mut self.lap_z, z, grid, params.d_z());
        let (lap_u, drift, lap_w, lap_z) = (&self.lap_u[..n], &self.drift[..n], &self.lap_w[..n], &self.lap_z[..n]);

        let [un, vn, wn, zn] = &mut self.spare;
        for buf in [&mut *un, &mut *vn, &mut *wn, &mut *zn] {
            buf.resize(n, 0.0);
        }
        let (un, vn, wn, zn) = (&mut un[..n], &mut vn[..n], &mut wn[..n], &mut zn[..n]);
        let mut stats = StepStats::new();
        let mut admissible = true;
        for k in 0..n {
            let [du, _, dw, dz] = reaction_point(u[k], v[k], w[k], z[k], params);
            let a = u[k] + dt * (lap_u[k] - drift[k] + du);
            let b = v[k] * (-dt * (u[k] + w[k])).exp();
            let c = w[k] + dt * (lap_w[k] + dw);
            let d = z[k] + dt * (lap_z[k] + dz);
            admissible &= a > 0.0
                && a < f64::INFINITY
                && b >= 0.0
                && b < f64::INFINITY
                && c >= 0.0
                && c < f64::INFINITY
                && d >= 0.0
                && d < f64::INFINITY;
            stats.absorb(v[k], w[k], z[k], [a, b, c, d]);
            un[k] = a;
            vn[k] = b;
            wn[k] = c;
            zn[k] = d;
        }
        if !admissible {
            screen("u", un, |x| x > 0.0)?;
            screen("v", vn, |x| x >= 0.0)?;
            screen("w", wn, |x| x >= 0.0)?;
            screen("z", zn, |x| x >= 0.0)?;
        }
        let [un, vn, wn, zn] = self.spare.each_mut().map(std::mem::take);
        let next = State::new(
            state.t + dt,
            Field::from_raw(grid, un),
            Field::from_raw(grid, vn),
            Field::from_raw(grid, wn),
            Field::from_raw(grid, zn),
        );
        Ok((next, stats))
    }
}

/// Reductions over one step gathered in the update loop.
#[derive(Debug, Clone, Copy)]
struct StepStats {
    v_max_old: f64,
    v_max_new: f64,
    v_cell_increased: bool,
    min_new: [f64; 4],
    sum_w_old: f64,
    sum_z_old: f64,
    sum_wz_new: f64,
}

impl StepStats {
    fn new() -> Self {
        Self {
            v_max_old: f64::NEG_INFINITY,
            v_max_new: f64::NEG_INFINITY,
            v_cell_increased: false,
            min_new: [f64::INFINITY; 4],
            sum_w_old: 0.0,
            sum_z_old: 0.0,
            sum_wz_new: 0.0,
        }
    }

    #[inline]
    fn absorb(&mut self, v_old: f64, w_old: f64, z_old: f64, new: [f64; 4]) {
        self.v_max_old = self.v_max_old.max(v_old);
        self.v_max_new = self.v_max_new.max(new[1]);
        self.v_cell_increased |= new[1] > v_old;
        for (m, x) in self.min_new.iter_mut().zip(new) {
            *m = m.min(x);
        }
        self.sum_w_old += w_old;
        self.sum_z_old += z_old;
        self.sum_wz_new += new[2] + new[3];
    }
}

fn screen(field: &'static str, values: &[f64], ok: impl Fn(f64) -> bool) -> std::result::Result<(), Rejection> {
    for (index, &x) in values.iter().enumerate() {
        if !x.is_finite() {
            return Err(Rejection::NonFinite { field, index });
        }
        if !ok(x) {
            return Err(Rejection::Negative { field, index, value: x });
        }
    }
    Ok(())
}

/// One explicit step of size `dt`. Returns the advanced state, or the reason
/// the trial result was refused.
pub fn step(
    state: &State,
    params: &Parameters,
    grid: &Grid,
    dt: f64,
) -> std::result::Result<State, Rejection> {
    Workspace::new(grid).step(state, params, grid, dt).map(|(next, _)| next)
}

/// Per-run tally of the invariants every accepted step must keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAudit {
    pub steps: u64,
    pub rejections: u64,
    /// `max(v)` of the initial state.
    pub v_max_initial: f64,
    /// Largest `max(v)` over every accepted state.
    pub v_max_seen: f64,
    /// Accepted steps in which `max(v)` increased.
    pub v_max_increases: u64,
    /// Accepted steps in which some cell's `v` increased.
    pub v_cell_increases: u64,
    pub min_u: f64,
    pub min_v: f64,
    pub min_w: f64,
    pub min_z: f64,
    /// Largest relative residual of the per-step identity
    /// `Σ(w+z)_new − Σ(w+z)_old = −dt·[(1−β)Σw_old + Σz_old]`.
    pub max_wz_identity_residual: f64,
    pub clamped_steps: u64,
}

impl StepAudit {
    fn new(state: &State) -> Self {
        let v_max = state.v.max();
        Self {
            steps: 0,
            rejections: 0,
            v_max_initial: v_max,
            v_max_seen: v_max,
            v_max_increases: 0,
            v_cell_increases: 0,
            min_u: state.u.min(),
            min_v: state.v.min(),
            min_w: state.w.min(),
            min_z: state.z.min(),
            max_wz_identity_residual: 0.0,
            clamped_steps: 0,
        }
    }

    fn observe(&mut self, stats: &StepStats, dt: f64, beta: f64) {
        self.steps += 1;
        if stats.v_max_new > stats.v_max_old {
            self.v_max_increases += 1;
        }
        self.v_max_seen = self.v_max_seen.max(stats.v_max_new);
        if stats.v_cell_increased {
            self.v_cell_increases += 1;
        }
        let [mu, mv, mw, mz] = stats.min_new;
        self.min_u = self.min_u.min(mu);
        self.min_v = self.min_v.min(mv);
        self.min_w = self.min_w.min(mw);
        self.min_z = self.min_z.min(mz);

        let (w_old, z_old) = (stats.sum_w_old, stats.sum_z_old);
        let lhs = stats.sum_wz_new - (w_old + z_old);
        let rhs = -dt * ((1.0 - beta) * w_old + z_old);
        let scale = w_old + z_old;
        let residual = if scale > 0.0 {
            (lhs - rhs).abs() / scale
        } else {
            (lhs - rhs).abs()
        };
        self.max_wz_identity_residual = self.max_wz_identity_residual.max(residual);
    }

    /// Every accepted step kept the discrete maximum principle for `v`.
    pub fn v_max_principle_holds(&self) -> bool {
        self.v_max_increases == 0 && self.v_cell_increases == 0 && self.v_max_seen <= self.v_max_initial
    }
}

/// A state advancing under adaptive or fixed stepping.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: Parameters,
    grid: Grid,
    controls: StepControls,
    state: State,
    work: Workspace,
    dt_nominal: Option<f64>,
    audit: StepAudit,
}

impl Simulation {
    pub fn new(params: Parameters, grid: Grid, controls: StepControls, initial: State) -> Result<Self> {
        controls.validate()?;
        initial.validate(&grid)?;
        Ok(Self {
            params,
            grid,
            controls,
            audit: StepAudit::new(&initial),
            state: initial,
            work: Workspace::new(&grid),
            dt_nominal: None,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn audit(&self) -> &StepAudit {
        &self.audit
    }

    pub fn stable_dt(&mut self) -> StableDt {
        stable_dt_with(&self.state, &self.params, &self.grid, &self.controls, &mut self.work.rates)
    }

    /// Takes one accepted step without passing `target`. Lands exactly on
    /// `target` when the step reaches it. Returns the step size used.
    pub fn advance_toward(&mut self, target: f64) -> Result<f64> {
        let remaining = target - self.state.t;
        if remaining <= 0.0 {
            return Ok(0.0);
        }
        let stable = self.stable_dt();
        if stable.clamped {
            self.audit.clamped_steps += 1;
        }
        let nominal = match self.controls.fixed_dt {
            Some(dt) => dt,
            None => match self.dt_nominal {
                None => self.controls.dt_init.min(stable.dt),
                Some(prev) => (DT_GROWTH * prev).min(stable.dt),
            },
        };
        let mut dt = nominal;
        loop {
            let lands = dt >= remaining * (1.0 - 1e-9);
            let trial = if lands {
                remaining
            } else if remaining < 2.0 * dt {
                // Split the remainder evenly rather than leave a sliver.
                0.5 * remaining
            } else {
                dt
            };
            match self.work.step(&self.state, &self.params, &self.grid, trial) {
                Ok((mut next, stats)) => {
                    if lands {
                        next.t = target;
                    }
                    self.audit.observe(&stats, trial, self.params.beta());
                    let old = std::mem::replace(&mut self.state, next);
                    self.work.recycle(old);
                    if self.controls.fixed_dt.is_none() {
                        self.dt_nominal = Some(dt);
                    }
                    return Ok(trial);
                }
                Err(rejection) => {
                    self.audit.rejections += 1;
                    dt *= 0.5;
                    log::debug!("step rejected at t = {}: {rejection}; retrying with dt = {dt:e}", self.state.t);
                    if dt < self.controls.dt_min {
                        return Err(Error::DtUnderflow {
                            t: self.state.t,
                            dt,
                            dt_min: self.controls.dt_min,
                            state: Box::new(self.state.clone()),
                        });
                    }
                }
            }
        }
    }

    /// Takes exactly `n` accepted steps of the nominal size.
    pub fn advance_steps(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.advance_toward(f64::INFINITY)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    EndTime,
    Equilibrium,
    Failed(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::EndTime => write!(f, "end_time"),
            StopReason::Equilibrium => write!(f, "equilibrium"),
            StopReason::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

/// Which check suites the run's parameters make applicable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Applicability {
    pub boundedness: bool,
    pub stabilization: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<FunctionalRecord>,
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub audit: StepAudit,
    pub stop_reason: StopReason,
    pub applicability: Applicability,
}

/// A run that failed part-way, together with everything produced before
/// the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: RunOutput,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run failed at t = {}: {}", self.partial.final_state.t, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Integrates a scenario from its initial data to `t_end`, emitting a
/// functional record every `cadence` time units and snapshots at the
/// requested times.
pub fn run(config: &ScenarioConfig) -> std::result::Result<RunOutput, Box<RunFailure>> {
    let start = config
        .validate()
        .and_then(|_| config.initial_state())
        .and_then(|initial| Simulation::new(config.params, config.grid, config.controls, initial));
    let mut sim = match start {
        Ok(sim) => sim,
        Err(error) => return Err(setup_failure(config, error)),
    };
    let mut monitor = Monitor::new(config.params, config.grid, config.outputs.p);
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let t_end = config.controls.t_end;
    let cadence = config.outputs.cadence;
    let mut snap_times: Vec<f64> = config
        .outputs
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t <= t_end)
        .collect();
    snap_times.sort_by(f64::total_cmp);
    snap_times.dedup();
    let mut next_snap = 0;
    let mut next_record: u64 = 0;
    let mut quiet_records = 0usize;

    let outcome: Result<StopReason> = (|| {
        loop {
            let t = sim.state().t;
            let record_time = (next_record as f64 * cadence).min(t_end);
            if t >= record_time {
                let rec = monitor.record(sim.state())?;
                records.push(rec);
                next_record += 1;
                if config.controls.stop_at_equilibrium {
                    if equilibrium_residual(sim.state()) < EQUILIBRIUM_STOP_RESIDUAL {
                        quiet_records += 1;
                    } else {
                        quiet_records = 0;
                    }
                    if quiet_records >= EQUILIBRIUM_STOP_RECORDS {
                        return Ok(StopReason::Equilibrium);
                    }
                }
            }
            while next_snap < snap_times.len() && t >= snap_times[next_snap] {
                snapshots.push(sim.state().clone());
                next_snap += 1;
            }
            if t >= t_end {
                return Ok(StopReason::EndTime);
            }
            let mut target = (next_record as f64 * cadence).min(t_end);
            if let Some(&ts) = snap_times.get(next_snap) {
                target = target.min(ts);
            }
            while sim.state().t < target {
                sim.advance_toward(target)?;
            }
        }
    })();

    let audit = *sim.audit();
    let final_state = sim.into_state();
    let build = |stop_reason| RunOutput {
        records,
        snapshots,
        final_state,
        audit,
        stop_reason,
        applicability: applicability(&config.params),
    };
    match outcome {
        Ok(reason) => Ok(build(reason)),
        Err(error) => Err(Box::new(RunFailure {
            partial: build(StopReason::Failed(error.to_string())),
            error,
        })),
    }
}

/// Nothing ran; the partial output is reported against the grid's equilibrium.
fn setup_failure(config: &ScenarioConfig, error: Error) -> Box<RunFailure> {
    let state = State::equilibrium(&config.grid);
    Box::new(RunFailure {
        partial: RunOutput {
            records: Vec::new(),
            snapshots: Vec::new(),
            audit: StepAudit::new(&state),
            final_state: state,
            stop_reason: StopReason::Failed(error.to_string()),
            applicability: applicability(&config.params),
        },
        error,
    })
}

fn applicability(params: &Parameters) -> Applicability {
    Applicability {
        boundedness: params.admits_boundedness(),
        stabilization: params.admits_stabilization(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ode_oracle, InitialRecipe};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(mu: f64, beta: f64) -> Parameters {
        Parameters::new(mu, beta, 1.0, 1.0).unwrap()
    }

    #[test]
    fn stable_dt_at_equilibrium() {
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        let s = State::equilibrium(&g);
        let b = stable_dt(&s, &params(1.0, 0.5), &g, &StepControls::default());
        assert_relative_eq!(b.dt, 0.9 * 0.25 * 0.01, max_relative = 1e-14);
        assert!(b.advective.is_infinite());
        assert!(!b.clamped);
    }

    #[test]
    fn stable_dt_degenerate_is_diffusive() {
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        for d in [1.0, 2.0] {
            let p = Parameters::new(0.0, 0.5, d, d).unwrap();
            let s = State::homogeneous(&g, 1.7, 0.3, 0.0, 0.0);
            let c = StepControls::default();
            let b = stable_dt(&s, &p, &g, &c);
            assert!(b.advective.is_infinite());
            assert!(b.reaction.is_infinite());
            assert_relative_eq!(b.dt, c.safety * b.diffusive, max_relative = 1e-14);
        }
    }

    #[test]
    fn stable_dt_clamps_to_dt_min() {
        let g = Grid::unit_square(64).unwrap();
        let s = State::equilibrium(&g);
        let c = StepControls { dt_min: 1e-3, dt_init: 1e-2, ..StepControls::default() };
        let b = stable_dt(&s, &params(1.0, 0.5), &g, &c);
        assert!(b.clamped);
        assert_eq!(b.dt, 1e-3);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = Grid::unit_square(8).unwrap();
        let s = State::equilibrium(&g);
        let next = step(&s, &params(1.0, 0.5), &g, 0.003).unwrap();
        assert_eq!(next.u, s.u);
        assert_eq!(next.v, s.v);
        assert_eq!(next.w, s.w);
        assert_eq!(next.z, s.z);
        assert_eq!(next.t, 0.003);
    }

    #[test]
    fn exact_v_update() {
        let g = Grid::unit_square(4).unwrap();
        let s = State::homogeneous(&g, 1.0, 1.0, 0.0, 0.0);
        let next = step(&s, &params(1.0, 0.5), &g, 0.1).unwrap();
        assert_relative_eq!(next.v.get(2, 1), (-0.1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(next.v.get(2, 1), 0.9048374, max_relative = 1e-7);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = Grid::unit_square(16).unwrap();
        let s = InitialRecipe::GaussianBumps(InitialRecipe::default_bumps()).build(&g, 0).unwrap();
        let err = step(&s, &params(1.0, 0.5), &g, 0.5).unwrap_err();
        assert!(matches!(err, Rejection::Negative { .. } | Rejection::NonFinite { .. }));
    }

    #[test]
    fn simulation_recovers_from_rejection() {
        let g = Grid::unit_square(16).unwrap();
        let s = InitialRecipe::GaussianBumps(InitialRecipe::default_bumps()).build(&g, 0).unwrap();
        let c = StepControls { fixed_dt: Some(0.05), ..StepControls::default() };
        let mut sim = Simulation::new(params(1.0, 0.5), g, c, s).unwrap();
        let dt = sim.advance_toward(1.0).unwrap();
        assert!(dt < 0.05);
        assert!(sim.audit().rejections > 0);
        sim.state().validate(&g).unwrap();
    }

    #[test]
    fn dt_underflow_is_a_hard_error() {
        let g = Grid::unit_square(16).unwrap();
        let s = InitialRecipe::GaussianBumps(InitialRecipe::default_bumps()).build(&g, 0).unwrap();
        let c = StepControls { fixed_dt: Some(0.5), dt_min: 0.1, dt_init: 0.5, ..StepControls::default() };
        let mut sim = Simulation::new(params(1.0, 0.5), g, c, s).unwrap();
        let err = sim.advance_toward(1.0).unwrap_err();
        assert!(matches!(err, Error::DtUnderflow { .. }));
        assert!(err.to_string().contains("state dump"));
    }

    /// Max over sample times of the L∞ gap between a homogeneous run at
    /// fixed `dt` and the RK4 reference.
    fn homogeneous_error(dt: f64) -> f64 {
        let mut cfg = ScenarioConfig::homogeneous_oracle(2, 10.0);
        cfg.controls.fixed_dt = Some(dt);
        cfg.controls.stop_at_equilibrium = false;
        cfg.outputs.cadence = 0.5;
        let out = run(&cfg).unwrap();
        let reference = ode_oracle([0.5, 0.3, 0.2, 0.1], &cfg.params, 10.0, 0.5, 1e-5).unwrap();
        assert_eq!(reference.len(), out.records.len());
        out.records
            .iter()
            .zip(&reference)
            .map(|(r, o)| {
                assert!((r.t - o.t).abs() < 1e-9);
                [r.linf_u - o.y[0], r.linf_v - o.y[1], r.linf_w - o.y[2], r.linf_z - o.y[3]]
                    .iter()
                    .fold(0.0f64, |m, e| m.max(e.abs()))
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn homogeneous_run_converges_first_order_to_oracle() {
        let e1 = homogeneous_error(2e-3);
        let e2 = homogeneous_error(1e-3);
        let rate = (e1 / e2).log2();
        assert!((rate - 1.0).abs() <= 0.1, "rate {rate} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn records_land_on_cadence() {
        let cfg = ScenarioConfig::equilibrium(4, 1.0);
        let out = run(&cfg).unwrap();
        assert_eq!(out.records.len(), 11);
        for (k, r) in out.records.iter().enumerate() {
            assert!((r.t - 0.1 * k as f64).abs() < 1e-12, "{} vs {}", r.t, k);
        }
        assert_eq!(out.stop_reason, StopReason::EndTime);
    }

    #[test]
    fn equilibrium_run_stops_early_when_enabled() {
        let cfg = ScenarioConfig::equilibrium(4, 60.0);
        let out = run(&cfg).unwrap();
        assert_eq!(out.stop_reason, StopReason::Equilibrium);
        assert_eq!(out.records.len(), EQUILIBRIUM_STOP_RECORDS);
        assert!(out.records.iter().all(|r| r.linf_v == 0.0));
    }

    #[test]
    fn snapshots_taken_at_requested_times() {
        let mut cfg = ScenarioConfig::paper_default()
            .with_grid(Grid::unit_square(8).unwrap())
            .with_t_end(0.5);
        cfg.outputs.snapshot_times = vec![0.25, 0.0, 0.33];
        let out = run(&cfg).unwrap();
        let times: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.33]);
    }

    #[test]
    fn mu_zero_run_flags_inapplicable_suites() {
        let cfg = ScenarioConfig::exploratory_mu_zero()
            .with_grid(Grid::unit_square(8).unwrap())
            .with_t_end(1.0);
        let out = run(&cfg).unwrap();
        assert!(!out.applicability.boundedness);
        assert!(!out.applicability.stabilization);
    }

    #[test]
    fn invalid_config_reports_failure() {
        let mut cfg = ScenarioConfig::equilibrium(4, 1.0);
        cfg.controls.safety = 2.0;
        let failure = run(&cfg).unwrap_err();
        assert!(failure.partial.records.is_empty());
        assert!(matches!(failure.partial.stop_reason, StopReason::Failed(_)));
    }

    fn random_state(grid: &Grid, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |lo: f64, hi: f64, zero_prob: f64| {
            let vals = (0..grid.len())
                .map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen_range(lo..hi) })
                .collect();
            Field::new(grid, vals).unwrap()
        };
        let u = gen(1e-3, 5.0, 0.0);
        let v = gen(0.0, 3.0, 0.2);
        let w = gen(0.0, 2.0, 0.2);
        let z = gen(0.0, 4.0, 0.2);
        State::new(0.0, u, v, w, z)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn stable_dt_keeps_positivity(
            seed in any::<u64>(),
            n in 2usize..12,
            mu in 0.0f64..5.0,
            beta in 0.0f64..5.0,
            d_w in 0.1f64..5.0,
            d_z in 0.1f64..5.0,
        ) {
            let g = Grid::new(n, n + 1, 1.0, 1.3).unwrap();
            let p = Parameters::new(mu, beta, d_w, d_z).unwrap();
            let s = random_state(&g, seed);
            let c = StepControls::default();
            let b = stable_dt(&s, &p, &g, &c);
            prop_assert!(!b.clamped);
            let next = step(&s, &p, &g, b.dt);
            prop_assert!(next.is_ok(), "{:?}", next.err());
            let next = next.unwrap();
            next.validate(&g).unwrap();
            prop_assert!(next.v.max() <= s.v.max());
            for (a, b) in s.v.values().iter().zip(next.v.values()) {
                prop_assert!(b <= a);
            }
        }
    }

    proptest! {
        #[test]
        fn wz_identity_per_step(seed in any::<u64>(), beta in 0.0f64..0.99) {
            let g = Grid::unit_square(8).unwrap();
            let p = params(1.0, beta);
            let s = random_state(&g, seed);
            let dt = stable_dt(&s, &p, &g, &StepControls::default()).dt;
            let next = step(&s, &p, &g, dt).unwrap();
            let sum = |f: &Field| f.values().iter().sum::<f64>();
            let lhs = sum(&next.w) + sum(&next.z) - sum(&s.w) - sum(&s.z);
            let rhs = -dt * ((1.0 - beta) * sum(&s.w) + sum(&s.z));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (sum(&s.w) + sum(&s.z)));
        }
    }
}
