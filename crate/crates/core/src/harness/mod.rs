//! Scenario descriptions, presets, the homogeneous ODE oracle, parameter
//! sweeps and grid-refinement studies.

mod converge;
mod oracle;
mod sweep;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, CheckReport, StabilizationCriteria};
use crate::error::{Error, Result};
use crate::model::{Field, Grid, Parameters, State};
use crate::timestepper::{RunOutput, StepControls};

pub use converge::{converge, ConvergenceReport, ConvergenceRow, DEFAULT_CONVERGENCE_HORIZON};
pub use oracle::{ode_oracle, OracleSample, ODE_ORACLE_MAX_DT};
pub use sweep::{sweep, SweepParam, SweepReport, SweepRow};

/// A Gaussian bump `base + amplitude·exp(−|x − center|² / (2·width²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub base: f64,
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: f64,
}

impl Bump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        self.base + self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }
}

/// How the initial data `(u₀, v₀, w₀, z₀)` is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialRecipe {
    Equilibrium,
    Homogeneous([f64; 4]),
    GaussianBumps([Bump; 4]),
    /// `base·(1 + noise·ξ)` with `ξ` uniform on `[−1, 1]` per cell and field.
    PerturbedHomogeneous { base: [f64; 4], noise: f64 },
}

impl InitialRecipe {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialRecipe::Equilibrium => "equilibrium",
            InitialRecipe::Homogeneous(_) => "homogeneous",
            InitialRecipe::GaussianBumps(_) => "gaussian-bumps",
            InitialRecipe::PerturbedHomogeneous { .. } => "perturbed-homogeneous",
        }
    }

    /// The bumps of the default scenario: a raised cell density and a
    /// tissue bump at the center, infected cells and virus offset from it.
    pub fn default_bumps() -> [Bump; 4] {
        [
            Bump { base: 1.0, amplitude: 0.1, center: [0.5, 0.5], width: 0.1 },
            Bump { base: 0.0, amplitude: 0.5, center: [0.5, 0.5], width: 0.1 },
            Bump { base: 0.0, amplitude: 0.05, center: [0.3, 0.3], width: 0.1 },
            Bump { base: 0.0, amplitude: 0.05, center: [0.7, 0.7], width: 0.1 },
        ]
    }

    /// Homogeneous values, if the recipe produces spatially uniform data.
    pub fn homogeneous_values(&self) -> Option<[f64; 4]> {
        match self {
            InitialRecipe::Equilibrium => Some([1.0, 0.0, 0.0, 0.0]),
            InitialRecipe::Homogeneous(vals) => Some(*vals),
            _ => None,
        }
    }

    /// Builds the initial state; fails if the data violates `u₀ > 0`,
    /// `v₀, w₀, z₀ ≥ 0`.
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<State> {
        const NAMES: [&str; 4] = ["u", "v", "w", "z"];
        let fields: [Field; 4] = match self {
            InitialRecipe::Equilibrium => return Ok(State::equilibrium(grid)),
            InitialRecipe::Homogeneous([u, v, w, z]) => {
                State::homogeneous(grid, *u, *v, *w, *z).validate(grid)?;
                return Ok(State::homogeneous(grid, *u, *v, *w, *z));
            }
            InitialRecipe::GaussianBumps(bumps) => {
                let mut out = Vec::with_capacity(4);
                for (bump, name) in bumps.iter().zip(NAMES) {
                    let values = Field::from_fn(grid, |x, y| bump.eval(x, y))?.into_values();
                    out.push(Field::named(grid, values, name)?);
                }
                out.try_into().expect("four fields")
            }
            InitialRecipe::PerturbedHomogeneous { base, noise } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(4);
                for (b, name) in base.iter().zip(NAMES) {
                    let values = (0..grid.len())
                        .map(|_| b * (1.0 + noise * rng.gen_range(-1.0..=1.0)))
                        .collect();
                    out.push(Field::named(grid, values, name)?);
                }
                out.try_into().expect("four fields")
            }
        };
        let [u, v, w, z] = fields;
        let state = State::new(0.0, u, v, w, z);
        state.validate(grid)?;
        Ok(state)
    }
}

/// Output cadence and destinations of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    /// Time between functional records.
    pub cadence: f64,
    pub snapshot_times: Vec<f64>,
    pub dir: Option<PathBuf>,
    /// Exponent of the `‖u − 1‖_{Lᵖ}` monitor.
    pub p: f64,
}

impl Default for OutputPlan {
    fn default() -> Self {
        Self {
            cadence: 0.1,
            snapshot_times: Vec::new(),
            dir: None,
            p: 2.0,
        }
    }
}

/// Thresholds used by the check suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSettings {
    pub eps: f64,
    pub delta_floor: f64,
    pub horizon_fraction: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            eps: 1e-2,
            delta_floor: 0.01,
            horizon_fraction: 0.25,
        }
    }
}

/// Complete description of a run. Equal configs give identical outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: Parameters,
    pub grid: Grid,
    pub controls: StepControls,
    pub initial: InitialRecipe,
    pub outputs: OutputPlan,
    pub checks: CheckSettings,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::paper_default()
    }
}

impl ScenarioConfig {
    /// Unit square, 64×64, μ = 1, β = 0.5, D_w = D_z = 1, Gaussian bumps,
    /// `t_end = 60`.
    pub fn paper_default() -> Self {
        Self {
            params: Parameters::default(),
            grid: Grid::unit_square(64).expect("valid grid"),
            controls: StepControls::default(),
            initial: InitialRecipe::GaussianBumps(InitialRecipe::default_bumps()),
            outputs: OutputPlan::default(),
            checks: CheckSettings::default(),
            seed: 0,
        }
    }

    pub fn equilibrium(n: usize, t_end: f64) -> Self {
        let mut cfg = Self::paper_default();
        cfg.grid = Grid::unit_square(n).expect("valid grid");
        cfg.initial = InitialRecipe::Equilibrium;
        cfg.controls.t_end = t_end;
        cfg
    }

    /// Spatially uniform `(0.5, 0.3, 0.2, 0.1)`, μ = 1, β = 0.5.
    pub fn homogeneous_oracle(n: usize, t_end: f64) -> Self {
        let mut cfg = Self::paper_default();
        cfg.grid = Grid::unit_square(n).expect("valid grid");
        cfg.initial = InitialRecipe::Homogeneous([0.5, 0.3, 0.2, 0.1]);
        cfg.controls.t_end = t_end;
        cfg
    }

    /// μ = 0 variant. Outside every check suite; exploratory only.
    pub fn exploratory_mu_zero() -> Self {
        let mut cfg = Self::paper_default();
        cfg.params = Parameters::new(0.0, 0.5, 1.0, 1.0).expect("valid parameters");
        cfg.grid = Grid::unit_square(32).expect("valid grid");
        cfg.controls.t_end = 10.0;
        cfg.controls.stop_at_equilibrium = false;
        cfg
    }

    pub fn with_params(mut self, params: Parameters) -> Self {
        self.params = params;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.controls.t_end = t_end;
        self
    }

    /// Checks cross-field constraints not enforced by the component types.
    pub fn validate(&self) -> Result<()> {
        self.controls.validate()?;
        let positive = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, constraint: "must be finite and > 0", value })
            }
        };
        positive("cadence", self.outputs.cadence)?;
        if !(self.outputs.p > 1.0 && self.outputs.p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "p",
                constraint: "must be finite and > 1",
                value: self.outputs.p,
            });
        }
        for &t in &self.outputs.snapshot_times {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "snapshot_times",
                    constraint: "entries must be finite and >= 0",
                    value: t,
                });
            }
        }
        positive("eps", self.checks.eps)?;
        positive("delta_floor", self.checks.delta_floor)?;
        let hf = self.checks.horizon_fraction;
        if !(hf > 0.0 && hf < 1.0) {
            return Err(Error::InvalidParameter {
                name: "horizon_fraction",
                constraint: "must lie in (0, 1)",
                value: hf,
            });
        }
        match &self.initial {
            InitialRecipe::GaussianBumps(bumps) => {
                for b in bumps {
                    positive("width", b.width)?;
                }
            }
            InitialRecipe::PerturbedHomogeneous { noise, .. } => {
                if !(*noise >= 0.0 && *noise < 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "noise",
                        constraint: "must lie in [0, 1)",
                        value: *noise,
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<State> {
        self.initial.build(&self.grid, self.seed)
    }
}

/// Which check suites to apply to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Boundedness,
    Decay,
    Stabilization,
    Lyapunov,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "boundedness" => Suite::Boundedness,
            "decay" => Suite::Decay,
            "stabilization" => Suite::Stabilization,
            "lyapunov" => Suite::Lyapunov,
            other => {
                return Err(Error::Config(format!(
                    "unknown suite `{other}` (expected all, boundedness, decay, stabilization or lyapunov)"
                )))
            }
        })
    }
}

/// Applies the selected check suites to a completed run.
pub fn evaluate(config: &ScenarioConfig, output: &RunOutput, suite: Suite) -> Vec<CheckReport> {
    let want = |s| suite == Suite::All || suite == s;
    let records = &output.records;
    let mut reports = Vec::new();
    if want(Suite::Boundedness) {
        reports.push(diagnostics::check_boundedness(
            records,
            &config.params,
            config.checks.horizon_fraction,
        ));
    }
    if want(Suite::Decay) {
        reports.push(diagnostics::check_wz_decay(records, &config.params, Some(&output.audit)));
    }
    if want(Suite::Stabilization) {
        let criteria = StabilizationCriteria {
            eps: config.checks.eps,
            delta_floor: config.checks.delta_floor,
        };
        reports.push(diagnostics::check_stabilization(
            records,
            &config.params,
            Some((&output.final_state, &config.grid)),
            criteria,
        ));
    }
    if want(Suite::Lyapunov) {
        reports.push(diagnostics::check_lyapunov_budget(records, &config.params));
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_satisfies_initial_hypotheses() {
        let cfg = ScenarioConfig::paper_default();
        cfg.validate().unwrap();
        let s = cfg.initial_state().unwrap();
        assert!(s.u.min() > 0.0);
        assert!(s.w.max() > 0.0 && s.z.max() > 0.0);
        assert!(s.v.min() >= 0.0 && s.w.min() >= 0.0 && s.z.min() >= 0.0);
        // Bumps peak near their configured centers.
        let g = cfg.grid;
        let (mut best, mut at) = (0.0, (0, 0));
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if s.w.get(i, j) > best {
                    best = s.w.get(i, j);
                    at = (i, j);
                }
            }
        }
        let (x, y) = g.center(at.0, at.1);
        assert!((x - 0.3).abs() < g.hx() && (y - 0.3).abs() < g.hy());
    }

    #[test]
    fn perturbed_recipe_is_seeded() {
        let mut cfg = ScenarioConfig::paper_default().with_grid(Grid::unit_square(8).unwrap());
        cfg.initial = InitialRecipe::PerturbedHomogeneous { base: [1.0, 0.2, 0.05, 0.05], noise: 0.2 };
        cfg.seed = 11;
        let a = cfg.initial_state().unwrap();
        let b = cfg.initial_state().unwrap();
        assert_eq!(a, b);
        cfg.seed = 12;
        assert_ne!(a, cfg.initial_state().unwrap());
        assert!(a.u.min() >= 0.8 && a.u.max() <= 1.2);
    }

    #[test]
    fn invalid_recipes_are_rejected() {
        let g = Grid::unit_square(4).unwrap();
        assert!(InitialRecipe::Homogeneous([0.0, 0.0, 0.0, 0.0]).build(&g, 0).is_err());
        assert!(InitialRecipe::Homogeneous([1.0, -0.1, 0.0, 0.0]).build(&g, 0).is_err());
        let mut cfg = ScenarioConfig::paper_default();
        cfg.outputs.p = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("decay".parse::<Suite>().unwrap(), Suite::Decay);
        assert!("nope".parse::<Suite>().is_err());
    }
}
