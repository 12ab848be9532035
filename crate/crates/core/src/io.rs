//! Configuration files and run artifacts.
//!
//! A run directory holds `config.echo` (the fully resolved configuration),
//! `functionals.csv`, `snapshots/<t>_<field>.csv`, and after `check`,
//! `checks.txt`. Every file is written to a temporary sibling and renamed
//! into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{CheckReport, FunctionalRecord};
use crate::error::{Error, Result};
use crate::harness::{
    Bump, CheckSettings, ConvergenceReport, InitialRecipe, OracleSample, OutputPlan,
    ScenarioConfig, SweepReport,
};
use crate::model::{Field, Grid, Parameters, State};
use crate::timestepper::{RunOutput, StepControls};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    params: ParamsSection,
    grid: GridSection,
    controls: ControlsSection,
    initial: InitialSection,
    outputs: OutputsSection,
    checks: ChecksSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParamsSection {
    mu: f64,
    beta: f64,
    d_w: f64,
    d_z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridSection {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ControlsSection {
    dt_init: f64,
    dt_min: f64,
    safety: f64,
    t_end: f64,
    cfl_diff: f64,
    positivity_guard: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_dt: Option<f64>,
    stop_at_equilibrium: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InitialSection {
    kind: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<BumpSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<BumpSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<BumpSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<BumpSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BumpSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputsSection {
    cadence: f64,
    snapshot_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ChecksSection {
    eps: f64,
    delta_floor: f64,
    horizon_fraction: f64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile::from(&ScenarioConfig::paper_default())
    }
}

impl Default for ParamsSection {
    fn default() -> Self {
        ConfigFile::default().params
    }
}

impl Default for GridSection {
    fn default() -> Self {
        ConfigFile::default().grid
    }
}

impl Default for ControlsSection {
    fn default() -> Self {
        ConfigFile::default().controls
    }
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: "gaussian-bumps".into(),
            seed: 0,
            values: None,
            noise: None,
            u: None,
            v: None,
            w: None,
            z: None,
        }
    }
}

impl Default for OutputsSection {
    fn default() -> Self {
        ConfigFile::default().outputs
    }
}

impl Default for ChecksSection {
    fn default() -> Self {
        ConfigFile::default().checks
    }
}

impl From<&Bump> for BumpSection {
    fn from(b: &Bump) -> Self {
        Self {
            base: Some(b.base),
            amplitude: Some(b.amplitude),
            center: Some(b.center),
            width: Some(b.width),
        }
    }
}

impl From<&ScenarioConfig> for ConfigFile {
    fn from(cfg: &ScenarioConfig) -> Self {
        let c = &cfg.controls;
        let mut initial = InitialSection {
            kind: cfg.initial.kind().into(),
            seed: cfg.seed,
            ..InitialSection::default()
        };
        match &cfg.initial {
            InitialRecipe::Equilibrium => {}
            InitialRecipe::Homogeneous(values) => initial.values = Some(*values),
            InitialRecipe::GaussianBumps([u, v, w, z]) => {
                initial.u = Some(u.into());
                initial.v = Some(v.into());
                initial.w = Some(w.into());
                initial.z = Some(z.into());
            }
            InitialRecipe::PerturbedHomogeneous { base, noise } => {
                initial.values = Some(*base);
                initial.noise = Some(*noise);
            }
        }
        Self {
            params: ParamsSection {
                mu: cfg.params.mu(),
                beta: cfg.params.beta(),
                d_w: cfg.params.d_w(),
                d_z: cfg.params.d_z(),
            },
            grid: GridSection {
                nx: cfg.grid.nx(),
                ny: cfg.grid.ny(),
                lx: cfg.grid.lx(),
                ly: cfg.grid.ly(),
            },
            controls: ControlsSection {
                dt_init: c.dt_init,
                dt_min: c.dt_min,
                safety: c.safety,
                t_end: c.t_end,
                cfl_diff: c.cfl_diff,
                positivity_guard: c.positivity_guard,
                fixed_dt: c.fixed_dt,
                stop_at_equilibrium: c.stop_at_equilibrium,
            },
            initial,
            outputs: OutputsSection {
                cadence: cfg.outputs.cadence,
                snapshot_times: cfg.outputs.snapshot_times.clone(),
                dir: cfg.outputs.dir.clone(),
                p: cfg.outputs.p,
            },
            checks: ChecksSection {
                eps: cfg.checks.eps,
                delta_floor: cfg.checks.delta_floor,
                horizon_fraction: cfg.checks.horizon_fraction,
            },
        }
    }
}

impl ConfigFile {
    fn resolve(self) -> Result<ScenarioConfig> {
        let p = self.params;
        let params = Parameters::new(p.mu, p.beta, p.d_w, p.d_z)?;
        let g = self.grid;
        let grid = Grid::new(g.nx, g.ny, g.lx, g.ly)?;
        let c = self.controls;
        let controls = StepControls {
            dt_init: c.dt_init,
            dt_min: c.dt_min,
            safety: c.safety,
            t_end: c.t_end,
            cfl_diff: c.cfl_diff,
            positivity_guard: c.positivity_guard,
            fixed_dt: c.fixed_dt,
            stop_at_equilibrium: c.stop_at_equilibrium,
        };
        let seed = self.initial.seed;
        let initial = self.initial.resolve()?;
        let o = self.outputs;
        let outputs = OutputPlan {
            cadence: o.cadence,
            snapshot_times: o.snapshot_times,
            dir: o.dir,
            p: o.p,
        };
        let k = self.checks;
        let checks = CheckSettings {
            eps: k.eps,
            delta_floor: k.delta_floor,
            horizon_fraction: k.horizon_fraction,
        };
        let cfg = ScenarioConfig { params, grid, controls, initial, outputs, checks, seed };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl InitialSection {
    fn resolve(self) -> Result<InitialRecipe> {
        let has_bumps = self.u.is_some() || self.v.is_some() || self.w.is_some() || self.z.is_some();
        let reject = |key: &str| {
            Err(Error::Config(format!(
                "initial.{key} does not apply to kind `{}`",
                self.kind
            )))
        };
        let need_values = || {
            self.values.ok_or_else(|| {
                Error::Config(format!("initial.values is required for kind `{}`", self.kind))
            })
        };
        match self.kind.as_str() {
            "equilibrium" => {
                if self.values.is_some() {
                    return reject("values");
                }
                if self.noise.is_some() {
                    return reject("noise");
                }
                if has_bumps {
                    return reject("u/v/w/z");
                }
                Ok(InitialRecipe::Equilibrium)
            }
            "homogeneous" => {
                if self.noise.is_some() {
                    return reject("noise");
                }
                if has_bumps {
                    return reject("u/v/w/z");
                }
                Ok(InitialRecipe::Homogeneous(need_values()?))
            }
            "perturbed-homogeneous" => {
                if has_bumps {
                    return reject("u/v/w/z");
                }
                let noise = self.noise.ok_or_else(|| {
                    Error::Config("initial.noise is required for kind `perturbed-homogeneous`".into())
                })?;
                Ok(InitialRecipe::PerturbedHomogeneous { base: need_values()?, noise })
            }
            "gaussian-bumps" => {
                if self.values.is_some() {
                    return reject("values");
                }
                if self.noise.is_some() {
                    return reject("noise");
                }
                let defaults = InitialRecipe::default_bumps();
                let given = [self.u, self.v, self.w, self.z];
                let bumps = std::array::from_fn(|i| {
                    let d = defaults[i];
                    let b = given[i].clone().unwrap_or_default();
                    Bump {
                        base: b.base.unwrap_or(d.base),
                        amplitude: b.amplitude.unwrap_or(d.amplitude),
                        center: b.center.unwrap_or(d.center),
                        width: b.width.unwrap_or(d.width),
                    }
                });
                Ok(InitialRecipe::GaussianBumps(bumps))
            }
            other => Err(Error::Config(format!(
                "initial.kind `{other}` is not one of equilibrium, homogeneous, gaussian-bumps, perturbed-homogeneous"
            ))),
        }
    }
}

/// Parses a TOML configuration. Missing keys take the defaults of
/// [`ScenarioConfig::paper_default`]; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.resolve()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// The fully resolved configuration as TOML. Parsing it gives back `cfg`.
pub fn echo_config(cfg: &ScenarioConfig) -> String {
    let body = toml::to_string_pretty(&ConfigFile::from(cfg)).expect("config serializes");
    format!("# resolved configuration\n{body}")
}

/// Writes `contents` to a temporary sibling of `path` and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Renders records as CSV, followed by a `# <trailer>` comment line.
pub fn functionals_csv(records: &[FunctionalRecord], trailer: &str) -> String {
    let mut out = FunctionalRecord::COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let row: Vec<String> = r.to_array().iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let _ = writeln!(out, "# {trailer}");
    out
}

/// Contents of a `functionals.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalsTable {
    pub records: Vec<FunctionalRecord>,
    /// The trailing comment, e.g. `stop_reason=end_time`.
    pub trailer: Option<String>,
}

impl FunctionalsTable {
    pub fn failed(&self) -> bool {
        self.trailer.as_deref().is_some_and(|t| t.starts_with("FAILED"))
    }
}

pub fn parse_functionals(text: &str) -> Result<FunctionalsTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("functionals: empty file".into()))?;
    if header != FunctionalRecord::COLUMNS.join(",") {
        return Err(Error::Config(format!("functionals: unexpected header `{header}`")));
    }
    let mut records = Vec::new();
    let mut trailer = None;
    for (n, line) in lines.enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            trailer = Some(c.trim().to_string());
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("functionals: row {}: {e}", n + 1)))?;
        let arr: [f64; 20] = values.try_into().map_err(|v: Vec<f64>| {
            Error::Config(format!("functionals: row {} has {} columns, expected 20", n + 1, v.len()))
        })?;
        records.push(FunctionalRecord::from_array(arr));
    }
    Ok(FunctionalsTable { records, trailer })
}

/// File name of one field snapshot, sortable by time.
pub fn snapshot_file_name(t: f64, field: &str) -> String {
    format!("{t:011.4}_{field}.csv")
}

/// A field dump: the header line `# nx ny hx hy t field`, then `ny` rows of
/// `nx` space-separated values, row `j` holding cells `(0..nx, j)`.
pub fn snapshot_csv(field: &Field, name: &str, grid: &Grid, t: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} {} {:.16e} {:.16e} {:.16e} {name}",
        grid.nx(),
        grid.ny(),
        grid.hx(),
        grid.hy(),
        t
    );
    for row in field.values().chunks(grid.nx()) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub t: f64,
    pub field: String,
    /// Row-major, `j * nx + i`.
    pub values: Vec<f64>,
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let bad = |msg: String| Error::Config(format!("snapshot: {msg}"));
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|h| h.strip_prefix('#'))
        .ok_or_else(|| bad("missing header".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(bad(format!("header `{header}` needs 6 entries")));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
    let (nx, ny) = (int(parts[0])?, int(parts[1])?);
    let mut values = Vec::with_capacity(nx * ny);
    for (j, line) in lines.enumerate() {
        let row: Vec<f64> = line.split_whitespace().map(num).collect::<Result<_>>()?;
        if row.len() != nx {
            return Err(bad(format!("row {j} has {} values, expected {nx}", row.len())));
        }
        values.extend(row);
    }
    if values.len() != nx * ny {
        return Err(bad(format!("{} rows, expected {ny}", values.len() / nx.max(1))));
    }
    Ok(Snapshot {
        nx,
        ny,
        hx: num(parts[2])?,
        hy: num(parts[3])?,
        t: num(parts[4])?,
        field: parts[5].to_string(),
        values,
    })
}

fn write_state(dir: &Path, state: &State, grid: &Grid, name_of: impl Fn(&str) -> String) -> Result<()> {
    for (name, field) in state.fields() {
        write_atomic(&dir.join(name_of(name)), snapshot_csv(field, name, grid, state.t).as_bytes())?;
    }
    Ok(())
}

/// Writes `config.echo`, `functionals.csv` and snapshots for a run. When
/// `failure` is given, the CSV trailer marks the run as failed and the last
/// state is dumped as `failure_<field>.csv`.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, output: &RunOutput, failure: Option<&Error>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("config.echo"), echo_config(cfg).as_bytes())?;
    let trailer = match failure {
        None => format!("stop_reason={}", output.stop_reason),
        Some(e) => format!("FAILED {}", e.to_string().replace('\n', " ")),
    };
    write_atomic(&dir.join("functionals.csv"), functionals_csv(&output.records, &trailer).as_bytes())?;
    let snaps = dir.join("snapshots");
    for state in &output.snapshots {
        write_state(&snaps, state, &cfg.grid, |f| snapshot_file_name(state.t, f))?;
    }
    if failure.is_some() {
        write_state(dir, &output.final_state, &cfg.grid, |f| format!("failure_{f}.csv"))?;
    }
    Ok(())
}

/// One line per check, then `# overall=pass|fail`.
pub fn checks_text(reports: &[CheckReport]) -> String {
    let mut out: String = reports.iter().map(|r| r.to_string()).collect();
    let overall = if reports.iter().all(CheckReport::passed) { "pass" } else { "fail" };
    let _ = writeln!(out, "# overall={overall}");
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "param,value,beta_below_one,status,stop_reason,t_final,wz_mass_final,linf_sum_final,\
         l2_u_minus_1_final,min_u_final,wz_rate,wz_rate_bound,boundedness,decay,stabilization,lyapunov,error\n",
    );
    for row in &report.rows {
        let beta = row.config.params.beta();
        let _ = write!(out, "{},{:.16e},{},", report.param, row.value, row.beta_below_one());
        match &row.outcome {
            Ok(o) => {
                let last = o.final_record();
                let col = |f: fn(&FunctionalRecord) -> f64| opt(last.map(f));
                let _ = writeln!(
                    out,
                    "ok,{},{},{},{},{},{},{},{},{},{},{},{},",
                    o.output.stop_reason,
                    col(|r| r.t),
                    col(|r| r.wz_mass),
                    col(FunctionalRecord::linf_sum),
                    col(|r| r.l2_u_minus_1),
                    col(|r| r.min_u),
                    opt(o.wz_rate),
                    opt((beta < 1.0).then_some(1.0 - beta)),
                    o.status("boundedness"),
                    o.status("decay"),
                    o.status("stabilization"),
                    o.status("lyapunov"),
                );
            }
            Err(e) => {
                let _ = writeln!(out, "failed,,,,,,,,,,,,,{}", e.replace([',', '\n'], ";"));
            }
        }
    }
    out
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("n,h,dt,horizon,error_vs_finest,observed_order\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            r.n,
            r.h,
            report.dt,
            report.horizon,
            opt(r.error),
            opt(r.order)
        );
    }
    out
}

pub fn oracle_csv(samples: &[OracleSample]) -> String {
    let mut out = String::from("t,u,v,w,z\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.y[0], s.y[1], s.y[2], s.y[3]
        );
    }
    out
}
