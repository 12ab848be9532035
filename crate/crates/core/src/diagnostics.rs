//! Functionals tracked along a run, space-time accumulators, decay-rate
//! fits, and the check suites that compare a trajectory against the
//! qualitative behavior the model is known to have.

use std::fmt;

use crate::discretization::gradient_sq_into;
use crate::error::{Error, Result};
use crate::model::{transform_a, Field, Grid, Parameters, State};
use crate::timestepper::StepAudit;

/// Every functional evaluated at one time instant.
///
/// Spatial integrals use the midpoint rule; the `acc_*` accumulators are
/// time integrals from 0 to `t` by the trapezoid rule over records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_w: f64,
    pub mass_z: f64,
    /// `2β∫u + 2β∫w + ∫z`
    pub weighted_mass: f64,
    /// `∫w + ∫z`
    pub wz_mass: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub linf_w: f64,
    pub linf_z: f64,
    pub l2_u_minus_1: f64,
    pub lp_u_minus_1: f64,
    pub min_u: f64,
    /// `∫e^v (a − 1 − ln a)` with `a = u e^{−v}`
    pub lyapunov: f64,
    /// `∫e^v |∇a|²`
    pub dirichlet_a: f64,
    /// `‖∇w‖_{L³}`
    pub grad_w_l3: f64,
    /// `‖∇z‖_{L³}`
    pub grad_z_l3: f64,
    /// `∫₀ᵗ∫u²`
    pub acc_u_sq: f64,
    /// `∫₀ᵗ∫(a e^v − 1)²`
    pub acc_aev_sq: f64,
    /// `∫₀ᵗ∫a_t²`, with `a_t` a forward difference between records
    pub acc_at_sq: f64,
}

impl FunctionalRecord {
    pub const COLUMNS: [&'static str; 20] = [
        "t",
        "mass_u",
        "mass_w",
        "mass_z",
        "weighted_mass",
        "wz_mass",
        "linf_u",
        "linf_v",
        "linf_w",
        "linf_z",
        "l2_u_minus_1",
        "lp_u_minus_1",
        "min_u",
        "lyapunov",
        "dirichlet_a",
        "grad_w_l3",
        "grad_z_l3",
        "acc_u_sq",
        "acc_aev_sq",
        "acc_at_sq",
    ];

    /// Values in [`FunctionalRecord::COLUMNS`] order.
    pub fn to_array(&self) -> [f64; 20] {
        [
            self.t,
            self.mass_u,
            self.mass_w,
            self.mass_z,
            self.weighted_mass,
            self.wz_mass,
            self.linf_u,
            self.linf_v,
            self.linf_w,
            self.linf_z,
            self.l2_u_minus_1,
            self.lp_u_minus_1,
            self.min_u,
            self.lyapunov,
            self.dirichlet_a,
            self.grad_w_l3,
            self.grad_z_l3,
            self.acc_u_sq,
            self.acc_aev_sq,
            self.acc_at_sq,
        ]
    }

    pub fn from_array(v: [f64; 20]) -> Self {
        Self {
            t: v[0],
            mass_u: v[1],
            mass_w: v[2],
            mass_z: v[3],
            weighted_mass: v[4],
            wz_mass: v[5],
            linf_u: v[6],
            linf_v: v[7],
            linf_w: v[8],
            linf_z: v[9],
            l2_u_minus_1: v[10],
            lp_u_minus_1: v[11],
            min_u: v[12],
            lyapunov: v[13],
            dirichlet_a: v[14],
            grad_w_l3: v[15],
            grad_z_l3: v[16],
            acc_u_sq: v[17],
            acc_aev_sq: v[18],
            acc_at_sq: v[19],
        }
    }

    pub fn linf_sum(&self) -> f64 {
        self.linf_u + self.linf_v + self.linf_w + self.linf_z
    }
}

/// A record plus what the next record needs to advance the accumulators.
#[derive(Debug, Clone)]
pub struct Sample {
    pub record: FunctionalRecord,
    a: Field,
    u_sq: f64,
    aev_sq: f64,
}

impl Sample {
    pub fn a(&self) -> &Field {
        &self.a
    }
}

/// `s − 1 − ln s`, evaluated without cancellation near `s = 1`.
pub fn relative_entropy_density(s: f64) -> f64 {
    let d = s - 1.0;
    if d.abs() < 1e-3 {
        let d2 = d * d;
        d2 * (0.5 - d / 3.0 + d2 / 4.0 - d2 * d / 5.0)
    } else {
        d - d.ln_1p()
    }
}

/// Evaluates every functional of `state`, advancing the accumulators from
/// `prev` (or starting them at zero).
pub fn compute_functionals(
    state: &State,
    params: &Parameters,
    grid: &Grid,
    prev: Option<&Sample>,
    p: f64,
) -> Result<Sample> {
    state.validate(grid)?;
    let a = transform_a(state)?;
    if let Some(index) = a.values().iter().position(|&x| x < 1e-300) {
        return Err(Error::Positivity {
            field: "a",
            constraint: "a >= 1e-300",
            index,
            value: a.values()[index],
        });
    }
    let area = grid.cell_area();
    let (u, v, w, z) = (state.u.values(), state.v.values(), state.w.values(), state.z.values());
    let n = grid.len();

    let mut l2 = 0.0;
    let mut lp = 0.0;
    let mut lyapunov = 0.0;
    let mut u_sq = 0.0;
    let mut aev_sq = 0.0;
    for k in 0..n {
        let dev = u[k] - 1.0;
        l2 += dev * dev;
        lp += dev.abs().powf(p);
        let ev = v[k].exp();
        lyapunov += ev * relative_entropy_density(a.values()[k]);
        u_sq += u[k] * u[k];
        let r = a.values()[k] * ev - 1.0;
        aev_sq += r * r;
    }
    let (l2, lp, lyapunov, u_sq, aev_sq) = (
        (l2 * area).sqrt(),
        (lp * area).powf(1.0 / p),
        lyapunov * area,
        u_sq * area,
        aev_sq * area,
    );

    let mut grad = vec![0.0; n];
    gradient_sq_into(&mut grad, a.values(), grid);
    let dirichlet_a = grad.iter().zip(v).map(|(g, v)| v.exp() * g).sum::<f64>() * area;
    let l3 = |f: &[f64], grad: &mut Vec<f64>| {
        gradient_sq_into(grad, f, grid);
        (grad.iter().map(|g| g * g.sqrt()).sum::<f64>() * area).cbrt()
    };
    let grad_w_l3 = l3(w, &mut grad);
    let grad_z_l3 = l3(z, &mut grad);

    let mass_u = state.u.integral(grid);
    let mass_w = state.w.integral(grid);
    let mass_z = state.z.integral(grid);
    let beta = params.beta();

    let (acc_u_sq, acc_aev_sq, acc_at_sq) = match prev {
        None => (0.0, 0.0, 0.0),
        Some(prev) => {
            let dt = state.t - prev.record.t;
            if dt > 0.0 {
                let da2: f64 = a
                    .values()
                    .iter()
                    .zip(prev.a.values())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    * area;
                (
                    prev.record.acc_u_sq + 0.5 * dt * (prev.u_sq + u_sq),
                    prev.record.acc_aev_sq + 0.5 * dt * (prev.aev_sq + aev_sq),
                    prev.record.acc_at_sq + da2 / dt,
                )
            } else {
                (prev.record.acc_u_sq, prev.record.acc_aev_sq, prev.record.acc_at_sq)
            }
        }
    };

    let record = FunctionalRecord {
        t: state.t,
        mass_u,
        mass_w,
        mass_z,
        weighted_mass: 2.0 * beta * mass_u + 2.0 * beta * mass_w + mass_z,
        wz_mass: mass_w + mass_z,
        linf_u: state.u.max_abs(),
        linf_v: state.v.max_abs(),
        linf_w: state.w.max_abs(),
        linf_z: state.z.max_abs(),
        l2_u_minus_1: l2,
        lp_u_minus_1: lp,
        min_u: state.u.min(),
        lyapunov,
        dirichlet_a,
        grad_w_l3,
        grad_z_l3,
        acc_u_sq,
        acc_aev_sq,
        acc_at_sq,
    };
    Ok(Sample {
        record,
        a,
        u_sq,
        aev_sq,
    })
}

/// `‖f − 1‖_{L²}`; used for the `a → 1` check on a final state.
pub fn l2_distance_to_one(f: &Field, grid: &Grid) -> f64 {
    (f.values().iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>() * grid.cell_area()).sqrt()
}

/// Chains [`compute_functionals`] over the states of one run, in time order.
#[derive(Debug, Clone)]
pub struct Monitor {
    params: Parameters,
    grid: Grid,
    p: f64,
    prev: Option<Sample>,
}

impl Monitor {
    pub fn new(params: Parameters, grid: Grid, p: f64) -> Self {
        Self {
            params,
            grid,
            p,
            prev: None,
        }
    }

    pub fn record(&mut self, state: &State) -> Result<FunctionalRecord> {
        let sample = compute_functionals(state, &self.params, &self.grid, self.prev.as_ref(), self.p)?;
        let record = sample.record;
        self.prev = Some(sample);
        Ok(record)
    }
}

/// Least-squares rate `r` with `y ≈ C e^{−r t}` over samples whose `t`
/// lies in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!(
            "decay fit needs at least 10 samples in [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some(&(t, y)) = pts.iter().find(|&&(_, y)| !(y > 0.0)) {
        return Err(Error::Fit(format!("decay fit needs y > 0, got {y} at t = {t}")));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in &pts {
        sxy += (t - tm) * (y.ln() - lm);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("decay fit window has no time spread".into()));
    }
    Ok(-sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Inapplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inapplicable => "inapplicable",
        })
    }
}

/// Direction of the comparison `value ⋈ bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub status: CheckStatus,
}

impl CheckLine {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        let status = if value <= bound { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), value, bound, relation: Relation::AtMost, status }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        let status = if value >= bound { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), value, bound, relation: Relation::AtLeast, status }
    }

    pub fn inapplicable(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            bound: f64::NAN,
            relation: Relation::AtMost,
            status: CheckStatus::Inapplicable,
        }
    }
}

/// Outcome of one check suite: one line per assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: &'static str,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    fn new(suite: &'static str) -> Self {
        Self { suite, lines: Vec::new() }
    }

    fn push(&mut self, line: CheckLine) {
        self.lines.push(line);
    }

    /// No applicable line failed.
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.status != CheckStatus::Fail)
    }

    pub fn is_inapplicable(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.status == CheckStatus::Inapplicable)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            let rel = match l.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            writeln!(
                f,
                "{}.{} value={:.9e} {} bound={:.9e} {}",
                self.suite, l.name, l.value, rel, l.bound, l.status
            )?;
        }
        Ok(())
    }
}

/// An empty trajectory cannot satisfy anything.
fn empty(mut report: CheckReport) -> CheckReport {
    report.push(CheckLine::at_least("records", 0.0, 1.0));
    report
}

/// Linear interpolation of `f` at time `t` along the records.
fn interpolate(records: &[FunctionalRecord], t: f64, f: impl Fn(&FunctionalRecord) -> f64) -> f64 {
    let idx = records.partition_point(|r| r.t < t);
    if idx == 0 {
        return f(&records[0]);
    }
    if idx >= records.len() {
        return f(&records[records.len() - 1]);
    }
    let (a, b) = (&records[idx - 1], &records[idx]);
    if b.t == a.t {
        return f(b);
    }
    let s = (t - a.t) / (b.t - a.t);
    f(a) + s * (f(b) - f(a))
}

fn sup_over(records: &[FunctionalRecord], from: f64, f: impl Fn(&FunctionalRecord) -> f64) -> f64 {
    records
        .iter()
        .filter(|r| r.t >= from)
        .map(f)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ratio of the sup over the final `fraction` of the run to the global sup
/// (0 when the global sup is 0).
fn final_sup_ratio(records: &[FunctionalRecord], fraction: f64, f: impl Fn(&FunctionalRecord) -> f64 + Copy) -> f64 {
    let (t0, t1) = (records[0].t, records[records.len() - 1].t);
    let global = sup_over(records, t0, f);
    let late = sup_over(records, t1 - fraction * (t1 - t0), f);
    if global > 0.0 {
        late / global
    } else {
        0.0
    }
}

/// Fraction of an accumulator's total gained over the final `fraction` of
/// the horizon.
fn final_increment_fraction(records: &[FunctionalRecord], fraction: f64, f: impl Fn(&FunctionalRecord) -> f64 + Copy) -> f64 {
    let (t0, t1) = (records[0].t, records[records.len() - 1].t);
    let total = f(&records[records.len() - 1]);
    if total <= 0.0 {
        return 0.0;
    }
    let earlier = interpolate(records, t1 - fraction * (t1 - t0), f);
    (total - earlier) / total
}

/// Exponential envelope of `∫w + ∫z` for `β < 1`: the mass may never exceed
/// its initial value times `e^{−(1−β)t}`.
pub fn check_wz_decay(records: &[FunctionalRecord], params: &Parameters, audit: Option<&StepAudit>) -> CheckReport {
    const TOL: f64 = 1e-8;
    let mut report = CheckReport::new("decay");
    if params.beta() >= 1.0 {
        report.push(CheckLine::inapplicable("wz_envelope"));
        report.push(CheckLine::inapplicable("wz_scaled_monotone"));
        report.push(CheckLine::inapplicable("wz_step_identity"));
        return report;
    }
    if records.is_empty() {
        return empty(report);
    }
    let rate = 1.0 - params.beta();
    let t0 = records[0].t;
    let wz0 = records[0].wz_mass;
    let envelope_excess = records
        .iter()
        .map(|r| {
            let env = wz0 * (-rate * (r.t - t0)).exp();
            if env > 0.0 {
                r.wz_mass / env - 1.0
            } else if r.wz_mass > 0.0 {
                f64::INFINITY
            } else {
                -1.0
            }
        })
        .fold(-1.0, f64::max);
    report.push(CheckLine::at_most("wz_envelope", envelope_excess, TOL));

    let scaled: Vec<f64> = records.iter().map(|r| r.wz_mass * (rate * (r.t - t0)).exp()).collect();
    let growth = scaled
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else if w[1] > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    report.push(CheckLine::at_most("wz_scaled_monotone", growth, TOL));

    match audit {
        Some(a) => report.push(CheckLine::at_most("wz_step_identity", a.max_wz_identity_residual, 1e-12)),
        None => report.push(CheckLine::inapplicable("wz_step_identity")),
    }
    report
}

/// Trend test for uniform boundedness: the sup of `Σ‖·‖_∞` must not be
/// reached in the final `horizon_fraction` of the run.
pub fn check_boundedness(records: &[FunctionalRecord], params: &Parameters, horizon_fraction: f64) -> CheckReport {
    let mut report = CheckReport::new("boundedness");
    if !params.admits_boundedness() {
        for name in ["sup_attained_before_final_fraction", "final_fraction_sup_ratio"] {
            report.push(CheckLine::inapplicable(name));
        }
        return report;
    }
    if records.is_empty() {
        return empty(report);
    }
    let (t0, t1) = (records[0].t, records[records.len() - 1].t);
    let cutoff = t1 - horizon_fraction * (t1 - t0);
    let mut best = (records[0].t, records[0].linf_sum());
    for r in records {
        if r.linf_sum() > best.1 {
            best = (r.t, r.linf_sum());
        }
    }
    let attained = CheckLine {
        status: if best.0 < cutoff || t1 == t0 { CheckStatus::Pass } else { CheckStatus::Fail },
        ..CheckLine::at_most("sup_attained_before_final_fraction", best.0, cutoff)
    };
    report.push(attained);
    report.push(CheckLine::at_most(
        "final_fraction_sup_ratio",
        final_sup_ratio(records, horizon_fraction, FunctionalRecord::linf_sum),
        1.05,
    ));
    for (name, f) in [
        ("sup_u", (|r: &FunctionalRecord| r.linf_u) as fn(&FunctionalRecord) -> f64),
        ("sup_v", |r| r.linf_v),
        ("sup_w", |r| r.linf_w),
        ("sup_z", |r| r.linf_z),
    ] {
        report.push(CheckLine::at_most(name, sup_over(records, t0, f), f64::MAX));
    }
    for (name, f) in [
        ("grad_w_l3_final_ratio", (|r: &FunctionalRecord| r.grad_w_l3) as fn(&FunctionalRecord) -> f64),
        ("grad_z_l3_final_ratio", |r| r.grad_z_l3),
    ] {
        report.push(CheckLine::at_most(name, final_sup_ratio(records, horizon_fraction, f), 1.05));
    }

    // Unit-window space-time integral of u²: late windows must not outgrow
    // the largest window of the first half.
    let mid = 0.5 * (t0 + t1);
    if t1 - t0 >= 4.0 {
        let window = |t: f64| interpolate(records, t + 1.0, |r| r.acc_u_sq) - interpolate(records, t, |r| r.acc_u_sq);
        let early = records
            .iter()
            .filter(|r| r.t + 1.0 <= mid)
            .map(|r| window(r.t))
            .fold(0.0, f64::max);
        let late = records
            .iter()
            .filter(|r| r.t >= mid && r.t + 1.0 <= t1)
            .map(|r| window(r.t))
            .fold(0.0, f64::max);
        let ratio = if early > 0.0 { late / early } else { 0.0 };
        report.push(CheckLine::at_most("u_sq_unit_window_ratio", ratio, 1.01));
    } else {
        report.push(CheckLine::inapplicable("u_sq_unit_window_ratio"));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationCriteria {
    pub eps: f64,
    pub delta_floor: f64,
}

/// Convergence to `(1, 0, 0, 0)`, the positive lower bound on `u` and the
/// exponential decay of `v`.
pub fn check_stabilization(
    records: &[FunctionalRecord],
    params: &Parameters,
    final_state: Option<(&State, &Grid)>,
    criteria: StabilizationCriteria,
) -> CheckReport {
    let mut report = CheckReport::new("stabilization");
    if !params.admits_stabilization() {
        for name in [
            "lp_u_minus_1",
            "linf_v",
            "linf_w",
            "linf_z",
            "min_u_final_half",
            "v_decay_rate",
            "l2_a_minus_1",
        ] {
            report.push(CheckLine::inapplicable(name));
        }
        return report;
    }
    if records.is_empty() {
        return empty(report);
    }
    let last = records[records.len() - 1];
    let eps = criteria.eps;
    report.push(CheckLine::at_most("lp_u_minus_1", last.lp_u_minus_1, eps));
    report.push(CheckLine::at_most("linf_v", last.linf_v, eps));
    report.push(CheckLine::at_most("linf_w", last.linf_w, eps));
    report.push(CheckLine::at_most("linf_z", last.linf_z, eps));

    let (t0, t1) = (records[0].t, last.t);
    let mid = 0.5 * (t0 + t1);
    let min_u = records
        .iter()
        .filter(|r| r.t >= mid)
        .map(|r| r.min_u)
        .fold(f64::INFINITY, f64::min);
    report.push(CheckLine::at_least("min_u_final_half", min_u, criteria.delta_floor));

    let v_series: Vec<(f64, f64)> = records.iter().filter(|r| r.t >= mid).map(|r| (r.t, r.linf_v)).collect();
    let rate_bound = 0.5 * min_u;
    if v_series.iter().all(|&(_, v)| v == 0.0) {
        // Nothing left to decay.
        report.push(CheckLine::at_least("v_decay_rate", f64::INFINITY, rate_bound));
    } else {
        let rate = fit_decay_rate(&v_series, (mid, t1)).unwrap_or(f64::NAN);
        report.push(CheckLine::at_least("v_decay_rate", rate, rate_bound));
    }

    match final_state.map(|(s, g)| transform_a(s).map(|a| l2_distance_to_one(&a, g))) {
        Some(Ok(d)) => report.push(CheckLine::at_most("l2_a_minus_1", d, eps)),
        Some(Err(_)) => report.push(CheckLine::at_most("l2_a_minus_1", f64::NAN, eps)),
        None => report.push(CheckLine::inapplicable("l2_a_minus_1")),
    }
    report
}

/// Nonnegativity of the Lyapunov functional and convergence of the
/// space-time budgets `∫∫(ae^v − 1)²` and `∫∫a_t²`.
pub fn check_lyapunov_budget(records: &[FunctionalRecord], params: &Parameters) -> CheckReport {
    let mut report = CheckReport::new("lyapunov");
    if records.is_empty() {
        return empty(report);
    }
    let min_f = records.iter().map(|r| r.lyapunov).fold(f64::INFINITY, f64::min);
    report.push(CheckLine::at_least("lyapunov_nonnegative", min_f, 0.0));
    let names = [
        "acc_aev_sq_final_increment",
        "acc_at_sq_final_increment",
        "lyapunov_final",
        "dirichlet_a_final_ratio",
    ];
    if !params.admits_stabilization() {
        for name in names {
            report.push(CheckLine::inapplicable(name));
        }
        return report;
    }
    report.push(CheckLine::at_most(names[0], final_increment_fraction(records, 0.1, |r| r.acc_aev_sq), 0.01));
    report.push(CheckLine::at_most(names[1], final_increment_fraction(records, 0.1, |r| r.acc_at_sq), 0.01));
    let last = records[records.len() - 1];
    let finite = last.lyapunov.is_finite() && last.dirichlet_a.is_finite();
    report.push(CheckLine::at_most(names[2], if finite { last.lyapunov } else { f64::INFINITY }, 1e-6));
    report.push(CheckLine::at_most(names[3], final_sup_ratio(records, 0.25, |r| r.dirichlet_a), 1.05));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid {
        Grid::unit_square(n).unwrap()
    }

    fn params(beta: f64) -> Parameters {
        Parameters::new(1.0, beta, 1.0, 1.0).unwrap()
    }

    #[test]
    fn equilibrium_functionals() {
        let g = unit(8);
        let s = compute_functionals(&State::equilibrium(&g), &params(0.5), &g, None, 2.0).unwrap();
        let r = s.record;
        assert_relative_eq!(r.mass_u, 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.weighted_mass, 1.0, max_relative = 1e-14);
        assert_eq!(r.wz_mass, 0.0);
        assert_eq!(r.lyapunov, 0.0);
        assert_eq!(r.dirichlet_a, 0.0);
        assert_eq!(r.min_u, 1.0);
        assert_eq!(r.acc_u_sq, 0.0);
    }

    #[test]
    fn homogeneous_functionals() {
        let g = unit(4);
        let s = State::homogeneous(&g, 2.0, 0.0, 0.0, 0.0);
        let r = compute_functionals(&s, &params(0.5), &g, None, 2.0).unwrap().record;
        assert_relative_eq!(r.lyapunov, 0.306853, max_relative = 1e-5);
        assert_relative_eq!(r.lyapunov, 1.0 - std::f64::consts::LN_2, max_relative = 1e-14);

        let s = State::homogeneous(&g, 0.5, 0.3, 0.2, 0.1);
        let r = compute_functionals(&s, &params(0.5), &g, None, 3.0).unwrap().record;
        assert_relative_eq!(r.weighted_mass, 0.8, max_relative = 1e-14);
        assert_relative_eq!(r.wz_mass, r.mass_w + r.mass_z, max_relative = 1e-14);
        assert_relative_eq!(r.lp_u_minus_1, 0.5, max_relative = 1e-14);
        assert_relative_eq!(r.l2_u_minus_1, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn accumulators_use_trapezoid_and_forward_differences() {
        let g = unit(4);
        let p = params(0.5);
        let mut s = State::homogeneous(&g, 1.0, 0.0, 0.0, 0.0);
        let first = compute_functionals(&s, &p, &g, None, 2.0).unwrap();
        s.t = 0.5;
        s.u = Field::constant(&g, 2.0);
        let second = compute_functionals(&s, &p, &g, Some(&first), 2.0).unwrap();
        // ∫u² goes 1 → 4 over 0.5: trapezoid 0.5 · (1 + 4) / 2.
        assert_relative_eq!(second.record.acc_u_sq, 1.25, max_relative = 1e-14);
        // (ae^v − 1)² goes 0 → 1.
        assert_relative_eq!(second.record.acc_aev_sq, 0.25, max_relative = 1e-14);
        // a_t = (2 − 1)/0.5 = 2, squared and integrated over 0.5 → 2.
        assert_relative_eq!(second.record.acc_at_sq, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_nonpositive_u() {
        let g = unit(4);
        let mut s = State::equilibrium(&g);
        s.u = Field::constant(&g, 0.0);
        assert!(compute_functionals(&s, &params(0.5), &g, None, 2.0).is_err());
    }

    #[test]
    fn rejects_vanishing_a() {
        let g = unit(4);
        let mut s = State::equilibrium(&g);
        s.u = Field::constant(&g, 1e-200);
        s.v = Field::constant(&g, 300.0);
        let err = compute_functionals(&s, &params(0.5), &g, None, 2.0).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn entropy_density_is_accurate_near_one() {
        for &d in &[1e-12, -1e-9, 5e-4, -9e-4, 2e-3, 0.5, -0.5] {
            let s: f64 = 1.0 + d;
            let exact = (s - 1.0) - (s - 1.0).ln_1p();
            let got = relative_entropy_density(s);
            assert!(got >= 0.0);
            if d.abs() > 1e-6 {
                assert_relative_eq!(got, exact, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn fit_exact_exponential() {
        let series: Vec<(f64, f64)> = (0..=100).map(|k| {
            let t = 0.1 * k as f64;
            (t, 3.0 * (-0.5 * t).exp())
        }).collect();
        let rate = fit_decay_rate(&series, (0.0, 10.0)).unwrap();
        assert!((rate - 0.5).abs() < 1e-10, "{rate}");
        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 2.0)).collect();
        assert!(fit_decay_rate(&flat, (0.0, 20.0)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let few: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_decay_rate(&few, (0.0, 10.0)).is_err());
        let mut zero: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 1.0)).collect();
        zero[7].1 = 0.0;
        assert!(fit_decay_rate(&zero, (0.0, 20.0)).is_err());
    }

    #[test]
    fn decay_check_gates_on_beta() {
        let rep = check_wz_decay(&[], &params(1.5), None);
        assert!(rep.is_inapplicable());
        assert!(rep.passed());
    }

    fn synthetic(rate: f64) -> Vec<FunctionalRecord> {
        (0..=200)
            .map(|k| {
                let t = 0.1 * k as f64;
                let mut a = [0.0; 20];
                a[0] = t;
                a[5] = 0.1 * (-rate * t).exp();
                FunctionalRecord::from_array(a)
            })
            .collect()
    }

    #[test]
    fn decay_check_detects_slow_decay() {
        assert!(check_wz_decay(&synthetic(0.6), &params(0.5), None).passed());
        let rep = check_wz_decay(&synthetic(0.4), &params(0.5), None);
        assert!(!rep.passed());
        assert_eq!(rep.line("wz_envelope").unwrap().status, CheckStatus::Fail);
    }

    #[test]
    fn boundedness_detects_terminal_growth() {
        let mut recs = synthetic(0.0);
        for (k, r) in recs.iter_mut().enumerate() {
            r.linf_u = 1.0 + 0.01 * k as f64;
        }
        let rep = check_boundedness(&recs, &params(0.5), 0.25);
        assert_eq!(rep.line("sup_attained_before_final_fraction").unwrap().status, CheckStatus::Fail);
        let rep = check_boundedness(&recs, &Parameters::new(0.0, 0.5, 1.0, 1.0).unwrap(), 0.25);
        assert!(rep.is_inapplicable());
    }

    #[test]
    fn report_lines_format() {
        let rep = check_wz_decay(&synthetic(0.6), &params(0.5), None);
        let text = rep.to_string();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("decay.wz_envelope value="));
        assert!(text.contains("inapplicable"));
    }

    proptest! {
        #[test]
        fn lyapunov_nonnegative(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = unit(5);
            let mut gen = |lo: f64, hi: f64| Field::new(&g, (0..g.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap();
            let s = State::new(0.0, gen(1e-3, 4.0), gen(0.0, 3.0), gen(0.0, 1.0), gen(0.0, 1.0));
            let r = compute_functionals(&s, &params(0.5), &g, None, 2.5).unwrap().record;
            prop_assert!(r.lyapunov >= 0.0);
            prop_assert!((r.wz_mass - (r.mass_w + r.mass_z)).abs() <= 1e-14 * r.wz_mass);
        }

        #[test]
        fn accumulators_nondecreasing(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = unit(4);
            let p = params(0.5);
            let mut monitor = Monitor::new(p, g, 2.0);
            let mut prev = None::<FunctionalRecord>;
            for k in 0..10 {
                let mut s = State::homogeneous(&g, rng.gen_range(0.1..3.0), rng.gen_range(0.0..1.0), 0.0, 0.0);
                s.t = k as f64 * 0.3;
                let r = monitor.record(&s).unwrap();
                if let Some(q) = prev {
                    prop_assert!(r.acc_u_sq >= q.acc_u_sq);
                    prop_assert!(r.acc_aev_sq >= q.acc_aev_sq);
                    prop_assert!(r.acc_at_sq >= q.acc_at_sq);
                }
                prev = Some(r);
            }
        }
    }
}
