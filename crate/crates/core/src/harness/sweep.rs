use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{evaluate, ScenarioConfig, Suite};
use crate::diagnostics::{fit_decay_rate, CheckReport, CheckStatus, FunctionalRecord};
use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::timestepper::{run, RunOutput};

/// Model constant varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Mu,
    Beta,
    DW,
    DZ,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Beta => "beta",
            SweepParam::DW => "d_w",
            SweepParam::DZ => "d_z",
        }
    }

    fn apply(&self, base: &Parameters, value: f64) -> Result<Parameters> {
        let (mut mu, mut beta, mut d_w, mut d_z) = (base.mu(), base.beta(), base.d_w(), base.d_z());
        match self {
            SweepParam::Mu => mu = value,
            SweepParam::Beta => beta = value,
            SweepParam::DW => d_w = value,
            SweepParam::DZ => d_z = value,
        }
        Parameters::new(mu, beta, d_w, d_z)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(SweepParam::Mu),
            "beta" => Ok(SweepParam::Beta),
            "d_w" => Ok(SweepParam::DW),
            "d_z" => Ok(SweepParam::DZ),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected mu, beta, d_w or d_z)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub config: ScenarioConfig,
    /// The run, or the reason it failed.
    pub outcome: std::result::Result<RowOutcome, String>,
}

impl SweepRow {
    /// β < 1, the regime where decay and stabilization are expected.
    pub fn beta_below_one(&self) -> bool {
        self.config.params.beta() < 1.0
    }
}

#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub output: RunOutput,
    pub reports: Vec<CheckReport>,
    /// Fitted decay rate of `∫w + ∫z` over the second half of the run.
    pub wz_rate: Option<f64>,
}

impl RowOutcome {
    pub fn final_record(&self) -> Option<&FunctionalRecord> {
        self.output.records.last()
    }

    /// Aggregate status of one suite.
    pub fn status(&self, suite: &str) -> CheckStatus {
        match self.reports.iter().find(|r| r.suite == suite) {
            None => CheckStatus::Inapplicable,
            Some(r) if r.is_inapplicable() => CheckStatus::Inapplicable,
            Some(r) if r.passed() => CheckStatus::Pass,
            Some(_) => CheckStatus::Fail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub param: SweepParam,
    /// Ordered by parameter value.
    pub rows: Vec<SweepRow>,
}

/// Runs one variant of `base` per value, concurrently, and applies every
/// check suite to each. A failing row is recorded, not fatal.
pub fn sweep(base: &ScenarioConfig, param: SweepParam, values: &[f64]) -> SweepReport {
    let mut rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let mut config = base.clone();
            let outcome = param
                .apply(&base.params, value)
                .map_err(|e| e.to_string())
                .and_then(|params| {
                    config.params = params;
                    run(&config).map_err(|f| f.to_string())
                })
                .map(|output| {
                    let reports = evaluate(&config, &output, Suite::All);
                    let wz_rate = wz_decay_rate(&output.records);
                    RowOutcome { output, reports, wz_rate }
                });
            SweepRow { value, config, outcome }
        })
        .collect();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    SweepReport { param, rows }
}

/// Decay rate of `∫w + ∫z` fitted over the second half of the records.
pub(crate) fn wz_decay_rate(records: &[FunctionalRecord]) -> Option<f64> {
    let (first, last) = (records.first()?, records.last()?);
    let mid = 0.5 * (first.t + last.t);
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.wz_mass)).collect();
    fit_decay_rate(&series, (mid, last.t)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_empty() {
        let report = sweep(&ScenarioConfig::paper_default(), SweepParam::Beta, &[]);
        assert!(report.rows.is_empty());
    }

    #[test]
    fn param_names_parse() {
        for p in [SweepParam::Mu, SweepParam::Beta, SweepParam::DW, SweepParam::DZ] {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn invalid_value_fails_only_its_row() {
        let base = ScenarioConfig::equilibrium(4, 0.5);
        let report = sweep(&base, SweepParam::DW, &[1.0, -1.0]);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].value, -1.0);
        let err = report.rows[0].outcome.as_ref().unwrap_err();
        assert!(err.contains("d_w"), "{err}");
        assert!(report.rows[1].outcome.is_ok());
    }

    #[test]
    fn rows_are_ordered_and_gated() {
        let base = ScenarioConfig::homogeneous_oracle(2, 20.0);
        let report = sweep(&base, SweepParam::Beta, &[1.5, 0.5]);
        let values: Vec<f64> = report.rows.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.5, 1.5]);
        assert!(report.rows[0].beta_below_one());
        let hi = report.rows[1].outcome.as_ref().unwrap();
        assert_eq!(hi.status("stabilization"), CheckStatus::Inapplicable);
        assert_eq!(hi.status("decay"), CheckStatus::Inapplicable);
        let lo = report.rows[0].outcome.as_ref().unwrap();
        assert_eq!(lo.status("decay"), CheckStatus::Pass);
        assert!(lo.wz_rate.unwrap() >= 0.5);
    }
}
