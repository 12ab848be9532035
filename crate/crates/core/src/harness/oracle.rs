use crate::error::{Error, Result};
use crate::model::{reaction_point, Parameters};

/// Largest reference step the oracle accepts.
pub const ODE_ORACLE_MAX_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub t: f64,
    /// `(u, v, w, z)`
    pub y: [f64; 4],
}

/// Classical fourth-order Runge–Kutta integration of the spatially
/// homogeneous reduction
///
/// ```text
/// u' = −uz + μu(1−u),  v' = −(u+w)v,  w' = −w + uz,  z' = −z − uz + βw
/// ```
///
/// sampled at `0, cadence, 2·cadence, …` and at `t_end`. Each sampling
/// interval is split into equal substeps no longer than `dt_ref`.
pub fn ode_oracle(
    initial: [f64; 4],
    params: &Parameters,
    t_end: f64,
    cadence: f64,
    dt_ref: f64,
) -> Result<Vec<OracleSample>> {
    if !(dt_ref > 0.0 && dt_ref <= ODE_ORACLE_MAX_DT) {
        return Err(Error::InvalidParameter {
            name: "dt_ref",
            constraint: "must lie in (0, 1e-3]",
            value: dt_ref,
        });
    }
    if !(cadence > 0.0 && cadence.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "cadence",
            constraint: "cadence and t_end must be finite and > 0",
            value: cadence,
        });
    }
    let rhs = |y: [f64; 4]| reaction_point(y[0], y[1], y[2], y[3], params);
    let mut y = initial;
    let mut t = 0.0;
    let mut out = vec![OracleSample { t, y }];
    let mut k = 1u64;
    while t < t_end {
        let next = (k as f64 * cadence).min(t_end);
        let n = ((next - t) / dt_ref).ceil().max(1.0) as u64;
        let h = (next - t) / n as f64;
        for _ in 0..n {
            y = rk4_step(&rhs, y, h);
        }
        t = next;
        out.push(OracleSample { t, y });
        k += 1;
    }
    Ok(out)
}

fn rk4_step(f: &impl Fn([f64; 4]) -> [f64; 4], y: [f64; 4], h: f64) -> [f64; 4] {
    let axpy = |a: [f64; 4], s: f64, b: [f64; 4]| std::array::from_fn(|i| a[i] + s * b[i]);
    let k1 = f(y);
    let k2 = f(axpy(y, 0.5 * h, k1));
    let k3 = f(axpy(y, 0.5 * h, k2));
    let k4 = f(axpy(y, h, k3));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, beta: f64) -> Parameters {
        Parameters::new(mu, beta, 1.0, 1.0).unwrap()
    }

    #[test]
    fn equilibrium_is_constant() {
        let traj = ode_oracle([1.0, 0.0, 0.0, 0.0], &params(1.0, 0.5), 5.0, 1.0, 1e-4).unwrap();
        assert_eq!(traj.len(), 6);
        assert!(traj.iter().all(|s| s.y == [1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn logistic_closed_form() {
        let u0: f64 = 0.5;
        let traj = ode_oracle([u0, 0.0, 0.0, 0.0], &params(1.0, 0.5), 5.0, 1.0, 1e-4).unwrap();
        let last = traj.last().unwrap();
        assert_eq!(last.t, 5.0);
        let exact = u0 * 5f64.exp() / (1.0 - u0 + u0 * 5f64.exp());
        assert!((last.y[0] - exact).abs() < 1e-10, "{} vs {exact}", last.y[0]);
    }

    #[test]
    fn homogeneous_case_converges_to_equilibrium() {
        let p = params(1.0, 0.5);
        let fine = ode_oracle([0.5, 0.3, 0.2, 0.1], &p, 40.0, 1.0, 1e-4).unwrap();
        let coarse = ode_oracle([0.5, 0.3, 0.2, 0.1], &p, 40.0, 1.0, 1e-3).unwrap();
        let y = fine.last().unwrap().y;
        let residual = (y[0] - 1.0).abs().max(y[1]).max(y[2]).max(y[3]);
        assert!(residual < 1e-6, "residual {residual}");
        for (a, b) in fine.iter().zip(&coarse) {
            for i in 0..4 {
                assert!((a.y[i] - b.y[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_coarse_reference_step() {
        assert!(ode_oracle([1.0, 0.0, 0.0, 0.0], &params(1.0, 0.5), 1.0, 0.1, 2e-3).is_err());
    }

    #[test]
    fn sample_times_match_cadence_and_end() {
        let traj = ode_oracle([1.0, 0.0, 0.0, 0.0], &params(1.0, 0.5), 1.05, 0.25, 1e-3).unwrap();
        let times: Vec<f64> = traj.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.05]);
    }
}
