use rayon::prelude::*;

use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::model::{Field, Grid};
use crate::timestepper::{run, stable_dt};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    /// Cells per direction.
    pub n: usize,
    pub h: f64,
    /// `‖u_n − R u_finest‖_{L²}`; `None` on the reference row.
    pub error: Option<f64>,
    /// Order estimated from this row's error and the next coarser one.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub dt: f64,
    pub horizon: f64,
}

impl ConvergenceReport {
    /// Order from the two finest non-reference grids, if errors are above
    /// the rounding floor.
    pub fn observed_order(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.order)
    }
}

/// Horizon of a refinement study unless one is given.
pub const DEFAULT_CONVERGENCE_HORIZON: f64 = 1.0;

/// Errors below this (relative to the solution size) count as exact.
const ERROR_FLOOR: f64 = 1e-12;

/// Self-convergence study: runs `base` on `n × n` grids for each `n` up to
/// `horizon`, all at the finest grid's stable step, and measures the L²
/// distance of each `u` to the finest solution averaged onto its grid.
///
/// With errors `e_k ≈ C (h_k^p − h_f^p)` against the finest spacing `h_f`,
/// each adjacent pair of coarse grids determines `p`.
pub fn converge(base: &ScenarioConfig, grids: &[usize], horizon: f64) -> Result<ConvergenceReport> {
    let mut ns = grids.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::Convergence(format!(
            "need at least 3 distinct resolutions, got {grids:?}"
        )));
    }
    let finest = *ns.last().expect("non-empty");
    if let Some(bad) = ns.iter().find(|&&n| finest % n != 0) {
        return Err(Error::Convergence(format!(
            "resolution {bad} does not divide the finest resolution {finest}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Convergence(format!("horizon must be positive, got {horizon}")));
    }

    let lx = base.grid.lx();
    let ly = base.grid.ly();
    let fine_grid = Grid::new(finest, finest, lx, ly)?;
    let fine_initial = base.initial.build(&fine_grid, base.seed)?;
    let dt = stable_dt(&fine_initial, &base.params, &fine_grid, &base.controls).dt;

    let finals: Vec<(Grid, Field)> = ns
        .par_iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.grid = Grid::new(n, n, lx, ly)?;
            cfg.controls.t_end = horizon;
            cfg.controls.fixed_dt = Some(dt);
            cfg.controls.stop_at_equilibrium = false;
            cfg.outputs.cadence = horizon;
            cfg.outputs.snapshot_times.clear();
            let out = run(&cfg).map_err(|f| f.error)?;
            Ok((cfg.grid, out.final_state.u))
        })
        .collect::<Result<_>>()?;

    let (fine_grid, fine_u) = finals.last().expect("non-empty");
    let scale = fine_u.max_abs().max(1e-300);
    let mut rows: Vec<ConvergenceRow> = finals
        .iter()
        .map(|(g, u)| {
            let error = if g.nx() == finest {
                None
            } else {
                Some(l2_difference(u, &restrict(fine_u, fine_grid, g), g))
            };
            ConvergenceRow { n: g.nx(), h: g.hx(), error, order: None }
        })
        .collect();

    let h_f = fine_grid.hx();
    for k in 1..rows.len() - 1 {
        let (e0, e1) = (rows[k - 1].error.unwrap(), rows[k].error.unwrap());
        if e0 > ERROR_FLOOR * scale && e1 > ERROR_FLOOR * scale {
            rows[k].order = Some(solve_order(rows[k - 1].h / h_f, rows[k].h / h_f, e0 / e1));
        }
    }
    Ok(ConvergenceReport { rows, dt, horizon })
}

/// Cell averages of `fine` over the cells of the coarser `coarse` grid.
pub(crate) fn restrict(fine: &Field, fine_grid: &Grid, coarse: &Grid) -> Field {
    let rx = fine_grid.nx() / coarse.nx();
    let ry = fine_grid.ny() / coarse.ny();
    let norm = 1.0 / (rx * ry) as f64;
    let mut out = vec![0.0; coarse.len()];
    for j in 0..coarse.ny() {
        for i in 0..coarse.nx() {
            let mut s = 0.0;
            for jj in 0..ry {
                for ii in 0..rx {
                    s += fine.get(i * rx + ii, j * ry + jj);
                }
            }
            out[coarse.index(i, j)] = s * norm;
        }
    }
    Field::from_raw(coarse, out)
}

fn l2_difference(a: &Field, b: &Field, grid: &Grid) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    (s * grid.cell_area()).sqrt()
}

/// Solves `(ρ₀^p − 1)/(ρ₁^p − 1) = ratio` for `p` by bisection, where
/// `ρ = h/h_f > 1`. The left side increases with `p`.
fn solve_order(rho0: f64, rho1: f64, ratio: f64) -> f64 {
    let g = |p: f64| (rho0.powf(p) - 1.0) / (rho1.powf(p) - 1.0);
    let (mut lo, mut hi) = (1e-3, 20.0);
    if ratio <= g(lo) {
        return 0.0;
    }
    if ratio >= g(hi) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::InitialRecipe;

    #[test]
    fn solve_order_recovers_model_exponent() {
        for p in [0.8, 1.0, 2.0, 3.5] {
            let (h0, h1, hf): (f64, f64, f64) = (1.0 / 16.0, 1.0 / 32.0, 1.0 / 128.0);
            let e0: f64 = h0.powf(p) - hf.powf(p);
            let e1: f64 = h1.powf(p) - hf.powf(p);
            let got = solve_order(h0 / hf, h1 / hf, e0 / e1);
            assert!((got - p).abs() < 1e-9, "{got} vs {p}");
        }
    }

    #[test]
    fn restriction_preserves_mean() {
        let fg = Grid::unit_square(8).unwrap();
        let cg = Grid::unit_square(2).unwrap();
        let f = Field::from_fn(&fg, |x, y| x * x + y).unwrap();
        let r = restrict(&f, &fg, &cg);
        assert!((r.integral(&cg) - f.integral(&fg)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_resolution_lists() {
        let base = ScenarioConfig::paper_default();
        assert!(converge(&base, &[8, 16], 0.1).is_err());
        assert!(converge(&base, &[8, 12, 32], 0.1).is_err());
    }

    #[test]
    fn homogeneous_data_has_no_order() {
        let base = ScenarioConfig::homogeneous_oracle(4, 1.0);
        let rep = converge(&base, &[4, 8, 16], 0.1).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows[0].error.unwrap() < 1e-13);
        assert_eq!(rep.observed_order(), None);
    }

    #[test]
    fn reaction_diffusion_is_second_order() {
        let mut base = ScenarioConfig::paper_default();
        let mut bumps = InitialRecipe::default_bumps();
        bumps[1].amplitude = 0.0;
        for b in &mut bumps {
            b.width = 0.15;
        }
        base.initial = InitialRecipe::GaussianBumps(bumps);
        let rep = converge(&base, &[16, 32, 64], 0.1).unwrap();
        let order = rep.observed_order().unwrap();
        assert!((order - 2.0).abs() <= 0.2, "order {order}: {rep:?}");
    }
}
