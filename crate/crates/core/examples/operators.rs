//! The discrete Neumann Laplacian on the eigenfunction cos(πx)cos(πy),
//! and the zero domain sum of every flux-form operator.

use std::f64::consts::PI;

use haptosim::discretization::{discrete_gradient_sq, haptotaxis_divergence, laplacian_neumann};
use haptosim::model::{Field, Grid};

fn main() -> haptosim::Result<()> {
    let mut prev: Option<f64> = None;
    for n in [16, 32, 64, 128] {
        let grid = Grid::unit_square(n)?;
        let f = Field::from_fn(&grid, |x, y| (PI * x).cos() * (PI * y).cos())?;
        let lap = laplacian_neumann(&f, &grid, 1.0)?;
        let err = lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(l, f)| (l + 2.0 * PI * PI * f).abs())
            .fold(0.0, f64::max);
        let order = prev.map_or(String::new(), |p| format!("  order {:.3}", (p / err).log2()));
        println!("n = {n:4}  max error = {err:.3e}{order}");
        prev = Some(err);
    }

    let grid = Grid::unit_square(32)?;
    let u = Field::from_fn(&grid, |x, y| 1.0 + 0.5 * (3.0 * x).sin() * y)?;
    let v = Field::from_fn(&grid, |x, y| (-(x - 0.4).powi(2) - (y - 0.6).powi(2)).exp())?;
    let taxis = haptotaxis_divergence(&u, &v, &grid)?;
    let grad = discrete_gradient_sq(&v, &grid)?;
    println!("∫∇·(u∇v) = {:.3e}", taxis.integral(&grid));
    println!("∫|∇v|²   = {:.6}", grad.integral(&grid));
    Ok(())
}
