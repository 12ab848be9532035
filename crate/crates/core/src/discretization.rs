//! Spatial operators on the cell-centered grid.
//!
//! Everything is written in flux form: a cell's update is the difference of
//! the fluxes through its faces, so interior contributions telescope and the
//! domain integral of every operator vanishes up to rounding. Boundary faces
//! carry zero flux, which realizes the homogeneous Neumann conditions for
//! `w` and `z` and the combined no-flux condition `(∇u − u∇v)·ν = 0` for `u`.

use crate::error::Result;
use crate::model::{check_finite, Field, Grid};

/// Normal fluxes through every face of the grid, positive along +x / +y.
///
/// `fx[j * (nx + 1) + i]` is the flux through the x-face at `x = i·hx` in
/// row `j`; `fy[j * nx + i]` the flux through the y-face at `y = j·hy` in
/// column `i`. Faces with `i ∈ {0, nx}` (resp. `j ∈ {0, ny}`) lie on the
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    nx: usize,
    ny: usize,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl FaceFluxes {
    fn zeros(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        Self {
            nx,
            ny,
            fx: vec![0.0; (nx + 1) * ny],
            fy: vec![0.0; nx * (ny + 1)],
        }
    }

    /// Largest absolute flux over all boundary faces.
    pub fn max_boundary_flux(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut m = 0.0f64;
        for j in 0..ny {
            m = m.max(self.fx[j * (nx + 1)].abs());
            m = m.max(self.fx[j * (nx + 1) + nx].abs());
        }
        for i in 0..nx {
            m = m.max(self.fy[i].abs());
            m = m.max(self.fy[ny * nx + i].abs());
        }
        m
    }

    fn add(mut self, other: &FaceFluxes) -> Self {
        for (a, b) in self.fx.iter_mut().zip(&other.fx) {
            *a += b;
        }
        for (a, b) in self.fy.iter_mut().zip(&other.fy) {
            *a += b;
        }
        self
    }
}

/// Fickian flux `−D ∂f/∂n` on interior faces, zero on the boundary.
pub fn diffusive_fluxes(f: &Field, grid: &Grid, diffusivity: f64) -> Result<FaceFluxes> {
    f.ensure_matches(grid)?;
    check_finite("f", f.values())?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let vals = f.values();
    let mut out = FaceFluxes::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = j * nx + i;
            out.fx[j * (nx + 1) + i] = -diffusivity * (vals[k] - vals[k - 1]) / grid.hx();
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = j * nx + i;
            out.fy[j * nx + i] = -diffusivity * (vals[k] - vals[k - nx]) / grid.hy();
        }
    }
    Ok(out)
}

/// Donor-cell drift flux `u·∂v/∂n`: the transported density is taken from
/// the cell the drift leaves. Zero on the boundary.
pub fn haptotactic_fluxes(u: &Field, v: &Field, grid: &Grid) -> Result<FaceFluxes> {
    u.ensure_matches(grid)?;
    v.ensure_matches(grid)?;
    check_finite("u", u.values())?;
    check_finite("v", v.values())?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (uv, vv) = (u.values(), v.values());
    let mut out = FaceFluxes::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = j * nx + i;
            out.fx[j * (nx + 1) + i] = upwind_flux(uv[k - 1], uv[k], (vv[k] - vv[k - 1]) / grid.hx());
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = j * nx + i;
            out.fy[j * nx + i] = upwind_flux(uv[k - nx], uv[k], (vv[k] - vv[k - nx]) / grid.hy());
        }
    }
    Ok(out)
}

/// Total flux of `u`, `−∇u + u∇v`, whose normal component vanishes on
/// every boundary face.
pub fn u_total_fluxes(u: &Field, v: &Field, grid: &Grid) -> Result<FaceFluxes> {
    let drift = haptotactic_fluxes(u, v, grid)?;
    Ok(diffusive_fluxes(u, grid, 1.0)?.add(&drift))
}

/// Discrete divergence of a face-flux set.
pub fn divergence(fluxes: &FaceFluxes, grid: &Grid) -> Field {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let ddx = (fluxes.fx[j * (nx + 1) + i + 1] - fluxes.fx[j * (nx + 1) + i]) / grid.hx();
            let ddy = (fluxes.fy[(j + 1) * nx + i] - fluxes.fy[j * nx + i]) / grid.hy();
            out[j * nx + i] = ddx + ddy;
        }
    }
    Field::from_raw(grid, out)
}

#[inline(always)]
fn upwind_flux(u_left: f64, u_right: f64, grad: f64) -> f64 {
    if grad > 0.0 {
        u_left * grad
    } else {
        u_right * grad
    }
}

/// `D Δf` with the 5-point stencil and reflected ghost values.
pub fn laplacian_neumann(f: &Field, grid: &Grid, diffusivity: f64) -> Result<Field> {
    f.ensure_matches(grid)?;
    check_finite("f", f.values())?;
    let mut out = vec![0.0; grid.len()];
    laplacian_into(&mut out, f.values(), grid, diffusivity);
    Ok(Field::from_raw(grid, out))
}

/// `∇·(u∇v)` with donor-cell upwinding and zero boundary flux.
pub fn haptotaxis_divergence(u: &Field, v: &Field, grid: &Grid) -> Result<Field> {
    u.ensure_matches(grid)?;
    v.ensure_matches(grid)?;
    check_finite("u", u.values())?;
    check_finite("v", v.values())?;
    let mut out = vec![0.0; grid.len()];
    haptotaxis_into(&mut out, u.values(), v.values(), grid);
    Ok(Field::from_raw(grid, out))
}

/// Cellwise `|∇f|²` from centered differences over the two neighbouring
/// cells, with reflected ghosts. On a boundary cell the normal component is
/// therefore half the one-sided difference.
pub fn discrete_gradient_sq(f: &Field, grid: &Grid) -> Result<Field> {
    f.ensure_matches(grid)?;
    check_finite("f", f.values())?;
    let mut out = vec![0.0; grid.len()];
    gradient_sq_into(&mut out, f.values(), grid);
    Ok(Field::from_raw(grid, out))
}

pub(crate) fn laplacian_into(out: &mut [f64], f: &[f64], grid: &Grid, diffusivity: f64) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = diffusivity / (grid.hx() * grid.hx());
    let cy = diffusivity / (grid.hy() * grid.hy());
    let stencil = |c: f64, xm: f64, xp: f64, ym: f64, yp: f64| {
        cx * ((xp - c) - (c - xm)) + cy * ((yp - c) - (c - ym))
    };
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        // A reflected neighbor row equals the row itself.
        let below = if j > 0 { &f[(j - 1) * nx..j * nx] } else { row };
        let above = if j + 1 < ny { &f[(j + 1) * nx..(j + 2) * nx] } else { row };
        let out = &mut out[j * nx..(j + 1) * nx];
        out[0] = stencil(row[0], row[0], row[1], below[0], above[0]);
        for i in 1..nx - 1 {
            out[i] = stencil(row[i], row[i - 1], row[i + 1], below[i], above[i]);
        }
        let l = nx - 1;
        out[l] = stencil(row[l], row[l - 1], row[l], below[l], above[l]);
    }
}

pub(crate) fn haptotaxis_into(out: &mut [f64], u: &[f64], v: &[f64], grid: &Grid) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (rhx, rhy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    // x-direction: sweep each row carrying the flux of the left face.
    for j in 0..ny {
        let row = j * nx;
        let mut left = 0.0;
        for i in 0..nx {
            let k = row + i;
            let right = if i + 1 < nx {
                upwind_flux(u[k], u[k + 1], (v[k + 1] - v[k]) * rhx)
            } else {
                0.0
            };
            out[k] = (right - left) * rhx;
            left = right;
        }
    }
    // y-direction: `below` holds the fluxes of the bottom faces of row j.
    let mut below = vec![0.0; nx];
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let above = if j + 1 < ny {
                upwind_flux(u[k], u[k + nx], (v[k + nx] - v[k]) * rhy)
            } else {
                0.0
            };
            out[k] += (above - below[i]) * rhy;
            below[i] = above;
        }
    }
}

pub(crate) fn gradient_sq_into(out: &mut [f64], f: &[f64], grid: &Grid) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (sx, sy) = (0.5 / grid.hx(), 0.5 / grid.hy());
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = f[k];
            let xm = if i > 0 { f[k - 1] } else { c };
            let xp = if i + 1 < nx { f[k + 1] } else { c };
            let ym = if j > 0 { f[k - nx] } else { c };
            let yp = if j + 1 < ny { f[k + nx] } else { c };
            let gx = (xp - xm) * sx;
            let gy = (yp - ym) * sy;
            out[k] = gx * gx + gy * gy;
        }
    }
}

/// Per-unit-density outflow rate of the donor-cell drift for each cell:
/// the sum of `|∂v/∂n| / h` over the faces through which `u` leaves.
pub(crate) fn drift_outflow_rates_into(out: &mut [f64], v: &[f64], grid: &Grid) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (rhx, rhy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    out.fill(0.0);
    let mut max_grad = 0.0f64;
    for j in 0..ny {
        let row = &v[j * nx..(j + 1) * nx];
        let o = &mut out[j * nx..(j + 1) * nx];
        for i in 0..nx - 1 {
            let g = (row[i + 1] - row[i]) * rhx;
            max_grad = max_grad.max(g.abs());
            o[i] += g.max(0.0) * rhx;
            o[i + 1] += (-g).max(0.0) * rhx;
        }
    }
    for j in 0..ny - 1 {
        let (lo, hi) = out.split_at_mut((j + 1) * nx);
        let lo = &mut lo[j * nx..];
        let (row, next) = (&v[j * nx..(j + 1) * nx], &v[(j + 1) * nx..(j + 2) * nx]);
        for i in 0..nx {
            let g = (next[i] - row[i]) * rhy;
            max_grad = max_grad.max(g.abs());
            lo[i] += g.max(0.0) * rhy;
            hi[i] += (-g).max(0.0) * rhy;
        }
    }
    max_grad
}
