//! Continuous model data: parameters, the rectangular grid, cell-centered
//! fields, the four-component state, and the pointwise parts of the system
//!
//! ```text
//! u_t = Δu − ∇·(u∇v) − uz + μu(1−u)
//! v_t = −(u+w)v
//! w_t = D_w Δw − w + uz
//! z_t = D_z Δz − z − uz + βw
//! ```

use crate::error::{Error, Result};

/// Model constants μ, β, D_w, D_z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    mu: f64,
    beta: f64,
    d_w: f64,
    d_z: f64,
}

impl Parameters {
    pub fn new(mu: f64, beta: f64, d_w: f64, d_z: f64) -> Result<Self> {
        check_param("mu", mu, mu >= 0.0, "must be finite and >= 0")?;
        check_param("beta", beta, beta >= 0.0, "must be finite and >= 0")?;
        check_param("d_w", d_w, d_w > 0.0, "must be finite and > 0")?;
        check_param("d_z", d_z, d_z > 0.0, "must be finite and > 0")?;
        Ok(Self { mu, beta, d_w, d_z })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn d_w(&self) -> f64 {
        self.d_w
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    /// Boundedness holds whenever the logistic term is active.
    pub fn admits_boundedness(&self) -> bool {
        self.mu > 0.0
    }

    /// Exponential decay of w, z and stabilization need μ > 0 and β < 1.
    pub fn admits_stabilization(&self) -> bool {
        self.mu > 0.0 && self.beta < 1.0
    }
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: 0.5,
            d_w: 1.0,
            d_z: 1.0,
        }
    }
}

fn check_param(name: &'static str, value: f64, ok: bool, constraint: &'static str) -> Result<()> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            constraint,
            value,
        })
    }
}

/// Cell-centered discretization of the rectangle `[0, lx] × [0, ly]`.
///
/// Cell `(i, j)` has center `((i + ½)hx, (j + ½)hy)` and lives at flat index
/// `j * nx + i` (row-major, x fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    cell_area: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            cell_area: (lx * ly) / (nx * ny) as f64,
        })
    }

    /// `n × n` cells on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }
}

/// Cell-centered scalar values on a grid. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::named(grid, values, "field")
    }

    /// Like [`Field::new`], but names the field in error messages.
    pub fn named(grid: &Grid, values: Vec<f64>, name: &'static str) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        check_finite(name, &values)?;
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        })
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        assert!(value.is_finite(), "constant field value must be finite");
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    /// Internal constructor for kernel outputs already known to match `grid`.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.nx == grid.nx && self.ny == grid.ny
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Midpoint-rule integral `Σ f · cell_area`.
    pub fn integral(&self, grid: &Grid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_area
    }

    pub(crate) fn ensure_matches(&self, grid: &Grid) -> Result<()> {
        if self.matches(grid) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: self.values.len(),
            })
        }
    }
}

pub(crate) fn check_finite(name: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite {
            field: name,
            index,
            value: values[index],
        }),
    }
}

/// Densities of uninfected cells `u`, tissue `v`, infected cells `w` and
/// virus `z` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub z: Field,
}

impl State {
    pub fn new(t: f64, u: Field, v: Field, w: Field, z: Field) -> Self {
        Self { t, u, v, w, z }
    }

    /// Spatially uniform state at `t = 0`.
    pub fn homogeneous(grid: &Grid, u: f64, v: f64, w: f64, z: f64) -> Self {
        Self {
            t: 0.0,
            u: Field::constant(grid, u),
            v: Field::constant(grid, v),
            w: Field::constant(grid, w),
            z: Field::constant(grid, z),
        }
    }

    /// The constant equilibrium `(1, 0, 0, 0)`.
    pub fn equilibrium(grid: &Grid) -> Self {
        Self::homogeneous(grid, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn fields(&self) -> [(&'static str, &Field); 4] {
        [("u", &self.u), ("v", &self.v), ("w", &self.w), ("z", &self.z)]
    }

    /// Checks grid dimensions, finiteness, `u > 0` and `v, w, z >= 0`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, f) in self.fields() {
            f.ensure_matches(grid)?;
            check_finite(name, f.values())?;
        }
        check_sign("u", self.u.values(), "u > 0", |x| x > 0.0)?;
        check_sign("v", self.v.values(), "v >= 0", |x| x >= 0.0)?;
        check_sign("w", self.w.values(), "w >= 0", |x| x >= 0.0)?;
        check_sign("z", self.z.values(), "z >= 0", |x| x >= 0.0)?;
        Ok(())
    }
}

fn check_sign(
    field: &'static str,
    values: &[f64],
    constraint: &'static str,
    ok: impl Fn(f64) -> bool,
) -> Result<()> {
    match values.iter().position(|&x| !ok(x)) {
        None => Ok(()),
        Some(index) => Err(Error::Positivity {
            field,
            constraint,
            index,
            value: values[index],
        }),
    }
}

/// Zero-order right-hand sides of the four equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub du: Field,
    pub dv: Field,
    pub dw: Field,
    pub dz: Field,
}

/// Pointwise reaction values `(du, dv, dw, dz)` for one cell.
#[inline]
pub fn reaction_point(u: f64, v: f64, w: f64, z: f64, params: &Parameters) -> [f64; 4] {
    let uz = u * z;
    [
        -uz + params.mu * u * (1.0 - u),
        -(u + w) * v,
        -w + uz,
        -z - uz + params.beta * w,
    ]
}

/// Evaluates the reaction terms cellwise, with no spatial coupling.
pub fn reaction_rhs(state: &State, params: &Parameters) -> Result<Reaction> {
    let n = state.u.values().len();
    for (name, f) in state.fields() {
        if f.dims() != state.u.dims() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.values().len(),
            });
        }
        check_finite(name, f.values())?;
    }
    let (nx, ny) = state.u.dims();
    let mut out = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for k in 0..n {
        let r = reaction_point(
            state.u.values()[k],
            state.v.values()[k],
            state.w.values()[k],
            state.z.values()[k],
            params,
        );
        for (o, x) in out.iter_mut().zip(r) {
            o.push(x);
        }
    }
    let [du, dv, dw, dz] = out;
    let wrap = |values: Vec<f64>, name| -> Result<Field> {
        check_finite(name, &values)?;
        Ok(Field { nx, ny, values })
    };
    Ok(Reaction {
        du: wrap(du, "du")?,
        dv: wrap(dv, "dv")?,
        dw: wrap(dw, "dw")?,
        dz: wrap(dz, "dz")?,
    })
}

/// The substitution `a = u·e^{−v}`, which turns the taxis equation into
/// `a_t = e^{−v} ∇·(e^v ∇a) + …`.
pub fn transform_a(state: &State) -> Result<Field> {
    check_finite("u", state.u.values())?;
    check_finite("v", state.v.values())?;
    check_sign("u", state.u.values(), "u > 0", |x| x > 0.0)?;
    let (nx, ny) = state.u.dims();
    let values = state
        .u
        .values()
        .iter()
        .zip(state.v.values())
        .map(|(&u, &v)| u * (-v).exp())
        .collect();
    Ok(Field { nx, ny, values })
}

/// Inverse of [`transform_a`]: `u = a·e^{v}`.
pub fn untransform_a(a: &Field, v: &Field) -> Field {
    let (nx, ny) = a.dims();
    let values = a
        .values()
        .iter()
        .zip(v.values())
        .map(|(&a, &v)| a * v.exp())
        .collect();
    Field { nx, ny, values }
}

/// `max(‖u−1‖_∞, ‖v‖_∞, ‖w‖_∞, ‖z‖_∞)`: L∞ distance to `(1, 0, 0, 0)`.
pub fn equilibrium_residual(state: &State) -> f64 {
    let du = state.u.values().iter().fold(0.0f64, |m, &x| m.max((x - 1.0).abs()));
    du.max(state.v.max_abs())
        .max(state.w.max_abs())
        .max(state.z.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::unit_square(4).unwrap()
    }

    fn params(mu: f64, beta: f64) -> Parameters {
        Parameters::new(mu, beta, 1.0, 1.0).unwrap()
    }

    fn at(u: f64, v: f64, w: f64, z: f64) -> State {
        State::homogeneous(&grid(), u, v, w, z)
    }

    #[test]
    fn parameters_reject_bad_values() {
        let err = Parameters::new(1.0, -1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
        assert!(Parameters::new(1.0, 0.5, 0.0, 1.0).is_err());
        assert!(Parameters::new(1.0, 0.5, 1.0, -2.0).is_err());
        assert!(Parameters::new(f64::NAN, 0.5, 1.0, 1.0).is_err());
        // μ = 0 and β ≥ 1 are admitted; only the suites gate on them.
        let p = Parameters::new(0.0, 3.0, 1.0, 1.0).unwrap();
        assert!(!p.admits_boundedness());
        assert!(!p.admits_stabilization());
    }

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(Grid::new(1, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 0.0, 1.0).is_err());
        let g = Grid::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.25);
        assert_eq!(g.index(3, 2), 19);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = grid();
        let mut v = vec![1.0; 16];
        v[5] = f64::NAN;
        match Field::named(&g, v, "w").unwrap_err() {
            Error::NonFinite { field, index, .. } => {
                assert_eq!(field, "w");
                assert_eq!(index, 5);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            Field::new(&g, vec![0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reaction_vanishes_at_equilibrium() {
        let r = reaction_rhs(&at(1.0, 0.0, 0.0, 0.0), &params(2.5, 0.7)).unwrap();
        for f in [&r.du, &r.dv, &r.dw, &r.dz] {
            assert!(f.values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn reaction_direct_substitution() {
        let r = reaction_rhs(&at(1.0, 1.0, 0.0, 0.0), &params(1.0, 0.5)).unwrap();
        assert_eq!(r.du.get(0, 0), 0.0);
        assert_eq!(r.dv.get(0, 0), -1.0);
        assert_eq!(r.dw.get(0, 0), 0.0);
        assert_eq!(r.dz.get(0, 0), 0.0);

        let r = reaction_rhs(&at(2.0, 0.0, 1.0, 1.0), &params(1.0, 0.5)).unwrap();
        assert_eq!(r.du.get(1, 2), -4.0);
        assert_eq!(r.dv.get(1, 2), 0.0);
        assert_eq!(r.dw.get(1, 2), 1.0);
        assert_eq!(r.dz.get(1, 2), -2.5);
    }

    #[test]
    fn reaction_names_non_finite_cell() {
        let g = grid();
        let mut s = State::equilibrium(&g);
        s.z.values_mut()[7] = f64::INFINITY;
        match reaction_rhs(&s, &params(1.0, 0.5)).unwrap_err() {
            Error::NonFinite { field, index, .. } => assert_eq!((field, index), ("z", 7)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn transform_examples() {
        let a = transform_a(&at(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        let a = transform_a(&at(2.0, std::f64::consts::LN_2, 0.0, 0.0)).unwrap();
        assert_relative_eq!(a.get(0, 0), 1.0, max_relative = 1e-15);
        let a = transform_a(&at(3.0, 1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(a.get(0, 0), 1.103638, max_relative = 1e-6);
    }

    #[test]
    fn transform_rejects_nonpositive_u() {
        let mut s = at(1.0, 0.0, 0.0, 0.0);
        s.u.values_mut()[3] = 0.0;
        assert!(matches!(
            transform_a(&s),
            Err(Error::Positivity { field: "u", index: 3, .. })
        ));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(equilibrium_residual(&at(1.0, 0.0, 0.0, 0.0)), 0.0);
        assert_relative_eq!(
            equilibrium_residual(&at(1.1, 0.0, 0.05, 0.0)),
            0.1,
            max_relative = 1e-12
        );
        assert_eq!(equilibrium_residual(&at(0.5, 0.2, 0.1, 0.3)), 0.5);
    }

    #[test]
    fn state_validation() {
        let g = grid();
        assert!(State::equilibrium(&g).validate(&g).is_ok());
        let mut s = State::equilibrium(&g);
        s.w.values_mut()[0] = -1e-300;
        assert!(matches!(
            s.validate(&g),
            Err(Error::Positivity { field: "w", .. })
        ));
        let other = Grid::unit_square(5).unwrap();
        assert!(State::equilibrium(&g).validate(&other).is_err());
    }

    proptest! {
        #[test]
        fn reaction_vanishes_on_tissue_only_states(v in 0.0f64..10.0, mu in 0.0f64..5.0, beta in 0.0f64..5.0) {
            let r = reaction_point(0.0, v, 0.0, 0.0, &params(mu, beta));
            prop_assert_eq!(r, [0.0, 0.0, 0.0, 0.0]);
        }

        #[test]
        fn wz_reaction_sum_identity(
            seed in any::<u64>(),
            beta in 0.0f64..3.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::unit_square(6).unwrap();
            let mut gen = |lo: f64, hi: f64| {
                Field::new(&g, (0..g.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
            };
            let s = State::new(0.0, gen(0.1, 3.0), gen(0.0, 2.0), gen(0.0, 2.0), gen(0.0, 2.0));
            let r = reaction_rhs(&s, &params(1.0, beta)).unwrap();
            let lhs: f64 = r.dw.integral(&g) + r.dz.integral(&g);
            let rhs = -(1.0 - beta) * s.w.integral(&g) - s.z.integral(&g);
            let scale = s.w.integral(&g) + s.z.integral(&g) + (s.u.values().iter().zip(s.z.values()).map(|(a, b)| a * b).sum::<f64>() * g.cell_area());
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale, "lhs {lhs} rhs {rhs}");
        }

        #[test]
        fn transform_round_trip(u in 1e-3f64..1e3, v in 0.0f64..20.0) {
            let s = at(u, v, 0.0, 0.0);
            let a = transform_a(&s).unwrap();
            prop_assert!(a.min() > 0.0);
            let back = untransform_a(&a, &s.v);
            prop_assert!(((back.get(0, 0) - u) / u).abs() <= 1e-14);
        }

        #[test]
        fn dyadic_grid_area_is_exact(kx in 1u32..9, ky in 1u32..9, lx in 0.1f64..10.0, ly in 0.1f64..10.0) {
            let g = Grid::new(1 << kx, 1 << ky, lx, ly).unwrap();
            prop_assert_eq!((g.nx() * g.ny()) as f64 * g.cell_area(), lx * ly);
        }
    }
}
