//! Field containers, data samplers, admissible-set bookkeeping and discrete
//! norms.

use crate::grid::{Axis, StaggeredGrid};
use crate::{Error, Result};

/// Scalar data given as a closed-form function of `(t, x, y)`.
pub trait Sampler: Send + Sync {
    fn eval(&self, t: f64, x: f64, y: f64) -> f64;
}

impl<F> Sampler for F
where
    F: Fn(f64, f64, f64) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        self(t, x, y)
    }
}

/// Vector data given as a closed-form function of `(t, x, y)`.
pub trait VectorSampler: Send + Sync {
    fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 2];
}

impl<F> VectorSampler for F
where
    F: Fn(f64, f64, f64) -> [f64; 2] + Send + Sync,
{
    fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        self(t, x, y)
    }
}

/// Two scalar samplers seen as one vector sampler.
pub struct ComponentSampler<A, B>(pub A, pub B);

impl<A: Sampler, B: Sampler> VectorSampler for ComponentSampler<A, B> {
    fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        [self.0.eval(t, x, y), self.1.eval(t, x, y)]
    }
}

/// Cell-centered scalar field, row-major (`j` outer, `i` inner).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &StaggeredGrid, value: f64) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            data: vec![value; grid.n_cells()],
        }
    }

    /// Sample `f(x, y)` at every cell center.
    pub fn from_fn(grid: &StaggeredGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.cell_center(i, j);
                out.set(i, j, f(x, y));
            }
        }
        out
    }

    pub fn from_sampler(grid: &StaggeredGrid, s: &(impl Sampler + ?Sized), t: f64) -> Self {
        Self::from_fn(grid, |x, y| s.eval(t, x, y))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn assert_grid(&self, grid: &StaggeredGrid) {
        assert_eq!(
            (self.nx, self.ny),
            (grid.nx(), grid.ny()),
            "cell field does not match grid"
        );
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[j * self.nx + i] = value;
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, f64> {
        self.data.iter_mut()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Velocity components on faces: `u` on x-faces (`(nx+1)·ny`), `v` on
/// y-faces (`nx·(ny+1)`). Boundary faces carry the Dirichlet values.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    nx: usize,
    ny: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            u: vec![0.0; grid.n_x_faces()],
            v: vec![0.0; grid.n_y_faces()],
        }
    }

    /// Sample component functions at the face centers.
    pub fn from_fn(
        grid: &StaggeredGrid,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                let [x, y] = grid.face_center(crate::grid::FaceId::x(i, j));
                out.set_u(i, j, fu(x, y));
            }
        }
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.face_center(crate::grid::FaceId::y(i, j));
                out.set_v(i, j, fv(x, y));
            }
        }
        out
    }

    pub fn from_vector_sampler(
        grid: &StaggeredGrid,
        s: &(impl VectorSampler + ?Sized),
        t: f64,
    ) -> Self {
        Self::from_fn(grid, |x, y| s.eval(t, x, y)[0], |x, y| s.eval(t, x, y)[1])
    }

    pub fn assert_grid(&self, grid: &StaggeredGrid) {
        assert_eq!(
            (self.nx, self.ny),
            (grid.nx(), grid.ny()),
            "face field does not match grid"
        );
    }

    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= self.nx && j < self.ny);
        self.u[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j <= self.ny);
        self.v[j * self.nx + i]
    }

    #[inline]
    pub fn set_u(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i <= self.nx && j < self.ny);
        self.u[j * (self.nx + 1) + i] = value;
    }

    #[inline]
    pub fn set_v(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.nx && j <= self.ny);
        self.v[j * self.nx + i] = value;
    }

    pub fn face_value(&self, face: crate::grid::FaceId) -> f64 {
        match face.axis {
            Axis::X => self.u(face.i, face.j),
            Axis::Y => self.v(face.i, face.j),
        }
    }

    pub fn u_data(&self) -> &[f64] {
        &self.u
    }

    pub fn v_data(&self) -> &[f64] {
        &self.v
    }

    pub fn u_data_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v_data_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Componentwise `self + scale · other`.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        assert_eq!((self.nx, self.ny), (other.nx, other.ny));
        Self {
            nx: self.nx,
            ny: self.ny,
            u: self
                .u
                .iter()
                .zip(&other.u)
                .map(|(a, b)| a + scale * b)
                .collect(),
            v: self
                .v
                .iter()
                .zip(&other.v)
                .map(|(a, b)| a + scale * b)
                .collect(),
        }
    }
}

/// Bounds of the admissible set: transported fields must stay inside
/// `[rho_lo, rho_hi] × [nu_lo, nu_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleBounds {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
}

impl AdmissibleBounds {
    pub fn new(rho_lo: f64, rho_hi: f64, nu_lo: f64, nu_hi: f64) -> Result<Self> {
        if !(rho_lo > 0.0 && rho_lo <= rho_hi) {
            return Err(Error::Config {
                field: "rho bounds".into(),
                message: format!("need 0 < lo <= hi, got [{rho_lo}, {rho_hi}]"),
            });
        }
        if !(nu_lo > 0.0 && nu_lo <= nu_hi) {
            return Err(Error::Config {
                field: "nu bounds".into(),
                message: format!("need 0 < lo <= hi, got [{nu_lo}, {nu_hi}]"),
            });
        }
        Ok(Self {
            rho_lo,
            rho_hi,
            nu_lo,
            nu_hi,
        })
    }
}

/// Cell-centered density and kinematic viscosity at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub rho: CellField,
    pub nu: CellField,
    pub bounds: AdmissibleBounds,
}

impl MixtureState {
    /// Build a state, checking membership in the admissible set up to `slack`.
    pub fn new(rho: CellField, nu: CellField, bounds: AdmissibleBounds, slack: f64) -> Result<Self> {
        let state = Self::new_unchecked(rho, nu, bounds);
        state.check_admissible(slack)?;
        Ok(state)
    }

    pub fn new_unchecked(rho: CellField, nu: CellField, bounds: AdmissibleBounds) -> Self {
        assert_eq!((rho.nx, rho.ny), (nu.nx, nu.ny), "field shape mismatch");
        Self { rho, nu, bounds }
    }

    pub fn check_admissible(&self, slack: f64) -> Result<()> {
        let b = &self.bounds;
        for (name, field, lo, hi) in [
            ("rho", &self.rho, b.rho_lo, b.rho_hi),
            ("nu", &self.nu, b.nu_lo, b.nu_hi),
        ] {
            let (min, max) = (field.min(), field.max());
            if min < lo - slack || max > hi + slack {
                return Err(Error::OutOfBounds(format!(
                    "{name} range [{min}, {max}] exceeds [{lo}, {hi}] beyond slack {slack:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Dynamic viscosity of the mixture: `μ = ρ ν` pointwise.
pub fn mixture_viscosity(state: &MixtureState) -> CellField {
    let mut mu = state.rho.clone();
    for (m, n) in mu.iter_mut().zip(state.nu.iter()) {
        *m *= n;
    }
    mu
}

/// Face-normal velocity plus cell pressure (pressure normalized to zero mean
/// by the solver that produced it).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPressure {
    pub vel: FaceField,
    pub pressure: CellField,
}

/// Boundary and body-force data of one problem.
pub struct BoundaryData {
    /// Dirichlet velocity on the whole boundary.
    pub b: Box<dyn VectorSampler>,
    /// Body force per unit mass on cells.
    pub g: Box<dyn VectorSampler>,
    /// Inflow density, used where the boundary velocity points inward.
    pub rho_b: Box<dyn Sampler>,
    /// Inflow kinematic viscosity.
    pub nu_b: Box<dyn Sampler>,
}

impl BoundaryData {
    pub fn new(
        b: impl VectorSampler + 'static,
        g: impl VectorSampler + 'static,
        rho_b: impl Sampler + 'static,
        nu_b: impl Sampler + 'static,
    ) -> Self {
        Self {
            b: Box::new(b),
            g: Box::new(g),
            rho_b: Box::new(rho_b),
            nu_b: Box::new(nu_b),
        }
    }

    /// Rest data: `b = g = 0`, constant inflow values.
    pub fn rest(rho_b: f64, nu_b: f64) -> Self {
        Self::new(
            |_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            |_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            move |_t: f64, _x: f64, _y: f64| rho_b,
            move |_t: f64, _x: f64, _y: f64| nu_b,
        )
    }
}

/// Net boundary flux `Σ (b·n) · length` at time `t`; zero (within tolerance)
/// for admissible boundary velocities.
pub fn net_boundary_flux(
    grid: &StaggeredGrid,
    b: &(impl VectorSampler + ?Sized),
    t: f64,
) -> f64 {
    grid.boundary_faces()
        .iter()
        .map(|bf| {
            let [x, y] = grid.face_center(bf.face);
            let bv = b.eval(t, x, y);
            (bv[0] * bf.normal[0] + bv[1] * bf.normal[1]) * bf.length
        })
        .sum()
}

/// Drag coefficient model `h(t, x, r) = h0(t, x) · r^m` with `h0 ≥ 0`,
/// `m ≥ 0`; `r` is the local dynamic viscosity. `m = 1` with `h0 = 1/k`
/// recovers the permeability form.
pub struct DragModel {
    pub h0: Box<dyn Sampler>,
    pub m: f64,
}

impl DragModel {
    pub fn new(h0: impl Sampler + 'static, m: f64) -> Result<Self> {
        if !(m >= 0.0) {
            return Err(Error::Config {
                field: "m".into(),
                message: format!("drag exponent must be nonnegative, got {m}"),
            });
        }
        Ok(Self {
            h0: Box::new(h0),
            m,
        })
    }

    pub fn constant(value: f64) -> Self {
        assert!(value >= 0.0, "drag coefficient must be nonnegative");
        Self {
            h0: Box::new(move |_t: f64, _x: f64, _y: f64| value),
            m: 0.0,
        }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        self.h0.eval(t, x, y) * r.powf(self.m)
    }

    /// Sample the drag coefficient at cell centers for the viscosity field `r`.
    pub fn sample_cells(&self, grid: &StaggeredGrid, t: f64, r: &CellField) -> CellField {
        r.assert_grid(grid);
        let mut out = CellField::zeros(grid);
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.cell_center(i, j);
                out.set(i, j, self.eval(t, x, y, r.get(i, j)));
            }
        }
        out
    }
}

/// Arithmetic average of a cell field onto faces; boundary faces copy the
/// single adjacent cell.
pub fn cell_to_face_average(grid: &StaggeredGrid, c: &CellField) -> FaceField {
    c.assert_grid(grid);
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = FaceField::zeros(grid);
    for j in 0..ny {
        out.set_u(0, j, c.get(0, j));
        out.set_u(nx, j, c.get(nx - 1, j));
        for i in 1..nx {
            out.set_u(i, j, 0.5 * (c.get(i - 1, j) + c.get(i, j)));
        }
    }
    for i in 0..nx {
        out.set_v(i, 0, c.get(i, 0));
        out.set_v(i, ny, c.get(i, ny - 1));
        for j in 1..ny {
            out.set_v(i, j, 0.5 * (c.get(i, j - 1) + c.get(i, j)));
        }
    }
    out
}

/// Momentum forcing `ρ g` evaluated on faces: `ρ` averaged from cells,
/// `g` sampled at face midpoints.
pub fn face_forcing(
    grid: &StaggeredGrid,
    rho: &CellField,
    g: &(impl VectorSampler + ?Sized),
    t: f64,
) -> FaceField {
    let rho_f = cell_to_face_average(grid, rho);
    let mut out = FaceField::zeros(grid);
    for j in 0..grid.ny() {
        for i in 0..=grid.nx() {
            let [x, y] = grid.face_center(crate::grid::FaceId::x(i, j));
            out.set_u(i, j, rho_f.u(i, j) * g.eval(t, x, y)[0]);
        }
    }
    for j in 0..=grid.ny() {
        for i in 0..grid.nx() {
            let [x, y] = grid.face_center(crate::grid::FaceId::y(i, j));
            out.set_v(i, j, rho_f.v(i, j) * g.eval(t, x, y)[1]);
        }
    }
    out
}

/// Block-average a fine cell field to a coarser grid whose cell counts
/// divide the fine ones.
pub fn restrict_to_coarse(
    fine: &CellField,
    fine_grid: &StaggeredGrid,
    coarse_grid: &StaggeredGrid,
) -> CellField {
    fine.assert_grid(fine_grid);
    let rx = fine_grid.nx() / coarse_grid.nx();
    let ry = fine_grid.ny() / coarse_grid.ny();
    assert!(rx * coarse_grid.nx() == fine_grid.nx() && ry * coarse_grid.ny() == fine_grid.ny());
    let mut out = CellField::zeros(coarse_grid);
    let inv = 1.0 / (rx * ry) as f64;
    for j in 0..coarse_grid.ny() {
        for i in 0..coarse_grid.nx() {
            let mut sum = 0.0;
            for jj in 0..ry {
                for ii in 0..rx {
                    sum += fine.get(i * rx + ii, j * ry + jj);
                }
            }
            out.set(i, j, sum * inv);
        }
    }
    out
}

/// `L²(Ω)` norm of a cell field: `sqrt(Σ f² · cell area)`.
pub fn l2_norm(f: &CellField, grid: &StaggeredGrid) -> f64 {
    f.assert_grid(grid);
    (f.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
}

/// Max norm of a cell field.
pub fn linf_norm(f: &CellField) -> f64 {
    f.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// `H¹` seminorm of a velocity field from its discrete symmetric gradient:
/// `sqrt(Σ |Dv|² · cell area)`.
pub fn h1_seminorm(vel: &FaceField, grid: &StaggeredGrid) -> f64 {
    let d = crate::brinkman::symmetric_gradient(grid, vel);
    let mut sum = 0.0;
    for t in &d {
        sum += t[0][0] * t[0][0] + t[1][1] * t[1][1] + 2.0 * t[0][1] * t[0][1];
    }
    (sum * grid.cell_area()).sqrt()
}
