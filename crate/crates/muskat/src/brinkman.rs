//! Variable-coefficient Stokes–Brinkman saddle-point system on the MAC grid.
//!
//! The momentum operator discretizes `−div(μ Dv) + h v` through its energy
//! form `Σ μ Dv:Dψ + Σ h v·ψ`, so the assembled velocity block is symmetric
//! by construction and the discrete energy identity is algebraic. The
//! incompressibility constraint couples through the net-flux divergence
//! operator; the pressure is determined up to constants and normalized to
//! zero mean.
//!
//! Solver: Schur-complement conjugate gradients on the pressure, with the
//! velocity block solved by incomplete-Cholesky preconditioned conjugate
//! gradients. All loops run in a fixed order; repeated solves are
//! bit-identical. A dense direct path exists for small systems as an oracle.

use crate::fields::{
    cell_to_face_average, CellField, FaceField, VectorSampler, VelocityPressure,
};
use crate::grid::{discrete_divergence, Axis, FaceId, StaggeredGrid};
use crate::linalg::{dense_saddle_solve, pcg, Csr, Ic0};
use crate::{Error, Result, Tolerances};

/// Tangential Dirichlet velocity values at wall nodes, needed by the
/// one-sided shear stencils next to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct WallTangential {
    /// `u` at the bottom wall nodes `(i·hx, 0)`, length `nx+1`.
    pub u_bottom: Vec<f64>,
    /// `u` at the top wall nodes, length `nx+1`.
    pub u_top: Vec<f64>,
    /// `v` at the left wall nodes `(0, j·hy)`, length `ny+1`.
    pub v_left: Vec<f64>,
    /// `v` at the right wall nodes, length `ny+1`.
    pub v_right: Vec<f64>,
}

impl WallTangential {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            u_bottom: vec![0.0; grid.nx() + 1],
            u_top: vec![0.0; grid.nx() + 1],
            v_left: vec![0.0; grid.ny() + 1],
            v_right: vec![0.0; grid.ny() + 1],
        }
    }

    pub fn from_boundary(grid: &StaggeredGrid, b: &(impl VectorSampler + ?Sized), t: f64) -> Self {
        let mut w = Self::zeros(grid);
        for i in 0..=grid.nx() {
            let [x, y0] = grid.node_pos(i, 0);
            let [_, y1] = grid.node_pos(i, grid.ny());
            w.u_bottom[i] = b.eval(t, x, y0)[0];
            w.u_top[i] = b.eval(t, x, y1)[0];
        }
        for j in 0..=grid.ny() {
            let [x0, y] = grid.node_pos(0, j);
            let [x1, _] = grid.node_pos(grid.nx(), j);
            w.v_left[j] = b.eval(t, x0, y)[1];
            w.v_right[j] = b.eval(t, x1, y)[1];
        }
        w
    }
}

/// Dirichlet velocity data: normal components on boundary faces plus
/// tangential values at the wall nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData {
    pub u_left: Vec<f64>,
    pub u_right: Vec<f64>,
    pub v_bottom: Vec<f64>,
    pub v_top: Vec<f64>,
    pub walls: WallTangential,
}

impl DirichletData {
    pub fn from_boundary(grid: &StaggeredGrid, b: &(impl VectorSampler + ?Sized), t: f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut dd = Self {
            u_left: vec![0.0; ny],
            u_right: vec![0.0; ny],
            v_bottom: vec![0.0; nx],
            v_top: vec![0.0; nx],
            walls: WallTangential::from_boundary(grid, b, t),
        };
        for j in 0..ny {
            let [x, y] = grid.face_center(FaceId::x(0, j));
            dd.u_left[j] = b.eval(t, x, y)[0];
            let [x, y] = grid.face_center(FaceId::x(nx, j));
            dd.u_right[j] = b.eval(t, x, y)[0];
        }
        for i in 0..nx {
            let [x, y] = grid.face_center(FaceId::y(i, 0));
            dd.v_bottom[i] = b.eval(t, x, y)[1];
            let [x, y] = grid.face_center(FaceId::y(i, ny));
            dd.v_top[i] = b.eval(t, x, y)[1];
        }
        dd
    }

    /// Write the boundary-face values into a face field.
    pub fn imprint(&self, grid: &StaggeredGrid, vel: &mut FaceField) {
        let (nx, ny) = (grid.nx(), grid.ny());
        for j in 0..ny {
            vel.set_u(0, j, self.u_left[j]);
            vel.set_u(nx, j, self.u_right[j]);
        }
        for i in 0..nx {
            vel.set_v(i, 0, self.v_bottom[i]);
            vel.set_v(i, ny, self.v_top[i]);
        }
    }
}

/// Velocity-face value sources appearing in the energy stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    U(usize, usize),
    V(usize, usize),
    WallUBottom(usize),
    WallUTop(usize),
    WallVLeft(usize),
    WallVRight(usize),
}

fn slot_value(field: &FaceField, walls: &WallTangential, slot: Slot) -> f64 {
    match slot {
        Slot::U(i, j) => field.u(i, j),
        Slot::V(i, j) => field.v(i, j),
        Slot::WallUBottom(i) => walls.u_bottom[i],
        Slot::WallUTop(i) => walls.u_top[i],
        Slot::WallVLeft(j) => walls.v_left[j],
        Slot::WallVRight(j) => walls.v_right[j],
    }
}

/// Indexing of the interior-face unknowns in a fixed order: interior
/// x-faces row-major, then interior y-faces row-major.
#[derive(Debug, Clone)]
pub struct FaceUnknowns {
    nx: usize,
    ny: usize,
}

impl FaceUnknowns {
    pub fn new(grid: &StaggeredGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
        }
    }

    pub fn count(&self) -> usize {
        (self.nx - 1) * self.ny + self.nx * (self.ny - 1)
    }

    fn of_slot(&self, slot: Slot) -> Option<usize> {
        match slot {
            Slot::U(i, j) if i >= 1 && i < self.nx => Some(j * (self.nx - 1) + (i - 1)),
            Slot::V(i, j) if j >= 1 && j < self.ny => {
                Some((self.nx - 1) * self.ny + (j - 1) * self.nx + i)
            }
            _ => None,
        }
    }

    pub fn of_face(&self, face: FaceId) -> Option<usize> {
        match face.axis {
            Axis::X => self.of_slot(Slot::U(face.i, face.j)),
            Axis::Y => self.of_slot(Slot::V(face.i, face.j)),
        }
    }

    /// Scatter an unknown vector into the interior faces of a field.
    fn scatter(&self, x: &[f64], vel: &mut FaceField) {
        for j in 0..self.ny {
            for i in 1..self.nx {
                vel.set_u(i, j, x[j * (self.nx - 1) + (i - 1)]);
            }
        }
        let off = (self.nx - 1) * self.ny;
        for j in 1..self.ny {
            for i in 0..self.nx {
                vel.set_v(i, j, x[off + (j - 1) * self.nx + i]);
            }
        }
    }
}

/// Visit every viscous quadrature unit: per cell the two normal-strain
/// squares, per node the shear square. The callback receives the coefficient
/// `κ` multiplying the product of the unit's linear functionals and the
/// stencil entries.
fn for_each_viscous_unit(
    grid: &StaggeredGrid,
    mu: &CellField,
    mut f: impl FnMut(f64, &[(f64, Slot)]),
) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let area = grid.cell_area();
    // normal strains at cell centers
    for j in 0..ny {
        for i in 0..nx {
            let kappa = mu.get(i, j) * area;
            f(
                kappa,
                &[
                    (1.0 / hx, Slot::U(i + 1, j)),
                    (-1.0 / hx, Slot::U(i, j)),
                ],
            );
            f(
                kappa,
                &[
                    (1.0 / hy, Slot::V(i, j + 1)),
                    (-1.0 / hy, Slot::V(i, j)),
                ],
            );
        }
    }
    // shear at nodes; one-sided half-spacing stencils against the walls
    for j in 0..=ny {
        for i in 0..=nx {
            let mut mu_sum = 0.0;
            let mut mu_cnt = 0.0;
            for (ci, cj) in [
                (i.wrapping_sub(1), j.wrapping_sub(1)),
                (i, j.wrapping_sub(1)),
                (i.wrapping_sub(1), j),
                (i, j),
            ] {
                if ci < nx && cj < ny {
                    mu_sum += mu.get(ci, cj);
                    mu_cnt += 1.0;
                }
            }
            let mu_node = mu_sum / mu_cnt;
            let wx = if i == 0 || i == nx { 0.5 * hx } else { hx };
            let wy = if j == 0 || j == ny { 0.5 * hy } else { hy };
            let kappa = 2.0 * mu_node * wx * wy;
            let mut entries: [(f64, Slot); 4] = [(0.0, Slot::U(0, 0)); 4];
            // ½ ∂u/∂y
            if j == 0 {
                entries[0] = (0.5 / (0.5 * hy), Slot::U(i, 0));
                entries[1] = (-0.5 / (0.5 * hy), Slot::WallUBottom(i));
            } else if j == ny {
                entries[0] = (0.5 / (0.5 * hy), Slot::WallUTop(i));
                entries[1] = (-0.5 / (0.5 * hy), Slot::U(i, ny - 1));
            } else {
                entries[0] = (0.5 / hy, Slot::U(i, j));
                entries[1] = (-0.5 / hy, Slot::U(i, j - 1));
            }
            // ½ ∂v/∂x
            if i == 0 {
                entries[2] = (0.5 / (0.5 * hx), Slot::V(0, j));
                entries[3] = (-0.5 / (0.5 * hx), Slot::WallVLeft(j));
            } else if i == nx {
                entries[2] = (0.5 / (0.5 * hx), Slot::WallVRight(j));
                entries[3] = (-0.5 / (0.5 * hx), Slot::V(nx - 1, j));
            } else {
                entries[2] = (0.5 / hx, Slot::V(i, j));
                entries[3] = (-0.5 / hx, Slot::V(i - 1, j));
            }
            f(kappa, &entries);
        }
    }
}

/// Both halves of the discrete energy pairing between two velocity fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    /// `Σ μ D(a):D(b) · area` over the viscous quadrature units.
    pub viscous: f64,
    /// `Σ h a·b · volume` over the interior faces.
    pub drag: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.viscous + self.drag
    }
}

/// Evaluate the energy pairing used by the assembled operator on two full
/// face fields with their wall tangential data.
pub fn energy_products(
    grid: &StaggeredGrid,
    mu: &CellField,
    h_cells: &CellField,
    field_a: &FaceField,
    walls_a: &WallTangential,
    field_b: &FaceField,
    walls_b: &WallTangential,
) -> EnergyParts {
    let mut viscous = 0.0;
    for_each_viscous_unit(grid, mu, |kappa, entries| {
        let mut la = 0.0;
        let mut lb = 0.0;
        for (c, slot) in entries {
            if *c != 0.0 {
                la += c * slot_value(field_a, walls_a, *slot);
                lb += c * slot_value(field_b, walls_b, *slot);
            }
        }
        viscous += kappa * la * lb;
    });
    let h_f = cell_to_face_average(grid, h_cells);
    let vol = grid.cell_area();
    let mut drag = 0.0;
    for j in 0..grid.ny() {
        for i in 1..grid.nx() {
            drag += h_f.u(i, j) * field_a.u(i, j) * field_b.u(i, j) * vol;
        }
    }
    for j in 1..grid.ny() {
        for i in 0..grid.nx() {
            drag += h_f.v(i, j) * field_a.v(i, j) * field_b.v(i, j) * vol;
        }
    }
    EnergyParts { viscous, drag }
}

/// Cell-centered symmetric velocity gradient. Normal strains come from the
/// face differences across each cell (exact on the MAC layout); the shear is
/// averaged from the four surrounding nodes, with one-sided differences
/// extrapolating the tangential derivative at walls. Exact for linear
/// velocity fields.
pub fn symmetric_gradient(grid: &StaggeredGrid, vel: &FaceField) -> Vec<[[f64; 2]; 2]> {
    vel.assert_grid(grid);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    // shear at nodes
    let mut d12 = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let du_dy = if j == 0 {
                (vel.u(i, 1) - vel.u(i, 0)) / hy
            } else if j == ny {
                (vel.u(i, ny - 1) - vel.u(i, ny - 2)) / hy
            } else {
                (vel.u(i, j) - vel.u(i, j - 1)) / hy
            };
            let dv_dx = if i == 0 {
                (vel.v(1, j) - vel.v(0, j)) / hx
            } else if i == nx {
                (vel.v(nx - 1, j) - vel.v(nx - 2, j)) / hx
            } else {
                (vel.v(i, j) - vel.v(i - 1, j)) / hx
            };
            d12[j * (nx + 1) + i] = 0.5 * (du_dy + dv_dx);
        }
    }
    let mut out = Vec::with_capacity(grid.n_cells());
    for j in 0..ny {
        for i in 0..nx {
            let d11 = (vel.u(i + 1, j) - vel.u(i, j)) / hx;
            let d22 = (vel.v(i, j + 1) - vel.v(i, j)) / hy;
            let s = 0.25
                * (d12[j * (nx + 1) + i]
                    + d12[j * (nx + 1) + i + 1]
                    + d12[(j + 1) * (nx + 1) + i]
                    + d12[(j + 1) * (nx + 1) + i + 1]);
            out.push([[d11, s], [s, d22]]);
        }
    }
    out
}

/// Assembled saddle-point system over the interior-face unknowns.
#[derive(Debug)]
pub struct SaddleSystem {
    pub grid: StaggeredGrid,
    pub unknowns: FaceUnknowns,
    /// Viscous + drag block; symmetric positive definite.
    pub a: Csr,
    /// Net-flux divergence rows (cells × interior faces).
    pub div: Csr,
    /// Momentum right-hand side: forcing plus Dirichlet elimination.
    pub rhs_momentum: Vec<f64>,
    /// Constraint right-hand side: negative net flux of the boundary data.
    pub rhs_continuity: Vec<f64>,
    pub dirichlet: DirichletData,
    /// Pressure-block preconditioner scale `μ_c / area`.
    schur_scale: Vec<f64>,
    pub tol: Tolerances,
}

/// Convergence bookkeeping of one saddle solve.
#[derive(Debug, Clone)]
pub struct SolveStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Max-norm of the discrete divergence of the returned velocity.
    pub div_inf: f64,
    /// Relative momentum-equation residual.
    pub momentum_residual: f64,
    /// Outer divergence-residual history.
    pub history: Vec<f64>,
}

/// Assemble the momentum and continuity blocks for coefficients `μ` (cell
/// dynamic viscosity), `h` (cell drag), a face-evaluated forcing `ρg`, and
/// Dirichlet boundary velocity `b` at time `t`.
pub fn assemble(
    grid: &StaggeredGrid,
    mu: &CellField,
    h_cells: &CellField,
    forcing: &FaceField,
    b: &(impl VectorSampler + ?Sized),
    t: f64,
    tol: Tolerances,
) -> Result<SaddleSystem> {
    mu.assert_grid(grid);
    h_cells.assert_grid(grid);
    forcing.assert_grid(grid);
    if let Some(bad) = mu.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::Coercivity(format!(
            "dynamic viscosity must be strictly positive everywhere, found {bad}"
        )));
    }
    if let Some(bad) = h_cells.iter().find(|&&h| !(h >= 0.0)) {
        return Err(Error::Coercivity(format!(
            "drag coefficient must be nonnegative everywhere, found {bad}"
        )));
    }
    let net = crate::fields::net_boundary_flux(grid, b, t);
    if net.abs() > tol.tau_comp {
        return Err(Error::Incompatible {
            net,
            tol: tol.tau_comp,
        });
    }

    let dd = DirichletData::from_boundary(grid, b, t);
    let unknowns = FaceUnknowns::new(grid);
    let n = unknowns.count();
    let m = grid.n_cells();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let vol = grid.cell_area();

    let data_value = |slot: Slot| -> f64 {
        match slot {
            Slot::U(0, j) => dd.u_left[j],
            Slot::U(i, j) if i == nx => dd.u_right[j],
            Slot::V(i, 0) => dd.v_bottom[i],
            Slot::V(i, j) if j == ny => dd.v_top[i],
            Slot::WallUBottom(i) => dd.walls.u_bottom[i],
            Slot::WallUTop(i) => dd.walls.u_top[i],
            Slot::WallVLeft(j) => dd.walls.v_left[j],
            Slot::WallVRight(j) => dd.walls.v_right[j],
            other => unreachable!("interior slot {other:?} treated as data"),
        }
    };

    let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(16 * n);
    let mut rhs_momentum = vec![0.0; n];
    for_each_viscous_unit(grid, mu, |kappa, entries| {
        for (ca, sa) in entries {
            if *ca == 0.0 {
                continue;
            }
            if let Some(ka) = unknowns.of_slot(*sa) {
                for (cb, sb) in entries {
                    if *cb == 0.0 {
                        continue;
                    }
                    match unknowns.of_slot(*sb) {
                        Some(kb) => trips.push((ka, kb, kappa * ca * cb)),
                        None => rhs_momentum[ka] -= kappa * ca * cb * data_value(*sb),
                    }
                }
            }
        }
    });
    // drag mass term and forcing on interior faces
    let h_f = cell_to_face_average(grid, h_cells);
    for j in 0..ny {
        for i in 1..nx {
            let k = unknowns.of_slot(Slot::U(i, j)).unwrap();
            trips.push((k, k, h_f.u(i, j) * vol));
            rhs_momentum[k] += forcing.u(i, j) * vol;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = unknowns.of_slot(Slot::V(i, j)).unwrap();
            trips.push((k, k, h_f.v(i, j) * vol));
            rhs_momentum[k] += forcing.v(i, j) * vol;
        }
    }
    let a = Csr::from_triplets(n, n, trips);

    // continuity rows: net flux per cell
    let mut div_trips: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * m);
    let mut rhs_continuity = vec![0.0; m];
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.cell_index(i, j);
            let faces = [
                (hy, Slot::U(i + 1, j)),
                (-hy, Slot::U(i, j)),
                (hx, Slot::V(i, j + 1)),
                (-hx, Slot::V(i, j)),
            ];
            for (coef, slot) in faces {
                match unknowns.of_slot(slot) {
                    Some(k) => div_trips.push((c, k, coef)),
                    None => rhs_continuity[c] -= coef * data_value(slot),
                }
            }
        }
    }
    let div = Csr::from_triplets(m, n, div_trips);

    let schur_scale: Vec<f64> = mu.iter().map(|&muc| muc / vol).collect();

    Ok(SaddleSystem {
        grid: grid.clone(),
        unknowns,
        a,
        div,
        rhs_momentum,
        rhs_continuity,
        dirichlet: dd,
        schur_scale,
        tol,
    })
}

fn subtract_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

impl SaddleSystem {
    pub fn n_unknowns(&self) -> usize {
        self.a.n_rows()
    }

    /// Solve for velocity and zero-mean pressure.
    pub fn solve(&self) -> Result<(VelocityPressure, SolveStats)> {
        self.solve_warm(None)
    }

    /// Solve, optionally warm-starting the pressure iteration from a
    /// previous pressure field (exact solutions are unaffected; only the
    /// iteration count is).
    pub fn solve_warm(&self, p_start: Option<&CellField>) -> Result<(VelocityPressure, SolveStats)> {
        let n = self.a.n_rows();
        let m = self.div.n_rows();
        let vol = self.grid.cell_area();
        let f_norm = self.rhs_momentum.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = self
            .rhs_continuity
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();

        // homogeneous data: the unique solution is identically zero
        if f_norm == 0.0 && c_norm == 0.0 && self.dirichlet_is_zero() {
            let vel = FaceField::zeros(&self.grid);
            let p = CellField::zeros(&self.grid);
            return Ok((
                VelocityPressure { vel, pressure: p },
                SolveStats {
                    outer_iterations: 0,
                    inner_iterations: 0,
                    div_inf: 0.0,
                    momentum_residual: 0.0,
                    history: vec![],
                },
            ));
        }

        let ic = Ic0::new(&self.a)?;
        let inner_rel = (self.tol.tau_solve * 1e-3).min(1e-12);
        let inner_cap = 40 * n + 200;
        let mut inner_total = 0usize;
        let mut inner_solve = |rhs: &[f64], x: &mut [f64]| -> Result<()> {
            let out = pcg(&self.a, rhs, x, &ic, inner_rel, 0.0, inner_cap)?;
            inner_total += out.iterations;
            Ok(())
        };

        // g_S = D A⁻¹ F − C, projected onto mean-zero
        let mut w = vec![0.0; n];
        inner_solve(&self.rhs_momentum, &mut w)?;
        let mut g_s = vec![0.0; m];
        self.div.matvec(&w, &mut g_s);
        for (g, c) in g_s.iter_mut().zip(&self.rhs_continuity) {
            *g -= c;
        }
        subtract_mean(&mut g_s);

        let div_target = self.tol.tau_div / 50.0;
        let outer_cap = 4 * m + 200;

        let mut s = vec![0.0; m];
        if let Some(p0) = p_start {
            p0.assert_grid(&self.grid);
            for (sv, pv) in s.iter_mut().zip(p0.iter()) {
                *sv = -pv;
            }
            subtract_mean(&mut s);
        }

        // outer CG state
        let mut tmp_n = vec![0.0; n];
        let mut av = vec![0.0; n];
        let mut r = vec![0.0; m];
        let apply_schur = |s_in: &[f64],
                           out: &mut [f64],
                           tmp_n: &mut [f64],
                           av: &mut [f64],
                           inner: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>|
         -> Result<()> {
            self.div.matvec_transpose(s_in, tmp_n);
            av.fill(0.0);
            inner(tmp_n, av)?;
            self.div.matvec(av, out);
            Ok(())
        };

        if s.iter().any(|&v| v != 0.0) {
            apply_schur(&s, &mut r, &mut tmp_n, &mut av, &mut inner_solve)?;
            for (rv, gv) in r.iter_mut().zip(&g_s) {
                *rv = gv - *rv;
            }
        } else {
            r.copy_from_slice(&g_s);
        }
        subtract_mean(&mut r);

        let mut history = Vec::new();
        let res_inf = |r: &[f64]| r.iter().fold(0.0f64, |mx, &v| mx.max(v.abs())) / vol;
        let mut outer_iters = 0usize;

        if res_inf(&r) > div_target {
            let mut z: Vec<f64> = r
                .iter()
                .zip(&self.schur_scale)
                .map(|(rv, sc)| rv * sc)
                .collect();
            subtract_mean(&mut z);
            let mut p_dir = z.clone();
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mut sp = vec![0.0; m];
            loop {
                outer_iters += 1;
                if outer_iters > outer_cap {
                    return Err(Error::SolverFailure {
                        context: format!(
                            "pressure iteration hit the {outer_cap}-iteration cap"
                        ),
                        history,
                    });
                }
                apply_schur(&p_dir, &mut sp, &mut tmp_n, &mut av, &mut inner_solve)?;
                let psp: f64 = p_dir.iter().zip(&sp).map(|(a, b)| a * b).sum();
                if !(psp > 0.0) {
                    return Err(Error::IndefinitePressureOperator);
                }
                let alpha = rz / psp;
                for ((sv, pv), (rv, spv)) in
                    s.iter_mut().zip(&p_dir).zip(r.iter_mut().zip(&sp))
                {
                    *sv += alpha * pv;
                    *rv -= alpha * spv;
                }
                subtract_mean(&mut s);
                subtract_mean(&mut r);
                let res = res_inf(&r);
                history.push(res);
                if res <= div_target {
                    break;
                }
                for ((zv, rv), sc) in z.iter_mut().zip(&r).zip(&self.schur_scale) {
                    *zv = rv * sc;
                }
                subtract_mean(&mut z);
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for (pv, zv) in p_dir.iter_mut().zip(&z) {
                    *pv = zv + beta * *pv;
                }
            }
        }

        // final velocity from the converged pressure
        self.div.matvec_transpose(&s, &mut tmp_n);
        let rhs_v: Vec<f64> = self
            .rhs_momentum
            .iter()
            .zip(&tmp_n)
            .map(|(f, d)| f - d)
            .collect();
        let mut v = w; // warm start from A⁻¹F
        inner_solve(&rhs_v, &mut v)?;

        // residual bookkeeping
        let mut a_v = vec![0.0; n];
        self.a.matvec(&v, &mut a_v);
        let mom_res = a_v
            .iter()
            .zip(&rhs_v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let denom = f_norm.max(
            a_v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        );
        let momentum_residual = if denom > 0.0 { mom_res / denom } else { mom_res };

        let mut vel = FaceField::zeros(&self.grid);
        self.unknowns.scatter(&v, &mut vel);
        self.dirichlet.imprint(&self.grid, &mut vel);

        let mut p_vec = s;
        for pv in p_vec.iter_mut() {
            *pv = -*pv;
        }
        subtract_mean(&mut p_vec);
        let mut pressure = CellField::zeros(&self.grid);
        pressure.as_mut_slice().copy_from_slice(&p_vec);

        let div_field = discrete_divergence(&self.grid, &vel);
        let div_inf = crate::fields::linf_norm(&div_field);
        if div_inf > self.tol.tau_div {
            return Err(Error::SolverFailure {
                context: format!(
                    "divergence residual {div_inf:e} exceeds tolerance {:e} after convergence",
                    self.tol.tau_div
                ),
                history,
            });
        }

        Ok((
            VelocityPressure { vel, pressure },
            SolveStats {
                outer_iterations: outer_iters,
                inner_iterations: inner_total,
                div_inf,
                momentum_residual,
                history,
            },
        ))
    }

    fn dirichlet_is_zero(&self) -> bool {
        let dd = &self.dirichlet;
        dd.u_left.iter().all(|&v| v == 0.0)
            && dd.u_right.iter().all(|&v| v == 0.0)
            && dd.v_bottom.iter().all(|&v| v == 0.0)
            && dd.v_top.iter().all(|&v| v == 0.0)
            && dd.walls.u_bottom.iter().all(|&v| v == 0.0)
            && dd.walls.u_top.iter().all(|&v| v == 0.0)
            && dd.walls.v_left.iter().all(|&v| v == 0.0)
            && dd.walls.v_right.iter().all(|&v| v == 0.0)
    }

    /// Dense direct solve of the identical assembled system; oracle path for
    /// small grids.
    pub fn solve_dense(&self) -> Result<VelocityPressure> {
        let n = self.a.n_rows();
        let m = self.div.n_rows();
        assert!(n + m <= 6000, "dense path is for oracle-sized systems");
        let areas = vec![self.grid.cell_area(); m];
        let (v, s) = dense_saddle_solve(
            &self.a,
            &self.div,
            &self.rhs_momentum,
            &self.rhs_continuity,
            &areas,
        )?;
        let mut vel = FaceField::zeros(&self.grid);
        self.unknowns.scatter(&v, &mut vel);
        self.dirichlet.imprint(&self.grid, &mut vel);
        let mut p_vec: Vec<f64> = s.iter().map(|&x| -x).collect();
        subtract_mean(&mut p_vec);
        let mut pressure = CellField::zeros(&self.grid);
        pressure.as_mut_slice().copy_from_slice(&p_vec);
        Ok(VelocityPressure { vel, pressure })
    }
}

/// Canonical divergence-free extension of boundary data: the solution of the
/// constant-coefficient Stokes problem (`μ ≡ 1`, `h ≡ 0`) with zero forcing
/// and `v = b` on the boundary.
pub fn lift_boundary(
    grid: &StaggeredGrid,
    b: &(impl VectorSampler + ?Sized),
    t: f64,
    tol: Tolerances,
) -> Result<(FaceField, SolveStats)> {
    let mu = CellField::constant(grid, 1.0);
    let h = CellField::zeros(grid);
    let forcing = FaceField::zeros(grid);
    let system = assemble(grid, &mu, &h, &forcing, b, t, tol)?;
    let (vp, stats) = system.solve()?;
    Ok((vp.vel, stats))
}

/// Manufactured solution used by the convergence study: a divergence-free
/// trigonometric velocity with trigonometric pressure on the unit square,
/// `μ ≡ 1`, `h ≡ 1`.
pub mod mms {
    use std::f64::consts::PI;

    pub fn velocity(x: f64, y: f64) -> [f64; 2] {
        [
            (PI * x).sin() * (PI * y).cos(),
            -(PI * x).cos() * (PI * y).sin(),
        ]
    }

    pub fn pressure(x: f64, y: f64) -> f64 {
        (PI * x).cos() * (PI * y).cos()
    }

    /// Forcing `h v − div(Dv) + ∇p` evaluated analytically.
    pub fn forcing(x: f64, y: f64) -> [f64; 2] {
        let cx = (PI * x).cos();
        let sx = (PI * x).sin();
        let cy = (PI * y).cos();
        let sy = (PI * y).sin();
        [
            (1.0 + PI * PI - PI) * sx * cy,
            -(1.0 + PI * PI + PI) * cx * sy,
        ]
    }
}

/// One row of the manufactured-solution convergence table.
#[derive(Debug, Clone, Copy)]
pub struct MmsRow {
    pub n: usize,
    pub velocity_error_l2: f64,
}

/// Solve the manufactured problem on an `n × n` unit-square grid and return
/// the face-weighted L² velocity error.
pub fn mms_level(n: usize, tol: Tolerances) -> Result<MmsRow> {
    let grid = StaggeredGrid::new([0.0, 0.0], [1.0, 1.0], n, n)?;
    let mu = CellField::constant(&grid, 1.0);
    let h = CellField::constant(&grid, 1.0);
    let forcing = FaceField::from_fn(
        &grid,
        |x, y| mms::forcing(x, y)[0],
        |x, y| mms::forcing(x, y)[1],
    );
    let b = |_t: f64, x: f64, y: f64| mms::velocity(x, y);
    let system = assemble(&grid, &mu, &h, &forcing, &b, 0.0, tol)?;
    let (vp, _stats) = system.solve()?;
    let exact = FaceField::from_fn(&grid, |x, y| mms::velocity(x, y)[0], |x, y| {
        mms::velocity(x, y)[1]
    });
    let vol = grid.cell_area();
    let mut err2 = 0.0;
    for (a, b) in vp.vel.u_data().iter().zip(exact.u_data()) {
        err2 += (a - b) * (a - b) * vol;
    }
    for (a, b) in vp.vel.v_data().iter().zip(exact.v_data()) {
        err2 += (a - b) * (a - b) * vol;
    }
    Ok(MmsRow {
        n,
        velocity_error_l2: err2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn symmetric_gradient_of_rigid_translation_vanishes() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 5, 4).unwrap();
        let vel = FaceField::from_fn(&g, |_x, _y| 1.3, |_x, _y| -0.4);
        for t in symmetric_gradient(&g, &vel) {
            assert_eq!(t, [[0.0, 0.0], [0.0, 0.0]]);
        }
    }

    #[test]
    fn symmetric_gradient_of_shear() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let vel = FaceField::from_fn(&g, |_x, y| y, |_x, _y| 0.0);
        for t in symmetric_gradient(&g, &vel) {
            assert!((t[0][0]).abs() < 1e-14);
            assert!((t[1][1]).abs() < 1e-14);
            assert!((t[0][1] - 0.5).abs() < 1e-14);
            assert!((t[1][0] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_gradient_of_rotation_vanishes() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 5).unwrap();
        let vel = FaceField::from_fn(&g, |_x, y| -y, |x, _y| x);
        for t in symmetric_gradient(&g, &vel) {
            for row in t {
                for v in row {
                    assert!(v.abs() < 1e-14);
                }
            }
        }
    }

    /// Independent quadratic-form oracle: recompute the energy on a 3×3 grid
    /// with explicit loops and compare the assembled matrix entry-by-entry
    /// through polarization.
    #[test]
    fn assembled_matrix_matches_energy_oracle() {
        let g = build_grid([0.0, 0.0], [1.0, 1.5], 3, 3).unwrap();
        let mu = CellField::from_fn(&g, |x, y| 1.0 + x + 0.5 * y);
        let h = CellField::from_fn(&g, |x, _| 0.7 + x);
        let forcing = FaceField::zeros(&g);
        let b = |_t: f64, _x: f64, _y: f64| [0.0, 0.0];
        let sys = assemble(&g, &mu, &h, &forcing, &b, 0.0, Tolerances::default()).unwrap();
        let n = sys.a.n_rows();

        // independent energy: E(vec) with explicit stencils
        let energy = |x: &[f64]| -> f64 {
            let mut vel = FaceField::zeros(&g);
            sys.unknowns.scatter(x, &mut vel);
            let (hx, hy) = (g.hx(), g.hy());
            let area = g.cell_area();
            let mut e = 0.0;
            for j in 0..3 {
                for i in 0..3 {
                    let d11 = (vel.u(i + 1, j) - vel.u(i, j)) / hx;
                    let d22 = (vel.v(i, j + 1) - vel.v(i, j)) / hy;
                    e += mu.get(i, j) * (d11 * d11 + d22 * d22) * area;
                }
            }
            for j in 0..=3usize {
                for i in 0..=3usize {
                    let du_dy = if j == 0 {
                        (vel.u(i, 0) - 0.0) / (0.5 * hy)
                    } else if j == 3 {
                        (0.0 - vel.u(i, 2)) / (0.5 * hy)
                    } else {
                        (vel.u(i, j) - vel.u(i, j - 1)) / hy
                    };
                    let dv_dx = if i == 0 {
                        (vel.v(0, j) - 0.0) / (0.5 * hx)
                    } else if i == 3 {
                        (0.0 - vel.v(2, j)) / (0.5 * hx)
                    } else {
                        (vel.v(i, j) - vel.v(i - 1, j)) / hx
                    };
                    let d12 = 0.5 * (du_dy + dv_dx);
                    let mut mu_sum = 0.0;
                    let mut cnt = 0.0;
                    for (ci, cj) in [
                        (i.wrapping_sub(1), j.wrapping_sub(1)),
                        (i, j.wrapping_sub(1)),
                        (i.wrapping_sub(1), j),
                        (i, j),
                    ] {
                        if ci < 3 && cj < 3 {
                            mu_sum += mu.get(ci, cj);
                            cnt += 1.0;
                        }
                    }
                    let wx = if i == 0 || i == 3 { 0.5 * hx } else { hx };
                    let wy = if j == 0 || j == 3 { 0.5 * hy } else { hy };
                    e += 2.0 * (mu_sum / cnt) * d12 * d12 * wx * wy;
                }
            }
            let h_f = cell_to_face_average(&g, &h);
            for j in 0..3 {
                for i in 1..3 {
                    e += h_f.u(i, j) * vel.u(i, j) * vel.u(i, j) * area;
                }
            }
            for j in 1..3 {
                for i in 0..3 {
                    e += h_f.v(i, j) * vel.v(i, j) * vel.v(i, j) * area;
                }
            }
            e
        };

        for ii in 0..n {
            for jj in 0..n {
                let mut ei = vec![0.0; n];
                ei[ii] = 1.0;
                let mut ej = vec![0.0; n];
                ej[jj] = 1.0;
                let mut sum = ei.clone();
                sum[jj] += 1.0;
                // polarization of E(v) = ½ a(v, v): a(ei, ej) = E(ei+ej) − E(ei) − E(ej)
                let oracle = 0.5 * (energy(&sum) - energy(&ei) - energy(&ej));
                let got = sys.a.get(ii, jj);
                assert!(
                    (oracle - got).abs() < 1e-12,
                    "A[{ii},{jj}] = {got}, oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 5, 4).unwrap();
        let mu = CellField::from_fn(&g, |x, y| 1.0 + 0.3 * (x * y).sin().abs());
        let h = CellField::from_fn(&g, |x, y| 0.5 + x + y);
        let sys = assemble(
            &g,
            &mu,
            &h,
            &FaceField::zeros(&g),
            &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            0.0,
            Tolerances::default(),
        )
        .unwrap();
        assert!(sys.a.max_asymmetry() < 1e-13);
    }

    #[test]
    fn assemble_rejects_nonpositive_viscosity() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        let mut mu = CellField::constant(&g, 1.0);
        mu.set(1, 1, 0.0);
        let err = assemble(
            &g,
            &mu,
            &CellField::zeros(&g),
            &FaceField::zeros(&g),
            &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            0.0,
            Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Coercivity(_)));
    }

    #[test]
    fn assemble_rejects_incompatible_boundary_flux() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        // b = n on the right edge only: net flux = 1
        let b = |_t: f64, x: f64, _y: f64| -> [f64; 2] {
            if x == 1.0 {
                [1.0, 0.0]
            } else {
                [0.0, 0.0]
            }
        };
        let err = assemble(
            &g,
            &CellField::constant(&g, 1.0),
            &CellField::zeros(&g),
            &FaceField::zeros(&g),
            &b,
            0.0,
            Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Incompatible { .. }));
    }

    /// With vanishing viscosity the momentum block degenerates to the drag
    /// mass matrix `c·volume·I`.
    #[test]
    fn drag_dominated_limit_is_mass_matrix() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let c = 3.0;
        let sys = assemble(
            &g,
            &CellField::constant(&g, 1e-14),
            &CellField::constant(&g, c),
            &FaceField::zeros(&g),
            &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            0.0,
            Tolerances::default(),
        )
        .unwrap();
        let n = sys.a.n_rows();
        let vol = g.cell_area();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { c * vol } else { 0.0 };
                assert!(
                    (sys.a.get(i, j) - expect).abs() < 1e-10,
                    "A[{i},{j}] = {}",
                    sys.a.get(i, j)
                );
            }
        }
    }

    #[test]
    fn continuity_rhs_sums_to_net_boundary_flux() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 3).unwrap();
        let b = |_t: f64, _x: f64, y: f64| [y * (1.0 - y) * 4.0, 0.0];
        let sys = assemble(
            &g,
            &CellField::constant(&g, 1.0),
            &CellField::zeros(&g),
            &FaceField::zeros(&g),
            &b,
            0.0,
            Tolerances::default(),
        )
        .unwrap();
        let total: f64 = sys.rhs_continuity.iter().sum();
        let net = crate::fields::net_boundary_flux(&g, &b, 0.0);
        assert!((total.abs() - net.abs()).abs() < 1e-13);
    }

    #[test]
    fn homogeneous_problem_solves_to_zero_exactly() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let sys = assemble(
            &g,
            &CellField::constant(&g, 1.0),
            &CellField::constant(&g, 1.0),
            &FaceField::zeros(&g),
            &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            0.0,
            Tolerances::default(),
        )
        .unwrap();
        let (vp, stats) = sys.solve().unwrap();
        assert!(vp.vel.u_data().iter().all(|&v| v == 0.0));
        assert!(vp.vel.v_data().iter().all(|&v| v == 0.0));
        assert!(vp.pressure.iter().all(|&v| v == 0.0));
        assert_eq!(stats.outer_iterations, 0);
    }

    fn random_problem(
        g: &StaggeredGrid,
        seed: u64,
    ) -> (CellField, CellField, FaceField) {
        let mut st = seed;
        let mut mu = CellField::zeros(g);
        for v in mu.iter_mut() {
            *v = 1.0 + 0.8 * splitmix(&mut st).abs();
        }
        let mut h = CellField::zeros(g);
        for v in h.iter_mut() {
            *v = 2.0 * splitmix(&mut st).abs();
        }
        let mut f = FaceField::zeros(g);
        for v in f.u_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        for v in f.v_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        (mu, h, f)
    }

    #[test]
    fn iterative_solve_matches_dense_oracle() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        for seed in 0..3u64 {
            let (mu, h, f) = random_problem(&g, seed);
            let sys = assemble(
                &g,
                &mu,
                &h,
                &f,
                &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
                0.0,
                Tolerances::default(),
            )
            .unwrap();
            let (vp, _) = sys.solve().unwrap();
            let dense = sys.solve_dense().unwrap();
            let mut worst = 0.0f64;
            for (a, b) in vp.vel.u_data().iter().zip(dense.vel.u_data()) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in vp.vel.v_data().iter().zip(dense.vel.v_data()) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in vp.pressure.iter().zip(dense.pressure.iter()) {
                worst = worst.max((a - b).abs());
            }
            assert!(worst < 1e-10, "seed {seed}: max deviation {worst:e}");
        }
    }

    #[test]
    fn solve_is_linear_in_forcing_and_boundary() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let mu = CellField::from_fn(&g, |x, _| 1.0 + 0.5 * x);
        let h = CellField::constant(&g, 0.3);
        let tol = Tolerances::default();
        let mut st = 7u64;
        let mut f1 = FaceField::zeros(&g);
        for v in f1.u_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        for v in f1.v_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        let mut f2 = FaceField::zeros(&g);
        for v in f2.u_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        for v in f2.v_data_mut().iter_mut() {
            *v = splitmix(&mut st);
        }
        let b1 = |_t: f64, _x: f64, _y: f64| [1.0, 0.0];
        let b2 = |_t: f64, _x: f64, y: f64| [0.0, 0.5 - (2.5 * y).sin() * 0.0];
        let solve = |f: &FaceField, b: &dyn VectorSampler| {
            assemble(&g, &mu, &h, f, b, 0.0, tol).unwrap().solve().unwrap().0
        };
        let s1 = solve(&f1, &b1);
        let s2 = solve(&f2, &b2);
        let sum_f = f1.add_scaled(&f2, 1.0);
        let b_sum = |t: f64, x: f64, y: f64| {
            let a = b1(t, x, y);
            let b = b2(t, x, y);
            [a[0] + b[0], a[1] + b[1]]
        };
        let s12 = solve(&sum_f, &b_sum);
        let expect = s1.vel.add_scaled(&s2.vel, 1.0);
        let mut worst = 0.0f64;
        for (a, b) in s12.vel.u_data().iter().zip(expect.u_data()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in s12.vel.v_data().iter().zip(expect.v_data()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 10.0 * tol.tau_solve, "superposition defect {worst:e}");
    }

    /// With `b = 0` the solve satisfies `Σ(h|v|² + μ Dv:Dv) = Σ ρg·v`
    /// up to the solver tolerance.
    #[test]
    fn energy_identity_homogeneous_boundary() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 6, 6).unwrap();
        let mu = CellField::from_fn(&g, |x, y| 1.0 + x * y);
        let h = CellField::from_fn(&g, |_, y| 0.5 + y);
        let tol = Tolerances::default();
        let forcing = FaceField::from_fn(&g, |x, y| (3.1 * x + y).sin(), |x, y| (x - 2.0 * y).cos());
        let sys = assemble(&g, &mu, &h, &forcing, &|_t: f64, _x: f64, _y: f64| [0.0, 0.0], 0.0, tol)
            .unwrap();
        let (vp, _) = sys.solve().unwrap();
        let walls = WallTangential::zeros(&g);
        let lhs = energy_products(&g, &mu, &h, &vp.vel, &walls, &vp.vel, &walls).total();
        // ⟨forcing, v⟩ over interior faces
        let vol = g.cell_area();
        let mut rhs = 0.0;
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                rhs += forcing.u(i, j) * vp.vel.u(i, j) * vol;
            }
        }
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                rhs += forcing.v(i, j) * vp.vel.v(i, j) * vol;
            }
        }
        let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
        assert!(rel < 10.0 * tol.tau_solve, "energy identity residual {rel:e}");
    }

    #[test]
    fn degenerate_drag_is_still_solvable() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 5, 5).unwrap();
        let forcing = FaceField::from_fn(&g, |x, _| x, |_, y| -y);
        let sys = assemble(
            &g,
            &CellField::constant(&g, 1.0),
            &CellField::zeros(&g),
            &forcing,
            &|_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            0.0,
            Tolerances::default(),
        )
        .unwrap();
        let (vp, stats) = sys.solve().unwrap();
        assert!(stats.div_inf <= 1e-8);
        assert!(vp.vel.max_abs().is_finite());
    }

    #[test]
    fn lift_of_zero_boundary_is_zero() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let (vel, _) = lift_boundary(&g, &|_t: f64, _x: f64, _y: f64| [0.0, 0.0], 0.0, Tolerances::default())
            .unwrap();
        assert_eq!(vel.max_abs(), 0.0);
    }

    /// Constants solve the homogeneous Stokes problem, so the canonical lift
    /// of uniform boundary data is the constant extension.
    #[test]
    fn lift_of_uniform_boundary_is_constant() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let (vel, _) = lift_boundary(&g, &|_t: f64, _x: f64, _y: f64| [1.0, 0.0], 0.0, Tolerances::default())
            .unwrap();
        for &u in vel.u_data() {
            assert!((u - 1.0).abs() < 1e-9, "u = {u}");
        }
        for &v in vel.v_data() {
            assert!(v.abs() < 1e-9, "v = {v}");
        }
    }

    #[test]
    fn lift_is_linear_in_boundary_data() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let tol = Tolerances::default();
        let b1 = |_t: f64, _x: f64, y: f64| [y, 0.0];
        let b2 = |_t: f64, x: f64, _y: f64| [0.0, -x];
        let b12 = |_t: f64, x: f64, y: f64| [y, -x];
        let (l1, _) = lift_boundary(&g, &b1, 0.0, tol).unwrap();
        let (l2, _) = lift_boundary(&g, &b2, 0.0, tol).unwrap();
        let (l12, _) = lift_boundary(&g, &b12, 0.0, tol).unwrap();
        let expect = l1.add_scaled(&l2, 1.0);
        let mut worst = 0.0f64;
        for (a, b) in l12.u_data().iter().zip(expect.u_data()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in l12.v_data().iter().zip(expect.v_data()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-8, "lift linearity defect {worst:e}");
    }

    /// Quick order-of-accuracy probe; the full three-level study lives in
    /// the acceptance suite.
    #[test]
    fn mms_error_shrinks_roughly_fourfold() {
        let tol = Tolerances::default();
        let e16 = mms_level(16, tol).unwrap().velocity_error_l2;
        let e32 = mms_level(32, tol).unwrap().velocity_error_l2;
        let ratio = e16 / e32;
        assert!(ratio > 3.2, "ratio {ratio}, errors {e16:e} -> {e32:e}");
    }
}
