//! Runtime checks derived from the model's qualitative guarantees: bound
//! preservation, immiscibility/mixing measures, renormalization defects,
//! weak-form residuals and the discrete energy identity.
//!
//! All diagnostics are pure functions of immutable snapshots; identical
//! inputs produce bit-identical reports.

use crate::brinkman::{energy_products, lift_boundary, symmetric_gradient, WallTangential};
use crate::coupler::{Problem, Trajectory};
use crate::fields::{
    face_forcing, CellField, FaceField, MixtureState, VectorSampler, VelocityPressure,
};
use crate::grid::StaggeredGrid;
use crate::transport::{renormalized_advect, TraceRecord};
use crate::{Result, Tolerances};

/// One cell outside the admissible bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsViolation {
    pub i: usize,
    pub j: usize,
    /// "rho" or "nu".
    pub field: &'static str,
    pub value: f64,
    /// Distance beyond the violated bound.
    pub excess: f64,
}

/// List every cell whose density or viscosity leaves the admissible set by
/// more than `tau_mp`.
pub fn bounds_check(state: &MixtureState, tau_mp: f64) -> Vec<BoundsViolation> {
    let b = &state.bounds;
    let mut out = Vec::new();
    for (name, field, lo, hi) in [
        ("rho", &state.rho, b.rho_lo, b.rho_hi),
        ("nu", &state.nu, b.nu_lo, b.nu_hi),
    ] {
        for j in 0..field.ny() {
            for i in 0..field.nx() {
                let v = field.get(i, j);
                let excess = (lo - v).max(v - hi);
                if excess > tau_mp {
                    out.push(BoundsViolation {
                        i,
                        j,
                        field: name,
                        value: v,
                        excess,
                    });
                }
            }
        }
    }
    out
}

/// Density and viscosity intervals of the two phases, with a strict gap
/// between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec {
    pub rho1: [f64; 2],
    pub nu1: [f64; 2],
    pub rho2: [f64; 2],
    pub nu2: [f64; 2],
}

impl PhaseSpec {
    pub fn new(rho1: [f64; 2], nu1: [f64; 2], rho2: [f64; 2], nu2: [f64; 2]) -> Result<Self> {
        for (name, [lo, hi]) in [("rho1", rho1), ("nu1", nu1), ("rho2", rho2), ("nu2", nu2)] {
            if !(lo > 0.0 && lo <= hi) {
                return Err(crate::Error::Config {
                    field: name.to_string(),
                    message: format!("interval [{lo}, {hi}] must be positive and ordered"),
                });
            }
        }
        if !(rho1[1] < rho2[0]) || !(nu1[1] < nu2[0]) {
            return Err(crate::Error::Config {
                field: "phase intervals".to_string(),
                message: "phase-1 intervals must end strictly below phase-2 intervals".to_string(),
            });
        }
        Ok(Self {
            rho1,
            nu1,
            rho2,
            nu2,
        })
    }

    /// Interval dilations guarding round-off only: a relative fraction of
    /// each gap.
    pub fn default_dilations(&self) -> (f64, f64) {
        (
            1e-9 * (self.rho2[0] - self.rho1[1]),
            1e-9 * (self.nu2[0] - self.nu1[1]),
        )
    }
}

fn in_interval(v: f64, [lo, hi]: [f64; 2], eps: f64) -> bool {
    v >= lo - eps && v <= hi + eps
}

/// Cell-area classification of one snapshot: phase-1 cells carry both fields
/// in the phase-1 intervals, phase-2 likewise, everything else is mixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingRow {
    pub area_phase1: f64,
    pub area_phase2: f64,
    pub area_mixed: f64,
    /// Area where the classification by density and by viscosity disagree
    /// (symmetric difference of the two phase-1 sets).
    pub sym_diff_area: f64,
}

/// Classify all cells of a state against the phase intervals dilated by
/// `(eps_rho, eps_nu)`.
pub fn mixing_measure(
    state: &MixtureState,
    phases: &PhaseSpec,
    eps: (f64, f64),
    grid: &StaggeredGrid,
) -> MixingRow {
    state.rho.assert_grid(grid);
    let area = grid.cell_area();
    let mut row = MixingRow {
        area_phase1: 0.0,
        area_phase2: 0.0,
        area_mixed: 0.0,
        sym_diff_area: 0.0,
    };
    for (r, n) in state.rho.iter().zip(state.nu.iter()) {
        let rho1 = in_interval(*r, phases.rho1, eps.0);
        let rho2 = in_interval(*r, phases.rho2, eps.0);
        let nu1 = in_interval(*n, phases.nu1, eps.1);
        let nu2 = in_interval(*n, phases.nu2, eps.1);
        if rho1 && nu1 {
            row.area_phase1 += area;
        } else if rho2 && nu2 {
            row.area_phase2 += area;
        } else {
            row.area_mixed += area;
        }
        if rho1 != nu1 {
            row.sym_diff_area += area;
        }
    }
    row
}

/// Flux-measure classification of the recorded outflow traces; the two
/// records must come from the same run (same faces in the same order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMixingRow {
    pub weight_phase1: f64,
    pub weight_phase2: f64,
    pub weight_mixed: f64,
}

pub fn mixing_measure_traces(
    rho_rec: &TraceRecord,
    nu_rec: &TraceRecord,
    phases: &PhaseSpec,
    eps: (f64, f64),
) -> BoundaryMixingRow {
    assert_eq!(rho_rec.times.len(), nu_rec.times.len());
    let mut row = BoundaryMixingRow {
        weight_phase1: 0.0,
        weight_phase2: 0.0,
        weight_mixed: 0.0,
    };
    for (re, ne) in rho_rec.entries.iter().zip(&nu_rec.entries) {
        assert_eq!(re.len(), ne.len());
        for (r, n) in re.iter().zip(ne) {
            debug_assert_eq!(r.face, n.face);
            let w = r.weight;
            if in_interval(r.value, phases.rho1, eps.0) && in_interval(n.value, phases.nu1, eps.1)
            {
                row.weight_phase1 += w;
            } else if in_interval(r.value, phases.rho2, eps.0)
                && in_interval(n.value, phases.nu2, eps.1)
            {
                row.weight_phase2 += w;
            } else {
                row.weight_mixed += w;
            }
        }
    }
    row
}

/// Per-step and time-integrated renormalization defect of the density
/// transport: `‖advance(β(ρ)) − β(advance(ρ))‖_{L¹}`.
#[derive(Debug, Clone)]
pub struct RenormDefect {
    pub per_step: Vec<f64>,
    /// `Σ dt · defect`.
    pub time_integrated: f64,
}

pub fn renormalization_defect(
    traj: &Trajectory,
    problem: &Problem,
    beta: impl Fn(f64) -> f64 + Send + Sync + Copy,
) -> Result<RenormDefect> {
    let grid = &problem.grid;
    let area = grid.cell_area();
    let mut per_step = Vec::with_capacity(traj.n_steps());
    let mut integral = 0.0;
    for k in 0..traj.n_steps() {
        let t = traj.times[k];
        // the summary holds the step as taken; recomputing it from the time
        // nodes can differ by an ulp
        let dt = traj.summaries[k].dt;
        let partition = problem.partition_at(t);
        let (beta_advected, _) = renormalized_advect(
            beta,
            grid,
            &traj.states[k].rho,
            &traj.velocities[k].vel,
            dt,
            problem.boundary.rho_b.as_ref(),
            &partition,
            t,
        )?;
        // the trajectory's own next state is the plain advance
        let advected_beta = traj.states[k + 1].rho.map(beta);
        let mut l1 = 0.0;
        for (a, b) in beta_advected.iter().zip(advected_beta.iter()) {
            l1 += (a - b).abs() * area;
        }
        per_step.push(l1);
        integral += dt * l1;
    }
    Ok(RenormDefect {
        per_step,
        time_integrated: integral,
    })
}

/// Version of the fixed test-function families below; bump when the family
/// changes so recorded refinement fixtures stay traceable.
pub const TEST_FAMILY_VERSION: u32 = 1;

/// Smooth space-time test function with its derivatives, vanishing at the
/// final time.
pub struct TransportTestFn {
    pub name: &'static str,
    pub phi: Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    pub phi_t: Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    pub grad: Box<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>,
}

/// Fixed family of transport test functions on a given domain and horizon.
pub fn transport_test_family(
    origin: [f64; 2],
    extent: [f64; 2],
    horizon: f64,
) -> Vec<TransportTestFn> {
    use std::f64::consts::PI;
    let t_cap = horizon.max(1e-300);
    let [ox, oy] = origin;
    let [lx, ly] = extent;
    let xn = move |x: f64| (x - ox) / lx;
    let yn = move |y: f64| (y - oy) / ly;
    vec![
        TransportTestFn {
            name: "sine-bump",
            phi: Box::new(move |t, x, y| {
                (1.0 - t / t_cap) * (PI * xn(x)).sin() * (PI * yn(y)).sin()
            }),
            phi_t: Box::new(move |_t, x, y| {
                -(1.0 / t_cap) * (PI * xn(x)).sin() * (PI * yn(y)).sin()
            }),
            grad: Box::new(move |t, x, y| {
                let f = 1.0 - t / t_cap;
                [
                    f * (PI / lx) * (PI * xn(x)).cos() * (PI * yn(y)).sin(),
                    f * (PI / ly) * (PI * xn(x)).sin() * (PI * yn(y)).cos(),
                ]
            }),
        },
        TransportTestFn {
            name: "cosine-boundary",
            phi: Box::new(move |t, x, y| {
                (1.0 - t / t_cap) * (PI * xn(x)).cos() * (PI * yn(y)).cos()
            }),
            phi_t: Box::new(move |_t, x, y| {
                -(1.0 / t_cap) * (PI * xn(x)).cos() * (PI * yn(y)).cos()
            }),
            grad: Box::new(move |t, x, y| {
                let f = 1.0 - t / t_cap;
                [
                    -f * (PI / lx) * (PI * xn(x)).sin() * (PI * yn(y)).cos(),
                    -f * (PI / ly) * (PI * xn(x)).cos() * (PI * yn(y)).sin(),
                ]
            }),
        },
        TransportTestFn {
            name: "quadratic-time",
            phi: Box::new(move |t, x, y| {
                let f = 1.0 - t / t_cap;
                f * f * (1.0 + xn(x) * yn(y))
            }),
            phi_t: Box::new(move |t, x, y| {
                -2.0 * (1.0 - t / t_cap) / t_cap * (1.0 + xn(x) * yn(y))
            }),
            grad: Box::new(move |t, x, y| {
                let f = 1.0 - t / t_cap;
                [f * f * yn(y) / lx, f * f * xn(x) / ly]
            }),
        },
        TransportTestFn {
            name: "space-constant",
            phi: Box::new(move |t, _x, _y| 1.0 - t / t_cap),
            phi_t: Box::new(move |_t, _x, _y| -1.0 / t_cap),
            grad: Box::new(move |_t, _x, _y| [0.0, 0.0]),
        },
    ]
}

/// Divergence-free momentum test field (a stream-function curl vanishing on
/// the boundary) with its analytic symmetric gradient.
pub struct MomentumTestFn {
    pub name: &'static str,
    pub psi: Box<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>,
    pub d_psi: Box<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>,
}

/// Fixed family of momentum test fields built from
/// `s = c sin²(kπ x̂) sin²(lπ ŷ)` stream functions.
pub fn momentum_test_family(origin: [f64; 2], extent: [f64; 2]) -> Vec<MomentumTestFn> {
    fn make(
        name: &'static str,
        origin: [f64; 2],
        extent: [f64; 2],
        kx: f64,
        ky: f64,
        c: f64,
    ) -> MomentumTestFn {
        use std::f64::consts::PI;
        let [ox, oy] = origin;
        let [lx, ly] = extent;
        let ax = kx * PI / lx;
        let ay = ky * PI / ly;
        let psi = move |x: f64, y: f64| -> [f64; 2] {
            let sx = (ax * (x - ox)).sin();
            let sy = (ay * (y - oy)).sin();
            let s2x = (2.0 * ax * (x - ox)).sin();
            let s2y = (2.0 * ay * (y - oy)).sin();
            // (∂s/∂y, −∂s/∂x) for s = c sin²(ax·) sin²(ay·)
            [c * ay * sx * sx * s2y, -c * ax * s2x * sy * sy]
        };
        let d_psi = move |x: f64, y: f64| -> [[f64; 2]; 2] {
            let sx = (ax * (x - ox)).sin();
            let sy = (ay * (y - oy)).sin();
            let c2x = (2.0 * ax * (x - ox)).cos();
            let c2y = (2.0 * ay * (y - oy)).cos();
            let s2x = (2.0 * ax * (x - ox)).sin();
            let s2y = (2.0 * ay * (y - oy)).sin();
            // D11 = ∂x∂y s, D22 = −∂x∂y s, D12 = ½(∂yy − ∂xx) s
            let sxy = c * ax * ay * s2x * s2y;
            let sxx = 2.0 * c * ax * ax * c2x * sy * sy;
            let syy = 2.0 * c * ay * ay * sx * sx * c2y;
            let d12 = 0.5 * (syy - sxx);
            [[sxy, d12], [d12, -sxy]]
        };
        MomentumTestFn {
            name,
            psi: Box::new(psi),
            d_psi: Box::new(d_psi),
        }
    }
    vec![
        make("vortex-1-1", origin, extent, 1.0, 1.0, 1.0),
        make("vortex-2-1", origin, extent, 2.0, 1.0, 0.5),
    ]
}

/// Residuals of the three weak-form identities over a trajectory, relative
/// to the magnitude of their terms; one row per test function.
#[derive(Debug, Clone)]
pub struct WeakFormReport {
    pub rho_rows: Vec<(String, f64)>,
    pub nu_rows: Vec<(String, f64)>,
    pub momentum_rows: Vec<(String, f64)>,
}

impl WeakFormReport {
    pub fn max_transport(&self) -> f64 {
        self.rho_rows
            .iter()
            .chain(&self.nu_rows)
            .fold(0.0f64, |m, (_, r)| m.max(*r))
    }

    pub fn max_momentum(&self) -> f64 {
        self.momentum_rows.iter().fold(0.0f64, |m, (_, r)| m.max(*r))
    }
}

struct TransportSide<'a> {
    states: Vec<&'a CellField>,
    initial: &'a CellField,
    inflow: &'a TraceRecord,
    outflow: &'a TraceRecord,
}

fn transport_identity_residual(
    traj: &Trajectory,
    side: &TransportSide,
    grid: &StaggeredGrid,
    f: &TransportTestFn,
) -> f64 {
    let area = grid.cell_area();
    let mut interior = 0.0;
    let mut interior_mag = 0.0;
    for k in 0..traj.n_steps() {
        let t = traj.times[k];
        let dt = traj.times[k + 1] - t;
        // midpoint rule in time; the fields are piecewise constant per step
        let tm = t + 0.5 * dt;
        let vel = &traj.velocities[k].vel;
        let field = side.states[k];
        let mut cell_sum = 0.0;
        let mut cell_mag = 0.0;
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.cell_center(i, j);
                let vc = [
                    0.5 * (vel.u(i, j) + vel.u(i + 1, j)),
                    0.5 * (vel.v(i, j) + vel.v(i, j + 1)),
                ];
                let g = (f.grad)(tm, x, y);
                let term = field.get(i, j) * ((f.phi_t)(tm, x, y) + vc[0] * g[0] + vc[1] * g[1]);
                cell_sum += term;
                cell_mag += term.abs();
            }
        }
        interior += dt * cell_sum * area;
        interior_mag += dt * cell_mag * area;
    }
    let mut initial = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let [x, y] = grid.cell_center(i, j);
            initial += side.initial.get(i, j) * (f.phi)(0.0, x, y) * area;
        }
    }
    let boundary_sum = |rec: &TraceRecord| -> (f64, f64) {
        let mut s = 0.0;
        let mut mag = 0.0;
        for (k, entries) in rec.entries.iter().enumerate() {
            let tm = 0.5 * (traj.times[k] + traj.times[k + 1]);
            for e in entries {
                let [x, y] = grid.face_center(e.face);
                let term = e.value * (f.phi)(tm, x, y) * e.weight;
                s += term;
                mag += term.abs();
            }
        }
        (s, mag)
    };
    let (out_sum, out_mag) = boundary_sum(side.outflow);
    let (in_sum, in_mag) = boundary_sum(side.inflow);
    let lhs = interior + initial;
    let rhs = out_sum - in_sum;
    let scale = interior_mag + initial.abs() + out_mag + in_mag;
    (lhs - rhs).abs() / scale.max(1e-300)
}

/// Evaluate the three weak-form identities of the coupled system on a
/// trajectory: the two transport identities (with their boundary measures)
/// and the momentum identity against divergence-free test fields vanishing
/// on the boundary.
pub fn weak_form_residual(
    traj: &Trajectory,
    problem: &Problem,
    transport_fns: &[TransportTestFn],
    momentum_fns: &[MomentumTestFn],
) -> WeakFormReport {
    let grid = &problem.grid;
    let area = grid.cell_area();
    let rho_side = TransportSide {
        states: traj.states.iter().map(|s| &s.rho).collect(),
        initial: &traj.states[0].rho,
        inflow: &traj.rho_inflow,
        outflow: &traj.rho_outflow,
    };
    let nu_side = TransportSide {
        states: traj.states.iter().map(|s| &s.nu).collect(),
        initial: &traj.states[0].nu,
        inflow: &traj.nu_inflow,
        outflow: &traj.nu_outflow,
    };
    let rho_rows = transport_fns
        .iter()
        .map(|f| {
            (
                f.name.to_string(),
                transport_identity_residual(traj, &rho_side, grid, f),
            )
        })
        .collect();
    let nu_rows = transport_fns
        .iter()
        .map(|f| {
            (
                f.name.to_string(),
                transport_identity_residual(traj, &nu_side, grid, f),
            )
        })
        .collect();

    // momentum identity per step, worst over the trajectory
    let mut momentum_rows = Vec::new();
    for mf in momentum_fns {
        let mut worst = 0.0f64;
        for k in 0..traj.states.len() {
            let t = traj.times[k];
            let state = &traj.states[k];
            let mu = crate::fields::mixture_viscosity(state);
            let h = problem.drag.sample_cells(grid, t, &mu);
            let vel = &traj.velocities[k].vel;
            let dv = symmetric_gradient(grid, vel);
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            let mut mag = 0.0;
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    let [x, y] = grid.cell_center(i, j);
                    let psi = (mf.psi)(x, y);
                    let dpsi = (mf.d_psi)(x, y);
                    let vc = [
                        0.5 * (vel.u(i, j) + vel.u(i + 1, j)),
                        0.5 * (vel.v(i, j) + vel.v(i, j + 1)),
                    ];
                    let d = dv[grid.cell_index(i, j)];
                    let contraction = d[0][0] * dpsi[0][0]
                        + d[1][1] * dpsi[1][1]
                        + 2.0 * d[0][1] * dpsi[0][1];
                    let drag = h.get(i, j) * (vc[0] * psi[0] + vc[1] * psi[1]);
                    let visc = mu.get(i, j) * contraction;
                    let g = problem.boundary.g.eval(t, x, y);
                    let force = state.rho.get(i, j) * (g[0] * psi[0] + g[1] * psi[1]);
                    lhs += (drag + visc) * area;
                    rhs += force * area;
                    mag += (drag.abs() + visc.abs() + force.abs()) * area;
                }
            }
            let rel = (lhs - rhs).abs() / mag.max(1e-300);
            worst = worst.max(rel);
        }
        momentum_rows.push((mf.name.to_string(), worst));
    }
    WeakFormReport {
        rho_rows,
        nu_rows,
        momentum_rows,
    }
}

/// Cauchy stress tensor per cell: `T = −p I + 2 μ Dv`.
pub fn stress_field(
    grid: &StaggeredGrid,
    vp: &VelocityPressure,
    mu: &CellField,
) -> Vec<[[f64; 2]; 2]> {
    let dv = symmetric_gradient(grid, &vp.vel);
    let mut out = Vec::with_capacity(grid.n_cells());
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let p = vp.pressure.get(i, j);
            let m = mu.get(i, j);
            let d = dv[grid.cell_index(i, j)];
            out.push([
                [-p + 2.0 * m * d[0][0], 2.0 * m * d[0][1]],
                [2.0 * m * d[1][0], -p + 2.0 * m * d[1][1]],
            ]);
        }
    }
    out
}

/// Residual of the discrete energy identity with the boundary lift
/// `z = v − v_b`:
/// `Σ(h|z|² + μ Dz:Dz) = Σ(ρg·z − μ Dv_b:Dz − h v_b·z)`,
/// algebraic up to the solver tolerance.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual_rel: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn energy_report(
    grid: &StaggeredGrid,
    vp: &VelocityPressure,
    mu: &CellField,
    h_cells: &CellField,
    rho: &CellField,
    g: &(impl VectorSampler + ?Sized),
    b: &(impl VectorSampler + ?Sized),
    t: f64,
    tol: Tolerances,
    lift: Option<&FaceField>,
) -> Result<EnergyReport> {
    let v_b = match lift {
        Some(l) => l.clone(),
        None => lift_boundary(grid, b, t, tol)?.0,
    };
    let z = vp.vel.add_scaled(&v_b, -1.0);
    let walls_zero = WallTangential::zeros(grid);
    let walls_b = WallTangential::from_boundary(grid, b, t);
    let a_zz = energy_products(grid, mu, h_cells, &z, &walls_zero, &z, &walls_zero).total();
    let a_bz = energy_products(grid, mu, h_cells, &v_b, &walls_b, &z, &walls_zero).total();
    let forcing = face_forcing(grid, rho, g, t);
    let vol = grid.cell_area();
    let mut f_z = 0.0;
    for j in 0..grid.ny() {
        for i in 1..grid.nx() {
            f_z += forcing.u(i, j) * z.u(i, j) * vol;
        }
    }
    for j in 1..grid.ny() {
        for i in 0..grid.nx() {
            f_z += forcing.v(i, j) * z.v(i, j) * vol;
        }
    }
    let lhs = a_zz;
    let rhs = f_z - a_bz;
    // normalize against the full-field energy so a vanishing lifted part
    // (z ≈ 0 when the solution is the lift itself) stays well-posed
    let walls_full = &walls_b;
    let scale = energy_products(grid, mu, h_cells, &vp.vel, walls_full, &vp.vel, walls_full)
        .total()
        .abs()
        .max(lhs.abs())
        .max(rhs.abs())
        .max(1e-300);
    let residual_rel = (lhs - rhs).abs() / scale;
    Ok(EnergyReport {
        lhs,
        rhs,
        residual_rel,
    })
}
