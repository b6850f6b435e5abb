//! Coupled drivers.
//!
//! Marching mode solves the quasi-static momentum system from the current
//! density/viscosity at each step and then advects both fields with the
//! resulting velocity. Fixed-point mode freezes a whole space-time guess of
//! the coefficients, solves the momentum system at every node of a shared
//! time grid, transports the fields over the full horizon, and iterates that
//! map until successive iterates stop moving in the space-time L² norm.

use crate::brinkman::SolveStats;
use crate::fields::{
    face_forcing, l2_norm, mixture_viscosity, BoundaryData, CellField, DragModel, MixtureState,
    VelocityPressure,
};
use crate::grid::{classify_boundary, BoundaryPartition, StaggeredGrid};
use crate::transport::{advect, cfl_dt, max_monotone_dt, StepTraces, TraceRecord};
use crate::{Error, Result, Tolerances};

/// Everything needed to run one problem: geometry, data samplers, drag
/// model, admissible bounds and numerical controls.
pub struct Problem {
    pub grid: StaggeredGrid,
    pub bounds: crate::fields::AdmissibleBounds,
    pub boundary: BoundaryData,
    pub drag: DragModel,
    pub rho0: Box<dyn crate::fields::Sampler>,
    pub nu0: Box<dyn crate::fields::Sampler>,
    pub horizon: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub tol: Tolerances,
}

impl Problem {
    pub fn initial_state(&self) -> Result<MixtureState> {
        let rho = CellField::from_sampler(&self.grid, self.rho0.as_ref(), 0.0);
        let nu = CellField::from_sampler(&self.grid, self.nu0.as_ref(), 0.0);
        MixtureState::new(rho, nu, self.bounds, self.tol.tau_mp)
    }

    pub fn partition_at(&self, t: f64) -> BoundaryPartition {
        classify_boundary(&self.grid, self.boundary.b.as_ref(), t, self.tol.tau_n)
    }
}

/// Solve the momentum system for the coefficients of `state` at time `t`.
pub fn solve_momentum(
    problem: &Problem,
    state: &MixtureState,
    t: f64,
    p_warm: Option<&CellField>,
) -> Result<(VelocityPressure, SolveStats)> {
    let mu = mixture_viscosity(state);
    let h = problem.drag.sample_cells(&problem.grid, t, &mu);
    let forcing = face_forcing(&problem.grid, &state.rho, problem.boundary.g.as_ref(), t);
    let system = crate::brinkman::assemble(
        &problem.grid,
        &mu,
        &h,
        &forcing,
        problem.boundary.b.as_ref(),
        t,
        problem.tol,
    )?;
    system.solve_warm(p_warm)
}

/// Result of advancing both transported fields over one step.
pub struct FieldAdvance {
    pub state: MixtureState,
    pub rho_traces: StepTraces,
    pub nu_traces: StepTraces,
}

/// Advect density and viscosity with a given velocity over `dt`, checking
/// that the result stays in the admissible set.
pub fn advance_fields(
    problem: &Problem,
    state: &MixtureState,
    vp: &VelocityPressure,
    t: f64,
    dt: f64,
) -> Result<FieldAdvance> {
    let partition = problem.partition_at(t);
    let (rho, rho_traces) = advect(
        &problem.grid,
        &state.rho,
        &vp.vel,
        dt,
        problem.boundary.rho_b.as_ref(),
        &partition,
        t,
    )?;
    let (nu, nu_traces) = advect(
        &problem.grid,
        &state.nu,
        &vp.vel,
        dt,
        problem.boundary.nu_b.as_ref(),
        &partition,
        t,
    )?;
    let state = MixtureState::new(rho, nu, state.bounds, problem.tol.tau_mp)?;
    Ok(FieldAdvance {
        state,
        rho_traces,
        nu_traces,
    })
}

/// One coupled step: momentum solve from the current state, then transport.
pub fn step(
    problem: &Problem,
    state: &MixtureState,
    t: f64,
    dt: f64,
) -> Result<(MixtureState, VelocityPressure, StepTraces, StepTraces)> {
    let (vp, _stats) = solve_momentum(problem, state, t, None)?;
    let adv = advance_fields(problem, state, &vp, t, dt)?;
    Ok((adv.state, vp, adv.rho_traces, adv.nu_traces))
}

#[derive(Debug, Clone)]
pub struct StepSummary {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub solver: SolveStats,
}

/// Discrete space-time trajectory: states and velocities at every time node,
/// boundary trace records, per-step solver summaries.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MixtureState>,
    pub velocities: Vec<VelocityPressure>,
    pub rho_inflow: TraceRecord,
    pub rho_outflow: TraceRecord,
    pub nu_inflow: TraceRecord,
    pub nu_outflow: TraceRecord,
    pub summaries: Vec<StepSummary>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &MixtureState {
        self.states.last().expect("trajectory holds at least t = 0")
    }

    /// Piecewise-linear interpolation of the transported fields in time.
    pub fn fields_at(&self, t: f64) -> (CellField, CellField) {
        let times = &self.times;
        if t <= times[0] {
            let s = &self.states[0];
            return (s.rho.clone(), s.nu.clone());
        }
        if t >= *times.last().unwrap() {
            let s = self.final_state();
            return (s.rho.clone(), s.nu.clone());
        }
        let k = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return (self.states[k].rho.clone(), self.states[k].nu.clone()),
            Err(k) => k - 1,
        };
        let w = (t - times[k]) / (times[k + 1] - times[k]);
        let lerp = |a: &CellField, b: &CellField| -> CellField {
            let mut out = a.clone();
            for (o, y) in out.iter_mut().zip(b.iter()) {
                *o += w * (y - *o);
            }
            out
        };
        (
            lerp(&self.states[k].rho, &self.states[k + 1].rho),
            lerp(&self.states[k].nu, &self.states[k + 1].nu),
        )
    }
}

/// March the coupled system over `[0, horizon]` with velocity-adaptive
/// steps. The step is capped by the face-speed formula, by the sharp
/// monotonicity bound, by `dt_max` and by the remaining time.
pub fn run_march(problem: &Problem) -> Result<Trajectory> {
    let mut state = problem.initial_state()?;
    let mut t = 0.0;
    let horizon = problem.horizon;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
        velocities: Vec::new(),
        rho_inflow: TraceRecord::default(),
        rho_outflow: TraceRecord::default(),
        nu_inflow: TraceRecord::default(),
        nu_outflow: TraceRecord::default(),
        summaries: Vec::new(),
    };
    let mut p_warm: Option<CellField> = None;
    let mut step_idx = 0usize;
    let max_steps = 2_000_000usize;
    let time_eps = 1e-12 * horizon.max(1.0);
    loop {
        let (vp, stats) = solve_momentum(problem, &state, t, p_warm.as_ref()).map_err(|e| {
            Error::Step {
                step: step_idx,
                time: t,
                source: Box::new(e),
            }
        })?;
        p_warm = Some(vp.pressure.clone());
        if t + time_eps >= horizon {
            traj.velocities.push(vp);
            break;
        }
        let mut dt = cfl_dt(&problem.grid, &vp.vel, problem.cfl, problem.dt_max)
            .min(max_monotone_dt(&problem.grid, &vp.vel));
        dt = dt.min(horizon - t);
        if !(dt > 0.0) {
            return Err(Error::Step {
                step: step_idx,
                time: t,
                source: Box::new(Error::Config {
                    field: "dt".into(),
                    message: format!("step collapsed to {dt}"),
                }),
            });
        }
        let adv = advance_fields(problem, &state, &vp, t, dt).map_err(|e| Error::Step {
            step: step_idx,
            time: t,
            source: Box::new(e),
        })?;
        traj.rho_inflow.push(t, adv.rho_traces.inflow);
        traj.rho_outflow.push(t, adv.rho_traces.outflow);
        traj.nu_inflow.push(t, adv.nu_traces.inflow);
        traj.nu_outflow.push(t, adv.nu_traces.outflow);
        traj.summaries.push(StepSummary {
            step: step_idx,
            t,
            dt,
            solver: stats,
        });
        traj.velocities.push(vp);
        state = adv.state;
        t += dt;
        traj.times.push(t);
        traj.states.push(state.clone());
        step_idx += 1;
        if step_idx > max_steps {
            return Err(Error::Step {
                step: step_idx,
                time: t,
                source: Box::new(Error::Config {
                    field: "max_steps".into(),
                    message: "marching exceeded the step guard".into(),
                }),
            });
        }
    }
    Ok(traj)
}

/// `sqrt(∫₀ᵀ ‖f(t)‖²_{L²(Ω)} dt)` by the trapezoidal rule over the given
/// nodes.
pub fn space_time_l2(times: &[f64], fields: &[CellField], grid: &StaggeredGrid) -> f64 {
    assert_eq!(times.len(), fields.len());
    if times.len() < 2 {
        return 0.0;
    }
    let norms_sq: Vec<f64> = fields
        .iter()
        .map(|f| {
            let n = l2_norm(f, grid);
            n * n
        })
        .collect();
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        acc += 0.5 * (norms_sq[k] + norms_sq[k + 1]) * (times[k + 1] - times[k]);
    }
    acc.sqrt()
}

/// Distance between two field sequences on a shared time grid in the norm
/// `‖ρ‖_{L²(Ω_T)} + ‖ν‖_{L²(Ω_T)}`.
pub fn guess_distance(
    times: &[f64],
    rho_a: &[CellField],
    nu_a: &[CellField],
    rho_b: &[CellField],
    nu_b: &[CellField],
    grid: &StaggeredGrid,
) -> f64 {
    let diff = |xs: &[CellField], ys: &[CellField]| -> Vec<CellField> {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let mut d = x.clone();
                for (dv, yv) in d.iter_mut().zip(y.iter()) {
                    *dv -= yv;
                }
                d
            })
            .collect()
    };
    space_time_l2(times, &diff(rho_a, rho_b), grid) + space_time_l2(times, &diff(nu_a, nu_b), grid)
}

/// Distance between two trajectories on the same grid, sampled at uniform
/// quadrature times with linear interpolation in time.
pub fn trajectory_distance(
    a: &Trajectory,
    b: &Trajectory,
    n_samples: usize,
    grid: &StaggeredGrid,
) -> f64 {
    let t_end = a.times.last().unwrap().min(*b.times.last().unwrap());
    let times: Vec<f64> = (0..n_samples)
        .map(|q| t_end * q as f64 / (n_samples - 1) as f64)
        .collect();
    let mut rho_a = Vec::new();
    let mut nu_a = Vec::new();
    let mut rho_b = Vec::new();
    let mut nu_b = Vec::new();
    for &t in &times {
        let (ra, na) = a.fields_at(t);
        let (rb, nb) = b.fields_at(t);
        rho_a.push(ra);
        nu_a.push(na);
        rho_b.push(rb);
        nu_b.push(nb);
    }
    guess_distance(&times, &rho_a, &nu_a, &rho_b, &nu_b, grid)
}

/// One application of the fixed-point map: velocities from the frozen guess
/// coefficients at every node of the shared time grid, then transport of the
/// actual fields with those velocities.
pub fn picard_map(
    problem: &Problem,
    times: &[f64],
    guess_rho: &[CellField],
    guess_nu: &[CellField],
) -> Result<Trajectory> {
    assert!(!times.is_empty() && guess_rho.len() == times.len() && guess_nu.len() == times.len());
    // guess must lie in the admissible set
    for (k, (r, n)) in guess_rho.iter().zip(guess_nu).enumerate() {
        MixtureState::new(r.clone(), n.clone(), problem.bounds, problem.tol.tau_mp).map_err(
            |e| Error::Step {
                step: k,
                time: times[k],
                source: Box::new(e),
            },
        )?;
    }
    let mut state = problem.initial_state()?;
    let mut traj = Trajectory {
        times: vec![times[0]],
        states: vec![state.clone()],
        velocities: Vec::new(),
        rho_inflow: TraceRecord::default(),
        rho_outflow: TraceRecord::default(),
        nu_inflow: TraceRecord::default(),
        nu_outflow: TraceRecord::default(),
        summaries: Vec::new(),
    };
    let mut p_warm: Option<CellField> = None;
    for k in 0..times.len() {
        let t = times[k];
        let coeff = MixtureState::new_unchecked(
            guess_rho[k].clone(),
            guess_nu[k].clone(),
            problem.bounds,
        );
        let (vp, stats) =
            solve_momentum(problem, &coeff, t, p_warm.as_ref()).map_err(|e| Error::Step {
                step: k,
                time: t,
                source: Box::new(e),
            })?;
        p_warm = Some(vp.pressure.clone());
        if k + 1 < times.len() {
            let dt = times[k + 1] - t;
            let adv = advance_fields(problem, &state, &vp, t, dt).map_err(|e| Error::Step {
                step: k,
                time: t,
                source: Box::new(e),
            })?;
            traj.rho_inflow.push(t, adv.rho_traces.inflow);
            traj.rho_outflow.push(t, adv.rho_traces.outflow);
            traj.nu_inflow.push(t, adv.nu_traces.inflow);
            traj.nu_outflow.push(t, adv.nu_traces.outflow);
            traj.summaries.push(StepSummary {
                step: k,
                t,
                dt,
                solver: stats,
            });
            state = adv.state;
            traj.times.push(times[k + 1]);
            traj.states.push(state.clone());
        }
        traj.velocities.push(vp);
    }
    Ok(traj)
}

/// Convergence record of the fixed-point iteration.
pub struct PicardHistory {
    pub iterates: Vec<Trajectory>,
    pub distances: Vec<f64>,
    pub converged: bool,
    pub k_final: usize,
    /// Shared time grid the iteration ran on.
    pub times: Vec<f64>,
}

/// Build the frozen shared time grid from a velocity pre-pass with the
/// initial data held constant in time.
fn shared_time_grid(problem: &Problem, refine: usize) -> Result<Vec<f64>> {
    let horizon = problem.horizon;
    if horizon <= 0.0 {
        return Ok(vec![0.0]);
    }
    let state = problem.initial_state()?;
    let mut dt = problem.dt_max.min(horizon);
    for frac in [0.0, 0.5, 1.0] {
        let t = horizon * frac;
        let (vp, _) = solve_momentum(problem, &state, t, None)?;
        let cand = cfl_dt(&problem.grid, &vp.vel, problem.cfl, problem.dt_max)
            .min(max_monotone_dt(&problem.grid, &vp.vel));
        dt = dt.min(cand);
    }
    // safety margin: mid-iteration velocities may exceed the pre-pass probe
    let safety = 1.5 * (1 << refine) as f64;
    let n = ((horizon / dt) * safety).ceil().max(1.0) as usize;
    Ok((0..=n).map(|k| horizon * k as f64 / n as f64).collect())
}

/// Fixed-point iteration on the coupled system. Starts from the initial
/// data held constant in time, applies the map until the space-time L²
/// distance of successive iterates falls under `tol_p` or `max_iter` is
/// reached. Non-convergence is reported in the history, not as an error.
/// `relaxation = 1` is the plain iteration.
pub fn schauder_solve(
    problem: &Problem,
    tol_p: f64,
    max_iter: usize,
    relaxation: f64,
) -> Result<(Trajectory, PicardHistory)> {
    assert!(relaxation > 0.0 && relaxation <= 1.0);
    let mut refine = 0usize;
    'rebuild: loop {
        let times = shared_time_grid(problem, refine)?;
        let n_nodes = times.len();
        let init = problem.initial_state()?;
        let mut guess_rho: Vec<CellField> = (0..n_nodes).map(|_| init.rho.clone()).collect();
        let mut guess_nu: Vec<CellField> = (0..n_nodes).map(|_| init.nu.clone()).collect();
        let mut history = PicardHistory {
            iterates: Vec::new(),
            distances: Vec::new(),
            converged: false,
            k_final: 0,
            times: times.clone(),
        };
        for k in 1..=max_iter {
            let traj = match picard_map(problem, &times, &guess_rho, &guess_nu) {
                Ok(t) => t,
                Err(e) => {
                    let cfl_hit = matches!(
                        &e,
                        Error::Step { source, .. }
                            if matches!(**source, Error::CflViolation { .. })
                    );
                    if cfl_hit && refine < 3 {
                        // frozen grid too coarse for an intermediate iterate
                        refine += 1;
                        continue 'rebuild;
                    }
                    return Err(e);
                }
            };
            let new_rho: Vec<CellField> = traj.states.iter().map(|s| s.rho.clone()).collect();
            let new_nu: Vec<CellField> = traj.states.iter().map(|s| s.nu.clone()).collect();
            let d = guess_distance(
                &times,
                &new_rho,
                &new_nu,
                &guess_rho,
                &guess_nu,
                &problem.grid,
            );
            history.distances.push(d);
            history.k_final = k;
            let converged = d <= tol_p;
            if relaxation >= 1.0 {
                guess_rho = new_rho;
                guess_nu = new_nu;
            } else {
                for (g, n) in guess_rho.iter_mut().zip(&new_rho) {
                    for (gv, nv) in g.iter_mut().zip(n.iter()) {
                        *gv += relaxation * (nv - *gv);
                    }
                }
                for (g, n) in guess_nu.iter_mut().zip(&new_nu) {
                    for (gv, nv) in g.iter_mut().zip(n.iter()) {
                        *gv += relaxation * (nv - *gv);
                    }
                }
            }
            history.iterates.push(traj);
            if converged {
                history.converged = true;
                break;
            }
        }
        let final_traj = history.iterates.last().cloned().ok_or_else(|| Error::Config {
            field: "max_iter".into(),
            message: "fixed-point iteration ran zero iterations".into(),
        })?;
        return Ok((final_traj, history));
    }
}
