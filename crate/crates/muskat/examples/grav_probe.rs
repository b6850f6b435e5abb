use muskat::coupler::*;
use muskat::fields::*;
use muskat::grid::build_grid;
use muskat::Tolerances;

fn main() {
    let grid = build_grid([0.0, 0.0], [1.0, 1.0], 16, 16).unwrap();
    let p = Problem {
        grid,
        bounds: AdmissibleBounds::new(1.0, 2.0, 1.0, 1.0).unwrap(),
        boundary: BoundaryData::new(
            |_t: f64, _x: f64, _y: f64| [0.0, 0.0],
            |_t: f64, _x: f64, _y: f64| [0.0, -1.0],
            |_t: f64, _x: f64, _y: f64| 1.0,
            |_t: f64, _x: f64, _y: f64| 1.0,
        ),
        drag: DragModel::constant(1.0),
        rho0: Box::new(|_t: f64, x: f64, y: f64| if y > 0.5 + 0.2 * (x - 0.5) { 2.0 } else { 1.0 }),
        nu0: Box::new(|_t: f64, _x: f64, _y: f64| 1.0),
        horizon: 0.4,
        cfl: 0.45,
        dt_max: 0.05,
        tol: Tolerances::default(),
    };
    let state = p.initial_state().unwrap();
    let (vp, stats) = solve_momentum(&p, &state, 0.0, None).unwrap();
    println!("max|v| = {:e}, div_inf = {:e}, outer = {}, inner = {}",
        vp.vel.max_abs(), stats.div_inf, stats.outer_iterations, stats.inner_iterations);
    // per-component peaks
    let mu = vp.vel.u_data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mv = vp.vel.v_data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    println!("max|u| = {mu:e}, max|v_y| = {mv:e}");
}
