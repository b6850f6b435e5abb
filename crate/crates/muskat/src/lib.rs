//! Two-phase porous-media flow on a staggered grid.
//!
//! The model couples a quasi-static momentum balance of Brinkman type,
//!
//! ```text
//! h(t,x,ρν) v − div(μ Dv) = −∇p + ρ g,   div v = 0,   μ = ρν,
//! ```
//!
//! with pure advection of the mixture density ρ and kinematic viscosity ν,
//! driven by Dirichlet velocity data on the whole boundary. Where the
//! boundary velocity points inward the transported fields take prescribed
//! inflow values; where it points outward their traces are recorded against
//! the flux measure.
//!
//! Modules mirror the pipeline: [`grid`] builds the MAC geometry and discrete
//! operators, [`fields`] holds field containers and norms, [`brinkman`]
//! assembles and solves the saddle-point momentum system, [`transport`]
//! advances scalars by conservative upwinding, [`coupler`] drives time
//! marching and the Picard fixed-point mode, [`diagnostics`] turns the
//! model's qualitative guarantees into runtime checks, and [`scenario_io`]
//! parses scenario files and writes snapshots, traces and reports.

pub mod brinkman;
pub mod coupler;
pub mod diagnostics;
pub mod fields;
pub mod grid;
pub mod linalg;
pub mod scenario_io;
pub mod transport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value; `field` names the offending entry.
    #[error("configuration error: {field}: {message}")]
    Config { field: String, message: String },

    /// Coefficient field violates the coercivity requirement (μ must be
    /// strictly positive, drag nonnegative).
    #[error("coercivity error: {0}")]
    Coercivity(String),

    /// Boundary velocity has nonzero net flux beyond tolerance, so no
    /// divergence-free extension exists.
    #[error("incompatible boundary data: net boundary flux {net:e} exceeds {tol:e}")]
    Incompatible { net: f64, tol: f64 },

    /// Iterative solver exceeded its iteration cap.
    #[error("solver failure: {context} ({} residuals recorded, last {:e})",
            history.len(), history.last().copied().unwrap_or(f64::NAN))]
    SolverFailure { context: String, history: Vec<f64> },

    /// The Schur operator lost positive definiteness; the assembled system
    /// has a spurious pressure mode.
    #[error("assembly defect: pressure operator is not positive definite on mean-zero fields")]
    IndefinitePressureOperator,

    /// Time step too large for the monotone update.
    #[error("time step {dt:e} rejected; largest admissible step is {admissible_dt:e}")]
    CflViolation { dt: f64, admissible_dt: f64 },

    /// Input field outside the admissible bounds.
    #[error("state outside admissible bounds: {0}")]
    OutOfBounds(String),

    /// Error while executing one time step; wraps the underlying failure.
    #[error("step {step} at t = {time}: {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    /// Scenario text failed to parse.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// File I/O failure with path context.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Numerical tolerances shared across the solver stack.
///
/// Defaults sit well below the truncation error of the first/second-order
/// discretizations so they never mask scheme behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative momentum-residual target of the saddle solve.
    pub tau_solve: f64,
    /// Absolute max-norm bound on the discrete divergence of solved velocities.
    pub tau_div: f64,
    /// Absolute bound on the net boundary flux of admissible boundary data.
    pub tau_comp: f64,
    /// Slack when checking admissible-set membership of transported fields.
    pub tau_mp: f64,
    /// Dead-band on the boundary-normal velocity when classifying faces.
    pub tau_n: f64,
    /// Convergence threshold of the Picard iteration (space-time L2 distance).
    pub tol_picard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tau_solve: 1e-9,
            tau_div: 1e-8,
            tau_comp: 1e-10,
            tau_mp: 1e-8,
            tau_n: 1e-12,
            tol_picard: 1e-6,
        }
    }
}
