//! Trajectory-tracking control for input-constrained car-like vehicles.
//!
//! The toolkit covers the full pipeline: waypoint interpolation into smooth
//! references (`trajectory`), exact input-output linearization of the
//! kinematic bicycle (`linearize`), terminal-set certification (`terminal`),
//! a condensed dual-mode MPC (`mpc`), a dense active-set QP solver (`qp`),
//! and a closed-loop simulation harness with tracking metrics (`sim`).

pub mod linearize;
pub mod mpc;
pub mod oracle;
pub mod qp;
pub mod sim;
pub mod spline;
pub mod terminal;
pub mod trajectory;
pub mod vehicle;

pub use linearize::{
    constraint_polytope, input_matrix, input_matrix_inverse, output_transform, worst_case_disc,
    InputPolytope, InternalState, WorstCaseDisc,
};
pub use mpc::{
    assemble_step_qp, build_condensed, build_polygons, CondensedQp, ControlMode, Controller,
    MpcConfig, PolygonApprox, StepDiagnostics,
};
pub use qp::{QpProblem, QpSolution, QpSolver};
pub use sim::{
    metrics, run_closed_loop, timing_run, Metrics, PlantModel, PlantOptions, SimResult, TraceRow,
};
pub use terminal::{build_terminal_set, check_rpi, terminal_control, RpiCheck, TerminalSet};
pub use trajectory::{
    interpolate, linearized_reference, parse_waypoints, reference_input, reference_state,
    InterpolateOptions, ReferenceSample, ReferenceTrajectory, Waypoint,
};
pub use vehicle::{step_discrete, step_rk4, CarInput, CarParams, CarState};
