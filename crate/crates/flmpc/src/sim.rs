//! Closed-loop simulation, tracking metrics, solve-time measurement, and a
//! brute-force receding-horizon oracle for testing.

use std::io::Write;
use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linearize::{input_matrix, InternalState};
use crate::mpc::{Controller, MpcError};
use crate::trajectory::{ReferenceSample, ReferenceTrajectory};
use crate::vehicle::{is_admissible, step_discrete, step_rk4, CarInput, CarParams, CarState, ModelError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("initial optimization infeasible; start closer to the reference or relax the setup")]
    InitialInfeasible,
    #[error("plant hit the steering singularity at t = {0:.4}")]
    PlantSingularity(f64),
    #[error(transparent)]
    Control(#[from] MpcError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Plant integration scheme used between controller samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    Euler,
    Rk4 { substeps: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct PlantOptions {
    pub model: PlantModel,
    /// Half-width of the uniform additive process noise on each state.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        PlantOptions {
            model: PlantModel::Euler,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// One closed-loop step of the trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub state: CarState,
    pub input: CarInput,
    pub z_err: Vector2<f64>,
    pub terminal_mode: bool,
    pub fallback: bool,
    pub qp_iterations: usize,
    pub solve_time: f64,
    pub cost: f64,
    pub quad_form: f64,
}

/// Tracking metrics: trapezoid-rule integrals of the squared (and
/// time-weighted squared) error signals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub ise_xy: f64,
    pub itse_xy: f64,
    pub ise_theta: f64,
    pub itse_theta: f64,
    pub ise_phi: f64,
    pub itse_phi: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub metrics: Metrics,
    /// QP infeasibility events handled by the shifted fallback.
    pub infeasible_events: usize,
    /// Applied inputs outside the velocity box (should stay zero).
    pub input_violations: usize,
    /// Plant states whose steering exceeded the physical bound.
    pub steering_violations: usize,
}

impl SimResult {
    pub fn trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "t,x,y,theta,phi,v,omega,ze1,ze2,mode,fallback,qp_iterations,solve_time,cost,quad_form"
        )?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.state.x,
                r.state.y,
                r.state.theta,
                r.state.phi,
                r.input.v,
                r.input.omega,
                r.z_err[0],
                r.z_err[1],
                if r.terminal_mode { "terminal" } else { "qp" },
                r.fallback as u8,
                r.qp_iterations,
                r.solve_time,
                r.cost,
                r.quad_form
            )?;
        }
        Ok(())
    }

    pub fn metrics_csv_header() -> &'static str {
        "label,ise_xy,itse_xy,ise_theta,itse_theta,ise_phi,itse_phi,infeasible_events,input_violations,steering_violations"
    }

    pub fn metrics_csv_row(&self, label: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            label,
            self.metrics.ise_xy,
            self.metrics.itse_xy,
            self.metrics.ise_theta,
            self.metrics.itse_theta,
            self.metrics.ise_phi,
            self.metrics.itse_phi,
            self.infeasible_events,
            self.input_violations,
            self.steering_violations
        )
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Trapezoid-rule ISE/ITSE of the traced errors against the reference.
pub fn metrics(trace: &[TraceRow], traj: &ReferenceTrajectory) -> Metrics {
    if trace.len() < 2 {
        return Metrics::default();
    }
    let errs: Vec<(f64, f64, f64, f64)> = trace
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let r = traj.sample(k);
            let exy = ((row.state.x - r.state.x).powi(2) + (row.state.y - r.state.y).powi(2))
                .sqrt();
            (
                row.t,
                exy,
                wrap_angle(row.state.theta - r.state.theta),
                wrap_angle(row.state.phi - r.state.phi),
            )
        })
        .collect();
    let mut m = Metrics::default();
    for pair in errs.windows(2) {
        let (t0, a0, b0, c0) = pair[0];
        let (t1, a1, b1, c1) = pair[1];
        let h = t1 - t0;
        m.ise_xy += 0.5 * h * (a0 * a0 + a1 * a1);
        m.itse_xy += 0.5 * h * (t0 * a0 * a0 + t1 * a1 * a1);
        m.ise_theta += 0.5 * h * (b0 * b0 + b1 * b1);
        m.itse_theta += 0.5 * h * (t0 * b0 * b0 + t1 * b1 * b1);
        m.ise_phi += 0.5 * h * (c0 * c0 + c1 * c1);
        m.itse_phi += 0.5 * h * (t0 * c0 * c0 + t1 * c1 * c1);
    }
    m
}

/// Run the controller against the simulated plant along the whole
/// trajectory. Deterministic for a fixed seed.
pub fn run_closed_loop(
    traj: &ReferenceTrajectory,
    controller: &mut Controller,
    plant: &PlantOptions,
    initial: &CarState,
) -> Result<SimResult, SimError> {
    let p = controller.cond.params;
    let mut rng = ChaCha8Rng::seed_from_u64(plant.seed);
    let mut state = *initial;
    let mut trace = Vec::with_capacity(traj.len());
    let mut infeasible_events = 0;
    let mut input_violations = 0;
    let mut steering_violations = 0;
    controller.reset();

    let n = controller.cfg.n;
    for k in 0..traj.len() {
        if state.phi.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(SimError::PlantSingularity(k as f64 * p.ts));
        }
        if state.phi.abs() > p.phi_max {
            steering_violations += 1;
        }
        let end = (k + n + 1).min(traj.len());
        let window = &traj.samples[k..end];
        let started = Instant::now();
        let step = controller.control_step(&state, window);
        let solve_time = started.elapsed().as_secs_f64();
        let (input, diag) = match step {
            Ok(v) => v,
            Err(MpcError::InitialInfeasible) => return Err(SimError::InitialInfeasible),
            Err(e) => return Err(e.into()),
        };
        if diag.fallback {
            infeasible_events += 1;
        }
        if !is_admissible(&input, &p) {
            input_violations += 1;
        }
        trace.push(TraceRow {
            t: k as f64 * p.ts,
            state,
            input,
            z_err: diag.z_err,
            terminal_mode: diag.terminal_mode,
            fallback: diag.fallback,
            qp_iterations: diag.qp_iterations,
            solve_time,
            cost: diag.cost,
            quad_form: diag.quad_form,
        });

        state = match plant.model {
            PlantModel::Euler => step_discrete(&state, &input, &p)?,
            PlantModel::Rk4 { substeps } => step_rk4(&state, &input, &p, substeps)?,
        };
        if plant.noise > 0.0 {
            state.x += rng.random_range(-plant.noise..plant.noise);
            state.y += rng.random_range(-plant.noise..plant.noise);
            state.theta += rng.random_range(-plant.noise..plant.noise);
            state.phi += rng.random_range(-plant.noise..plant.noise);
        }
    }
    let metrics = metrics(&trace, traj);
    Ok(SimResult {
        trace,
        metrics,
        infeasible_events,
        input_violations,
        steering_violations,
    })
}

/// Best input sequence on a uniform grid over the velocity box, scored by
/// the nonlinear rollout of the linearized tracking cost. Testing oracle
/// only: cost grows as grid^(2 N).
pub struct OracleRun {
    pub inputs: Vec<CarInput>,
    pub cost: f64,
}

/// Rollout cost of a fixed input sequence on the nonlinear plant.
pub fn nonlinear_rollout_cost(
    q0: &CarState,
    inputs: &[CarInput],
    refs: &[ReferenceSample],
    p: &CarParams,
    q_weight: &nalgebra::Matrix2<f64>,
    r_weight: &nalgebra::Matrix2<f64>,
) -> Result<f64, SimError> {
    let mut state = *q0;
    let mut cost = 0.0;
    for (i, u) in inputs.iter().enumerate() {
        let r = &refs[i.min(refs.len() - 1)];
        let eta = InternalState::from_state(&state);
        let m = input_matrix(&eta, p).map_err(MpcError::from)?;
        let w = m * Vector2::new(u.v, u.omega);
        let wt = w - r.w;
        state = step_discrete(&state, u, p)?;
        let rn = &refs[(i + 1).min(refs.len() - 1)];
        let z = crate::linearize::output_transform(&state, p);
        let ze = z - rn.z;
        cost += 0.5 * ((q_weight * ze).dot(&ze) + (r_weight * wt).dot(&wt));
    }
    Ok(cost)
}

/// Exhaustively search input sequences of length `n` over a `grid x grid`
/// lattice of the velocity box, optionally seeded with extra candidate
/// sequences (e.g. a controller's plan) that join the comparison.
pub fn exhaustive_nmpc_oracle(
    q0: &CarState,
    refs: &[ReferenceSample],
    grid: usize,
    n: usize,
    p: &CarParams,
    q_weight: &nalgebra::Matrix2<f64>,
    r_weight: &nalgebra::Matrix2<f64>,
    extra: &[Vec<CarInput>],
) -> Result<OracleRun, SimError> {
    assert!(n >= 1 && n <= 3, "oracle horizon capped at 3");
    assert!(grid >= 2);
    let axis = |max: f64| -> Vec<f64> {
        (0..grid)
            .map(|i| -max + 2.0 * max * i as f64 / (grid - 1) as f64)
            .collect()
    };
    let vs = axis(p.v_max);
    let os = axis(p.omega_max);
    let mut best: Option<OracleRun> = None;
    let mut seq = vec![CarInput::new(0.0, 0.0); n];
    let total = (grid * grid).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            let iv = c % grid;
            c /= grid;
            let io = c % grid;
            c /= grid;
            *s = CarInput::new(vs[iv], os[io]);
        }
        let cost = nonlinear_rollout_cost(q0, &seq, refs, p, q_weight, r_weight)?;
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(OracleRun {
                inputs: seq.clone(),
                cost,
            });
        }
    }
    for cand in extra {
        let cost = nonlinear_rollout_cost(q0, cand, refs, p, q_weight, r_weight)?;
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(OracleRun {
                inputs: cand.clone(),
                cost,
            });
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Wall-clock statistics of `control_step` alone over repeated runs of a
/// trajectory. `repetitions = 0` yields empty statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimingStats {
    pub steps: usize,
    pub avg: f64,
    pub max: f64,
}

pub fn timing_run(
    controller: &mut Controller,
    traj: &ReferenceTrajectory,
    plant: &PlantOptions,
    initial: &CarState,
    repetitions: usize,
) -> Result<TimingStats, SimError> {
    let mut stats = TimingStats::default();
    let mut total = 0.0;
    for _ in 0..repetitions {
        let result = run_closed_loop(traj, controller, plant, initial)?;
        for row in &result.trace {
            stats.steps += 1;
            total += row.solve_time;
            stats.max = stats.max.max(row.solve_time);
        }
    }
    if stats.steps > 0 {
        stats.avg = total / stats.steps as f64;
    }
    Ok(stats)
}
