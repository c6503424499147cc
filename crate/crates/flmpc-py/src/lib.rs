//! Python bindings for the flmpc toolkit: vehicle model, feedback
//! linearization geometry, terminal-set certification, trajectory
//! generation, and the closed-loop controller/simulator.

use nalgebra::{Matrix2, Vector2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flmpc::linearize::{
    constraint_polytope, output_transform, worst_case_disc, InternalState,
};
use flmpc::mpc::{ControlMode, Controller, MpcConfig};
use flmpc::sim::{run_closed_loop, PlantModel, PlantOptions};
use flmpc::terminal::{build_terminal_set, check_rpi, closed_loop_matrix, TerminalSet};
use flmpc::trajectory::{interpolate, parse_waypoints, InterpolateOptions, Waypoint};
use flmpc::vehicle::{is_admissible, step_discrete, CarInput, CarParams, CarState};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Physical parameters of the car-like vehicle.
#[pyclass(name = "CarParams", module = "flmpc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCarParams {
    inner: CarParams,
}

#[pymethods]
impl PyCarParams {
    #[new]
    #[pyo3(signature = (l, delta, v_max, omega_max, phi_max, ts))]
    fn new(l: f64, delta: f64, v_max: f64, omega_max: f64, phi_max: f64, ts: f64) -> PyResult<Self> {
        let inner = CarParams {
            l,
            delta,
            v_max,
            omega_max,
            phi_max,
            ts,
        };
        inner.validate().map_err(value_err)?;
        Ok(PyCarParams { inner })
    }

    /// Quanser QCar preset.
    #[staticmethod]
    fn qcar() -> Self {
        PyCarParams {
            inner: CarParams::qcar(),
        }
    }

    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn v_max(&self) -> f64 {
        self.inner.v_max
    }

    #[getter]
    fn omega_max(&self) -> f64 {
        self.inner.omega_max
    }

    #[getter]
    fn phi_max(&self) -> f64 {
        self.inner.phi_max
    }

    #[getter]
    fn ts(&self) -> f64 {
        self.inner.ts
    }

    fn __repr__(&self) -> String {
        format!(
            "CarParams(l={}, delta={}, v_max={}, omega_max={}, phi_max={}, ts={})",
            self.inner.l,
            self.inner.delta,
            self.inner.v_max,
            self.inner.omega_max,
            self.inner.phi_max,
            self.inner.ts
        )
    }
}

/// Vehicle pose: rear-axle position, heading, steering angle.
#[pyclass(name = "CarState", module = "flmpc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCarState {
    inner: CarState,
}

#[pymethods]
impl PyCarState {
    #[new]
    fn new(x: f64, y: f64, theta: f64, phi: f64) -> Self {
        PyCarState {
            inner: CarState { x, y, theta, phi },
        }
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }

    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }

    /// Cartesian position of the linearizing output point.
    fn output_point(&self, params: &PyCarParams) -> (f64, f64) {
        let z = output_transform(&self.inner, &params.inner);
        (z[0], z[1])
    }

    /// Forward-Euler step of the kinematic model.
    fn step(&self, input: &PyCarInput, params: &PyCarParams) -> PyResult<PyCarState> {
        let next = step_discrete(&self.inner, &input.inner, &params.inner).map_err(value_err)?;
        Ok(PyCarState { inner: next })
    }

    fn __repr__(&self) -> String {
        format!(
            "CarState(x={}, y={}, theta={}, phi={})",
            self.inner.x, self.inner.y, self.inner.theta, self.inner.phi
        )
    }
}

/// Vehicle command: longitudinal speed and steering rate.
#[pyclass(name = "CarInput", module = "flmpc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCarInput {
    inner: CarInput,
}

#[pymethods]
impl PyCarInput {
    #[new]
    fn new(v: f64, omega: f64) -> Self {
        PyCarInput {
            inner: CarInput { v, omega },
        }
    }

    #[getter]
    fn v(&self) -> f64 {
        self.inner.v
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    fn is_admissible(&self, params: &PyCarParams) -> bool {
        is_admissible(&self.inner, &params.inner)
    }

    fn __repr__(&self) -> String {
        format!("CarInput(v={}, omega={})", self.inner.v, self.inner.omega)
    }
}

/// Radius of the worst-case disc inscribed in every input polytope.
#[pyfunction]
fn worst_case_radius(params: &PyCarParams) -> f64 {
    worst_case_disc(&params.inner).r_hat
}

/// Vertices of the state-dependent input polytope at (theta, phi).
#[pyfunction]
fn input_polytope_vertices(
    theta: f64,
    phi: f64,
    params: &PyCarParams,
) -> PyResult<Vec<(f64, f64)>> {
    let eta = InternalState::new(theta, phi);
    let poly = constraint_polytope(&eta, &params.inner).map_err(value_err)?;
    Ok(poly.vertices.iter().map(|v| (v[0], v[1])).collect())
}

/// Terminal invariant set and its certificate scalars.
#[pyclass(name = "TerminalSet", module = "flmpc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyTerminalSet {
    inner: TerminalSet,
    params: CarParams,
}

#[pymethods]
impl PyTerminalSet {
    #[new]
    #[pyo3(signature = (params, k_gain=4.0, r_d=11.54))]
    fn new(params: &PyCarParams, k_gain: f64, r_d: f64) -> PyResult<Self> {
        let k = Matrix2::identity() * k_gain;
        let inner = build_terminal_set(k, &params.inner, r_d).map_err(value_err)?;
        Ok(PyTerminalSet {
            inner,
            params: params.inner,
        })
    }

    #[getter]
    fn s(&self) -> Vec<Vec<f64>> {
        let s = &self.inner.s;
        vec![
            vec![s[(0, 0)], s[(0, 1)]],
            vec![s[(1, 0)], s[(1, 1)]],
        ]
    }

    #[getter]
    fn a_cl(&self) -> Vec<Vec<f64>> {
        let a = closed_loop_matrix(&self.inner.k, &self.params);
        vec![
            vec![a[(0, 0)], a[(0, 1)]],
            vec![a[(1, 0)], a[(1, 1)]],
        ]
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn r_d(&self) -> f64 {
        self.inner.r_d
    }

    /// Evaluate the invariance certificate; returns (holds, margin).
    fn certify(&self) -> (bool, f64) {
        let report = check_rpi(&self.inner, &self.params);
        (report.holds, report.margin)
    }

    /// z' S z for an output-error vector.
    fn quadratic_form(&self, z1: f64, z2: f64) -> f64 {
        self.inner.quadratic_form(&Vector2::new(z1, z2))
    }
}

/// Sampled reference trajectory through a list of (x, y) waypoints.
#[pyclass(name = "Trajectory", module = "flmpc_py")]
struct PyTrajectory {
    inner: flmpc::trajectory::ReferenceTrajectory,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    #[pyo3(signature = (waypoints, params, average_speed=0.5, max_speed=None, r_d=None))]
    fn new(
        waypoints: Vec<(f64, f64)>,
        params: &PyCarParams,
        average_speed: f64,
        max_speed: Option<f64>,
        r_d: Option<f64>,
    ) -> PyResult<Self> {
        let wps: Vec<Waypoint> = waypoints
            .into_iter()
            .map(|(x, y)| Waypoint::new(x, y))
            .collect();
        let opts = InterpolateOptions {
            average_speed,
            max_speed,
            r_d_override: r_d,
        };
        let inner = interpolate(&wps, &params.inner, &opts).map_err(value_err)?;
        Ok(PyTrajectory { inner })
    }

    /// Load waypoints from a CSV file (`x,y[,t]` header).
    #[staticmethod]
    #[pyo3(signature = (path, params, average_speed=0.5, max_speed=None, r_d=None))]
    fn from_csv(
        path: &str,
        params: &PyCarParams,
        average_speed: f64,
        max_speed: Option<f64>,
        r_d: Option<f64>,
    ) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| value_err(format!("cannot read {path}: {e}")))?;
        let wps = parse_waypoints(text.as_bytes()).map_err(value_err)?;
        let opts = InterpolateOptions {
            average_speed,
            max_speed,
            r_d_override: r_d,
        };
        let inner = interpolate(&wps, &params.inner, &opts).map_err(value_err)?;
        Ok(PyTrajectory { inner })
    }

    #[getter]
    fn r_d(&self) -> f64 {
        self.inner.r_d
    }

    #[getter]
    fn max_speed(&self) -> f64 {
        self.inner.max_speed
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Reference pose at sample k.
    fn state(&self, k: usize) -> PyCarState {
        PyCarState {
            inner: self.inner.sample(k).state,
        }
    }

    /// Reference command at sample k.
    fn input(&self, k: usize) -> PyCarInput {
        PyCarInput {
            inner: self.inner.sample(k).input,
        }
    }
}

/// Dual-mode receding-horizon controller.
#[pyclass(name = "Controller", module = "flmpc_py")]
struct PyController {
    inner: Controller,
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (params, terminal, mode="dual_mode", horizon=10))]
    fn new(
        params: &PyCarParams,
        terminal: &PyTerminalSet,
        mode: &str,
        horizon: usize,
    ) -> PyResult<Self> {
        let mode = match mode {
            "dual_mode" => ControlMode::DualMode,
            "always_qp" => ControlMode::AlwaysQp,
            other => {
                return Err(value_err(format!(
                    "unknown mode `{other}` (dual_mode | always_qp)"
                )))
            }
        };
        let cfg = MpcConfig {
            n: horizon,
            ..MpcConfig::qcar(mode)
        };
        let inner =
            Controller::new(cfg, &params.inner, terminal.inner.clone()).map_err(value_err)?;
        Ok(PyController { inner })
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    /// One receding-horizon step against the reference window starting at
    /// sample k. Returns (input, terminal_mode).
    fn control_step(
        &mut self,
        state: &PyCarState,
        traj: &PyTrajectory,
        k: usize,
    ) -> PyResult<(PyCarInput, bool)> {
        let n = self.inner.cfg.n;
        let end = (k + n + 1).min(traj.inner.len());
        if k >= traj.inner.len() {
            return Err(value_err("sample index past the end of the trajectory"));
        }
        let (input, diag) = self
            .inner
            .control_step(&state.inner, &traj.inner.samples[k..end])
            .map_err(runtime_err)?;
        Ok((PyCarInput { inner: input }, diag.terminal_mode))
    }
}

/// Simulate the closed loop along a trajectory; returns a metrics dict.
#[pyfunction]
#[pyo3(signature = (traj, controller, initial, noise=0.0, seed=0))]
fn simulate(
    py: Python<'_>,
    traj: &PyTrajectory,
    controller: &mut PyController,
    initial: &PyCarState,
    noise: f64,
    seed: u64,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let plant = PlantOptions {
        model: PlantModel::Euler,
        noise,
        seed,
    };
    let result = run_closed_loop(&traj.inner, &mut controller.inner, &plant, &initial.inner)
        .map_err(runtime_err)?;
    let dict = pyo3::types::PyDict::new(py);
    let m = &result.metrics;
    dict.set_item("ise_xy", m.ise_xy)?;
    dict.set_item("itse_xy", m.itse_xy)?;
    dict.set_item("ise_theta", m.ise_theta)?;
    dict.set_item("itse_theta", m.itse_theta)?;
    dict.set_item("ise_phi", m.ise_phi)?;
    dict.set_item("itse_phi", m.itse_phi)?;
    dict.set_item("steps", result.trace.len())?;
    dict.set_item("infeasible_events", result.infeasible_events)?;
    dict.set_item("input_violations", result.input_violations)?;
    dict.set_item("steering_violations", result.steering_violations)?;
    let final_xy: Vec<f64> = result
        .trace
        .last()
        .map(|r| vec![r.state.x, r.state.y])
        .unwrap_or_default();
    dict.set_item("final_xy", final_xy)?;
    Ok(dict.unbind())
}

#[pymodule]
fn flmpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCarParams>()?;
    m.add_class::<PyCarState>()?;
    m.add_class::<PyCarInput>()?;
    m.add_class::<PyTerminalSet>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(worst_case_radius, m)?)?;
    m.add_function(wrap_pyfunction!(input_polytope_vertices, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
