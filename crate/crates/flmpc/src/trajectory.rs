//! Reference trajectory generation: quintic-spline interpolation of sparse
//! waypoints, flat-output differentiation into full state/input references,
//! and the transformed reference used by the output-space controller.

use std::io::{BufRead, Write};

use nalgebra::Vector2;
use thiserror::Error;

use crate::linearize::{input_matrix, output_transform, InternalState};
use crate::spline::{QuinticSpline, SplineError};
use crate::vehicle::{CarInput, CarParams, CarState};

/// Speeds below this are treated as a stall when differentiating the path.
pub const STALL_TOL: f64 = 1e-6;

/// Safety factor applied to the peak transformed reference input when sizing
/// the disturbance bound automatically.
pub const R_D_MARGIN: f64 = 1.05;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} coincide")]
    DegenerateSegment(usize, usize),
    #[error("waypoint times must be strictly increasing (index {0})")]
    NonMonotonicTimes(usize),
    #[error("average speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("reference stalls at t = {t:.4} (speed {speed:.3e})")]
    Stall { t: f64, speed: f64 },
    #[error("reference speed {speed:.4} at t = {t:.4} exceeds the limit {limit:.4}")]
    InfeasibleSpeed { t: f64, speed: f64, limit: f64 },
    #[error("spline construction failed: {0}")]
    Spline(#[from] SplineError),
    #[error("waypoint file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A sparse path point; `t` is an optional prescribed crossing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub t: Option<f64>,
}

impl Waypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Waypoint { x, y, t: None }
    }

    pub fn timed(x: f64, y: f64, t: f64) -> Self {
        Waypoint { x, y, t: Some(t) }
    }
}

/// Flat output (rear-axle position) and its first three time derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatSample {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub ddx: f64,
    pub ddy: f64,
    pub dddx: f64,
    pub dddy: f64,
}

/// One reference sample: flat output, full state, vehicle input, and the
/// transformed output-space pair (z_r, w_r).
#[derive(Debug, Clone)]
pub struct ReferenceSample {
    pub t: f64,
    pub flat: FlatSample,
    pub state: CarState,
    pub input: CarInput,
    pub z: Vector2<f64>,
    pub w: Vector2<f64>,
}

/// Sampled reference trajectory at the controller period.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub samples: Vec<ReferenceSample>,
    pub ts: f64,
    /// Disturbance bound covering the transformed reference input.
    pub r_d: f64,
    /// Peak two-norm of w_r over the sampling grid.
    pub max_w_norm: f64,
    /// Peak reference speed over the sampling grid.
    pub max_speed: f64,
    /// Samples where the reference steering angle exceeds the vehicle bound.
    pub steering_violations: usize,
}

impl ReferenceTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at step k, clamped to the final sample past the end.
    pub fn sample(&self, k: usize) -> &ReferenceSample {
        &self.samples[k.min(self.samples.len() - 1)]
    }

    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# ts = {}, r_d = {}", self.ts, self.r_d)?;
        writeln!(
            out,
            "t,x,y,dx,dy,ddx,ddy,dddx,dddy,x_r,y_r,theta_r,phi_r,v_r,omega_r,z1_r,z2_r,w1_r,w2_r"
        )?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.flat.x,
                s.flat.y,
                s.flat.dx,
                s.flat.dy,
                s.flat.ddx,
                s.flat.ddy,
                s.flat.dddx,
                s.flat.dddy,
                s.state.x,
                s.state.y,
                s.state.theta,
                s.state.phi,
                s.input.v,
                s.input.omega,
                s.z[0],
                s.z[1],
                s.w[0],
                s.w[1]
            )?;
        }
        Ok(())
    }
}

/// Heading and steering angle consistent with a differentiable rear-axle path.
pub fn reference_state(flat: &FlatSample, l: f64) -> Result<(f64, f64), TrajectoryError> {
    let v = (flat.dx * flat.dx + flat.dy * flat.dy).sqrt();
    if v <= STALL_TOL {
        return Err(TrajectoryError::Stall { t: f64::NAN, speed: v });
    }
    let theta = (flat.dy / v).atan2(flat.dx / v);
    let phi = (l * (flat.ddy * flat.dx - flat.ddx * flat.dy) / (v * v * v)).atan();
    Ok((theta, phi))
}

/// Speed and steering rate consistent with a differentiable rear-axle path.
pub fn reference_input(flat: &FlatSample, l: f64) -> Result<(f64, f64), TrajectoryError> {
    let v2 = flat.dx * flat.dx + flat.dy * flat.dy;
    let v = v2.sqrt();
    if v <= STALL_TOL {
        return Err(TrajectoryError::Stall { t: f64::NAN, speed: v });
    }
    let curv = flat.ddy * flat.dx - flat.ddx * flat.dy;
    let num = (flat.dddy * flat.dx - flat.dddx * flat.dy) * v2
        - 3.0 * curv * (flat.dx * flat.ddx + flat.dy * flat.ddy);
    let omega = l * v * num / (v2 * v2 * v2 + l * l * curv * curv);
    Ok((v, omega))
}

/// Transformed reference pair: output-point position and its velocity.
pub fn linearized_reference(
    state: &CarState,
    input: &CarInput,
    p: &CarParams,
) -> (Vector2<f64>, Vector2<f64>) {
    let z = output_transform(state, p);
    let eta = InternalState {
        eta1: state.theta,
        eta2: state.phi,
    };
    let m = input_matrix(&eta, p).expect("steering from arctan stays below pi/2");
    let w = m * Vector2::new(input.v, input.omega);
    (z, w)
}

fn flat_sample(t: f64, sx: &QuinticSpline, sy: &QuinticSpline) -> FlatSample {
    let ex = sx.eval(t);
    let ey = sy.eval(t);
    FlatSample {
        x: ex[0],
        y: ey[0],
        dx: ex[1],
        dy: ey[1],
        ddx: ex[2],
        ddy: ey[2],
        dddx: ex[3],
        dddy: ey[3],
    }
}

/// Menger curvature of three points (zero for collinear or coincident).
fn menger_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let area2 = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let ab = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let bc = ((c.0 - b.0).powi(2) + (c.1 - b.1).powi(2)).sqrt();
    let ca = ((c.0 - a.0).powi(2) + (c.1 - a.1).powi(2)).sqrt();
    let denom = ab * bc * ca;
    if denom < 1e-12 {
        0.0
    } else {
        2.0 * area2.abs() / denom
    }
}

/// Assign knot times: prescribed times if present on every waypoint,
/// otherwise chord length over the average speed, stretched on curved
/// segments so the steering reference stays slower where the path bends.
fn knot_times(
    wps: &[Waypoint],
    average_speed: f64,
    l: f64,
) -> Result<Vec<f64>, TrajectoryError> {
    let n = wps.len();
    let all_timed = wps.iter().all(|w| w.t.is_some());
    if all_timed {
        let times: Vec<f64> = wps.iter().map(|w| w.t.unwrap()).collect();
        for i in 1..n {
            if times[i] <= times[i - 1] {
                return Err(TrajectoryError::NonMonotonicTimes(i));
            }
        }
        return Ok(times);
    }
    if average_speed <= 0.0 {
        return Err(TrajectoryError::BadSpeed(average_speed));
    }
    // Knot curvatures from circumscribed circles of waypoint triples.
    let mut kappa = vec![0.0; n];
    for i in 1..n - 1 {
        kappa[i] = menger_curvature(
            (wps[i - 1].x, wps[i - 1].y),
            (wps[i].x, wps[i].y),
            (wps[i + 1].x, wps[i + 1].y),
        );
    }
    kappa[0] = kappa[1.min(n - 1)];
    kappa[n - 1] = kappa[n - 2];

    let mut times = vec![0.0; n];
    for i in 1..n {
        let chord = ((wps[i].x - wps[i - 1].x).powi(2) + (wps[i].y - wps[i - 1].y).powi(2)).sqrt();
        let kmax = kappa[i - 1].max(kappa[i]);
        times[i] = times[i - 1] + chord / average_speed * (1.0 + kmax * l);
    }
    Ok(times)
}

/// Options controlling [`interpolate`].
#[derive(Debug, Clone, Copy)]
pub struct InterpolateOptions {
    /// Target mean speed for untimed waypoints.
    pub average_speed: f64,
    /// Rescale the timing so the peak speed hits this value exactly
    /// (untimed waypoints only).
    pub max_speed: Option<f64>,
    /// Override the automatic disturbance bound.
    pub r_d_override: Option<f64>,
}

impl Default for InterpolateOptions {
    fn default() -> Self {
        InterpolateOptions {
            average_speed: 0.5,
            max_speed: None,
            r_d_override: None,
        }
    }
}

/// Build a sampled reference trajectory through `waypoints`.
pub fn interpolate(
    waypoints: &[Waypoint],
    p: &CarParams,
    opts: &InterpolateOptions,
) -> Result<ReferenceTrajectory, TrajectoryError> {
    if waypoints.len() < 2 {
        return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
    }
    for i in 1..waypoints.len() {
        let d = ((waypoints[i].x - waypoints[i - 1].x).powi(2)
            + (waypoints[i].y - waypoints[i - 1].y).powi(2))
        .sqrt();
        if d < 1e-9 {
            return Err(TrajectoryError::DegenerateSegment(i - 1, i));
        }
    }
    let mut times = knot_times(waypoints, opts.average_speed, p.l)?;
    let xs: Vec<f64> = waypoints.iter().map(|w| w.x).collect();
    let ys: Vec<f64> = waypoints.iter().map(|w| w.y).collect();
    let n = waypoints.len();

    // Clamped end slopes from the boundary chords.
    let build = |times: &[f64]| -> Result<(QuinticSpline, QuinticSpline), TrajectoryError> {
        let h0 = times[1] - times[0];
        let hn = times[n - 1] - times[n - 2];
        let d0 = ((xs[1] - xs[0]) / h0, (ys[1] - ys[0]) / h0);
        let dn = (
            (xs[n - 1] - xs[n - 2]) / hn,
            (ys[n - 1] - ys[n - 2]) / hn,
        );
        let sx = QuinticSpline::interpolate(times, &xs, d0.0, dn.0)?;
        let sy = QuinticSpline::interpolate(times, &ys, d0.1, dn.1)?;
        Ok((sx, sy))
    };
    let (mut sx, mut sy) = build(&times)?;

    // Dilating every knot time by the same factor scales the path speed
    // uniformly, so one measurement pins the peak exactly.
    if let Some(target) = opts.max_speed {
        if target <= 0.0 {
            return Err(TrajectoryError::BadSpeed(target));
        }
        let duration = times[n - 1] - times[0];
        let probes = 200.max(4 * n);
        let mut peak: f64 = 0.0;
        for k in 0..=probes {
            let t = times[0] + duration * k as f64 / probes as f64;
            let d = sx.eval(t);
            let e = sy.eval(t);
            peak = peak.max((d[1] * d[1] + e[1] * e[1]).sqrt());
        }
        if peak <= STALL_TOL {
            return Err(TrajectoryError::Stall {
                t: times[0],
                speed: peak,
            });
        }
        let scale = peak / target;
        for t in times.iter_mut() {
            *t *= scale;
        }
        let rebuilt = build(&times)?;
        sx = rebuilt.0;
        sy = rebuilt.1;
    }

    let duration = times[n - 1] - times[0];
    let steps = (duration / p.ts).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut max_w_norm: f64 = 0.0;
    let mut max_speed: f64 = 0.0;
    let mut steering_violations = 0;

    for k in 0..=steps {
        let t = times[0] + k as f64 * p.ts;
        let flat = flat_sample(t, &sx, &sy);
        let speed = (flat.dx * flat.dx + flat.dy * flat.dy).sqrt();
        if speed <= STALL_TOL {
            return Err(TrajectoryError::Stall { t, speed });
        }
        if speed > p.v_max {
            return Err(TrajectoryError::InfeasibleSpeed {
                t,
                speed,
                limit: p.v_max,
            });
        }
        let (theta, phi) = reference_state(&flat, p.l)?;
        let (v, omega) = reference_input(&flat, p.l)?;
        if phi.abs() > p.phi_max {
            steering_violations += 1;
        }
        let state = CarState {
            x: flat.x,
            y: flat.y,
            theta,
            phi,
        };
        let input = CarInput { v, omega };
        let (z, w) = linearized_reference(&state, &input, p);
        max_w_norm = max_w_norm.max(w.norm());
        max_speed = max_speed.max(speed);
        samples.push(ReferenceSample {
            t: t - times[0],
            flat,
            state,
            input,
            z,
            w,
        });
    }

    let r_d = opts.r_d_override.unwrap_or(R_D_MARGIN * max_w_norm);
    Ok(ReferenceTrajectory {
        samples,
        ts: p.ts,
        r_d,
        max_w_norm,
        max_speed,
        steering_violations,
    })
}

/// Parse a waypoint CSV: header `x,y` or `x,y,t`, one point per line.
/// Blank lines and `#` comments are skipped.
pub fn parse_waypoints<R: BufRead>(reader: R) -> Result<Vec<Waypoint>, TrajectoryError> {
    let mut wps = Vec::new();
    let mut header: Option<bool> = None; // Some(true) if a t column is present
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match header {
            None => {
                match fields.as_slice() {
                    ["x", "y"] => header = Some(false),
                    ["x", "y", "t"] => header = Some(true),
                    _ => {
                        return Err(TrajectoryError::Parse(format!(
                            "line {}: expected header 'x,y' or 'x,y,t'",
                            lineno + 1
                        )))
                    }
                };
            }
            Some(timed) => {
                let want = if timed { 3 } else { 2 };
                if fields.len() != want {
                    return Err(TrajectoryError::Parse(format!(
                        "line {}: expected {} fields, got {}",
                        lineno + 1,
                        want,
                        fields.len()
                    )));
                }
                let mut vals = [0.0; 3];
                for (i, f) in fields.iter().enumerate() {
                    vals[i] = f.parse::<f64>().map_err(|e| {
                        TrajectoryError::Parse(format!("line {}: {}", lineno + 1, e))
                    })?;
                }
                wps.push(Waypoint {
                    x: vals[0],
                    y: vals[1],
                    t: if timed { Some(vals[2]) } else { None },
                });
            }
        }
    }
    if header.is_none() {
        return Err(TrajectoryError::Parse("empty waypoint file".into()));
    }
    Ok(wps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn qcar() -> CarParams {
        CarParams::qcar()
    }

    fn circle_flat(radius: f64, speed: f64, t: f64) -> FlatSample {
        let w = speed / radius;
        let a = w * t;
        FlatSample {
            x: radius * a.cos(),
            y: radius * a.sin(),
            dx: -speed * a.sin(),
            dy: speed * a.cos(),
            ddx: -speed * w * a.cos(),
            ddy: -speed * w * a.sin(),
            dddx: speed * w * w * a.sin(),
            dddy: -speed * w * w * a.cos(),
        }
    }

    #[test]
    fn reference_state_worked_example() {
        let flat = FlatSample {
            dx: 0.0,
            dy: 0.5,
            ddx: -0.1,
            ddy: 0.0,
            ..Default::default()
        };
        let (theta, phi) = reference_state(&flat, 0.256).unwrap();
        assert_abs_diff_eq!(theta, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(phi, (0.4 * 0.256_f64).atan(), epsilon = 1e-12);
    }

    #[test]
    fn circle_reference_is_constant_steering_zero_rate() {
        let p = qcar();
        let radius = 1.5;
        let speed = 0.6;
        for k in 0..200 {
            let flat = circle_flat(radius, speed, k as f64 * 0.037);
            let (_, phi) = reference_state(&flat, p.l).unwrap();
            let (v, omega) = reference_input(&flat, p.l).unwrap();
            assert_abs_diff_eq!(phi, (p.l / radius).atan(), epsilon = 1e-12);
            assert_abs_diff_eq!(v, speed, epsilon = 1e-12);
            assert_abs_diff_eq!(omega, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linearized_reference_matches_transform() {
        let p = qcar();
        let flat = circle_flat(2.0, 0.5, 1.3);
        let (theta, phi) = reference_state(&flat, p.l).unwrap();
        let (v, omega) = reference_input(&flat, p.l).unwrap();
        let state = CarState {
            x: flat.x,
            y: flat.y,
            theta,
            phi,
        };
        let input = CarInput { v, omega };
        let (z, w) = linearized_reference(&state, &input, &p);
        assert_abs_diff_eq!(
            z[0],
            flat.x + p.l * theta.cos() + p.delta * (theta + phi).cos(),
            epsilon = 1e-12
        );
        // On a constant-curvature arc the output point moves at the speed
        // scaled by its own turning radius; just check w is finite and the
        // tangent direction matches the output-point velocity numerically.
        let h = 1e-6;
        let flat2 = circle_flat(2.0, 0.5, 1.3 + h);
        let (th2, ph2) = reference_state(&flat2, p.l).unwrap();
        let z2 = output_transform(
            &CarState {
                x: flat2.x,
                y: flat2.y,
                theta: th2,
                phi: ph2,
            },
            &p,
        );
        assert_abs_diff_eq!(w[0], (z2[0] - z[0]) / h, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], (z2[1] - z[1]) / h, epsilon = 1e-5);
    }

    #[test]
    fn interpolate_hits_waypoints_and_sizes_r_d() {
        let p = qcar();
        let wps = vec![
            Waypoint::new(0.0, 0.0),
            Waypoint::new(1.0, 0.2),
            Waypoint::new(2.0, 0.0),
            Waypoint::new(3.0, -0.3),
        ];
        let traj = interpolate(&wps, &p, &InterpolateOptions::default()).unwrap();
        assert!(traj.len() > 10);
        assert_abs_diff_eq!(traj.samples[0].flat.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.samples[0].flat.y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.r_d, R_D_MARGIN * traj.max_w_norm, epsilon = 1e-12);
        assert!(traj.max_speed <= p.v_max);
        // Final sample lands within one step of the last waypoint.
        let last = traj.samples.last().unwrap();
        let dist = ((last.flat.x - 3.0).powi(2) + (last.flat.y + 0.3).powi(2)).sqrt();
        assert!(dist < p.v_max * p.ts * 2.0, "dist = {dist}");
    }

    #[test]
    fn interpolate_respects_prescribed_times() {
        let p = qcar();
        let wps = vec![
            Waypoint::timed(0.0, 0.0, 0.0),
            Waypoint::timed(0.5, 0.1, 2.0),
            Waypoint::timed(1.0, 0.0, 4.0),
        ];
        let traj = interpolate(&wps, &p, &InterpolateOptions::default()).unwrap();
        assert_abs_diff_eq!(traj.duration(), 4.0, epsilon = p.ts);
        // The sample nearest t = 2 passes near the middle waypoint.
        let k = (2.0 / p.ts).round() as usize;
        let s = traj.sample(k);
        assert!((s.flat.x - 0.5).abs() < 0.05 && (s.flat.y - 0.1).abs() < 0.05);
    }

    #[test]
    fn interpolate_rejects_degenerate_input() {
        let p = qcar();
        assert!(matches!(
            interpolate(&[Waypoint::new(0.0, 0.0)], &p, &InterpolateOptions::default()),
            Err(TrajectoryError::TooFewWaypoints(1))
        ));
        assert!(matches!(
            interpolate(
                &[Waypoint::new(0.0, 0.0), Waypoint::new(0.0, 0.0)],
                &p,
                &InterpolateOptions::default()
            ),
            Err(TrajectoryError::DegenerateSegment(0, 1))
        ));
        let too_fast = InterpolateOptions {
            average_speed: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            interpolate(
                &[Waypoint::new(0.0, 0.0), Waypoint::new(5.0, 0.0)],
                &p,
                &too_fast
            ),
            Err(TrajectoryError::InfeasibleSpeed { .. })
        ));
    }

    #[test]
    fn parse_waypoints_formats() {
        let plain = "x,y\n0,0\n1.5,2.0\n";
        let wps = parse_waypoints(Cursor::new(plain)).unwrap();
        assert_eq!(wps.len(), 2);
        assert_eq!(wps[1], Waypoint::new(1.5, 2.0));

        let timed = "# comment\nx,y,t\n0,0,0\n1,1,2.5\n";
        let wps = parse_waypoints(Cursor::new(timed)).unwrap();
        assert_eq!(wps[1], Waypoint::timed(1.0, 1.0, 2.5));

        assert!(parse_waypoints(Cursor::new("a,b\n")).is_err());
        assert!(parse_waypoints(Cursor::new("x,y\n1\n")).is_err());
        assert!(parse_waypoints(Cursor::new("")).is_err());
    }

    #[test]
    fn csv_roundtrip_header() {
        let p = qcar();
        let wps = vec![Waypoint::new(0.0, 0.0), Waypoint::new(1.0, 0.0)];
        let traj = interpolate(&wps, &p, &InterpolateOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# ts = "));
        assert!(text.contains("t,x,y,dx,dy"));
        assert_eq!(text.lines().count(), traj.len() + 2);
    }
}
