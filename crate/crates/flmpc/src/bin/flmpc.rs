//! Scenario runner for the feedback-linearized MPC toolkit.
//!
//! Subcommands: `generate` (waypoints -> reference CSV), `certify`
//! (terminal-set report), `run` (closed-loop traces + metrics), `bench`
//! (solve-time table). All of them read the same flat key-value config
//! format; every key defaults to the qcar preset and can be
//! overridden by a config file and then by flags.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime infeasibility
//! or singularity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix2;

use flmpc::linearize::worst_case_disc;
use flmpc::mpc::{ControlMode, Controller, MpcConfig};
use flmpc::sim::{run_closed_loop, timing_run, PlantModel, PlantOptions, SimError};
use flmpc::terminal::{build_terminal_set, check_rpi, closed_loop_matrix, TerminalSet};
use flmpc::trajectory::{
    interpolate, parse_waypoints, InterpolateOptions, ReferenceTrajectory,
};
use flmpc::vehicle::{CarParams, CarState};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "flmpc",
    about = "Trajectory-tracking MPC toolkit for car-like vehicles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interpolate a waypoint file into a sampled reference trajectory CSV.
    Generate(GenerateArgs),
    /// Build the terminal set and report the invariance certificate.
    Certify(CertifyArgs),
    /// Run closed-loop scenarios and write trace + metrics CSVs.
    Run(RunArgs),
    /// Measure controller step times and write a timing table CSV.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file (flat `key = value` lines); defaults to the qcar preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config in reloadable form and exit.
    #[arg(long)]
    dump_config: bool,
    /// Override: sampling period [s].
    #[arg(long)]
    ts: Option<f64>,
    /// Override: disturbance-ball radius r_d.
    #[arg(long)]
    rd: Option<f64>,
    /// Override: scalar terminal gain (K = k I).
    #[arg(long)]
    k: Option<f64>,
    /// Override: waypoint file path.
    #[arg(long)]
    waypoints: Option<PathBuf>,
    /// Override: mean reference speed [m/s].
    #[arg(long)]
    speed: Option<f64>,
    /// Override: peak reference speed [m/s] (rescales the timing).
    #[arg(long)]
    max_speed: Option<f64>,
    /// Override: controller mode (dual_mode | always_qp).
    #[arg(long)]
    mode: Option<String>,
    /// Override: prediction horizon N.
    #[arg(long)]
    horizon: Option<usize>,
    /// Override: RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override: run label used in output file names.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output CSV path (defaults to <out_dir>/<label>_reference.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Extra config files; each becomes an independent run.
    #[arg(long = "also", value_name = "CONFIG")]
    also: Vec<PathBuf>,
    /// Number of worker threads for fanning out runs.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Timing repetitions per step.
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

/// Everything a scenario needs, with qcar-preset defaults.
#[derive(Debug, Clone)]
struct ScenarioConfig {
    // vehicle
    l: f64,
    delta: f64,
    v_max: f64,
    omega_max: f64,
    phi_max: f64,
    ts: f64,
    // trajectory
    waypoints: PathBuf,
    speed: f64,
    max_speed: Option<f64>,
    r_d: Option<f64>,
    // controller
    mode: ControlMode,
    horizon: usize,
    q_weight: f64,
    r_weight: f64,
    n_w: usize,
    n_n: usize,
    k_gain: f64,
    // run
    seed: u64,
    noise: f64,
    offset_y: f64,
    plant: PlantModel,
    out_dir: PathBuf,
    label: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            l: 0.256,
            delta: 0.35,
            v_max: 1.0,
            omega_max: 10.0,
            phi_max: 0.6,
            ts: 0.01,
            waypoints: PathBuf::from("scenarios/oval.csv"),
            speed: 0.5,
            max_speed: None,
            r_d: None,
            mode: ControlMode::DualMode,
            horizon: 10,
            q_weight: 1.0,
            r_weight: 0.01,
            n_w: 10,
            n_n: 10,
            k_gain: 4.0,
            seed: 0,
            noise: 0.0,
            offset_y: 0.0,
            plant: PlantModel::Euler,
            out_dir: PathBuf::from("out"),
            label: String::from("scenario"),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ScenarioConfig {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ScenarioConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                validation(format!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| {
                validation(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num(value: &str) -> Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("`{value}` is not a number"))
        }
        match key {
            "l" => self.l = num(value)?,
            "delta" => self.delta = num(value)?,
            "v_max" => self.v_max = num(value)?,
            "omega_max" => self.omega_max = num(value)?,
            "phi_max" => self.phi_max = num(value)?,
            "ts" => self.ts = num(value)?,
            "waypoints" => self.waypoints = PathBuf::from(value),
            "speed" => self.speed = num(value)?,
            "max_speed" => {
                self.max_speed = if value.is_empty() { None } else { Some(num(value)?) }
            }
            "r_d" => self.r_d = if value.is_empty() { None } else { Some(num(value)?) },
            "mode" => self.mode = parse_mode(value)?,
            "horizon" => {
                self.horizon = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a horizon length"))?
            }
            "q_weight" => self.q_weight = num(value)?,
            "r_weight" => self.r_weight = num(value)?,
            "n_w" => {
                self.n_w = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a polygon size"))?
            }
            "n_n" => {
                self.n_n = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a polygon size"))?
            }
            "k_gain" => self.k_gain = num(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a seed"))?
            }
            "noise" => self.noise = num(value)?,
            "offset_y" => self.offset_y = num(value)?,
            "plant" => {
                self.plant = match value {
                    "euler" => PlantModel::Euler,
                    "rk4" => PlantModel::Rk4 { substeps: 1 },
                    other => return Err(format!("unknown plant `{other}` (euler | rk4)")),
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "label" => self.label = value.to_string(),
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    fn apply_overrides(&mut self, args: &CommonArgs) -> Result<(), CliError> {
        if let Some(ts) = args.ts {
            self.ts = ts;
        }
        if let Some(rd) = args.rd {
            self.r_d = Some(rd);
        }
        if let Some(k) = args.k {
            self.k_gain = k;
        }
        if let Some(ref wp) = args.waypoints {
            self.waypoints = wp.clone();
        }
        if let Some(speed) = args.speed {
            self.speed = speed;
        }
        if let Some(max_speed) = args.max_speed {
            self.max_speed = Some(max_speed);
        }
        if let Some(ref mode) = args.mode {
            self.mode = parse_mode(mode).map_err(validation)?;
        }
        if let Some(horizon) = args.horizon {
            self.horizon = horizon;
        }
        if let Some(seed) = args.seed {
            self.seed = seed;
        }
        if let Some(ref dir) = args.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(ref label) = args.label {
            self.label = label.clone();
        }
        Ok(())
    }

    fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vehicle");
        let _ = writeln!(s, "l = {}", self.l);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "v_max = {}", self.v_max);
        let _ = writeln!(s, "omega_max = {}", self.omega_max);
        let _ = writeln!(s, "phi_max = {}", self.phi_max);
        let _ = writeln!(s, "ts = {}", self.ts);
        let _ = writeln!(s, "# trajectory");
        let _ = writeln!(s, "waypoints = {}", self.waypoints.display());
        let _ = writeln!(s, "speed = {}", self.speed);
        let _ = writeln!(
            s,
            "max_speed = {}",
            self.max_speed.map(|v| v.to_string()).unwrap_or_default()
        );
        let _ = writeln!(
            s,
            "r_d = {}",
            self.r_d.map(|v| v.to_string()).unwrap_or_default()
        );
        let _ = writeln!(s, "# controller");
        let _ = writeln!(
            s,
            "mode = {}",
            match self.mode {
                ControlMode::DualMode => "dual_mode",
                ControlMode::AlwaysQp => "always_qp",
            }
        );
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "q_weight = {}", self.q_weight);
        let _ = writeln!(s, "r_weight = {}", self.r_weight);
        let _ = writeln!(s, "n_w = {}", self.n_w);
        let _ = writeln!(s, "n_n = {}", self.n_n);
        let _ = writeln!(s, "k_gain = {}", self.k_gain);
        let _ = writeln!(s, "# run");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "noise = {}", self.noise);
        let _ = writeln!(s, "offset_y = {}", self.offset_y);
        let _ = writeln!(
            s,
            "plant = {}",
            match self.plant {
                PlantModel::Euler => "euler",
                PlantModel::Rk4 { .. } => "rk4",
            }
        );
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "label = {}", self.label);
        s
    }

    fn car_params(&self) -> Result<CarParams, CliError> {
        let p = CarParams {
            l: self.l,
            delta: self.delta,
            v_max: self.v_max,
            omega_max: self.omega_max,
            phi_max: self.phi_max,
            ts: self.ts,
        };
        p.validate()
            .map_err(|e| validation(format!("invalid vehicle parameters: {e}")))?;
        Ok(p)
    }

    fn mpc_config(&self) -> Result<MpcConfig, CliError> {
        let cfg = MpcConfig {
            n: self.horizon,
            q: Matrix2::identity() * self.q_weight,
            r: Matrix2::identity() * self.r_weight,
            n_w: self.n_w,
            n_n: self.n_n,
            mode: self.mode,
        };
        cfg.validate()
            .map_err(|e| validation(format!("invalid controller config: {e}")))?;
        Ok(cfg)
    }
}

fn parse_mode(value: &str) -> Result<ControlMode, String> {
    match value {
        "dual_mode" | "dual-mode" => Ok(ControlMode::DualMode),
        "always_qp" | "always-qp" => Ok(ControlMode::AlwaysQp),
        other => Err(format!("unknown mode `{other}` (dual_mode | always_qp)")),
    }
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    cfg.apply_overrides(common)?;
    Ok(cfg)
}

fn build_trajectory(cfg: &ScenarioConfig, p: &CarParams) -> Result<ReferenceTrajectory, CliError> {
    let text = std::fs::read_to_string(&cfg.waypoints).map_err(|e| {
        validation(format!(
            "cannot read waypoint file {}: {e}",
            cfg.waypoints.display()
        ))
    })?;
    let waypoints = parse_waypoints(text.as_bytes())
        .map_err(|e| validation(format!("{}: {e}", cfg.waypoints.display())))?;
    let opts = InterpolateOptions {
        average_speed: cfg.speed,
        max_speed: cfg.max_speed,
        r_d_override: cfg.r_d,
    };
    interpolate(&waypoints, p, &opts)
        .map_err(|e| validation(format!("trajectory generation failed: {e}")))
}

fn build_terminal(cfg: &ScenarioConfig, p: &CarParams, r_d: f64) -> Result<TerminalSet, CliError> {
    let k = Matrix2::identity() * cfg.k_gain;
    build_terminal_set(k, p, r_d)
        .map_err(|e| validation(format!("terminal set construction failed: {e}")))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| validation(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    if args.common.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let p = cfg.car_params()?;
    let traj = build_trajectory(&cfg, &p)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(format!("{}_reference.csv", cfg.label)));
    if let Some(parent) = out.parent() {
        ensure_out_dir(parent)?;
    }
    let mut buf = Vec::new();
    traj.to_csv(&mut buf)
        .expect("in-memory write cannot fail");
    std::fs::write(&out, buf)
        .map_err(|e| validation(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "wrote {} ({} samples, duration {:.2} s, r_d = {:.4}, max speed {:.3} m/s, steering violations {})",
        out.display(),
        traj.len(),
        traj.duration(),
        traj.r_d,
        traj.max_speed,
        traj.steering_violations
    );
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    if args.common.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let p = cfg.car_params()?;
    let disc = worst_case_disc(&p);
    // Without an explicit r_d, derive it from the configured trajectory.
    let r_d = match cfg.r_d {
        Some(rd) => rd,
        None => build_trajectory(&cfg, &p)?.r_d,
    };
    let ts = build_terminal(&cfg, &p, r_d)?;
    let a_cl = closed_loop_matrix(&ts.k, &p);
    let report = check_rpi(&ts, &p);

    println!("r_hat  = {:.6}", disc.r_hat);
    println!("r_d    = {:.6}", r_d);
    println!(
        "S      = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
        ts.s[(0, 0)],
        ts.s[(0, 1)],
        ts.s[(1, 0)],
        ts.s[(1, 1)]
    );
    println!(
        "A_cl   = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
        a_cl[(0, 0)],
        a_cl[(0, 1)],
        a_cl[(1, 0)],
        a_cl[(1, 1)]
    );
    println!("xi     = {:.6e}", ts.xi);
    println!("lambda = {:.10}", ts.lambda);
    println!("margin = {:.6e}", report.margin);
    if report.holds {
        println!("certificate: PASS");
        Ok(())
    } else {
        println!("certificate: FAIL");
        Err(validation(
            "invariance condition does not hold for this gain/disturbance pair",
        ))
    }
}

/// One complete closed-loop run: returns the metrics CSV row.
fn run_one(cfg: &ScenarioConfig) -> Result<String, CliError> {
    let p = cfg.car_params()?;
    let traj = build_trajectory(&cfg, &p)?;
    let terminal = build_terminal(cfg, &p, traj.r_d)?;
    let mpc_cfg = cfg.mpc_config()?;
    let mut controller = Controller::new(mpc_cfg, &p, terminal)
        .map_err(|e| validation(format!("controller construction failed: {e}")))?;

    let r0 = &traj.sample(0).state;
    let q0 = CarState {
        x: r0.x,
        y: r0.y + cfg.offset_y,
        theta: r0.theta,
        phi: r0.phi,
    };
    let plant = PlantOptions {
        model: cfg.plant,
        noise: cfg.noise,
        seed: cfg.seed,
    };
    let result = run_closed_loop(&traj, &mut controller, &plant, &q0).map_err(|e| match e {
        SimError::InitialInfeasible | SimError::PlantSingularity(_) => {
            CliError::Runtime(format!("{e}"))
        }
        other => validation(format!("{other}")),
    })?;

    ensure_out_dir(&cfg.out_dir)?;
    let trace_path = cfg.out_dir.join(format!("{}_trace.csv", cfg.label));
    let mut buf = Vec::new();
    result
        .trace_csv(&mut buf)
        .expect("in-memory write cannot fail");
    std::fs::write(&trace_path, buf)
        .map_err(|e| validation(format!("cannot write {}: {e}", trace_path.display())))?;

    let m = &result.metrics;
    let row = format!(
        "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{}",
        cfg.label,
        match cfg.mode {
            ControlMode::DualMode => "dual_mode",
            ControlMode::AlwaysQp => "always_qp",
        },
        m.ise_xy,
        m.itse_xy,
        m.ise_theta,
        m.itse_theta,
        m.ise_phi,
        m.itse_phi,
        result.infeasible_events,
        result.input_violations,
        result.steering_violations,
    );
    println!(
        "{}: {} steps, ISE_xy {:.4e}, infeasible events {}, trace -> {}",
        cfg.label,
        result.trace.len(),
        m.ise_xy,
        result.infeasible_events,
        trace_path.display()
    );
    Ok(row)
}

const METRICS_HEADER: &str =
    "label,mode,ise_xy,itse_xy,ise_theta,itse_theta,ise_phi,itse_phi,infeasible_events,input_violations,steering_violations";

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let base = load_config(&args.common)?;
    if args.common.dump_config {
        print!("{}", base.dump());
        return Ok(());
    }
    let mut configs = vec![base.clone()];
    for path in &args.also {
        let mut cfg = ScenarioConfig::load(path)?;
        cfg.apply_overrides(&args.common)?;
        configs.push(cfg);
    }
    if args.parallel == 0 {
        return Err(validation("--parallel must be at least 1"));
    }

    // Fan the independent runs across a fixed-size worker pool.
    let workers = args.parallel.min(configs.len());
    let results: Vec<Result<String, CliError>> = if workers <= 1 {
        configs.iter().map(run_one).collect()
    } else {
        let jobs = std::sync::Mutex::new(configs.iter().enumerate().collect::<Vec<_>>());
        let out = std::sync::Mutex::new(
            (0..configs.len()).map(|_| None).collect::<Vec<_>>(),
        );
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let job = jobs.lock().unwrap().pop();
                    let Some((idx, cfg)) = job else { break };
                    let res = run_one(cfg);
                    out.lock().unwrap()[idx] = Some(res);
                });
            }
        });
        out.into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every job completed"))
            .collect()
    };

    ensure_out_dir(&base.out_dir)?;
    let mut rows = String::from(METRICS_HEADER);
    rows.push('\n');
    let mut first_err = None;
    for res in results {
        match res {
            Ok(row) => {
                rows.push_str(&row);
                rows.push('\n');
            }
            Err(e) => {
                eprintln!("error: {}", e.message());
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    let metrics_path = base.out_dir.join(format!("{}_metrics.csv", base.label));
    std::fs::write(&metrics_path, rows)
        .map_err(|e| validation(format!("cannot write {}: {e}", metrics_path.display())))?;
    println!("metrics -> {}", metrics_path.display());
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    if args.common.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let p = cfg.car_params()?;
    let traj = build_trajectory(&cfg, &p)?;
    let terminal = build_terminal(&cfg, &p, traj.r_d)?;

    ensure_out_dir(&cfg.out_dir)?;
    let mut table = String::from("label,mode,horizon,steps,avg_ms,max_ms\n");
    for mode in [ControlMode::DualMode, ControlMode::AlwaysQp] {
        let mpc_cfg = MpcConfig {
            mode,
            ..cfg.mpc_config()?
        };
        let mut controller = Controller::new(mpc_cfg, &p, terminal.clone())
            .map_err(|e| validation(format!("controller construction failed: {e}")))?;
        let q0 = traj.sample(0).state;
        let plant = PlantOptions {
            model: cfg.plant,
            noise: cfg.noise,
            seed: cfg.seed,
        };
        let stats = timing_run(&mut controller, &traj, &plant, &q0, args.reps)
            .map_err(|e| CliError::Runtime(format!("{e}")))?;
        let name = match mode {
            ControlMode::DualMode => "dual_mode",
            ControlMode::AlwaysQp => "always_qp",
        };
        let _ = writeln!(
            table,
            "{},{},{},{},{:.6},{:.6}",
            cfg.label,
            name,
            cfg.horizon,
            stats.steps,
            stats.avg * 1e3,
            stats.max * 1e3
        );
        println!(
            "{name}: {} steps, avg {:.4} ms, max {:.4} ms",
            stats.steps,
            stats.avg * 1e3,
            stats.max * 1e3
        );
    }
    let path = cfg.out_dir.join(format!("{}_timing.csv", cfg.label));
    std::fs::write(&path, table)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    println!("timing -> {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
