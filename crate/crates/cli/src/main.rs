//! `smoothctl` command-line front end.
//!
//! Exit codes: 0 success, 2 argument or input error, 3 numeric or convergence error.

mod output;
mod units;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smoothctl::builtin;
use smoothctl::ensemble::{EnsemblePoint, RobustnessWindow};
use smoothctl::io::{self, AwgExportConfig, ChiFile, PhysicalityFile, PlotKind, PulseFile};
use smoothctl::magnetometry::{sensitivity_landscape, BStar, EchoSequence, SensorModel};
use smoothctl::objectives::{landscape_with, TargetSpec};
use smoothctl::optimizer::{optimize, OptimizerConfig};
use smoothctl::propagation::{bloch_trajectory, propagate, UnitaryOp, KET0, KET1};
use smoothctl::pulse::{make_hard_pi, max_rabi, ControlProgram, FourierEnvelope, DEFAULT_RABI_SAMPLES};
use smoothctl::qpt::{
    process_fidelity, project_physical_with, reconstruct_chi, simulate_tomography, PrepReadout, Process,
    ProjectionConfig, Shots, TomographyConfig,
};

use output::Run;
use units::{parse_quantity, parse_range, Dim};

#[derive(Parser, Debug)]
#[command(name = "smoothctl", version, about = "Smooth robust control pulses for two-level systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pulse design, simulation and export.
    #[command(subcommand)]
    Pulse(PulseCmd),
    /// Simulated process tomography.
    #[command(subcommand)]
    Qpt(QptCmd),
    /// Spin-echo magnetometry.
    #[command(subcommand)]
    Mag(MagCmd),
}

#[derive(Subcommand, Debug)]
enum PulseCmd {
    /// Write a built-in pulse as JSON.
    Builtin(BuiltinArgs),
    /// Gradient search for a robust Fourier pulse under a peak-amplitude limit.
    Optimize(OptimizeArgs),
    /// Bloch trajectory of one ensemble member.
    Simulate(SimulateArgs),
    /// Fidelity over a detuning × amplitude-scale grid.
    Landscape(LandscapeArgs),
    /// Integer I/Q sample table for an arbitrary waveform generator.
    ExportAwg(AwgArgs),
}

#[derive(Subcommand, Debug)]
enum QptCmd {
    Run(QptRunArgs),
    /// Project a χ matrix onto physical processes.
    Physicality(PhysicalityArgs),
}

#[derive(Subcommand, Debug)]
enum MagCmd {
    /// Sensitivity of smooth and rectangular echoes over a (δ, s) grid.
    Sweep(MagSweepArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Manifest path; defaults to `<first output>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn freq(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dim::Frequency)
}
fn time(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dim::Time)
}
fn scalar(s: &str) -> Result<f64, String> {
    parse_quantity(s, Dim::Scalar)
}
/// Parsed `start:stop:count` grid.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn freq_range(s: &str) -> Result<Grid, String> {
    parse_range(s, Dim::Frequency).map(Grid)
}
fn scalar_range(s: &str) -> Result<Grid, String> {
    parse_range(s, Dim::Scalar).map(Grid)
}

#[derive(Args, Debug)]
struct BuiltinArgs {
    /// One of pi, pi2_y, pi_x.
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// flip, x, y, x90, y90 or id.
    #[arg(long, default_value = "flip")]
    target: String,
    #[arg(long, default_value_t = 10)]
    harmonics: usize,
    #[arg(long, value_parser = time, default_value = "500ns")]
    duration: f64,
    #[arg(long, value_parser = freq, default_value = "10MHz")]
    a_max: f64,
    /// standard or nominal.
    #[arg(long, default_value = "standard")]
    window: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    conv_tol: f64,
    #[arg(long, default_value_t = 512)]
    slices: usize,
    /// Name stored in the pulse file.
    #[arg(long, default_value = "optimized")]
    name: String,
    #[arg(long)]
    out: PathBuf,
    /// Optional iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PulseSource {
    /// Pulse JSON path, or `builtin:NAME`.
    #[arg(long)]
    pulse: String,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    src: PulseSource,
    #[arg(long, value_parser = freq, default_value = "0", allow_hyphen_values = true)]
    det: f64,
    #[arg(long, value_parser = scalar, default_value = "1")]
    scale: f64,
    /// Initial basis state, 0 or 1.
    #[arg(long, default_value_t = 0)]
    initial: u8,
    #[arg(long, default_value_t = 201)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write a plot script.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct LandscapeArgs {
    #[command(flatten)]
    src: PulseSource,
    #[arg(long, default_value = "flip")]
    target: String,
    /// Detuning range `start:stop:count`.
    #[arg(long, value_parser = freq_range, allow_hyphen_values = true)]
    det: Grid,
    /// Amplitude-scale range `start:stop:count`.
    #[arg(long, value_parser = scalar_range)]
    scale: Grid,
    #[arg(long, default_value_t = 4096)]
    slices: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AwgArgs {
    #[command(flatten)]
    src: PulseSource,
    #[arg(long, value_parser = freq, default_value = "200MHz")]
    rate: f64,
    #[arg(long, default_value_t = 14)]
    bits: u32,
    /// Rabi frequency at full scale, or `auto` for the pulse's max_rabi.
    #[arg(long, default_value = "auto")]
    full_scale: String,
    /// Sample on `k/rate` instead of stretching the grid to the pulse end.
    #[arg(long)]
    no_endpoint: bool,
    /// Little-endian interleaved i16 instead of CSV.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct QptRunArgs {
    /// Pulse JSON path or `builtin:NAME`.
    #[arg(long, conflicts_with = "hard_pi", required_unless_present = "hard_pi")]
    pulse: Option<String>,
    /// Rectangular π_x pulse at this Rabi frequency instead of a pulse file.
    #[arg(long, value_parser = freq)]
    hard_pi: Option<f64>,
    /// Ideal gate to compare with: x, y, x90, y90 or id.
    #[arg(long, default_value = "x")]
    ideal: String,
    #[arg(long, value_parser = freq, default_value = "0", allow_hyphen_values = true)]
    det: f64,
    #[arg(long, value_parser = scalar, default_value = "1")]
    scale: f64,
    /// `exact` or a shot count per measurement setting.
    #[arg(long, default_value = "exact")]
    shots: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `ideal`, or a Rabi frequency for rectangular prep/readout pulses.
    #[arg(long, default_value = "ideal")]
    prep: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PhysicalityArgs {
    #[arg(long)]
    chi: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MagSweepArgs {
    #[arg(long, value_parser = time, default_value = "1.2us")]
    tau: f64,
    /// Sensor model JSON; defaults apply otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = freq_range, allow_hyphen_values = true, default_value = "-4MHz:4MHz:17")]
    det: Grid,
    #[arg(long, value_parser = scalar_range, default_value = "0.75:1.25:11")]
    scale: Grid,
    /// Rabi frequency of the rectangular echo, or `auto` to match the smooth pulse peak.
    #[arg(long, default_value = "auto")]
    rect_rabi: String,
    /// Operating field amplitude, or `auto` for the steepest point of each nominal fringe.
    #[arg(long, default_value = "auto")]
    b_star: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum CliError {
    Arg(String),
    Core(smoothctl::Error),
    Io(std::io::Error),
}

impl From<smoothctl::Error> for CliError {
    fn from(e: smoothctl::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use smoothctl::Error as E;
        match self {
            CliError::Core(E::Convergence(_) | E::Numeric(_) | E::Clipping { .. }) => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Arg(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SMOOTHCTL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Arg(format!("SMOOTHCTL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Arg(e.to_string()))
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Pulse(PulseCmd::Builtin(a)) => pulse_builtin(a),
        Command::Pulse(PulseCmd::Optimize(a)) => pulse_optimize(a),
        Command::Pulse(PulseCmd::Simulate(a)) => pulse_simulate(a),
        Command::Pulse(PulseCmd::Landscape(a)) => pulse_landscape(a),
        Command::Pulse(PulseCmd::ExportAwg(a)) => pulse_export_awg(a),
        Command::Qpt(QptCmd::Run(a)) => qpt_run(a),
        Command::Qpt(QptCmd::Physicality(a)) => qpt_physicality(a),
        Command::Mag(MagCmd::Sweep(a)) => mag_sweep(a),
    }
}

fn load_envelope(run: &mut Run, src: &str) -> CliResult<(String, FourierEnvelope)> {
    if let Some(name) = src.strip_prefix("builtin:") {
        let b = builtin::by_name(name)
            .ok_or_else(|| CliError::Arg(format!("unknown built-in {name:?}; known: {:?}", builtin::NAMES)))?;
        return Ok((b.name.to_string(), b.envelope));
    }
    let text = run.read_input(Path::new(src))?;
    let f = PulseFile::from_json(&text)?;
    let env = f.envelope()?;
    Ok((f.name, env))
}

fn ideal_gate(name: &str) -> CliResult<UnitaryOp> {
    Ok(match name {
        "x" => UnitaryOp::pauli_x(),
        "y" => UnitaryOp::pauli_y(),
        "x90" => UnitaryOp::rotation([1.0, 0.0, 0.0], PI / 2.0),
        "y90" => UnitaryOp::rotation([0.0, 1.0, 0.0], PI / 2.0),
        "id" => UnitaryOp::identity(),
        _ => return Err(CliError::Arg(format!("unknown gate {name:?}; expected x, y, x90, y90 or id"))),
    })
}

fn target(name: &str) -> CliResult<TargetSpec> {
    if name == "flip" {
        Ok(TargetSpec::flip())
    } else {
        Ok(TargetSpec::gate(ideal_gate(name)?))
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> smoothctl::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_plot(run: &mut Run, plot: Option<&Path>, csv: &Path, bytes: &[u8], kind: PlotKind) -> CliResult<()> {
    let Some(p) = plot else { return Ok(()) };
    let text = String::from_utf8_lossy(bytes);
    let header = text.lines().next().unwrap_or("");
    let script = io::emit_plot_script(&csv.display().to_string(), header, kind)?;
    run.write_output(p, script.as_bytes())?;
    Ok(())
}

fn pulse_builtin(a: BuiltinArgs) -> CliResult<()> {
    let mut run = Run::new("pulse builtin", a.common.manifest);
    let b = builtin::by_name(&a.name)
        .ok_or_else(|| CliError::Arg(format!("unknown built-in {:?}; known: {:?}", a.name, builtin::NAMES)))?;
    let json = PulseFile::from_envelope(b.name, &b.envelope).to_json();
    run.write_output(&a.out, json.as_bytes())?;
    run.finish()?;
    Ok(())
}

fn pulse_optimize(a: OptimizeArgs) -> CliResult<()> {
    let mut run = Run::new("pulse optimize", a.common.manifest);
    run.seed(a.seed);
    let window = match a.window.as_str() {
        "standard" => RobustnessWindow::standard(),
        "nominal" => RobustnessWindow::nominal(),
        w => return Err(CliError::Arg(format!("unknown window {w:?}; expected standard or nominal"))),
    };
    let config = OptimizerConfig {
        a_max: a.a_max,
        max_iters: a.max_iters,
        conv_tol: a.conv_tol,
        seed: a.seed,
        n_slices: a.slices,
        ..OptimizerConfig::default()
    };
    let result = optimize(&target(&a.target)?, &window, a.harmonics, a.duration, &config)?;
    let json = PulseFile::from_envelope(&a.name, &result.envelope).to_json();
    run.write_output(&a.out, json.as_bytes())?;
    if let Some(t) = &a.trace {
        let bytes = csv_bytes(|b| io::write_trace_csv(b, &result.trace))?;
        run.write_output(t, &bytes)?;
    }
    let peak = max_rabi(&ControlProgram::from(result.envelope.clone()), DEFAULT_RABI_SAMPLES);
    println!(
        "objective {:.6}  max_rabi {:.4} MHz  iterations {}  converged {}",
        result.final_objective,
        peak / 1e6,
        result.state.iterations,
        result.converged
    );
    run.finish()?;
    Ok(())
}

fn pulse_simulate(a: SimulateArgs) -> CliResult<()> {
    let mut run = Run::new("pulse simulate", a.common.manifest);
    let (_, env) = load_envelope(&mut run, &a.src.pulse)?;
    let program = ControlProgram::from(env);
    let initial = match a.initial {
        0 => KET0,
        1 => KET1,
        n => return Err(CliError::Arg(format!("initial state must be 0 or 1, got {n}"))),
    };
    let point = EnsemblePoint::new(a.det, a.scale, 1.0)?;
    let traj = bloch_trajectory(&program, &point, &initial, a.samples)?;
    let bytes = csv_bytes(|b| io::write_trajectory_csv(b, &traj))?;
    run.write_output(&a.out, &bytes)?;
    write_plot(&mut run, a.plot.as_deref(), &a.out, &bytes, PlotKind::Trajectory)?;
    let u = propagate(&program, &point)?;
    let end = traj.vectors.last().expect("at least two samples");
    println!(
        "final bloch ({:.6}, {:.6}, {:.6})  P(flip) {:.6}",
        end[0],
        end[1],
        end[2],
        u.flip_probability()
    );
    run.finish()?;
    Ok(())
}

fn pulse_landscape(a: LandscapeArgs) -> CliResult<()> {
    let mut run = Run::new("pulse landscape", a.common.manifest);
    let (_, env) = load_envelope(&mut run, &a.src.pulse)?;
    let program = ControlProgram::from(env);
    let l = landscape_with(&program, &target(&a.target)?, &a.det.0, &a.scale.0, a.slices)?;
    let bytes = csv_bytes(|b| io::write_landscape_csv(b, &l))?;
    run.write_output(&a.out, &bytes)?;
    write_plot(&mut run, a.plot.as_deref(), &a.out, &bytes, PlotKind::Landscape)?;
    println!(
        "{} cells  min fidelity {:.6}  cells with infidelity < 0.01: {}",
        a.det.0.len() * a.scale.0.len(),
        l.min(),
        l.count_infidelity_below(0.01)
    );
    run.finish()?;
    Ok(())
}

fn pulse_export_awg(a: AwgArgs) -> CliResult<()> {
    let mut run = Run::new("pulse export-awg", a.common.manifest);
    let (_, env) = load_envelope(&mut run, &a.src.pulse)?;
    let program = ControlProgram::from(env);
    let full_scale = if a.full_scale == "auto" {
        max_rabi(&program, DEFAULT_RABI_SAMPLES)
    } else {
        freq(&a.full_scale).map_err(CliError::Arg)?
    };
    let cfg = AwgExportConfig {
        include_endpoint: !a.no_endpoint,
        ..AwgExportConfig::new(a.rate, a.bits, full_scale)?
    };
    let table = io::export_awg(&program, &cfg)?;
    let bytes = if a.raw {
        csv_bytes(|b| table.write_raw(b))?
    } else {
        csv_bytes(|b| table.write_csv(b))?
    };
    run.write_output(&a.out, &bytes)?;
    println!("{} samples per channel, full scale {:.6} MHz", table.len(), full_scale / 1e6);
    run.finish()?;
    Ok(())
}

fn qpt_run(a: QptRunArgs) -> CliResult<()> {
    let mut run = Run::new("qpt run", a.common.manifest);
    run.seed(a.seed);
    let program = match (&a.pulse, a.hard_pi) {
        (Some(src), _) => ControlProgram::from(load_envelope(&mut run, src)?.1),
        (None, Some(rabi)) => make_hard_pi(rabi)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let shots = match a.shots.as_str() {
        "exact" => Shots::Exact,
        n => Shots::Sampled(
            n.parse()
                .map_err(|_| CliError::Arg(format!("--shots must be `exact` or a count, got {n:?}")))?,
        ),
    };
    let prep_readout = match a.prep.as_str() {
        "ideal" => PrepReadout::Ideal,
        r => PrepReadout::Rectangular {
            rabi_hz: freq(r).map_err(CliError::Arg)?,
        },
    };
    let config = TomographyConfig {
        shots,
        seed: a.seed,
        prep_readout,
    };
    let ideal = ideal_gate(&a.ideal)?;
    let process = Process::Program {
        program,
        point: EnsemblePoint::new(a.det, a.scale, 1.0)?,
    };
    let data = simulate_tomography(&process, &config)?;
    let chi = reconstruct_chi(&data.outputs);
    let (fid, clamped) = process_fidelity(&chi, &ideal);
    println!("process fidelity {fid:.6}{}", if clamped { " (clamped)" } else { "" });
    if let Some(out) = &a.out {
        run.write_output(out, ChiFile::from_chi(&chi).to_json().as_bytes())?;
    }
    run.finish()?;
    Ok(())
}

fn qpt_physicality(a: PhysicalityArgs) -> CliResult<()> {
    let mut run = Run::new("qpt physicality", a.common.manifest);
    run.seed(a.seed);
    let text = run.read_input(&a.chi)?;
    let chi = ChiFile::from_json(&text)?;
    let cfg = ProjectionConfig {
        starts: a.starts,
        seed: a.seed,
        ..ProjectionConfig::default()
    };
    let report = project_physical_with(&chi, &cfg)?;
    println!(
        "D {:.4}  Frobenius {:.4}  constraint residual {:.2e}",
        report.trace_distance, report.frobenius, report.constraint_residual
    );
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&PhysicalityFile::from(&report))
            .map_err(smoothctl::Error::from)?;
        json.push('\n');
        run.write_output(out, json.as_bytes())?;
    }
    run.finish()?;
    Ok(())
}

fn mag_sweep(a: MagSweepArgs) -> CliResult<()> {
    let mut run = Run::new("mag sweep", a.common.manifest);
    let model = match &a.model {
        Some(p) => {
            let text = run.read_input(p)?;
            serde_json::from_str::<SensorModel>(&text)
                .map_err(|e| smoothctl::Error::Format(format!("sensor model JSON: {e}")))?
        }
        None => SensorModel::default(),
    };
    model.validate()?;
    let smooth = EchoSequence::smooth(a.tau)?;
    let rect = if a.rect_rabi == "auto" {
        EchoSequence::rectangular_matched(a.tau)?
    } else {
        EchoSequence::rectangular(freq(&a.rect_rabi).map_err(CliError::Arg)?, a.tau)?
    };
    let b_star = match a.b_star.as_str() {
        "auto" => BStar::Auto,
        b => BStar::Fixed(parse_quantity(b, Dim::Field).map_err(CliError::Arg)?),
    };
    let l = sensitivity_landscape(&rect, &smooth, &a.det.0, &a.scale.0, &model, b_star)?;
    let bytes = csv_bytes(|b| io::write_sensitivity_csv(b, &l))?;
    run.write_output(&a.out, &bytes)?;
    write_plot(&mut run, a.plot.as_deref(), &a.out, &bytes, PlotKind::Sensitivity)?;
    for (name, grid) in [("rect", &l.rect), ("smooth", &l.smooth)] {
        let flat: Vec<f64> = grid.iter().flatten().copied().collect();
        let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().copied().fold(0.0, f64::max);
        println!("{name}: eta {lo:.4e} .. {hi:.4e} T/sqrt(Hz)  ratio {:.3}", hi / lo);
    }
    run.finish()?;
    Ok(())
}
