//! Command-line driver for the lift capability pipeline.
//!
//! Values come from built-in defaults, then an optional TOML `--config`
//! file, then command-line flags, each overriding the one before.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use liftcap_core::capability::PenaltyWeights;
use liftcap_core::dynamics::ExerciseSetup;
use liftcap_core::fatigue::RepOutcome;
use liftcap_core::formats::{
    manifest_from_json, read_displacement_csv, read_profile, tracks_to_json, write_displacement_csv,
    write_elevation_csv, write_path_csv, write_profile, write_segments_csv,
};
use liftcap_core::kinematics::{
    calibrate, fit_spline, segment_concentric, spline_derivatives, Calibration, ElevationSeries, SegmentationParams,
    DEFAULT_OMEGA,
};
use liftcap_core::pipeline::{reconstruct_profile, track_load, ReconstructionParams};
use liftcap_core::simulation::{
    brzycki_1rm, default_1rm_tolerance, estimate_1rm, simulate_set, Policy, SimulationConfig, DEFAULT_MAX_REPS,
};
use liftcap_core::units::kg_to_lb;
use liftcap_core::vision::{load_frames, Polygon, TrackerConfig};
use liftcap_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: u8 = 0;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => EXIT_BAD_INPUT,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "liftcap",
    version,
    about = "Track lifts, reconstruct capability profiles and simulate training sets"
)]
pub struct Cli {
    /// TOML file with default values for any of the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track the load through a frame sequence.
    Track(TrackArgs),
    /// Convert a displacement CSV to elevation, velocity and acceleration.
    Kinematics(KinematicsArgs),
    /// Reconstruct a capability profile from failed repetitions.
    Reconstruct(ReconstructArgs),
    /// Simulate sets, estimate the 1RM or apply the Brzycki formula.
    Simulate {
        #[command(subcommand)]
        mode: SimulateMode,
    },
    /// Run the HTTP session service (bind address from LIFTCAP_BIND).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directory of frame_000000.pgm (or .png) files.
    #[arg(long)]
    pub frames: PathBuf,
    /// Load outline in pixels: x1,y1,x2,y2,... (at least three vertices).
    #[arg(long, allow_hyphen_values = true)]
    pub roi: String,
    /// Output directory for tracks.json and displacement.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct CalibrationArgs {
    /// Metres per pixel.
    #[arg(long, conflicts_with = "calibrate")]
    pub scale: Option<f64>,
    /// Reference object as PIXELS,METRES.
    #[arg(long)]
    pub calibrate: Option<String>,
    /// Frame interval, s.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KinematicsArgs {
    #[arg(long)]
    pub displacement: PathBuf,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    /// Spline smoothing weight in (0, 1).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Elevation CSV with derivative columns.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of detected concentric segments.
    #[arg(long)]
    pub segments: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SetupArgs {
    /// Load mass, kg.
    #[arg(long)]
    pub mass: Option<f64>,
    /// Countermass, kg.
    #[arg(long)]
    pub countermass: Option<f64>,
    /// Viscous constant, N·s/m.
    #[arg(long)]
    pub viscosity: Option<f64>,
    /// Range of motion, m.
    #[arg(long)]
    pub rom: Option<f64>,
    /// Fatigue time constant, s ("inf" disables fatigue).
    #[arg(long)]
    pub tf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub displacement: PathBuf,
    /// Sets manifest (JSON) marking each repetition's samples and outcome.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[command(flatten)]
    pub setup: SetupArgs,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Output profile file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    MaxExertion,
    MinimalFatigue,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::MaxExertion => Policy::MaxExertion,
            PolicyArg::MinimalFatigue => Policy::MinimalFatigue,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SimulateMode {
    /// Run one set to failure.
    Set {
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, value_enum, default_value = "minimal-fatigue")]
        policy: PolicyArg,
        #[arg(long)]
        max_reps: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        /// Directory for one path CSV per repetition.
        #[arg(long)]
        paths: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the one-repetition maximum.
    #[command(name = "1rm")]
    OneRm {
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        /// Search tolerance, kg.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 1RM from an n-repetition maximum by the Brzycki formula.
    Brzycki {
        /// Load lifted, any unit; the result uses the same unit.
        #[arg(long)]
        weight: f64,
        #[arg(long)]
        reps: u32,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding one JSON file per session.
    #[arg(long, default_value = "liftcap-sessions")]
    pub store: PathBuf,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Frame interval, s.
    pub dt: Option<f64>,
    /// Integration step for simulations, s.
    pub sim_dt: Option<f64>,
    pub omega: Option<f64>,
    pub tf: Option<f64>,
    pub mass: Option<f64>,
    pub countermass: Option<f64>,
    pub viscosity: Option<f64>,
    pub rom: Option<f64>,
    pub metres_per_pixel: Option<f64>,
    pub max_reps: Option<usize>,
    pub tracker: Option<TrackerConfig>,
    pub weights: Option<PenaltyWeights>,
    pub segmentation: Option<SegmentationParams>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub fn parse_roi(text: &str) -> Result<Polygon> {
    let nums = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("bad ROI coordinate {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if nums.len() % 2 != 0 {
        return Err(invalid("ROI needs an even number of coordinates"));
    }
    Polygon::new(nums.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn resolve_calibration(args: &CalibrationArgs, cfg: &Config) -> Result<(Calibration, f64)> {
    let cal = match (&args.scale, &args.calibrate) {
        (Some(k), _) => Calibration::new(*k)?,
        (None, Some(pair)) => {
            let parts: Vec<&str> = pair.split(',').collect();
            let [px, m] = parts.as_slice() else {
                return Err(invalid("--calibrate takes PIXELS,METRES"));
            };
            let px: f64 = px
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad pixel length {px:?}")))?;
            let m: f64 = m
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad physical length {m:?}")))?;
            calibrate(px, m)?
        }
        (None, None) => Calibration::new(
            cfg.metres_per_pixel
                .ok_or_else(|| invalid("no calibration: give --scale, --calibrate or metres_per_pixel"))?,
        )?,
    };
    let dt = args
        .dt
        .or(cfg.dt)
        .ok_or_else(|| invalid("frame interval missing: give --dt or dt in the config"))?;
    Ok((cal, dt))
}

fn resolve_setup(args: &SetupArgs, cfg: &Config, default_rom: Option<f64>) -> Result<(ExerciseSetup, f64)> {
    let m = args
        .mass
        .or(cfg.mass)
        .ok_or_else(|| invalid("load mass missing: give --mass"))?;
    let rom = args
        .rom
        .or(cfg.rom)
        .or(default_rom)
        .ok_or_else(|| invalid("range of motion missing: give --rom"))?;
    let setup = ExerciseSetup::new(
        m,
        args.countermass.or(cfg.countermass).unwrap_or(0.0),
        args.viscosity.or(cfg.viscosity).unwrap_or(0.0),
        rom,
    )?;
    let tf = args
        .tf
        .or(cfg.tf)
        .ok_or_else(|| invalid("fatigue time constant missing: give --tf"))?;
    if !(tf > 0.0) {
        return Err(invalid(format!("--tf must be positive, got {tf}")));
    }
    Ok((setup, tf))
}

fn displacement_series(path: &Path, args: &CalibrationArgs, cfg: &Config) -> Result<ElevationSeries> {
    let d = read_displacement_csv(BufReader::new(File::open(path)?))?;
    let (cal, dt) = resolve_calibration(args, cfg)?;
    let dy: Vec<f64> = d.iter().map(|p| p.1).collect();
    cal.elevation_from_rows(dt, &dy)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TrackSummary {
    pub frames: usize,
    pub tracks: usize,
    pub tracks_alive: usize,
    pub flagged_frames: usize,
}

#[derive(Debug, Serialize)]
pub struct RepReport {
    pub completed: bool,
    pub duration_s: f64,
    pub failed_at_m: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SetReport {
    pub policy: PolicyArg,
    pub load_kg: f64,
    /// Completed repetitions.
    pub reps: usize,
    /// Duration of every simulated repetition, the last one included.
    pub durations_s: Vec<f64>,
    pub repetitions: Vec<RepReport>,
    pub paths_csv_refs: Vec<PathBuf>,
    pub final_fatigue: f64,
    /// Simulated 1RM, kg; absent if the profile cannot lift any load.
    pub w1_estimate: Option<f64>,
    /// Brzycki 1RM from `reps` at this load, kg; absent outside its range.
    pub brzycki_estimate: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct OneRmReport {
    pub one_rm_kg: f64,
    pub one_rm_lb: f64,
    pub tolerance_kg: f64,
}

#[derive(Debug, Serialize)]
pub struct BrzyckiReport {
    pub weight: f64,
    pub reps: u32,
    pub one_rm: f64,
}

#[derive(Debug, Serialize)]
pub struct ReconstructSummary {
    pub failed_reps: usize,
    pub known_nodes: usize,
    pub set_scales: Vec<f64>,
    pub grid: [usize; 2],
    pub v_max_mps: f64,
}

/// Runs a parsed command line. Reports go to `stdout` unless an output file
/// is given.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Track(a) => {
            let roi = parse_roi(&a.roi)?;
            let frames = load_frames(&a.frames)?;
            let tracker = cfg.tracker.clone().unwrap_or_default();
            let out = track_load(&frames, &roi, &tracker)?;
            fs::create_dir_all(&a.out)?;
            fs::write(a.out.join("tracks.json"), tracks_to_json(&out.tracks, frames.len())?)?;
            let f = BufWriter::new(File::create(a.out.join("displacement.csv"))?);
            write_displacement_csv(f, &out.displacement)?;
            write_json(
                &TrackSummary {
                    frames: frames.len(),
                    tracks: out.tracks.len(),
                    tracks_alive: out.tracks.iter().filter(|t| t.alive).count(),
                    flagged_frames: out.displacement.iter().filter(|d| d.flagged).count(),
                },
                None,
                stdout,
            )
        }
        Command::Kinematics(a) => {
            let series = displacement_series(&a.displacement, &a.calibration, &cfg)?;
            let omega = a.omega.or(cfg.omega).unwrap_or(DEFAULT_OMEGA);
            let (v, acc) = spline_derivatives(&fit_spline(&series, omega)?);
            write_elevation_csv(BufWriter::new(File::create(&a.out)?), &series, Some((&v, &acc)))?;
            if let Some(path) = &a.segments {
                let params = SegmentationParams {
                    omega,
                    ..cfg.segmentation.unwrap_or_default()
                };
                let segs = segment_concentric(&series, &params)?;
                write_segments_csv(BufWriter::new(File::create(path)?), &segs)?;
            }
            Ok(())
        }
        Command::Reconstruct(a) => {
            let series = displacement_series(&a.displacement, &a.calibration, &cfg)?;
            let manifest = manifest_from_json(&fs::read_to_string(&a.manifest)?)?;
            let (setup, t_f) = resolve_setup(&a.setup, &cfg, None)?;
            let params = ReconstructionParams {
                omega: a.omega.or(cfg.omega).unwrap_or(DEFAULT_OMEGA),
                t_f,
                weights: cfg.weights.unwrap_or_default(),
            };
            let out = reconstruct_profile(&series, &manifest, &setup, &params)?;
            write_profile(&a.out, &out.profile, &out.mask)?;
            let g = out.profile.grid();
            write_json(
                &ReconstructSummary {
                    failed_reps: out.paths.len(),
                    known_nodes: out.mask.count(),
                    set_scales: out.scales,
                    grid: [g.n_delta, g.n_v],
                    v_max_mps: g.v_max,
                },
                None,
                stdout,
            )
        }
        Command::Simulate { mode } => simulate(mode, &cfg, stdout),
        Command::Serve(a) => {
            let addr = liftcap_service::bind_address().map_err(service_err)?;
            let rt = tokio::runtime::Runtime::new()?;
            writeln!(stdout, "listening on http://{addr}")?;
            rt.block_on(liftcap_service::serve(addr, a.store)).map_err(service_err)
        }
    }
}

fn service_err(e: liftcap_service::ApiError) -> Error {
    match e {
        liftcap_service::ApiError::Core(e) => e,
        other => Error::InvalidInput(other.to_string()),
    }
}

fn sim_config(dt: Option<f64>, cfg: &Config) -> Result<SimulationConfig> {
    let dt = dt.or(cfg.sim_dt).unwrap_or(SimulationConfig::default().dt);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("integration step must be positive, got {dt}")));
    }
    Ok(SimulationConfig {
        dt,
        ..SimulationConfig::default()
    })
}

fn simulate(mode: SimulateMode, cfg: &Config, stdout: &mut dyn Write) -> Result<()> {
    match mode {
        SimulateMode::Set {
            profile,
            setup,
            policy,
            max_reps,
            dt,
            paths,
            out,
        } => {
            let (profile, _) = read_profile(&profile)?;
            let (setup, t_f) = resolve_setup(&setup, cfg, Some(profile.delta_max()))?;
            let sim = sim_config(dt, cfg)?;
            let cap = max_reps.or(cfg.max_reps).unwrap_or(DEFAULT_MAX_REPS);
            let set = simulate_set(&profile, &setup, t_f, policy.into(), cap, &sim)?;
            let mut paths_csv_refs = Vec::new();
            if let Some(dir) = &paths {
                fs::create_dir_all(dir)?;
                for (k, r) in set.reps.iter().enumerate() {
                    let path = dir.join(format!("rep_{:03}.csv", k + 1));
                    write_path_csv(BufWriter::new(File::create(&path)?), &r.path)?;
                    paths_csv_refs.push(path);
                }
            }
            let w1_estimate = match estimate_1rm(&profile, &setup, t_f, default_1rm_tolerance(), &sim) {
                Ok(m) => Some(m),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            };
            let reps = set.completed();
            let report = SetReport {
                policy,
                load_kg: setup.m,
                reps,
                durations_s: set.reps.iter().map(|r| r.duration()).collect(),
                paths_csv_refs,
                w1_estimate,
                brzycki_estimate: u32::try_from(reps).ok().and_then(|n| brzycki_1rm(setup.m, n).ok()),
                repetitions: set
                    .reps
                    .iter()
                    .map(|r| RepReport {
                        completed: r.outcome.completed(),
                        duration_s: r.duration(),
                        failed_at_m: match r.outcome {
                            RepOutcome::Failed { delta } => Some(delta),
                            RepOutcome::Completed => None,
                        },
                    })
                    .collect(),
                final_fatigue: set.final_state.l(),
            };
            write_json(&report, out.as_deref(), stdout)
        }
        SimulateMode::OneRm {
            profile,
            setup,
            tol,
            dt,
            out,
        } => {
            let (profile, _) = read_profile(&profile)?;
            // the load is searched for, so the mass flag is optional here
            let setup = SetupArgs {
                mass: setup.mass.or(cfg.mass).or(Some(1.0)),
                ..setup
            };
            let (setup, t_f) = resolve_setup(&setup, cfg, Some(profile.delta_max()))?;
            let sim = sim_config(dt, cfg)?;
            let tol = tol.unwrap_or_else(default_1rm_tolerance);
            let m = estimate_1rm(&profile, &setup, t_f, tol, &sim)?;
            write_json(
                &OneRmReport {
                    one_rm_kg: m,
                    one_rm_lb: kg_to_lb(m),
                    tolerance_kg: tol,
                },
                out.as_deref(),
                stdout,
            )
        }
        SimulateMode::Brzycki { weight, reps } => {
            let one_rm = brzycki_1rm(weight, reps)?;
            write_json(&BrzyckiReport { weight, reps, one_rm }, None, stdout)
        }
    }
}
