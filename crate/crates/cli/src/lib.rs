//! `tmyag` command-line front end.
//!
//! Every subcommand writes one CSV table (stdout, or `--out FILE`) and a
//! [`RunManifest`] (stderr, or `FILE.manifest.json`). Values stay SI inside
//! the tables; flags take the units their names carry (`--grid-span-GHz`,
//! `--theta-deg`, ...).
//!
//! Exit codes: 0 success, 1 computation error (error name on stderr),
//! 2 usage error.

pub mod commands;
pub mod output;
pub mod reproduce;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use tmyag_core::constants::{read_constants_unchecked, ConstantsError};
use tmyag_core::fitting::FitError;
use tmyag_core::geometry::GeometryError;
use tmyag_core::spectra::SpectraError;
use tmyag_core::zeeman::ZeemanError;
use tmyag_core::{load_constants, MaterialConstants, RelaxError};

pub use output::{RunManifest, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// An error carrying the name printed on stderr and the exit class.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Usage { name: &'static str, message: String },
    /// Exit 1.
    Compute { name: &'static str, message: String },
}

impl CliError {
    pub fn usage(name: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage { name, message: message.into() }
    }

    pub fn compute(name: &'static str, message: impl Into<String>) -> Self {
        CliError::Compute { name, message: message.into() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Usage { name, .. } | CliError::Compute { name, .. } => name,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Compute { .. } => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage { name, message } | CliError::Compute { name, message } => {
                write!(f, "{name}: {message}")
            }
        }
    }
}

macro_rules! compute_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::compute(e.name(), e.to_string())
            }
        }
    )*};
}
compute_from!(ConstantsError, GeometryError, ZeemanError, SpectraError, RelaxError, FitError);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let name = if e.kind() == std::io::ErrorKind::NotFound { "FileNotFound" } else { "IoError" };
        CliError::compute(name, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::compute("ParseError", e.to_string())
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "tmyag",
    about = "Quadratic Zeeman shifts, spectra and spin relaxation of Tm:YAG",
    disable_version_flag = true
)]
pub struct Cli {
    /// Print version and the default constants hash
    #[arg(short = 'V', long)]
    #[serde(skip)]
    pub version: bool,

    /// Constants JSON file, or "default" for the built-in set
    #[arg(long, global = true, default_value = "default")]
    pub constants: String,

    /// Write the CSV here instead of stdout (manifest goes to FILE.manifest.json)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Per-site local field, splittings and shifts at one field
    SiteTable(SiteTableArgs),
    /// Optical shift of each equivalence class versus field angle
    ShiftCurve(ShiftCurveArgs),
    /// Optical shift of each class versus field magnitude
    #[command(name = "shift-vs-B")]
    ShiftVsB(ShiftVsBArgs),
    /// Synthesized absorption (or transmission) spectrum
    Spectrum(SpectrumArgs),
    /// Lorentzian fit of a spectrum CSV
    FitSpectrum(FitSpectrumArgs),
    /// Relaxation rate and its three terms on a (B, T) list
    RelaxRate(RelaxRateArgs),
    /// Dominant relaxation process on a B x T grid
    DominanceMap(DominanceMapArgs),
    /// Simulate a hole-area decay, or fit T1 to one
    HoleDecay(HoleDecayArgs),
    /// Joint fit of the rate law to (B, T, rate, sigma) CSVs
    FitRelax(FitRelaxArgs),
    /// Order-of-magnitude direct-process coefficient from acoustic data
    Bleaney(BleaneyArgs),
    /// Regenerate every figure/table analogue and a PASS/FAIL summary
    ReproducePaper(ReproduceArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SiteTable(_) => "site-table",
            Command::ShiftCurve(_) => "shift-curve",
            Command::ShiftVsB(_) => "shift-vs-B",
            Command::Spectrum(_) => "spectrum",
            Command::FitSpectrum(_) => "fit-spectrum",
            Command::RelaxRate(_) => "relax-rate",
            Command::DominanceMap(_) => "dominance-map",
            Command::HoleDecay(_) => "hole-decay",
            Command::FitRelax(_) => "fit-relax",
            Command::Bleaney(_) => "bleaney",
            Command::ReproducePaper(_) => "reproduce-paper",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SiteTableArgs {
    /// Field magnitude, T
    #[arg(long = "B", default_value_t = 1.0)]
    pub b: f64,
    /// Field angle from [111] toward [-1-12], degrees
    #[arg(long = "theta-deg", default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_deg: f64,
    /// Probe polarization: 111, -1-12 or x,y,z
    #[arg(long, default_value = "111", allow_hyphen_values = true)]
    pub pol: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ShiftCurveArgs {
    #[arg(long = "B", default_value_t = 6.0)]
    pub b: f64,
    #[arg(long = "theta-min-deg", default_value_t = -90.0, allow_hyphen_values = true)]
    pub theta_min_deg: f64,
    #[arg(long = "theta-max-deg", default_value_t = 90.0, allow_hyphen_values = true)]
    pub theta_max_deg: f64,
    #[arg(long = "theta-step-deg", default_value_t = 1.0)]
    pub theta_step_deg: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ShiftVsBArgs {
    #[arg(long = "theta-deg", default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_deg: f64,
    /// Keep only classes this polarization addresses
    #[arg(long, allow_hyphen_values = true)]
    pub pol: Option<String>,
    #[arg(long = "B-max", default_value_t = 6.0)]
    pub b_max: f64,
    #[arg(long = "B-step", default_value_t = 0.1)]
    pub b_step: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long = "B", default_value_t = 0.0)]
    pub b: f64,
    #[arg(long = "theta-deg", default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_deg: f64,
    #[arg(long, default_value = "111", allow_hyphen_values = true)]
    pub pol: String,
    #[arg(long = "grid-span-GHz", default_value_t = 400.0)]
    pub grid_span_ghz: f64,
    #[arg(long = "grid-step-MHz", default_value_t = 100.0)]
    pub grid_step_mhz: f64,
    /// Crystal length, mm (needed for --transmission)
    #[arg(long = "length-mm")]
    pub length_mm: Option<f64>,
    /// Emit exp(-alpha L) instead of alpha
    #[arg(long, requires = "length_mm")]
    pub transmission: bool,
    /// Relative multiplicative noise on alpha
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitSpectrumArgs {
    /// CSV with detuning_Hz and alpha_per_cm (or transmission) columns
    #[arg(long)]
    pub input: PathBuf,
    /// Number of Lorentzians; defaults to 1, or to the model's line count with --B
    #[arg(long = "n-lines")]
    pub n_lines: Option<usize>,
    /// Crystal length, mm, for transmission input
    #[arg(long = "length-mm")]
    pub length_mm: Option<f64>,
    /// Comma-separated starting centres, GHz
    #[arg(long = "init-centers-GHz", value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "b")]
    pub init_centers_ghz: Option<Vec<f64>>,
    /// Starting FWHM for --init-centers-GHz, GHz
    #[arg(long = "init-fwhm-GHz", default_value_t = 17.0)]
    pub init_fwhm_ghz: f64,
    /// Start from the model lines at this field (T)
    #[arg(long = "B")]
    pub b: Option<f64>,
    #[arg(long = "theta-deg", default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_deg: f64,
    #[arg(long, default_value = "111", allow_hyphen_values = true)]
    pub pol: String,
}

#[derive(Debug, Args, Serialize)]
pub struct RateModelArgs {
    /// Ground-state splitting per tesla entering the direct term, MHz/T
    #[arg(long = "gamma-MHz-per-T", default_value_t = 400.0)]
    pub gamma_mhz_per_t: f64,
    /// JSON file with R0, alpha_D, alpha, beta, delta_CF0, gamma_CF (SI)
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RelaxRateArgs {
    /// Fields, T (comma-separated)
    #[arg(long = "B", value_delimiter = ',', default_value = "6")]
    pub b: Vec<f64>,
    /// Temperatures, K (comma-separated)
    #[arg(long = "T", value_delimiter = ',', default_value = "1.6")]
    pub t: Vec<f64>,
    /// Site index; site 2 is outside the model
    #[arg(long)]
    pub site: Option<i64>,
    #[command(flatten)]
    pub model: RateModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DominanceMapArgs {
    #[arg(long = "B-min", default_value_t = 0.0)]
    pub b_min: f64,
    #[arg(long = "B-max", default_value_t = 6.0)]
    pub b_max: f64,
    #[arg(long = "B-points", default_value_t = 61)]
    pub b_points: usize,
    #[arg(long = "T-min", default_value_t = 1.3)]
    pub t_min: f64,
    #[arg(long = "T-max", default_value_t = 5.0)]
    pub t_max: f64,
    #[arg(long = "T-points", default_value_t = 38)]
    pub t_points: usize,
    #[command(flatten)]
    pub model: RateModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct HoleDecayArgs {
    /// Fit T1 to this time_s,area CSV instead of simulating
    #[arg(long, conflicts_with_all = ["rate_hz", "b", "t"])]
    pub input: Option<PathBuf>,
    /// Decay rate to simulate, Hz
    #[arg(long = "rate-Hz", conflicts_with_all = ["b", "t"])]
    pub rate_hz: Option<f64>,
    /// Take the rate from the model at this field (T) ...
    #[arg(long = "B", requires = "t")]
    pub b: Option<f64>,
    /// ... and temperature (K)
    #[arg(long = "T", requires = "b")]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 12)]
    pub points: usize,
    /// Time window in half-lives
    #[arg(long = "half-lives", default_value_t = 3.0)]
    pub half_lives: f64,
    #[arg(long = "A0", default_value_t = 1.0)]
    pub a0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: RateModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FitRelaxArgs {
    /// Dataset CSV(s) with header B_T,T_K,rate_Hz,sigma_Hz; labelled by file stem
    #[arg(long, required_unless_present = "synthetic")]
    pub input: Vec<PathBuf>,
    /// Fit the three built-in synthetic series instead
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    /// Relative noise of the synthetic series
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starting point JSON (same schema as --params); defaults to the published values
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long = "gamma-MHz-per-T", default_value_t = 400.0)]
    pub gamma_mhz_per_t: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct BleaneyArgs {
    #[arg(long = "gamma-MHz-per-T", default_value_t = 400.0)]
    pub gamma_mhz_per_t: f64,
    /// Density, kg/m^3 (default from constants)
    #[arg(long)]
    pub rho: Option<f64>,
    /// Longitudinal sound velocity, m/s
    #[arg(long = "v-l")]
    pub v_l: Option<f64>,
    /// Transverse sound velocity, m/s
    #[arg(long = "v-t")]
    pub v_t: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    /// Existing directory for the CSVs, summary and manifest
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn clap_error_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::InvalidSubcommand => "UnknownSubcommand",
        ErrorKind::ArgumentConflict => "ConflictingFlags",
        ErrorKind::MissingRequiredArgument => "MissingFlag",
        ErrorKind::UnknownArgument => "UnknownFlag",
        ErrorKind::ValueValidation | ErrorKind::InvalidValue => "InvalidValue",
        _ => "UsageError",
    }
}

/// Strict load for every subcommand except `reproduce-paper`, which reports
/// invariant violations as failed checks instead.
fn constants_for(cli: &Cli, cmd: &Command) -> Result<MaterialConstants, CliError> {
    match cmd {
        Command::ReproducePaper(_) => Ok(read_constants_unchecked(&cli.constants)?),
        _ => Ok(load_constants(&cli.constants)?),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                kind => {
                    eprintln!("{}: {}", clap_error_name(kind), e.render().to_string().trim_end());
                    2
                }
            };
        }
    };
    if cli.version {
        let hash = read_constants_unchecked(&cli.constants)
            .map(|c| c.hash())
            .unwrap_or_else(|_| MaterialConstants::default_set().hash());
        println!("tmyag {VERSION} constants {hash}");
        return 0;
    }
    let Some(cmd) = &cli.command else {
        eprintln!("MissingSubcommand: expected one of site-table, shift-curve, shift-vs-B, spectrum, fit-spectrum, relax-rate, dominance-map, hole-decay, fit-relax, bleaney, reproduce-paper");
        return 2;
    };
    match execute(&cli, cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, cmd: &Command) -> Result<i32, CliError> {
    let consts = constants_for(cli, cmd)?;
    let manifest = RunManifest::new(cmd.name(), cli, &consts);
    if let Command::ReproducePaper(args) = cmd {
        return reproduce::run(args, &consts, &manifest);
    }
    let table = match cmd {
        Command::SiteTable(a) => commands::site_table(a, &consts)?,
        Command::ShiftCurve(a) => commands::shift_curve(a, &consts)?,
        Command::ShiftVsB(a) => commands::shift_vs_b(a, &consts)?,
        Command::Spectrum(a) => commands::spectrum(a, &consts)?,
        Command::FitSpectrum(a) => commands::fit_spectrum(a, &consts)?,
        Command::RelaxRate(a) => commands::relax_rate(a)?,
        Command::DominanceMap(a) => commands::dominance_map(a)?,
        Command::HoleDecay(a) => commands::hole_decay(a)?,
        Command::FitRelax(a) => commands::fit_relax(a)?,
        Command::Bleaney(a) => commands::bleaney(a, &consts)?,
        Command::ReproducePaper(_) => unreachable!(),
    };
    output::emit(&table, cli.out.as_deref(), &manifest)?;
    Ok(0)
}
