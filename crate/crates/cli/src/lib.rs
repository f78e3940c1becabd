//! Command-line pipeline: simulate fringe scans, calibrate, reconstruct the
//! idler state, sweep waveplate angles and verify the interferometer model.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;
pub mod manifest;
pub mod report;
pub mod sweep;
pub mod verify;

pub use manifest::RunManifest;
pub use sweep::SweepRow;
pub use verify::{VerifyCheck, VerifyReport};

#[derive(Debug, Parser)]
#[command(name = "idlertomo", version, about = "Polarization tomography of an undetected idler photon")]
pub struct Cli {
    /// Interferometer configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base seed for every random stream. Required by commands that draw noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory. Without it the primary result goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Format of tabular output on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate fringe scans for one or both signal settings.
    Simulate(SimulateArgs),
    /// Estimate |T_H| and |T_V| from scans with |H> and |V> idlers.
    Calibrate(CalibrateArgs),
    /// Reconstruct the idler density matrix from an H and a V scan.
    Reconstruct(ReconstructArgs),
    /// Reconstruct across a range of idler waveplate angles.
    Sweep(SweepArgs),
    /// Check the closed-form rates and state validity against the matrix pipeline.
    Verify(VerifyArgs),
    /// Print a saved reconstruction as a readable report.
    Report(ReportArgs),
}

/// Overrides applied on top of `--config` (or the default balanced setup).
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    /// Q1 pump amplitude. Alone, fixes b2 = sqrt(1 - b1^2); with --b2 both are normalized.
    #[arg(long)]
    pub b1: Option<f64>,
    /// Q2 pump amplitude magnitude.
    #[arg(long)]
    pub b2: Option<f64>,
    /// Relative pump phase in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Real idler transmission for H between the sources.
    #[arg(long = "t-h")]
    pub t_h: Option<f64>,
    /// Real idler transmission for V between the sources.
    #[arg(long = "t-v")]
    pub t_v: Option<f64>,
    /// Idler H population.
    #[arg(long = "p-h")]
    pub p_h: Option<f64>,
    /// Idler relative phase in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// Idler degree of coherence.
    #[arg(long)]
    pub purity: Option<f64>,
    /// Q2 H population.
    #[arg(long = "p-h2")]
    pub p_h2: Option<f64>,
    /// Q2 relative phase in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Cross-source coherence of the H-aligned term.
    #[arg(long = "coherence-l")]
    pub coherence_l: Option<f64>,
    /// Cross-source coherence of the V-aligned term.
    #[arg(long = "coherence-lp")]
    pub coherence_lp: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Phase points per scan, evenly spaced over one period.
    #[arg(long, default_value_t = idlertomo_core::acquisition::DEFAULT_SCAN_POINTS)]
    pub points: usize,
    /// Pair emissions per phase point.
    #[arg(long, default_value_t = idlertomo_core::acquisition::DEFAULT_COUNTS_PER_POINT)]
    pub n: u64,
    /// Report rounded expected counts instead of Poisson draws.
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    #[value(name = "H", alias = "h")]
    H,
    #[value(name = "V", alias = "v")]
    V,
    Both,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SettingArg::Both)]
    pub setting: SettingArg,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fringe,
    Mle,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Scan taken with the H signal setting (CSV or JSON).
    #[arg(long = "scan-h")]
    pub scan_h: PathBuf,
    /// Scan taken with the V signal setting (CSV or JSON).
    #[arg(long = "scan-v")]
    pub scan_v: PathBuf,
    /// Calibration JSON holding t_h and t_v.
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Mle)]
    pub method: MethodArg,
    /// Reference H population for the fidelity. Defaults to the truth stored in a JSON scan.
    #[arg(long = "ref-p-h")]
    pub ref_p_h: Option<f64>,
    #[arg(long = "ref-xi", allow_hyphen_values = true, default_value_t = 0.0)]
    pub ref_xi: f64,
    #[arg(long = "ref-purity", default_value_t = 1.0)]
    pub ref_purity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlateArg {
    Hwp,
    Qwp,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value_t = PlateArg::Hwp)]
    pub plate: PlateArg,
    /// Plate angles in degrees, comma separated. Default 0 to 45 in 5 degree steps.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub angles: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Mle)]
    pub method: MethodArg,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random configurations to test.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Reconstruction JSON written by `reconstruct`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] idlertomo_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(idlertomo_core::Error::NotConverged { .. }) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs a parsed command, writing its stdout output to `out`.
pub fn run<W: Write>(cli: &Cli, out: &mut W) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(cli, a, out),
        Command::Calibrate(a) => commands::calibrate(cli, a, out),
        Command::Reconstruct(a) => commands::reconstruct(cli, a, out),
        Command::Sweep(a) => commands::sweep(cli, a, out),
        Command::Verify(a) => commands::verify(cli, a, out),
        Command::Report(a) => commands::report(a, out),
    }
}

pub(crate) fn require_seed(cli: &Cli) -> CliResult<u64> {
    cli.seed.ok_or_else(|| {
        CliError::Usage("--seed is required: every noisy run must name its seed explicitly".into())
    })
}
