use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpp_core::calibrate::DegreeChoice;
use mpp_core::design::TipShape;

#[derive(Debug, Parser)]
#[command(
    name = "mpp",
    version,
    about = "Multihole pressure probe calibration and air-data estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic probe data from the forward model
    Synth {
        #[command(subcommand)]
        mode: SynthMode,
    },
    /// Fit a calibration bundle from wind-tunnel runs
    Calibrate(CalibrateArgs),
    /// Estimate airspeed and flow angles from a pressure log
    Estimate(EstimateArgs),
    /// Compare probe hardware designs
    DesignEval(DesignEvalArgs),
    /// Check estimates against pitot and velocity references from a flight log
    FlightValidate(FlightValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tip {
    Cone,
    Sphere,
}

impl From<Tip> for TipShape {
    fn from(t: Tip) -> Self {
        match t {
            Tip::Cone => TipShape::Cone,
            Tip::Sphere => TipShape::Sphere,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AngleGrid {
    /// Centre plus axis and diagonal directions at 17.5 and 35 degrees
    Star17,
    /// 9 x 9 square grid over +/-35 degrees
    Square81,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Tip::Cone)]
    pub tip: Tip,
    /// Override the tip's pressure falloff exponent
    #[arg(long)]
    pub sharpness: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum SynthMode {
    /// Calibration runs plus manifest
    Grid {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Sensor noise standard deviation, Pa
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', default_value = "3,6,9,12,15,18,21,24,27")]
        speeds: Vec<f64>,
        #[arg(long, value_enum, default_value_t = AngleGrid::Star17)]
        angles: AngleGrid,
        /// Seconds per run
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
        #[arg(long, default_value_t = 33.0)]
        fs: f64,
    },
    /// Long-format measurement matrix of the eight hardware designs
    Design {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 70)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,6,9,12")]
        speeds: Vec<f64>,
    },
    /// Zero-wind flight log with circling, stall and yaw segments
    Flight {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 50.0)]
        fs: f64,
        /// Pitot noise standard deviation, m/s
        #[arg(long, default_value_t = 0.1)]
        pitot_sigma: f64,
        /// Leave out the pitot column
        #[arg(long)]
        no_pitot: bool,
    },
}

pub fn parse_degree(s: &str) -> Result<DegreeChoice, String> {
    if s == "auto" {
        return Ok(DegreeChoice::Auto);
    }
    match s.parse::<usize>() {
        Ok(d) if d >= 1 => Ok(DegreeChoice::Fixed(d)),
        _ => Err(format!("expected `auto` or a positive integer, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Bundle JSON to write
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON; defaults to `<out stem>.report.json` next to the bundle
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for plot-ready CSVs
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_degree, default_value = "auto")]
    pub degree: DegreeChoice,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub no_augment: bool,
    /// Training fraction of the measured points
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    /// Low-pass cutoff, Hz
    #[arg(long, default_value_t = mpp_core::preprocess::DEFAULT_CUTOFF_HZ)]
    pub fc: f64,
    /// Minimum pressure magnitude, Pa
    #[arg(long, default_value_t = mpp_core::preprocess::DEFAULT_Q_MIN)]
    pub q_min: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sample rate, Hz; inferred from the median time step when omitted
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, default_value_t = mpp_core::preprocess::DEFAULT_CUTOFF_HZ)]
    pub fc: f64,
}

#[derive(Debug, Args)]
pub struct DesignEvalArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Long CSV of per-design metrics
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlightValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of the paired estimate, pitot and reference series
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, default_value_t = mpp_core::preprocess::DEFAULT_CUTOFF_HZ)]
    pub fc: f64,
    /// Pairing tolerance, s
    #[arg(long, default_value_t = mpp_core::flight::DEFAULT_ALIGN_TOL_S)]
    pub tol: f64,
    /// Minimum forward speed for reference angles, m/s
    #[arg(long, default_value_t = mpp_core::flight::DEFAULT_VX_MIN)]
    pub vx_min: f64,
}
