//! `hemomap`: CVR and bolus-arrival-time mapping from BOLD fMRI.
//!
//! Exit status: 0 success, 1 usage error, 2 data error.

mod commands;
mod report;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use hemomap::pipeline::{GrrsConfig, HcConfig, ReferenceTiming};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "hemomap", version, about = "CVR and bolus arrival time maps from BOLD fMRI")]
struct Cli {
    /// Worker threads for voxel-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice (phantom noise, fold shuffles).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with `grrs`, `hc`, `threads` and `seed` entries; flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resting-state pipeline: CVR (β₀, β₁, ratio) and BAT z-maps plus the GLM residual.
    Grrs(GrrsArgs),
    /// Hypercapnic pipeline: CVR and BAT z-maps from BOLD and a CO₂ trace.
    Hc(HcArgs),
    /// Residual cross-correlation maps, one per atlas label.
    Ccbank(CcbankArgs),
    /// Synthetic phantom with known CVR and BAT.
    Phantom(PhantomArgs),
    /// Compare a predicted map with a reference map.
    Metrics(MetricsArgs),
    /// ROI means, test-retest ICC and Dice, or per-ROI group effect sizes.
    RoiTable(RoiTableArgs),
    /// Padded, clipped channel stacks and fold assignments for the slice-wise network.
    PrepDl(PrepDlArgs),
    /// PNG slice mosaics and a results table for a subject manifest.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy)]
pub struct Fwhm(pub Option<f64>);

fn parse_fwhm(s: &str) -> Result<Fwhm, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Fwhm(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Fwhm(Some(v))),
        _ => Err(format!("expected a positive width in mm or `none`, got `{s}`")),
    }
}

fn parse_timing(s: &str) -> Result<ReferenceTiming, String> {
    match s {
        "before-smoothing" => Ok(ReferenceTiming::BeforeSmoothing),
        "after-smoothing" => Ok(ReferenceTiming::AfterSmoothing),
        _ => Err("expected `before-smoothing` or `after-smoothing`".into()),
    }
}

#[derive(Debug, Args)]
pub struct GrrsArgs {
    #[arg(long)]
    pub bold: PathBuf,
    #[arg(long)]
    pub cerebellum_mask: PathBuf,
    #[arg(long)]
    pub brain_mask: PathBuf,
    /// Six-column motion parameter CSV, one row per volume.
    #[arg(long)]
    pub motion: Option<PathBuf>,
    /// Recorded in the manifest for `ccbank` / `prep-dl`.
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "sub")]
    pub subject_id: String,
    /// Smoothing FWHM in mm, or `none`.
    #[arg(long, value_parser = parse_fwhm)]
    pub fwhm: Option<Fwhm>,
    #[arg(long, value_parser = parse_timing)]
    pub reference_timing: Option<ReferenceTiming>,
}

#[derive(Debug, Args)]
pub struct HcArgs {
    #[arg(long)]
    pub bold: PathBuf,
    /// `time_s,co2_mmhg` CSV, uniformly sampled, time origin at the first BOLD volume.
    #[arg(long)]
    pub co2: PathBuf,
    #[arg(long)]
    pub cerebellum_mask: PathBuf,
    #[arg(long)]
    pub brain_mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "sub")]
    pub subject_id: String,
    #[arg(long, value_parser = parse_fwhm)]
    pub fwhm: Option<Fwhm>,
    /// Fixed baseline EtCO₂ (mmHg) instead of the lowest-quartile estimate.
    #[arg(long)]
    pub b_etco2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CcbankArgs {
    /// 4-D GLM residual written by `grrs`.
    #[arg(long)]
    pub residual: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long)]
    pub brain_mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "sub")]
    pub subject_id: String,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Voxels to compare (default: whole grid).
    #[arg(long)]
    pub brain_mask: Option<PathBuf>,
    /// SSIM dynamic range (default: in-mask range of the reference).
    #[arg(long)]
    pub dynamic_range: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoiTableArgs {
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long)]
    pub brain_mask: Option<PathBuf>,
    /// Second session of the same subject: adds ICC(2,1) across ROIs.
    #[arg(long)]
    pub retest_map: Option<PathBuf>,
    /// With --retest-map: Dice of the two `value > threshold` masks.
    #[arg(long)]
    pub dice_threshold: Option<f64>,
    /// ROI tables (label,value CSV) of group A, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub group_a: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub group_b: Vec<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepDlArgs {
    /// CSV with `subject_id,grrs_manifest,hc_manifest[,stratum]`; paths relative to the CSV.
    #[arg(long)]
    pub subjects: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = hemomap::dlprep::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Atlas for the supplementary channels (default: the one in each GRRS manifest).
    #[arg(long)]
    pub atlas: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per voxel in the mosaics.
    #[arg(long, default_value_t = 2)]
    pub scale: u32,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub grrs: GrrsConfig,
    pub hc: HcConfig,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// Resolved global settings.
#[derive(Debug)]
pub struct Settings {
    pub config: FileConfig,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<hemomap::Error> for CliError {
    fn from(e: hemomap::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub trait Context<T> {
    fn ctx(self, what: impl Display) -> Result<T, CliError>;
}

impl<T> Context<T> for hemomap::Result<T> {
    fn ctx(self, what: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Data(format!("{what}: {e}")))
    }
}

/// Labels an input for error messages: `--flag path`.
pub fn flag(name: &str, path: &Path) -> String {
    format!("{name} {}", path.display())
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("--config {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let threads = cli.threads.or(config.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Data(format!("--threads {n}: {e}")))?;
    }
    let settings = Settings {
        seed: cli.seed.or(config.seed),
        config,
    };
    match cli.command {
        Command::Grrs(a) => commands::grrs(&a, &settings),
        Command::Hc(a) => commands::hc(&a, &settings),
        Command::Ccbank(a) => commands::ccbank(&a, &settings),
        Command::Phantom(a) => commands::phantom(&a, &settings),
        Command::Metrics(a) => commands::metrics(&a),
        Command::RoiTable(a) => commands::roi_table(&a),
        Command::PrepDl(a) => commands::prep_dl(&a, &settings),
        Command::Report(a) => report::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
