//! Command-line interface. The binary is a thin wrapper over [`main_with_args`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data_io::{generate_fleet, load_fleet, write_fleet, FleetDataset, PriceProfile, SynthConfig, PRICES_FILE, SPECS_FILE, TELEMETRY_FILE};
use crate::dispatch::Sharing;
use crate::domain::{Tariff, TimeGrid, BACKUP_MENU};
use crate::error::{Error, Result};
use crate::experiments::{
    cap_spectrum, check_caps, firm_margin, read_screen_csv, read_tiers_csv, run_pooled, run_standalone, screen_cohort,
    ExperimentConfig, TierAssignment,
};
use crate::forecast::{point_forecasts, ForecastSet, ReserveParams, ReserveTable, DEFAULT_K_B, DEFAULT_K_F, DEFAULT_QUANTILE};
use crate::lp::Backend;
use crate::mpc::{InitialSoc, RolloutConfig, TrajectoryRecord, DEFAULT_HORIZON, TRAJECTORY_HEADER};

pub const SCREEN_FILE: &str = "screen.csv";
pub const RESERVES_FILE: &str = "reserves.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MARGINS_FILE: &str = "margins.csv";
pub const CAP_SPECTRUM_FILE: &str = "cap_spectrum.csv";
pub const SOC_BY_CAP_FILE: &str = "soc_by_cap.csv";

#[derive(Debug, Parser)]
#[command(name = "fleetpool", version, about = "Standalone vs pooled MPC dispatch of residential battery fleets")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Telemetry CSV, or a directory holding telemetry.csv, prices.csv and specs.csv.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Price CSV; defaults to prices.csv next to the telemetry.
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    /// Battery spec CSV; defaults to specs.csv next to the telemetry.
    #[arg(long, global = true)]
    pub specs: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat TOML file of settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// MPC horizon in 15-minute steps.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub quantile: Option<f64>,
    /// Point-forecast neighborhood half-width, minutes.
    #[arg(long, global = true)]
    pub kf: Option<usize>,
    /// Reserve neighborhood half-width, minutes.
    #[arg(long, global = true)]
    pub kb: Option<usize>,
    /// LP backend for every solve: reference or sparse.
    #[arg(long, global = true)]
    pub solver: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic week-long fleet.
    Synth(SynthArgs),
    /// Find each home's longest feasible backup tier.
    Screen,
    /// Roll out one controller over the screened cohort.
    Run(RunArgs),
    /// Rerun both controllers under each backup cap.
    CapSpectrum(CapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub homes: Option<usize>,
    #[arg(long, value_parser = ["flat", "diurnal", "spiky"])]
    pub price_profile: Option<String>,
    #[arg(long)]
    pub solar_fraction: Option<f64>,
    /// First day of the week, YYYY-MM-DD.
    #[arg(long)]
    pub start: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Standalone,
    Pooled,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub mode: RunMode,
    /// screen.csv from a previous `screen`; retained homes run at T_maxfeas.
    #[arg(long, conflicts_with = "tiers")]
    pub screen: Option<PathBuf>,
    /// CSV with header home_id,tier_hours.
    #[arg(long)]
    pub tiers: Option<PathBuf>,
    /// Truncate every tier at this many hours.
    #[arg(long)]
    pub cap: Option<u32>,
    /// Pooled mode with sharing bounded at zero (diagnostic).
    #[arg(long)]
    pub no_sharing: bool,
}

#[derive(Debug, Args)]
pub struct CapArgs {
    /// screen.csv; defaults to screen.csv in the output directory.
    #[arg(long)]
    pub screen: Option<PathBuf>,
    /// Comma-separated caps in hours.
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<u32>>,
}

/// Keys accepted in the `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub specs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub quantile: Option<f64>,
    pub kf: Option<usize>,
    pub kb: Option<usize>,
    pub solver: Option<String>,
    pub pooled_solver: Option<String>,
    pub salvage: Option<f64>,
    pub e_init_fraction: Option<f64>,
    pub e_init_reserve_floor: Option<bool>,
    pub caps: Option<Vec<u32>>,
    pub pool_size: Option<usize>,
    pub homes: Option<usize>,
    pub price_profile: Option<String>,
    pub solar_fraction: Option<f64>,
    pub p_ret: Option<f64>,
    pub c_tdsp: Option<f64>,
    pub beta: Option<f64>,
    pub sub_one: Option<f64>,
    pub sub_two: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Settings after merging defaults, the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub telemetry: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub specs: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub k_f: usize,
    pub reserve: ReserveParams,
    pub caps: Vec<u32>,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let data = common.data.clone().or_else(|| file.data.clone());
        let (telemetry, dir) = match data {
            Some(d) if d.is_dir() => (Some(d.join(TELEMETRY_FILE)), Some(d)),
            Some(f) => {
                let dir = f.parent().map(Path::to_path_buf);
                (Some(f), dir)
            }
            None => (None, None),
        };
        let sibling = |name: &str| dir.as_ref().map(|d| d.join(name));
        let parse_backend = |s: &str| s.parse::<Backend>().map_err(|e| Error::Config(e.to_string()));

        let solver = common.solver.as_deref().or(file.solver.as_deref()).map(parse_backend).transpose()?;
        let pooled_solver = match (&common.solver, &file.pooled_solver) {
            (Some(s), _) => Some(parse_backend(s)?),
            (None, Some(s)) => Some(parse_backend(s)?),
            (None, None) => solver,
        };
        let defaults = Tariff::default();
        let tariff = Tariff {
            p_ret: file.p_ret.unwrap_or(defaults.p_ret),
            c_tdsp: file.c_tdsp.unwrap_or(defaults.c_tdsp),
            beta: file.beta.unwrap_or(defaults.beta),
            sub_one: file.sub_one.unwrap_or(defaults.sub_one),
            sub_two: file.sub_two.unwrap_or(defaults.sub_two),
        };
        let initial_soc = match (file.e_init_reserve_floor, file.e_init_fraction) {
            (Some(true), Some(_)) => {
                return Err(Error::Config("set at most one of e_init_fraction and e_init_reserve_floor".into()))
            }
            (Some(true), None) => InitialSoc::ReserveFloor,
            (_, Some(f)) => InitialSoc::Fraction(f),
            _ => InitialSoc::default(),
        };
        let rollout = RolloutConfig {
            horizon: common.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON),
            salvage_override: file.salvage,
            initial_soc,
            tariff,
            backend: solver.unwrap_or_default(),
            ..RolloutConfig::default()
        };
        let experiment = ExperimentConfig {
            rollout,
            pooled_backend: pooled_solver.unwrap_or(ExperimentConfig::default().pooled_backend),
            pool_size: file.pool_size,
        };
        experiment.validate()?;
        let reserve = ReserveParams {
            k_b: common.kb.or(file.kb).unwrap_or(DEFAULT_K_B),
            quantile: common.quantile.or(file.quantile).unwrap_or(DEFAULT_QUANTILE),
        };
        reserve.validate()?;
        let caps = file.caps.clone().unwrap_or_else(|| BACKUP_MENU.to_vec());
        check_caps(&caps)?;
        Ok(RunConfig {
            prices: common.prices.clone().or_else(|| file.prices.clone()).or_else(|| sibling(PRICES_FILE)),
            specs: common.specs.clone().or_else(|| file.specs.clone()).or_else(|| sibling(SPECS_FILE)),
            telemetry,
            out: common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
            seed: common.seed.or(file.seed).unwrap_or(SynthConfig::default().seed),
            k_f: common.kf.or(file.kf).unwrap_or(DEFAULT_K_F),
            reserve,
            caps,
            experiment,
        })
    }

    pub fn load_dataset(&self) -> Result<FleetDataset> {
        let missing = |what: &str| Error::Config(format!("--{what} is required"));
        let telemetry = self.telemetry.as_ref().ok_or_else(|| missing("data"))?;
        let prices = self.prices.as_ref().ok_or_else(|| missing("prices"))?;
        let specs = self.specs.as_ref().ok_or_else(|| missing("specs"))?;
        load_fleet(telemetry, prices, specs)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

/// Dataset plus everything derived from it that the experiment commands share.
pub struct Prepared {
    pub dataset: FleetDataset,
    pub forecasts: ForecastSet,
    pub reserves: ReserveTable,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let dataset = config.load_dataset()?;
    let forecasts = point_forecasts(&dataset, config.k_f)?;
    let reserves = ReserveTable::build(&dataset, &BACKUP_MENU, &config.reserve)?;
    Ok(Prepared {
        dataset,
        forecasts,
        reserves,
    })
}

pub fn cmd_synth(args: &SynthArgs, config: &RunConfig, file: &FileConfig) -> Result<()> {
    let defaults = SynthConfig::default();
    let profile = match args.price_profile.as_deref().or(file.price_profile.as_deref()) {
        Some(p) => p.parse::<PriceProfile>()?,
        None => defaults.price_profile,
    };
    let synth = SynthConfig {
        n_homes: args.homes.or(file.homes).unwrap_or(defaults.n_homes),
        seed: config.seed,
        solar_fraction: args.solar_fraction.or(file.solar_fraction).unwrap_or(defaults.solar_fraction),
        price_profile: profile,
        ..defaults
    };
    let start = args
        .start
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(2025, 8, 4).expect("valid date"))
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists");
    let ds = generate_fleet(&synth, TimeGrid::week(start)?)?;
    let out = config.out_dir()?;
    write_fleet(&ds, out)?;
    println!("wrote {} homes to {}", ds.homes.len(), out.display());
    Ok(())
}

pub fn cmd_screen(config: &RunConfig) -> Result<()> {
    let p = prepare(config)?;
    let result = screen_cohort(&p.dataset, &p.forecasts, &p.reserves, &config.experiment)?;
    let out = config.out_dir()?;
    result.write_csv(&out.join(SCREEN_FILE))?;
    p.reserves.write_csv(&p.dataset, &out.join(RESERVES_FILE))?;
    println!("retained {} homes, dropped {}", result.retained.len(), result.dropped.len());
    Ok(())
}

fn tier_source(p: &Prepared, screen: Option<&Path>, tiers: Option<&Path>) -> Result<TierAssignment> {
    match (screen, tiers) {
        (Some(s), _) => read_screen_csv(s, &p.dataset),
        (None, Some(t)) => read_tiers_csv(t, &p.dataset),
        (None, None) => Err(Error::Config("run needs --screen or --tiers".into())),
    }
}

pub fn cmd_run(args: &RunArgs, config: &RunConfig) -> Result<()> {
    if args.no_sharing && args.mode != RunMode::Pooled {
        return Err(Error::Config("--no-sharing applies to --mode pooled only".into()));
    }
    let p = prepare(config)?;
    let mut assignment = tier_source(&p, args.screen.as_deref(), args.tiers.as_deref())?;
    if let Some(cap) = args.cap {
        check_caps(&[cap])?;
        assignment = assignment.capped(cap);
    }
    if assignment.is_empty() {
        return Err(Error::Config("tier source lists no retained homes".into()));
    }
    let exp = &config.experiment;
    let records = match args.mode {
        RunMode::Standalone => run_standalone(&p.dataset, &p.forecasts, &p.reserves, &assignment, exp)?,
        RunMode::Pooled => {
            let sharing = if args.no_sharing { Sharing::ZeroBounded } else { Sharing::Enabled };
            run_pooled(&p.dataset, &p.forecasts, &p.reserves, &assignment, sharing, exp)?
        }
    };
    let out = config.out_dir()?;
    write_trajectories(&records, &out.join(TRAJECTORY_FILE))?;
    let report = firm_margin(&records, &exp.rollout.tariff);
    report.write_csv(&out.join(MARGINS_FILE))?;
    let infeasible: usize = records.iter().map(|r| r.feasible.iter().filter(|f| !**f).count()).sum();
    println!(
        "{} homes, total firm margin {:.2} USD ({:.2} per home), {} infeasible epochs",
        report.homes.len(),
        report.total_firm_usd,
        report.firm_per_home(),
        infeasible
    );
    Ok(())
}

/// One CSV for several records, rows ordered by record then epoch.
pub fn write_trajectories(records: &[TrajectoryRecord], path: &Path) -> Result<()> {
    use std::io::Write;
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(io)?;
    for rec in records {
        rec.write_rows(&mut w, false).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn cmd_cap_spectrum(args: &CapArgs, config: &RunConfig) -> Result<()> {
    let caps = args.caps.clone().unwrap_or_else(|| config.caps.clone());
    check_caps(&caps)?;
    let screen = args.screen.clone().unwrap_or_else(|| config.out.join(SCREEN_FILE));
    let p = prepare(config)?;
    let retained = read_screen_csv(&screen, &p.dataset)?;
    let spectrum = cap_spectrum(&p.dataset, &p.forecasts, &p.reserves, &retained, &caps, &config.experiment)?;
    let out = config.out_dir()?;
    spectrum.write_csv(&out.join(CAP_SPECTRUM_FILE))?;
    spectrum.write_soc_csv(&out.join(SOC_BY_CAP_FILE))?;
    for r in &spectrum.rows {
        println!(
            "cap {:>2} h: {:>4} at cap, standalone {:.2} USD/home, benefit {:.2} USD/home ({:.2}%)",
            r.cap_hours, r.homes_at_cap, r.standalone_firm_per_home, r.pooling_benefit_per_home, r.benefit_pct
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let config = RunConfig::resolve(&cli.common, &file)?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &config, &file),
        Command::Screen => cmd_screen(&config),
        Command::Run(args) => cmd_run(args, &config),
        Command::CapSpectrum(args) => cmd_cap_spectrum(args, &config),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes:
/// 2 for usage and configuration errors, 1 for everything else.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
