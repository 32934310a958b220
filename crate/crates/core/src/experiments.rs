//! Firm-margin accounting, backup-tier screening and the cap spectrum.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::data_io::{field, CsvRows, FleetDataset};
use crate::dispatch::Sharing;
use crate::domain::{is_menu_tier, Tariff, BACKUP_MENU};
use crate::error::{Error, Result};
use crate::forecast::{ForecastSet, ReserveTable};
use crate::lp::Backend;
use crate::mpc::{classify_feasibility, rollout, Feasibility, Mode, RolloutConfig, TrajectoryRecord};

pub const SCREEN_HEADER: &str = "home_id,t_maxfeas_hours,dropped,reason";
pub const CAP_SPECTRUM_HEADER: &str = "cap_hours,homes_at_cap,standalone_firm_per_home_usd,pooling_benefit_per_home_usd,benefit_pct";
pub const SOC_BY_CAP_HEADER: &str = "epoch,cap_hours,total_soc_kwh";
pub const MARGINS_HEADER: &str = "home_id,dispatch_margin_usd,subscription_usd,firm_margin_usd";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Settings for standalone legs; pooled legs override the backend.
    pub rollout: RolloutConfig,
    pub pooled_backend: Backend,
    /// Homes per pool; `None` puts the whole cohort in one pool.
    pub pool_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rollout: RolloutConfig::default(),
            pooled_backend: Backend::Sparse,
            pool_size: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == Some(0) {
            return Err(Error::Config("pool size must be at least 1".into()));
        }
        self.rollout.validate()
    }

    pub fn pooled_rollout(&self) -> RolloutConfig {
        RolloutConfig {
            backend: self.pooled_backend,
            ..self.rollout.clone()
        }
    }

    /// Consecutive pools over `homes`.
    pub fn pools(&self, homes: &[usize]) -> Vec<Vec<usize>> {
        let size = self.pool_size.unwrap_or(homes.len()).max(1);
        homes.chunks(size).map(<[usize]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    MaxFeasible,
    Capped(u32),
}

/// Backup tier per retained home.
#[derive(Debug, Clone, PartialEq)]
pub struct TierAssignment {
    /// Dataset indices.
    pub homes: Vec<usize>,
    pub home_ids: Vec<String>,
    /// Hours, aligned with `homes`.
    pub tiers: Vec<u32>,
    pub provenance: Vec<Provenance>,
}

impl TierAssignment {
    pub fn len(&self) -> usize {
        self.homes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homes.is_empty()
    }

    /// Tiers truncated at `cap`.
    pub fn capped(&self, cap: u32) -> TierAssignment {
        let (tiers, provenance) = self
            .tiers
            .iter()
            .map(|&t| if t > cap { (cap, Provenance::Capped(cap)) } else { (t, Provenance::MaxFeasible) })
            .unzip();
        TierAssignment {
            tiers,
            provenance,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenRow {
    pub home_id: String,
    pub t_maxfeas: Option<u32>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    pub retained: TierAssignment,
    /// Dataset indices of dropped homes.
    pub dropped: Vec<usize>,
    /// One row per dataset home, in dataset order.
    pub rows: Vec<ScreenRow>,
}

impl ScreenResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_lines(path, SCREEN_HEADER, self.rows.iter().map(|r| {
            let t = r.t_maxfeas.map_or(String::new(), |t| t.to_string());
            format!("{},{},{},{}", r.home_id, t, r.t_maxfeas.is_none(), r.reason)
        }))
    }
}

/// Longest tier `T` such that every menu tier up to `T` is feasible.
///
/// Tiers are checked in ascending order and checking stops at the first
/// infeasible one, so `feasible` is called at most once per tier.
pub fn longest_feasible_prefix(mut feasible: impl FnMut(u32) -> Result<bool>) -> Result<Option<u32>> {
    let mut best = None;
    for t in BACKUP_MENU {
        if !feasible(t)? {
            break;
        }
        best = Some(t);
    }
    Ok(best)
}

/// Screens every home against the backup menu. Homes infeasible at the
/// shortest tier are dropped.
pub fn screen_cohort(dataset: &FleetDataset, forecasts: &ForecastSet, reserves: &ReserveTable, config: &ExperimentConfig) -> Result<ScreenResult> {
    config.validate()?;
    let verdicts: Vec<Option<u32>> = (0..dataset.homes.len())
        .into_par_iter()
        .map(|g| {
            longest_feasible_prefix(|t| {
                let profile = reserves
                    .get(g, t)
                    .ok_or_else(|| Error::Config(format!("reserve table lacks the {t} h tier")))?;
                Ok(classify_feasibility(dataset, forecasts, g, profile, &config.rollout)? == Feasibility::Feasible)
            })
        })
        .collect::<Result<_>>()?;

    let mut retained = TierAssignment {
        homes: Vec::new(),
        home_ids: Vec::new(),
        tiers: Vec::new(),
        provenance: Vec::new(),
    };
    let mut dropped = Vec::new();
    let mut rows = Vec::with_capacity(verdicts.len());
    for (g, verdict) in verdicts.into_iter().enumerate() {
        let id = dataset.homes[g].home_id.clone();
        match verdict {
            Some(t) => {
                retained.homes.push(g);
                retained.home_ids.push(id.clone());
                retained.tiers.push(t);
                retained.provenance.push(Provenance::MaxFeasible);
                let reason = match BACKUP_MENU.iter().find(|&&m| m > t) {
                    Some(next) => format!("infeasible at {next} h"),
                    None => String::new(),
                };
                rows.push(ScreenRow {
                    home_id: id,
                    t_maxfeas: Some(t),
                    reason,
                });
            }
            None => {
                dropped.push(g);
                rows.push(ScreenRow {
                    home_id: id,
                    t_maxfeas: None,
                    reason: format!("infeasible at {} h", BACKUP_MENU[0]),
                });
            }
        }
    }
    Ok(ScreenResult { retained, dropped, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeMargin {
    pub home_id: String,
    pub dispatch_usd: f64,
    pub subscription_usd: f64,
    pub firm_usd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub homes: Vec<HomeMargin>,
    pub total_dispatch_usd: f64,
    pub total_subscription_usd: f64,
    /// Sum of the two totals above.
    pub total_firm_usd: f64,
}

impl MarginReport {
    pub fn firm_per_home(&self) -> f64 {
        self.total_firm_usd / self.homes.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_lines(path, MARGINS_HEADER, self.homes.iter().map(|h| {
            format!("{},{},{},{}", h.home_id, h.dispatch_usd, h.subscription_usd, h.firm_usd)
        }))
    }
}

/// Weekly dispatch margin plus the pro-rated subscription, per home, over
/// one or more trajectories.
pub fn firm_margin(trajectories: &[TrajectoryRecord], tariff: &Tariff) -> MarginReport {
    let homes: Vec<HomeMargin> = trajectories
        .iter()
        .flat_map(|rec| {
            (0..rec.homes.len()).map(move |k| {
                let dispatch = rec.dispatch_margin(k);
                let subscription = tariff.weekly_subscription(rec.specs[k].n_batteries);
                HomeMargin {
                    home_id: rec.home_ids[k].clone(),
                    dispatch_usd: dispatch,
                    subscription_usd: subscription,
                    firm_usd: dispatch + subscription,
                }
            })
        })
        .collect();
    let total_dispatch_usd: f64 = homes.iter().map(|h| h.dispatch_usd).sum();
    let total_subscription_usd: f64 = homes.iter().map(|h| h.subscription_usd).sum();
    MarginReport {
        homes,
        total_dispatch_usd,
        total_subscription_usd,
        total_firm_usd: total_dispatch_usd + total_subscription_usd,
    }
}

/// Standalone and pooled rollouts under one tier assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    /// The cap this run was made under, if any.
    pub cap_hours: Option<u32>,
    pub assignment: TierAssignment,
    /// One record per home, aligned with the assignment.
    pub standalone: Vec<TrajectoryRecord>,
    /// One record per pool.
    pub pooled: Vec<TrajectoryRecord>,
    pub standalone_report: MarginReport,
    pub pooled_report: MarginReport,
}

impl PairedRun {
    /// (pooled total firm − standalone total firm) / cohort size, USD.
    pub fn benefit_per_home(&self) -> f64 {
        (self.pooled_report.total_firm_usd - self.standalone_report.total_firm_usd) / self.assignment.len() as f64
    }

    pub fn benefit_pct(&self) -> f64 {
        100.0 * self.benefit_per_home() / self.standalone_report.firm_per_home()
    }

    /// Fleet SoC at the start of each epoch under the pooled controller.
    pub fn pooled_total_soc(&self) -> Vec<f64> {
        total_soc(&self.pooled)
    }
}

/// Sum over homes of SoC at the start of each epoch.
pub fn total_soc(trajectories: &[TrajectoryRecord]) -> Vec<f64> {
    let n = trajectories.iter().map(TrajectoryRecord::n_epochs).min().unwrap_or(0);
    (0..n)
        .map(|t| {
            trajectories
                .iter()
                .flat_map(|rec| (0..rec.homes.len()).map(move |k| rec.soc_at_start(t, k)))
                .sum()
        })
        .collect()
}

/// Standalone rollouts only, one per assigned home.
pub fn run_standalone(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    reserves: &ReserveTable,
    assignment: &TierAssignment,
    config: &ExperimentConfig,
) -> Result<Vec<TrajectoryRecord>> {
    let profiles = assigned_profiles(reserves, assignment)?;
    assignment
        .homes
        .par_iter()
        .zip(&profiles)
        .map(|(&g, p)| rollout(dataset, forecasts, std::slice::from_ref(p), &config.rollout, &Mode::Standalone(g)))
        .collect()
}

/// Pooled rollouts, one per pool.
pub fn run_pooled(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    reserves: &ReserveTable,
    assignment: &TierAssignment,
    sharing: Sharing,
    config: &ExperimentConfig,
) -> Result<Vec<TrajectoryRecord>> {
    let profiles = assigned_profiles(reserves, assignment)?;
    let size = config.pool_size.unwrap_or(assignment.len()).max(1);
    config
        .pools(&assignment.homes)
        .iter()
        .enumerate()
        .map(|(i, homes)| {
            let start = i * size;
            // A lone home has nobody to share with, so its sharing flows are
            // zero either way. Zero-bounded sharing decomposes into the
            // standalone LPs; the standalone backend then reproduces
            // standalone runs exactly.
            let sharing = if homes.len() == 1 { Sharing::ZeroBounded } else { sharing };
            let pooled_config = match sharing {
                Sharing::Enabled => config.pooled_rollout(),
                Sharing::ZeroBounded => config.rollout.clone(),
            };
            let mode = Mode::Pooled {
                homes: homes.clone(),
                sharing,
            };
            rollout(dataset, forecasts, &profiles[start..start + homes.len()], &pooled_config, &mode)
        })
        .collect()
}

fn assigned_profiles(reserves: &ReserveTable, assignment: &TierAssignment) -> Result<Vec<crate::forecast::ReserveProfile>> {
    assignment
        .homes
        .iter()
        .zip(&assignment.tiers)
        .map(|(&g, &t)| {
            reserves
                .get(g, t)
                .cloned()
                .ok_or_else(|| Error::Config(format!("reserve table lacks home {g} at {t} h")))
        })
        .collect()
}

/// Runs both controllers under `assignment` and accounts firm margins.
pub fn run_paired(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    reserves: &ReserveTable,
    assignment: &TierAssignment,
    config: &ExperimentConfig,
) -> Result<PairedRun> {
    config.validate()?;
    if assignment.is_empty() {
        return Err(Error::Config("no retained homes to run".into()));
    }
    let standalone = run_standalone(dataset, forecasts, reserves, assignment, config)?;
    let pooled = run_pooled(dataset, forecasts, reserves, assignment, Sharing::Enabled, config)?;
    let tariff = &config.rollout.tariff;
    Ok(PairedRun {
        cap_hours: None,
        assignment: assignment.clone(),
        standalone_report: firm_margin(&standalone, tariff),
        pooled_report: firm_margin(&pooled, tariff),
        standalone,
        pooled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapRow {
    pub cap_hours: u32,
    pub homes_at_cap: usize,
    pub standalone_firm_per_home: f64,
    pub pooling_benefit_per_home: f64,
    pub benefit_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapSpectrum {
    pub rows: Vec<CapRow>,
    /// Paired runs aligned with `rows`.
    pub runs: Vec<PairedRun>,
}

impl CapSpectrum {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_lines(path, CAP_SPECTRUM_HEADER, self.rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.cap_hours, r.homes_at_cap, r.standalone_firm_per_home, r.pooling_benefit_per_home, r.benefit_pct
            )
        }))
    }

    pub fn soc_rows(&self) -> Vec<SocRow> {
        soc_trajectory(&self.runs)
    }

    pub fn write_soc_csv(&self, path: &Path) -> Result<()> {
        write_soc_csv(&self.soc_rows(), path)
    }
}

pub fn check_caps(caps: &[u32]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::Config("at least one cap is required".into()));
    }
    match caps.iter().find(|c| !is_menu_tier(**c)) {
        Some(c) => Err(Error::Config(format!("cap {c} h is not a menu tier {BACKUP_MENU:?}"))),
        None => Ok(()),
    }
}

/// Reruns both controllers for each cap with tiers truncated at the cap.
pub fn cap_spectrum(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    reserves: &ReserveTable,
    retained: &TierAssignment,
    caps: &[u32],
    config: &ExperimentConfig,
) -> Result<CapSpectrum> {
    check_caps(caps)?;
    if retained.is_empty() {
        return Err(Error::Config("cap spectrum needs at least one retained home".into()));
    }
    let mut rows = Vec::with_capacity(caps.len());
    let mut runs = Vec::with_capacity(caps.len());
    for &cap in caps {
        let assignment = retained.capped(cap);
        let mut run = run_paired(dataset, forecasts, reserves, &assignment, config)?;
        run.cap_hours = Some(cap);
        rows.push(CapRow {
            cap_hours: cap,
            homes_at_cap: assignment.tiers.iter().filter(|&&t| t == cap).count(),
            standalone_firm_per_home: run.standalone_report.firm_per_home(),
            pooling_benefit_per_home: run.benefit_per_home(),
            benefit_pct: run.benefit_pct(),
        });
        runs.push(run);
    }
    Ok(CapSpectrum { rows, runs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocRow {
    pub epoch: usize,
    pub cap_hours: u32,
    pub total_soc_kwh: f64,
}

/// Pooled fleet SoC at each interval start, one series per cap.
pub fn soc_trajectory(runs: &[PairedRun]) -> Vec<SocRow> {
    runs.iter()
        .flat_map(|run| {
            let cap = run.cap_hours.unwrap_or_else(|| run.assignment.tiers.iter().copied().max().unwrap_or(0));
            run.pooled_total_soc()
                .into_iter()
                .enumerate()
                .map(move |(epoch, total_soc_kwh)| SocRow {
                    epoch,
                    cap_hours: cap,
                    total_soc_kwh,
                })
        })
        .collect()
}

pub fn write_soc_csv(rows: &[SocRow], path: &Path) -> Result<()> {
    write_lines(path, SOC_BY_CAP_HEADER, rows.iter().map(|r| format!("{},{},{}", r.epoch, r.cap_hours, r.total_soc_kwh)))
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    for line in lines {
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn assignment_from_rows(path: &Path, dataset: &FleetDataset, rows: Vec<(u64, String, u32)>) -> Result<TierAssignment> {
    let mut out = TierAssignment {
        homes: Vec::new(),
        home_ids: Vec::new(),
        tiers: Vec::new(),
        provenance: Vec::new(),
    };
    for (line, id, tier) in rows {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let g = dataset.home_index(&id).ok_or_else(|| parse_err(format!("home {id} is not in the dataset")))?;
        if !is_menu_tier(tier) {
            return Err(parse_err(format!("tier {tier} h is not on the menu")));
        }
        if out.homes.contains(&g) {
            return Err(parse_err(format!("home {id} listed twice")));
        }
        out.homes.push(g);
        out.home_ids.push(id);
        out.tiers.push(tier);
        out.provenance.push(Provenance::MaxFeasible);
    }
    Ok(out)
}

/// Retained homes from a `screen.csv`, at their longest feasible tier.
pub fn read_screen_csv(path: &Path, dataset: &FleetDataset) -> Result<TierAssignment> {
    let header: Vec<&str> = SCREEN_HEADER.split(',').collect();
    let mut rows = Vec::new();
    CsvRows::open(path, &header)?.for_each(|rec, err| {
        let dropped: bool = field(rec, 2, "dropped", err)?;
        if !dropped {
            rows.push((line_of(rec), rec[0].to_string(), field(rec, 1, "t_maxfeas_hours", err)?));
        }
        Ok(())
    })?;
    assignment_from_rows(path, dataset, rows)
}

/// Explicit assignment from a CSV with header `home_id,tier_hours`.
pub fn read_tiers_csv(path: &Path, dataset: &FleetDataset) -> Result<TierAssignment> {
    let mut rows = Vec::new();
    CsvRows::open(path, &["home_id", "tier_hours"])?.for_each(|rec, err| {
        rows.push((line_of(rec), rec[0].to_string(), field(rec, 1, "tier_hours", err)?));
        Ok(())
    })?;
    assignment_from_rows(path, dataset, rows)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}
