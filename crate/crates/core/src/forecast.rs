//! Local-time-neighborhood point forecasts and empirical reserve floors.
//!
//! Observations from different days at similar clock times are treated as
//! exchangeable. A minute belongs to the neighborhood of quarter-hour `q`
//! when its circular clock distance to the nearest minute of `q`'s window is
//! at most `k` minutes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::data_io::FleetDataset;
use crate::domain::{is_menu_tier, lower_median, DELTA_HOURS, INTERVAL_MINUTES, MINUTES_PER_DAY, QUARTER_HOURS_PER_DAY};
use crate::error::{Error, Result};

pub const DEFAULT_K_F: usize = 15;
pub const DEFAULT_K_B: usize = 30;
pub const DEFAULT_QUANTILE: f64 = 0.90;

/// Point forecasts indexed by quarter-hour-of-day.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    /// kW, `[home][q]`.
    pub l_hat: Vec<Vec<f64>>,
    /// kW, `[home][q]`.
    pub s_hat: Vec<Vec<f64>>,
    /// USD/kWh, `[q]`.
    pub lambda_hat: Vec<f64>,
}

impl ForecastSet {
    /// Subset of homes, in the given order.
    pub fn subset(&self, homes: &[usize]) -> ForecastSet {
        ForecastSet {
            l_hat: homes.iter().map(|&i| self.l_hat[i].clone()).collect(),
            s_hat: homes.iter().map(|&i| self.s_hat[i].clone()).collect(),
            lambda_hat: self.lambda_hat.clone(),
        }
    }
}

/// Circular clock distance between two minutes of day.
fn clock_distance(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(MINUTES_PER_DAY - d)
}

/// Whether minute-of-day `minute` lies within `k` minutes of quarter-hour
/// `q`'s 15-minute window.
pub fn in_neighborhood(minute: usize, q: usize, k: usize) -> bool {
    let first = q * INTERVAL_MINUTES;
    let last = first + INTERVAL_MINUTES - 1;
    if (first..=last).contains(&minute) {
        return true;
    }
    clock_distance(minute, first).min(clock_distance(minute, last)) <= k
}

/// Minutes of day in the neighborhood of each quarter-hour, ascending.
fn neighborhoods(k: usize) -> Vec<Vec<usize>> {
    (0..QUARTER_HOURS_PER_DAY)
        .map(|q| (0..MINUTES_PER_DAY).filter(|&d| in_neighborhood(d, q, k)).collect())
        .collect()
}

pub fn point_forecasts(dataset: &FleetDataset, k_f: usize) -> Result<ForecastSet> {
    let grid = &dataset.grid;
    let hoods = neighborhoods(k_f);

    let mut l_hat = Vec::with_capacity(dataset.homes.len());
    let mut s_hat = Vec::with_capacity(dataset.homes.len());
    for home in &dataset.homes {
        let mut load_sum = vec![0.0; MINUTES_PER_DAY];
        let mut solar_sum = vec![0.0; MINUTES_PER_DAY];
        let mut count = vec![0usize; MINUTES_PER_DAY];
        for m in 0..grid.n_minutes() {
            let d = grid.minute_of_day(m);
            load_sum[d] += home.load_kw[m];
            solar_sum[d] += home.solar_kw[m];
            count[d] += 1;
        }
        let mut lq = Vec::with_capacity(QUARTER_HOURS_PER_DAY);
        let mut sq = Vec::with_capacity(QUARTER_HOURS_PER_DAY);
        for (q, hood) in hoods.iter().enumerate() {
            let n: usize = hood.iter().map(|&d| count[d]).sum();
            if n == 0 {
                return Err(Error::Shape(format!(
                    "home {}: no observations near quarter-hour {q}",
                    home.home_id
                )));
            }
            lq.push(hood.iter().map(|&d| load_sum[d]).sum::<f64>() / n as f64);
            sq.push(hood.iter().map(|&d| solar_sum[d]).sum::<f64>() / n as f64);
        }
        l_hat.push(lq);
        s_hat.push(sq);
    }

    let mut slots: Vec<Vec<f64>> = vec![Vec::new(); QUARTER_HOURS_PER_DAY];
    for (k, &p) in dataset.prices.lambda_rt().iter().enumerate() {
        slots[grid.quarter_hour(k)].push(p);
    }
    let lambda_hat = slots
        .iter()
        .enumerate()
        .map(|(q, v)| lower_median(v).ok_or_else(|| Error::Shape(format!("no prices in quarter-hour slot {q}"))))
        .collect::<Result<Vec<_>>>()?;

    Ok(ForecastSet { l_hat, s_hat, lambda_hat })
}

/// Interval-level forward positive net-load energy (kWh) over the `hours`
/// following interval `start`, wrapping cyclically over `net`.
pub fn forward_positive_energy(net: &[f64], start: usize, hours: u32) -> f64 {
    if net.is_empty() {
        return 0.0;
    }
    let k = hours as usize * 60 / INTERVAL_MINUTES;
    let n = net.len();
    DELTA_HOURS * (0..k).map(|j| net[(start + j) % n].max(0.0)).sum::<f64>()
}

/// Nearest-rank empirical quantile of an ascending-sorted sample: the
/// element of 1-based rank `ceil(p * n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Forward positive net-load energy (kWh) over `hours` starting at every
/// minute of `net_minutes`, wrapping cyclically. Each window is summed in
/// ascending order and then divided by 60.
pub fn minute_forward_sums(net_minutes: &[f64], hours: u32) -> Vec<f64> {
    let n = net_minutes.len();
    let w = hours as usize * 60;
    let pos: Vec<f64> = net_minutes.iter().map(|v| v.max(0.0)).collect();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..w {
                s += pos[(i + j) % n];
            }
            s / 60.0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveParams {
    /// Neighborhood half-width in minutes.
    pub k_b: usize,
    pub quantile: f64,
}

impl Default for ReserveParams {
    fn default() -> Self {
        ReserveParams {
            k_b: DEFAULT_K_B,
            quantile: DEFAULT_QUANTILE,
        }
    }
}

impl ReserveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::Config(format!("quantile {} outside (0, 1]", self.quantile)));
        }
        Ok(())
    }
}

/// One home's reserve floor (kWh of internal energy) per reserve-time
/// quarter-hour of day, for one backup duration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveProfile {
    pub backup_hours: u32,
    pub r: Vec<f64>,
}

impl ReserveProfile {
    pub fn zero(backup_hours: u32) -> Self {
        ReserveProfile {
            backup_hours,
            r: vec![0.0; QUARTER_HOURS_PER_DAY],
        }
    }

    pub fn max(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }
}

pub fn reserve_profile(dataset: &FleetDataset, home: usize, backup_hours: u32, params: &ReserveParams) -> Result<ReserveProfile> {
    if !is_menu_tier(backup_hours) {
        return Err(Error::Config(format!("backup duration {backup_hours} h is not a menu tier")));
    }
    params.validate()?;
    let h = &dataset.homes[home];
    let sums = minute_forward_sums(&h.net_minutes(), backup_hours);
    Ok(profile_from_sums(dataset, &sums, backup_hours, params, h.battery.eta_dis))
}

fn profile_from_sums(dataset: &FleetDataset, sums: &[f64], backup_hours: u32, params: &ReserveParams, eta_dis: f64) -> ReserveProfile {
    let grid = &dataset.grid;
    let mut by_minute: Vec<Vec<f64>> = vec![Vec::new(); MINUTES_PER_DAY];
    for (m, &v) in sums.iter().enumerate() {
        by_minute[grid.minute_of_day(m)].push(v);
    }
    let r = neighborhoods(params.k_b)
        .iter()
        .map(|hood| {
            let mut sample: Vec<f64> = hood.iter().flat_map(|&d| by_minute[d].iter().copied()).collect();
            sample.sort_by(f64::total_cmp);
            nearest_rank(&sample, params.quantile) / eta_dis
        })
        .collect();
    ReserveProfile { backup_hours, r }
}

/// Reserve profiles for every home and every requested tier.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveTable {
    /// `tiers[T][home]`.
    tiers: BTreeMap<u32, Vec<ReserveProfile>>,
}

impl ReserveTable {
    pub fn build(dataset: &FleetDataset, tiers: &[u32], params: &ReserveParams) -> Result<Self> {
        params.validate()?;
        if let Some(t) = tiers.iter().find(|t| !is_menu_tier(**t)) {
            return Err(Error::Config(format!("backup duration {t} h is not a menu tier")));
        }
        let per_home: Vec<Vec<ReserveProfile>> = dataset
            .homes
            .par_iter()
            .map(|h| {
                let net = h.net_minutes();
                tiers
                    .iter()
                    .map(|&t| profile_from_sums(dataset, &minute_forward_sums(&net, t), t, params, h.battery.eta_dis))
                    .collect()
            })
            .collect();
        let mut map = BTreeMap::new();
        for (k, &t) in tiers.iter().enumerate() {
            map.insert(t, per_home.iter().map(|p| p[k].clone()).collect());
        }
        Ok(ReserveTable { tiers: map })
    }

    pub fn get(&self, home: usize, backup_hours: u32) -> Option<&ReserveProfile> {
        self.tiers.get(&backup_hours).and_then(|v| v.get(home))
    }

    pub fn tiers(&self) -> impl Iterator<Item = u32> + '_ {
        self.tiers.keys().copied()
    }

    /// Profiles for each home at its assigned tier.
    pub fn select(&self, assignment: &[u32]) -> Result<Vec<ReserveProfile>> {
        assignment
            .iter()
            .enumerate()
            .map(|(home, &t)| {
                self.get(home, t)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no reserve profile for home {home} at {t} h")))
            })
            .collect()
    }

    pub fn write_csv(&self, dataset: &FleetDataset, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "home_id,backup_hours,quarter_hour,reserve_kwh").map_err(io)?;
        for (t, homes) in &self.tiers {
            for (i, profile) in homes.iter().enumerate() {
                for (q, r) in profile.r.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", dataset.homes[i].home_id, t, q, r).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}
