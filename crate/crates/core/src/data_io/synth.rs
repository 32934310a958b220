//! Synthetic week-long fleets built from four household archetypes.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FleetDataset;
use crate::domain::{BatterySpec, HomeTelemetry, PriceSeries, TimeGrid, INTERVAL_MINUTES, MINUTES_PER_DAY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    /// Baseload with morning and evening bumps, no rooftop solar.
    NonSolar,
    /// Large array; net load goes negative around midday.
    SolarHeavy,
    /// Pronounced evening peaks.
    EveningPeak,
    /// Low, flat consumption.
    LowFlat,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::NonSolar,
        Archetype::SolarHeavy,
        Archetype::EveningPeak,
        Archetype::LowFlat,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceProfile {
    Flat,
    #[default]
    Diurnal,
    /// Diurnal plus 2 to 6 scarcity intervals at 1.0 to 5.0 USD/kWh.
    Spiky,
}

impl FromStr for PriceProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(PriceProfile::Flat),
            "diurnal" => Ok(PriceProfile::Diurnal),
            "spiky" => Ok(PriceProfile::Spiky),
            other => Err(Error::Config(format!("unknown price profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_homes: usize,
    pub seed: u64,
    /// Probability that a home has rooftop solar. Solar-heavy homes always
    /// have solar unless this is zero.
    pub solar_fraction: f64,
    /// Weights for [`Archetype::ALL`]; normalized on use.
    pub archetype_weights: [f64; 4],
    pub price_profile: PriceProfile,
    pub two_battery_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_homes: 20,
            seed: 7,
            solar_fraction: 0.5,
            archetype_weights: [0.4, 0.25, 0.2, 0.15],
            price_profile: PriceProfile::Diurnal,
            two_battery_prob: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_homes == 0 {
            return Err(Error::Config("n_homes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.solar_fraction) || !(0.0..=1.0).contains(&self.two_battery_prob) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = self.archetype_weights.iter().sum();
        if self.archetype_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || total <= 0.0 {
            return Err(Error::Config(format!(
                "archetype weights {:?} must be nonnegative with a positive sum",
                self.archetype_weights
            )));
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> [f64; 4] {
        let total: f64 = self.archetype_weights.iter().sum();
        self.archetype_weights.map(|w| w / total)
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Smooth bump centred at `center` hours with width `width` hours, on a
/// 24-hour circle.
fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let mut d = (hour - center).abs();
    d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

fn solar_shape(hour: f64) -> f64 {
    const SUNRISE: f64 = 6.75;
    const SUNSET: f64 = 20.25;
    if hour <= SUNRISE || hour >= SUNSET {
        return 0.0;
    }
    let s = ((hour - SUNRISE) / (SUNSET - SUNRISE) * PI).sin();
    s * s
}

fn pick_archetype(rng: &mut ChaCha8Rng, weights: &[f64; 4]) -> Archetype {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, w) in Archetype::ALL.iter().zip(weights) {
        acc += w;
        if u < acc {
            return *a;
        }
    }
    *Archetype::ALL.iter().zip(weights).rev().find(|(_, w)| **w > 0.0).map(|(a, _)| a).unwrap_or(&Archetype::NonSolar)
}

fn home_series(rng: &mut ChaCha8Rng, grid: &TimeGrid, archetype: Archetype, solar_kw_peak: f64) -> (Vec<f64>, Vec<f64>) {
    let n_days = grid.n_minutes().div_ceil(MINUTES_PER_DAY) + 1;
    let scale: f64 = rng.random_range(0.7..1.4);
    // day-level weather: a hot factor for cooling load and a cloud factor
    let hot: Vec<f64> = (0..n_days).map(|_| rng.random_range(0.75..1.35)).collect();
    let clear: Vec<f64> = (0..n_days).map(|_| rng.random_range(0.6..1.0)).collect();
    let (base, morning, evening, evening_center) = match archetype {
        Archetype::NonSolar | Archetype::SolarHeavy => (
            rng.random_range(0.5..1.0),
            rng.random_range(0.3..0.8),
            rng.random_range(1.0..2.2),
            rng.random_range(18.0..20.0),
        ),
        Archetype::EveningPeak => (
            rng.random_range(0.4..0.8),
            rng.random_range(0.2..0.5),
            rng.random_range(2.5..4.5),
            rng.random_range(18.0..19.5),
        ),
        Archetype::LowFlat => (rng.random_range(0.25..0.55), 0.05, rng.random_range(0.1..0.3), 19.0),
    };
    // a handful of appliance events (EV charging, laundry) per week
    let n_events = rng.random_range(2..8);
    let events: Vec<(usize, usize, f64)> = (0..n_events)
        .map(|_| {
            let start = rng.random_range(0..grid.n_minutes());
            let len = rng.random_range(30..120);
            (start, len, rng.random_range(1.5..4.0))
        })
        .collect();

    let start_day_minute = grid.minute_of_day(0);
    let mut load = Vec::with_capacity(grid.n_minutes());
    let mut solar = Vec::with_capacity(grid.n_minutes());
    for m in 0..grid.n_minutes() {
        let day = (start_day_minute + m) / MINUTES_PER_DAY;
        let hour = grid.minute_of_day(m) as f64 / 60.0;
        let cooling = hot[day] * bump(hour, 16.5, 3.0) * 0.6;
        let mut l = base
            + morning * bump(hour, 7.5, 1.0)
            + evening * hot[day] * bump(hour, evening_center, 1.6)
            + if archetype == Archetype::LowFlat { 0.0 } else { cooling };
        for &(s, len, kw) in &events {
            if m >= s && m < s + len {
                l += kw;
            }
        }
        l *= scale * rng.random_range(0.85..1.15);
        load.push(round_to(l.max(0.0), 3));

        let s = solar_kw_peak * clear[day] * solar_shape(hour) * rng.random_range(0.95..1.05);
        solar.push(round_to(s.max(0.0), 3));
    }
    (load, solar)
}

fn prices(rng: &mut ChaCha8Rng, grid: &TimeGrid, profile: PriceProfile) -> Vec<f64> {
    let n = grid.n_intervals();
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let hour = grid.quarter_hour(k) as f64 / 4.0;
            let v = match profile {
                PriceProfile::Flat => 30.0,
                PriceProfile::Diurnal | PriceProfile::Spiky => {
                    22.0 + 55.0 * bump(hour, 19.0, 1.8) + 12.0 * bump(hour, 8.0, 1.2) - 14.0 * bump(hour, 13.0, 2.0)
                        + rng.random_range(-6.0..6.0)
                }
            };
            round_to(v, 2)
        })
        .collect();
    if profile == PriceProfile::Spiky {
        let n_spikes = rng.random_range(2..=6);
        let days = (n / 96).max(1);
        for _ in 0..n_spikes {
            // scarcity intervals cluster in the late afternoon and evening
            let day = rng.random_range(0..days);
            let slot = rng.random_range(60..84);
            let k = (day * 96 + slot) % n;
            out[k] = round_to(rng.random_range(1000.0..5000.0), 2);
        }
    }
    out
}

/// Deterministic synthetic fleet on a seven-day grid.
pub fn generate_fleet(config: &SynthConfig, grid: TimeGrid) -> Result<FleetDataset> {
    config.validate()?;
    if grid.n_minutes() != 7 * MINUTES_PER_DAY {
        return Err(Error::Config(format!(
            "synthetic fleets span exactly 7 days, grid has {} minutes",
            grid.n_minutes()
        )));
    }
    debug_assert_eq!(grid.n_minutes() % INTERVAL_MINUTES, 0);
    let weights = config.normalized_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let price_mwh = prices(&mut rng, &grid, config.price_profile);

    let width = config.n_homes.to_string().len().max(3);
    let mut homes = Vec::with_capacity(config.n_homes);
    for i in 0..config.n_homes {
        let archetype = pick_archetype(&mut rng, &weights);
        let solar_draw: f64 = rng.random();
        let has_solar = match archetype {
            Archetype::SolarHeavy => config.solar_fraction > 0.0,
            _ => solar_draw < config.solar_fraction,
        };
        let peak = match (has_solar, archetype) {
            (false, _) => 0.0,
            (true, Archetype::SolarHeavy) => rng.random_range(6.0..9.5),
            (true, _) => rng.random_range(2.0..5.0),
        };
        let (load_kw, solar_kw) = home_series(&mut rng, &grid, archetype, peak);
        let e_max = round_to(rng.random_range(10.0..=27.0), 1);
        let p = round_to(rng.random_range(3.3..=9.6), 1);
        let mut battery = BatterySpec::new(e_max, p, p);
        if rng.random::<f64>() < config.two_battery_prob {
            battery.n_batteries = 2;
        }
        homes.push(HomeTelemetry {
            home_id: format!("home{:0width$}", i + 1),
            load_kw,
            solar_kw,
            battery,
        });
    }
    FleetDataset::new(grid, homes, PriceSeries::from_usd_per_mwh(price_mwh)?)
}
