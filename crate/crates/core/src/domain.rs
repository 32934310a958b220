//! Shared domain types: the quarter-hour time grid, battery and tariff
//! parameters, and per-home telemetry.

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes per decision interval.
pub const INTERVAL_MINUTES: usize = 15;
/// Decision interval length in hours.
pub const DELTA_HOURS: f64 = 0.25;
/// Quarter-hours in a day.
pub const QUARTER_HOURS_PER_DAY: usize = 96;
pub const MINUTES_PER_DAY: usize = 1440;
/// Backup durations (hours) offered to households.
pub const BACKUP_MENU: [u32; 6] = [2, 4, 6, 8, 12, 24];

pub fn is_menu_tier(hours: u32) -> bool {
    BACKUP_MENU.contains(&hours)
}

/// A minute-resolution local-time grid partitioned into 15-minute intervals.
///
/// Timestamps are local clock time; no timezone arithmetic is performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    start: NaiveDateTime,
    n_minutes: usize,
}

impl TimeGrid {
    pub fn new(start: NaiveDateTime, n_minutes: usize) -> Result<Self> {
        if n_minutes == 0 || n_minutes % INTERVAL_MINUTES != 0 {
            return Err(Error::Shape(format!(
                "grid length {n_minutes} minutes is not a positive multiple of {INTERVAL_MINUTES}"
            )));
        }
        if start.second() != 0 || start.nanosecond() != 0 || start.minute() as usize % INTERVAL_MINUTES != 0 {
            return Err(Error::Shape(format!(
                "grid start {start} is not aligned to a quarter-hour"
            )));
        }
        Ok(TimeGrid { start, n_minutes })
    }

    /// Seven days starting at `start`.
    pub fn week(start: NaiveDateTime) -> Result<Self> {
        Self::new(start, 7 * MINUTES_PER_DAY)
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn n_minutes(&self) -> usize {
        self.n_minutes
    }

    pub fn n_intervals(&self) -> usize {
        self.n_minutes / INTERVAL_MINUTES
    }

    pub fn interval_minutes(&self) -> usize {
        INTERVAL_MINUTES
    }

    pub fn n_days(&self) -> f64 {
        self.n_minutes as f64 / MINUTES_PER_DAY as f64
    }

    fn start_minute_of_day(&self) -> usize {
        (self.start.hour() * 60 + self.start.minute()) as usize
    }

    /// Local clock minute-of-day (0..1440) of grid minute `minute`.
    pub fn minute_of_day(&self, minute: usize) -> usize {
        (self.start_minute_of_day() + minute) % MINUTES_PER_DAY
    }

    /// Quarter-hour-of-day (0..96) of interval `interval`; wraps past the end
    /// of the grid.
    pub fn quarter_hour(&self, interval: usize) -> usize {
        self.minute_of_day(interval * INTERVAL_MINUTES) / INTERVAL_MINUTES
    }

    pub fn minute_timestamp(&self, minute: usize) -> NaiveDateTime {
        self.start + Duration::minutes(minute as i64)
    }

    pub fn interval_start(&self, interval: usize) -> NaiveDateTime {
        self.minute_timestamp(interval * INTERVAL_MINUTES)
    }

    /// Grid minute index of `ts`, if it lies on the grid.
    pub fn minute_index(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts.second() != 0 || ts.nanosecond() != 0 {
            return None;
        }
        let offset = (ts - self.start).num_minutes();
        (offset >= 0 && (offset as usize) < self.n_minutes).then_some(offset as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Usable energy capacity, kWh.
    pub e_max: f64,
    /// Charging power limit, kW.
    pub p_ch_max: f64,
    /// Discharging power limit, kW.
    pub p_dis_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Installed battery count; only affects subscription revenue.
    pub n_batteries: u8,
}

impl BatterySpec {
    pub const DEFAULT_EFFICIENCY: f64 = 0.95;

    pub fn new(e_max: f64, p_ch_max: f64, p_dis_max: f64) -> Self {
        BatterySpec {
            e_max,
            p_ch_max,
            p_dis_max,
            eta_ch: Self::DEFAULT_EFFICIENCY,
            eta_dis: Self::DEFAULT_EFFICIENCY,
            n_batteries: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.e_max) || !finite_nonneg(self.p_ch_max) || !finite_nonneg(self.p_dis_max) {
            return Err(Error::Validation(format!(
                "battery limits must be finite and nonnegative: {self:?}"
            )));
        }
        for eta in [self.eta_ch, self.eta_dis] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Validation(format!("efficiency {eta} outside (0, 1]")));
            }
        }
        if !(1..=2).contains(&self.n_batteries) {
            return Err(Error::Validation(format!(
                "n_batteries must be 1 or 2, got {}",
                self.n_batteries
            )));
        }
        Ok(())
    }
}

/// Retail tariff. Energy terms are USD/kWh, subscriptions USD/month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub p_ret: f64,
    pub c_tdsp: f64,
    pub beta: f64,
    pub sub_one: f64,
    pub sub_two: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff {
            p_ret: 0.09,
            c_tdsp: 0.05,
            beta: 0.04,
            sub_one: 19.0,
            sub_two: 29.0,
        }
    }
}

impl Tariff {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_ret, self.c_tdsp, self.beta, self.sub_one, self.sub_two];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!("tariff terms must be nonnegative: {self:?}")));
        }
        Ok(())
    }

    /// Weekly subscription revenue: a quarter of the monthly fee.
    pub fn weekly_subscription(&self, n_batteries: u8) -> f64 {
        let monthly = if n_batteries >= 2 { self.sub_two } else { self.sub_one };
        monthly / 4.0
    }

    /// Realized or forecast margin for one interval of one home, USD.
    #[allow(clippy::too_many_arguments)]
    pub fn interval_margin(
        &self,
        price: f64,
        load: f64,
        m_imp: f64,
        x_s: f64,
        x_b: f64,
        z: f64,
        y_s: f64,
    ) -> f64 {
        DELTA_HOURS
            * (self.p_ret * load - (price + self.c_tdsp) * m_imp + price * (x_s + x_b)
                - self.beta * (z + x_s + y_s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeTelemetry {
    pub home_id: String,
    /// Minute-resolution household load, kW.
    pub load_kw: Vec<f64>,
    /// Minute-resolution solar generation, kW.
    pub solar_kw: Vec<f64>,
    pub battery: BatterySpec,
}

impl HomeTelemetry {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        for (name, series) in [("load_kw", &self.load_kw), ("solar_kw", &self.solar_kw)] {
            if series.len() != grid.n_minutes() {
                return Err(Error::Incomplete {
                    home_id: self.home_id.clone(),
                    reason: format!(
                        "{name} has {} minutes, expected {}",
                        series.len(),
                        grid.n_minutes()
                    ),
                });
            }
            if let Some((i, v)) = series.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Validation(format!(
                    "home {}: {name} at minute {i} is {v}, expected finite and nonnegative",
                    self.home_id
                )));
            }
        }
        self.battery
            .validate()
            .map_err(|e| Error::Validation(format!("home {}: {e}", self.home_id)))
    }

    /// Minute-resolution net load, kW.
    pub fn net_minutes(&self) -> Vec<f64> {
        self.load_kw.iter().zip(&self.solar_kw).map(|(l, s)| l - s).collect()
    }
}

/// Realized wholesale prices, one per 15-minute interval.
///
/// The on-disk USD/MWh values are kept so that files round-trip exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    usd_per_mwh: Vec<f64>,
    lambda_rt: Vec<f64>,
}

impl PriceSeries {
    pub fn from_usd_per_mwh(usd_per_mwh: Vec<f64>) -> Result<Self> {
        if let Some(v) = usd_per_mwh.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite price {v}")));
        }
        let lambda_rt = usd_per_mwh.iter().map(|p| p / 1000.0).collect();
        Ok(PriceSeries { usd_per_mwh, lambda_rt })
    }

    pub fn from_usd_per_kwh(usd_per_kwh: &[f64]) -> Result<Self> {
        Self::from_usd_per_mwh(usd_per_kwh.iter().map(|p| p * 1000.0).collect())
    }

    /// Prices in USD/kWh.
    pub fn lambda_rt(&self) -> &[f64] {
        &self.lambda_rt
    }

    pub fn usd_per_mwh(&self) -> &[f64] {
        &self.usd_per_mwh
    }

    pub fn len(&self) -> usize {
        self.lambda_rt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_rt.is_empty()
    }
}

/// Averages each block of 15 minutes into one interval value.
pub fn resample_to_quarter_hour(minutes: &[f64]) -> Result<Vec<f64>> {
    if minutes.len() % INTERVAL_MINUTES != 0 {
        return Err(Error::Shape(format!(
            "series of {} minutes is not a multiple of {INTERVAL_MINUTES}",
            minutes.len()
        )));
    }
    Ok(minutes
        .chunks_exact(INTERVAL_MINUTES)
        .map(|c| c.iter().sum::<f64>() / INTERVAL_MINUTES as f64)
        .collect())
}

/// Interval net load `L - S` in kW; negative when solar exceeds load.
pub fn net_load(telemetry: &HomeTelemetry, grid: &TimeGrid) -> Result<Vec<f64>> {
    if telemetry.load_kw.len() != grid.n_minutes() || telemetry.solar_kw.len() != grid.n_minutes() {
        return Err(Error::Shape(format!(
            "home {} telemetry does not match a grid of {} minutes",
            telemetry.home_id,
            grid.n_minutes()
        )));
    }
    let load = resample_to_quarter_hour(&telemetry.load_kw)?;
    let solar = resample_to_quarter_hour(&telemetry.solar_kw)?;
    Ok(load.iter().zip(&solar).map(|(l, s)| l - s).collect())
}

/// Lower median: the smaller of the middle pair for even counts.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn aug1() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2025, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn home(load: Vec<f64>, solar: Vec<f64>) -> HomeTelemetry {
        HomeTelemetry {
            home_id: "h".into(),
            load_kw: load,
            solar_kw: solar,
            battery: BatterySpec::new(10.0, 5.0, 5.0),
        }
    }

    #[test]
    fn resample_examples() {
        assert_eq!(resample_to_quarter_hour(&[1.0; 15]).unwrap(), vec![1.0]);
        let mut v = vec![0.0; 15];
        v.extend([3.0; 15]);
        assert_eq!(resample_to_quarter_hour(&v).unwrap(), vec![0.0, 3.0]);
        let seq: Vec<f64> = (1..=15).map(f64::from).collect();
        // 1 + 2 + ... + 15 = 120, / 15
        let direct: f64 = seq.iter().sum::<f64>() / 15.0;
        assert_eq!(direct, 8.0);
        assert_eq!(resample_to_quarter_hour(&seq).unwrap(), vec![8.0]);
    }

    #[test]
    fn resample_rejects_ragged_length() {
        assert!(matches!(resample_to_quarter_hour(&[1.0; 16]), Err(Error::Shape(_))));
    }

    #[test]
    fn net_load_signs() {
        let grid = TimeGrid::new(aug1(), 15).unwrap();
        assert_eq!(net_load(&home(vec![2.0; 15], vec![0.5; 15]), &grid).unwrap(), vec![1.5]);
        assert_eq!(net_load(&home(vec![1.0; 15], vec![3.0; 15]), &grid).unwrap(), vec![-2.0]);
        assert_eq!(net_load(&home(vec![1.7; 15], vec![1.7; 15]), &grid).unwrap(), vec![0.0]);
    }

    #[test]
    fn grid_indices() {
        let grid = TimeGrid::week(aug1()).unwrap();
        assert_eq!(grid.n_intervals(), 672);
        assert_eq!(grid.quarter_hour(0), 0);
        assert_eq!(grid.quarter_hour(95), 95);
        assert_eq!(grid.quarter_hour(96), 0);
        assert_eq!(grid.quarter_hour(672 + 3), 3);
        let late = TimeGrid::new(aug1() + Duration::minutes(23 * 60 + 45), 30).unwrap();
        assert_eq!(late.quarter_hour(0), 95);
        assert_eq!(late.quarter_hour(1), 0);
        assert!(TimeGrid::new(aug1(), 20).is_err());
        assert!(TimeGrid::new(aug1() + Duration::minutes(5), 15).is_err());
        assert_eq!(grid.minute_index(aug1() + Duration::minutes(61)), Some(61));
        assert_eq!(grid.minute_index(aug1() - Duration::minutes(1)), None);
    }

    #[test]
    fn subscription_is_quarter_month() {
        let t = Tariff::default();
        assert_eq!(t.weekly_subscription(1), 4.75);
        assert_eq!(t.weekly_subscription(2), 7.25);
    }

    #[test]
    fn lower_median_even_and_odd() {
        assert_eq!(lower_median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[]), None);
    }

    proptest! {
        #[test]
        fn resample_preserves_energy(v in prop::collection::vec(0.0f64..20.0, 15..=15*40)) {
            let n = v.len() / 15 * 15;
            let v = &v[..n];
            let q = resample_to_quarter_hour(v).unwrap();
            let e_q = 0.25 * q.iter().sum::<f64>();
            let e_m = v.iter().sum::<f64>() / 60.0;
            prop_assert!((e_q - e_m).abs() <= 1e-9 * e_m.abs().max(1e-12));
        }

        #[test]
        fn net_load_is_linear(a in 0.0f64..5.0, l in prop::collection::vec(0.0f64..8.0, 30), s in prop::collection::vec(0.0f64..8.0, 30)) {
            let grid = TimeGrid::new(aug1(), 30).unwrap();
            let base = net_load(&home(l.clone(), s.clone()), &grid).unwrap();
            let scaled = net_load(
                &home(l.iter().map(|x| a * x).collect(), s.iter().map(|x| a * x).collect()),
                &grid,
            ).unwrap();
            for (b, sc) in base.iter().zip(&scaled) {
                prop_assert!((a * b - sc).abs() <= 1e-9 * (1.0 + sc.abs()));
            }
        }
    }
}
