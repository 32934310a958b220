//! Receding-horizon rollout over the dataset's week.
//!
//! At each 15-minute epoch the horizon LP is rebuilt from cyclic forecasts
//! and the current state of charge, only the first-step battery controls are
//! implemented, and the interval is settled against realized load, solar and
//! price with a single-period routing LP.

use std::io::Write;
use std::path::Path;

use crate::data_io::FleetDataset;
use crate::dispatch::{
    build_pooled, build_routing, build_standalone, decode, decode_routing, salvage_default, step_energy, HomeHorizon,
    HorizonInputs, Routing, RoutingHome, RoutingInputs, Sharing,
};
use crate::domain::{BatterySpec, Tariff, DELTA_HOURS};
use crate::error::{Error, Result};
use crate::forecast::{ForecastSet, ReserveProfile};
use crate::lp::{solve_with, Backend, LpError, SolverOptions};

pub const DEFAULT_HORIZON: usize = 96;
/// Slack allowed when comparing realized SoC against bounds and floors.
pub const SOC_TOLERANCE: f64 = 1e-7;

pub const TRAJECTORY_HEADER: &str =
    "epoch,home_id,u_ch_kw,u_dis_kw,m_imp_kw,x_s_kw,x_b_kw,z_kw,c_kw,y_s_kw,y_b_kw,w_l_kw,w_c_kw,soc_kwh,margin_usd,feasible";

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSoc {
    /// Fraction of each home's capacity.
    Fraction(f64),
    /// Each home's reserve floor at the first epoch, capped at capacity.
    ReserveFloor,
    /// kWh per dataset home.
    Fixed(Vec<f64>),
}

impl Default for InitialSoc {
    fn default() -> Self {
        InitialSoc::Fraction(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub horizon: usize,
    /// Fixed terminal value for stored energy, USD/kWh. Defaults to the
    /// median forecast import cost over each horizon.
    pub salvage_override: Option<f64>,
    pub initial_soc: InitialSoc,
    pub tariff: Tariff,
    pub backend: Backend,
    pub solver: SolverOptions,
    /// End the rollout at the first infeasible epoch. Used by screening,
    /// where one infeasible epoch settles the verdict.
    pub stop_on_infeasible: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: DEFAULT_HORIZON,
            salvage_override: None,
            initial_soc: InitialSoc::default(),
            tariff: Tariff::default(),
            backend: Backend::default(),
            solver: SolverOptions::default(),
            stop_on_infeasible: false,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let InitialSoc::Fraction(f) = self.initial_soc {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("initial SoC fraction {f} outside [0, 1]")));
            }
        }
        if self.salvage_override.is_some_and(|s| !s.is_finite()) {
            return Err(Error::Config("salvage override must be finite".into()));
        }
        self.tariff.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// One home by dataset index.
    Standalone(usize),
    /// One pool over the listed dataset homes.
    Pooled { homes: Vec<usize>, sharing: Sharing },
}

impl Mode {
    pub fn homes(&self) -> Vec<usize> {
        match self {
            Mode::Standalone(g) => vec![*g],
            Mode::Pooled { homes, .. } => homes.clone(),
        }
    }

    fn sharing(&self) -> Option<Sharing> {
        match self {
            Mode::Standalone(_) => None,
            Mode::Pooled { sharing, .. } => Some(*sharing),
        }
    }
}

/// One home's implemented controls and settlement for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Step {
    pub u_ch: f64,
    pub u_dis: f64,
    pub routing: Routing,
    /// Realized interval-average load and solar, kW.
    pub load: f64,
    pub solar: f64,
    /// Post-decision state of charge, kWh.
    pub soc: f64,
    /// Reserve floor on `soc`, kWh.
    pub floor: f64,
    /// Realized dispatch margin, USD.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub home_ids: Vec<String>,
    /// Dataset indices, in record order.
    pub homes: Vec<usize>,
    pub specs: Vec<BatterySpec>,
    pub e_init: Vec<f64>,
    /// `steps[epoch][home]`.
    pub steps: Vec<Vec<Step>>,
    pub feasible: Vec<bool>,
    /// Optimal horizon objective per epoch, `None` when infeasible.
    pub plan_objective: Vec<Option<f64>>,
    /// Realized price per epoch, USD/kWh.
    pub prices: Vec<f64>,
}

/// Largest violations of the trajectory invariants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub soc_bounds: f64,
    pub dynamics: f64,
    pub balance: f64,
    /// Post-decision SoC below floor, feasible epochs only.
    pub floor: f64,
    pub conservation: f64,
}

impl Residuals {
    pub fn max(&self, other: &Residuals) -> Residuals {
        Residuals {
            soc_bounds: self.soc_bounds.max(other.soc_bounds),
            dynamics: self.dynamics.max(other.dynamics),
            balance: self.balance.max(other.balance),
            floor: self.floor.max(other.floor),
            conservation: self.conservation.max(other.conservation),
        }
    }
}

impl TrajectoryRecord {
    pub fn n_epochs(&self) -> usize {
        self.steps.len()
    }

    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|f| *f)
    }

    /// SoC of record home `k` at the start of `epoch`.
    pub fn soc_at_start(&self, epoch: usize, k: usize) -> f64 {
        match epoch {
            0 => self.e_init[k],
            _ => self.steps[epoch - 1][k].soc,
        }
    }

    /// Weekly realized dispatch margin of record home `k`, USD.
    pub fn dispatch_margin(&self, k: usize) -> f64 {
        self.steps.iter().map(|s| s[k].margin).sum()
    }

    pub fn residuals(&self) -> Residuals {
        let mut r = Residuals::default();
        for (t, steps) in self.steps.iter().enumerate() {
            for (k, s) in steps.iter().enumerate() {
                let spec = &self.specs[k];
                let start = self.soc_at_start(t, k);
                r.soc_bounds = r.soc_bounds.max(-s.soc).max(s.soc - spec.e_max);
                let dyn_res = s.soc - start - spec.eta_ch * DELTA_HOURS * s.u_ch + DELTA_HOURS / spec.eta_dis * s.u_dis;
                r.dynamics = r.dynamics.max(dyn_res.abs());
                let x = &s.routing;
                let balance = x.m_imp + x.w_l + x.w_c - s.u_ch + s.u_dis - x.x_s - x.x_b - x.y_s - x.y_b - x.c - (s.load - s.solar);
                r.balance = r.balance.max(balance.abs());
                if self.feasible[t] {
                    r.floor = r.floor.max(s.floor - s.soc);
                }
            }
            let inflow: f64 = steps.iter().map(|s| s.routing.w_l + s.routing.w_c).sum();
            let outflow: f64 = steps.iter().map(|s| s.routing.y_s + s.routing.y_b).sum();
            r.conservation = r.conservation.max((inflow - outflow).abs());
        }
        r
    }

    /// Whether every epoch was feasible and every post-decision SoC met its
    /// floor within [`SOC_TOLERANCE`].
    pub fn meets_floors(&self) -> bool {
        self.n_epochs() > 0 && self.all_feasible() && self.residuals().floor <= SOC_TOLERANCE
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_rows(&mut w, true).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Writes CSV rows, optionally preceded by the header.
    pub fn write_rows(&self, w: &mut impl Write, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{TRAJECTORY_HEADER}")?;
        }
        for (t, steps) in self.steps.iter().enumerate() {
            for (k, s) in steps.iter().enumerate() {
                let x = &s.routing;
                writeln!(
                    w,
                    "{t},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.home_ids[k],
                    s.u_ch,
                    s.u_dis,
                    x.m_imp,
                    x.x_s,
                    x.x_b,
                    x.z,
                    x.c,
                    x.y_s,
                    x.y_b,
                    x.w_l,
                    x.w_c,
                    s.soc,
                    s.margin,
                    self.feasible[t]
                )?;
            }
        }
        Ok(())
    }
}

fn initial_soc(config: &RolloutConfig, dataset: &FleetDataset, homes: &[usize], reserves: &[ReserveProfile]) -> Result<Vec<f64>> {
    let q0 = dataset.grid.quarter_hour(0);
    homes
        .iter()
        .zip(reserves)
        .map(|(&g, r)| {
            let e_max = dataset.homes[g].battery.e_max;
            match &config.initial_soc {
                InitialSoc::Fraction(f) => Ok(f * e_max),
                InitialSoc::ReserveFloor => Ok(r.r[q0].min(e_max)),
                InitialSoc::Fixed(v) => {
                    let e = *v.get(g).ok_or_else(|| Error::Config(format!("no initial SoC for home {g}")))?;
                    if !(0.0..=e_max).contains(&e) {
                        return Err(Error::Config(format!("initial SoC {e} outside [0, {e_max}] for home {g}")));
                    }
                    Ok(e)
                }
            }
        })
        .collect()
}

/// Caps controls that would carry the battery outside `[0, e_max]`. The
/// horizon LP already enforces this, so the guard only absorbs round-off.
fn guard_controls(e: f64, u_ch: f64, u_dis: f64, spec: &BatterySpec) -> (f64, f64) {
    let next = step_energy(e, u_ch, u_dis, spec, DELTA_HOURS);
    if next > spec.e_max {
        let room = (spec.e_max - e + DELTA_HOURS / spec.eta_dis * u_dis) / (spec.eta_ch * DELTA_HOURS);
        (u_ch.min(room.max(0.0)), u_dis)
    } else if next < 0.0 {
        let avail = (e + spec.eta_ch * DELTA_HOURS * u_ch) * spec.eta_dis / DELTA_HOURS;
        (u_ch, u_dis.min(avail.max(0.0)))
    } else {
        (u_ch, u_dis)
    }
}

/// Runs the MPC loop over every interval of the dataset's grid.
///
/// `forecasts` is indexed by dataset home; `reserves` is aligned with
/// `mode.homes()`.
pub fn rollout(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    reserves: &[ReserveProfile],
    config: &RolloutConfig,
    mode: &Mode,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let homes = mode.homes();
    if homes.is_empty() {
        return Err(Error::Config("rollout needs at least one home".into()));
    }
    if reserves.len() != homes.len() {
        return Err(Error::Shape(format!("{} reserve profiles for {} homes", reserves.len(), homes.len())));
    }
    if let Some(&g) = homes.iter().find(|&&g| g >= dataset.homes.len() || g >= forecasts.l_hat.len()) {
        return Err(Error::Config(format!("home index {g} out of range")));
    }

    let grid = &dataset.grid;
    let n_epochs = grid.n_intervals();
    let h_len = config.horizon;
    let tariff = config.tariff;
    let specs: Vec<BatterySpec> = homes.iter().map(|&g| dataset.homes[g].battery).collect();
    let realized: Vec<_> = homes.iter().map(|&g| dataset.interval_series(g)).collect();
    let prices = dataset.prices.lambda_rt();
    let sharing = mode.sharing();
    let fail = |epoch| move |source: LpError| Error::Rollout { epoch, source };

    let e_init = initial_soc(config, dataset, &homes, reserves)?;
    let mut soc = e_init.clone();
    let mut record = TrajectoryRecord {
        home_ids: homes.iter().map(|&g| dataset.homes[g].home_id.clone()).collect(),
        homes: homes.clone(),
        specs: specs.clone(),
        e_init,
        steps: Vec::with_capacity(n_epochs),
        feasible: Vec::with_capacity(n_epochs),
        plan_objective: Vec::with_capacity(n_epochs),
        prices: Vec::with_capacity(n_epochs),
    };

    for t in 0..n_epochs {
        let q = |h: usize| grid.quarter_hour(t + h);
        let lambda_hat: Vec<f64> = (0..h_len).map(|h| forecasts.lambda_hat[q(h)]).collect();
        let inputs = HorizonInputs {
            delta: DELTA_HOURS,
            salvage: config.salvage_override.unwrap_or_else(|| salvage_default(&lambda_hat, &tariff)),
            lambda_hat,
            tariff,
            homes: homes
                .iter()
                .enumerate()
                .map(|(k, &g)| HomeHorizon {
                    spec: specs[k],
                    // realized SoC can sit a rounding error outside the box
                    e_init: soc[k].clamp(0.0, specs[k].e_max),
                    l_hat: (0..h_len).map(|h| forecasts.l_hat[g][q(h)]).collect(),
                    s_hat: (0..h_len).map(|h| forecasts.s_hat[g][q(h)]).collect(),
                    reserves: (0..h_len).map(|h| reserves[k].r[q(h + 1)]).collect(),
                })
                .collect(),
        };
        let lp = match sharing {
            None => build_standalone(&inputs)?,
            Some(s) => build_pooled(&inputs, s)?,
        };
        let solution = solve_with(&lp.problem, config.backend, &config.solver).map_err(fail(t))?;
        let price = prices[t];
        let floors: Vec<f64> = reserves.iter().map(|r| r.r[q(1)]).collect();

        let steps: Vec<Step> = if solution.is_optimal() {
            let plan = decode(&lp, &inputs, &solution).map_err(fail(t))?;
            let controls: Vec<(f64, f64)> = plan
                .homes
                .iter()
                .enumerate()
                .map(|(k, p)| guard_controls(soc[k], p.u_ch[0], p.u_dis[0], &specs[k]))
                .collect();
            let routing_inputs = RoutingInputs {
                delta: DELTA_HOURS,
                price,
                tariff,
                homes: controls
                    .iter()
                    .zip(&realized)
                    .map(|(&(u_ch, u_dis), r)| RoutingHome {
                        load: r.load[t],
                        solar: r.solar[t],
                        u_ch,
                        u_dis,
                    })
                    .collect(),
            };
            let routing_lp = build_routing(&routing_inputs, sharing)?;
            let settled = solve_with(&routing_lp.problem, config.backend, &config.solver).map_err(fail(t))?;
            let routes = decode_routing(&routing_lp, &settled).map_err(fail(t))?;
            record.plan_objective.push(Some(plan.objective_value));
            (0..homes.len())
                .map(|k| {
                    let (u_ch, u_dis) = controls[k];
                    let h = &routing_inputs.homes[k];
                    Step {
                        u_ch,
                        u_dis,
                        routing: routes[k],
                        load: h.load,
                        solar: h.solar,
                        soc: step_energy(soc[k], u_ch, u_dis, &specs[k], DELTA_HOURS),
                        floor: floors[k],
                        margin: routes[k].margin(&tariff, price, h.load),
                    }
                })
                .collect()
        } else {
            record.plan_objective.push(None);
            (0..homes.len())
                .map(|k| {
                    let (load, solar) = (realized[k].load[t], realized[k].solar[t]);
                    let routing = Routing::passive(load, solar);
                    Step {
                        routing,
                        load,
                        solar,
                        soc: soc[k],
                        floor: floors[k],
                        margin: routing.margin(&tariff, price, load),
                        ..Step::default()
                    }
                })
                .collect()
        };

        for (s, step) in soc.iter_mut().zip(&steps) {
            *s = step.soc;
        }
        record.steps.push(steps);
        record.feasible.push(solution.is_optimal());
        record.prices.push(price);
        if config.stop_on_infeasible && !solution.is_optimal() {
            break;
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Whether the home's standalone MPC stays feasible for the whole week and
/// keeps every post-decision SoC at or above the floor.
pub fn classify_feasibility(
    dataset: &FleetDataset,
    forecasts: &ForecastSet,
    home: usize,
    reserve: &ReserveProfile,
    config: &RolloutConfig,
) -> Result<Feasibility> {
    let config = RolloutConfig {
        stop_on_infeasible: true,
        ..config.clone()
    };
    let record = rollout(dataset, forecasts, std::slice::from_ref(reserve), &config, &Mode::Standalone(home))?;
    let complete = record.n_epochs() == dataset.grid.n_intervals();
    Ok(if complete && record.meets_floors() {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{HomeTelemetry, PriceSeries, TimeGrid};
    use crate::forecast::point_forecasts;
    use chrono::NaiveDate;

    fn day_dataset(load: f64, solar: f64, spec: BatterySpec, price: f64) -> FleetDataset {
        let start = NaiveDate::from_ymd_opt(2025, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let grid = TimeGrid::new(start, 1440).unwrap();
        let home = HomeTelemetry {
            home_id: "h".into(),
            load_kw: vec![load; 1440],
            solar_kw: vec![solar; 1440],
            battery: spec,
        };
        FleetDataset::new(grid, vec![home], PriceSeries::from_usd_per_kwh(&vec![price; 96]).unwrap()).unwrap()
    }

    fn short() -> RolloutConfig {
        RolloutConfig {
            horizon: 8,
            ..RolloutConfig::default()
        }
    }

    #[test]
    fn zero_everything_gives_zero_margin() {
        let ds = day_dataset(0.0, 0.0, BatterySpec::new(10.0, 3.0, 3.0), 0.03);
        let fc = point_forecasts(&ds, 15).unwrap();
        let config = RolloutConfig {
            initial_soc: InitialSoc::Fraction(0.0),
            ..short()
        };
        let rec = rollout(&ds, &fc, &[ReserveProfile::zero(2)], &config, &Mode::Standalone(0)).unwrap();
        assert_eq!(rec.n_epochs(), 96);
        assert!(rec.all_feasible());
        for s in rec.steps.iter().flatten() {
            assert_eq!((s.u_ch, s.u_dis, s.margin, s.soc), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn guard_only_trims_overshoot() {
        let spec = BatterySpec::new(10.0, 5.0, 5.0);
        assert_eq!(guard_controls(5.0, 2.0, 1.0, &spec), (2.0, 1.0));
        let (u_ch, _) = guard_controls(9.9, 5.0, 0.0, &spec);
        assert!((step_energy(9.9, u_ch, 0.0, &spec, DELTA_HOURS) - 10.0).abs() < 1e-12);
        let (_, u_dis) = guard_controls(0.1, 0.0, 5.0, &spec);
        assert!(step_energy(0.1, 0.0, u_dis, &spec, DELTA_HOURS).abs() < 1e-12);
    }

    #[test]
    fn floor_above_capacity_is_flagged_and_passive() {
        let ds = day_dataset(1.0, 0.0, BatterySpec::new(2.0, 3.0, 3.0), 0.03);
        let fc = point_forecasts(&ds, 15).unwrap();
        let high = ReserveProfile {
            backup_hours: 24,
            r: vec![5.0; 96],
        };
        let rec = rollout(&ds, &fc, &[high.clone()], &short(), &Mode::Standalone(0)).unwrap();
        assert!(rec.feasible.iter().all(|f| !f));
        assert!(rec.steps.iter().all(|s| s[0].soc == 1.0 && s[0].routing == Routing::passive(1.0, 0.0)));
        assert_eq!(classify_feasibility(&ds, &fc, 0, &high, &short()).unwrap(), Feasibility::Infeasible);
        assert_eq!(
            classify_feasibility(&ds, &fc, 0, &ReserveProfile::zero(2), &short()).unwrap(),
            Feasibility::Feasible
        );
    }

    #[test]
    fn config_errors_surface() {
        let ds = day_dataset(1.0, 0.0, BatterySpec::new(2.0, 3.0, 3.0), 0.03);
        let fc = point_forecasts(&ds, 15).unwrap();
        let zero = [ReserveProfile::zero(2)];
        let bad = RolloutConfig {
            initial_soc: InitialSoc::Fraction(1.5),
            ..short()
        };
        assert!(matches!(rollout(&ds, &fc, &zero, &bad, &Mode::Standalone(0)), Err(Error::Config(_))));
        assert!(matches!(rollout(&ds, &fc, &zero, &short(), &Mode::Standalone(3)), Err(Error::Config(_))));
        assert!(matches!(rollout(&ds, &fc, &[], &short(), &Mode::Standalone(0)), Err(Error::Shape(_))));
        let fixed = RolloutConfig {
            initial_soc: InitialSoc::Fixed(vec![3.0]),
            ..short()
        };
        assert!(rollout(&ds, &fc, &zero, &fixed, &Mode::Standalone(0)).is_err());
    }

    #[test]
    fn csv_has_one_row_per_epoch_and_home() {
        let ds = day_dataset(1.0, 0.5, BatterySpec::new(5.0, 2.0, 2.0), 0.03);
        let fc = point_forecasts(&ds, 15).unwrap();
        let rec = rollout(&ds, &fc, &[ReserveProfile::zero(2)], &short(), &Mode::Standalone(0)).unwrap();
        let mut buf = Vec::new();
        rec.write_rows(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        assert_eq!(lines.clone().count(), 96);
        assert!(lines.next().unwrap().starts_with("0,h,"));
    }
}
