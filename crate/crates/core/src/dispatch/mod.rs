//! Standalone and pooled dispatch LPs over one MPC horizon, plus the
//! single-period routing LP used to settle realized intervals.
//!
//! Both builders share one per-home layout: `e[0..=H]`, then seven flows per
//! step (`m, u_ch, u_dis, z, x_s, x_b, c`), then, in pooled problems, four
//! sharing flows per step (`y_s, y_b, w_l, w_c`). Per-home rows come in the
//! same order in both builders and pool-level rows come last. When sharing is
//! bounded at zero the presolve therefore recovers each standalone problem
//! exactly, which makes the zero-sharing reduction hold bit for bit.

use crate::domain::{lower_median, BatterySpec, Tariff};
use crate::error::{Error, Result};
use crate::lp::{LpError, LpProblem, LpSolution, Relation};

mod routing;

pub use routing::{build_routing, decode_routing, Routing, RoutingHome, RoutingInputs, RoutingLp};

pub const M_IMP: usize = 0;
pub const U_CH: usize = 1;
pub const U_DIS: usize = 2;
pub const Z: usize = 3;
pub const X_S: usize = 4;
pub const X_B: usize = 5;
pub const C: usize = 6;
pub(crate) const FLOWS: usize = 7;

pub const Y_S: usize = 0;
pub const Y_B: usize = 1;
pub const W_L: usize = 2;
pub const W_C: usize = 3;
pub(crate) const SHARES: usize = 4;

/// Forecasts and state for one home over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeHorizon {
    pub spec: BatterySpec,
    /// kWh at the start of the horizon.
    pub e_init: f64,
    /// kW per step.
    pub l_hat: Vec<f64>,
    /// kW per step.
    pub s_hat: Vec<f64>,
    /// kWh floor on `e[h + 1]`, per step.
    pub reserves: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonInputs {
    /// Step length in hours.
    pub delta: f64,
    /// USD/kWh per step; its length is the horizon.
    pub lambda_hat: Vec<f64>,
    /// USD/kWh applied to terminal stored energy.
    pub salvage: f64,
    pub tariff: Tariff,
    pub homes: Vec<HomeHorizon>,
}

impl HorizonInputs {
    pub fn horizon(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon();
        if h == 0 {
            return Err(Error::Validation("horizon must be at least one step".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Validation(format!("step length {} must be positive", self.delta)));
        }
        if self.homes.is_empty() {
            return Err(Error::Validation("no homes in horizon inputs".into()));
        }
        if !self.salvage.is_finite() || self.lambda_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("prices must be finite".into()));
        }
        self.tariff.validate()?;
        for (g, home) in self.homes.iter().enumerate() {
            home.spec.validate()?;
            if home.l_hat.len() != h || home.s_hat.len() != h || home.reserves.len() != h {
                return Err(Error::Shape(format!("home {g}: per-step series must have length {h}")));
            }
            if !(0.0..=home.spec.e_max).contains(&home.e_init) {
                return Err(Error::Validation(format!(
                    "home {g}: initial energy {} outside [0, {}]",
                    home.e_init, home.spec.e_max
                )));
            }
            let all = home.l_hat.iter().chain(&home.s_hat).chain(&home.reserves);
            if all.clone().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Validation(format!("home {g}: forecasts and reserves must be nonnegative")));
            }
        }
        Ok(())
    }

    /// The same inputs restricted to one home.
    pub fn single(&self, home: usize) -> HorizonInputs {
        HorizonInputs {
            delta: self.delta,
            lambda_hat: self.lambda_hat.clone(),
            salvage: self.salvage,
            tariff: self.tariff,
            homes: vec![self.homes[home].clone()],
        }
    }
}

/// Median forecast avoided import cost over the horizon; even counts take the
/// lower of the middle pair.
pub fn salvage_default(lambda_hat: &[f64], tariff: &Tariff) -> f64 {
    let costs: Vec<f64> = lambda_hat.iter().map(|l| l + tariff.c_tdsp).collect();
    lower_median(&costs).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    Enabled,
    /// Sharing variables present but bounded at zero; a diagnostic that
    /// should reproduce the standalone solution.
    ZeroBounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomeLayout {
    e: usize,
    flows: usize,
    shares: Option<usize>,
}

/// Maps `(home, step, quantity)` to LP variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchLayout {
    horizon: usize,
    homes: Vec<HomeLayout>,
    /// Objective terms that do not depend on any variable (retail revenue).
    constant: f64,
}

impl DispatchLayout {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_homes(&self) -> usize {
        self.homes.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Energy variable for `e[h]`, `h` in `0..=H`.
    pub fn e(&self, home: usize, h: usize) -> usize {
        debug_assert!(h <= self.horizon);
        self.homes[home].e + h
    }

    /// Flow variable `k` (one of [`M_IMP`] ... [`C`]) at step `h`.
    pub fn flow(&self, home: usize, h: usize, k: usize) -> usize {
        debug_assert!(h < self.horizon && k < FLOWS);
        self.homes[home].flows + h * FLOWS + k
    }

    /// Sharing variable `k` (one of [`Y_S`] ... [`W_C`]) at step `h`.
    pub fn share(&self, home: usize, h: usize, k: usize) -> Option<usize> {
        debug_assert!(h < self.horizon && k < SHARES);
        self.homes[home].shares.map(|s| s + h * SHARES + k)
    }

    pub fn is_pooled(&self) -> bool {
        self.homes.iter().any(|h| h.shares.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchLp {
    pub problem: LpProblem,
    pub layout: DispatchLayout,
}

/// One home's LP over the horizon.
pub fn build_standalone(inputs: &HorizonInputs) -> Result<DispatchLp> {
    if inputs.homes.len() != 1 {
        return Err(Error::Validation(format!(
            "standalone LP takes exactly one home, got {}",
            inputs.homes.len()
        )));
    }
    build(inputs, None)
}

/// One LP over every home in `inputs`, coupled by contemporaneous sharing.
pub fn build_pooled(inputs: &HorizonInputs, sharing: Sharing) -> Result<DispatchLp> {
    build(inputs, Some(sharing))
}

fn build(inputs: &HorizonInputs, sharing: Option<Sharing>) -> Result<DispatchLp> {
    inputs.validate()?;
    let horizon = inputs.horizon();
    let delta = inputs.delta;
    let tariff = &inputs.tariff;
    let share_upper = match sharing {
        Some(Sharing::Enabled) => f64::INFINITY,
        _ => 0.0,
    };

    let mut lp = LpProblem::new();
    let mut homes = Vec::with_capacity(inputs.homes.len());
    let mut constant = 0.0;

    for (g, home) in inputs.homes.iter().enumerate() {
        let spec = &home.spec;
        let e = lp.n_vars();
        for h in 0..=horizon {
            let (lo, up) = match h {
                0 => (home.e_init, home.e_init),
                _ => (home.reserves[h - 1].min(spec.e_max), spec.e_max),
            };
            let obj = if h == horizon { inputs.salvage } else { 0.0 };
            lp.add_var(format!("e[{g},{h}]"), lo, up, obj);
        }

        let flows = lp.n_vars();
        for h in 0..horizon {
            let lam = inputs.lambda_hat[h];
            constant += delta * tariff.p_ret * home.l_hat[h];
            lp.add_var(format!("m[{g},{h}]"), 0.0, f64::INFINITY, -delta * (lam + tariff.c_tdsp));
            lp.add_var(format!("u_ch[{g},{h}]"), 0.0, spec.p_ch_max, 0.0);
            lp.add_var(format!("u_dis[{g},{h}]"), 0.0, spec.p_dis_max, 0.0);
            lp.add_var(format!("z[{g},{h}]"), 0.0, f64::INFINITY, -delta * tariff.beta);
            lp.add_var(format!("x_s[{g},{h}]"), 0.0, f64::INFINITY, delta * (lam - tariff.beta));
            lp.add_var(format!("x_b[{g},{h}]"), 0.0, f64::INFINITY, delta * lam);
            lp.add_var(format!("c[{g},{h}]"), 0.0, f64::INFINITY, 0.0);
        }

        let shares = sharing.map(|_| {
            let start = lp.n_vars();
            for h in 0..horizon {
                lp.add_var(format!("y_s[{g},{h}]"), 0.0, share_upper, -delta * tariff.beta);
                lp.add_var(format!("y_b[{g},{h}]"), 0.0, share_upper, 0.0);
                lp.add_var(format!("w_l[{g},{h}]"), 0.0, share_upper, 0.0);
                lp.add_var(format!("w_c[{g},{h}]"), 0.0, share_upper, 0.0);
            }
            start
        });
        homes.push(HomeLayout { e, flows, shares });
    }

    let layout = DispatchLayout {
        horizon,
        homes,
        constant,
    };

    for (g, home) in inputs.homes.iter().enumerate() {
        let spec = &home.spec;
        for h in 0..horizon {
            let f = |k| layout.flow(g, h, k);
            let s = |k| layout.share(g, h, k);

            lp.add_row(
                vec![
                    (layout.e(g, h + 1), 1.0),
                    (layout.e(g, h), -1.0),
                    (f(U_CH), -spec.eta_ch * delta),
                    (f(U_DIS), delta / spec.eta_dis),
                ],
                Relation::Eq,
                0.0,
            );

            let mut balance = vec![
                (f(M_IMP), 1.0),
                (f(U_CH), -1.0),
                (f(U_DIS), 1.0),
                (f(X_S), -1.0),
                (f(X_B), -1.0),
                (f(C), -1.0),
            ];
            let mut charge = vec![(f(Z), 1.0), (f(U_CH), -1.0)];
            let mut discharge = vec![(f(X_B), 1.0), (f(U_DIS), -1.0)];
            let mut solar = vec![(f(Z), 1.0), (f(X_S), 1.0), (f(C), 1.0)];
            let mut grid_charge = vec![(f(M_IMP), 1.0), (f(U_CH), -1.0), (f(Z), 1.0)];
            if let (Some(ys), Some(yb), Some(wl), Some(wc)) = (s(Y_S), s(Y_B), s(W_L), s(W_C)) {
                balance.extend([(wl, 1.0), (wc, 1.0), (ys, -1.0), (yb, -1.0)]);
                charge.push((wc, 1.0));
                discharge.push((yb, 1.0));
                solar.push((ys, 1.0));
                grid_charge.push((wc, 1.0));
            }
            lp.add_row(balance, Relation::Eq, home.l_hat[h] - home.s_hat[h]);
            lp.add_row(charge, Relation::Le, 0.0);
            lp.add_row(discharge, Relation::Le, 0.0);
            lp.add_row(solar, Relation::Le, home.s_hat[h]);
            lp.add_row(grid_charge, Relation::Ge, 0.0);
        }
        // A floor above capacity cannot be a bound (lower > upper); keep it as
        // a row so the LP reports infeasible instead of malformed.
        for h in 0..horizon {
            if home.reserves[h] > spec.e_max {
                lp.add_row(vec![(layout.e(g, h + 1), 1.0)], Relation::Ge, home.reserves[h]);
            }
        }
    }

    if sharing.is_some() {
        let n = inputs.homes.len();
        for h in 0..horizon {
            let outflow = |i: usize| {
                [
                    (layout.share(i, h, Y_S).unwrap(), -1.0),
                    (layout.share(i, h, Y_B).unwrap(), -1.0),
                ]
            };
            let inflow = |g: usize| {
                [
                    (layout.share(g, h, W_L).unwrap(), 1.0),
                    (layout.share(g, h, W_C).unwrap(), 1.0),
                ]
            };
            let mut conservation = Vec::with_capacity(4 * n);
            for g in 0..n {
                conservation.extend(inflow(g));
                conservation.extend(outflow(g));
            }
            lp.add_row(conservation, Relation::Eq, 0.0);
            for g in 0..n {
                let mut row = inflow(g).to_vec();
                for i in (0..n).filter(|&i| i != g) {
                    row.extend(outflow(i));
                }
                lp.add_row(row, Relation::Le, 0.0);
            }
        }
    }

    Ok(DispatchLp { problem: lp, layout })
}

/// Decoded per-home schedule. Sharing series are zero in standalone plans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HomePlan {
    pub m_imp: Vec<f64>,
    pub u_ch: Vec<f64>,
    pub u_dis: Vec<f64>,
    pub z: Vec<f64>,
    pub x_s: Vec<f64>,
    pub x_b: Vec<f64>,
    pub c: Vec<f64>,
    pub y_s: Vec<f64>,
    pub y_b: Vec<f64>,
    pub w_l: Vec<f64>,
    pub w_c: Vec<f64>,
    /// kWh, length `H + 1`.
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub homes: Vec<HomePlan>,
    /// Forecast firm dispatch margin over the horizon including salvage, USD.
    pub objective_value: f64,
}

/// Maps an optimal solution back to per-home schedules.
///
/// Values are clamped into their bounds to remove solver round-off, and the
/// energy path is re-integrated from the decoded controls so the dynamics
/// identity holds to machine precision.
pub fn decode(lp: &DispatchLp, inputs: &HorizonInputs, solution: &LpSolution) -> Result<DispatchPlan, LpError> {
    if !solution.is_optimal() {
        return Err(LpError::NotOptimal(solution.status));
    }
    let (problem, layout) = (&lp.problem, &lp.layout);
    if solution.x.len() != problem.n_vars() {
        return Err(LpError::Malformed(format!(
            "solution has {} values for {} variables",
            solution.x.len(),
            problem.n_vars()
        )));
    }
    let value = |j: usize| solution.x[j].clamp(problem.lower()[j], problem.upper()[j]);
    let horizon = layout.horizon;
    let delta = inputs.delta;

    let homes = (0..layout.n_homes())
        .map(|g| {
            let series = |k| (0..horizon).map(|h| value(layout.flow(g, h, k))).collect::<Vec<_>>();
            let shared = |k| {
                (0..horizon)
                    .map(|h| layout.share(g, h, k).map_or(0.0, value))
                    .collect::<Vec<_>>()
            };
            let spec = &inputs.homes[g].spec;
            let (u_ch, u_dis) = (series(U_CH), series(U_DIS));
            let mut e = Vec::with_capacity(horizon + 1);
            e.push(inputs.homes[g].e_init);
            for h in 0..horizon {
                e.push(step_energy(e[h], u_ch[h], u_dis[h], spec, delta));
            }
            HomePlan {
                m_imp: series(M_IMP),
                z: series(Z),
                x_s: series(X_S),
                x_b: series(X_B),
                c: series(C),
                y_s: shared(Y_S),
                y_b: shared(Y_B),
                w_l: shared(W_L),
                w_c: shared(W_C),
                u_ch,
                u_dis,
                e,
            }
        })
        .collect();

    Ok(DispatchPlan {
        homes,
        objective_value: solution.objective_value + layout.constant,
    })
}

/// Battery energy after one step of charging and discharging.
pub fn step_energy(e: f64, u_ch: f64, u_dis: f64, spec: &BatterySpec, delta: f64) -> f64 {
    e + spec.eta_ch * delta * u_ch - delta / spec.eta_dis * u_dis
}
