//! Settlement of one realized interval: battery controls are fixed and the
//! LP chooses import, export, curtailment and sharing to maximize the
//! realized one-step margin.
//!
//! The row structure mirrors the horizon LP with `u_ch, u_dis` moved to the
//! right-hand side. Choosing `c = S`, `x_b = u_dis`, `m = L + u_ch` and no
//! sharing is always feasible.

use super::{Sharing, SHARES, W_C, W_L, Y_B, Y_S};
use crate::domain::Tariff;
use crate::error::{Error, Result};
use crate::lp::{LpError, LpProblem, LpSolution, Relation};

const M_IMP: usize = 0;
const Z: usize = 1;
const X_S: usize = 2;
const X_B: usize = 3;
const C: usize = 4;
const FLOWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingHome {
    /// Realized interval-average load, kW.
    pub load: f64,
    /// Realized interval-average solar, kW.
    pub solar: f64,
    pub u_ch: f64,
    pub u_dis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingInputs {
    pub delta: f64,
    /// Realized price, USD/kWh.
    pub price: f64,
    pub tariff: Tariff,
    pub homes: Vec<RoutingHome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Routing {
    pub m_imp: f64,
    pub z: f64,
    pub x_s: f64,
    pub x_b: f64,
    pub c: f64,
    pub y_s: f64,
    pub y_b: f64,
    pub w_l: f64,
    pub w_c: f64,
}

impl Routing {
    /// Routing of a home whose battery is idle and which does not share:
    /// import any deficit, export any surplus.
    pub fn passive(load: f64, solar: f64) -> Routing {
        let net = load - solar;
        Routing {
            m_imp: net.max(0.0),
            x_s: (-net).max(0.0),
            ..Routing::default()
        }
    }

    /// Realized one-step margin of this routing, USD.
    pub fn margin(&self, tariff: &Tariff, price: f64, load: f64) -> f64 {
        tariff.interval_margin(price, load, self.m_imp, self.x_s, self.x_b, self.z, self.y_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingLp {
    pub problem: LpProblem,
    pooled: bool,
}

/// `sharing = None` builds independent per-home blocks with no sharing
/// variables; with one home this is the standalone settlement.
pub fn build_routing(inputs: &RoutingInputs, sharing: Option<Sharing>) -> Result<RoutingLp> {
    if inputs.homes.is_empty() {
        return Err(Error::Validation("routing LP needs at least one home".into()));
    }
    let t = &inputs.tariff;
    let (delta, price) = (inputs.delta, inputs.price);
    let share_upper = match sharing {
        Some(Sharing::Enabled) => f64::INFINITY,
        _ => 0.0,
    };
    let n = inputs.homes.len();
    let stride = FLOWS + if sharing.is_some() { SHARES } else { 0 };

    let mut lp = LpProblem::new();
    for g in 0..n {
        lp.add_var(format!("m[{g}]"), 0.0, f64::INFINITY, -delta * (price + t.c_tdsp));
        lp.add_var(format!("z[{g}]"), 0.0, f64::INFINITY, -delta * t.beta);
        lp.add_var(format!("x_s[{g}]"), 0.0, f64::INFINITY, delta * (price - t.beta));
        lp.add_var(format!("x_b[{g}]"), 0.0, f64::INFINITY, delta * price);
        lp.add_var(format!("c[{g}]"), 0.0, f64::INFINITY, 0.0);
        if sharing.is_some() {
            lp.add_var(format!("y_s[{g}]"), 0.0, share_upper, -delta * t.beta);
            lp.add_var(format!("y_b[{g}]"), 0.0, share_upper, 0.0);
            lp.add_var(format!("w_l[{g}]"), 0.0, share_upper, 0.0);
            lp.add_var(format!("w_c[{g}]"), 0.0, share_upper, 0.0);
        }
    }
    let var = |g: usize, k: usize| g * stride + k;
    let share = |g: usize, k: usize| g * stride + FLOWS + k;

    for (g, home) in inputs.homes.iter().enumerate() {
        let mut balance = vec![(var(g, M_IMP), 1.0), (var(g, X_S), -1.0), (var(g, X_B), -1.0), (var(g, C), -1.0)];
        let mut charge = vec![(var(g, Z), 1.0)];
        let mut discharge = vec![(var(g, X_B), 1.0)];
        let mut solar = vec![(var(g, Z), 1.0), (var(g, X_S), 1.0), (var(g, C), 1.0)];
        let mut grid_charge = vec![(var(g, M_IMP), 1.0), (var(g, Z), 1.0)];
        if sharing.is_some() {
            balance.extend([(share(g, W_L), 1.0), (share(g, W_C), 1.0), (share(g, Y_S), -1.0), (share(g, Y_B), -1.0)]);
            charge.push((share(g, W_C), 1.0));
            discharge.push((share(g, Y_B), 1.0));
            solar.push((share(g, Y_S), 1.0));
            grid_charge.push((share(g, W_C), 1.0));
        }
        lp.add_row(balance, Relation::Eq, home.load - home.solar + home.u_ch - home.u_dis);
        lp.add_row(charge, Relation::Le, home.u_ch);
        lp.add_row(discharge, Relation::Le, home.u_dis);
        lp.add_row(solar, Relation::Le, home.solar);
        lp.add_row(grid_charge, Relation::Ge, home.u_ch);
    }

    if sharing.is_some() {
        let mut conservation = Vec::with_capacity(4 * n);
        for g in 0..n {
            conservation.extend([(share(g, W_L), 1.0), (share(g, W_C), 1.0), (share(g, Y_S), -1.0), (share(g, Y_B), -1.0)]);
        }
        lp.add_row(conservation, Relation::Eq, 0.0);
        for g in 0..n {
            let mut row = vec![(share(g, W_L), 1.0), (share(g, W_C), 1.0)];
            for i in (0..n).filter(|&i| i != g) {
                row.extend([(share(i, Y_S), -1.0), (share(i, Y_B), -1.0)]);
            }
            lp.add_row(row, Relation::Le, 0.0);
        }
    }

    Ok(RoutingLp {
        problem: lp,
        pooled: sharing.is_some(),
    })
}

pub fn decode_routing(lp: &RoutingLp, solution: &LpSolution) -> Result<Vec<Routing>, LpError> {
    if !solution.is_optimal() {
        return Err(LpError::NotOptimal(solution.status));
    }
    let p = &lp.problem;
    let value = |j: usize| solution.x[j].clamp(p.lower()[j], p.upper()[j]);
    let stride = FLOWS + if lp.pooled { SHARES } else { 0 };
    let n = p.n_vars() / stride;
    Ok((0..n)
        .map(|g| {
            let b = g * stride;
            let s = |k| if lp.pooled { value(b + FLOWS + k) } else { 0.0 };
            Routing {
                m_imp: value(b + M_IMP),
                z: value(b + Z),
                x_s: value(b + X_S),
                x_b: value(b + X_B),
                c: value(b + C),
                y_s: s(Y_S),
                y_b: s(Y_B),
                w_l: s(W_L),
                w_c: s(W_C),
            }
        })
        .collect())
}
