//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, FleetDataset, PriceProfile, SynthConfig};
use fleetpool::domain::{BatterySpec, HomeTelemetry, PriceSeries, TimeGrid};
use fleetpool::lp::{LpProblem, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn week_start() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

pub fn week() -> TimeGrid {
    TimeGrid::week(week_start()).unwrap()
}

pub fn synthetic_fleet(n_homes: usize, seed: u64, price_profile: PriceProfile) -> FleetDataset {
    let config = SynthConfig {
        n_homes,
        seed,
        price_profile,
        ..SynthConfig::default()
    };
    generate_fleet(&config, week()).unwrap()
}

/// One-week dataset with per-minute load/solar given as functions of the
/// minute index and a constant price.
pub fn flat_fleet(homes: &[(f64, f64, BatterySpec)], price_usd_per_kwh: f64) -> FleetDataset {
    let grid = week();
    let n = grid.n_minutes();
    let homes = homes
        .iter()
        .enumerate()
        .map(|(i, &(load, solar, battery))| HomeTelemetry {
            home_id: format!("fixture{i:02}"),
            load_kw: vec![load; n],
            solar_kw: vec![solar; n],
            battery,
        })
        .collect();
    let prices = PriceSeries::from_usd_per_kwh(&vec![price_usd_per_kwh; grid.n_intervals()]).unwrap();
    FleetDataset::new(grid, homes, prices).unwrap()
}

// ---------------------------------------------------------------------------
// LP oracle: enumerate every basic point of the box-plus-rows polytope.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

const ORACLE_TOL: f64 = 1e-9;

/// Inverts a small dense matrix by Gauss-Jordan with partial pivoting.
fn invert(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let k = a.len();
    let mut inv: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..k {
        let piv = (col..k).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..k {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..k {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for j in 0..k {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best objective over all basic points when infinite upper bounds are
/// replaced by `big`, or `None` if no basic point is feasible.
fn enumerate_vertices(p: &LpProblem, big: f64) -> Option<f64> {
    let n = p.n_vars();
    let lo = p.lower();
    let up: Vec<f64> = p.upper().iter().map(|u| if u.is_finite() { *u } else { big }).collect();
    let c = p.objective();
    let rows = p.rows();
    let dense: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for &(j, a) in &r.coeffs {
                v[j] += a;
            }
            v
        })
        .collect();
    let scale: Vec<f64> = dense.iter().map(|r| r.iter().fold(1.0f64, |m, a| m.max(a.abs()))).collect();

    let feasible = |x: &[f64]| {
        (0..n).all(|j| x[j] >= lo[j] - ORACLE_TOL && x[j] <= up[j] + ORACLE_TOL)
            && rows.iter().enumerate().all(|(i, r)| {
                let act: f64 = dense[i].iter().zip(x).map(|(a, v)| a * v).sum();
                let s = (act - r.rhs) / scale[i];
                match r.relation {
                    Relation::Eq => s.abs() <= ORACLE_TOL,
                    Relation::Le => s <= ORACLE_TOL,
                    Relation::Ge => s >= -ORACLE_TOL,
                }
            })
    };

    let mut best: Option<f64> = None;
    // Any row may be tight at a vertex; equality rows are enforced by the
    // feasibility check, so dependent or empty ones need not be selected.
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();
        if k > n {
            continue;
        }
        for free in combinations(n, k) {
            let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
            let inv = if k == 0 {
                Vec::new()
            } else {
                match invert(active.iter().map(|&i| free.iter().map(|&j| dense[i][j]).collect()).collect()) {
                    Some(inv) => inv,
                    None => continue,
                }
            };
            for bits in 0u32..(1 << fixed.len()) {
                let mut x = vec![0.0; n];
                for (b, &j) in fixed.iter().enumerate() {
                    x[j] = if bits & (1 << b) != 0 { up[j] } else { lo[j] };
                }
                let rhs: Vec<f64> = active
                    .iter()
                    .map(|&i| rows[i].rhs - fixed.iter().map(|&j| dense[i][j] * x[j]).sum::<f64>())
                    .collect();
                for (r, &j) in free.iter().enumerate() {
                    x[j] = inv[r].iter().zip(&rhs).map(|(a, b)| a * b).sum();
                }
                if feasible(&x) {
                    let obj: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                    best = Some(best.map_or(obj, |b| b.max(obj)));
                }
            }
        }
    }
    best
}

/// Brute-force reference for small LPs (`n_vars <= 10`, `n_rows <= 8`).
pub fn brute_force(p: &LpProblem) -> Oracle {
    const BIG: f64 = 1e6;
    let near = match enumerate_vertices(p, BIG) {
        None => return Oracle::Infeasible,
        Some(v) => v,
    };
    if p.upper().iter().all(|u| u.is_finite()) {
        return Oracle::Optimal(near);
    }
    // A bounded optimum does not move when the artificial box doubles.
    let far = enumerate_vertices(p, 2.0 * BIG).expect("a larger box keeps feasible points");
    if far > near + 1e-6 * near.abs().max(1.0) {
        Oracle::Unbounded
    } else {
        Oracle::Optimal(near)
    }
}

/// Random integer LP with a finite lower bound on every variable. Most rows
/// are satisfied by a random integer point of the box, so all three
/// outcomes occur.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.random_range(1..=10);
    let m = rng.random_range(1..=8);
    let mut p = LpProblem::new();
    let mut anchor = Vec::with_capacity(n);
    for j in 0..n {
        let lo = rng.random_range(-3..=2);
        let width = rng.random_range(0..=6);
        let up = if rng.random_bool(0.2) { f64::INFINITY } else { (lo + width) as f64 };
        anchor.push(rng.random_range(lo..=lo + width) as f64);
        p.add_var(format!("x{j}"), lo as f64, up, rng.random_range(-5..=5) as f64);
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| {
                let keep = rng.random_bool(0.7);
                let a = rng.random_range(-5..=5) as f64;
                (keep && a != 0.0).then_some((j, a))
            })
            .collect();
        let relation = match rng.random_range(0..10) {
            0..=4 => Relation::Le,
            5..=7 => Relation::Ge,
            _ => Relation::Eq,
        };
        let at_anchor: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
        let slack = rng.random_range(0..=4) as f64;
        let rhs = if rng.random_bool(0.85) {
            match relation {
                Relation::Le => at_anchor + slack,
                Relation::Ge => at_anchor - slack,
                Relation::Eq => at_anchor,
            }
        } else {
            rng.random_range(-10..=10) as f64
        };
        p.add_row(coeffs, relation, rhs);
    }
    p
}

pub fn lp_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Reserve oracle, written without reference to the forecast module.
// ---------------------------------------------------------------------------

/// Reserve floor (kWh internal) for `home` at quarter-hour `q`: enumerate
/// every minute of the week whose clock time lies within `k_b` minutes of
/// the quarter-hour's window, sum positive net load forward over
/// `hours` with wraparound, take the nearest-rank quantile, divide by the
/// discharge efficiency.
pub fn reserve_oracle(ds: &FleetDataset, home: usize, hours: u32, q: usize, k_b: usize, quantile: f64) -> f64 {
    let h = &ds.homes[home];
    let n = h.load_kw.len();
    let window = 60 * hours as usize;
    let clock0 = ds.grid.minute_of_day(0);
    let mut wanted = [false; 1440];
    for offset in -(k_b as i64)..(15 + k_b as i64) {
        wanted[(15 * q as i64 + offset).rem_euclid(1440) as usize] = true;
    }
    let mut sample = Vec::new();
    for m in 0..n {
        if !wanted[(clock0 + m) % 1440] {
            continue;
        }
        let mut total = 0.0;
        for j in 0..window {
            let i = (m + j) % n;
            total += (h.load_kw[i] - h.solar_kw[i]).max(0.0);
        }
        sample.push(total / 60.0);
    }
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (quantile * sample.len() as f64).ceil() as usize;
    sample[rank.max(1) - 1] / h.battery.eta_dis
}
