mod common;

use common::{reserve_oracle, synthetic_fleet};
use fleetpool::data_io::PriceProfile;
use fleetpool::dispatch::{build_standalone, HomeHorizon, HorizonInputs};
use fleetpool::domain::{Tariff, BACKUP_MENU};
use fleetpool::forecast::{point_forecasts, reserve_profile, ReserveParams, ReserveTable};
use fleetpool::lp::{solve, SolverOptions};
use proptest::prelude::*;
use std::sync::OnceLock;

fn fleet() -> &'static fleetpool::data_io::FleetDataset {
    static FLEET: OnceLock<fleetpool::data_io::FleetDataset> = OnceLock::new();
    FLEET.get_or_init(|| synthetic_fleet(10, 7, PriceProfile::Diurnal))
}

#[test]
fn reserve_profile_equals_brute_force() {
    let ds = fleet();
    let params = ReserveParams::default();
    for home in 0..5 {
        for hours in [2, 4, 24] {
            let got = reserve_profile(ds, home, hours, &params).unwrap();
            for q in 0..96 {
                let want = reserve_oracle(ds, home, hours, q, params.k_b, params.quantile);
                assert_eq!(got.r[q], want, "home {home} T={hours} q={q}");
            }
        }
    }
}

#[test]
fn reserve_table_matches_single_profiles() {
    let ds = fleet();
    let params = ReserveParams { k_b: 10, quantile: 0.5 };
    let table = ReserveTable::build(ds, &[2, 12], &params).unwrap();
    for home in 0..ds.homes.len() {
        for hours in [2, 12] {
            assert_eq!(table.get(home, hours).unwrap(), &reserve_profile(ds, home, hours, &params).unwrap());
        }
    }
    assert!(table.get(0, 4).is_none());
}

#[test]
fn reserves_nondecreasing_in_backup_duration() {
    let ds = fleet();
    let table = ReserveTable::build(ds, &BACKUP_MENU, &ReserveParams::default()).unwrap();
    for home in 0..ds.homes.len() {
        for pair in BACKUP_MENU.windows(2) {
            let (short, long) = (table.get(home, pair[0]).unwrap(), table.get(home, pair[1]).unwrap());
            for q in 0..96 {
                assert!(long.r[q] >= short.r[q], "home {home} q={q}: {} h {} > {} h {}", pair[0], short.r[q], pair[1], long.r[q]);
            }
        }
    }
}

#[test]
fn reserves_are_nonnegative_and_finite() {
    let ds = fleet();
    let table = ReserveTable::build(ds, &BACKUP_MENU, &ReserveParams::default()).unwrap();
    for t in table.tiers() {
        for home in 0..ds.homes.len() {
            assert!(table.get(home, t).unwrap().r.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}

#[test]
fn off_menu_duration_rejected() {
    assert!(reserve_profile(fleet(), 0, 3, &ReserveParams::default()).is_err());
    assert!(ReserveTable::build(fleet(), &[2, 5], &ReserveParams::default()).is_err());
}

#[test]
fn point_forecast_is_neighborhood_mean() {
    let ds = fleet();
    let k_f = 15;
    let f = point_forecasts(ds, k_f).unwrap();
    let h = &ds.homes[3];
    for q in [0, 1, 40, 95] {
        let mut wanted = [false; 1440];
        for offset in -(k_f as i64)..(15 + k_f as i64) {
            wanted[(15 * q as i64 + offset).rem_euclid(1440) as usize] = true;
        }
        let picked: Vec<usize> = (0..h.load_kw.len()).filter(|m| wanted[m % 1440]).collect();
        let mean = |v: &[f64]| picked.iter().map(|&m| v[m]).sum::<f64>() / picked.len() as f64;
        assert!((f.l_hat[3][q] - mean(&h.load_kw)).abs() < 1e-12, "q={q}");
        assert!((f.s_hat[3][q] - mean(&h.solar_kw)).abs() < 1e-12, "q={q}");
    }
}

fn horizon_inputs(home: usize, start: usize, len: usize, scale: f64, e_frac: f64) -> HorizonInputs {
    let ds = fleet();
    let f = point_forecasts(ds, 15).unwrap();
    let r = reserve_profile(ds, home, 4, &ReserveParams::default()).unwrap();
    let q = |h: usize| (start + h) % 96;
    let spec = ds.homes[home].battery;
    HorizonInputs {
        delta: 0.25,
        lambda_hat: (0..len).map(|h| f.lambda_hat[q(h)]).collect(),
        salvage: 0.06,
        tariff: Tariff::default(),
        homes: vec![HomeHorizon {
            spec,
            e_init: e_frac * spec.e_max,
            l_hat: (0..len).map(|h| f.l_hat[home][q(h)]).collect(),
            s_hat: (0..len).map(|h| f.s_hat[home][q(h)]).collect(),
            reserves: (0..len).map(|h| scale * r.r[q(h + 1)]).collect(),
        }],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_reserves_up_never_raises_the_optimum(home in 0usize..10, start in 0usize..96, e_frac in 0.0f64..=1.0) {
        let solve_at = |scale| {
            let lp = build_standalone(&horizon_inputs(home, start, 16, scale, e_frac)).unwrap();
            let s = solve(&lp.problem, &SolverOptions::default()).unwrap();
            s.is_optimal().then_some(s.objective_value)
        };
        match (solve_at(1.0), solve_at(1.1)) {
            (Some(base), Some(tight)) => prop_assert!(tight <= base + 1e-9, "{tight} > {base}"),
            (None, Some(_)) => prop_assert!(false, "tighter reserves became feasible"),
            _ => {}
        }
    }
}
