mod common;

use common::synthetic_fleet;
use fleetpool::data_io::{FleetDataset, PriceProfile};
use fleetpool::dispatch::Sharing;
use fleetpool::domain::{BatterySpec, Tariff, BACKUP_MENU};
use fleetpool::experiments::{
    cap_spectrum, firm_margin, read_screen_csv, read_tiers_csv, run_paired, run_pooled, run_standalone, screen_cohort, CapSpectrum,
    ExperimentConfig, Provenance, ScreenResult, TierAssignment,
};
use fleetpool::forecast::{point_forecasts, ForecastSet, ReserveParams, ReserveTable};
use fleetpool::mpc::{rollout, Mode, RolloutConfig, Step, TrajectoryRecord};
use std::sync::OnceLock;

struct Fixture {
    ds: FleetDataset,
    forecasts: ForecastSet,
    reserves: ReserveTable,
    config: ExperimentConfig,
    screen: ScreenResult,
    spectrum: CapSpectrum,
}

/// Six homes; the first has its load scaled up until it cannot hold even
/// the two-hour floor.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut ds = synthetic_fleet(6, 42, PriceProfile::Diurnal);
        ds.homes[0].load_kw.iter_mut().for_each(|l| *l *= 5.0);
        let forecasts = point_forecasts(&ds, 15).unwrap();
        let reserves = ReserveTable::build(&ds, &BACKUP_MENU, &ReserveParams::default()).unwrap();
        let config = ExperimentConfig {
            rollout: RolloutConfig {
                horizon: 6,
                ..RolloutConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let screen = screen_cohort(&ds, &forecasts, &reserves, &config).unwrap();
        let spectrum = cap_spectrum(&ds, &forecasts, &reserves, &screen.retained, &BACKUP_MENU, &config).unwrap();
        Fixture {
            ds,
            forecasts,
            reserves,
            config,
            screen,
            spectrum,
        }
    })
}

/// Full-week feasibility at one tier from an uninterrupted rollout.
fn feasible_by_full_rollout(f: &Fixture, home: usize, tier: u32) -> bool {
    let rec = rollout(
        &f.ds,
        &f.forecasts,
        &[f.reserves.get(home, tier).unwrap().clone()],
        &f.config.rollout,
        &Mode::Standalone(home),
    )
    .unwrap();
    rec.all_feasible() && rec.residuals().floor <= 1e-7
}

#[test]
fn screening_matches_per_tier_rollouts() {
    let f = fixture();
    for (g, row) in f.screen.rows.iter().enumerate() {
        let verdicts: Vec<bool> = BACKUP_MENU.iter().map(|&t| feasible_by_full_rollout(f, g, t)).collect();
        let prefix = verdicts.iter().take_while(|v| **v).count();
        let want = prefix.checked_sub(1).map(|i| BACKUP_MENU[i]);
        assert_eq!(row.t_maxfeas, want, "home {g}: {verdicts:?}");
    }
    assert_eq!(f.screen.dropped, vec![0]);
    assert!(f.screen.retained.len() >= 3);
    assert!(f.screen.retained.provenance.iter().all(|p| *p == Provenance::MaxFeasible));
}

#[test]
fn dropped_home_never_reaches_downstream_tables() {
    let f = fixture();
    let id = &f.ds.homes[0].home_id;
    assert!(!f.screen.retained.home_ids.contains(id));
    for run in &f.spectrum.runs {
        assert!(!run.assignment.home_ids.contains(id));
        for rec in run.standalone.iter().chain(&run.pooled) {
            assert!(!rec.home_ids.contains(id));
        }
        for report in [&run.standalone_report, &run.pooled_report] {
            assert!(report.homes.iter().all(|h| &h.home_id != id));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("screen.csv");
    f.screen.write_csv(&path).unwrap();
    assert_eq!(read_screen_csv(&path, &f.ds).unwrap(), f.screen.retained);
}

#[test]
fn homes_at_cap_never_increase_with_the_cap() {
    let rows = &fixture().spectrum.rows;
    assert_eq!(rows.iter().map(|r| r.cap_hours).collect::<Vec<_>>(), BACKUP_MENU);
    for pair in rows.windows(2) {
        assert!(pair[1].homes_at_cap <= pair[0].homes_at_cap, "{pair:?}");
    }
    assert_eq!(rows[0].homes_at_cap, fixture().screen.retained.len());
}

#[test]
fn full_cap_run_is_the_uncapped_run() {
    let f = fixture();
    let mut capped = f.spectrum.runs.last().unwrap().clone();
    assert_eq!(capped.cap_hours, Some(24));
    capped.cap_hours = None;
    let uncapped = run_paired(&f.ds, &f.forecasts, &f.reserves, &f.screen.retained, &f.config).unwrap();
    assert_eq!(capped.standalone, uncapped.standalone);
    assert_eq!(capped.pooled, uncapped.pooled);
    assert_eq!(capped.standalone_report, uncapped.standalone_report);
    assert_eq!(capped.pooled_report, uncapped.pooled_report);
    assert_eq!(capped.assignment.tiers, uncapped.assignment.tiers);
}

#[test]
fn pooling_never_loses_at_any_cap() {
    for run in &fixture().spectrum.runs {
        assert!(
            run.pooled_report.total_firm_usd >= run.standalone_report.total_firm_usd - 1e-6,
            "cap {:?}: {} < {}",
            run.cap_hours,
            run.pooled_report.total_firm_usd,
            run.standalone_report.total_firm_usd
        );
        for rec in run.standalone.iter().chain(&run.pooled) {
            let r = rec.residuals();
            assert!(r.soc_bounds <= 1e-7 && r.dynamics < 1e-9 && r.balance < 1e-7 && r.floor <= 1e-7 && r.conservation < 1e-7, "{r:?}");
        }
    }
}

#[test]
fn soc_rows_cover_every_cap_and_epoch() {
    let f = fixture();
    let rows = f.spectrum.soc_rows();
    assert_eq!(rows.len(), BACKUP_MENU.len() * 672);
    for (i, &cap) in BACKUP_MENU.iter().enumerate() {
        let series: Vec<f64> = rows.iter().filter(|r| r.cap_hours == cap).map(|r| r.total_soc_kwh).collect();
        assert_eq!(series, f.spectrum.runs[i].pooled_total_soc());
    }
    let half: f64 = f.screen.retained.homes.iter().map(|&g| 0.5 * f.ds.homes[g].battery.e_max).sum();
    assert!((rows[0].total_soc_kwh - half).abs() < 1e-12);
}

#[test]
fn single_home_pool_gains_nothing() {
    let f = fixture();
    let one = TierAssignment {
        homes: vec![f.screen.retained.homes[0]],
        home_ids: vec![f.screen.retained.home_ids[0].clone()],
        tiers: vec![2],
        provenance: vec![Provenance::MaxFeasible],
    };
    let run = run_paired(&f.ds, &f.forecasts, &f.reserves, &one, &f.config).unwrap();
    assert!(run.benefit_per_home().abs() <= 1e-6, "{}", run.benefit_per_home());
}

#[test]
fn pool_size_splits_the_cohort() {
    let f = fixture();
    let assignment = f.screen.retained.capped(2);
    let config = ExperimentConfig {
        pool_size: Some(2),
        ..f.config.clone()
    };
    let zero = run_pooled(&f.ds, &f.forecasts, &f.reserves, &assignment, Sharing::ZeroBounded, &config).unwrap();
    assert_eq!(zero.len(), assignment.len().div_ceil(2));
    let alone = run_standalone(&f.ds, &f.forecasts, &f.reserves, &assignment, &config).unwrap();
    let pooled_report = firm_margin(&zero, &config.rollout.tariff);
    let alone_report = firm_margin(&alone, &config.rollout.tariff);
    assert_eq!(pooled_report, alone_report);
}

fn fake_record(n_batteries: u8, margins: &[f64]) -> TrajectoryRecord {
    let spec = BatterySpec {
        n_batteries,
        ..BatterySpec::new(10.0, 5.0, 5.0)
    };
    TrajectoryRecord {
        home_ids: vec![format!("h{n_batteries}")],
        homes: vec![0],
        specs: vec![spec],
        e_init: vec![0.0],
        steps: margins.iter().map(|&m| vec![Step { margin: m, ..Step::default() }]).collect(),
        feasible: vec![true; margins.len()],
        plan_objective: vec![None; margins.len()],
        prices: vec![0.0; margins.len()],
    }
}

#[test]
fn firm_margin_adds_prorated_subscription() {
    let recs = [fake_record(1, &[0.5, -0.25, 1.0]), fake_record(2, &[2.0])];
    let report = firm_margin(&recs, &Tariff::default());
    assert_eq!(report.homes[0].subscription_usd, 4.75);
    assert_eq!(report.homes[1].subscription_usd, 7.25);
    assert_eq!(report.homes[0].firm_usd, 1.25 + 4.75);
    assert_eq!(report.homes[1].firm_usd, 2.0 + 7.25);
    assert_eq!(report.total_firm_usd, 15.25);
    assert_eq!(report.firm_per_home(), 7.625);
}

#[test]
fn tier_files_are_validated() {
    let ds = &fixture().ds;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiers.csv");
    let id = &ds.homes[2].home_id;
    std::fs::write(&path, format!("home_id,tier_hours\n{id},6\n")).unwrap();
    let a = read_tiers_csv(&path, ds).unwrap();
    assert_eq!((a.homes.clone(), a.tiers.clone()), (vec![2], vec![6]));
    for bad in [format!("{id},5\n"), "nobody,2\n".to_string(), format!("{id},2\n{id},4\n")] {
        std::fs::write(&path, format!("home_id,tier_hours\n{bad}")).unwrap();
        assert!(read_tiers_csv(&path, ds).is_err(), "{bad}");
    }
}

#[test]
fn capping_rewrites_provenance() {
    let a = TierAssignment {
        homes: vec![0, 1],
        home_ids: vec!["a".into(), "b".into()],
        tiers: vec![4, 24],
        provenance: vec![Provenance::MaxFeasible; 2],
    };
    let c = a.capped(6);
    assert_eq!(c.tiers, vec![4, 6]);
    assert_eq!(c.provenance, vec![Provenance::MaxFeasible, Provenance::Capped(6)]);
    assert!(cap_spectrum(&fixture().ds, &fixture().forecasts, &fixture().reserves, &a, &[5], &fixture().config).is_err());
}
