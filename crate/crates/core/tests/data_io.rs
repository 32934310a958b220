use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use fleetpool::data_io::{
    generate_fleet, load_fleet, load_fleet_dir, load_fleet_partial, write_fleet, PriceProfile, SynthConfig, PRICES_FILE,
    SPECS_FILE, TELEMETRY_FILE,
};
use fleetpool::domain::{net_load, TimeGrid};
use fleetpool::Error;

fn week() -> TimeGrid {
    TimeGrid::week(NaiveDate::from_ymd_opt(2025, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()).unwrap()
}

fn synth(n_homes: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_homes,
        seed,
        ..SynthConfig::default()
    }
}

fn paths(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    (dir.join(TELEMETRY_FILE), dir.join(PRICES_FILE), dir.join(SPECS_FILE))
}

#[test]
fn one_home_week_loads_with_672_intervals() {
    let ds = generate_fleet(&synth(1, 3), week()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let loaded = load_fleet_dir(dir.path()).unwrap();
    assert_eq!(loaded.grid.n_intervals(), 672);
    assert_eq!(loaded.homes.len(), 1);
    assert_eq!(loaded.homes[0].load_kw.len(), 10_080);
}

#[test]
fn write_then_load_is_exact() {
    let ds = generate_fleet(
        &SynthConfig {
            price_profile: PriceProfile::Spiky,
            ..synth(3, 11)
        },
        week(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let loaded = load_fleet_dir(dir.path()).unwrap();
    assert_eq!(loaded, ds);
}

#[test]
fn missing_minute_is_a_completeness_error() {
    let ds = generate_fleet(&synth(2, 5), week()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let (telemetry, prices, specs) = paths(dir.path());

    // drop home002's last minute: 10,079 rows remain
    let text = fs::read_to_string(&telemetry).unwrap();
    let mut kept: Vec<&str> = text.lines().collect();
    let last = kept.iter().rposition(|l| l.starts_with("home002")).unwrap();
    kept.remove(last);
    fs::write(&telemetry, kept.join("\n") + "\n").unwrap();

    match load_fleet(&telemetry, &prices, &specs) {
        Err(Error::Incomplete { home_id, reason }) => {
            assert_eq!(home_id, "home002");
            assert!(reason.contains("missing 1 of 10080"), "{reason}");
        }
        other => panic!("expected completeness error, got {other:?}"),
    }

    let (partial, rejected) = load_fleet_partial(&telemetry, &prices, &specs).unwrap();
    assert_eq!(partial.homes.len(), 1);
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].home_id, "home002");
}

#[test]
fn negative_solar_is_rejected() {
    let ds = generate_fleet(&synth(1, 5), week()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let (telemetry, prices, specs) = paths(dir.path());
    let text = fs::read_to_string(&telemetry).unwrap();
    let text = text.replacen("home001,2025-08-01T00:03,", "home001,2025-08-01T00:03,0.5,-0.1\nIGNORED,", 1);
    let fixed: Vec<&str> = text.lines().filter(|l| !l.starts_with("IGNORED")).collect();
    fs::write(&telemetry, fixed.join("\n")).unwrap();
    assert!(matches!(load_fleet(&telemetry, &prices, &specs), Err(Error::Validation(_))));
}

#[test]
fn malformed_row_reports_line_number() {
    let ds = generate_fleet(&synth(1, 5), week()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let (telemetry, prices, specs) = paths(dir.path());
    let text = fs::read_to_string(&telemetry).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = "home001,2025-08-01T00:03,abc,0".into();
    fs::write(&telemetry, lines.join("\n")).unwrap();
    match load_fleet(&telemetry, &prices, &specs) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 5);
            assert!(message.contains("load_kw"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn price_gap_is_a_coverage_error() {
    let ds = generate_fleet(&synth(1, 5), week()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_fleet(&ds, dir.path()).unwrap();
    let (telemetry, prices, specs) = paths(dir.path());
    let text = fs::read_to_string(&prices).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 100).map(|(_, l)| l).collect();
    fs::write(&prices, kept.join("\n")).unwrap();
    assert!(matches!(load_fleet(&telemetry, &prices, &specs), Err(Error::Coverage(_))));
}

#[test]
fn prices_are_converted_from_mwh() {
    let ds = generate_fleet(&synth(1, 9), week()).unwrap();
    for (kwh, mwh) in ds.prices.lambda_rt().iter().zip(ds.prices.usd_per_mwh()) {
        assert_eq!(*kwh, mwh / 1000.0);
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_fleet(&synth(6, 42), week()).unwrap();
    let b = generate_fleet(&synth(6, 42), week()).unwrap();
    assert_eq!(a, b);
    let c = generate_fleet(&synth(6, 43), week()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_solar_fraction_means_no_solar() {
    let ds = generate_fleet(
        &SynthConfig {
            solar_fraction: 0.0,
            archetype_weights: [0.25, 0.25, 0.25, 0.25],
            ..synth(12, 1)
        },
        week(),
    )
    .unwrap();
    assert!(ds.homes.iter().all(|h| h.solar_kw.iter().all(|s| *s == 0.0)));
}

#[test]
fn solar_heavy_homes_export_at_midday() {
    let ds = generate_fleet(
        &SynthConfig {
            archetype_weights: [0.0, 1.0, 0.0, 0.0],
            ..synth(15, 2)
        },
        week(),
    )
    .unwrap();
    for h in &ds.homes {
        let net = net_load(h, &ds.grid).unwrap();
        assert!(net.iter().any(|v| *v < 0.0), "{} never has negative net load", h.home_id);
    }
}

#[test]
fn generated_fleets_validate_and_respect_spec_ranges() {
    let ds = generate_fleet(&synth(30, 8), week()).unwrap();
    ds.validate().unwrap();
    for h in &ds.homes {
        let b = h.battery;
        assert!((10.0..=27.0).contains(&b.e_max));
        assert!((3.3..=9.6).contains(&b.p_ch_max) && b.p_ch_max == b.p_dis_max);
        assert!(h.load_kw.iter().chain(&h.solar_kw).all(|v| *v >= 0.0));
    }
}

#[test]
fn spiky_profile_has_scarcity_intervals() {
    let ds = generate_fleet(
        &SynthConfig {
            price_profile: PriceProfile::Spiky,
            ..synth(1, 4)
        },
        week(),
    )
    .unwrap();
    let spikes = ds.prices.lambda_rt().iter().filter(|p| **p >= 1.0).count();
    assert!((1..=6).contains(&spikes), "{spikes} spikes");
    assert!(ds.prices.lambda_rt().iter().all(|p| *p <= 5.0));
}

#[test]
fn generator_rejects_bad_configs() {
    assert!(matches!(generate_fleet(&synth(0, 1), week()), Err(Error::Config(_))));
    let day = TimeGrid::new(week().start(), 1440).unwrap();
    assert!(matches!(generate_fleet(&synth(1, 1), day), Err(Error::Config(_))));
}
