// Generate a synthetic week, write it as CSV, and load it back.

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, load_fleet_dir, write_fleet, PriceProfile, SynthConfig};
use fleetpool::domain::TimeGrid;

pub fn run() -> fleetpool::Result<()> {
    let start = NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let config = SynthConfig {
        n_homes: 4,
        seed: 11,
        price_profile: PriceProfile::Spiky,
        ..SynthConfig::default()
    };
    let fleet = generate_fleet(&config, TimeGrid::week(start)?)?;

    let dir = std::env::temp_dir().join("fleetpool-synthetic-fleet");
    write_fleet(&fleet, &dir)?;
    let loaded = load_fleet_dir(&dir)?;
    assert_eq!(loaded.homes, fleet.homes);
    println!("wrote and reloaded {} homes from {}", loaded.homes.len(), dir.display());

    for home in &loaded.homes {
        let series = loaded.interval_series(loaded.home_index(&home.home_id).unwrap());
        let energy = |v: &[f64]| v.iter().sum::<f64>() * 0.25;
        println!(
            "{}: load {:6.1} kWh, solar {:6.1} kWh, battery {:.1} kWh / {:.1} kW",
            home.home_id,
            energy(&series.load),
            energy(&series.solar),
            home.battery.e_max,
            home.battery.p_dis_max
        );
    }
    let prices = loaded.prices.lambda_rt();
    let peak = prices.iter().copied().fold(f64::MIN, f64::max);
    println!("{} price intervals, peak {peak:.3} USD/kWh", prices.len());
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
