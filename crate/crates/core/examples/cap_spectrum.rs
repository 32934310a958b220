// Screen a cohort for backup tiers, then sweep the backup cap.

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, PriceProfile, SynthConfig};
use fleetpool::domain::{TimeGrid, BACKUP_MENU};
use fleetpool::experiments::{cap_spectrum, screen_cohort, ExperimentConfig};
use fleetpool::forecast::{point_forecasts, ReserveParams, ReserveTable};
use fleetpool::mpc::RolloutConfig;

pub fn run() -> fleetpool::Result<()> {
    let start = NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let config = SynthConfig {
        n_homes: 4,
        seed: 3,
        price_profile: PriceProfile::Spiky,
        ..SynthConfig::default()
    };
    let fleet = generate_fleet(&config, TimeGrid::week(start)?)?;
    let forecasts = point_forecasts(&fleet, 15)?;
    let reserves = ReserveTable::build(&fleet, &BACKUP_MENU, &ReserveParams::default())?;
    let config = ExperimentConfig {
        rollout: RolloutConfig {
            horizon: 6,
            ..RolloutConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let screen = screen_cohort(&fleet, &forecasts, &reserves, &config)?;
    for row in &screen.rows {
        match row.t_maxfeas {
            Some(t) => println!("{}: longest feasible tier {t} h", row.home_id),
            None => println!("{}: dropped ({})", row.home_id, row.reason),
        }
    }
    if screen.retained.is_empty() {
        println!("no home holds even the shortest tier");
        return Ok(());
    }

    let spectrum = cap_spectrum(&fleet, &forecasts, &reserves, &screen.retained, &[2, 8, 24], &config)?;
    println!("cap  at cap  standalone/home  benefit/home");
    for row in &spectrum.rows {
        println!(
            "{:>3}h {:>7} {:>12.2} USD {:>9.3} USD ({:.2}%)",
            row.cap_hours, row.homes_at_cap, row.standalone_firm_per_home, row.pooling_benefit_per_home, row.benefit_pct
        );
    }
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
