// Standalone versus pooled control of a small cohort.

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, PriceProfile, SynthConfig};
use fleetpool::domain::TimeGrid;
use fleetpool::experiments::{run_paired, ExperimentConfig, Provenance, TierAssignment};
use fleetpool::forecast::{point_forecasts, ReserveParams, ReserveTable};
use fleetpool::mpc::RolloutConfig;

pub fn run() -> fleetpool::Result<()> {
    let start = NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let config = SynthConfig {
        n_homes: 3,
        seed: 21,
        price_profile: PriceProfile::Spiky,
        ..SynthConfig::default()
    };
    let fleet = generate_fleet(&config, TimeGrid::week(start)?)?;
    let forecasts = point_forecasts(&fleet, 15)?;
    let reserves = ReserveTable::build(&fleet, &[2], &ReserveParams::default())?;
    let assignment = TierAssignment {
        homes: vec![0, 1, 2],
        home_ids: fleet.homes.iter().map(|h| h.home_id.clone()).collect(),
        tiers: vec![2; 3],
        provenance: vec![Provenance::MaxFeasible; 3],
    };
    let config = ExperimentConfig {
        rollout: RolloutConfig {
            horizon: 8,
            ..RolloutConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let run = run_paired(&fleet, &forecasts, &reserves, &assignment, &config)?;

    for (alone, pooled) in run.standalone_report.homes.iter().zip(&run.pooled_report.homes) {
        println!("{}: standalone {:7.2} USD, pooled {:7.2} USD", alone.home_id, alone.firm_usd, pooled.firm_usd);
    }
    let shared: f64 = run.pooled[0].steps.iter().flat_map(|s| s.iter().map(|x| (x.routing.y_s + x.routing.y_b) * 0.25)).sum();
    println!("energy shared within the pool: {shared:.1} kWh");
    println!("pooling benefit {:.3} USD per home ({:.2}%)", run.benefit_per_home(), run.benefit_pct());
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
