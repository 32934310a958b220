// Receding-horizon control of one home over a synthetic week.

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, PriceProfile, SynthConfig};
use fleetpool::domain::TimeGrid;
use fleetpool::experiments::firm_margin;
use fleetpool::forecast::{point_forecasts, reserve_profile, ReserveParams};
use fleetpool::mpc::{rollout, Mode, RolloutConfig};

pub fn run() -> fleetpool::Result<()> {
    let start = NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let config = SynthConfig {
        n_homes: 1,
        seed: 8,
        price_profile: PriceProfile::Spiky,
        ..SynthConfig::default()
    };
    let fleet = generate_fleet(&config, TimeGrid::week(start)?)?;
    let forecasts = point_forecasts(&fleet, 15)?;
    let reserve = reserve_profile(&fleet, 0, 2, &ReserveParams::default())?;
    let config = RolloutConfig {
        horizon: 16,
        ..RolloutConfig::default()
    };
    let record = rollout(&fleet, &forecasts, &[reserve], &config, &Mode::Standalone(0))?;

    let report = firm_margin(std::slice::from_ref(&record), &config.tariff);
    let home = &report.homes[0];
    let charged: f64 = record.steps.iter().map(|s| s[0].u_ch * 0.25).sum();
    let discharged: f64 = record.steps.iter().map(|s| s[0].u_dis * 0.25).sum();
    println!("{}: {} epochs, all feasible: {}", home.home_id, record.n_epochs(), record.all_feasible());
    println!("charged {charged:.1} kWh, discharged {discharged:.1} kWh");
    println!(
        "dispatch {:.2} USD + subscription {:.2} USD = firm {:.2} USD",
        home.dispatch_usd, home.subscription_usd, home.firm_usd
    );
    println!("largest invariant residual {:?}", record.residuals());
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
