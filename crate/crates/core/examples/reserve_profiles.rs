// Reserve floors by time of day for each backup tier of one home.

use chrono::NaiveDate;
use fleetpool::data_io::{generate_fleet, SynthConfig};
use fleetpool::domain::{TimeGrid, BACKUP_MENU};
use fleetpool::forecast::{ReserveParams, ReserveTable};

pub fn run() -> fleetpool::Result<()> {
    let start = NaiveDate::from_ymd_opt(2025, 8, 4).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let config = SynthConfig {
        n_homes: 1,
        seed: 5,
        ..SynthConfig::default()
    };
    let fleet = generate_fleet(&config, TimeGrid::week(start)?)?;
    let table = ReserveTable::build(&fleet, &BACKUP_MENU, &ReserveParams::default())?;
    let home = &fleet.homes[0];
    println!("{} with {:.1} kWh of storage", home.home_id, home.battery.e_max);

    print!("hour ");
    for t in BACKUP_MENU {
        print!("{:>8}", format!("{t}h"));
    }
    println!();
    for hour in (0..24).step_by(3) {
        print!("{hour:>4} ");
        for t in BACKUP_MENU {
            print!("{:>8.2}", table.get(0, t).unwrap().r[4 * hour]);
        }
        println!();
    }
    for t in BACKUP_MENU {
        let peak = table.get(0, t).unwrap().max();
        let fits = if peak <= home.battery.e_max { "fits" } else { "exceeds capacity" };
        println!("{t:>2} h tier: peak floor {peak:6.2} kWh, {fits}");
    }
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
