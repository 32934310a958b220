// Build and solve LPs directly, then a one-home dispatch horizon.

use fleetpool::dispatch::{build_standalone, decode, HomeHorizon, HorizonInputs};
use fleetpool::domain::{BatterySpec, Tariff};
use fleetpool::lp::{solve_with, Backend, LpProblem, Relation, SolverOptions};

pub fn run() -> fleetpool::Result<()> {
    // max 3x + 2y  s.t.  x + y <= 4,  x + 3y <= 6,  0 <= x <= 3
    let mut p = LpProblem::new();
    let x = p.add_var("x", 0.0, 3.0, 3.0);
    let y = p.add_var("y", 0.0, f64::INFINITY, 2.0);
    p.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
    p.add_row(vec![(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
    let options = SolverOptions::default();
    for backend in [Backend::Reference, Backend::Sparse] {
        let s = solve_with(&p, backend, &options)?;
        println!("{backend:>9}: {:?} objective {} at x = {:?}", s.status, s.objective_value, s.x);
    }

    // Four quarter-hours: cheap, cheap, expensive, expensive.
    let inputs = HorizonInputs {
        delta: 0.25,
        lambda_hat: vec![0.02, 0.02, 0.30, 0.30],
        salvage: 0.07,
        tariff: Tariff::default(),
        homes: vec![HomeHorizon {
            spec: BatterySpec::new(4.0, 4.0, 4.0),
            e_init: 1.0,
            l_hat: vec![1.0; 4],
            s_hat: vec![0.0; 4],
            reserves: vec![0.5; 4],
        }],
    };
    let lp = build_standalone(&inputs)?;
    let solution = solve_with(&lp.problem, Backend::Reference, &options)?;
    let plan = decode(&lp, &inputs, &solution)?;
    let home = &plan.homes[0];
    println!("dispatch LP: {} variables, {} rows", lp.problem.n_vars(), lp.problem.n_rows());
    for h in 0..4 {
        println!(
            "  step {h}: import {:.2} kW, charge {:.2} kW, discharge {:.2} kW, stored {:.2} kWh",
            home.m_imp[h], home.u_ch[h], home.u_dis[h], home.e[h + 1]
        );
    }
    println!("planned margin {:.4} USD", plan.objective_value);
    Ok(())
}

fn main() -> fleetpool::Result<()> {
    run()
}
