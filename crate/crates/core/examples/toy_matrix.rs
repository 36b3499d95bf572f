//! Build the toy city and run its scenario matrix, printing trip ratios.

use std::time::Instant;

use covsim::choice::Mode;
use covsim::scenario::run_matrix;
use covsim::toy::{build_toy, ToyOptions};

fn main() -> covsim::Result<()> {
    env_logger::init();
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let t0 = Instant::now();
    let toy = build_toy(&ToyOptions {
        iterations,
        ..ToyOptions::default()
    })?;
    for (k, p) in &toy.params {
        println!("{k}: {:?}", p.asc);
    }
    let assets = toy.assets()?;
    println!("built in {:.1}s", t0.elapsed().as_secs_f64());
    let out = run_matrix(&toy.matrix.scenarios, &assets, &toy.matrix.sim, toy.matrix.seed)?;
    println!("ran in {:.1}s", t0.elapsed().as_secs_f64());
    println!("{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>5}", "scenario", "trips", "car", "transit", "walk", "bike", "rh", "bs", "denied", "maxon");
    for (r, c) in out.reports.iter().zip(&out.comparisons) {
        let total: u64 = r.trips.values().sum();
        print!("{:<12} {:>7}", r.name, total);
        for m in Mode::ALL {
            print!(" {:>7.3}", c.ratio(m).unwrap_or(f64::NAN));
        }
        println!(" {:>6} {:>5}", r.denied_boardings, r.max_onboard);
    }
    for r in &out.reports {
        let s: Vec<String> = Mode::ALL.iter().map(|&m| format!("{:.3}", r.share(m))).collect();
        println!("{:<12} shares {}", r.name, s.join(" "));
    }
    Ok(())
}
