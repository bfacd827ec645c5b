//! Simulate a sample from a JSON scenario and write it as long-format CSV.
//!
//! ```text
//! cargo run --example simulate_scenario -- examples/data/recovery_semi_markov.json out.csv
//! ```

use std::collections::BTreeMap;

use condaj::data::{validate, write_sample, EndReason};
use condaj::simulate::{simulate_sample, Scenario};

fn main() -> condaj::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = match args.next() {
        Some(path) => Scenario::load(path)?,
        None => Scenario::illness_death(500, 1),
    };
    let (intensity, censoring) = scenario.build()?;
    let sample = simulate_sample(&intensity, &censoring, scenario.n, scenario.seed)?;
    assert!(validate(&sample).is_empty());

    let absorbed = sample.paths().iter().filter(|p| p.end_reason == EndReason::Absorbed).count();
    let mut last_state: BTreeMap<i64, usize> = BTreeMap::new();
    for p in sample.paths() {
        *last_state.entry(p.final_state()).or_default() += 1;
    }
    println!("{} subjects, {absorbed} absorbed, {} censored", sample.len(), sample.len() - absorbed);
    println!("last observed state: {last_state:?}");
    let jumps: usize = sample.paths().iter().map(|p| p.jumps.len()).sum();
    println!("{jumps} jumps in total");

    match args.next() {
        Some(out) => {
            write_sample(&sample, std::fs::File::create(&out)?)?;
            println!("wrote {out}");
        }
        None => {
            let mut buf = Vec::new();
            write_sample(&sample, &mut buf)?;
            let text = String::from_utf8_lossy(&buf);
            for line in text.lines().take(8) {
                println!("{line}");
            }
        }
    }
    Ok(())
}
