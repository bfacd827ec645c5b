//! Read a long-format CSV, validate it and fit at a few points.
//!
//! ```text
//! id,time,state,end,x1
//! 1,0,1,,0.42
//! 1,1.3,2,,
//! 1,2.7,2,1,
//! ```
//! The first row of a subject is at time 0 and carries the covariates; each
//! later row is a jump, except a final row flagged `end = 1` (censored).
//! A subject that ends in an absorbing state flags its last jump `end = 0`.

use condaj::data::validate;
use condaj::prelude::*;

const DATA: &str = "\
id,time,state,end,x1
a,0,1,,0.20
a,0.8,2,,
a,2.1,3,0,
b,0,1,,0.35
b,1.6,1,1,
c,0,1,,0.50
c,0.4,3,0,
d,0,1,,0.55
d,1.2,2,,
d,3.0,2,1,
e,0,1,,0.70
e,2.5,1,1,
f,0,1,,0.95
f,1.9,2,,
f,2.2,3,0,
";

fn main() -> condaj::Result<()> {
    let sample = match std::env::args().nth(1) {
        Some(path) => load_sample(path, &LoadOptions::default())?,
        None => read_sample(DATA.as_bytes(), &LoadOptions::default())?,
    };
    let problems = validate(&sample);
    println!(
        "{} subjects, states {:?}, absorbing {:?}, {} problems",
        sample.len(),
        sample.state_space().states(),
        sample.state_space().absorbing(),
        problems.len()
    );

    let mut config = FitConfig::new(KernelSpec::uniform_kind(KernelKind::Epanechnikov, sample.dim()));
    config.schedule = BandwidthSchedule::fixed(0.4)?;
    for x in [0.3, 0.6, 5.0] {
        match fit(&sample, &[x], &config) {
            Ok(f) => {
                println!("x = {x}: occupation at t = 2: {:.4?}", f.occupation.at(2.0));
                for (j, times) in f.hazard.floor_active.iter().enumerate() {
                    if !times.is_empty() {
                        println!("  floor active for state {} at {times:?}", sample.state_space().label(j));
                    }
                }
            }
            Err(e) => println!("x = {x}: {e}"),
        }
    }
    Ok(())
}
