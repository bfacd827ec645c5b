//! Two states, one absorbing: the conditional Aalen-Johansen estimator is
//! Beran's conditional Kaplan-Meier. Prints both side by side.

use condaj::prelude::*;
use condaj::simulate::{CensoringSpec, MarginalLaw, ProcessKind, RateFn, TransitionRate};

fn main() -> condaj::Result<()> {
    let intensity = IntensitySpec::new(
        ProcessKind::Markov,
        StateSpace::new(vec![0, 1], vec![1])?,
        0,
        vec![TransitionRate {
            from: 0,
            to: 1,
            rate: RateFn::parse("exp(1.5 * x - 0.5)")?,
        }],
        vec![MarginalLaw::Uniform { low: 0.0, high: 1.0 }],
    )?;
    let censoring = CensoringSpec::Uniform { low: 0.5, high: 3.0 };
    let sample = simulate_sample(&intensity, &censoring, 400, 3)?;

    let x = 0.3;
    let mut config = FitConfig::new(KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1));
    config.epsilon = 1e-12;
    let f = fit(&sample, &[x], &config)?;

    // weighted product-limit on (observed time, event) pairs
    let w = &f.weights.weights;
    let mut obs: Vec<(f64, bool, f64)> = sample
        .paths()
        .iter()
        .zip(w)
        .filter(|(_, &wl)| wl > 0.0)
        .map(|(p, &wl)| (p.end_time, p.end_reason == EndReason::Absorbed, wl))
        .collect();
    obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut at_risk: f64 = obs.iter().map(|o| o.2).sum();
    let mut s = 1.0;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    println!("      t   beran    aj");
    while i < obs.len() {
        let t = obs[i].0;
        let (mut d, mut leaving) = (0.0, 0.0);
        while i < obs.len() && obs[i].0 == t {
            if obs[i].1 {
                d += obs[i].2;
            }
            leaving += obs[i].2;
            i += 1;
        }
        if d > 0.0 {
            s *= 1.0 - d / at_risk;
        }
        at_risk -= leaving;
        let aj = f.occupation.occupation[0].at(t);
        worst = worst.max((aj - s).abs());
        if i % 40 == 0 {
            println!("  {t:>6.3}  {s:.5}  {aj:.5}");
        }
    }
    println!("max |beran - aj| = {worst:.2e}");
    Ok(())
}
