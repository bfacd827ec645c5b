//! A covariate with declared atoms: at an atom the kernel becomes an exact
//! match, so conditioning on it is the same as fitting the subsample.
//! Here the second covariate is "treatment arm" (0 or 1) and the first is
//! continuous.

use condaj::estimators::{aalen_johansen, nelson_aalen_weighted};
use condaj::prelude::*;

fn main() -> condaj::Result<()> {
    let scenario = Scenario::from_json(
        r#"{
          "kind": "markov",
          "states": [1, 2, 3], "absorbing": [3], "initial_state": 1,
          "transitions": [
            { "from": 1, "to": 2, "rate": "0.5 * (1 + x1) * (1 - 0.5 * x2)" },
            { "from": 1, "to": 3, "rate": "0.2" },
            { "from": 2, "to": 3, "rate": "0.6 * (1 + x1)" }
          ],
          "covariates": [
            { "law": "uniform", "low": 0, "high": 1 },
            { "law": "discrete", "values": [0, 1], "probs": [0.5, 0.5] }
          ],
          "censoring": { "law": "exponential", "rate": "0.3" },
          "n": 3000, "seed": 11
        }"#,
    )?;
    let (intensity, censoring) = scenario.build()?;
    let sample = simulate_sample(&intensity, &censoring, scenario.n, scenario.seed)?;
    let kernel = KernelSpec::uniform_kind(KernelKind::Epanechnikov, 2).with_atoms(1, vec![0.0, 1.0]);
    let config = FitConfig::new(kernel);

    for arm in [0.0, 1.0] {
        let f = fit(&sample, &[0.5, arm], &config)?;
        let truth = markov_occupation_oracle(&intensity, &[0.5, arm], &[2.0])?;
        println!(
            "arm {arm}: a = {:.3} (one continuous coordinate), p(2 | x1=0.5) = {:.4?}, true {:.4?}",
            f.bandwidth,
            f.occupation.at(2.0),
            truth.at_index(0)
        );
    }

    // purely atomic conditioning: subsample fit
    let kernel = KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1).with_atoms(0, vec![0.0, 1.0]);
    let arm_only = Sample::new(
        sample.state_space().clone(),
        sample
            .paths()
            .iter()
            .map(|p| ObservedPath {
                covariates: vec![p.covariates[1]],
                ..p.clone()
            })
            .collect(),
    )?;
    let f = fit(&arm_only, &[1.0], &FitConfig::new(kernel))?;
    let sub = arm_only.filter(|p| p.covariates[0] == 1.0)?;
    let h = nelson_aalen_weighted(&sub, &WeightVector::uniform(sub.len()), f.hazard.epsilon)?;
    let plain = aalen_johansen(&h, &h.initial);
    println!(
        "arm 1 only: kernel fit {:.6?} vs subsample fit {:.6?} at t = 2 ({} subjects)",
        f.occupation.at(2.0),
        plain.at(2.0),
        sub.len()
    );
    Ok(())
}
