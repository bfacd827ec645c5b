//! Plug-in covariance surfaces and pointwise 95% intervals for the
//! conditional occupation probabilities.

use condaj::prelude::*;

fn main() -> condaj::Result<()> {
    let sample = simulate_sample(&default_intensity(), &default_censoring(), 1500, 2)?;
    let kernel = KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1);
    let f = fit(&sample, &[0.5], &FitConfig::new(kernel.clone()))?;
    let grid = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0];
    let report = covariance_surfaces(&sample, &f, &kernel, Some(&grid), 0)?;
    let truth = markov_occupation_oracle(&default_intensity(), &[0.5], &grid)?;

    // Σ is the covariance of √(n a^d) (p̂ - p)
    let scale = (sample.len() as f64 * f.bandwidth).sqrt();
    println!("phi = {:.4}, a = {:.4}", report.phi, f.bandwidth);
    for (j, surface) in &report.occupation {
        println!("state {}", sample.state_space().label(*j));
        for (i, &t) in grid.iter().enumerate() {
            let p = f.occupation.occupation[*j].at(t);
            let half = 1.96 * surface.values[(i, i)].sqrt() / scale;
            println!(
                "  t = {t:<4}  {p:.4} [{:.4}, {:.4}]  true {:.4}",
                p - half,
                p + half,
                truth.at_index(i)[*j]
            );
        }
    }
    let ((j, k), s) = &report.hazard[0];
    println!("Sigma for Lambda_{}{} on the grid:", j + 1, k + 1);
    for r in 0..grid.len() {
        let row: Vec<String> = (0..grid.len()).map(|c| format!("{:8.4}", s.values[(r, c)])).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
