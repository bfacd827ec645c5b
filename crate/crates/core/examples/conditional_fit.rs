//! Conditional Aalen-Johansen curves at several covariate values, compared
//! with the true occupation probabilities of the generating model.

use condaj::prelude::*;

fn main() -> condaj::Result<()> {
    let intensity = default_intensity();
    let sample = simulate_sample(&intensity, &default_censoring(), 2000, 7)?;
    let config = FitConfig::new(KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1));
    let times = [0.5, 1.0, 2.0, 3.0];

    for x in [0.1, 0.5, 0.9] {
        let f = fit(&sample, &[x], &config)?;
        let truth = markov_occupation_oracle(&intensity, &[x], &times)?;
        println!(
            "x = {x}  (a = {:.3}, {} subjects in window, horizon {:.2})",
            f.bandwidth,
            f.weights.support().count(),
            f.horizon()
        );
        println!("    t   p1_hat  p1      p2_hat  p2      p3_hat  p3");
        for (i, &t) in times.iter().enumerate() {
            let p = f.occupation.at(t);
            let q = truth.at_index(i);
            println!(
                "  {t:>4.1}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
                p[0], q[0], p[1], q[1], p[2], q[2]
            );
        }
        let lam = f.hazard.hazard.at(1.0);
        println!("  Lambda(1|x): 1->2 {:.4}, 1->3 {:.4}, 2->3 {:.4}\n", lam[(0, 1)], lam[(0, 2)], lam[(1, 2)]);
    }
    Ok(())
}
