//! Built-in verification suite behind `condaj check`.
//!
//! Each criterion simulates or constructs its own data, compares the
//! estimators against an independent computation and reports one line.

use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cli::{cmd_fit, RunConfig};
use crate::covariance::{covariance_surfaces, hazard_variance_at, CovarianceSurface};
use crate::data::{write_sample, EndReason, Jump, ObservedPath, Sample, StateSpace};
use crate::error::{Error, Result};
use crate::estimators::{aalen_johansen, direct_exposure, fit, nelson_aalen_weighted, product_integral, FitConfig};
use crate::kernels::{nw_weights, KernelKind, KernelSpec, WeightVector};
use crate::simulate::oracle::brute_force_estimator;
use crate::simulate::{
    default_censoring, default_intensity, markov_occupation_oracle, simulate_sample, CensoringSpec, IntensitySpec,
    MarginalLaw, ProcessKind, RateFn, TransitionRate,
};
use crate::step::StepMatrix;

#[derive(Clone, Copy, Debug, Default)]
pub struct SuiteOptions {
    /// Fewer replicates for the two Monte Carlo criteria.
    pub quick: bool,
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<22} {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Outcome = Result<(bool, String)>;

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "conservation"),
    (2, "exposure identity"),
    (3, "beran reduction"),
    (4, "landmark reduction"),
    (5, "consistency"),
    (6, "product integral"),
    (7, "covariance scale"),
    (8, "surface symmetry/psd"),
    (9, "epsilon floor"),
    (10, "determinism"),
];

pub fn run_criterion(id: u8, options: &SuiteOptions) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .unwrap_or("unknown");
    let start = Instant::now();
    let outcome = match id {
        1 => conservation(),
        2 => exposure_identity(),
        3 => beran_reduction(),
        4 => landmark_reduction(),
        5 => consistency(options.quick),
        6 => product_integral_rate(),
        7 => covariance_scale(options.quick),
        8 => surfaces_symmetric_psd(),
        9 => epsilon_floor(),
        10 => determinism(),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    };
    let elapsed = start.elapsed();
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
        elapsed,
    }
}

pub fn run_suite(options: &SuiteOptions) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|&(id, _)| run_criterion(id, options)).collect()
}

fn epanechnikov(d: usize) -> KernelSpec {
    KernelSpec::uniform_kind(KernelKind::Epanechnikov, d)
}

fn default_sample(n: usize, seed: u64) -> Result<Sample> {
    simulate_sample(&default_intensity(), &default_censoring(), n, seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let sample = default_sample(500, 11)?;
    let config = FitConfig::new(epanechnikov(1));
    let mut worst: f64 = 0.0;
    for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let f = fit(&sample, &[x], &config)?;
        let total0: f64 = f.occupation.initial.iter().sum();
        for i in 0..f.occupation.times().len() {
            let total: f64 = f.occupation.row(i).iter().sum();
            worst = worst.max((total - total0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-12 && secs < 5.0,
        format!("max |sum p(t) - sum p(0)| = {worst:.2e} (tol 1e-12), {secs:.2} s (limit 5 s)"),
    ))
}

fn exposure_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = epanechnikov(1);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for s in 0..100u64 {
        let n = rng.random_range(3..25);
        let sample = default_sample(n, 1000 + s)?;
        let x = spec.eval_point(vec![rng.random::<f64>()])?;
        let mut w = nw_weights(&sample, &x, &spec, 0.4);
        if w.degenerate {
            degenerate += 1;
            w = WeightVector::uniform(n);
        }
        let h = nelson_aalen_weighted(&sample, &w, 1e-4)?;
        let direct = direct_exposure(&sample, &w, h.times());
        for j in 0..h.initial.len() {
            worst = worst.max((h.exposure[j].initial_value - direct[j].initial_value).abs());
            worst = worst.max(max_abs_diff(&h.exposure[j].values, &direct[j].values));
        }
    }
    Ok((
        worst <= 1e-12,
        format!("100 samples ({degenerate} with uniform weights), max deviation {worst:.2e} (tol 1e-12)"),
    ))
}

fn two_state_sample(n: usize, seed: u64) -> Result<Sample> {
    let intensity = IntensitySpec::new(
        ProcessKind::Markov,
        StateSpace::new(vec![1, 2], vec![2])?,
        1,
        vec![TransitionRate {
            from: 1,
            to: 2,
            rate: RateFn::parse("0.8 * (1 + x)")?,
        }],
        vec![MarginalLaw::Uniform { low: 0.0, high: 1.0 }],
    )?;
    simulate_sample(&intensity, &CensoringSpec::Exponential(RateFn::Constant(0.4)), n, seed)
}

/// Weighted product-limit survival at every distinct observed time.
fn beran_product_limit(sample: &Sample, x: f64, a: f64) -> (Vec<f64>, Vec<f64>) {
    let raw: Vec<f64> = sample
        .paths()
        .iter()
        .map(|p| {
            let u = (x - p.covariates[0]) / a;
            if u.abs() <= 1.0 {
                0.75 * (1.0 - u * u) / a
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let obs: Vec<(f64, bool, f64)> = sample
        .paths()
        .iter()
        .zip(&raw)
        .filter(|(_, r)| **r > 0.0)
        .map(|(p, r)| (p.end_time, p.end_reason == EndReason::Absorbed, r / total))
        .collect();
    let mut times: Vec<f64> = obs.iter().map(|o| o.0).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut s = 1.0;
    let mut surv = Vec::with_capacity(times.len());
    for &t in &times {
        let at_risk: f64 = obs.iter().filter(|o| o.0 >= t).map(|o| o.2).sum();
        let events: f64 = obs.iter().filter(|o| o.0 == t && o.1).map(|o| o.2).sum();
        if events > 0.0 {
            s *= 1.0 - events / at_risk;
        }
        surv.push(s);
    }
    (times, surv)
}

fn beran_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for (seed, x) in [(3u64, 0.5), (4, 0.2), (5, 0.85)] {
        let sample = two_state_sample(300, seed)?;
        let mut config = FitConfig::new(epanechnikov(1));
        config.epsilon = 1e-12;
        let f = fit(&sample, &[x], &config)?;
        let (times, surv) = beran_product_limit(&sample, x, f.bandwidth);
        for (t, s) in times.iter().zip(&surv) {
            worst = worst.max((f.occupation.occupation[0].at(*t) - s).abs());
            worst = worst.max((f.occupation.occupation[1].at(*t) - (1.0 - s)).abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |p_1 - product limit| = {worst:.2e} over 3 samples (tol 1e-12)"),
    ))
}

fn landmark_reduction() -> Outcome {
    let rate = |base: f64| RateFn::parse(&format!("{base} * (1 + x)"));
    let intensity = IntensitySpec::new(
        ProcessKind::Markov,
        StateSpace::new(vec![1, 2, 3], vec![3])?,
        1,
        vec![
            TransitionRate { from: 1, to: 2, rate: rate(0.5)? },
            TransitionRate { from: 1, to: 3, rate: rate(0.2)? },
            TransitionRate { from: 2, to: 3, rate: rate(0.6)? },
        ],
        vec![MarginalLaw::Discrete {
            values: vec![0.0, 1.0, 2.0],
            probs: vec![0.3, 0.4, 0.3],
        }],
    )?;
    let sample = simulate_sample(&intensity, &default_censoring(), 400, 21)?;
    let kernel = epanechnikov(1).with_atoms(0, vec![0.0, 1.0, 2.0]);
    let config = FitConfig::new(kernel);
    let mut worst: f64 = 0.0;
    let mut grids_match = true;
    for x in [0.0, 1.0, 2.0] {
        let f = fit(&sample, &[x], &config)?;
        let sub = sample.filter(|p| p.covariates[0] == x)?;
        let h = nelson_aalen_weighted(&sub, &WeightVector::uniform(sub.len()), config.epsilon)?;
        let occ = aalen_johansen(&h, &h.initial);
        grids_match &= f.hazard.times() == h.times();
        worst = worst.max(max_abs_diff(&f.occupation.initial, &occ.initial));
        for j in 0..3 {
            for &t in h.times() {
                worst = worst.max((f.occupation.occupation[j].at(t) - occ.occupation[j].at(t)).abs());
            }
        }
    }
    Ok((
        grids_match && worst <= 1e-12,
        format!("atoms 0/1/2 vs subsample fits: max deviation {worst:.2e} (tol 1e-12), grids equal: {grids_match}"),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sup over `[0, theta]` of `|p̂ - p|`, taken at the event times (both
/// sides of each jump) and at `theta`.
fn sup_error(sample: &Sample, x: f64, theta: f64) -> Result<f64> {
    let f = fit(sample, &[x], &FitConfig::new(epanechnikov(1)))?;
    let times: Vec<f64> = f.occupation.times().iter().copied().take_while(|&t| t <= theta).collect();
    let mut grid = vec![0.0];
    grid.extend(&times);
    grid.push(theta);
    let truth = markov_occupation_oracle(&default_intensity(), &[x], &grid)?;
    let mut worst = max_abs_diff(&f.occupation.initial, truth.at_index(0));
    for i in 0..times.len() {
        let p = truth.at_index(i + 1);
        worst = worst.max(max_abs_diff(&f.occupation.row_before(i), p));
        worst = worst.max(max_abs_diff(&f.occupation.row(i), p));
    }
    worst = worst.max(max_abs_diff(&f.occupation.at(theta), truth.at_index(grid.len() - 1)));
    Ok(worst)
}

fn consistency(quick: bool) -> Outcome {
    let start = Instant::now();
    let seeds = if quick { 5 } else { 20 };
    let mut medians = Vec::new();
    for n in [250usize, 1000, 4000] {
        let errs = (0..seeds)
            .map(|s| sup_error(&default_sample(n, 500 + s)?, 0.5, 2.0))
            .collect::<Result<Vec<_>>>()?;
        medians.push(median(errs));
    }
    let secs = start.elapsed().as_secs_f64();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    Ok((
        decreasing && medians[2] < 0.05 && secs < 180.0,
        format!(
            "{seeds} seeds, median sup error n=250/1000/4000: {:.4}/{:.4}/{:.4} (decreasing, < 0.05 at 4000), {secs:.1} s (limit 180 s)",
            medians[0], medians[1], medians[2]
        ),
    ))
}

fn product_integral_rate() -> Outcome {
    let q = default_intensity().generator(0.0, &[0.5]);
    let exact = q.clone().exp();
    let err = |h: f64| {
        let steps = (1.0 / h).round() as usize;
        let times: Vec<f64> = (1..=steps).map(|i| i as f64 * h).collect();
        let incs = vec![&q * h; steps];
        let pi = product_integral(&StepMatrix::from_increments(times, incs, DMatrix::zeros(3, 3)), 0.0, 1.0);
        (pi - &exact).amax()
    };
    let (e2, e3) = (err(1e-2), err(1e-3));
    let ratio = e2 / e3;
    Ok((
        e2 < 5e-2 && e3 < 5e-3 && (8.0..=12.5).contains(&ratio),
        format!("sup error h=1e-2: {e2:.3e} (< 5e-2), h=1e-3: {e3:.3e} (< 5e-3), ratio {ratio:.2} (first order: 8..12.5)"),
    ))
}

fn covariance_scale(quick: bool) -> Outcome {
    let start = Instant::now();
    let reps = if quick { 40 } else { 200 };
    let n = 1000;
    let kernel = epanechnikov(1);
    let config = FitConfig::new(kernel.clone());
    let mut estimates = Vec::with_capacity(reps);
    let mut sigmas = Vec::with_capacity(reps);
    let mut a = 0.0;
    for r in 0..reps {
        let sample = default_sample(n, 7000 + r as u64)?;
        let f = fit(&sample, &[0.5], &config)?;
        a = f.bandwidth;
        estimates.push(f.hazard.hazard.at(1.0)[(0, 1)]);
        sigmas.push(hazard_variance_at(&sample, &f, &kernel, (0, 1), 1.0)?);
    }
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let scaled = n as f64 * a * var;
    let sigma = median(sigmas);
    let ratio = scaled / sigma;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        (0.5..=2.0).contains(&ratio) && secs < 300.0,
        format!(
            "{reps} replicates, n a var = {scaled:.4}, median Sigma(1,1) = {sigma:.4}, ratio {ratio:.3} (0.5..2), {secs:.1} s (limit 300 s)"
        ),
    ))
}

fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn surface_defects(surface: &CovarianceSurface, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let v = &surface.values;
    let asym = (v - v.transpose()).amax();
    let size = v.nrows();
    let mut min_eig = min_eigenvalue(v.clone());
    for _ in 0..25 {
        let k = rng.random_range(1..=size);
        let mut idx = sample_indices(rng, size, k).into_vec();
        idx.sort_unstable();
        let sub = DMatrix::from_fn(k, k, |r, c| v[(idx[r], idx[c])]);
        min_eig = min_eig.min(min_eigenvalue(sub));
    }
    (asym, min_eig)
}

fn surfaces_symmetric_psd() -> Outcome {
    let kernel = epanechnikov(1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut asym: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut count = 0;
    for (seed, x) in [(31u64, 0.5), (32, 0.15)] {
        let sample = default_sample(400, seed)?;
        let f = fit(&sample, &[x], &FitConfig::new(kernel.clone()))?;
        let report = covariance_surfaces(&sample, &f, &kernel, None, 40)?;
        let surfaces = report
            .hazard
            .iter()
            .map(|(_, s)| s)
            .chain(report.occupation.iter().map(|(_, s)| s));
        for s in surfaces {
            let (a, e) = surface_defects(s, &mut rng);
            asym = asym.max(a);
            min_eig = min_eig.min(e);
            count += 1;
        }
    }
    Ok((
        asym <= 1e-12 && min_eig >= -1e-10,
        format!("{count} surfaces, max asymmetry {asym:.2e} (tol 1e-12), min eigenvalue {min_eig:.2e} (>= -1e-10)"),
    ))
}

/// One low-weight subject is left alone in state 1 and then jumps, so its
/// exposure sits below ε at a jump time.
fn floor_sample() -> Result<Sample> {
    let path = |i: usize, x: f64, jumps: Vec<(f64, i64)>, end: f64, reason: EndReason| ObservedPath {
        id: format!("f{i}"),
        covariates: vec![x],
        initial_state: 1,
        jumps: jumps.into_iter().map(|(time, to_state)| Jump { time, to_state }).collect(),
        end_time: end,
        end_reason: reason,
    };
    let mut paths = Vec::new();
    for i in 0..9 {
        let t = 0.1 * (i + 1) as f64;
        if i % 3 == 0 {
            paths.push(path(i, 0.0, vec![(t, 2)], 2.5 + t, EndReason::Censored));
        } else {
            paths.push(path(i, 0.0, vec![(t, 3)], t, EndReason::Absorbed));
        }
    }
    paths.push(path(9, 0.49, vec![(2.0, 2), (2.6, 3)], 2.6, EndReason::Absorbed));
    paths.push(path(10, 0.48, vec![], 1.5, EndReason::Censored));
    Sample::new(StateSpace::new(vec![1, 2, 3], vec![3])?, paths)
}

fn compare_with_brute_force(sample: &Sample, x: f64, a: f64, eps: f64) -> Result<(f64, bool, usize)> {
    let kernel = epanechnikov(1);
    let point = kernel.eval_point(vec![x])?;
    let w = nw_weights(sample, &point, &kernel, a);
    if w.degenerate {
        return Ok((0.0, true, 0));
    }
    let h = nelson_aalen_weighted(sample, &w, eps)?;
    let occ = aalen_johansen(&h, &h.initial);
    let (bh, bocc) = brute_force_estimator(sample, &point, &kernel, a, eps);
    let mut worst: f64 = 0.0;
    let same_grid = h.times() == bh.times();
    if same_grid {
        for i in 0..h.times().len() {
            worst = worst.max((h.increment(i) - bh.increment(i)).amax());
            for j in 0..h.initial.len() {
                worst = worst.max((occ.occupation[j].values[i] - bocc.occupation[j].values[i]).abs());
            }
        }
    }
    let floors = h.floor_active.iter().map(Vec::len).sum();
    Ok((worst, same_grid && h.floor_active == bh.floor_active, floors))
}

fn epsilon_floor() -> Outcome {
    let eps = 0.01;
    let sample = floor_sample()?;
    let (mut worst, mut agree, mut floors) = compare_with_brute_force(&sample, 0.0, 0.5, eps)?;
    let kernel = epanechnikov(1);
    let w = nw_weights(&sample, &kernel.eval_point(vec![0.0])?, &kernel, 0.5);
    let h = nelson_aalen_weighted(&sample, &w, eps)?;
    let i = h.times().iter().position(|&t| t == 2.0).expect("jump at 2");
    let literal = w.weights[9] / eps;
    let floored = (h.increment(i)[(0, 1)] - literal).abs();
    let hit = h.floor_active[0] == [2.0];

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in 0..40u64 {
        let sample = default_sample(rng.random_range(4..12), 900 + s)?;
        let (e, ok, fl) = compare_with_brute_force(&sample, rng.random(), 0.3, 0.05)?;
        worst = worst.max(e);
        agree &= ok;
        floors += fl;
    }
    Ok((
        agree && hit && floors > 1 && floored <= 1e-12 && worst <= 1e-12,
        format!(
            "floored increment {:.6} = w/eps (error {floored:.1e}), {floors} floored cells, \
             max deviation from literal estimator {worst:.2e} (tol 1e-12), flags agree: {agree}",
            h.increment(i)[(0, 1)]
        ),
    ))
}

fn scratch_dir() -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    std::env::temp_dir().join(format!("condaj-check-{}-{nanos}", std::process::id()))
}

fn determinism() -> Outcome {
    let dir = scratch_dir();
    let result = (|| -> Outcome {
        std::fs::create_dir_all(&dir)?;
        let input = dir.join("sample.csv");
        write_sample(&default_sample(300, 77)?, std::fs::File::create(&input)?)?;
        let run = |out: &str| RunConfig {
            quiet: true,
            ..RunConfig::new(&input, dir.join(out), &["0.3", "0.5", "0.8"])
        };
        let one_thread = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        one_thread.install(|| cmd_fit(&run("a")))?;
        many.install(|| cmd_fit(&run("b")))?;
        let mut names: Vec<_> = std::fs::read_dir(dir.join("a"))?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let mut identical = !names.is_empty();
        for name in &names {
            identical &= std::fs::read(dir.join("a").join(name))? == std::fs::read(dir.join("b").join(name))?;
        }
        Ok((
            identical,
            format!("{} output files, 1 vs 4 threads, byte-identical: {identical}", names.len()),
        ))
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{bandwidth, BandwidthSchedule};

    #[test]
    fn floor_sample_is_valid_and_floors_once() {
        let sample = floor_sample().unwrap();
        let kernel = epanechnikov(1);
        let w = nw_weights(&sample, &kernel.eval_point(vec![0.0]).unwrap(), &kernel, 0.5);
        assert!(w.weights[9] < 0.01);
        let h = nelson_aalen_weighted(&sample, &w, 0.01).unwrap();
        assert_eq!(h.floor_active[0], vec![2.0]);
    }

    #[test]
    fn quick_criteria_pass() {
        for id in [1, 2, 3, 4, 6, 9] {
            let r = run_criterion(id, &SuiteOptions { quick: true });
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn default_bandwidth_used_by_consistency_exceeds_one() {
        let s = BandwidthSchedule::new(0.75, 1).unwrap();
        assert!(bandwidth(&s, 4000) > 1.0);
    }
}
