mod common;

use common::{illness_death, path};
use condaj::covariance::{covariance_surfaces, influence_gamma, influence_zeta, ZetaTerms};
use condaj::data::{EndReason, Sample};
use condaj::estimators::{fit, ConditionalFit, FitConfig};
use condaj::kernels::{BandwidthSchedule, KernelKind, KernelSpec};
use condaj::simulate::{default_censoring, default_intensity, simulate_sample};
use nalgebra::DMatrix;

const X: f64 = 0.5;
const A: f64 = 0.8;

fn toy() -> Sample {
    illness_death(vec![
        path(0.3, 1, &[(0.5, 2), (1.5, 3)], 1.5, EndReason::Absorbed),
        path(0.5, 1, &[], 1.0, EndReason::Censored),
        path(0.9, 1, &[(0.8, 3)], 0.8, EndReason::Absorbed),
    ])
}

fn kernel() -> KernelSpec {
    KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1)
}

fn toy_fit(sample: &Sample, eps: f64) -> ConditionalFit {
    let mut config = FitConfig::new(kernel());
    config.schedule = BandwidthSchedule::fixed(A).unwrap();
    config.epsilon = eps;
    fit(sample, &[X], &config).unwrap()
}

/// Everything the influence-curve display needs, recomputed from the paths.
struct Literal {
    w: Vec<f64>,
    phi: f64,
    grid: Vec<f64>,
    /// `[i][j]` = exposure of state j just before grid[i].
    before: Vec<Vec<f64>>,
    /// `[i]` = matrix of count increments at grid[i].
    dn: Vec<DMatrix<f64>>,
    dl: Vec<DMatrix<f64>>,
    initial: Vec<f64>,
}

fn own_jumps(sample: &Sample, l: usize, t: f64) -> DMatrix<f64> {
    let p = &sample.paths()[l];
    let mut m = DMatrix::zeros(3, 3);
    let mut prev = p.initial_state;
    for j in &p.jumps {
        if j.time == t {
            m[((prev - 1) as usize, (j.to_state - 1) as usize)] += 1.0;
        }
        prev = j.to_state;
    }
    m
}

fn at_risk_before(sample: &Sample, l: usize, t: f64, j: usize) -> f64 {
    let p = &sample.paths()[l];
    let observed = p.end_reason == EndReason::Absorbed || t <= p.end_time;
    if observed && (p.state_before(t) - 1) as usize == j {
        1.0
    } else {
        0.0
    }
}

fn literal(sample: &Sample, eps: f64) -> Literal {
    let n = sample.len() as f64;
    let k: Vec<f64> = sample
        .paths()
        .iter()
        .map(|p| {
            let u = (X - p.covariates[0]) / A;
            0.75 * (1.0 - u * u).max(0.0) / A
        })
        .collect();
    let g = k.iter().sum::<f64>() / n;
    let w: Vec<f64> = k.iter().map(|v| v / (n * g)).collect();
    let phi = 0.6 / g;
    let grid = vec![0.5, 0.8, 1.0, 1.5];
    let mut before = Vec::new();
    let mut dn = Vec::new();
    let mut dl = Vec::new();
    for &t in &grid {
        let b: Vec<f64> = (0..3)
            .map(|j| (0..3).map(|l| w[l] * at_risk_before(sample, l, t, j)).sum())
            .collect();
        let mut counts = DMatrix::zeros(3, 3);
        for l in 0..3 {
            counts += own_jumps(sample, l, t) * w[l];
        }
        let mut h = DMatrix::zeros(3, 3);
        for j in 0..3 {
            for c in 0..3 {
                if c != j {
                    h[(j, c)] = counts[(j, c)] / b[j].max(eps);
                    h[(j, j)] -= h[(j, c)];
                }
            }
        }
        before.push(b);
        dn.push(counts);
        dl.push(h);
    }
    let initial = vec![w.iter().sum(), 0.0, 0.0];
    Literal {
        w,
        phi,
        grid,
        before,
        dn,
        dl,
        initial,
    }
}

/// Increments of `ζ̃^l_jk` on the grid, term by term.
fn literal_zeta(sample: &Sample, lit: &Literal, eps: f64, l: usize, j: usize, k: usize) -> Vec<f64> {
    lit.grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let ij = lit.before[i][j];
            let first = (own_jumps(sample, l, t)[(j, k)] - lit.dn[i][(j, k)]) / ij.max(eps);
            let second = if ij > eps {
                (at_risk_before(sample, l, t, j) - ij) / ij * lit.dl[i][(j, k)]
            } else {
                0.0
            };
            lit.phi.sqrt() * (first - second)
        })
        .collect()
}

fn cumsum(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect()
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[test]
fn zeta_matches_term_by_term_evaluation() {
    let sample = toy();
    for eps in [1e-4, 0.4] {
        let f = toy_fit(&sample, eps);
        let lit = literal(&sample, eps);
        assert_eq!(f.hazard.times(), lit.grid.as_slice());
        for l in 0..3 {
            for &(j, k) in &PAIRS {
                let z = influence_zeta(&sample, &f.hazard, lit.phi, l, (j, k));
                let expected = cumsum(&literal_zeta(&sample, &lit, eps, l, j, k));
                for (a, b) in z.curve.values.iter().zip(&expected) {
                    assert!((a - b).abs() <= 1e-12, "eps {eps} subject {l} pair {j}{k}: {a} vs {b}");
                }
                assert_eq!(z.curve.initial_value, 0.0);
            }
        }
    }
}

#[test]
fn gamma_matches_sandwich_of_product_integrals() {
    let sample = toy();
    for eps in [1e-4, 0.4] {
        let f = toy_fit(&sample, eps);
        let lit = literal(&sample, eps);
        let g = lit.grid.len();
        let id = DMatrix::<f64>::identity(3, 3);
        let prodi = |from: usize, to: usize| {
            // (I + ΔΛ) over grid indices from..to
            (from..to).fold(id.clone(), |acc, i| acc * (&id + &lit.dl[i]))
        };
        let p0 = DMatrix::from_row_slice(1, 3, &lit.initial);
        for l in 0..3 {
            let mut dz = vec![DMatrix::<f64>::zeros(3, 3); g];
            let mut incs = vec![vec![None; 3]; 3];
            for &(j, k) in &PAIRS {
                let z = literal_zeta(&sample, &lit, eps, l, j, k);
                for i in 0..g {
                    dz[i][(j, k)] = z[i];
                    dz[i][(j, j)] -= z[i];
                }
                incs[j][k] = Some(ZetaTerms::new(&f.hazard, lit.phi, j, k).increments(&sample, l));
            }
            let gamma = influence_gamma(&f.hazard, &f.occupation, &incs, l);
            for ti in 0..g {
                let mut expected = DMatrix::zeros(1, 3);
                for si in 0..=ti {
                    expected += &p0 * prodi(0, si) * &dz[si] * prodi(si + 1, ti + 1);
                }
                for j in 0..3 {
                    let got = gamma[j].curve.values[ti];
                    assert!((got - expected[(0, j)]).abs() <= 1e-12, "eps {eps} l {l} t {ti} j {j}");
                }
            }
        }
    }
}

#[test]
fn surfaces_are_weighted_quadratic_forms() {
    let sample = toy();
    let f = toy_fit(&sample, 1e-4);
    let lit = literal(&sample, 1e-4);
    let grid = [0.0, 0.6, 0.8, 1.2, 2.0];
    let report = covariance_surfaces(&sample, &f, &kernel(), Some(&grid), 0).unwrap();
    assert!((report.phi - lit.phi).abs() <= 1e-12);
    for ((j, k), surface) in &report.hazard {
        let curves: Vec<Vec<f64>> = (0..3).map(|l| cumsum(&literal_zeta(&sample, &lit, 1e-4, l, *j, *k))).collect();
        let at = |l: usize, t: f64| {
            let upto = lit.grid.partition_point(|&s| s <= t);
            if upto == 0 { 0.0 } else { curves[l][upto - 1] }
        };
        for (a, &s) in grid.iter().enumerate() {
            for (b, &t) in grid.iter().enumerate() {
                let expected: f64 = (0..3).map(|l| lit.w[l] * at(l, s) * at(l, t)).sum();
                assert!((surface.values[(a, b)] - expected).abs() <= 1e-12);
            }
        }
    }
    assert_eq!(report.hazard.len(), 3);
    assert_eq!(report.occupation.len(), 3);
    for (_, s) in &report.occupation {
        assert!(s.values.row(0).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn surfaces_from_simulated_data_are_psd() {
    let sample = simulate_sample(&default_intensity(), &default_censoring(), 150, 4).unwrap();
    let f = fit(&sample, &[0.5], &FitConfig::new(kernel())).unwrap();
    let report = covariance_surfaces(&sample, &f, &kernel(), None, 30).unwrap();
    for s in report.hazard.iter().map(|(_, s)| s).chain(report.occupation.iter().map(|(_, s)| s)) {
        assert_eq!(s.values, s.values.transpose());
        let min = s.values.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-10, "{min}");
        assert!(s.diagonal().iter().all(|&v| v >= 0.0));
    }
}
