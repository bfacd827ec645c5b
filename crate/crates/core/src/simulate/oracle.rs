//! Literal re-derivation of the estimators from their defining sums.
//!
//! Nothing here goes through the exposure decomposition or the recursion
//! used by [`crate::estimators`]: weights are recomputed from the product
//! kernel, counts and exposures are re-counted per subject at every grid
//! time, and occupation probabilities come from an explicit ordered matrix
//! product. Quadratic in the sample size; meant for small samples.

use nalgebra::DMatrix;

use crate::data::{EndReason, EvalPoint, ObservedPath, Sample};
use crate::estimators::{HazardEstimate, OccupationEstimate};
use crate::kernels::{kernel_eval, KernelSpec};
use crate::step::{StepCurve, StepMatrix};

fn literal_factor(p: &ObservedPath, x: &EvalPoint, spec: &KernelSpec, a: f64) -> f64 {
    let mut g = 1.0;
    for i in 0..x.coords.len() {
        let xi = x.coords[i];
        let xl = p.covariates[i];
        let x_is_atom = spec.atoms[i].contains(&xi);
        let xl_is_atom = spec.atoms[i].contains(&xl);
        let smooth = if !x_is_atom && !xl_is_atom {
            kernel_eval(spec, i, (xi - xl) / a) / a
        } else {
            0.0
        };
        let matched = if x_is_atom && xl == xi { 1.0 } else { 0.0 };
        g *= smooth + matched;
    }
    g
}

/// Number of `j -> k` jumps of `p` at times in `(0, t]` (`strict`: `(0, t)`).
fn count(p: &ObservedPath, j: i64, k: i64, t: f64, strict: bool) -> f64 {
    let mut prev = p.initial_state;
    let mut n = 0.0;
    for jump in &p.jumps {
        let inside = if strict { jump.time < t } else { jump.time <= t };
        if inside && prev == j && jump.to_state == k {
            n += 1.0;
        }
        prev = jump.to_state;
    }
    n
}

/// Hazard and occupation estimates by direct evaluation of their formulas.
pub fn brute_force_estimator(
    sample: &Sample,
    x: &EvalPoint,
    spec: &KernelSpec,
    a: f64,
    epsilon: f64,
) -> (HazardEstimate, OccupationEstimate) {
    let space = sample.state_space();
    let m = space.len();
    let n = sample.len() as f64;
    let paths = sample.paths();

    let factors: Vec<f64> = paths.iter().map(|p| literal_factor(p, x, spec, a)).collect();
    let density: f64 = factors.iter().sum::<f64>() / n;
    let w: Vec<f64> = factors.iter().map(|f| f / (n * density)).collect();

    let mut grid: Vec<f64> = Vec::new();
    for (p, wl) in paths.iter().zip(&w) {
        if *wl > 0.0 {
            grid.extend(p.jumps.iter().map(|j| j.time));
            if p.end_reason == EndReason::Censored {
                grid.push(p.end_time);
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let counts_at = |t: f64, strict: bool| {
        let mut c = DMatrix::zeros(m, m);
        for (p, wl) in paths.iter().zip(&w) {
            for j in 0..m {
                for k in 0..m {
                    if j != k {
                        c[(j, k)] += wl * count(p, space.label(j), space.label(k), t, strict);
                    }
                }
            }
        }
        c
    };
    // Σ w 1{t < R} 1{Z_t = j}
    let exposure_at = |t: f64| {
        let mut e = vec![0.0; m];
        for (p, wl) in paths.iter().zip(&w) {
            let observed = p.end_reason == EndReason::Absorbed || t < p.end_time;
            if observed {
                e[space.index_of(p.state_at(t)).unwrap()] += wl;
            }
        }
        e
    };
    // Σ w 1{t <= R} 1{Z_{t-} = j}
    let exposure_before = |t: f64| {
        let mut e = vec![0.0; m];
        for (p, wl) in paths.iter().zip(&w) {
            let observed = p.end_reason == EndReason::Absorbed || t <= p.end_time;
            if observed {
                e[space.index_of(p.state_before(t)).unwrap()] += wl;
            }
        }
        e
    };

    let initial = exposure_at(0.0);
    let mut count_incs = Vec::with_capacity(grid.len());
    let mut hazard_incs = Vec::with_capacity(grid.len());
    let mut exposure_rows = Vec::with_capacity(grid.len());
    let mut floor_active = vec![Vec::new(); m];
    for &t in &grid {
        let dn = counts_at(t, false) - counts_at(t, true);
        let before = exposure_before(t);
        let mut dl = DMatrix::zeros(m, m);
        for j in 0..m {
            let denom = if before[j] > epsilon { before[j] } else { epsilon };
            let mut bites = false;
            for k in 0..m {
                if k != j {
                    dl[(j, k)] = dn[(j, k)] / denom;
                    dl[(j, j)] -= dl[(j, k)];
                    bites |= dn[(j, k)] > 0.0;
                }
            }
            if bites && before[j] < epsilon {
                floor_active[j].push(t);
            }
        }
        count_incs.push(dn);
        hazard_incs.push(dl);
        exposure_rows.push(exposure_at(t));
    }

    let mut occupation_rows = Vec::with_capacity(grid.len());
    let p0 = DMatrix::from_row_slice(1, m, &initial);
    let mut prod = DMatrix::<f64>::identity(m, m);
    for dl in &hazard_incs {
        prod *= DMatrix::<f64>::identity(m, m) + dl;
        occupation_rows.push(&p0 * &prod);
    }

    let horizon = paths
        .iter()
        .zip(&w)
        .filter(|(p, wl)| **wl > 0.0 && p.end_reason == EndReason::Censored)
        .map(|(p, _)| p.end_time)
        .fold(f64::NEG_INFINITY, f64::max);
    let horizon = if horizon.is_finite() {
        horizon
    } else {
        grid.last().copied().unwrap_or(0.0)
    };

    let exposure = (0..m)
        .map(|j| StepCurve::new(grid.clone(), exposure_rows.iter().map(|r| r[j]).collect(), initial[j]))
        .collect();
    let occupation = (0..m)
        .map(|j| StepCurve::new(grid.clone(), occupation_rows.iter().map(|r| r[(0, j)]).collect(), initial[j]))
        .collect();
    let zero = DMatrix::zeros(m, m);
    (
        HazardEstimate {
            hazard: StepMatrix::from_increments(grid.clone(), hazard_incs, zero.clone()),
            epsilon,
            exposure,
            counts: StepMatrix::from_increments(grid.clone(), count_incs, zero),
            floor_active,
            initial: initial.clone(),
            horizon,
        },
        OccupationEstimate { occupation, initial },
    )
}
