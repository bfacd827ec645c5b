//! Plug-in covariance surfaces for the conditional Nelson-Aalen and
//! Aalen-Johansen estimators.
//!
//! Each subject gets an influence curve `ζ̃^l_jk` per transition; pushing
//! the matrix of their increments through the product integral gives the
//! occupation influence curves `γ̃^l_j`. A covariance surface is the
//! kernel-weighted Gram matrix of those curves on an evaluation grid.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{counting_increments, Sample};
use crate::estimators::{ConditionalFit, HazardEstimate, OccupationEstimate};
use crate::kernels::{phi_estimate_at, KernelSpec, WeightVector};
use crate::error::Result;
use crate::step::StepCurve;

/// A subject's influence curve on the event grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceCurve {
    pub subject: usize,
    pub curve: StepCurve,
}

/// Symmetric surface `Σ(s, t)` on `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSurface {
    pub grid: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl CovarianceSurface {
    /// Pointwise standard errors from the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diagonal().iter().copied().collect()
    }
}

/// `B_j(t) = 1{𝕀_j(t) > ε}` per state; the estimators read its left limit.
pub fn perturbation_indicator(hazard: &HazardEstimate) -> Vec<StepCurve> {
    let eps = hazard.epsilon;
    let ind = |v: f64| if v > eps { 1.0 } else { 0.0 };
    hazard
        .exposure
        .iter()
        .map(|e| StepCurve::new(e.times.clone(), e.values.iter().map(|&v| ind(v)).collect(), ind(e.initial_value)))
        .collect()
}

/// Shared per-transition terms of `ζ̃_jk`, precomputed once per fit.
#[derive(Clone, Debug)]
pub struct ZetaTerms {
    pub from: usize,
    pub to: usize,
    sqrt_phi: f64,
    times: Vec<f64>,
    /// Per grid point: `−dℕ/(𝕀∨ε) + B·dΛ`.
    common: Vec<f64>,
    /// Per grid point: `B·dΛ/𝕀`, charged while the subject is at risk in `from`.
    at_risk: Vec<f64>,
    common_prefix: Vec<f64>,
    at_risk_prefix: Vec<f64>,
    exposure: StepCurve,
    epsilon: f64,
}

fn prefix(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for x in v {
        acc += x;
        out.push(acc);
    }
    out
}

impl ZetaTerms {
    pub fn new(hazard: &HazardEstimate, phi: f64, from: usize, to: usize) -> Self {
        let eps = hazard.epsilon;
        let exposure = hazard.exposure[from].clone();
        let g = hazard.times().len();
        let mut common = Vec::with_capacity(g);
        let mut at_risk = Vec::with_capacity(g);
        for i in 0..g {
            let exposed = exposure.before_index(i);
            let dn = hazard.counts.increments[i][(from, to)];
            let dl = hazard.hazard.increments[i][(from, to)];
            let active = exposed > eps;
            common.push(-dn / exposed.max(eps) + if active { dl } else { 0.0 });
            at_risk.push(if active { dl / exposed } else { 0.0 });
        }
        ZetaTerms {
            from,
            to,
            sqrt_phi: phi.sqrt(),
            times: hazard.times().to_vec(),
            common_prefix: prefix(&common),
            at_risk_prefix: prefix(&at_risk),
            common,
            at_risk,
            exposure,
            epsilon: eps,
        }
    }

    /// Sojourns `(a, b]` of the subject in `from`, as grid index ranges.
    fn at_risk_ranges(&self, sample: &Sample, subject: usize) -> Vec<(usize, usize)> {
        let space = sample.state_space();
        let p = &sample.paths()[subject];
        let from_label = space.label(self.from);
        let end = if p.end_reason == crate::data::EndReason::Censored {
            p.end_time
        } else {
            f64::INFINITY
        };
        let mut ranges = Vec::new();
        let mut entered = if p.initial_state == from_label { Some(0.0) } else { None };
        for j in &p.jumps {
            if let Some(a) = entered.take() {
                ranges.push((a, j.time));
            }
            if j.to_state == from_label {
                entered = Some(j.time);
            }
        }
        if let Some(a) = entered {
            ranges.push((a, end));
        }
        ranges
            .into_iter()
            .map(|(a, b)| {
                (
                    self.times.partition_point(|&t| t <= a),
                    self.times.partition_point(|&t| t <= b),
                )
            })
            .collect()
    }

    fn own_jumps(&self, sample: &Sample, subject: usize) -> Vec<(f64, f64)> {
        let space = sample.state_space();
        let (fl, tl) = (space.label(self.from), space.label(self.to));
        counting_increments(&sample.paths()[subject])
            .into_iter()
            .filter(|tr| tr.from == fl && tr.to == tl)
            .map(|tr| (tr.time, 1.0 / self.exposure.before(tr.time).max(self.epsilon)))
            .collect()
    }

    /// Increments of `ζ̃^l` on the grid.
    pub fn increments(&self, sample: &Sample, subject: usize) -> Vec<f64> {
        let mut delta = self.common.clone();
        for (lo, hi) in self.at_risk_ranges(sample, subject) {
            for m in lo..hi {
                delta[m] -= self.at_risk[m];
            }
        }
        for (s, v) in self.own_jumps(sample, subject) {
            let m = self.times.partition_point(|&t| t < s);
            if m < delta.len() {
                delta[m] += v;
            }
        }
        delta.iter_mut().for_each(|d| *d *= self.sqrt_phi);
        delta
    }

    /// `ζ̃^l(t)` at a single time.
    pub fn value_at(&self, sample: &Sample, subject: usize, t: f64) -> f64 {
        let upto = self.times.partition_point(|&s| s <= t);
        let mut v = self.common_prefix[upto];
        for (lo, hi) in self.at_risk_ranges(sample, subject) {
            let hi = hi.min(upto);
            if hi > lo {
                v -= self.at_risk_prefix[hi] - self.at_risk_prefix[lo];
            }
        }
        for (s, own) in self.own_jumps(sample, subject) {
            if s <= t && self.times.partition_point(|&u| u < s) < self.times.len() {
                v += own;
            }
        }
        self.sqrt_phi * v
    }
}

fn cumulate(times: &[f64], delta: &[f64]) -> StepCurve {
    let mut acc = 0.0;
    let values = delta
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect();
    StepCurve::new(times.to_vec(), values, 0.0)
}

/// Influence curve `ζ̃^(n,l,ε)_jk` of subject `l` for transition `(from, to)`.
pub fn influence_zeta(
    sample: &Sample,
    hazard: &HazardEstimate,
    phi: f64,
    subject: usize,
    pair: (usize, usize),
) -> InfluenceCurve {
    let terms = ZetaTerms::new(hazard, phi, pair.0, pair.1);
    InfluenceCurve {
        subject,
        curve: cumulate(&terms.times, &terms.increments(sample, subject)),
    }
}

/// Occupation influence curves `γ̃^l_j`, one per state, from the increments
/// of every `ζ̃^l_jk` (`zeta_increments[j][k]`, diagonal ignored).
pub fn influence_gamma(
    hazard: &HazardEstimate,
    occupation: &OccupationEstimate,
    zeta_increments: &[Vec<Option<Vec<f64>>>],
    subject: usize,
) -> Vec<InfluenceCurve> {
    let m = hazard.initial.len();
    let times = hazard.times();
    let mut g = vec![0.0; m];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    for (i, inc) in hazard.hazard.increments.iter().enumerate() {
        // g <- g (Id + ΔΛ)
        let mut next = g.clone();
        for c in 0..m {
            for r in 0..m {
                next[c] += g[r] * inc[(r, c)];
            }
        }
        // + p(t_i-) Δζ̃(t_i), diagonal = negative row sum
        let p_before = occupation.row_before(i);
        for r in 0..m {
            if p_before[r] == 0.0 {
                continue;
            }
            for c in (0..m).filter(|&c| c != r) {
                if let Some(dz) = &zeta_increments[r][c] {
                    let v = p_before[r] * dz[i];
                    next[c] += v;
                    next[r] -= v;
                }
            }
        }
        g = next;
        rows.push(g.clone());
    }
    (0..m)
        .map(|j| InfluenceCurve {
            subject,
            curve: StepCurve::new(times.to_vec(), rows.iter().map(|r| r[j]).collect(), 0.0),
        })
        .collect()
}

/// `Σ(s,t) = Σ_l w_l c_l(s) c_l(t)` on `grid`.
fn weighted_gram(curves: &[InfluenceCurve], w: &WeightVector, grid: &[f64]) -> CovarianceSurface {
    let k = grid.len();
    let mut values = DMatrix::zeros(k, k);
    for c in curves {
        let wl = w.weights[c.subject];
        if wl == 0.0 {
            continue;
        }
        let v = nalgebra::DVector::from_iterator(k, grid.iter().map(|&t| c.curve.at(t)));
        values.ger(wl, &v, &v, 1.0);
    }
    // exact symmetry
    for a in 0..k {
        for b in 0..a {
            let s = 0.5 * (values[(a, b)] + values[(b, a)]);
            values[(a, b)] = s;
            values[(b, a)] = s;
        }
    }
    CovarianceSurface {
        grid: grid.to_vec(),
        values,
    }
}

pub fn cov_hazard(influences: &[InfluenceCurve], w: &WeightVector, grid: &[f64]) -> CovarianceSurface {
    weighted_gram(influences, w, grid)
}

pub fn cov_occupation(influences: &[InfluenceCurve], w: &WeightVector, grid: &[f64]) -> CovarianceSurface {
    weighted_gram(influences, w, grid)
}

/// Up to `size` event times at equispaced quantile positions.
pub fn quantile_grid(times: &[f64], size: usize) -> Vec<f64> {
    if times.len() <= size || size < 2 {
        return times.to_vec();
    }
    let last = (times.len() - 1) as f64;
    let mut out: Vec<f64> = (0..size)
        .map(|i| times[((i as f64) * last / (size - 1) as f64).round() as usize])
        .collect();
    out.dedup();
    out
}

/// Hazard and occupation surfaces of one fit.
#[derive(Clone, Debug)]
pub struct CovarianceReport {
    pub phi: f64,
    pub grid: Vec<f64>,
    /// Per active transition `(j, k)` (state indices).
    pub hazard: Vec<((usize, usize), CovarianceSurface)>,
    /// Per state index.
    pub occupation: Vec<(usize, CovarianceSurface)>,
}

/// Surfaces on `grid`, or on [`quantile_grid`] of the event times with
/// `grid_size` points when `grid` is `None`.
pub fn covariance_surfaces(
    sample: &Sample,
    fit: &ConditionalFit,
    kernel: &KernelSpec,
    grid: Option<&[f64]>,
    grid_size: usize,
) -> Result<CovarianceReport> {
    let phi = phi_estimate_at(kernel, &fit.x, fit.weights.density_value)?;
    let hazard = &fit.hazard;
    let m = hazard.initial.len();
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => quantile_grid(hazard.times(), grid_size),
    };
    let last_counts = hazard.counts.values.last();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|j| (0..m).map(move |k| (j, k)))
        .filter(|&(j, k)| j != k && last_counts.is_some_and(|n| n[(j, k)] > 0.0))
        .collect();
    let terms: Vec<ZetaTerms> = pairs
        .iter()
        .map(|&(j, k)| ZetaTerms::new(hazard, phi, j, k))
        .collect();
    let support: Vec<usize> = fit.weights.support().collect();

    struct Subject {
        zeta: Vec<InfluenceCurve>,
        gamma: Vec<InfluenceCurve>,
    }
    let per_subject: Vec<Subject> = support
        .par_iter()
        .map(|&l| {
            let mut incs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; m]; m];
            let mut zeta = Vec::with_capacity(terms.len());
            for t in &terms {
                let d = t.increments(sample, l);
                zeta.push(InfluenceCurve {
                    subject: l,
                    curve: cumulate(hazard.times(), &d),
                });
                incs[t.from][t.to] = Some(d);
            }
            let gamma = influence_gamma(hazard, &fit.occupation, &incs, l);
            Subject { zeta, gamma }
        })
        .collect();

    let hazard_surfaces = pairs
        .iter()
        .enumerate()
        .map(|(p, &pair)| {
            let curves: Vec<InfluenceCurve> = per_subject.iter().map(|s| s.zeta[p].clone()).collect();
            (pair, cov_hazard(&curves, &fit.weights, &grid))
        })
        .collect();
    let occupation_surfaces = (0..m)
        .map(|j| {
            let curves: Vec<InfluenceCurve> = per_subject.iter().map(|s| s.gamma[j].clone()).collect();
            (j, cov_occupation(&curves, &fit.weights, &grid))
        })
        .collect();
    Ok(CovarianceReport {
        phi,
        grid,
        hazard: hazard_surfaces,
        occupation: occupation_surfaces,
    })
}

/// Plug-in variance `Σ_Λjk(t, t | x)` at a single time, without building
/// full influence curves.
pub fn hazard_variance_at(
    sample: &Sample,
    fit: &ConditionalFit,
    kernel: &KernelSpec,
    pair: (usize, usize),
    t: f64,
) -> Result<f64> {
    let phi = phi_estimate_at(kernel, &fit.x, fit.weights.density_value)?;
    let terms = ZetaTerms::new(&fit.hazard, phi, pair.0, pair.1);
    Ok(fit
        .weights
        .support()
        .map(|l| {
            let z = terms.value_at(sample, l, t);
            fit.weights.weights[l] * z * z
        })
        .sum())
}
