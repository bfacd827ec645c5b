//! Kernel-weighted counting, exposure and censoring curves, the perturbed
//! conditional Nelson-Aalen estimator and the conditional Aalen-Johansen
//! estimator.
//!
//! Every curve of one fit lives on the same event grid: the sorted union of
//! the jump times and censoring times of the paths carrying positive weight.
//! Exposure changes only at those times, so left limits are read off the
//! previous grid point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{counting_increments, EndReason, EvalPoint, Sample};
use crate::error::{Error, Result};
use crate::kernels::{bandwidth, nw_weights, BandwidthSchedule, KernelSpec, WeightVector};
use crate::step::{StepCurve, StepMatrix};

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Perturbed cumulative transition rates together with their ingredients.
#[derive(Clone, Debug)]
pub struct HazardEstimate {
    /// `Λ^(n,ε)`; the diagonal holds the negative row sums.
    pub hazard: StepMatrix,
    pub epsilon: f64,
    /// Exposure `𝕀_j^(n)` per state index.
    pub exposure: Vec<StepCurve>,
    /// Counts `ℕ_jk^(n)`.
    pub counts: StepMatrix,
    /// Per state index, the grid times where the ε floor replaced the
    /// exposure in a non-zero increment.
    pub floor_active: Vec<Vec<f64>>,
    /// `𝕀^(n)(0|x)`.
    pub initial: Vec<f64>,
    /// Largest censoring time among weighted paths (or the last event time
    /// when nothing was censored).
    pub horizon: f64,
}

impl HazardEstimate {
    pub fn times(&self) -> &[f64] {
        &self.hazard.times
    }

    pub fn increment(&self, i: usize) -> &DMatrix<f64> {
        &self.hazard.increments[i]
    }
}

/// Conditional occupation probabilities per state index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub occupation: Vec<StepCurve>,
    pub initial: Vec<f64>,
}

impl OccupationEstimate {
    pub fn times(&self) -> &[f64] {
        self.occupation.first().map_or(&[], |c| c.times.as_slice())
    }

    /// Row vector `p(t|x)`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        self.occupation.iter().map(|c| c.at(t)).collect()
    }

    /// Row vector at the `i`-th grid time.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.occupation.iter().map(|c| c.values[i]).collect()
    }

    /// Row vector just before the `i`-th grid time.
    pub fn row_before(&self, i: usize) -> Vec<f64> {
        self.occupation.iter().map(|c| c.before_index(i)).collect()
    }
}

/// Sorted union of jump and censoring times over positively weighted paths.
pub fn event_grid(sample: &Sample, w: &WeightVector) -> Vec<f64> {
    let mut times = Vec::new();
    for l in w.support() {
        let p = &sample.paths()[l];
        times.extend(p.jumps.iter().map(|j| j.time));
        if p.end_reason == EndReason::Censored {
            times.push(p.end_time);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn grid_index(grid: &[f64], t: f64) -> usize {
    grid.binary_search_by(|s| s.total_cmp(&t))
        .expect("event time is on the grid")
}

fn state_index(sample: &Sample, label: i64) -> usize {
    sample
        .state_space()
        .index_of(label)
        .expect("sample is validated")
}

/// `𝕀^(n)(0|x)`: weighted distribution of the initial state.
pub fn initial_occupation(sample: &Sample, w: &WeightVector) -> Vec<f64> {
    let mut out = vec![0.0; sample.state_space().len()];
    for l in w.support() {
        out[state_index(sample, sample.paths()[l].initial_state)] += w.weights[l];
    }
    out
}

/// `ℕ_jk^(n)(t|x) = Σ_l w_l N^l_jk(t ∧ R^l)`.
pub fn estimate_counts(sample: &Sample, w: &WeightVector) -> StepMatrix {
    let grid = event_grid(sample, w);
    let m = sample.state_space().len();
    let mut increments = vec![DMatrix::zeros(m, m); grid.len()];
    for l in w.support() {
        let wl = w.weights[l];
        for tr in counting_increments(&sample.paths()[l]) {
            let i = grid_index(&grid, tr.time);
            let (j, k) = (state_index(sample, tr.from), state_index(sample, tr.to));
            increments[i][(j, k)] += wl;
        }
    }
    StepMatrix::from_increments(grid, increments, DMatrix::zeros(m, m))
}

/// `ℂ_j^(n)(t|x) = Σ_l w_l 1{R^l ≤ t, Z^l_R = j}` over censored paths.
pub fn estimate_censoring(sample: &Sample, w: &WeightVector) -> Vec<StepCurve> {
    let grid = event_grid(sample, w);
    let m = sample.state_space().len();
    let mut jumps = vec![vec![0.0; grid.len()]; m];
    for l in w.support() {
        let p = &sample.paths()[l];
        if p.end_reason == EndReason::Censored {
            let i = grid_index(&grid, p.end_time);
            jumps[state_index(sample, p.final_state())][i] += w.weights[l];
        }
    }
    jumps
        .into_iter()
        .map(|inc| {
            let mut acc = 0.0;
            let values = inc
                .into_iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect();
            StepCurve::new(grid.clone(), values, 0.0)
        })
        .collect()
}

/// Exposure from counts and censoring via
/// `𝕀_j(t) = 𝕀_j(0) − ℂ_j(t) + Σ_{k≠j} (ℕ_kj(t) − ℕ_jk(t))`.
pub fn estimate_exposure(counts: &StepMatrix, censoring: &[StepCurve], initial: &[f64]) -> Vec<StepCurve> {
    let m = initial.len();
    (0..m)
        .map(|j| {
            let values = counts
                .values
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let mut flow = 0.0;
                    for k in (0..m).filter(|&k| k != j) {
                        flow += n[(k, j)] - n[(j, k)];
                    }
                    initial[j] - censoring[j].values[i] + flow
                })
                .collect();
            StepCurve::new(counts.times.clone(), values, initial[j])
        })
        .collect()
}

/// Exposure evaluated directly as `Σ_l w_l 1{t < R^l} 1{Z^l_t = j}` on `grid`.
pub fn direct_exposure(sample: &Sample, w: &WeightVector, grid: &[f64]) -> Vec<StepCurve> {
    let m = sample.state_space().len();
    let at = |t: f64| {
        let mut v = vec![0.0; m];
        for l in w.support() {
            let p = &sample.paths()[l];
            if p.observed_at(t) {
                v[state_index(sample, p.state_at(t))] += w.weights[l];
            }
        }
        v
    };
    let initial = at(0.0);
    let rows: Vec<Vec<f64>> = grid.iter().map(|&t| at(t)).collect();
    (0..m)
        .map(|j| StepCurve::new(grid.to_vec(), rows.iter().map(|r| r[j]).collect(), initial[j]))
        .collect()
}

fn default_horizon(sample: &Sample, w: &WeightVector, grid: &[f64]) -> f64 {
    w.support()
        .filter_map(|l| sample.paths()[l].censoring_time())
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
        .or_else(|| grid.last().copied())
        .unwrap_or(0.0)
}

/// Perturbed Nelson-Aalen estimator for fixed weights.
pub fn nelson_aalen_weighted(sample: &Sample, w: &WeightVector, epsilon: f64) -> Result<HazardEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if w.degenerate {
        return Err(Error::DegenerateDensity);
    }
    let counts = estimate_counts(sample, w);
    let censoring = estimate_censoring(sample, w);
    let initial = initial_occupation(sample, w);
    let exposure = estimate_exposure(&counts, &censoring, &initial);
    let m = initial.len();
    let mut floor_active = vec![Vec::new(); m];
    let mut increments = Vec::with_capacity(counts.len());
    for (i, dn) in counts.increments.iter().enumerate() {
        let t = counts.times[i];
        let mut inc = DMatrix::zeros(m, m);
        for j in 0..m {
            let exposed = exposure[j].before_index(i);
            let denom = exposed.max(epsilon);
            let mut row_sum = 0.0;
            let mut any = false;
            for k in (0..m).filter(|&k| k != j) {
                let d = dn[(j, k)];
                if d != 0.0 {
                    any = true;
                    let v = d / denom;
                    inc[(j, k)] = v;
                    row_sum += v;
                }
            }
            inc[(j, j)] = -row_sum;
            if any && exposed < epsilon {
                floor_active[j].push(t);
            }
        }
        increments.push(inc);
    }
    let horizon = default_horizon(sample, w, &counts.times);
    let hazard = StepMatrix::from_increments(counts.times.clone(), increments, DMatrix::zeros(m, m));
    Ok(HazardEstimate {
        hazard,
        epsilon,
        exposure,
        counts,
        floor_active,
        initial,
        horizon,
    })
}

/// Conditional Nelson-Aalen estimator at `x`.
pub fn nelson_aalen(
    sample: &Sample,
    x: &EvalPoint,
    spec: &KernelSpec,
    schedule: &BandwidthSchedule,
    epsilon: f64,
) -> Result<HazardEstimate> {
    let a = bandwidth(&schedule.for_point(x), sample.len());
    let w = nw_weights(sample, x, spec, a);
    if w.degenerate {
        return Err(Error::NoKernelMass(x.coords.clone()));
    }
    nelson_aalen_weighted(sample, &w, epsilon)
}

/// Ordered product of `Id + ΔΛ(u)` over grid times `u ∈ (s, t]`.
pub fn product_integral(hazard: &StepMatrix, s: f64, t: f64) -> DMatrix<f64> {
    assert!(s <= t, "product integral needs s <= t");
    let m = hazard.dim();
    let lo = hazard.times.partition_point(|&u| u <= s);
    let hi = hazard.times.partition_point(|&u| u <= t);
    let mut out = DMatrix::identity(m, m);
    for inc in &hazard.increments[lo..hi] {
        out = &out * (DMatrix::identity(m, m) + inc);
    }
    out
}

/// Aalen-Johansen recursion over the event grid, started at `initial`.
pub fn aalen_johansen(hazard: &HazardEstimate, initial: &[f64]) -> OccupationEstimate {
    let m = initial.len();
    let times = hazard.times();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let mut p = initial.to_vec();
    for inc in &hazard.hazard.increments {
        let mut next = p.clone();
        for j in 0..m {
            let mut inflow = 0.0;
            let mut outflow = 0.0;
            for k in (0..m).filter(|&k| k != j) {
                inflow += p[k] * inc[(k, j)];
                outflow += inc[(j, k)];
            }
            next[j] += inflow - p[j] * outflow;
        }
        p = next;
        rows.push(p.clone());
    }
    let occupation = (0..m)
        .map(|j| StepCurve::new(times.to_vec(), rows.iter().map(|r| r[j]).collect(), initial[j]))
        .collect();
    OccupationEstimate {
        occupation,
        initial: initial.to_vec(),
    }
}

/// Estimator settings shared by every evaluation point.
#[derive(Clone, Debug)]
pub struct FitConfig {
    pub kernel: KernelSpec,
    pub schedule: BandwidthSchedule,
    pub epsilon: f64,
    /// Overrides the default horizon.
    pub horizon: Option<f64>,
}

impl FitConfig {
    pub fn new(kernel: KernelSpec) -> Self {
        let d = kernel.dim();
        FitConfig {
            kernel,
            schedule: BandwidthSchedule {
                eta: BandwidthSchedule::DEFAULT_ETA,
                d_continuous: d,
                explicit_a: None,
            },
            epsilon: DEFAULT_EPSILON,
            horizon: None,
        }
    }
}

/// Everything estimated at one evaluation point.
#[derive(Clone, Debug)]
pub struct ConditionalFit {
    pub x: EvalPoint,
    pub bandwidth: f64,
    pub weights: WeightVector,
    pub hazard: HazardEstimate,
    pub occupation: OccupationEstimate,
}

impl ConditionalFit {
    pub fn horizon(&self) -> f64 {
        self.hazard.horizon
    }
}

/// Weights, hazards and occupation probabilities at `coords`.
pub fn fit(sample: &Sample, coords: &[f64], config: &FitConfig) -> Result<ConditionalFit> {
    if coords.len() != sample.dim() {
        return Err(Error::Config(format!(
            "x has dimension {} but the data has {}",
            coords.len(),
            sample.dim()
        )));
    }
    let x = config.kernel.eval_point(coords.to_vec())?;
    let a = bandwidth(&config.schedule.for_point(&x), sample.len());
    let weights = nw_weights(sample, &x, &config.kernel, a);
    if weights.degenerate {
        return Err(Error::NoKernelMass(x.coords));
    }
    let mut hazard = nelson_aalen_weighted(sample, &weights, config.epsilon)?;
    if let Some(theta) = config.horizon {
        hazard.horizon = theta;
    }
    let occupation = aalen_johansen(&hazard, &hazard.initial.clone());
    Ok(ConditionalFit {
        x,
        bandwidth: a,
        weights,
        hazard,
        occupation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Jump, ObservedPath, StateSpace};

    fn path(init: i64, jumps: &[(f64, i64)], end: f64, reason: EndReason) -> ObservedPath {
        ObservedPath {
            id: "s".into(),
            covariates: vec![0.0],
            initial_state: init,
            jumps: jumps.iter().map(|&(time, to_state)| Jump { time, to_state }).collect(),
            end_time: end,
            end_reason: reason,
        }
    }

    fn two_state(paths: Vec<ObservedPath>) -> Sample {
        let paths = paths
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                p.id = format!("s{i}");
                p
            })
            .collect();
        Sample::new(StateSpace::new(vec![1, 2], vec![2]).unwrap(), paths).unwrap()
    }

    #[test]
    fn counts_single_path() {
        let s = two_state(vec![path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed)]);
        let n = estimate_counts(&s, &WeightVector::uniform(1));
        let n12 = n.entry(0, 1);
        assert_eq!(n12.at(0.999), 0.0);
        assert_eq!(n12.at(1.0), 1.0);
        let cens = two_state(vec![path(1, &[], 0.5, EndReason::Censored)]);
        let n = estimate_counts(&cens, &WeightVector::uniform(1));
        assert_eq!(n.entry(0, 1).at(10.0), 0.0);
    }

    #[test]
    fn counts_two_paths() {
        let s = two_state(vec![
            path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
            path(1, &[(2.0, 2)], 2.0, EndReason::Absorbed),
        ]);
        let n12 = estimate_counts(&s, &WeightVector::uniform(2)).entry(0, 1);
        assert_eq!(n12.at(1.0), 0.5);
        assert_eq!(n12.at(2.0), 1.0);
    }

    #[test]
    fn censoring_curves() {
        let abs = two_state(vec![path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed)]);
        let c = estimate_censoring(&abs, &WeightVector::uniform(1));
        assert!(c.iter().all(|cj| cj.values.iter().all(|&v| v == 0.0)));
        let s = Sample::new(
            StateSpace::new(vec![1, 2, 3], vec![3]).unwrap(),
            vec![path(1, &[(1.0, 2)], 3.0, EndReason::Censored)],
        )
        .unwrap();
        let c = estimate_censoring(&s, &WeightVector::uniform(1));
        assert_eq!(c[1].at(2.9), 0.0);
        assert_eq!(c[1].at(3.0), 1.0);
        assert_eq!(c[0].at(5.0), 0.0);
        assert_eq!(c[2].at(5.0), 0.0);
    }

    #[test]
    fn exposure_examples() {
        let s = two_state(vec![path(1, &[], 3.0, EndReason::Censored)]);
        let w = WeightVector::uniform(1);
        let e = estimate_exposure(&estimate_counts(&s, &w), &estimate_censoring(&s, &w), &initial_occupation(&s, &w));
        assert_eq!(e[0].at(2.0), 1.0);
        assert_eq!(e[0].at(3.0), 0.0);

        let s = two_state(vec![path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed)]);
        let e = estimate_exposure(&estimate_counts(&s, &w), &estimate_censoring(&s, &w), &initial_occupation(&s, &w));
        assert_eq!(e[0].at(0.5), 1.0);
        assert_eq!(e[0].at(1.0), 0.0);
        assert_eq!(e[1].at(1.0), 1.0);
        assert_eq!(e[1].at(100.0), 1.0);
    }

    #[test]
    fn nelson_aalen_examples() {
        let s = two_state(vec![path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed)]);
        let h = nelson_aalen_weighted(&s, &WeightVector::uniform(1), 0.01).unwrap();
        assert_eq!(h.hazard.at(1.0)[(0, 1)], 1.0);
        assert_eq!(h.hazard.at(1.0)[(0, 0)], -1.0);

        let s = two_state(vec![
            path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
            path(1, &[], 3.0, EndReason::Censored),
        ]);
        let h = nelson_aalen_weighted(&s, &WeightVector::uniform(2), 0.01).unwrap();
        assert_eq!(h.hazard.at(1.0)[(0, 1)], 0.5);
        assert!(h.floor_active.iter().all(Vec::is_empty));
    }

    #[test]
    fn epsilon_floor_engages() {
        // Weight 0.005 on the path that jumps, the rest on a path in state 2.
        let s = two_state(vec![
            path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
            path(2, &[], 3.0, EndReason::Censored),
        ]);
        let w = WeightVector {
            weights: vec![0.005, 0.995],
            density_value: 1.0,
            degenerate: false,
        };
        let h = nelson_aalen_weighted(&s, &w, 0.01).unwrap();
        assert!((h.hazard.at(1.0)[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(h.floor_active[0], vec![1.0]);
    }

    #[test]
    fn rejects_bad_epsilon_and_empty_window() {
        let s = two_state(vec![path(1, &[], 3.0, EndReason::Censored)]);
        assert!(nelson_aalen_weighted(&s, &WeightVector::uniform(1), 0.0).is_err());
        let spec = KernelSpec::uniform_kind(crate::kernels::KernelKind::Epanechnikov, 1);
        let sched = BandwidthSchedule::fixed(0.1).unwrap();
        let err = nelson_aalen(&s, &EvalPoint::continuous(vec![5.0]), &spec, &sched, 1e-4).unwrap_err();
        assert!(matches!(err, Error::NoKernelMass(_)));
    }

    #[test]
    fn product_integral_examples() {
        let zero = StepMatrix::from_increments(vec![1.0], vec![DMatrix::zeros(2, 2)], DMatrix::zeros(2, 2));
        assert_eq!(product_integral(&zero, 0.0, 2.0), DMatrix::identity(2, 2));
        let inc = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.0, 0.0]);
        let h = StepMatrix::from_increments(vec![1.0], vec![inc], DMatrix::zeros(2, 2));
        assert_eq!(
            product_integral(&h, 0.0, 2.0),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0])
        );
        assert_eq!(product_integral(&h, 1.0, 2.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn recursion_examples() {
        let s = two_state(vec![path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed)]);
        let h = nelson_aalen_weighted(&s, &WeightVector::uniform(1), 1e-4).unwrap();
        let p = aalen_johansen(&h, &[1.0, 0.0]);
        assert_eq!(p.at(0.5), vec![1.0, 0.0]);
        assert_eq!(p.at(1.0), vec![0.0, 1.0]);

        let s = two_state(vec![
            path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
            path(1, &[], 3.0, EndReason::Censored),
        ]);
        let h = nelson_aalen_weighted(&s, &WeightVector::uniform(2), 1e-4).unwrap();
        let p = aalen_johansen(&h, &[1.0, 0.0]);
        assert_eq!(p.at(1.0), vec![0.5, 0.5]);
        assert_eq!(p.at(5.0), vec![0.5, 0.5]);
    }

    #[test]
    fn default_horizon_is_last_censoring() {
        let s = two_state(vec![
            path(1, &[(1.0, 2)], 1.0, EndReason::Absorbed),
            path(1, &[], 3.0, EndReason::Censored),
            path(1, &[(4.0, 2)], 4.0, EndReason::Absorbed),
        ]);
        let h = nelson_aalen_weighted(&s, &WeightVector::uniform(3), 1e-4).unwrap();
        assert_eq!(h.horizon, 3.0);
    }
}
