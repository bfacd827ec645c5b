//! Kernels, bandwidths and Nadaraya-Watson weights.
//!
//! Weights use a product kernel that mixes smoothing with exact matching:
//! a coordinate of `x` that is a declared atom only matches subjects with the
//! same value, while a continuous coordinate is smoothed with the dimension's
//! kernel and ignores subjects sitting on an atom.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{EvalPoint, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Epanechnikov,
    Triangular,
    Uniform,
}

impl KernelKind {
    /// Kernel value; all kernels are supported on `[-1, 1]`.
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelKind::Triangular => 1.0 - a,
            KernelKind::Uniform => 0.5,
        }
    }

    /// Closed-form `∫ K(u)^2 du`.
    pub fn squared_integral(self) -> f64 {
        match self {
            KernelKind::Epanechnikov => 0.6,
            KernelKind::Triangular => 2.0 / 3.0,
            KernelKind::Uniform => 0.5,
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "triangular" => Ok(KernelKind::Triangular),
            "uniform" => Ok(KernelKind::Uniform),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Per-dimension kernel and sorted atom set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernels: Vec<KernelKind>,
    pub atoms: Vec<Vec<f64>>,
}

impl KernelSpec {
    /// `d` dimensions, one kernel everywhere, no atoms.
    pub fn uniform_kind(kind: KernelKind, d: usize) -> Self {
        KernelSpec {
            kernels: vec![kind; d],
            atoms: vec![Vec::new(); d],
        }
    }

    pub fn with_atoms(mut self, dim: usize, mut atoms: Vec<f64>) -> Self {
        atoms.sort_by(f64::total_cmp);
        atoms.dedup();
        self.atoms[dim] = atoms;
        self
    }

    pub fn dim(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_atom(&self, dim: usize, value: f64) -> bool {
        self.atoms[dim].binary_search_by(|a| a.total_cmp(&value)).is_ok()
    }

    /// Builds the evaluation point, flagging coordinates that are atoms.
    pub fn eval_point(&self, coords: Vec<f64>) -> Result<EvalPoint> {
        if coords.len() != self.dim() {
            return Err(Error::Config(format!(
                "x has dimension {} but the kernel has {}",
                coords.len(),
                self.dim()
            )));
        }
        let atom_flags = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| self.is_atom(i, c))
            .collect();
        Ok(EvalPoint { coords, atom_flags })
    }
}

pub fn kernel_eval(spec: &KernelSpec, dim: usize, u: f64) -> f64 {
    spec.kernels[dim].eval(u)
}

/// Deterministic band sequence `a_n^{d_c} = log(n) / n^{1-eta}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    pub eta: f64,
    pub d_continuous: usize,
    pub explicit_a: Option<f64>,
}

impl BandwidthSchedule {
    pub const DEFAULT_ETA: f64 = 0.75;

    pub fn new(eta: f64, d_continuous: usize) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(BandwidthSchedule {
            eta,
            d_continuous,
            explicit_a: None,
        })
    }

    pub fn fixed(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Config(format!("bandwidth must be positive, got {a}")));
        }
        Ok(BandwidthSchedule {
            eta: Self::DEFAULT_ETA,
            d_continuous: 1,
            explicit_a: Some(a),
        })
    }

    /// Same rule, re-targeted at the continuous coordinates of `x`.
    pub fn for_point(&self, x: &EvalPoint) -> Self {
        BandwidthSchedule {
            d_continuous: x.continuous_dims(),
            ..self.clone()
        }
    }
}

/// `a_n` for sample size `n`. With no continuous coordinates the kernel
/// reduces to atom matching and the sentinel 1 is returned.
pub fn bandwidth(schedule: &BandwidthSchedule, n: usize) -> f64 {
    if let Some(a) = schedule.explicit_a {
        return a;
    }
    if schedule.d_continuous == 0 {
        return 1.0;
    }
    let n = n.max(2) as f64;
    let rate = n.ln() / n.powf(1.0 - schedule.eta);
    rate.powf(1.0 / schedule.d_continuous as f64)
}

/// Normalised kernel weights at one evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Kernel density estimate `g^(n)(x)`.
    pub density_value: f64,
    pub degenerate: bool,
}

impl WeightVector {
    /// Indices of paths carrying positive weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Equal weights, as used by the unconditional estimators.
    pub fn uniform(n: usize) -> Self {
        WeightVector {
            weights: vec![1.0 / n as f64; n],
            density_value: 1.0,
            degenerate: n == 0,
        }
    }
}

/// Per-path kernel factor `g^(n,l)(x)`.
pub fn kernel_factor(covariates: &[f64], x: &EvalPoint, spec: &KernelSpec, a: f64) -> f64 {
    let mut factor = 1.0;
    for i in 0..x.dim() {
        let xi = x.coords[i];
        let ci = covariates[i];
        if x.atom_flags[i] {
            if ci != xi {
                return 0.0;
            }
        } else {
            if spec.is_atom(i, ci) {
                return 0.0;
            }
            factor *= spec.kernels[i].eval((xi - ci) / a) / a;
            if factor == 0.0 {
                return 0.0;
            }
        }
    }
    factor
}

pub fn nw_weights(sample: &Sample, x: &EvalPoint, spec: &KernelSpec, a: f64) -> WeightVector {
    assert!(a > 0.0, "bandwidth must be positive");
    let factors: Vec<f64> = sample
        .paths()
        .iter()
        .map(|p| kernel_factor(&p.covariates, x, spec, a))
        .collect();
    let total: f64 = factors.iter().sum();
    let n = factors.len() as f64;
    if !(total > 0.0) {
        return WeightVector {
            weights: vec![0.0; factors.len()],
            density_value: 0.0,
            degenerate: true,
        };
    }
    WeightVector {
        weights: factors.iter().map(|f| f / total).collect(),
        density_value: total / n,
        degenerate: false,
    }
}

/// `φ̃ = Π_i ∫K_i² / g^(n)(x)` over every dimension of `spec`.
pub fn phi_estimate(spec: &KernelSpec, density_value: f64) -> Result<f64> {
    if !(density_value > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    let num: f64 = spec.kernels.iter().map(|k| k.squared_integral()).product();
    Ok(num / density_value)
}

/// As [`phi_estimate`], but only the continuous coordinates of `x` carry a
/// kernel; atom coordinates contribute a factor of one.
pub fn phi_estimate_at(spec: &KernelSpec, x: &EvalPoint, density_value: f64) -> Result<f64> {
    if !(density_value > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    let num: f64 = spec
        .kernels
        .iter()
        .zip(&x.atom_flags)
        .filter(|(_, atom)| !**atom)
        .map(|(k, _)| k.squared_integral())
        .product();
    Ok(num / density_value)
}
