//! Right-continuous piecewise-constant functions on an event-time grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Càdlàg step function: `initial_value` on `[0, t_1)`, `values[i]` on
/// `[t_i, t_{i+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub initial_value: f64,
}

impl StepCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, initial_value: f64) -> Self {
        debug_assert_eq!(times.len(), values.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        StepCurve {
            times,
            values,
            initial_value,
        }
    }

    pub fn constant(times: Vec<f64>, value: f64) -> Self {
        let values = vec![value; times.len()];
        StepCurve::new(times, values, value)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at `t`.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial_value,
            i => self.values[i - 1],
        }
    }

    /// Left limit at `t`.
    pub fn before(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => self.initial_value,
            i => self.values[i - 1],
        }
    }

    /// Left limit at the `i`-th grid time.
    pub fn before_index(&self, i: usize) -> f64 {
        if i == 0 {
            self.initial_value
        } else {
            self.values[i - 1]
        }
    }

    /// Jump at the `i`-th grid time.
    pub fn jump(&self, i: usize) -> f64 {
        self.values[i] - self.before_index(i)
    }
}

/// Matrix-valued step function. Stores both the per-time increments and
/// the running cumulative values.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMatrix {
    pub times: Vec<f64>,
    pub increments: Vec<DMatrix<f64>>,
    pub values: Vec<DMatrix<f64>>,
    pub initial: DMatrix<f64>,
}

impl StepMatrix {
    pub fn from_increments(times: Vec<f64>, increments: Vec<DMatrix<f64>>, initial: DMatrix<f64>) -> Self {
        debug_assert_eq!(times.len(), increments.len());
        let mut values = Vec::with_capacity(increments.len());
        let mut acc = initial.clone();
        for inc in &increments {
            acc += inc;
            values.push(acc.clone());
        }
        StepMatrix {
            times,
            increments,
            values,
            initial,
        }
    }

    pub fn dim(&self) -> usize {
        self.initial.nrows()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn at(&self, t: f64) -> &DMatrix<f64> {
        match self.times.partition_point(|&s| s <= t) {
            0 => &self.initial,
            i => &self.values[i - 1],
        }
    }

    /// Scalar curve of entry `(j, k)`.
    pub fn entry(&self, j: usize, k: usize) -> StepCurve {
        StepCurve::new(
            self.times.clone(),
            self.values.iter().map(|m| m[(j, k)]).collect(),
            self.initial[(j, k)],
        )
    }
}

/// Union of several sorted grids, duplicates removed.
pub fn merge_grids<'a>(grids: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut out: Vec<f64> = grids.into_iter().flatten().copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}
