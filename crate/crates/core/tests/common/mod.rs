#![allow(dead_code)]

use condaj::data::{EndReason, Jump, ObservedPath, Sample, StateSpace};

pub fn path(x: f64, initial: i64, jumps: &[(f64, i64)], end: f64, reason: EndReason) -> ObservedPath {
    ObservedPath {
        id: String::new(),
        covariates: vec![x],
        initial_state: initial,
        jumps: jumps.iter().map(|&(time, to_state)| Jump { time, to_state }).collect(),
        end_time: end,
        end_reason: reason,
    }
}

/// Illness-death sample (1 healthy, 2 ill, 3 dead); ids are assigned here.
pub fn illness_death(paths: Vec<ObservedPath>) -> Sample {
    let paths = paths
        .into_iter()
        .enumerate()
        .map(|(i, p)| ObservedPath { id: format!("s{}", i + 1), ..p })
        .collect();
    Sample::new(StateSpace::new(vec![1, 2, 3], vec![3]).unwrap(), paths).unwrap()
}

pub fn survival(paths: Vec<ObservedPath>) -> Sample {
    let paths = paths
        .into_iter()
        .enumerate()
        .map(|(i, p)| ObservedPath { id: format!("s{}", i + 1), ..p })
        .collect();
    Sample::new(StateSpace::new(vec![1, 2], vec![2]).unwrap(), paths).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
