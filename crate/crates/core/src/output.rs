//! CSV and JSON serialisation of fitted curves and covariance surfaces.
//!
//! Numbers in CSV output carry 17 significant digits, which round-trips
//! every `f64` exactly.

use std::io::Write;

use serde::Serialize;

use crate::covariance::CovarianceSurface;
use crate::data::{State, StateSpace};
use crate::error::Result;
use crate::estimators::ConditionalFit;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Structurally present transitions: pairs with a non-zero count somewhere.
fn active_pairs(fit: &ConditionalFit) -> Vec<(usize, usize)> {
    let m = fit.hazard.initial.len();
    let last = fit.hazard.counts.values.last();
    let mut out = Vec::new();
    for j in 0..m {
        for k in (0..m).filter(|&k| k != j) {
            if last.is_some_and(|n| n[(j, k)] > 0.0) {
                out.push((j, k));
            }
        }
    }
    out
}

fn keep(t: f64, limit: Option<f64>) -> bool {
    limit.is_none_or(|theta| t <= theta)
}

/// Long-format hazard table `time,quantity,j,k,value`: cumulative hazards
/// and counts per active transition, exposure per state (`k = j`).
pub fn write_hazard_csv<W: Write>(
    fit: &ConditionalFit,
    space: &StateSpace,
    limit: Option<f64>,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["time", "quantity", "j", "k", "value"])?;
    let pairs = active_pairs(fit);
    let h = &fit.hazard;
    let m = h.initial.len();
    let mut row = |t: f64, q: &str, j: State, k: State, v: f64| {
        wtr.write_record([fmt_f64(t), q.to_string(), j.to_string(), k.to_string(), fmt_f64(v)])
    };
    for j in 0..m {
        row(0.0, "exposure", space.label(j), space.label(j), h.initial[j])?;
    }
    for (i, &t) in h.times().iter().enumerate() {
        if !keep(t, limit) {
            break;
        }
        for &(j, k) in &pairs {
            let (lj, lk) = (space.label(j), space.label(k));
            row(t, "cumulative_hazard", lj, lk, h.hazard.values[i][(j, k)])?;
            row(t, "count", lj, lk, h.counts.values[i][(j, k)])?;
        }
        for j in 0..m {
            row(t, "exposure", space.label(j), space.label(j), h.exposure[j].values[i])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Occupation table `time,j,value`, starting with the time-0 row.
pub fn write_occupation_csv<W: Write>(
    fit: &ConditionalFit,
    space: &StateSpace,
    limit: Option<f64>,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["time", "j", "value"])?;
    let occ = &fit.occupation;
    for (j, &v) in occ.initial.iter().enumerate() {
        wtr.write_record([fmt_f64(0.0), space.label(j).to_string(), fmt_f64(v)])?;
    }
    for (i, &t) in occ.times().iter().enumerate() {
        if !keep(t, limit) {
            break;
        }
        for (j, curve) in occ.occupation.iter().enumerate() {
            wtr.write_record([fmt_f64(t), space.label(j).to_string(), fmt_f64(curve.values[i])])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveJson {
    j: State,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<State>,
    initial_value: f64,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FloorJson {
    j: State,
    times: Vec<f64>,
}

#[derive(Serialize)]
struct FitJson<'a> {
    x: &'a [f64],
    atom_flags: &'a [bool],
    bandwidth: f64,
    density_value: f64,
    epsilon: f64,
    horizon: f64,
    states: &'a [State],
    times: Vec<f64>,
    beyond_horizon: Vec<bool>,
    cumulative_hazard: Vec<CurveJson>,
    counts: Vec<CurveJson>,
    exposure: Vec<CurveJson>,
    occupation: Vec<CurveJson>,
    floor_active: Vec<FloorJson>,
}

/// Full step-function representation of one fit.
pub fn write_fit_json<W: Write>(
    fit: &ConditionalFit,
    space: &StateSpace,
    limit: Option<f64>,
    writer: W,
) -> Result<()> {
    let h = &fit.hazard;
    let n_keep = h.times().iter().take_while(|&&t| keep(t, limit)).count();
    let times = h.times()[..n_keep].to_vec();
    let pairs = active_pairs(fit);
    let pair_curves = |values: &[nalgebra::DMatrix<f64>]| {
        pairs
            .iter()
            .map(|&(j, k)| CurveJson {
                j: space.label(j),
                k: Some(space.label(k)),
                initial_value: 0.0,
                values: values[..n_keep].iter().map(|m| m[(j, k)]).collect(),
            })
            .collect::<Vec<_>>()
    };
    let state_curves = |curves: &[crate::step::StepCurve]| {
        curves
            .iter()
            .enumerate()
            .map(|(j, c)| CurveJson {
                j: space.label(j),
                k: None,
                initial_value: c.initial_value,
                values: c.values[..n_keep].to_vec(),
            })
            .collect::<Vec<_>>()
    };
    let report = FitJson {
        x: &fit.x.coords,
        atom_flags: &fit.x.atom_flags,
        bandwidth: fit.bandwidth,
        density_value: fit.weights.density_value,
        epsilon: h.epsilon,
        horizon: h.horizon,
        states: space.states(),
        beyond_horizon: times.iter().map(|&t| t > h.horizon).collect(),
        times,
        cumulative_hazard: pair_curves(&h.hazard.values),
        counts: pair_curves(&h.counts.values),
        exposure: state_curves(&h.exposure),
        occupation: state_curves(&fit.occupation.occupation),
        floor_active: h
            .floor_active
            .iter()
            .enumerate()
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(j, ts)| FloorJson {
                j: space.label(j),
                times: ts.clone(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(writer, &report)?;
    Ok(())
}

/// Surface table `s,t,value` over the full grid.
pub fn write_surface_csv<W: Write>(surface: &CovarianceSurface, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["s", "t", "value"])?;
    for (a, &s) in surface.grid.iter().enumerate() {
        for (b, &t) in surface.grid.iter().enumerate() {
            wtr.write_record([fmt_f64(s), fmt_f64(t), fmt_f64(surface.values[(a, b)])])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SurfaceJson<'a> {
    label: &'a str,
    grid: &'a [f64],
    values: Vec<Vec<f64>>,
}

pub fn write_surfaces_json<W: Write>(surfaces: &[(String, CovarianceSurface)], writer: W) -> Result<()> {
    let out: Vec<SurfaceJson> = surfaces
        .iter()
        .map(|(label, s)| SurfaceJson {
            label,
            grid: &s.grid,
            values: s
                .values
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        })
        .collect();
    serde_json::to_writer_pretty(writer, &out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
