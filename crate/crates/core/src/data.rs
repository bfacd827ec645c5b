//! Right-censored multi-state samples.
//!
//! A [`Sample`] is a list of [`ObservedPath`]s sharing one [`StateSpace`].
//! Each path carries a fixed covariate vector, its initial state, the
//! time-ordered jumps seen before observation stopped, and why it stopped:
//! either censoring at `end_time`, or absorption at its final jump.
//!
//! Samples are exchanged as long-format CSV, one row per observed state
//! entry:
//!
//! ```text
//! id,time,state,end,x1,x2
//! a,0,1,,0.25,1
//! a,1.5,2,,,
//! a,3,2,1,,
//! b,0,1,,0.75,0
//! b,0.5,3,0,,
//! ```
//!
//! The first row of every subject sits at time 0 and holds the covariates.
//! The last row carries the `end` flag: `1` when the subject was censored at
//! that time, `0` when the row records absorption.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::fmt_f64;

/// State label as it appears in data files.
pub type State = i64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    states: Vec<State>,
    absorbing: Vec<State>,
}

impl StateSpace {
    pub fn new(states: Vec<State>, absorbing: Vec<State>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Validation(
                "state space needs at least 2 states".into(),
            ));
        }
        let mut seen = states.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != states.len() {
            return Err(Error::Validation("state labels must be distinct".into()));
        }
        if let Some(bad) = absorbing.iter().find(|a| !states.contains(a)) {
            return Err(Error::Validation(format!(
                "absorbing state {bad} is not in the state space"
            )));
        }
        let mut absorbing = absorbing;
        absorbing.sort_unstable();
        absorbing.dedup();
        Ok(StateSpace { states, absorbing })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn absorbing(&self) -> &[State] {
        &self.absorbing
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Position of `label` in the ordered state list.
    pub fn index_of(&self, label: State) -> Option<usize> {
        self.states.iter().position(|&s| s == label)
    }

    pub fn label(&self, index: usize) -> State {
        self.states[index]
    }

    pub fn is_absorbing(&self, label: State) -> bool {
        self.absorbing.contains(&label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Censored,
    Absorbed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub to_state: State,
}

/// One subject: covariates, initial state, jumps up to `end_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedPath {
    pub id: String,
    pub covariates: Vec<f64>,
    pub initial_state: State,
    pub jumps: Vec<Jump>,
    pub end_time: f64,
    pub end_reason: EndReason,
}

impl ObservedPath {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> State {
        let held = self.jumps.partition_point(|j| j.time <= t);
        if held == 0 {
            self.initial_state
        } else {
            self.jumps[held - 1].to_state
        }
    }

    /// Left limit `Z_{t-}`.
    pub fn state_before(&self, t: f64) -> State {
        let held = self.jumps.partition_point(|j| j.time < t);
        if held == 0 {
            self.initial_state
        } else {
            self.jumps[held - 1].to_state
        }
    }

    /// Censoring time `R`, when the path was censored.
    pub fn censoring_time(&self) -> Option<f64> {
        match self.end_reason {
            EndReason::Censored => Some(self.end_time),
            EndReason::Absorbed => None,
        }
    }

    /// `1{t < R}`. Absorbed paths are known for all later times.
    pub fn observed_at(&self, t: f64) -> bool {
        match self.end_reason {
            EndReason::Censored => t < self.end_time,
            EndReason::Absorbed => true,
        }
    }

    /// `1{t <= R}`: the path is still observed just before `t`.
    pub fn observed_before(&self, t: f64) -> bool {
        match self.end_reason {
            EndReason::Censored => t <= self.end_time,
            EndReason::Absorbed => true,
        }
    }

    pub fn final_state(&self) -> State {
        self.jumps.last().map_or(self.initial_state, |j| j.to_state)
    }
}

/// Immutable collection of paths over one state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    state_space: StateSpace,
    paths: Vec<ObservedPath>,
}

impl Sample {
    /// Builds a sample, rejecting it if [`validate`] reports anything.
    pub fn new(state_space: StateSpace, paths: Vec<ObservedPath>) -> Result<Self> {
        let sample = Sample { state_space, paths };
        let violations = validate(&sample);
        if let Some(first) = violations.first() {
            return Err(Error::Validation(if violations.len() == 1 {
                first.to_string()
            } else {
                format!("{first} (and {} more)", violations.len() - 1)
            }));
        }
        Ok(sample)
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.state_space
    }

    pub fn paths(&self) -> &[ObservedPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.paths.first().map_or(0, |p| p.covariates.len())
    }

    /// Sub-sample of the paths selected by `keep`, same state space.
    pub fn filter(&self, mut keep: impl FnMut(&ObservedPath) -> bool) -> Result<Sample> {
        let paths: Vec<_> = self.paths.iter().filter(|p| keep(p)).cloned().collect();
        Sample::new(self.state_space.clone(), paths)
    }
}

/// Evaluation point `x`, with a flag per coordinate marking declared atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub coords: Vec<f64>,
    pub atom_flags: Vec<bool>,
}

impl EvalPoint {
    pub fn continuous(coords: Vec<f64>) -> Self {
        let atom_flags = vec![false; coords.len()];
        EvalPoint { coords, atom_flags }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn continuous_dims(&self) -> usize {
        self.atom_flags.iter().filter(|a| !**a).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {}: {}", self.subject, self.message)
    }
}

/// Checks every path invariant and returns the violations found.
pub fn validate(sample: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    let space = &sample.state_space;
    let mut push = |subject: &str, message: String| {
        out.push(Violation {
            subject: subject.to_string(),
            message,
        })
    };
    if sample.paths.is_empty() {
        push("-", "no subjects".into());
        return out;
    }
    let d = sample.paths[0].covariates.len();
    for p in &sample.paths {
        let id = p.id.as_str();
        if p.covariates.len() != d {
            push(
                id,
                format!("covariate dimension {} differs from {d}", p.covariates.len()),
            );
        }
        if p.covariates.iter().any(|c| !c.is_finite()) {
            push(id, "non-finite covariate".into());
        }
        if !(p.end_time > 0.0) || !p.end_time.is_finite() {
            push(id, format!("end time {} must be positive", p.end_time));
        }
        if space.index_of(p.initial_state).is_none() {
            push(id, format!("unknown initial state {}", p.initial_state));
        }
        let mut prev_time = 0.0;
        let mut prev_state = p.initial_state;
        for j in &p.jumps {
            if !(j.time > prev_time) || !j.time.is_finite() {
                push(
                    id,
                    format!("jump times must be positive and strictly increasing (got {} after {prev_time})", j.time),
                );
            }
            if j.time > p.end_time {
                push(
                    id,
                    format!("jump at {} after end time {}", j.time, p.end_time),
                );
            }
            if space.index_of(j.to_state).is_none() {
                push(id, format!("unknown state {}", j.to_state));
            }
            if j.to_state == prev_state {
                push(id, format!("jump at {} does not change state", j.time));
            }
            if space.is_absorbing(prev_state) {
                push(id, format!("jump at {} leaves absorbing state {prev_state}", j.time));
            }
            prev_time = j.time;
            prev_state = j.to_state;
        }
        if p.end_reason == EndReason::Absorbed {
            if !space.is_absorbing(prev_state) {
                push(
                    id,
                    format!("absorbed path ends in non-absorbing state {prev_state}"),
                );
            }
            match p.jumps.last() {
                Some(last) if last.time == p.end_time => {}
                _ => push(id, "absorbed path must end at its absorbing jump".into()),
            }
        }
    }
    out
}

/// One counting-process increment: a jump `from -> to` at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub from: State,
    pub to: State,
}

/// Every observed jump with the state held just before it.
pub fn counting_increments(path: &ObservedPath) -> Vec<Transition> {
    let mut from = path.initial_state;
    path.jumps
        .iter()
        .map(|j| {
            let t = Transition {
                time: j.time,
                from,
                to: j.to_state,
            };
            from = j.to_state;
            t
        })
        .collect()
}

/// Column names for long-format CSV.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub state: String,
    pub end: String,
    /// Covariate columns are `<prefix>1 .. <prefix>d`.
    pub covariate_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            id: "id".into(),
            time: "time".into(),
            state: "state".into(),
            end: "end".into(),
            covariate_prefix: "x".into(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub schema: CsvSchema,
    /// When absent, the states are the labels seen in the file and the
    /// absorbing set is the final states of absorbed subjects.
    pub state_space: Option<StateSpace>,
}

pub fn load_sample(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Sample> {
    let file = std::fs::File::open(path)?;
    read_sample(file, options)
}

struct Row {
    line: u64,
    time: f64,
    state: State,
    end: Option<bool>,
    covariates: Vec<Option<f64>>,
}

pub fn read_sample<R: Read>(reader: R, options: &LoadOptions) -> Result<Sample> {
    let schema = &options.schema;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().all(str::is_empty) {
        return Err(Error::NoSubjects);
    }
    let column = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let id_col = column(&schema.id)?;
    let time_col = column(&schema.time)?;
    let state_col = column(&schema.state)?;
    let end_col = column(&schema.end)?;

    let mut cov_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| {
            h.strip_prefix(schema.covariate_prefix.as_str())
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|k| (k, col))
        })
        .collect();
    cov_cols.sort_unstable();
    for (expected, (k, _)) in (1..).zip(&cov_cols) {
        if *k != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "covariate columns must be {p}1..{p}d without gaps",
                    p = schema.covariate_prefix
                ),
            });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| record.get(col).unwrap_or("");
        let parse_err = |what: &str, raw: &str| Error::Parse {
            line,
            message: format!("cannot parse {what} '{raw}'"),
        };
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty id".into(),
            });
        }
        let time: f64 = field(time_col)
            .parse()
            .map_err(|_| parse_err("time", field(time_col)))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_err("time", field(time_col)));
        }
        let state: State = field(state_col)
            .parse()
            .map_err(|_| parse_err("state", field(state_col)))?;
        let end = match field(end_col) {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(parse_err("end flag", other)),
        };
        let covariates = cov_cols
            .iter()
            .map(|&(_, col)| match field(col) {
                "" => Ok(None),
                raw => raw.parse::<f64>().map(Some).map_err(|_| parse_err("covariate", raw)),
            })
            .collect::<Result<Vec<_>>>()?;
        let row = Row {
            line,
            time,
            state,
            end,
            covariates,
        };
        match groups.get_mut(&id) {
            Some(rows) => rows.push(row),
            None => {
                order.push(id.clone());
                groups.insert(id, vec![row]);
            }
        }
    }
    if order.is_empty() {
        return Err(Error::NoSubjects);
    }

    let mut paths = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped id");
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        paths.push(build_path(id, rows)?);
    }

    let state_space = match &options.state_space {
        Some(space) => {
            for p in &paths {
                let labels =
                    std::iter::once(p.initial_state).chain(p.jumps.iter().map(|j| j.to_state));
                for label in labels {
                    if space.index_of(label).is_none() {
                        return Err(Error::UnknownState {
                            id: p.id.clone(),
                            label,
                        });
                    }
                }
            }
            space.clone()
        }
        None => infer_state_space(&paths)?,
    };
    Sample::new(state_space, paths)
}

fn build_path(id: String, rows: Vec<Row>) -> Result<ObservedPath> {
    for pair in rows.windows(2) {
        if pair[0].time == pair[1].time {
            return Err(Error::DuplicateTime {
                id,
                time: pair[1].time,
            });
        }
    }
    let first = &rows[0];
    if first.time != 0.0 {
        return Err(Error::Validation(format!(
            "subject {id}: first row (line {}) must be at time 0",
            first.line
        )));
    }
    let covariates = first
        .covariates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| Error::Parse {
                line: first.line,
                message: format!("subject {id}: missing covariate x{}", i + 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last_index = rows.len() - 1;
    let mut jumps = Vec::new();
    let mut current = first.state;
    let mut end = None;
    for (i, row) in rows.iter().enumerate() {
        for (k, c) in row.covariates.iter().enumerate() {
            if let Some(v) = c {
                if *v != covariates[k] {
                    return Err(Error::Parse {
                        line: row.line,
                        message: format!("subject {id}: covariate x{} changes over time", k + 1),
                    });
                }
            }
        }
        if i < last_index && row.end == Some(true) {
            return Err(Error::Parse {
                line: row.line,
                message: format!("subject {id}: end flag on a non-terminal row"),
            });
        }
        if i == 0 {
            continue;
        }
        if row.state != current {
            jumps.push(Jump {
                time: row.time,
                to_state: row.state,
            });
            current = row.state;
        } else if i < last_index {
            return Err(Error::Validation(format!(
                "subject {id}: row at line {} repeats state {current}",
                row.line
            )));
        }
        if i == last_index {
            end = row.end;
        }
    }
    let last = &rows[last_index];
    let censored = match end {
        Some(flag) => flag,
        None if rows.len() == 1 => true,
        None => {
            return Err(Error::Parse {
                line: last.line,
                message: format!("subject {id}: terminal row needs an end flag (0 or 1)"),
            })
        }
    };
    Ok(ObservedPath {
        id,
        covariates,
        initial_state: first.state,
        jumps,
        end_time: last.time,
        end_reason: if censored {
            EndReason::Censored
        } else {
            EndReason::Absorbed
        },
    })
}

fn infer_state_space(paths: &[ObservedPath]) -> Result<StateSpace> {
    let mut states: Vec<State> = paths
        .iter()
        .flat_map(|p| std::iter::once(p.initial_state).chain(p.jumps.iter().map(|j| j.to_state)))
        .collect();
    states.sort_unstable();
    states.dedup();
    let absorbing: Vec<State> = paths
        .iter()
        .filter(|p| p.end_reason == EndReason::Absorbed)
        .map(|p| p.final_state())
        .collect();
    StateSpace::new(states, absorbing)
}

/// Writes `sample` in the long format read by [`read_sample`].
pub fn write_sample<W: Write>(sample: &Sample, writer: W) -> Result<()> {
    let d = sample.dim();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".into(), "state".into(), "end".into()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    let blank = vec![String::new(); d];
    for p in sample.paths() {
        let covs: Vec<String> = p.covariates.iter().map(|&c| fmt_f64(c)).collect();
        let n_jumps = p.jumps.len();
        let censored = p.end_reason == EndReason::Censored;
        let marker_row = censored && p.jumps.last().is_none_or(|j| j.time < p.end_time);
        let mut row = vec![p.id.clone(), fmt_f64(0.0), p.initial_state.to_string(), String::new()];
        row.extend(covs);
        wtr.write_record(&row)?;
        for (i, j) in p.jumps.iter().enumerate() {
            let end = if i + 1 == n_jumps && !marker_row {
                if censored { "1" } else { "0" }
            } else {
                ""
            };
            let mut row = vec![p.id.clone(), fmt_f64(j.time), j.to_state.to_string(), end.into()];
            row.extend(blank.iter().cloned());
            wtr.write_record(&row)?;
        }
        if marker_row {
            let mut row = vec![
                p.id.clone(),
                fmt_f64(p.end_time),
                p.final_state().to_string(),
                "1".into(),
            ];
            row.extend(blank.iter().cloned());
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(id: &str, init: State, jumps: &[(f64, State)], end: f64, reason: EndReason) -> ObservedPath {
        ObservedPath {
            id: id.into(),
            covariates: vec![0.5],
            initial_state: init,
            jumps: jumps
                .iter()
                .map(|&(time, to_state)| Jump { time, to_state })
                .collect(),
            end_time: end,
            end_reason: reason,
        }
    }

    fn space() -> StateSpace {
        StateSpace::new(vec![1, 2, 3], vec![3]).unwrap()
    }

    #[test]
    fn increments_follow_jumps() {
        let p = path("a", 1, &[(1.0, 2), (2.5, 3)], 2.5, EndReason::Absorbed);
        let inc = counting_increments(&p);
        assert_eq!(
            inc,
            vec![
                Transition { time: 1.0, from: 1, to: 2 },
                Transition { time: 2.5, from: 2, to: 3 },
            ]
        );
        let still = path("b", 1, &[], 4.0, EndReason::Censored);
        assert!(counting_increments(&still).is_empty());
    }

    #[test]
    fn increments_back_and_forth() {
        let p = path("a", 1, &[(0.5, 2), (0.9, 1), (1.4, 2)], 2.0, EndReason::Censored);
        let inc = counting_increments(&p);
        let n12: Vec<f64> = inc.iter().filter(|t| t.from == 1 && t.to == 2).map(|t| t.time).collect();
        let n21: Vec<f64> = inc.iter().filter(|t| t.from == 2 && t.to == 1).map(|t| t.time).collect();
        assert_eq!(n12, vec![0.5, 1.4]);
        assert_eq!(n21, vec![0.9]);
    }

    #[test]
    fn validate_reports_each_problem() {
        let ok = Sample {
            state_space: space(),
            paths: vec![path("a", 1, &[(1.0, 2)], 3.0, EndReason::Censored)],
        };
        assert!(validate(&ok).is_empty());

        let late = Sample {
            state_space: space(),
            paths: vec![path("late", 1, &[(4.0, 2)], 3.0, EndReason::Censored)],
        };
        let v = validate(&late);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "late");

        let not_absorbing = Sample {
            state_space: space(),
            paths: vec![path("na", 1, &[(1.0, 2)], 1.0, EndReason::Absorbed)],
        };
        let v = validate(&not_absorbing);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("non-absorbing"));
    }

    #[test]
    fn state_space_rules() {
        assert!(StateSpace::new(vec![1], vec![]).is_err());
        assert!(StateSpace::new(vec![1, 1], vec![]).is_err());
        assert!(StateSpace::new(vec![1, 2], vec![3]).is_err());
    }

    #[test]
    fn state_queries() {
        let p = path("a", 1, &[(1.0, 2), (2.0, 3)], 2.0, EndReason::Absorbed);
        assert_eq!(p.state_at(0.5), 1);
        assert_eq!(p.state_at(1.0), 2);
        assert_eq!(p.state_before(1.0), 1);
        assert_eq!(p.state_before(1.5), 2);
        assert!(p.observed_at(100.0));
        let c = path("c", 1, &[], 3.0, EndReason::Censored);
        assert!(c.observed_at(2.9));
        assert!(!c.observed_at(3.0));
        assert!(c.observed_before(3.0));
    }
}
