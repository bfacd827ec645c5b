//! JSON scenario files.
//!
//! ```json
//! {
//!   "kind": "markov",
//!   "states": [1, 2, 3],
//!   "absorbing": [3],
//!   "initial_state": 1,
//!   "transitions": [
//!     { "from": 1, "to": 2, "rate": "0.5 * (1 + x)" },
//!     { "from": 1, "to": 3, "rate": "0.2 * (1 + x)" },
//!     { "from": 2, "to": 3, "rate": "0.6 * (1 + x)" }
//!   ],
//!   "covariates": [{ "law": "uniform", "low": 0, "high": 1 }],
//!   "censoring": { "law": "exponential", "rate": "0.3" },
//!   "n": 500,
//!   "seed": 1
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CensoringSpec, IntensitySpec, MarginalLaw, ProcessKind, RateFn, TransitionRate};
use crate::data::{State, StateSpace};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionJson {
    pub from: State,
    pub to: State,
    pub rate: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CensoringJson {
    Exponential { rate: String },
    Uniform { low: f64, high: f64 },
    Fixed { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ProcessKind,
    pub states: Vec<State>,
    #[serde(default)]
    pub absorbing: Vec<State>,
    pub initial_state: State,
    pub transitions: Vec<TransitionJson>,
    #[serde(default)]
    pub covariates: Vec<MarginalLaw>,
    pub censoring: CensoringJson,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Illness-death scenario matching [`super::default_intensity`] and
    /// [`super::default_censoring`].
    pub fn illness_death(n: usize, seed: u64) -> Self {
        let tr = |from, to, base: f64| TransitionJson {
            from,
            to,
            rate: format!("{base} * (1 + x)"),
        };
        Scenario {
            kind: ProcessKind::Markov,
            states: vec![1, 2, 3],
            absorbing: vec![3],
            initial_state: 1,
            transitions: vec![tr(1, 2, 0.5), tr(1, 3, 0.2), tr(2, 3, 0.6)],
            covariates: vec![MarginalLaw::Uniform { low: 0.0, high: 1.0 }],
            censoring: CensoringJson::Exponential { rate: "0.3".into() },
            n,
            seed,
        }
    }

    pub fn build(&self) -> Result<(IntensitySpec, CensoringSpec)> {
        let space = StateSpace::new(self.states.clone(), self.absorbing.clone())?;
        let d = self.covariates.len();
        let parse = |src: &str| -> Result<RateFn> {
            let rate = RateFn::parse(src)?;
            if let RateFn::Expr(e) = &rate {
                if e.covariate_dim() > d {
                    return Err(Error::Config(format!(
                        "expression '{src}' uses x{} but only {d} covariates are declared",
                        e.covariate_dim()
                    )));
                }
            }
            Ok(rate)
        };
        let transitions = self
            .transitions
            .iter()
            .map(|t| {
                Ok(TransitionRate {
                    from: t.from,
                    to: t.to,
                    rate: parse(&t.rate)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let intensity = IntensitySpec::new(
            self.kind,
            space,
            self.initial_state,
            transitions,
            self.covariates.clone(),
        )?;
        let censoring = match &self.censoring {
            CensoringJson::Exponential { rate } => {
                let r = parse(rate)?;
                if !r.is_time_constant() {
                    return Err(Error::Config("censoring rate may depend on x only".into()));
                }
                CensoringSpec::Exponential(r)
            }
            CensoringJson::Uniform { low, high } => CensoringSpec::Uniform { low: *low, high: *high },
            CensoringJson::Fixed { value } => CensoringSpec::Fixed(*value),
        };
        Ok((intensity, censoring))
    }
}
