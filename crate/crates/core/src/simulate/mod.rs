//! Generative models, occupation-probability oracles and a brute-force
//! re-implementation of the estimators for cross-checking.
//!
//! Paths are drawn by thinning against a piecewise-constant majorant. For
//! rate expressions the majorant over each window comes from interval
//! arithmetic, so it is a true upper bound; constant rates are drawn exactly
//! by competing exponentials. Every subject gets its own RNG streams derived
//! from `(seed, index)`, which makes samples independent of scheduling.

pub mod expr;
pub mod oracle;
pub mod scenario;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EndReason, Jump, ObservedPath, Sample, State, StateSpace};
use crate::error::{Error, Result};
pub use expr::{Expr, Interval};
pub use oracle::brute_force_estimator;
pub use scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Markov,
    SemiMarkov,
}

type RateClosure = dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync;

/// A transition intensity as a function of `(t, duration, x)`.
#[derive(Clone)]
pub enum RateFn {
    Constant(f64),
    Expr(Expr),
    /// Arbitrary function with a global upper bound used as the majorant.
    Custom { f: Arc<RateClosure>, bound: f64 },
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::Constant(c) => write!(f, "Constant({c})"),
            RateFn::Expr(e) => write!(f, "Expr({e:?})"),
            RateFn::Custom { bound, .. } => write!(f, "Custom {{ bound: {bound} }}"),
        }
    }
}

impl RateFn {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(RateFn::Expr(Expr::parse(src)?))
    }

    pub fn eval(&self, t: f64, duration: f64, x: &[f64]) -> f64 {
        match self {
            RateFn::Constant(c) => *c,
            RateFn::Expr(e) => e.eval(t, duration, x),
            RateFn::Custom { f, .. } => f(t, duration, x),
        }
    }

    /// Upper bound over `t ∈ time`, `duration ∈ dur`.
    pub fn upper(&self, time: Interval, dur: Interval, x: &[f64]) -> f64 {
        match self {
            RateFn::Constant(c) => *c,
            RateFn::Expr(e) => {
                let hi = e.bound(time, dur, x).hi;
                // cover rounding in the enclosure
                hi + hi.abs() * 1e-12
            }
            RateFn::Custom { bound, .. } => *bound,
        }
    }

    /// True when the rate depends on neither time nor duration.
    pub fn is_time_constant(&self) -> bool {
        match self {
            RateFn::Constant(_) => true,
            RateFn::Expr(e) => !e.uses_time() && !e.uses_duration(),
            RateFn::Custom { .. } => false,
        }
    }

    fn uses_duration(&self) -> bool {
        match self {
            RateFn::Expr(e) => e.uses_duration(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransitionRate {
    pub from: State,
    pub to: State,
    pub rate: RateFn,
}

/// Law of one covariate coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarginalLaw {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// Point masses `atoms[i] = (value, prob)` on top of a continuous base.
    Mixture { atoms: Vec<(f64, f64)>, base: Box<MarginalLaw> },
}

impl MarginalLaw {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            MarginalLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            MarginalLaw::Normal { mean, sd } => Normal::new(*mean, *sd).expect("valid normal").sample(rng),
            MarginalLaw::Fixed { value } => *value,
            MarginalLaw::Discrete { values, probs } => {
                let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("non-empty discrete law")
            }
            MarginalLaw::Mixture { atoms, base } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                base.sample(rng)
            }
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("covariate law: {m}")));
        match self {
            MarginalLaw::Uniform { low, high } if !(low < high) => bad("uniform needs low < high"),
            MarginalLaw::Normal { sd, .. } if !(*sd > 0.0) => bad("normal needs sd > 0"),
            MarginalLaw::Discrete { values, probs }
                if values.is_empty() || values.len() != probs.len() || probs.iter().any(|p| *p < 0.0) =>
            {
                bad("discrete needs matching non-empty values and non-negative probs")
            }
            MarginalLaw::Mixture { atoms, base } => {
                let mass: f64 = atoms.iter().map(|a| a.1).sum();
                if atoms.iter().any(|a| a.1 < 0.0) || mass > 1.0 {
                    return bad("mixture atom masses must be non-negative and sum to at most 1");
                }
                base.check()
            }
            _ => Ok(()),
        }
    }
}

/// Covariate-dependent jump-process model.
#[derive(Clone, Debug)]
pub struct IntensitySpec {
    pub kind: ProcessKind,
    pub state_space: StateSpace,
    pub initial_state: State,
    pub transitions: Vec<TransitionRate>,
    pub covariate_law: Vec<MarginalLaw>,
    /// Window length of the piecewise-constant majorant.
    pub majorant_window: f64,
}

impl IntensitySpec {
    pub fn new(
        kind: ProcessKind,
        state_space: StateSpace,
        initial_state: State,
        transitions: Vec<TransitionRate>,
        covariate_law: Vec<MarginalLaw>,
    ) -> Result<Self> {
        if state_space.index_of(initial_state).is_none() {
            return Err(Error::Config(format!("initial state {initial_state} not in state space")));
        }
        if state_space.is_absorbing(initial_state) {
            return Err(Error::Config("initial state must not be absorbing".into()));
        }
        for tr in &transitions {
            if tr.from == tr.to {
                return Err(Error::Config(format!("self-transition {} -> {}", tr.from, tr.to)));
            }
            for s in [tr.from, tr.to] {
                if state_space.index_of(s).is_none() {
                    return Err(Error::Config(format!("transition uses unknown state {s}")));
                }
            }
            if state_space.is_absorbing(tr.from) {
                return Err(Error::Config(format!("transition out of absorbing state {}", tr.from)));
            }
            if kind == ProcessKind::Markov && tr.rate.uses_duration() {
                return Err(Error::Config(format!(
                    "markov rate {} -> {} depends on duration",
                    tr.from, tr.to
                )));
            }
            if let RateFn::Constant(c) = tr.rate {
                if c < 0.0 {
                    return Err(Error::NegativeRate {
                        from: tr.from,
                        to: tr.to,
                        time: 0.0,
                        value: c,
                    });
                }
            }
        }
        for law in &covariate_law {
            law.check()?;
        }
        Ok(IntensitySpec {
            kind,
            state_space,
            initial_state,
            transitions,
            covariate_law,
            majorant_window: 0.25,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariate_law.len()
    }

    fn outgoing(&self, from: State) -> impl Iterator<Item = &TransitionRate> {
        self.transitions.iter().filter(move |tr| tr.from == from)
    }

    /// `rate(j, k, t, duration, x)`; zero for transitions not in the model.
    pub fn rate(&self, from: State, to: State, t: f64, duration: f64, x: &[f64]) -> f64 {
        let duration = match self.kind {
            ProcessKind::Markov => 0.0,
            ProcessKind::SemiMarkov => duration,
        };
        self.transitions
            .iter()
            .filter(|tr| tr.from == from && tr.to == to)
            .map(|tr| tr.rate.eval(t, duration, x))
            .sum()
    }

    /// Generator `Q(t, x)` over state indices (Markov rates only).
    pub fn generator(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let m = self.state_space.len();
        let mut q = DMatrix::zeros(m, m);
        for tr in &self.transitions {
            let j = self.state_space.index_of(tr.from).expect("checked");
            let k = self.state_space.index_of(tr.to).expect("checked");
            let r = tr.rate.eval(t, 0.0, x);
            q[(j, k)] += r;
            q[(j, j)] -= r;
        }
        q
    }

    fn time_constant(&self) -> bool {
        self.transitions.iter().all(|tr| tr.rate.is_time_constant())
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.state_space.len()];
        p[self.state_space.index_of(self.initial_state).expect("checked")] = 1.0;
        p
    }
}

/// Law of the censoring time `R` given `x`.
#[derive(Clone, Debug)]
pub enum CensoringSpec {
    /// Exponential with covariate-dependent rate (must be positive).
    Exponential(RateFn),
    Uniform { low: f64, high: f64 },
    Fixed(f64),
}

impl CensoringSpec {
    pub fn draw<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let r = match self {
            CensoringSpec::Exponential(rate) => {
                let lambda = rate.eval(0.0, 0.0, x);
                let exp = Exp::new(lambda)
                    .ok()
                    .filter(|_| lambda > 0.0)
                    .ok_or_else(|| Error::Config(format!("censoring rate must be positive, got {lambda}")))?;
                loop {
                    let v = exp.sample(rng);
                    if v > 0.0 {
                        break v;
                    }
                }
            }
            CensoringSpec::Uniform { low, high } => {
                if !(*low >= 0.0 && low < high) {
                    return Err(Error::Config("uniform censoring needs 0 <= low < high".into()));
                }
                loop {
                    let v = low + (high - low) * rng.random::<f64>();
                    if v > 0.0 {
                        break v;
                    }
                }
            }
            CensoringSpec::Fixed(v) => {
                if !(*v > 0.0) {
                    return Err(Error::Config("censoring time must be positive".into()));
                }
                *v
            }
        };
        Ok(r)
    }
}

/// Independent RNG streams for one subject.
pub struct SubjectRngs {
    pub covariates: ChaCha8Rng,
    pub censoring: ChaCha8Rng,
    pub path: ChaCha8Rng,
}

pub fn subject_rngs(seed: u64, index: usize) -> SubjectRngs {
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((index as u64) * 4 + k);
        rng
    };
    SubjectRngs {
        covariates: stream(0),
        censoring: stream(1),
        path: stream(2),
    }
}

pub fn draw_covariates<R: Rng>(spec: &IntensitySpec, rng: &mut R) -> Vec<f64> {
    spec.covariate_law.iter().map(|law| law.sample(rng)).collect()
}

/// Uncensored trajectory up to `until` (or absorption): jumps and whether
/// the last one is absorbing.
pub fn simulate_latent<R: Rng>(
    spec: &IntensitySpec,
    x: &[f64],
    until: f64,
    rng: &mut R,
) -> Result<(Vec<Jump>, bool)> {
    let mut t = 0.0;
    let mut state = spec.initial_state;
    let mut entered = 0.0;
    let mut jumps = Vec::new();
    let semi = spec.kind == ProcessKind::SemiMarkov;
    loop {
        if spec.state_space.is_absorbing(state) {
            return Ok((jumps, true));
        }
        let out: Vec<&TransitionRate> = spec.outgoing(state).collect();
        if out.is_empty() || t >= until {
            return Ok((jumps, false));
        }
        let exact = out.iter().all(|tr| tr.rate.is_time_constant());
        let window_end = if exact { until } else { (t + spec.majorant_window).min(until) };
        let dur_of = |s: f64| if semi { s - entered } else { 0.0 };
        for tr in &out {
            let r = tr.rate.eval(t, dur_of(t), x);
            if r < 0.0 || r.is_nan() {
                return Err(Error::NegativeRate {
                    from: tr.from,
                    to: tr.to,
                    time: t,
                    value: r,
                });
            }
        }
        let majorant: f64 = if exact {
            out.iter().map(|tr| tr.rate.eval(t, 0.0, x)).sum()
        } else {
            let time = Interval::new(t, window_end);
            let dur = Interval::new(dur_of(t), dur_of(window_end));
            out.iter().map(|tr| tr.rate.upper(time, dur, x).max(0.0)).sum()
        };
        if !majorant.is_finite() {
            return Err(Error::Config(format!("cannot bound exit rate from state {state} near t = {t}")));
        }
        if majorant <= 0.0 {
            if exact {
                return Ok((jumps, false));
            }
            t = window_end;
            continue;
        }
        let candidate = t + Exp::new(majorant).expect("positive rate").sample(rng);
        if candidate >= window_end {
            t = window_end;
            continue;
        }
        t = candidate;
        let rates: Vec<f64> = out.iter().map(|tr| tr.rate.eval(t, dur_of(t), x)).collect();
        for (tr, &r) in out.iter().zip(&rates) {
            if r < 0.0 || r.is_nan() {
                return Err(Error::NegativeRate {
                    from: tr.from,
                    to: tr.to,
                    time: t,
                    value: r,
                });
            }
        }
        let total: f64 = rates.iter().sum();
        if total > majorant * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "exit rate {total} from state {state} exceeds its majorant {majorant} at t = {t}"
            )));
        }
        let u = rng.random::<f64>() * majorant;
        if u >= total {
            continue;
        }
        let mut acc = 0.0;
        let mut next = out[out.len() - 1].to;
        for (tr, r) in out.iter().zip(&rates) {
            acc += r;
            if u < acc {
                next = tr.to;
                break;
            }
        }
        jumps.push(Jump { time: t, to_state: next });
        state = next;
        entered = t;
    }
}

/// Draws one observed path: covariates, censoring time and trajectory each
/// come from their own stream.
pub fn simulate_subject(
    intensity: &IntensitySpec,
    censoring: &CensoringSpec,
    seed: u64,
    index: usize,
) -> Result<ObservedPath> {
    let mut rngs = subject_rngs(seed, index);
    let x = draw_covariates(intensity, &mut rngs.covariates);
    let r = censoring.draw(&x, &mut rngs.censoring)?;
    let (jumps, absorbed) = simulate_latent(intensity, &x, r, &mut rngs.path)?;
    let (end_time, end_reason) = match (absorbed, jumps.last()) {
        (true, Some(last)) => (last.time, EndReason::Absorbed),
        _ => (r, EndReason::Censored),
    };
    Ok(ObservedPath {
        id: (index + 1).to_string(),
        covariates: x,
        initial_state: intensity.initial_state,
        jumps,
        end_time,
        end_reason,
    })
}

pub fn simulate_sample(
    intensity: &IntensitySpec,
    censoring: &CensoringSpec,
    n: usize,
    seed: u64,
) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let paths = (0..n)
        .into_par_iter()
        .map(|i| simulate_subject(intensity, censoring, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Sample::new(intensity.state_space.clone(), paths)
}

/// True occupation probabilities on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePath {
    pub grid: Vec<f64>,
    /// `occupation[i][j] = p_j(grid[i] | x)`.
    pub occupation: Vec<Vec<f64>>,
}

impl OraclePath {
    pub fn at_index(&self, i: usize) -> &[f64] {
        &self.occupation[i]
    }
}

fn forward_step(spec: &IntensitySpec, x: &[f64], t: f64, h: f64, p: &DVector<f64>) -> DVector<f64> {
    let f = |s: f64, v: &DVector<f64>| spec.generator(s, x).tr_mul(v);
    let k1 = f(t, p);
    let k2 = f(t + 0.5 * h, &(p + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(p + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(p + &k3 * h));
    p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Solves `p'(t) = p(t) Q(t, x)` from `p(0) = e_initial`. Time-constant
/// generators use the matrix exponential; otherwise classic RK4 with
/// step-doubling error control.
pub fn markov_occupation_oracle(spec: &IntensitySpec, x: &[f64], grid: &[f64]) -> Result<OraclePath> {
    if spec.kind != ProcessKind::Markov {
        return Err(Error::Config("occupation oracle needs a markov model".into()));
    }
    let p0 = DVector::from_vec(spec.initial_distribution());
    let mut occupation = Vec::with_capacity(grid.len());
    if spec.time_constant() {
        let q = spec.generator(0.0, x);
        for &t in grid {
            let p = (q.clone() * t).exp().tr_mul(&p0);
            occupation.push(p.iter().copied().collect());
        }
    } else {
        const TOL: f64 = 1e-12;
        let mut t = 0.0;
        let mut p = p0;
        let mut h: f64 = 1e-3;
        for &target in grid {
            while t < target {
                let step = h.min(target - t);
                let full = forward_step(spec, x, t, step, &p);
                let half = forward_step(spec, x, t, 0.5 * step, &p);
                let two_half = forward_step(spec, x, t + 0.5 * step, 0.5 * step, &half);
                let err = (&full - &two_half).amax();
                if err <= TOL || step < 1e-9 {
                    // Richardson-corrected
                    p = &two_half + (&two_half - &full) / 15.0;
                    t += step;
                    if err < TOL / 32.0 {
                        h = (step * 2.0).min(0.5);
                    }
                } else {
                    h = step * 0.5;
                }
            }
            occupation.push(p.iter().copied().collect());
        }
    }
    Ok(OraclePath {
        grid: grid.to_vec(),
        occupation,
    })
}

/// Three-state irreversible illness-death model (1 healthy, 2 ill, 3 dead)
/// with every rate scaled by `1 + x`, `x ~ Uniform(0, 1)`.
pub fn default_intensity() -> IntensitySpec {
    let rate = |base: f64| RateFn::Expr(Expr::parse(&format!("{base} * (1 + x)")).expect("valid expression"));
    IntensitySpec::new(
        ProcessKind::Markov,
        StateSpace::new(vec![1, 2, 3], vec![3]).expect("valid states"),
        1,
        vec![
            TransitionRate { from: 1, to: 2, rate: rate(0.5) },
            TransitionRate { from: 1, to: 3, rate: rate(0.2) },
            TransitionRate { from: 2, to: 3, rate: rate(0.6) },
        ],
        vec![MarginalLaw::Uniform { low: 0.0, high: 1.0 }],
    )
    .expect("valid default scenario")
}

/// `R ~ Exp(0.3)` independently of the covariate.
pub fn default_censoring() -> CensoringSpec {
    CensoringSpec::Exponential(RateFn::Constant(0.3))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(rate: f64) -> IntensitySpec {
        IntensitySpec::new(
            ProcessKind::Markov,
            StateSpace::new(vec![1, 2], vec![2]).unwrap(),
            1,
            vec![TransitionRate { from: 1, to: 2, rate: RateFn::Constant(rate) }],
            vec![MarginalLaw::Uniform { low: 0.0, high: 1.0 }],
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_give_censored_paths() {
        let s = simulate_sample(&two_state(0.0), &default_censoring(), 50, 7).unwrap();
        for p in s.paths() {
            assert!(p.jumps.is_empty());
            assert_eq!(p.end_reason, EndReason::Censored);
        }
    }

    #[test]
    fn huge_rate_absorbs_immediately() {
        let s = simulate_sample(&two_state(1000.0), &CensoringSpec::Fixed(10.0), 200, 3).unwrap();
        assert!(s.paths().iter().all(|p| p.end_reason == EndReason::Absorbed && p.end_time < 0.05));
    }

    #[test]
    fn same_seed_same_sample() {
        let a = simulate_sample(&default_intensity(), &default_censoring(), 100, 11).unwrap();
        let b = simulate_sample(&default_intensity(), &default_censoring(), 100, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_sample(&default_intensity(), &default_censoring(), 100, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn negative_rates_are_rejected() {
        let bad = IntensitySpec::new(
            ProcessKind::Markov,
            StateSpace::new(vec![1, 2], vec![2]).unwrap(),
            1,
            vec![TransitionRate { from: 1, to: 2, rate: RateFn::parse("1 - t").unwrap() }],
            vec![],
        )
        .unwrap();
        let err = simulate_sample(&bad, &CensoringSpec::Fixed(50.0), 200, 1).unwrap_err();
        assert!(matches!(err, Error::NegativeRate { .. } | Error::Config(_)), "{err}");
        assert!(IntensitySpec::new(
            ProcessKind::Markov,
            StateSpace::new(vec![1, 2], vec![2]).unwrap(),
            1,
            vec![TransitionRate { from: 1, to: 2, rate: RateFn::Constant(-1.0) }],
            vec![],
        )
        .is_err());
    }

    #[test]
    fn oracle_closed_forms() {
        let spec = two_state(1.0);
        let grid = [0.0, 0.5, 1.0, 2.0];
        let o = markov_occupation_oracle(&spec, &[0.3], &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((o.occupation[i][0] - (-t).exp()).abs() < 1e-12);
            assert!((o.occupation[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let o = markov_occupation_oracle(&two_state(0.0), &[0.3], &grid).unwrap();
        assert!(o.occupation.iter().all(|r| r == &vec![1.0, 0.0]));
    }

    #[test]
    fn rk4_matches_closed_form_for_time_varying_rate() {
        // Λ(t) = t^2 / 2 for rate t, so p_1(t) = exp(-t^2/2).
        let spec = IntensitySpec::new(
            ProcessKind::Markov,
            StateSpace::new(vec![1, 2], vec![2]).unwrap(),
            1,
            vec![TransitionRate { from: 1, to: 2, rate: RateFn::parse("t").unwrap() }],
            vec![],
        )
        .unwrap();
        let grid = [0.25, 1.0, 2.0, 3.0];
        let o = markov_occupation_oracle(&spec, &[], &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((o.occupation[i][0] - (-t * t / 2.0f64).exp()).abs() < 1e-9);
        }
    }
}
