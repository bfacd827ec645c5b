//! Command-line front end: `simulate`, `fit`, `covariance` and `check`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::check::{run_suite, SuiteOptions};
use crate::covariance::covariance_surfaces;
use crate::data::{load_sample, write_sample, LoadOptions, Sample, StateSpace};
use crate::error::{Error, Result};
use crate::estimators::{fit, ConditionalFit, FitConfig, DEFAULT_EPSILON};
use crate::kernels::{BandwidthSchedule, KernelKind, KernelSpec};
use crate::output;
use crate::simulate::{simulate_sample, Scenario};

#[derive(Debug, Parser)]
#[command(name = "condaj", version, about = "Conditional Nelson-Aalen / Aalen-Johansen estimation")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a sample from a scenario file (default: illness-death).
    Simulate(SimulateArgs),
    /// Fit hazards and occupation probabilities at one or more x points.
    Fit(RunConfig),
    /// Plug-in covariance surfaces at one or more x points.
    Covariance(RunConfig),
    /// Run the built-in verification suite.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario's sample size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Args)]
pub struct RunConfig {
    /// Long-format sample CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation point, comma separated over dimensions; repeatable.
    #[arg(long = "x", required = true, allow_hyphen_values = true)]
    pub x: Vec<String>,
    /// Atom set for dimension i (1-based): `i:v1,v2`; repeatable.
    #[arg(long)]
    pub atoms: Vec<String>,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: String,
    #[arg(long, default_value_t = BandwidthSchedule::DEFAULT_ETA)]
    pub eta: f64,
    /// Fixed bandwidth overriding the schedule.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Horizon θ; output is truncated at θ when given.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Covariance grid size.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Unused by fitting; accepted for symmetry with `simulate`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Declared state labels, comma separated (default: inferred).
    #[arg(long)]
    pub states: Option<String>,
    /// Declared absorbing states, comma separated.
    #[arg(long)]
    pub absorbing: Option<String>,
    /// Suppress warnings.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Reduced replicate counts; finishes in well under a minute.
    #[arg(long)]
    pub quick: bool,
}

fn parse_list<T: std::str::FromStr>(src: &str, what: &str) -> Result<Vec<T>> {
    src.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse {what} '{s}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>, xs: &[&str]) -> Self {
        RunConfig {
            input: input.into(),
            out: out.into(),
            x: xs.iter().map(|s| s.to_string()).collect(),
            atoms: Vec::new(),
            kernel: "epanechnikov".into(),
            eta: BandwidthSchedule::DEFAULT_ETA,
            bandwidth: None,
            epsilon: DEFAULT_EPSILON,
            theta: None,
            grid: 50,
            seed: None,
            states: None,
            absorbing: None,
            quiet: false,
        }
    }

    fn points(&self) -> Result<Vec<Vec<f64>>> {
        self.x.iter().map(|s| parse_list(s, "x coordinate")).collect()
    }

    fn fit_config(&self, d: usize) -> Result<FitConfig> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        let kind: KernelKind = self.kernel.parse()?;
        let mut kernel = KernelSpec::uniform_kind(kind, d);
        for spec in &self.atoms {
            let (dim, values) = spec
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("atoms must look like i:v1,v2 (got '{spec}')")))?;
            let dim: usize = dim
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad atom dimension '{dim}'")))?;
            if dim == 0 || dim > d {
                return Err(Error::Config(format!("atom dimension {dim} outside 1..={d}")));
            }
            kernel = kernel.with_atoms(dim - 1, parse_list(values, "atom")?);
        }
        let mut schedule = BandwidthSchedule::new(self.eta, d)?;
        if let Some(a) = self.bandwidth {
            schedule = BandwidthSchedule {
                explicit_a: BandwidthSchedule::fixed(a)?.explicit_a,
                ..schedule
            };
        }
        Ok(FitConfig {
            kernel,
            schedule,
            epsilon: self.epsilon,
            horizon: self.theta,
        })
    }

    fn load(&self) -> Result<Sample> {
        let state_space = match &self.states {
            Some(s) => {
                let absorbing = match &self.absorbing {
                    Some(a) => parse_list(a, "state")?,
                    None => Vec::new(),
                };
                Some(StateSpace::new(parse_list(s, "state")?, absorbing)?)
            }
            None => None,
        };
        load_sample(
            &self.input,
            &LoadOptions {
                state_space,
                ..Default::default()
            },
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn fit_all(sample: &Sample, config: &RunConfig) -> Result<(FitConfig, Vec<ConditionalFit>)> {
    let fit_config = config.fit_config(sample.dim())?;
    let fits = config
        .points()?
        .par_iter()
        .map(|x| fit(sample, x, &fit_config))
        .collect::<Result<Vec<_>>>()?;
    Ok((fit_config, fits))
}

fn warn_fit(k: usize, f: &ConditionalFit, theta: Option<f64>, space: &StateSpace) {
    for (j, times) in f.hazard.floor_active.iter().enumerate() {
        if !times.is_empty() {
            eprintln!(
                "warning: x{k} = {:?}: epsilon floor active for state {} at {} time(s), first at {}",
                f.x.coords,
                space.label(j),
                times.len(),
                times[0]
            );
        }
    }
    let beyond = f.hazard.times().iter().filter(|&&t| t > f.hazard.horizon).count();
    match theta {
        Some(theta) if f.hazard.times().iter().any(|&t| t <= theta && t > f.hazard.horizon) => {
            eprintln!("warning: x{k}: output extends past the largest censoring time in the window")
        }
        None if beyond > 0 => eprintln!(
            "warning: x{k} = {:?}: {beyond} event time(s) beyond horizon {}",
            f.x.coords, f.hazard.horizon
        ),
        _ => {}
    }
}

/// Writes `x{k}_hazard.csv`, `x{k}_occupation.csv` and `x{k}_fit.json` per point.
pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let sample = config.load()?;
    let (_, fits) = fit_all(&sample, config)?;
    std::fs::create_dir_all(&config.out)?;
    let space = sample.state_space();
    for (k, f) in fits.iter().enumerate() {
        if !config.quiet {
            warn_fit(k, f, config.theta, space);
        }
        let base = config.out.join(format!("x{k}"));
        let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}", base.display()));
        output::write_hazard_csv(f, space, config.theta, create(&path("hazard.csv"))?)?;
        output::write_occupation_csv(f, space, config.theta, create(&path("occupation.csv"))?)?;
        let mut json = create(&path("fit.json"))?;
        output::write_fit_json(f, space, config.theta, &mut json)?;
        json.flush()?;
    }
    Ok(())
}

/// Writes one surface CSV per transition and per state, plus a JSON bundle.
pub fn cmd_covariance(config: &RunConfig) -> Result<()> {
    let sample = config.load()?;
    let (fit_config, fits) = fit_all(&sample, config)?;
    std::fs::create_dir_all(&config.out)?;
    let space = sample.state_space();
    for (k, f) in fits.iter().enumerate() {
        if !config.quiet {
            warn_fit(k, f, config.theta, space);
        }
        let grid = config.theta.map(|theta| {
            let times: Vec<f64> = f.hazard.times().iter().copied().filter(|&t| t <= theta).collect();
            crate::covariance::quantile_grid(&times, config.grid)
        });
        let report = covariance_surfaces(&sample, f, &fit_config.kernel, grid.as_deref(), config.grid)?;
        let mut bundle = Vec::new();
        for ((j, l), surface) in &report.hazard {
            let label = format!("hazard_{}_{}", space.label(*j), space.label(*l));
            output::write_surface_csv(surface, create(&config.out.join(format!("x{k}_{label}.csv")))?)?;
            bundle.push((label, surface.clone()));
        }
        for (j, surface) in &report.occupation {
            let label = format!("occupation_{}", space.label(*j));
            output::write_surface_csv(surface, create(&config.out.join(format!("x{k}_{label}.csv")))?)?;
            bundle.push((label, surface.clone()));
        }
        let mut json = create(&config.out.join(format!("x{k}_covariance.json")))?;
        output::write_surfaces_json(&bundle, &mut json)?;
        json.flush()?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut scenario = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::illness_death(500, 1),
    };
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let (intensity, censoring) = scenario.build()?;
    let sample = simulate_sample(&intensity, &censoring, scenario.n, scenario.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = create(&args.out)?;
    write_sample(&sample, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs the suite; `Ok(true)` when every criterion passed.
pub fn cmd_check(args: &CheckArgs) -> Result<bool> {
    let report = run_suite(&SuiteOptions { quick: args.quick });
    for r in &report {
        println!("{r}");
    }
    let failed = report.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", report.len() - failed);
    Ok(failed == 0)
}

/// Entry point shared by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Fit(c) => cmd_fit(c).map(|_| true),
        Command::Covariance(c) => cmd_covariance(c).map(|_| true),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::NoKernelMass(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
