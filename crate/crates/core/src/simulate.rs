//! Monte Carlo for the difference process `R(V) = X - Y(V)`.
//!
//! With `V = ∫C dB + ∫√(1-C²) dW` the difference solves
//! `dR = (σ1 - Cσ2)(Z) dB - σ2(Z)√(1-C²) dW`. For correlations that depend on
//! the chain state only, `R` is a Brownian motion with piecewise-constant
//! variance rate between chain jumps, so increments and barrier crossings are
//! sampled exactly. Adapted correlations use an Euler scheme with `C` frozen
//! on each step.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{normal_quantile, survival_no_drift};
use crate::coupling::{
    variance_rate, AdaptedInput, CorrelationStrategy, CostFunction, CouplingError, PathSummary, VolatilityMap,
};
use crate::ctmc::{occupation_integral, ChainPath, ChainSpec};
use crate::rng::{rng_stream, RandomStream};
use crate::stats::mean_var;

pub const MIN_TRACKING_PATHS: usize = 100;
pub const DEFAULT_CI_LEVEL: f64 = 0.99;
/// Euler steps per horizon used by adapted strategies unless configured.
pub const DEFAULT_STEPS: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step {step} must be positive")]
    NonPositiveStep { step: f64 },
    #[error("step {step} exceeds the horizon {horizon}")]
    StepTooLarge { step: f64, horizon: f64 },
    #[error("horizon {0} must be positive")]
    NonPositiveHorizon(f64),
    #[error("{got} paths requested, at least {min} needed")]
    TooFewPaths { got: usize, min: usize },
    #[error("coupling runs need r0 < 0, got {0}")]
    NonNegativeStart(f64),
    #[error("strategy `{0}` depends on the path; this method needs a state-feedback strategy")]
    NeedsStateFeedback(String),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// How barrier crossings at zero are detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monitor {
    Off,
    /// Brownian-bridge crossing test on every segment.
    Bridge,
    /// Inspect grid values only.
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledPath {
    pub grid_times: Vec<f64>,
    pub r_values: Vec<f64>,
    pub crossed: bool,
    pub crossing_time: Option<f64>,
    pub truncation_exit: Option<f64>,
}

impl CoupledPath {
    pub fn terminal(&self) -> f64 {
        *self.r_values.last().expect("path has a start value")
    }
}

/// Options for a single path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOptions {
    pub step: f64,
    pub monitor: Monitor,
    /// Stop when `|R|` first reaches this level.
    pub truncation: Option<f64>,
}

impl PathOptions {
    pub fn new(step: f64) -> Self {
        PathOptions {
            step,
            monitor: Monitor::Bridge,
            truncation: None,
        }
    }
}

/// `true` with probability `exp(-2 r_a r_b / variance)`: a Brownian bridge
/// between two points on the same side of zero touches zero.
pub fn detect_crossing_bridge(r_a: f64, r_b: f64, segment_variance: f64, stream: &mut RandomStream) -> bool {
    if r_a * r_b <= 0.0 {
        return true;
    }
    if !(segment_variance > 0.0) {
        return false;
    }
    let p = (-2.0 * r_a * r_b / segment_variance).exp();
    stream.uniform() < p
}

fn check_step(step: f64, horizon: f64) -> Result<(), SimError> {
    if !(horizon > 0.0) {
        return Err(SimError::NonPositiveHorizon(horizon));
    }
    if !(step > 0.0) {
        return Err(SimError::NonPositiveStep { step });
    }
    if step > horizon {
        return Err(SimError::StepTooLarge { step, horizon });
    }
    Ok(())
}

/// Running state of one path; shared by the recording and the lean kernels.
struct Walker<'a> {
    vol: &'a VolatilityMap,
    strategy: &'a CorrelationStrategy,
    monitor: Monitor,
    truncation: Option<f64>,
    r: f64,
    summary: PathSummary,
    crossed_at: Option<f64>,
    exit_at: Option<f64>,
}

impl<'a> Walker<'a> {
    fn new(vol: &'a VolatilityMap, strategy: &'a CorrelationStrategy, opts: &PathOptions, r0: f64) -> Self {
        Walker {
            vol,
            strategy,
            monitor: opts.monitor,
            truncation: opts.truncation,
            r: r0,
            summary: PathSummary::start(r0),
            crossed_at: if opts.monitor != Monitor::Off && r0 == 0.0 { Some(0.0) } else { None },
            exit_at: opts.truncation.filter(|k| r0.abs() >= *k).map(|_| 0.0),
        }
    }

    /// Advance over `[t0, t1]` in `state`.
    fn advance(&mut self, t0: f64, t1: f64, state: usize, stream: &mut RandomStream) -> Result<(), SimError> {
        if self.exit_at.is_some() {
            return Ok(());
        }
        let dt = t1 - t0;
        let c = self.strategy.correlation(
            self.vol,
            &AdaptedInput {
                t: t0,
                r: self.r,
                state,
                summary: self.summary,
            },
        )?;
        let (s1, s2) = (self.vol.sigma1[state], self.vol.sigma2[state]);
        let next = if self.strategy.is_adapted() {
            let sd = dt.sqrt();
            let (db, dw) = (sd * stream.normal(), sd * stream.normal());
            self.r + (s1 - c * s2) * db - s2 * (1.0 - c * c).max(0.0).sqrt() * dw
        } else {
            let v = variance_rate(self.vol, state, c) * dt;
            self.r + v.sqrt() * stream.normal()
        };
        if self.crossed_at.is_none() {
            let hit = match self.monitor {
                Monitor::Off => false,
                Monitor::Grid => next * self.r <= 0.0,
                Monitor::Bridge => detect_crossing_bridge(self.r, next, variance_rate(self.vol, state, c) * dt, stream),
            };
            if hit {
                self.crossed_at = Some(t1);
            }
        }
        self.r = next;
        self.summary.observe(next);
        if let Some(k) = self.truncation {
            if next.abs() >= k {
                self.exit_at = Some(t1);
            }
        }
        Ok(())
    }
}

/// Iterate the pieces of `[0, horizon]` cut at chain jumps and, when `step`
/// is given, at multiples of `step`.
fn for_each_piece(
    path: &ChainPath,
    step: Option<f64>,
    mut f: impl FnMut(f64, f64, usize, bool) -> Result<(), SimError>,
) -> Result<(), SimError> {
    for (k, (a, b, z)) in path.segments().enumerate() {
        let entered = k > 0;
        match step {
            None => f(a, b, z, entered)?,
            Some(h) => {
                let mut t = a;
                let mut first = true;
                while t < b {
                    let next_grid = ((t / h + 1e-9).floor() + 1.0) * h;
                    let t1 = if next_grid >= b - 1e-12 * h { b } else { next_grid };
                    f(t, t1, z, entered && first)?;
                    first = false;
                    t = t1;
                }
            }
        }
    }
    Ok(())
}

/// Simulate one path of `R` along the given chain path, recording every grid
/// time (multiples of `step` merged with the chain jump times).
pub fn simulate_difference_path(
    chain_path: &ChainPath,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    step: f64,
    stream: &mut RandomStream,
) -> Result<CoupledPath, SimError> {
    simulate_difference_path_with(chain_path, vol, strategy, r0, &PathOptions::new(step), stream)
}

pub fn simulate_difference_path_with(
    chain_path: &ChainPath,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    opts: &PathOptions,
    stream: &mut RandomStream,
) -> Result<CoupledPath, SimError> {
    check_step(opts.step, chain_path.horizon)?;
    let mut walker = Walker::new(vol, strategy, opts, r0);
    let mut grid_times = vec![0.0];
    let mut r_values = vec![r0];
    for_each_piece(chain_path, Some(opts.step), |a, b, z, entered| {
        if entered {
            walker.summary.chain_jumps += 1;
        }
        walker.advance(a, b, z, stream)?;
        grid_times.push(b);
        r_values.push(walker.r);
        Ok(())
    })?;
    Ok(CoupledPath {
        grid_times,
        r_values,
        crossed: walker.crossed_at.is_some(),
        crossing_time: walker.crossed_at,
        truncation_exit: walker.exit_at,
    })
}

/// Terminal value and crossing flag without recording the grid. State-feedback
/// strategies take one exact step per chain segment.
fn run_lean(
    chain_path: &ChainPath,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    opts: &PathOptions,
    stream: &mut RandomStream,
) -> Result<(f64, bool), SimError> {
    let mut walker = Walker::new(vol, strategy, opts, r0);
    let step = if strategy.is_adapted() || opts.monitor == Monitor::Grid {
        Some(opts.step)
    } else {
        None
    };
    for_each_piece(chain_path, step, |a, b, z, entered| {
        if entered {
            walker.summary.chain_jumps += 1;
        }
        walker.advance(a, b, z, stream)
    })?;
    Ok((walker.r, walker.crossed_at.is_some()))
}

/// Mean with standard error and confidence level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub ci_level: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64], ci_level: f64) -> Self {
        let (mean, var) = mean_var(samples);
        Estimate {
            mean,
            std_error: (var / samples.len() as f64).sqrt(),
            n_paths: samples.len(),
            ci_level,
        }
    }

    /// Deterministic value with zero standard error.
    pub fn exact(value: f64, n_paths: usize, ci_level: f64) -> Self {
        Estimate {
            mean: value,
            std_error: 0.0,
            n_paths,
            ci_level,
        }
    }

    pub fn half_width(&self) -> f64 {
        normal_quantile(0.5 + 0.5 * self.ci_level) * self.std_error
    }

    pub fn ci(&self) -> (f64, f64) {
        let h = self.half_width();
        (self.mean - h, self.mean + h)
    }

    /// `|self - other|` in units of the pooled standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let pooled = self.std_error.hypot(other.std_error);
        if pooled == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / pooled
        }
    }

    /// Within `k` pooled standard errors of `value` (exact equality when both errors vanish).
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + 1e-12 * value.abs().max(1.0)
    }
}

/// Monte Carlo controls shared by the estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub ci_level: f64,
    /// Euler step for adapted strategies and grid monitoring; `horizon / 1024` if unset.
    pub step: Option<f64>,
    /// Worker threads; the global pool when unset.
    pub workers: Option<usize>,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McOptions {
            n_paths,
            seed,
            ci_level: DEFAULT_CI_LEVEL,
            step: None,
            workers: None,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_ci_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self
    }

    pub fn step_for(&self, horizon: f64) -> f64 {
        self.step.unwrap_or(horizon / DEFAULT_STEPS as f64)
    }
}

/// Evaluate `kernel` on paths `0..n` with stream `(seed, i)` each. The result
/// is ordered by path index whatever the thread count.
pub fn run_paths<T, F>(n: usize, seed: u64, workers: Option<usize>, kernel: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RandomStream) -> T + Sync + Send,
{
    let job = || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| kernel(i, &mut rng_stream(seed, i)))
            .collect::<Vec<T>>()
    };
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(job),
        None => job(),
    }
}

fn collect_results<T>(results: Vec<Result<T, SimError>>) -> Result<Vec<T>, SimError> {
    results.into_iter().collect()
}

/// Terminal values `R_T` on `n_paths` independent paths.
pub fn sample_terminal(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    horizon: f64,
    mc: &McOptions,
) -> Result<Vec<f64>, SimError> {
    vol.validate(chain)?;
    strategy.validate(chain)?;
    let opts = PathOptions {
        step: mc.step_for(horizon),
        monitor: Monitor::Off,
        truncation: None,
    };
    check_step(opts.step, horizon)?;
    let sampler = chain.sampler();
    let results = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
        let path = sampler.sample(horizon, stream);
        run_lean(&path, vol, strategy, r0, &opts, stream).map(|(r, _)| r)
    });
    collect_results(results)
}

/// `E[φ(R_T)]` by direct simulation.
pub fn estimate_tracking(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    phi: &CostFunction,
    r0: f64,
    horizon: f64,
    mc: &McOptions,
) -> Result<Estimate, SimError> {
    Ok(estimate_tracking_many(chain, vol, strategy, std::slice::from_ref(phi), r0, horizon, mc)?[0])
}

/// Several costs evaluated on the same sampled terminal values.
pub fn estimate_tracking_many(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    phis: &[CostFunction],
    r0: f64,
    horizon: f64,
    mc: &McOptions,
) -> Result<Vec<Estimate>, SimError> {
    if mc.n_paths < MIN_TRACKING_PATHS {
        return Err(SimError::TooFewPaths {
            got: mc.n_paths,
            min: MIN_TRACKING_PATHS,
        });
    }
    let terminal = sample_terminal(chain, vol, strategy, r0, horizon, mc)?;
    Ok(phis
        .iter()
        .map(|phi| {
            let values: Vec<f64> = terminal.iter().map(|&r| phi.eval(r)).collect();
            Estimate::from_samples(&values, mc.ci_level)
        })
        .collect())
}

/// Per-state variance rates of a state-feedback strategy.
pub fn state_rates(vol: &VolatilityMap, strategy: &CorrelationStrategy) -> Result<Vec<f64>, SimError> {
    (0..vol.n_states())
        .map(|z| {
            strategy
                .state_correlation(vol, z)
                .map(|c| variance_rate(vol, z, c))
                .ok_or_else(|| SimError::NeedsStateFeedback(strategy.label()))
        })
        .collect()
}

/// `E[φ(R_T)]` by simulating the chain only: given the chain path `R_T` is
/// normal with variance `A_T = ∫ rate(Z_s) ds`.
pub fn estimate_tracking_conditional(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    phi: &CostFunction,
    r0: f64,
    horizon: f64,
    mc: &McOptions,
) -> Result<Estimate, SimError> {
    vol.validate(chain)?;
    strategy.validate(chain)?;
    let rates = state_rates(vol, strategy)?;
    let sampler = chain.sampler();
    let values = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
        let a = sampler.sample(horizon, stream).occupation(|z| rates[z]);
        phi.gaussian_expectation(r0, a)
    });
    Ok(Estimate::from_samples(&values, mc.ci_level))
}

/// `r0² + ∫_0^T E[rate(Z_s)] ds` from the transition semigroup.
pub fn exact_quadratic_tracking(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    horizon: f64,
) -> Result<f64, SimError> {
    vol.validate(chain)?;
    strategy.validate(chain)?;
    let rates = state_rates(vol, strategy)?;
    Ok(r0 * r0 + occupation_integral(chain, horizon, |z| rates[z]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    /// Full path simulation with bridge crossing tests.
    Bridge,
    /// Chain-only simulation averaging `G(r0, A_T)`.
    Conditional,
    /// Grid inspection without bridge correction.
    Naive,
}

impl CouplingMethod {
    pub fn label(&self) -> &'static str {
        match self {
            CouplingMethod::Bridge => "bridge",
            CouplingMethod::Conditional => "conditional",
            CouplingMethod::Naive => "naive",
        }
    }
}

/// Probability that `R` started at `r0 < 0` stays below zero on `[0, horizon]`,
/// i.e. that the processes have not coupled by the horizon.
pub fn estimate_coupling_prob(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    r0: f64,
    horizon: f64,
    mc: &McOptions,
    method: CouplingMethod,
) -> Result<Estimate, SimError> {
    if !(r0 < 0.0) {
        return Err(SimError::NonNegativeStart(r0));
    }
    vol.validate(chain)?;
    strategy.validate(chain)?;
    let sampler = chain.sampler();
    let values: Vec<f64> = match method {
        CouplingMethod::Conditional => {
            let rates = state_rates(vol, strategy)?;
            run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
                let a = sampler.sample(horizon, stream).occupation(|z| rates[z]);
                survival_no_drift(r0, a).expect("r0 < 0 and a >= 0")
            })
        }
        CouplingMethod::Bridge | CouplingMethod::Naive => {
            let opts = PathOptions {
                step: mc.step_for(horizon),
                monitor: if method == CouplingMethod::Bridge {
                    Monitor::Bridge
                } else {
                    Monitor::Grid
                },
                truncation: None,
            };
            check_step(opts.step, horizon)?;
            let results = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
                let path = sampler.sample(horizon, stream);
                run_lean(&path, vol, strategy, r0, &opts, stream).map(|(_, crossed)| if crossed { 0.0 } else { 1.0 })
            });
            collect_results(results)?
        }
    };
    Ok(Estimate::from_samples(&values, mc.ci_level))
}

/// Halve the Euler step until successive tracking estimates move by less than
/// one standard error, or `max_halvings` is reached.
pub fn tracking_step_convergence(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    strategy: &CorrelationStrategy,
    phi: &CostFunction,
    r0: f64,
    horizon: f64,
    mc: &McOptions,
    max_halvings: usize,
) -> Result<Vec<(f64, Estimate)>, SimError> {
    let mut step = mc.step_for(horizon);
    let mut out: Vec<(f64, Estimate)> = Vec::new();
    for _ in 0..=max_halvings {
        let est = estimate_tracking(chain, vol, strategy, phi, r0, horizon, &mc.with_step(step))?;
        let settled = out
            .last()
            .is_some_and(|(_, prev)| (prev.mean - est.mean).abs() < prev.std_error.max(est.std_error));
        out.push((step, est));
        if settled {
            break;
        }
        step *= 0.5;
    }
    Ok(out)
}

/// One CSV row of an estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRow {
    pub scenario_id: String,
    pub strategy: String,
    pub phi: String,
    pub r0: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: String,
    pub seed: u64,
}

impl EstimateRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario_id: &str,
        strategy: &CorrelationStrategy,
        phi: &str,
        r0: f64,
        horizon: f64,
        est: &Estimate,
        method: &str,
        seed: u64,
    ) -> Self {
        let (ci_low, ci_high) = est.ci();
        EstimateRow {
            scenario_id: scenario_id.to_string(),
            strategy: strategy.label(),
            phi: phi.to_string(),
            r0,
            horizon,
            n_paths: est.n_paths,
            mean: est.mean,
            std_error: est.std_error,
            ci_low,
            ci_high,
            method: method.to_string(),
            seed,
        }
    }
}

pub fn write_estimate_rows<W: std::io::Write>(rows: &[EstimateRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
