//! Markov approximation of the geometric volatility by a thinned Poisson clock.
//!
//! Base points arrive at rate `1/ε`. A base point is marked through
//! `g_ε` of the driver increment over its holding interval, and `Z^ε` jumps at
//! marked points by `1 + g_ε(B_{T_n} - B_{T_{n-1}})`.
//!
//! The driver is drawn on the regular grid first and filled in at the Poisson
//! points by Brownian bridges, so one stream gives the same driver on the grid
//! for every `ε`.

use serde::{Deserialize, Serialize};

use super::{separated, Claim, Measured, ScenarioError, ScenarioReport};
use crate::rng::RandomStream;
use crate::simulate::{run_paths, Estimate, McOptions};

/// Smallest accepted `ε`.
pub const EPSILON_FLOOR: f64 = 0.06;

/// `h(ε) = exp(-1/ε²)`.
pub fn h_of_epsilon(epsilon: f64) -> f64 {
    (-1.0 / (epsilon * epsilon)).exp()
}

/// `h·floor(x/h)` on `(-1 + h, 1)`, zero elsewhere. When `h` is below the
/// resolution of `x` the nearest float in `(x - h, x]` is `x` itself.
pub fn g_epsilon(x: f64, h: f64) -> f64 {
    if !(x > -1.0 + h && x < 1.0) {
        return 0.0;
    }
    let v = h * (x / h).floor();
    if v <= x && v > x - h {
        v
    } else {
        x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkRule {
    /// Keep base points where `g_ε` of the holding increment is positive.
    #[default]
    Positive,
    /// Keep base points where `g_ε` of the holding increment is non-zero.
    NonZero,
}

impl MarkRule {
    fn keeps(self, g: f64) -> bool {
        match self {
            MarkRule::NonZero => g != 0.0,
            MarkRule::Positive => g > 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub z0: f64,
    pub horizon: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub mark_rule: MarkRule,
    /// Regular nodes merged with the Poisson points for the distance integral.
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.3, 0.2, 0.12]
}

fn default_grid_steps() -> usize {
    256
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            z0: 1.0,
            horizon: 1.0,
            epsilons: default_epsilons(),
            mark_rule: MarkRule::default(),
            grid_steps: default_grid_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoissonPath {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub brownian: Vec<f64>,
    /// `z0 exp(B_t - t/2)` at each node.
    pub z: Vec<f64>,
    /// `Z^ε` right after each node.
    pub z_eps: Vec<f64>,
    pub base_times: Vec<f64>,
    pub retained_times: Vec<f64>,
    /// Jump factors at retained times.
    pub factors: Vec<f64>,
    /// `∫_0^T (Z - Z^ε)² dt` by the trapezoid rule on the nodes.
    pub l2_distance: f64,
    /// `0 < Z^ε_t ≤ z0 2^{N_t}` at every node.
    pub bound_holds: bool,
}

fn check_epsilon(epsilon: f64) -> Result<(), ScenarioError> {
    if !(epsilon < 1.0) || epsilon.is_nan() {
        return Err(ScenarioError::OutOfRange {
            name: "epsilon",
            value: epsilon,
        });
    }
    if !(epsilon >= EPSILON_FLOOR) {
        return Err(ScenarioError::EpsilonUnderflow {
            epsilon,
            floor: EPSILON_FLOOR,
        });
    }
    Ok(())
}

pub fn build_poisson_sampled_chain(
    epsilon: f64,
    z0: f64,
    horizon: f64,
    rule: MarkRule,
    grid_steps: usize,
    stream: &mut RandomStream,
) -> Result<PoissonPath, ScenarioError> {
    check_epsilon(epsilon)?;
    let h = h_of_epsilon(epsilon);
    let grid_dt = horizon / grid_steps.max(1) as f64;
    let mut p = PoissonPath {
        epsilon,
        times: vec![0.0],
        brownian: vec![0.0],
        z: vec![z0],
        z_eps: vec![z0],
        base_times: Vec::new(),
        retained_times: Vec::new(),
        factors: Vec::new(),
        l2_distance: 0.0,
        bound_holds: true,
    };
    let steps = grid_steps.max(1);
    let mut driver = stream.fork(1);
    let mut clock = stream.fork(2);
    let mut bridge = stream.fork(3);
    let node = |k: usize| if k == steps { horizon } else { k as f64 * grid_dt };
    let mut grid_b = Vec::with_capacity(steps + 1);
    grid_b.push(0.0);
    for k in 1..=steps {
        grid_b.push(grid_b[k - 1] + (node(k) - node(k - 1)).sqrt() * driver.normal());
    }
    let (mut t, mut b, mut ze) = (0.0, 0.0, z0);
    let (mut base_b, mut kept_b) = (0.0, 0.0);
    let mut arrival = clock.exponential(1.0 / epsilon);
    let mut k = 1usize;
    let mut cap = z0;
    while t < horizon {
        let grid_t = node(k);
        let is_base = arrival < grid_t;
        let next = if is_base { arrival } else { grid_t };
        if is_base {
            let (u, w) = (next - t, grid_t - next);
            let mean = b + u / (u + w) * (grid_b[k] - b);
            b = mean + (u * w / (u + w)).sqrt() * bridge.normal();
        } else {
            b = grid_b[k];
        }
        let z = z0 * (b - 0.5 * next).exp();
        let z_prev = *p.z.last().unwrap();
        p.l2_distance += 0.5 * (next - t) * ((z_prev - ze).powi(2) + (z - ze).powi(2));
        t = next;
        if is_base {
            p.base_times.push(t);
            if rule.keeps(g_epsilon(b - base_b, h)) {
                let f = 1.0 + g_epsilon(b - kept_b, h);
                ze *= f;
                cap *= 2.0;
                kept_b = b;
                p.retained_times.push(t);
                p.factors.push(f);
            }
            base_b = b;
            arrival += clock.exponential(1.0 / epsilon);
        } else {
            k += 1;
        }
        p.bound_holds &= ze > 0.0 && ze <= cap;
        p.times.push(t);
        p.brownian.push(b);
        p.z.push(z);
        p.z_eps.push(ze);
    }
    Ok(p)
}

struct Draw {
    distance: f64,
    bound: bool,
    factors_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRow {
    pub epsilon: f64,
    pub distance: Estimate,
    pub bound_failures: usize,
    pub factor_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceStudy {
    pub rows: Vec<DistanceRow>,
    /// Paired per-path differences between consecutive `ε`, earlier minus later.
    pub steps: Vec<Estimate>,
    /// Paired difference between the first and last `ε`.
    pub overall: Option<Estimate>,
}

/// Mean `∫ (Z - Z^ε)² dt` per `ε` plus bound and factor checks. Path `i`
/// uses the same stream for every `ε`, so differences are paired.
pub fn distance_study(cfg: &PoissonConfig, mc: &McOptions) -> Result<DistanceStudy, ScenarioError> {
    for &e in &cfg.epsilons {
        check_epsilon(e)?;
    }
    let draws: Vec<Vec<Draw>> = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
        cfg.epsilons
            .iter()
            .map(|&eps| {
                let p = build_poisson_sampled_chain(eps, cfg.z0, cfg.horizon, cfg.mark_rule, cfg.grid_steps, &mut stream.clone())
                    .expect("epsilon checked");
                Draw {
                    distance: p.l2_distance,
                    bound: p.bound_holds,
                    factors_ok: p.factors.iter().all(|&f| f > 0.0 && f < 2.0),
                }
            })
            .collect()
    });
    let column = |j: usize| -> Vec<f64> { draws.iter().map(|d| d[j].distance).collect() };
    let paired = |a: usize, b: usize| {
        let diff: Vec<f64> = draws.iter().map(|d| d[a].distance - d[b].distance).collect();
        Estimate::from_samples(&diff, mc.ci_level)
    };
    let n = cfg.epsilons.len();
    Ok(DistanceStudy {
        rows: cfg
            .epsilons
            .iter()
            .enumerate()
            .map(|(j, &epsilon)| DistanceRow {
                epsilon,
                distance: Estimate::from_samples(&column(j), mc.ci_level),
                bound_failures: draws.iter().filter(|d| !d[j].bound).count(),
                factor_failures: draws.iter().filter(|d| !d[j].factors_ok).count(),
            })
            .collect(),
        steps: (1..n).map(|j| paired(j - 1, j)).collect(),
        overall: (n > 1).then(|| paired(0, n - 1)),
    })
}

pub fn run_poisson_counterexample(cfg: &PoissonConfig, mc: &McOptions) -> Result<ScenarioReport, ScenarioError> {
    if !(cfg.z0 > 0.0) {
        return Err(ScenarioError::OutOfRange {
            name: "z0",
            value: cfg.z0,
        });
    }
    if !(cfg.horizon > 0.0) {
        return Err(ScenarioError::OutOfRange {
            name: "horizon",
            value: cfg.horizon,
        });
    }
    let study = distance_study(cfg, mc)?;
    let mut report = ScenarioReport::new("poisson", mc.seed, mc.n_paths);
    let bound_fail: usize = study.rows.iter().map(|s| s.bound_failures).sum();
    let factor_fail: usize = study.rows.iter().map(|s| s.factor_failures).sum();
    report.push(Claim::new(
        "0 < Z^eps_t <= z0 2^N_t on every path",
        "0 violations",
        vec![Measured::exact("violating_paths", bound_fail as f64)],
        bound_fail == 0,
    ));
    report.push(Claim::new(
        "every jump factor 1 + g_eps(increment) lies in (0, 2)",
        "0 violations",
        vec![Measured::exact("violating_paths", factor_fail as f64)],
        factor_fail == 0,
    ));
    let mut measured: Vec<Measured> = study
        .rows
        .iter()
        .map(|row| Measured::estimate(format!("eps = {}", row.epsilon), &row.distance))
        .collect();
    for (w, step) in study.rows.windows(2).zip(&study.steps) {
        measured.push(Measured::estimate(
            format!("paired {} minus {}", w[0].epsilon, w[1].epsilon),
            step,
        ));
    }
    let zero = |s: &Estimate| Estimate::exact(0.0, s.n_paths, s.ci_level);
    let strict = !study.steps.is_empty() && study.steps.iter().all(|s| separated(s, &zero(s), 3.0));
    report.push(Claim::new(
        "time-integrated squared distance to the geometric volatility decreases as eps shrinks",
        "every paired step along the eps list > 0 by >= 3 standard errors",
        measured,
        strict,
    ));
    Ok(report)
}
