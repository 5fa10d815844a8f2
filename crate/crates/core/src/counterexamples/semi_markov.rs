//! Volatility driven by the `±ε` exit walk of the driver.
//!
//! `T_n` is the first time after `T_{n-1}` that `B` moves by `ε`, and
//! `Z_t = z0 ∏ (1 + B_{T_n} - B_{T_{n-1}})` over exits before `t`. Then
//! `∫_0^t Z dB = Z_t (1 + B_t - B_{T_N}) - z0`, so
//! `-z0 ≤ (1-ε)Z_t - z0 ≤ ∫_0^t Z dB ≤ (1+ε)Z_t - z0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Claim, Measured, ScenarioError, ScenarioReport};
use crate::analytic::normal_cdf;
use crate::rng::RandomStream;
use crate::simulate::{run_paths, Estimate, McOptions};

const T_STAR: f64 = 2.0 / PI;
const MAX_TERMS: usize = 64;

fn small_term(k: usize, t: f64) -> f64 {
    let m = (2 * k + 1) as f64;
    2.0 * m / (2.0 * PI * t * t * t).sqrt() * (-m * m / (2.0 * t)).exp()
}

fn large_term(k: usize, t: f64) -> f64 {
    let m = (2 * k + 1) as f64;
    0.5 * PI * m * (-m * m * PI * PI * t / 8.0).exp()
}

/// `P(τ ≤ t)` for the first exit of a standard Brownian motion from `[-1, 1]`.
pub fn unit_exit_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    if t < T_STAR {
        for k in 0..MAX_TERMS {
            let term = 4.0 * normal_cdf(-((2 * k + 1) as f64) / t.sqrt());
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        s
    } else {
        for k in 0..MAX_TERMS {
            let m = (2 * k + 1) as f64;
            let term = 4.0 / (PI * m) * (-m * m * PI * PI * t / 8.0).exp();
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        1.0 - s
    }
}

/// Exact draw of the first exit time of `[-1, 1]` by alternating-series rejection.
///
/// Proposal: the leading small-time term on `(0, t*]` (a Lévy hitting time
/// `1/Z²` truncated at `t*`) and the leading large-time term on `(t*, ∞)`
/// (`t*` plus an exponential with rate `π²/8`), with `t* = 2/π`.
pub fn unit_exit_time(stream: &mut RandomStream) -> f64 {
    let p_small = 2.0 * libm::erfc(1.0 / (2.0 * T_STAR).sqrt());
    let p_large = 4.0 / PI * (-PI * PI * T_STAR / 8.0).exp();
    loop {
        let small = stream.uniform() * (p_small + p_large) < p_small;
        let t = if small {
            loop {
                let z = stream.normal();
                let t = 1.0 / (z * z);
                if t <= T_STAR {
                    break t;
                }
            }
        } else {
            T_STAR + stream.exponential(PI * PI / 8.0)
        };
        let term = |k| if small { small_term(k, t) } else { large_term(k, t) };
        let bound = term(0);
        let u = stream.uniform() * bound;
        let mut s = bound;
        for k in 1..MAX_TERMS {
            if k % 2 == 1 {
                s -= term(k);
                if u <= s {
                    return t;
                }
            } else {
                s += term(k);
                if u > s {
                    break;
                }
            }
        }
    }
}

/// Exit times of `[-ε, ε]` walks and the resulting `Z` after each exit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitSkeleton {
    pub epsilon: f64,
    pub z0: f64,
    pub exit_times: Vec<f64>,
    /// `+1` or `-1` per exit.
    pub directions: Vec<i8>,
    pub z: Vec<f64>,
}

impl ExitSkeleton {
    pub fn n_exits(&self) -> usize {
        self.exit_times.len()
    }

    pub fn z_at(&self, t: f64) -> f64 {
        match self.exit_times.partition_point(|&s| s <= t) {
            0 => self.z0,
            k => self.z[k - 1],
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), ScenarioError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(ScenarioError::OutOfRange {
            name: "epsilon",
            value: epsilon,
        })
    }
}

pub fn sample_exit_skeleton(
    epsilon: f64,
    z0: f64,
    horizon: f64,
    stream: &mut RandomStream,
) -> Result<ExitSkeleton, ScenarioError> {
    check_epsilon(epsilon)?;
    let mut sk = ExitSkeleton {
        epsilon,
        z0,
        exit_times: Vec::new(),
        directions: Vec::new(),
        z: Vec::new(),
    };
    let mut t = 0.0;
    let mut z = z0;
    loop {
        t += epsilon * epsilon * unit_exit_time(stream);
        if t > horizon {
            return Ok(sk);
        }
        let d: i8 = if stream.coin() { 1 } else { -1 };
        z *= 1.0 + epsilon * d as f64;
        sk.exit_times.push(t);
        sk.directions.push(d);
        sk.z.push(z);
    }
}

/// Grid path with exits inserted at interpolated crossings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiMarkovPath {
    pub times: Vec<f64>,
    pub brownian: Vec<f64>,
    pub z: Vec<f64>,
    /// Euler sum of `∫ Z dB` at each node.
    pub integral: Vec<f64>,
    pub exit_times: Vec<f64>,
    /// Largest violation of the sandwich over all nodes (negative when it holds strictly).
    pub sandwich_gap: f64,
    /// Rounding allowance for the Euler sum.
    pub tolerance: f64,
}

impl SemiMarkovPath {
    pub fn sandwich_holds(&self) -> bool {
        self.sandwich_gap <= self.tolerance
    }
}

struct Node {
    t: f64,
    b: f64,
    z: f64,
    integral: f64,
}

struct WalkSummary {
    exits: usize,
    sandwich_gap: f64,
    tolerance: f64,
}

fn walk(
    epsilon: f64,
    z0: f64,
    horizon: f64,
    refinement: usize,
    stream: &mut RandomStream,
    mut on_node: impl FnMut(&Node, bool),
) -> WalkSummary {
    let n = ((horizon / (epsilon * epsilon / refinement as f64)).ceil() as usize).max(1);
    let dt = horizon / n as f64;
    let mut node = Node {
        t: 0.0,
        b: 0.0,
        z: z0,
        integral: 0.0,
    };
    let mut anchor = 0.0;
    let mut abs_sum = 0.0;
    let mut summary = WalkSummary {
        exits: 0,
        sandwich_gap: f64::NEG_INFINITY,
        tolerance: 0.0,
    };
    let check = |node: &Node, abs_sum: f64, summary: &mut WalkSummary| {
        let lower = (1.0 - epsilon) * node.z - z0;
        let upper = (1.0 + epsilon) * node.z - z0;
        let gap = (-z0 - lower).max(lower - node.integral).max(node.integral - upper);
        summary.sandwich_gap = summary.sandwich_gap.max(gap);
        summary.tolerance = summary.tolerance.max(16.0 * f64::EPSILON * (abs_sum + z0 + node.z));
    };
    check(&node, abs_sum, &mut summary);
    on_node(&node, false);
    for k in 1..=n {
        let t_next = if k == n { horizon } else { k as f64 * dt };
        let b_next = node.b + dt.sqrt() * stream.normal();
        loop {
            let dev = b_next - anchor;
            if dev.abs() < epsilon {
                break;
            }
            let level = anchor + epsilon * dev.signum();
            let frac = (level - node.b) / (b_next - node.b);
            let piece = node.z * (level - node.b);
            abs_sum += piece.abs();
            node.integral += piece;
            node.t += frac * (t_next - node.t);
            node.b = level;
            node.z *= 1.0 + epsilon * dev.signum();
            anchor = level;
            summary.exits += 1;
            check(&node, abs_sum, &mut summary);
            on_node(&node, true);
        }
        let piece = node.z * (b_next - node.b);
        abs_sum += piece.abs();
        node.integral += piece;
        node.t = t_next;
        node.b = b_next;
        check(&node, abs_sum, &mut summary);
        on_node(&node, false);
    }
    summary
}

/// One grid path at step `ε² / refinement` with the sandwich check.
pub fn build_semi_markov_chain(
    epsilon: f64,
    z0: f64,
    horizon: f64,
    refinement: usize,
    stream: &mut RandomStream,
) -> Result<SemiMarkovPath, ScenarioError> {
    check_epsilon(epsilon)?;
    let mut path = SemiMarkovPath {
        times: Vec::new(),
        brownian: Vec::new(),
        z: Vec::new(),
        integral: Vec::new(),
        exit_times: Vec::new(),
        sandwich_gap: 0.0,
        tolerance: 0.0,
    };
    let summary = walk(epsilon, z0, horizon, refinement, stream, |n, exit| {
        path.times.push(n.t);
        path.brownian.push(n.b);
        path.z.push(n.z);
        path.integral.push(n.integral);
        if exit {
            path.exit_times.push(n.t);
        }
    });
    path.sandwich_gap = summary.sandwich_gap;
    path.tolerance = summary.tolerance;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiMarkovConfig {
    pub x: f64,
    pub y: f64,
    pub z0: f64,
    pub epsilon: f64,
    pub horizon: f64,
    /// Grid steps per `ε²`.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
}

fn default_refinement() -> usize {
    64
}

impl Default for SemiMarkovConfig {
    fn default() -> Self {
        SemiMarkovConfig {
            x: 0.0,
            y: 0.0,
            z0: 1.0,
            epsilon: 0.1,
            horizon: 1.0,
            refinement: default_refinement(),
        }
    }
}

impl SemiMarkovConfig {
    pub fn coupling_start(&self) -> f64 {
        let r = self.x - self.y;
        if r < -3.0 * self.z0 {
            r
        } else {
            -4.0 * self.z0
        }
    }
}

struct GridDraw {
    terminal: f64,
    max: f64,
    min: f64,
    sandwich_ok: bool,
    gap: f64,
    tolerance: f64,
}

pub fn run_semi_markov_counterexample(cfg: &SemiMarkovConfig, mc: &McOptions) -> Result<ScenarioReport, ScenarioError> {
    check_epsilon(cfg.epsilon)?;
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
    let (eps, z0, t) = (cfg.epsilon, cfg.z0, cfg.horizon);
    let skeletons = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
        let sk = sample_exit_skeleton(eps, z0, t, &mut stream.fork(1)).expect("epsilon checked");
        (sk.n_exits() as f64, sk.z.iter().all(|&z| z > 0.0))
    });
    let grid = run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
        let (mut max, mut min, mut last) = (0.0f64, 0.0f64, 0.0);
        let s = walk(eps, z0, t, cfg.refinement, &mut stream.fork(2), |n, _| {
            max = max.max(n.integral);
            min = min.min(n.integral);
            last = n.integral;
        });
        GridDraw {
            terminal: last,
            max,
            min,
            sandwich_ok: s.sandwich_gap <= s.tolerance,
            gap: s.sandwich_gap,
            tolerance: s.tolerance,
        }
    });
    let mut report = ScenarioReport::new("semimarkov", mc.seed, mc.n_paths);

    let positive = skeletons.iter().all(|s| s.1);
    report.push(Claim::new(
        "Z stays positive on every exact exit skeleton",
        "Z_t > 0 on all paths",
        vec![Measured::exact("paths_with_nonpositive_z", skeletons.iter().filter(|s| !s.1).count() as f64)],
        positive,
    ));
    let counts: Vec<f64> = skeletons.iter().map(|s| s.0).collect();
    let count = Estimate::from_samples(&counts, mc.ci_level);
    let target = t / (eps * eps);
    report.push(Claim::new(
        "mean exit count on [0, T] is close to T / epsilon^2",
        "within 10%",
        vec![Measured::estimate("mean_exits", &count), Measured::exact("target", target)],
        (count.mean - target).abs() <= 0.1 * target,
    ));

    let bad = grid.iter().filter(|g| !g.sandwich_ok).count();
    let worst = grid.iter().map(|g| g.gap).fold(f64::NEG_INFINITY, f64::max);
    let tol = grid.iter().map(|g| g.tolerance).fold(0.0, f64::max);
    report.push(Claim::new(
        "-z0 <= (1 - eps) Z_t - z0 <= Euler integral of Z dB at every grid time",
        "0 violations beyond the Euler tolerance",
        vec![
            Measured::exact("violating_paths", bad as f64),
            Measured::exact("worst_gap", worst),
            Measured::exact("euler_tolerance", tol),
        ],
        bad == 0,
    ));

    let r = cfg.x - cfg.y;
    let sync: Vec<f64> = grid.iter().map(|g| r + g.terminal).collect();
    let mirror: Vec<f64> = grid.iter().map(|g| r - 3.0 * g.terminal).collect();
    let below = sync.iter().filter(|&&v| v <= r - z0).count();
    let above = mirror.iter().filter(|&&v| v >= r + 3.0 * z0).count();
    report.push(Claim::new(
        "synchronous difference stays above x - y - z0 and mirror below x - y + 3 z0",
        "0 violations",
        vec![Measured::exact("sync_violations", below as f64), Measured::exact("mirror_violations", above as f64)],
        below == 0 && above == 0,
    ));

    let strike = r + 3.0 * z0;
    let mirror_call: Vec<f64> = mirror.iter().map(|v| (v - strike).max(0.0)).collect();
    let sync_call = Estimate::from_samples(&sync.iter().map(|v| (v - strike).max(0.0)).collect::<Vec<_>>(), mc.ci_level);
    report.push(Claim::new(
        "call at strike x - y + 3 z0 is worthless under mirror and positive under sync",
        "E[phi(mirror)] = 0 exactly, CI of E[phi(sync)] excludes 0",
        vec![
            Measured::estimate("mirror", &Estimate::from_samples(&mirror_call, mc.ci_level)),
            Measured::estimate("sync", &sync_call),
        ],
        mirror_call.iter().all(|&v| v == 0.0) && sync_call.ci().0 > 0.0,
    ));

    let rc = cfg.coupling_start();
    let sync_hit = Estimate::from_samples(
        &grid.iter().map(|g| if rc + g.max >= 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        mc.ci_level,
    );
    let mirror_hits = grid.iter().filter(|g| rc - 3.0 * g.min >= 0.0).count();
    report.push(Claim::new(
        format!("from x - y = {rc} mirror never couples while sync couples with positive frequency"),
        "mirror frequency = 0, CI of sync frequency excludes 0",
        vec![
            Measured::exact("mirror_frequency", mirror_hits as f64 / grid.len() as f64),
            Measured::estimate("sync_frequency", &sync_hit),
        ],
        mirror_hits == 0 && sync_hit.ci().0 > 0.0,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;
    use crate::stats::{ks_critical_01, ks_statistic, ks_two_sample, ks_two_sample_critical_01, mean_se};

    #[test]
    fn exit_cdf_branches_meet() {
        let below = unit_exit_cdf(T_STAR * (1.0 - 1e-12));
        let above = unit_exit_cdf(T_STAR);
        assert!((below - above).abs() < 1e-10);
        assert!(unit_exit_cdf(0.01) < 1e-20);
        assert!((unit_exit_cdf(50.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_time_has_unit_mean_and_exact_law() {
        let draws = run_paths(20_000, 3, None, |_, s| unit_exit_time(s));
        let (m, se) = mean_se(&draws);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
        assert!(ks_statistic(&draws, unit_exit_cdf) < ks_critical_01(draws.len()));
    }

    #[test]
    fn exit_time_matches_dense_grid() {
        let dt: f64 = 1e-4;
        // Discrete monitoring shifts the barrier by about 0.5826 √dt.
        let barrier = 1.0 - 0.5826 * dt.sqrt();
        let n = 2000;
        let grid = run_paths(n, 17, None, |_, s| {
            let (mut b, mut t) = (0.0f64, 0.0);
            while b.abs() < barrier {
                b += dt.sqrt() * s.normal();
                t += dt;
            }
            t
        });
        let exact = run_paths(n, 18, None, |_, s| unit_exit_time(s));
        assert!(ks_two_sample(&grid, &exact) < ks_two_sample_critical_01(n, n));
    }

    #[test]
    fn skeleton_scales_with_epsilon() {
        let mut s = rng_stream(1, 0);
        let sk = sample_exit_skeleton(0.2, 1.0, 10.0, &mut s).unwrap();
        assert!(sk.exit_times.windows(2).all(|w| w[0] < w[1]));
        assert!(sk.z.iter().all(|&z| z > 0.0));
        assert_eq!(sk.z_at(0.0), 1.0);
        assert!(sample_exit_skeleton(1.0, 1.0, 1.0, &mut s).is_err());
    }

    #[test]
    fn grid_path_satisfies_identity() {
        let mut s = rng_stream(4, 0);
        let p = build_semi_markov_chain(0.1, 1.0, 1.0, 64, &mut s).unwrap();
        assert!(p.sandwich_holds(), "gap {} tol {}", p.sandwich_gap, p.tolerance);
        let k = p.times.iter().position(|&t| t == p.exit_times[0]).unwrap();
        assert!((p.integral[k] - (p.z[k] - 1.0)).abs() < 1e-12);
        assert!((p.brownian[k].abs() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn scenario_passes() {
        let report = run_semi_markov_counterexample(&SemiMarkovConfig::default(), &McOptions::new(4000, 8)).unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }
}
