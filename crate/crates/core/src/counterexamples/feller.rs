//! Volatility driven by an independent Brownian motion.
//!
//! `Z = z0 + B^⊥`, `σ1(z) = 2z`, `σ2(z) = z` and `V^c = √(1-c²) B + c B^⊥`.
//! Given the `Z` path, `R_T(V^c)` is normal with mean
//! `r - c(Z_T² - z0² - T)/2` and variance `(2 - √(1-c²))² ∫Z² dt`, so the
//! fourth moment is averaged in closed form over simulated `Z` paths.

use serde::{Deserialize, Serialize};

use super::{separated, Claim, Measured, ScenarioError, ScenarioReport};
use crate::analytic::{psi_c, psi_c_derivative_at_zero};
use crate::simulate::{run_paths, Estimate, McOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FellerConfig {
    pub r: f64,
    pub z0: f64,
    pub horizon: f64,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    /// Steps of the `Z` grid.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_c_grid() -> Vec<f64> {
    (-3..=3).map(|k| k as f64 / 10.0).collect()
}

fn default_steps() -> usize {
    512
}

impl Default for FellerConfig {
    fn default() -> Self {
        FellerConfig {
            r: 1.0,
            z0: 1.0,
            horizon: 1.0,
            c_grid: default_c_grid(),
            steps: default_steps(),
        }
    }
}

/// Conditional fourth moments `E[R_T(V^c)^4 | Z]` on `mc.n_paths` paths.
pub fn conditional_fourth_moments(cfg: &FellerConfig, c: f64, seed: u64, mc: &McOptions) -> Vec<f64> {
    let (r, z0, t) = (cfg.r, cfg.z0, cfg.horizon);
    let dt = t / cfg.steps as f64;
    let a = 2.0 - (1.0 - c * c).max(0.0).sqrt();
    run_paths(mc.n_paths, seed, mc.workers, |_, stream| {
        let mut z = z0;
        let mut int_sq = 0.0;
        for _ in 0..cfg.steps {
            let next = z + dt.sqrt() * stream.normal();
            // Mean of ∫Z² over a Brownian bridge between the two nodes.
            int_sq += dt * (z * z + z * next + next * next) / 3.0 + dt * dt / 6.0;
            z = next;
        }
        let m = r - 0.5 * c * (z * z - z0 * z0 - t);
        let v = a * a * int_sq;
        m.powi(4) + 6.0 * m * m * v + 3.0 * v * v
    })
}

pub fn run_independent_feller_counterexample(cfg: &FellerConfig, mc: &McOptions) -> Result<ScenarioReport, ScenarioError> {
    if cfg.r == 0.0 || !cfg.r.is_finite() {
        return Err(ScenarioError::OutOfRange { name: "r", value: cfg.r });
    }
    if !(cfg.horizon > 0.0) {
        return Err(ScenarioError::OutOfRange {
            name: "horizon",
            value: cfg.horizon,
        });
    }
    if cfg.steps == 0 {
        return Err(ScenarioError::OutOfRange { name: "steps", value: 0.0 });
    }
    for &c in &cfg.c_grid {
        if !(-1.0..=1.0).contains(&c) {
            return Err(ScenarioError::OutOfRange { name: "c", value: c });
        }
    }
    let mut grid = cfg.c_grid.clone();
    if !grid.contains(&0.0) {
        grid.push(0.0);
    }
    grid.sort_by(f64::total_cmp);
    let (r, z0, t) = (cfg.r, cfg.z0, cfg.horizon);
    let mut rows = Vec::with_capacity(grid.len());
    for (j, &c) in grid.iter().enumerate() {
        let samples = conditional_fourth_moments(cfg, c, mc.seed.wrapping_add(j as u64), mc);
        rows.push((c, Estimate::from_samples(&samples, mc.ci_level), psi_c(r, z0, t, c)?));
    }
    let base = rows.iter().find(|row| row.0 == 0.0).expect("c = 0 inserted").clone();
    let mut report = ScenarioReport::new("feller", mc.seed, mc.n_paths);

    report.push(Claim::new(
        "c = 0 estimate of E[R_T^4] matches psi_c",
        "within 3 standard errors",
        vec![Measured::estimate("estimate", &base.1), Measured::exact("psi_c", base.2)],
        base.1.agrees_with(base.2, 3.0),
    ));
    let mut measured = Vec::new();
    let mut all_agree = true;
    for (c, est, psi) in &rows {
        measured.push(Measured::estimate(format!("c = {c:+.2}"), est));
        measured.push(Measured::exact(format!("psi_c({c:+.2})"), *psi));
        all_agree &= est.agrees_with(*psi, 3.0);
    }
    report.push(Claim::new(
        "estimates across the c grid match psi_c",
        "each within 3 standard errors",
        measured,
        all_agree,
    ));

    let d = psi_c_derivative_at_zero(r, z0, t);
    let h = 1e-4;
    let fd = (psi_c(r, z0, t, h)? - psi_c(r, z0, t, -h)?) / (2.0 * h);
    report.push(Claim::new(
        "derivative of psi_c at c = 0 matches a central difference",
        "relative error <= 1e-6",
        vec![Measured::exact("formula", d), Measured::exact("central_difference", fd)],
        (d - fd).abs() <= 1e-6 * d.abs().max(1.0),
    ));

    let beneficial: Vec<&(f64, Estimate, f64)> = rows.iter().filter(|row| row.0 * d < 0.0).collect();
    let best = beneficial
        .iter()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .copied();
    let (ok, measured) = match best {
        Some((c, est, _)) => (
            separated(&base.1, est, 3.0),
            vec![
                Measured::exact("derivative", d),
                Measured::exact("best_c", *c),
                Measured::estimate("best", est),
                Measured::estimate("c = 0", &base.1),
            ],
        ),
        None => (false, vec![Measured::exact("derivative", d)]),
    };
    report.push(Claim::new(
        "a correlation c != 0 in the direction given by the derivative lowers E[R_T^4] below c = 0",
        "c = 0 minus best >= 3 pooled standard errors",
        measured,
        ok,
    ));
    Ok(report)
}
