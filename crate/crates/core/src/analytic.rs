//! Closed-form oracles.
//!
//! Barrier survival for driftless and drifted Brownian motion, the fourth-moment
//! polynomial of the independent-volatility example, deterministic time changes,
//! and the geometric Brownian motion stochastic exponential.

use serde::Serialize;

use crate::quad;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("start r = {0} must be strictly negative")]
    NonNegativeStart(f64),
    #[error("accumulated variance {0} must be non-negative")]
    NegativeVariance(f64),
    #[error("volatility vanishes at time {time} (|sigma1| = {sigma1}, |sigma2| = {sigma2})")]
    NonPositiveVolatility { time: f64, sigma1: f64, sigma2: f64 },
    #[error("invalid drift configuration: {0}")]
    InvalidDriftConfig(String),
    #[error("argument {name} = {value} out of range")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal cdf.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let mut x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // Halley polish against the accurate cdf.
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `G(r, a) = 2N(-r/√a) - 1`: probability that a Brownian motion started at
/// `r < 0` stays below zero while accumulating variance `a`.
pub fn survival_no_drift(r: f64, a: f64) -> Result<f64, AnalyticError> {
    if !(r < 0.0) {
        return Err(AnalyticError::NonNegativeStart(r));
    }
    if a < 0.0 {
        return Err(AnalyticError::NegativeVariance(a));
    }
    if a == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::erf(-r / (2.0 * a).sqrt()))
}

/// `∂²G/∂r² = 2 r a^{-3/2} n(r/√a)`.
pub fn survival_no_drift_rr(r: f64, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    2.0 * r * a.powf(-1.5) * normal_pdf(r / a.sqrt())
}

/// `R_t = r + μt + B_t - σ̄ V_t` with `V = ±B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub r: f64,
    pub mu: f64,
    pub sigma_bar: f64,
    pub horizon: f64,
}

impl DriftConfig {
    pub fn new(r: f64, mu: f64, sigma_bar: f64, horizon: f64) -> Result<Self, AnalyticError> {
        let cfg = DriftConfig {
            r,
            mu,
            sigma_bar,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.r < 0.0) {
            return Err(AnalyticError::InvalidDriftConfig(format!("r = {} must be < 0", self.r)));
        }
        if !(self.horizon > 0.0) {
            return Err(AnalyticError::InvalidDriftConfig(format!(
                "horizon = {} must be > 0",
                self.horizon
            )));
        }
        if !(self.sigma_bar > 0.0) || self.sigma_bar == 1.0 {
            return Err(AnalyticError::InvalidDriftConfig(format!(
                "sigma_bar = {} must be positive and different from 1",
                self.sigma_bar
            )));
        }
        Ok(())
    }

    /// Effective volatility of the synchronous difference, `|1 - σ̄|`.
    pub fn sync_volatility(&self) -> f64 {
        (1.0 - self.sigma_bar).abs()
    }

    /// Effective volatility of the mirror difference, `1 + σ̄`.
    pub fn mirror_volatility(&self) -> f64 {
        1.0 + self.sigma_bar
    }

    pub fn v_sync(&self) -> f64 {
        1.0 / self.sync_volatility()
    }

    pub fn v_mirror(&self) -> f64 {
        1.0 / self.mirror_volatility()
    }
}

/// Both readings of the drifted survival function at one `v = 1/volatility`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftSurvival {
    pub v: f64,
    /// `N(-(r+μT)v/√T) - e^{-2μrv²} N(-(r-μT)v/√T)`, the closed form taken
    /// literally.
    pub printed: f64,
    /// `N(-(r+μT)v/√T) - e^{-2μrv²} N((r-μT)v/√T)`, the reflection-principle
    /// survival probability of `r + μt + W_t/v` below zero up to `T`.
    pub reflection: f64,
}

/// Evaluate the drifted survival function `F(v)` both as printed and by the
/// reflection principle. Only the reflection value is a probability; the
/// printed form is kept so the Monte Carlo cross-check can report on it.
pub fn drift_survival_f(v: f64, cfg: &DriftConfig) -> Result<DriftSurvival, AnalyticError> {
    if !(v > 0.0) {
        return Err(AnalyticError::OutOfRange { name: "v", value: v });
    }
    let DriftConfig { r, mu, horizon, .. } = *cfg;
    let sqrt_t = horizon.sqrt();
    let first = normal_cdf(-(r + mu * horizon) * v / sqrt_t);
    let weight = -2.0 * mu * r * v * v;
    let printed = first - (weight + normal_cdf(-(r - mu * horizon) * v / sqrt_t).ln()).exp();
    let reflection = first - (weight + normal_cdf((r - mu * horizon) * v / sqrt_t).ln()).exp();
    Ok(DriftSurvival {
        v,
        printed,
        reflection,
    })
}

/// `k(c) = 5 - 4√(1-c²)`.
pub fn k_of_c(c: f64) -> f64 {
    5.0 - 4.0 * (1.0 - c * c).max(0.0).sqrt()
}

/// `E_{r,z}[R_t(V^c)^4]` for `R = r + ∫2Z dB - ∫Z dV^c`, `Z = z + B^⊥`.
pub fn psi_c(r: f64, z: f64, t: f64, c: f64) -> Result<f64, AnalyticError> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(AnalyticError::OutOfRange { name: "c", value: c });
    }
    Ok(psi_c_unchecked(r, z, t, c))
}

fn psi_c_unchecked(r: f64, z: f64, t: f64, c: f64) -> f64 {
    let k = k_of_c(c);
    let (r2, z2) = (r * r, z * z);
    r2 * r2
        + 6.0 * k * r2 * z2 * t
        + 3.0 * k * (r2 + k * z2 * z2 - 4.0 * c * r * z2) * t * t
        + k * ((7.0 * k + 8.0 * c * c) * z2 - 4.0 * c * r) * t.powi(3)
        + (7.0 * k * k / 4.0 + 2.0 * c * c * k) * t.powi(4)
}

/// `½k(c)z²ψ_rr - czψ_rz + ½ψ_zz - ψ_t` at one point, by Richardson-extrapolated
/// central differences with steps 0.02 and 0.01.
pub fn psi_c_pde_residual(r: f64, z: f64, t: f64, c: f64) -> Result<f64, AnalyticError> {
    psi_c(r, z, t, c)?;
    if !(t > 0.02) {
        return Err(AnalyticError::OutOfRange { name: "t", value: t });
    }
    let p = |r: f64, z: f64, t: f64| psi_c_unchecked(r, z, t, c);
    let parts = |h: f64| {
        let rr = (p(r + h, z, t) - 2.0 * p(r, z, t) + p(r - h, z, t)) / (h * h);
        let zz = (p(r, z + h, t) - 2.0 * p(r, z, t) + p(r, z - h, t)) / (h * h);
        let rz = (p(r + h, z + h, t) - p(r + h, z - h, t) - p(r - h, z + h, t) + p(r - h, z - h, t)) / (4.0 * h * h);
        let pt = (p(r, z, t + h) - p(r, z, t - h)) / (2.0 * h);
        [rr, zz, rz, pt]
    };
    let (coarse, fine) = (parts(0.02), parts(0.01));
    let d: Vec<f64> = (0..4).map(|i| (4.0 * fine[i] - coarse[i]) / 3.0).collect();
    Ok(0.5 * k_of_c(c) * z * z * d[0] - c * z * d[2] + 0.5 * d[1] - d[3])
}

/// `∂ψ^c/∂c` at `c = 0`: `-r(12 z0² T² + 4T³)`.
///
/// Differentiating the polynomial term by term (with `k'(0) = 0`) gives the
/// `T²` on the first term; at `T = 1` this equals `-r(12 z0² + 4)`.
pub fn psi_c_derivative_at_zero(r: f64, z0: f64, horizon: f64) -> f64 {
    -r * (12.0 * z0 * z0 * horizon * horizon + 4.0 * horizon.powi(3))
}

/// Tabulated `A_I(t) = ∫(|σ1|-|σ2|)²`, `A_II(t) = ∫(|σ1|+|σ2|)²` and their inverses.
pub struct TimeChange<'a> {
    sigma1: Box<dyn Fn(f64) -> f64 + 'a>,
    sigma2: Box<dyn Fn(f64) -> f64 + 'a>,
    horizon: f64,
    nodes: Vec<f64>,
    a_one: Vec<f64>,
    a_two: Vec<f64>,
}

/// Default number of tabulation intervals.
pub const TIME_CHANGE_NODES: usize = 4096;

const NODE_TOL: f64 = 1e-13;

/// Build the deterministic time changes for volatility functions of time.
pub fn deterministic_time_change<'a>(
    sigma1: impl Fn(f64) -> f64 + 'a,
    sigma2: impl Fn(f64) -> f64 + 'a,
    horizon: f64,
) -> Result<TimeChange<'a>, AnalyticError> {
    if !(horizon > 0.0) {
        return Err(AnalyticError::OutOfRange {
            name: "horizon",
            value: horizon,
        });
    }
    let n = TIME_CHANGE_NODES;
    let nodes: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    for &t in &nodes {
        let (s1, s2) = (sigma1(t).abs(), sigma2(t).abs());
        if !(s1 > 0.0 && s2 > 0.0) {
            return Err(AnalyticError::NonPositiveVolatility {
                time: t,
                sigma1: s1,
                sigma2: s2,
            });
        }
    }
    let mut a_one = vec![0.0; n + 1];
    let mut a_two = vec![0.0; n + 1];
    for k in 0..n {
        let (t0, t1) = (nodes[k], nodes[k + 1]);
        let d1 = quad::integrate(
            |s| (sigma1(s).abs() - sigma2(s).abs()).powi(2),
            t0,
            t1,
            NODE_TOL,
        );
        let d2 = quad::integrate(
            |s| (sigma1(s).abs() + sigma2(s).abs()).powi(2),
            t0,
            t1,
            NODE_TOL,
        );
        a_one[k + 1] = a_one[k] + d1;
        a_two[k + 1] = a_two[k] + d2;
    }
    Ok(TimeChange {
        sigma1: Box::new(sigma1),
        sigma2: Box::new(sigma2),
        horizon,
        nodes,
        a_one,
        a_two,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremal {
    /// Synchronous: rate `(|σ1|-|σ2|)²`.
    One,
    /// Mirror: rate `(|σ1|+|σ2|)²`.
    Two,
}

impl<'a> TimeChange<'a> {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, kind: Extremal, s: f64) -> f64 {
        let (a, b) = ((self.sigma1)(s).abs(), (self.sigma2)(s).abs());
        match kind {
            Extremal::One => (a - b).powi(2),
            Extremal::Two => (a + b).powi(2),
        }
    }

    fn table(&self, kind: Extremal) -> &[f64] {
        match kind {
            Extremal::One => &self.a_one,
            Extremal::Two => &self.a_two,
        }
    }

    /// `A(t)` for `t ∈ [0, horizon]`.
    pub fn accumulated(&self, kind: Extremal, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let n = self.nodes.len() - 1;
        let k = ((t / self.horizon) * n as f64).floor().min((n - 1) as f64) as usize;
        self.table(kind)[k] + quad::integrate(|s| self.rate(kind, s), self.nodes[k], t, NODE_TOL)
    }

    pub fn a_one(&self, t: f64) -> f64 {
        self.accumulated(Extremal::One, t)
    }

    pub fn a_two(&self, t: f64) -> f64 {
        self.accumulated(Extremal::Two, t)
    }

    /// Right-continuous inverse `E(u) = inf{t : A(t) > u}`, clamped to the horizon.
    pub fn inverse(&self, kind: Extremal, u: f64) -> f64 {
        let table = self.table(kind);
        if u <= 0.0 {
            return 0.0;
        }
        if u >= *table.last().expect("table is non-empty") {
            return self.horizon;
        }
        let k = table.partition_point(|&a| a <= u).saturating_sub(1);
        let (mut lo, mut hi) = (self.nodes[k], self.nodes[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.accumulated(kind, mid) <= u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * self.horizon.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn e_one(&self, u: f64) -> f64 {
        self.inverse(Extremal::One, u)
    }

    pub fn e_two(&self, u: f64) -> f64 {
        self.inverse(Extremal::Two, u)
    }
}

/// `M_t = exp(B_t - t/2)` and `Z = z0 M` on a grid, with Euler sums of
/// `∫σ_i(Z) dB` for `σ_i(z) = -iz` beside their closed forms `-i z0 (M_t - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GbmPaths {
    pub times: Vec<f64>,
    pub brownian: Vec<f64>,
    pub m: Vec<f64>,
    pub z: Vec<f64>,
    /// Euler sums for `i = 1` and `i = 2`.
    pub euler: [Vec<f64>; 2],
    pub closed_form: [Vec<f64>; 2],
}

impl GbmPaths {
    /// `|Euler - closed form|` at the final time for volatility index `i ∈ {1, 2}`.
    pub fn terminal_discrepancy(&self, i: usize) -> f64 {
        let k = self.times.len() - 1;
        (self.euler[i - 1][k] - self.closed_form[i - 1][k]).abs()
    }

    pub fn max_discrepancy(&self, i: usize) -> f64 {
        self.euler[i - 1]
            .iter()
            .zip(&self.closed_form[i - 1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn stochastic_exponential_gbm(z0: f64, increments: &[f64], step: f64) -> Result<GbmPaths, AnalyticError> {
    if !(z0 > 0.0) {
        return Err(AnalyticError::OutOfRange { name: "z0", value: z0 });
    }
    if !(step > 0.0) {
        return Err(AnalyticError::OutOfRange {
            name: "step",
            value: step,
        });
    }
    let n = increments.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut brownian = Vec::with_capacity(n + 1);
    let mut m = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut euler = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    let mut closed = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    let (mut b, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let t = k as f64 * step;
        let mk = (b - 0.5 * t).exp();
        times.push(t);
        brownian.push(b);
        m.push(mk);
        z.push(z0 * mk);
        euler[0].push(e1);
        euler[1].push(e2);
        closed[0].push(-z0 * (mk - 1.0));
        closed[1].push(-2.0 * z0 * (mk - 1.0));
        if k < n {
            let db = increments[k];
            e1 += -z0 * mk * db;
            e2 += -2.0 * z0 * mk * db;
            b += db;
        }
    }
    Ok(GbmPaths {
        times,
        brownian,
        m,
        z,
        euler,
        closed_form: closed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    // Reference values from a 40-digit evaluation of the normal cdf.
    const NCDF_REFERENCE: [(f64, f64); 11] = [
        (-8.0, 6.220_960_574_271_784_1e-16),
        (-5.0, 2.866_515_718_791_939_1e-7),
        (-3.0, 0.001_349_898_031_630_094_5),
        (-1.0, 0.158_655_253_931_457_05),
        (-0.333_333_333_333_333_3, 0.369_441_340_181_763_65),
        (0.0, 0.5),
        (0.5, 0.691_462_461_274_013_1),
        (1.0, 0.841_344_746_068_542_9),
        (2.5, 0.993_790_334_674_223_9),
        (5.0, 0.999_999_713_348_428_1),
        (8.0, 0.999_999_999_999_999_4),
    ];

    #[test]
    fn normal_cdf_matches_reference() {
        for (x, want) in NCDF_REFERENCE {
            assert!((normal_cdf(x) - want).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn normal_cdf_monotone_on_grid() {
        let mut prev = 0.0;
        for k in 0..=16_000 {
            let x = -8.0 + k as f64 * 1e-3;
            let v = normal_cdf(x);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [0.005, 0.1, 0.5, 0.9, 0.995] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-12);
        }
        assert!((normal_quantile(0.995) - 2.575_829_303_548_900_4).abs() < 1e-9);
    }

    #[test]
    fn survival_anchors() {
        assert_eq!(survival_no_drift(-1.0, 0.0).unwrap(), 1.0);
        assert!((survival_no_drift(-1.0, 1e-12).unwrap() - 1.0).abs() < 1e-15);
        assert!((survival_no_drift(-1.0, 1.0).unwrap() - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert!((survival_no_drift(-1.0, 9.0).unwrap() - 0.261_117_319_636_472_7).abs() < 1e-14);
        assert!(matches!(
            survival_no_drift(0.0, 1.0),
            Err(AnalyticError::NonNegativeStart(_))
        ));
    }

    #[test]
    fn survival_monotone_in_variance_and_distance() {
        let r = -0.7;
        let mut prev = 1.0;
        for k in 1..200 {
            let v = survival_no_drift(r, k as f64 * 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
        let mut prev = 0.0;
        for k in 1..200 {
            let v = survival_no_drift(-(k as f64) * 0.02, 2.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn survival_second_derivative_matches_differences() {
        let (r, a, h) = (-0.8, 2.5, 1e-4);
        let g = |x: f64| survival_no_drift(x, a).unwrap();
        let fd = (g(r + h) - 2.0 * g(r) + g(r - h)) / (h * h);
        assert!((fd - survival_no_drift_rr(r, a)).abs() < 1e-6);
        assert!(survival_no_drift_rr(r, a) < 0.0);
    }

    #[test]
    fn drift_free_reduces_to_survival() {
        let cfg = DriftConfig::new(-1.3, 0.0, 2.0, 1.7).unwrap();
        for v in [0.2, 1.0 / 3.0, 0.8, 1.0, 2.5] {
            let f = drift_survival_f(v, &cfg).unwrap();
            let g = survival_no_drift(cfg.r, cfg.horizon / (v * v)).unwrap();
            assert!((f.reflection - g).abs() < 1e-12, "v = {v}");
            // The printed form collapses to zero without drift.
            assert!(f.printed.abs() < 1e-15);
        }
    }

    #[test]
    fn printed_form_strictly_decreasing_on_interval() {
        let cfg = DriftConfig::new(-1.0, 1.0, 2.0, 1.0).unwrap();
        let (lo, hi) = (cfg.v_mirror(), cfg.v_sync());
        let h = 1e-6;
        for k in 0..100 {
            let v = lo + (hi - lo) * k as f64 / 99.0;
            let d = (drift_survival_f(v + h, &cfg).unwrap().printed
                - drift_survival_f(v - h, &cfg).unwrap().printed)
                / (2.0 * h);
            assert!(d < 0.0, "v = {v}");
        }
    }

    #[test]
    fn drift_config_rejects_unit_sigma() {
        assert!(DriftConfig::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(DriftConfig::new(1.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn psi_c_boundary_and_anchor() {
        assert_eq!(psi_c(1.7, -0.4, 0.0, 0.3).unwrap(), 1.7f64.powi(4));
        assert!((psi_c(1.0, 1.0, 1.0, 0.0).unwrap() - 21.75).abs() < 1e-14);
        assert!(psi_c(0.0, 0.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn psi_c_solves_its_pde() {
        let mut s = rng_stream(11, 0);
        for _ in 0..20 {
            let r = 2.0 * s.uniform() - 1.0;
            let z = 2.0 * s.uniform() - 1.0;
            let t = 0.1 + s.uniform();
            let c = 1.6 * s.uniform() - 0.8;
            let residual = psi_c_pde_residual(r, z, t, c).unwrap();
            assert!(residual.abs() < 1e-6, "residual {residual}");
        }
    }

    #[test]
    fn psi_c_symmetries() {
        let mut s = rng_stream(12, 0);
        for _ in 0..50 {
            let (r, z, t, c) = (s.normal(), s.normal(), s.uniform() * 2.0, s.uniform() * 2.0 - 1.0);
            let base = psi_c(r, z, t, c).unwrap();
            assert_eq!(base, psi_c(r, -z, t, c).unwrap());
            assert!((base - psi_c(-r, z, t, -c).unwrap()).abs() < 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_at_zero() {
        assert_eq!(psi_c_derivative_at_zero(0.0, 1.0, 1.0), 0.0);
        assert_eq!(psi_c_derivative_at_zero(1.0, 1.0, 1.0), -16.0);
        let h = 1e-4;
        for (r, z0, t) in [(1.0, 1.0, 1.0), (-0.5, 2.0, 0.7), (2.0, 0.3, 1.9)] {
            let fd = (psi_c(r, z0, t, h).unwrap() - psi_c(r, z0, t, -h).unwrap()) / (2.0 * h);
            let d = psi_c_derivative_at_zero(r, z0, t);
            assert!(((fd - d) / d).abs() < 1e-6, "({r}, {z0}, {t}): {fd} vs {d}");
        }
    }

    #[test]
    fn constant_time_change() {
        let tc = deterministic_time_change(|_| 1.0, |_| 2.0, 2.0).unwrap();
        for t in [0.0, 0.3, 1.0, 2.0] {
            assert!((tc.a_two(t) - 9.0 * t).abs() < 1e-12);
            assert!((tc.a_one(t) - t).abs() < 1e-12);
        }
        assert!((tc.e_two(4.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn piecewise_constant_time_change() {
        let s1 = |t: f64| if t < 0.5 { 1.0 } else { 3.0 };
        let tc = deterministic_time_change(s1, |_| 1.0, 1.0).unwrap();
        assert!((tc.a_two(0.5) - 2.0).abs() < 1e-12);
        assert!((tc.a_two(1.0) - 10.0).abs() < 1e-12);
        assert!((tc.a_two(0.75) - 6.0).abs() < 1e-12);
        assert!((tc.a_one(0.25)).abs() < 1e-12);
        assert!((tc.a_one(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_volatility_time_change() {
        let tc = deterministic_time_change(|s| 1.0 + s, |_| 1.0, 1.0).unwrap();
        assert!((tc.a_one(1.0) - 1.0 / 3.0).abs() < 1e-9);
        for t in [0.1, 0.4, 0.9] {
            assert!(tc.a_one(t) <= tc.a_two(t));
            let u = tc.a_two(t);
            assert!((tc.a_two(tc.e_two(u)) - u).abs() < 1e-8);
            let u1 = tc.a_one(t);
            assert!((tc.a_one(tc.e_one(u1)) - u1).abs() < 1e-8);
        }
    }

    #[test]
    fn time_change_rejects_vanishing_volatility() {
        let err = deterministic_time_change(|s| s - 0.5, |_| 1.0, 1.0).err().unwrap();
        assert!(matches!(err, AnalyticError::NonPositiveVolatility { .. }));
    }

    #[test]
    fn zero_increments_give_deterministic_m() {
        let g = stochastic_exponential_gbm(2.0, &[0.0; 10], 0.1).unwrap();
        assert!((g.m[10] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.z[10] - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }
}
