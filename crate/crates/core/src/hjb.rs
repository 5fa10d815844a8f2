//! Explicit finite differences for the extremal value functions.
//!
//! Time runs as remaining time `t`. In each state `z` the fields solve
//! `ψ_t = ½ Σ²(z) ψ_rr + (Qψ)(z)` with `Σ² = (|σ1| ∓ |σ2|)²`, the synchronous
//! (kind I) or mirror (kind II) rate.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::Serialize;

use crate::analytic::{normal_quantile, survival_no_drift};
use crate::coupling::{extremal_correlation, sgn, variance_rate, CostFunction, Extremality, VolatilityMap};
use crate::ctmc::ChainSpec;

/// Courant factor in `Δt ≤ 0.9 Δr² / max_z(rate + |Q_zz| Δr²)`.
pub const COURANT: f64 = 0.9;
/// Default tail mass left beyond the coupling box.
pub const DEFAULT_TAIL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HjbError {
    #[error("grid needs r_min < r_max and n_r >= 8 (got [{r_min}, {r_max}] with {n_r} nodes)")]
    BadGrid { r_min: f64, r_max: f64, n_r: usize },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    UnstableGrid { dt: f64, bound: f64 },
    #[error("kind I coupling needs |sigma1| != |sigma2|, violated in state {state}")]
    DegenerateKindI { state: usize },
    #[error("coupling grids must end at r_max = 0, got {0}")]
    CouplingBox(f64),
    #[error("{0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    TrackingI,
    TrackingII,
    CouplingI,
    CouplingII,
}

impl FieldKind {
    pub fn extremality(self) -> Extremality {
        match self {
            FieldKind::TrackingI | FieldKind::CouplingI => Extremality::Synchronous,
            FieldKind::TrackingII | FieldKind::CouplingII => Extremality::Mirror,
        }
    }

    pub fn is_coupling(self) -> bool {
        matches!(self, FieldKind::CouplingI | FieldKind::CouplingII)
    }

    /// Whether the HJB equation takes the infimum over `c`.
    pub fn takes_inf(self) -> bool {
        matches!(self, FieldKind::TrackingI | FieldKind::CouplingII)
    }

    fn code(self) -> u32 {
        match self {
            FieldKind::TrackingI => 0,
            FieldKind::TrackingII => 1,
            FieldKind::CouplingI => 2,
            FieldKind::CouplingII => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FieldKind::TrackingI => "tracking-I",
            FieldKind::TrackingII => "tracking-II",
            FieldKind::CouplingI => "coupling-I",
            FieldKind::CouplingII => "coupling-II",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub horizon: f64,
    pub n_t: usize,
    /// States where the chain runs; all states when absent.
    #[serde(default)]
    pub truncation_region: Option<BTreeSet<usize>>,
}

/// Largest stable time step for the mirror rates, which bound every kind.
pub fn stable_dt(chain: &ChainSpec, vol: &VolatilityMap, dr: f64) -> f64 {
    let worst = (0..chain.n_states())
        .map(|z| vol.sigma1[z].abs() + vol.sigma2[z].abs())
        .zip(0..chain.n_states())
        .map(|(s, z)| s * s + chain.exit_rate(z) * dr * dr)
        .fold(0.0, f64::max);
    if worst == 0.0 {
        f64::INFINITY
    } else {
        COURANT * dr * dr / worst
    }
}

impl GridSpec {
    /// Grid on `[r_min, r_max]` with the fewest time steps meeting the stability bound.
    pub fn stable(r_min: f64, r_max: f64, n_r: usize, horizon: f64, chain: &ChainSpec, vol: &VolatilityMap) -> Self {
        let dr = (r_max - r_min) / (n_r.max(2) - 1) as f64;
        let dt = stable_dt(chain, vol, dr);
        let n_t = ((horizon / dt).ceil() as usize).max(1);
        GridSpec {
            r_min,
            r_max,
            n_r,
            horizon,
            n_t,
            truncation_region: None,
        }
    }

    /// Tracking box `[-k, k]` with spacing close to `dr`.
    pub fn tracking(k: f64, dr: f64, horizon: f64, chain: &ChainSpec, vol: &VolatilityMap) -> Self {
        let n_r = (2.0 * k / dr).round() as usize + 1;
        Self::stable(-k, k, n_r, horizon, chain, vol)
    }

    /// Coupling box `[-K, 0]` with `K` chosen so `1 - G(-K, max rate · horizon) < tail`.
    pub fn coupling(dr: f64, horizon: f64, tail: f64, chain: &ChainSpec, vol: &VolatilityMap) -> Self {
        let k = coupling_box(vol.max_rate() * horizon, tail);
        let n_r = (k / dr).ceil() as usize + 1;
        let k = (n_r - 1) as f64 * dr;
        Self::stable(-k, 0.0, n_r, horizon, chain, vol)
    }

    pub fn with_region(mut self, region: BTreeSet<usize>) -> Self {
        self.truncation_region = Some(region);
        self
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_r - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn r_at(&self, i: usize) -> f64 {
        if i + 1 == self.n_r {
            self.r_max
        } else {
            self.r_min + i as f64 * self.dr()
        }
    }

    pub fn t_at(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    fn in_region(&self, z: usize) -> bool {
        self.truncation_region.as_ref().is_none_or(|u| u.contains(&z))
    }

    pub fn validate(&self, chain: &ChainSpec, vol: &VolatilityMap) -> Result<(), HjbError> {
        if !(self.r_min < self.r_max) || self.n_r < 8 || self.n_t == 0 || !(self.horizon > 0.0) {
            return Err(HjbError::BadGrid {
                r_min: self.r_min,
                r_max: self.r_max,
                n_r: self.n_r,
            });
        }
        vol.validate(chain).map_err(|e| HjbError::Setup(e.to_string()))?;
        let bound = stable_dt(chain, vol, self.dr());
        if self.dt() > bound * (1.0 + 1e-12) {
            return Err(HjbError::UnstableGrid { dt: self.dt(), bound });
        }
        Ok(())
    }
}

/// `K` with `2N(-K/√a) = tail`.
pub fn coupling_box(accumulated_variance: f64, tail: f64) -> f64 {
    -accumulated_variance.sqrt() * normal_quantile(0.5 * tail)
}

/// Value field on the `(r, state, t)` lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct GridValue {
    pub grid: GridSpec,
    pub kind: FieldKind,
    pub n_states: usize,
    /// Layout `[t][state][r]`.
    values: Vec<f64>,
}

impl GridValue {
    fn index(&self, i: usize, z: usize, n: usize) -> usize {
        (n * self.n_states + z) * self.grid.n_r + i
    }

    pub fn value(&self, i: usize, z: usize, n: usize) -> f64 {
        self.values[self.index(i, z, n)]
    }

    pub fn layer(&self, z: usize, n: usize) -> &[f64] {
        let start = self.index(0, z, n);
        &self.values[start..start + self.grid.n_r]
    }

    /// Linear interpolation in `r` at the final time.
    pub fn probe(&self, r: f64, z: usize) -> f64 {
        self.probe_at(r, z, self.grid.n_t)
    }

    pub fn probe_at(&self, r: f64, z: usize, n: usize) -> f64 {
        let g = &self.grid;
        let x = ((r - g.r_min) / g.dr()).clamp(0.0, (g.n_r - 1) as f64);
        let i = (x.floor() as usize).min(g.n_r - 2);
        let w = x - i as f64;
        let layer = self.layer(z, n);
        (1.0 - w) * layer[i] + w * layer[i + 1]
    }

    /// Discrete second difference in `r` at interior node `i`.
    pub fn second_difference(&self, i: usize, z: usize, n: usize) -> f64 {
        let l = self.layer(z, n);
        (l[i + 1] - 2.0 * l[i] + l[i - 1]) / self.grid.dr().powi(2)
    }

    /// Rows `r, state_id, t, value`.
    pub fn write_csv<W: Write>(&self, chain: &ChainSpec, out: W) -> csv::Result<()> {
        let levels: Vec<usize> = (0..=self.grid.n_t).collect();
        self.write_csv_levels(chain, &levels, out)
    }

    /// Time levels `0, n_t/k, ..., n_t`, at most `k + 1` of them.
    pub fn sparse_levels(&self, k: usize) -> Vec<usize> {
        let k = k.clamp(1, self.grid.n_t);
        let mut levels: Vec<usize> = (0..=k).map(|j| j * self.grid.n_t / k).collect();
        levels.dedup();
        levels
    }

    /// Same layout as `write_csv`, restricted to the given time levels.
    pub fn write_csv_levels<W: Write>(&self, chain: &ChainSpec, levels: &[usize], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "state_id", "t", "value"])?;
        for &n in levels {
            for z in 0..self.n_states {
                for i in 0..self.grid.n_r {
                    w.write_record([
                        self.grid.r_at(i).to_string(),
                        chain.states[z].id.clone(),
                        self.grid.t_at(n).to_string(),
                        self.value(i, z, n).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian dump: magic `RCGV`, `u32` format version 1, `u32` kind
    /// (0 tracking-I, 1 tracking-II, 2 coupling-I, 3 coupling-II), `u64` n_r,
    /// `u64` state count, `u64` time levels (n_t + 1), `f64` r_min, r_max,
    /// horizon, then the values as `f64` with r varying fastest, then state,
    /// then time.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"RCGV")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&self.kind.code().to_le_bytes())?;
        out.write_all(&(self.grid.n_r as u64).to_le_bytes())?;
        out.write_all(&(self.n_states as u64).to_le_bytes())?;
        out.write_all(&(self.grid.n_t as u64 + 1).to_le_bytes())?;
        for x in [self.grid.r_min, self.grid.r_max, self.grid.horizon] {
            out.write_all(&x.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> io::Result<(FieldKind, usize, usize, usize, Vec<f64>)> {
        let bad = || io::Error::new(io::ErrorKind::InvalidData, "not a grid dump");
        if bytes.len() < 48 || &bytes[..4] != b"RCGV" {
            return Err(bad());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
        let kind = match u32_at(8) {
            0 => FieldKind::TrackingI,
            1 => FieldKind::TrackingII,
            2 => FieldKind::CouplingI,
            3 => FieldKind::CouplingII,
            _ => return Err(bad()),
        };
        let (n_r, n_states, levels) = (u64_at(12), u64_at(20), u64_at(28));
        let body = &bytes[60..];
        if body.len() != 8 * n_r * n_states * levels {
            return Err(bad());
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((kind, n_r, n_states, levels, values))
    }
}

fn kind_rates(vol: &VolatilityMap, kind: FieldKind) -> Vec<f64> {
    (0..vol.n_states())
        .map(|z| variance_rate(vol, z, extremal_correlation(vol, z, kind.extremality())))
        .collect()
}

/// One explicit step from layer `prev` into `next`, interior nodes of states
/// listed in `evolving`.
fn explicit_step(
    prev: &[f64],
    next: &mut [f64],
    n_r: usize,
    rates: &[f64],
    generator: &[Vec<f64>],
    evolving: &[bool],
    lambda: f64,
    dt: f64,
) {
    let n_states = rates.len();
    for z in 0..n_states {
        if !evolving[z] {
            continue;
        }
        let row = &prev[z * n_r..(z + 1) * n_r];
        for i in 1..n_r - 1 {
            let diffusion = 0.5 * rates[z] * lambda * (row[i + 1] - 2.0 * row[i] + row[i - 1]);
            let jumps: f64 = generator[z]
                .iter()
                .enumerate()
                .filter(|(_, q)| **q != 0.0)
                .map(|(w, q)| q * prev[w * n_r + i])
                .sum();
            next[z * n_r + i] = row[i] + diffusion + dt * jumps;
        }
    }
}

/// Tracking value `E[φ(R_t)]` for the stopped process, kind I or II.
pub fn solve_tracking_value(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    phi: &CostFunction,
    grid: &GridSpec,
    kind: FieldKind,
) -> Result<GridValue, HjbError> {
    assert!(!kind.is_coupling(), "solve_coupling_value handles coupling kinds");
    grid.validate(chain, vol)?;
    let n_states = chain.n_states();
    let (n_r, n_t) = (grid.n_r, grid.n_t);
    let layer = n_states * n_r;
    let mut values = vec![0.0; layer * (n_t + 1)];
    let payoff: Vec<f64> = (0..n_r).map(|i| phi.eval(grid.r_at(i))).collect();
    for n in 0..=n_t {
        for z in 0..n_states {
            let start = n * layer + z * n_r;
            values[start..start + n_r].copy_from_slice(&payoff);
        }
    }
    let rates = kind_rates(vol, kind);
    let evolving: Vec<bool> = (0..n_states).map(|z| grid.in_region(z)).collect();
    let lambda = grid.dt() / grid.dr().powi(2);
    for n in 0..n_t {
        let (done, rest) = values.split_at_mut((n + 1) * layer);
        let prev = &done[n * layer..];
        explicit_step(prev, &mut rest[..layer], n_r, &rates, &chain.generator, &evolving, lambda, grid.dt());
    }
    Ok(GridValue {
        grid: grid.clone(),
        kind,
        n_states,
        values,
    })
}

/// Probability of no coupling by remaining time `t` on `[r_min, 0]`.
pub fn solve_coupling_value(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    grid: &GridSpec,
    kind: FieldKind,
) -> Result<GridValue, HjbError> {
    assert!(kind.is_coupling(), "solve_tracking_value handles tracking kinds");
    grid.validate(chain, vol)?;
    if grid.r_max != 0.0 {
        return Err(HjbError::CouplingBox(grid.r_max));
    }
    if kind == FieldKind::CouplingI {
        for z in (0..chain.n_states()).filter(|&z| grid.in_region(z)) {
            if vol.sigma1[z].abs() == vol.sigma2[z].abs() {
                return Err(HjbError::DegenerateKindI { state: z });
            }
        }
    }
    let n_states = chain.n_states();
    let (n_r, n_t) = (grid.n_r, grid.n_t);
    let layer = n_states * n_r;
    let mut values = vec![1.0; layer * (n_t + 1)];
    let rates = kind_rates(vol, kind);
    let boundary_rate = rates.iter().copied().fold(0.0, f64::max);
    let generator = if grid.truncation_region.is_some() {
        chain.stopped(grid.truncation_region.as_ref().unwrap()).generator
    } else {
        chain.generator.clone()
    };
    let evolving = vec![true; n_states];
    let lambda = grid.dt() / grid.dr().powi(2);
    for n in 0..n_t {
        let (done, rest) = values.split_at_mut((n + 1) * layer);
        let prev = &done[n * layer..];
        let next = &mut rest[..layer];
        explicit_step(prev, next, n_r, &rates, &generator, &evolving, lambda, grid.dt());
        let left = survival_no_drift(grid.r_min, boundary_rate * grid.t_at(n + 1)).expect("r_min < 0");
        for z in 0..n_states {
            next[z * n_r] = left;
            next[z * n_r + n_r - 1] = 0.0;
        }
    }
    Ok(GridValue {
        grid: grid.clone(),
        kind,
        n_states,
        values,
    })
}

/// Move `|σ1|` away from `|σ2|` by `epsilon` wherever they coincide, so the
/// kind I coupling equation is non-degenerate.
pub fn perturb_equal_volatilities(vol: &VolatilityMap, epsilon: f64) -> VolatilityMap {
    let mut out = vol.clone();
    for z in 0..vol.n_states() {
        if vol.sigma1[z].abs() == vol.sigma2[z].abs() {
            out.sigma1[z] += epsilon * sgn(vol.sigma1[z]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeIssue {
    pub r: f64,
    pub state: usize,
    pub t: f64,
    pub detail: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalityReport {
    pub kind: FieldKind,
    pub nodes_checked: usize,
    pub sign_failures: usize,
    pub sweep_failures: usize,
    /// Nodes where `|K^ĉ F|` exceeds rounding noise plus `1e-9` of its terms.
    pub residual_failures: usize,
    /// Largest `|K^ĉ F|` relative to the size of its terms.
    pub max_extremal_residual: f64,
    pub worst: Vec<NodeIssue>,
    pub passed: bool,
}

/// Check the sign of the second difference and that the extremum of the
/// residual `½ rate(c) ΔF + QF - ∂_t F` over a uniform `c` grid sits at `ĉ`.
pub fn verify_hjb_extremality(
    field: &GridValue,
    chain: &ChainSpec,
    vol: &VolatilityMap,
    c_grid_size: usize,
) -> ExtremalityReport {
    let g = &field.grid;
    let kind = field.kind;
    let cs: Vec<f64> = (0..c_grid_size.max(2))
        .map(|k| -1.0 + 2.0 * k as f64 / (c_grid_size.max(2) - 1) as f64)
        .collect();
    let generator = match (&g.truncation_region, kind.is_coupling()) {
        (Some(u), true) => chain.stopped(u).generator,
        _ => chain.generator.clone(),
    };
    let scale = (0..=g.n_t)
        .flat_map(|n| (0..field.n_states).map(move |z| (z, n)))
        .flat_map(|(z, n)| field.layer(z, n).iter().copied())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let sign_tol = 1e-6 * scale;
    let mut issues: Vec<NodeIssue> = Vec::new();
    let (mut checked, mut sign_failures, mut sweep_failures, mut residual_failures) = (0, 0, 0, 0);
    let d2_noise = 8.0 * f64::EPSILON * scale / g.dr().powi(2);
    let mut max_residual = 0.0f64;
    for n in 0..g.n_t {
        for z in 0..field.n_states {
            if !kind.is_coupling() && !g.in_region(z) {
                continue;
            }
            let c_hat = extremal_correlation(vol, z, kind.extremality());
            for i in 1..g.n_r - 1 {
                checked += 1;
                let d2 = field.second_difference(i, z, n);
                let bad_sign = if kind.is_coupling() { d2 > sign_tol } else { d2 < -sign_tol };
                if bad_sign {
                    sign_failures += 1;
                    issues.push(NodeIssue {
                        r: g.r_at(i),
                        state: z,
                        t: g.t_at(n),
                        detail: "second difference has the wrong sign".into(),
                        magnitude: d2,
                    });
                }
                let jumps: f64 = generator[z]
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| **q != 0.0)
                    .map(|(w, q)| q * field.value(i, w, n))
                    .sum();
                let dt_term = (field.value(i, z, n + 1) - field.value(i, z, n)) / g.dt();
                let residual = |c: f64| 0.5 * variance_rate(vol, z, c) * d2 + jumps - dt_term;
                let term_scale = (0.5 * vol.max_rate() * d2.abs() + jumps.abs() + dt_term.abs()).max(1e-300);
                let at_hat = residual(c_hat);
                max_residual = max_residual.max(at_hat.abs() / term_scale.max(1.0));
                let local = (0..field.n_states)
                    .map(|w| field.value(i, w, n).abs())
                    .chain([field.value(i - 1, z, n), field.value(i + 1, z, n), field.value(i, z, n + 1)].map(f64::abs))
                    .fold(0.0, f64::max);
                let noise = 0.5 * vol.max_rate() * d2_noise
                    + 8.0 * f64::EPSILON * local * (1.0 / g.dt() + 2.0 * generator[z][z].abs());
                if at_hat.abs() > noise + 1e-9 * term_scale.max(1.0) {
                    residual_failures += 1;
                    issues.push(NodeIssue {
                        r: g.r_at(i),
                        state: z,
                        t: g.t_at(n),
                        detail: "scheme residual at the extremal correlation".into(),
                        magnitude: at_hat,
                    });
                }
                let tie = 0.5 * vol.max_rate() * d2_noise + 1e-12 * term_scale.max(1.0);
                let beaten = cs.iter().any(|&c| {
                    let v = residual(c);
                    if kind.takes_inf() {
                        v < at_hat - tie
                    } else {
                        v > at_hat + tie
                    }
                });
                if beaten {
                    sweep_failures += 1;
                    issues.push(NodeIssue {
                        r: g.r_at(i),
                        state: z,
                        t: g.t_at(n),
                        detail: "c sweep extremum away from the extremal correlation".into(),
                        magnitude: at_hat,
                    });
                }
            }
        }
    }
    issues.sort_by(|a, b| b.magnitude.abs().total_cmp(&a.magnitude.abs()));
    issues.truncate(10);
    let passed = sign_failures == 0 && sweep_failures == 0 && residual_failures == 0;
    ExtremalityReport {
        kind,
        nodes_checked: checked,
        sign_failures,
        sweep_failures,
        residual_failures,
        max_extremal_residual: max_residual,
        worst: issues,
        passed,
    }
}

/// Nodewise `lower ≤ upper + tol` over the whole lattice.
pub fn fields_ordered(lower: &GridValue, upper: &GridValue, tol: f64) -> bool {
    lower.values.len() == upper.values.len() && lower.values.iter().zip(&upper.values).all(|(a, b)| *a <= b + tol)
}

/// Coupling field non-increasing in `t` and non-decreasing in `|r|`, within `tol`.
pub fn coupling_monotone(field: &GridValue, tol: f64) -> bool {
    let g = &field.grid;
    for z in 0..field.n_states {
        for n in 0..=g.n_t {
            let l = field.layer(z, n);
            if l.windows(2).any(|w| w[1] > w[0] + tol) {
                return false;
            }
            if n > 0 {
                let prev = field.layer(z, n - 1);
                if l.iter().zip(prev).any(|(a, b)| *a > b + tol) {
                    return false;
                }
            }
        }
    }
    true
}

/// Probe values on successively halved spacings, with the observed change
/// between the last two levels and the first-order error estimate from the
/// first two.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub spacings: Vec<f64>,
    pub values: Vec<f64>,
    pub last_change: f64,
    pub extrapolated_error: f64,
    pub passed: bool,
}

pub fn refinement_study(solve: impl Fn(f64) -> Result<f64, HjbError>, dr: f64) -> Result<RefinementStudy, HjbError> {
    let spacings = vec![dr, dr / 2.0, dr / 4.0];
    let values = spacings.iter().map(|&h| solve(h)).collect::<Result<Vec<_>, _>>()?;
    let last_change = (values[2] - values[1]).abs();
    let extrapolated_error = (values[1] - values[0]).abs();
    Ok(RefinementStudy {
        passed: last_change < 4.0 * extrapolated_error || last_change < 1e-12,
        spacings,
        values,
        last_change,
        extrapolated_error,
    })
}
