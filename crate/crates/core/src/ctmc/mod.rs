//! Finite-state continuous-time Markov chains.
//!
//! A [`ChainSpec`] holds the state labels, the generator matrix and the
//! starting state. Paths are simulated exactly from the jump-chain /
//! holding-time description, and the semigroup `exp(tQ)` provides the
//! independent oracle that every expectation check in this crate is compared
//! against.

mod expm;

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::quad;
use crate::rng::RandomStream;

pub use expm::expm;

/// Tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// One state of a chain: a label and an optional embedding in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

impl State {
    pub fn new(id: impl Into<String>) -> Self {
        State {
            id: id.into(),
            value: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainSpecJson", into = "ChainSpecJson")]
pub struct ChainSpec {
    pub states: Vec<State>,
    /// Row-major generator; `generator[i][j]` is the rate from `i` to `j`.
    pub generator: Vec<Vec<f64>>,
    pub initial_state: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSpecJson {
    states: Vec<State>,
    generator: Vec<Vec<f64>>,
    initial: String,
}

impl TryFrom<ChainSpecJson> for ChainSpec {
    type Error = String;

    fn try_from(raw: ChainSpecJson) -> Result<Self, Self::Error> {
        let initial_state = raw
            .states
            .iter()
            .position(|s| s.id == raw.initial)
            .ok_or_else(|| format!("initial state `{}` is not one of the listed states", raw.initial))?;
        Ok(ChainSpec {
            states: raw.states,
            generator: raw.generator,
            initial_state,
        })
    }
}

impl From<ChainSpec> for ChainSpecJson {
    fn from(spec: ChainSpec) -> Self {
        let initial = spec
            .states
            .get(spec.initial_state)
            .map(|s| s.id.clone())
            .unwrap_or_default();
        ChainSpecJson {
            states: spec.states,
            generator: spec.generator,
            initial,
        }
    }
}

/// A single broken chain invariant.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ChainViolation {
    #[error("chain has no states")]
    EmptyStateSet,
    #[error("generator is {rows}x{cols} but there are {states} states")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        states: usize,
    },
    #[error("initial state index {index} is out of range")]
    InvalidInitialState { index: usize },
    #[error("negative rate {rate} from state `{from}` (row {row}) to `{to}`")]
    NegativeRate {
        row: usize,
        from: String,
        to: String,
        rate: f64,
    },
    #[error("generator row {row} (state `{state}`) sums to {sum}, not 0")]
    RowSumViolation { row: usize, state: String, sum: f64 },
    #[error("chain is not irreducible: states {unreachable:?} cannot be reached from, or cannot reach, `{root}`")]
    NotIrreducible {
        root: String,
        unreachable: Vec<String>,
    },
}

impl ChainViolation {
    /// JSON-pointer suffix (relative to the chain object) of the offending item.
    pub fn location(&self) -> String {
        match self {
            ChainViolation::EmptyStateSet => "/states".into(),
            ChainViolation::ShapeMismatch { .. } => "/generator".into(),
            ChainViolation::InvalidInitialState { .. } => "/initial".into(),
            ChainViolation::NegativeRate { row, .. } | ChainViolation::RowSumViolation { row, .. } => {
                format!("/generator/{row}")
            }
            ChainViolation::NotIrreducible { .. } => "/generator".into(),
        }
    }
}

/// Every violation found by [`validate_chain`].
#[derive(Clone, Debug, PartialEq)]
pub struct ChainErrors(pub Vec<ChainViolation>);

impl fmt::Display for ChainErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for ChainErrors {}

/// Check every [`ChainSpec`] invariant, returning the spec untouched on success.
pub fn validate_chain(spec: ChainSpec) -> Result<ChainSpec, ChainErrors> {
    let mut out = Vec::new();
    let n = spec.states.len();
    if n == 0 {
        out.push(ChainViolation::EmptyStateSet);
        return Err(ChainErrors(out));
    }
    if spec.generator.len() != n || spec.generator.iter().any(|row| row.len() != n) {
        let cols = spec.generator.iter().map(Vec::len).max().unwrap_or(0);
        out.push(ChainViolation::ShapeMismatch {
            rows: spec.generator.len(),
            cols,
            states: n,
        });
        return Err(ChainErrors(out));
    }
    if spec.initial_state >= n {
        out.push(ChainViolation::InvalidInitialState {
            index: spec.initial_state,
        });
    }
    for (i, row) in spec.generator.iter().enumerate() {
        for (j, &rate) in row.iter().enumerate() {
            if i != j && rate < 0.0 {
                out.push(ChainViolation::NegativeRate {
                    row: i,
                    from: spec.states[i].id.clone(),
                    to: spec.states[j].id.clone(),
                    rate,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || sum.abs() > ROW_SUM_TOL {
            out.push(ChainViolation::RowSumViolation {
                row: i,
                state: spec.states[i].id.clone(),
                sum,
            });
        }
    }
    let forward = reachable(n, 0, |i, j| spec.generator[i][j] > 0.0);
    let backward = reachable(n, 0, |i, j| spec.generator[j][i] > 0.0);
    let unreachable: Vec<String> = (0..n)
        .filter(|&k| !(forward[k] && backward[k]))
        .map(|k| spec.states[k].id.clone())
        .collect();
    if !unreachable.is_empty() {
        out.push(ChainViolation::NotIrreducible {
            root: spec.states[0].id.clone(),
            unreachable,
        });
    }
    if out.is_empty() {
        Ok(spec)
    } else {
        Err(ChainErrors(out))
    }
}

fn reachable(n: usize, root: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && !seen[j] && edge(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

impl ChainSpec {
    /// Chain with states labelled `s0, s1, ...`.
    pub fn from_generator(generator: Vec<Vec<f64>>, initial_state: usize) -> Self {
        let states = (0..generator.len()).map(|i| State::new(format!("s{i}"))).collect();
        ChainSpec {
            states,
            generator,
            initial_state,
        }
    }

    /// One-state chain (a constant regime).
    pub fn single() -> Self {
        ChainSpec {
            states: vec![State::new("a")],
            generator: vec![vec![0.0]],
            initial_state: 0,
        }
    }

    /// Two states `a`, `b` with rate `rate` in each direction, starting at `a`.
    pub fn symmetric_two_state(rate: f64) -> Self {
        ChainSpec {
            states: vec![State::new("a"), State::new("b")],
            generator: vec![vec![-rate, rate], vec![rate, -rate]],
            initial_state: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.generator[state][state]
    }

    pub fn with_initial(mut self, initial_state: usize) -> Self {
        self.initial_state = initial_state;
        self
    }

    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| self.generator[i][j])
    }

    /// `(Q f)(state)`.
    pub fn apply_generator(&self, f: &[f64], state: usize) -> f64 {
        self.generator[state]
            .iter()
            .zip(f)
            .map(|(q, v)| q * v)
            .sum()
    }

    /// Generator of the chain frozen on leaving `allowed_region`: rows of states
    /// outside the region are zeroed, making those states absorbing.
    pub fn stopped(&self, allowed_region: &BTreeSet<usize>) -> ChainSpec {
        let mut out = self.clone();
        for (i, row) in out.generator.iter_mut().enumerate() {
            if !allowed_region.contains(&i) {
                row.iter_mut().for_each(|q| *q = 0.0);
            }
        }
        out
    }

    /// Cumulative jump tables for repeated path sampling.
    pub fn sampler(&self) -> JumpSampler {
        let tables = self
            .generator
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut acc = 0.0;
                let mut cum = Vec::new();
                for (j, &q) in row.iter().enumerate() {
                    if j != i && q > 0.0 {
                        acc += q;
                        cum.push((acc, j));
                    }
                }
                (acc, cum)
            })
            .collect();
        JumpSampler {
            initial: self.initial_state,
            tables,
        }
    }
}

/// Precomputed exit rates and jump distributions.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    initial: usize,
    tables: Vec<(f64, Vec<(f64, usize)>)>,
}

impl JumpSampler {
    pub fn sample(&self, horizon: f64, stream: &mut RandomStream) -> ChainPath {
        self.sample_from(self.initial, horizon, stream)
    }

    pub fn sample_from(&self, start: usize, horizon: f64, stream: &mut RandomStream) -> ChainPath {
        let mut jump_times = Vec::new();
        let mut visited_states = vec![start];
        let mut t = 0.0;
        let mut state = start;
        loop {
            let (rate, cum) = &self.tables[state];
            t += stream.exponential(*rate);
            if t >= horizon {
                break;
            }
            let target = stream.uniform() * rate;
            let next = cum
                .iter()
                .find(|(c, _)| target < *c)
                .map(|&(_, j)| j)
                .unwrap_or_else(|| cum.last().expect("positive exit rate has a target").1);
            jump_times.push(t);
            visited_states.push(next);
            state = next;
        }
        ChainPath {
            jump_times,
            visited_states,
            horizon,
        }
    }
}

/// A piecewise-constant chain trajectory on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainPath {
    pub jump_times: Vec<f64>,
    pub visited_states: Vec<usize>,
    pub horizon: f64,
}

impl ChainPath {
    pub fn constant(state: usize, horizon: f64) -> Self {
        ChainPath {
            jump_times: Vec::new(),
            visited_states: vec![state],
            horizon,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.visited_states[0]
    }

    pub fn final_state(&self) -> usize {
        *self.visited_states.last().expect("path has a state")
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.visited_states[k]
    }

    /// `(start, end, state)` for each constant piece, covering `[0, horizon]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.visited_states.len()).map(move |k| {
            let start = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let end = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            (start, end, self.visited_states[k])
        })
    }

    /// Pathwise `∫_0^horizon f(Z_s) ds`.
    pub fn occupation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.segments().map(|(a, b, z)| (b - a) * f(z)).sum()
    }

    pub fn time_in(&self, state: usize) -> f64 {
        self.occupation(|z| if z == state { 1.0 } else { 0.0 })
    }
}

/// Exact simulation on `[0, horizon]`: exponential holding times at the
/// state's exit rate, jumps to neighbours in proportion to their rates.
pub fn sample_chain_path(spec: &ChainSpec, horizon: f64, stream: &mut RandomStream) -> ChainPath {
    spec.sampler().sample(horizon, stream)
}

/// `exp(tQ)`.
pub fn transition_matrix(spec: &ChainSpec, t: f64) -> DMatrix<f64> {
    expm(&(spec.generator_matrix() * t))
}

/// `E_{z0} ∫_0^horizon f(Z_s) ds`, by adaptive quadrature of `s ↦ (e^{sQ} f)(z0)`.
pub fn occupation_integral(spec: &ChainSpec, horizon: f64, f: impl Fn(usize) -> f64) -> f64 {
    let n = spec.n_states();
    let fv = DVector::from_fn(n, |i, _| f(i));
    let q = spec.generator_matrix();
    let z0 = spec.initial_state;
    quad::integrate(
        |s| {
            let p = expm(&(&q * s));
            p.row(z0).transpose().dot(&fv)
        },
        0.0,
        horizon,
        1e-9,
    )
}

/// A chain path frozen on first leaving `allowed_region`.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppedChainPath {
    pub base: ChainPath,
    pub allowed_region: BTreeSet<usize>,
    /// First time the base path is outside the region; `None` if it never leaves.
    pub exit_time: Option<f64>,
}

impl StoppedChainPath {
    /// The frozen trajectory as an ordinary path.
    pub fn path(&self) -> ChainPath {
        match self.exit_time {
            None => self.base.clone(),
            Some(t) => {
                let kept = self.base.jump_times.partition_point(|&s| s <= t);
                ChainPath {
                    jump_times: self.base.jump_times[..kept].to_vec(),
                    visited_states: self.base.visited_states[..=kept].to_vec(),
                    horizon: self.base.horizon,
                }
            }
        }
    }

    pub fn state_at(&self, t: f64) -> usize {
        match self.exit_time {
            Some(e) if t >= e => self.base.state_at(e),
            _ => self.base.state_at(t),
        }
    }
}

pub fn stop_chain(path: &ChainPath, allowed_region: &BTreeSet<usize>) -> StoppedChainPath {
    let exit_time = if !allowed_region.contains(&path.initial_state()) {
        Some(0.0)
    } else {
        path.visited_states
            .iter()
            .skip(1)
            .position(|s| !allowed_region.contains(s))
            .map(|k| path.jump_times[k])
    };
    StoppedChainPath {
        base: path.clone(),
        allowed_region: allowed_region.clone(),
        exit_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    #[test]
    fn single_state_valid() {
        assert!(validate_chain(ChainSpec::single()).is_ok());
    }

    #[test]
    fn symmetric_two_state_valid() {
        assert!(validate_chain(ChainSpec::symmetric_two_state(1.0)).is_ok());
    }

    #[test]
    fn row_sum_violation_named() {
        let spec = ChainSpec::from_generator(vec![vec![-1.0, 2.0], vec![1.0, -1.0]], 0);
        let err = validate_chain(spec).unwrap_err();
        assert_eq!(err.0.len(), 1);
        match &err.0[0] {
            ChainViolation::RowSumViolation { row, state, sum } => {
                assert_eq!(*row, 0);
                assert_eq!(state, "s0");
                assert!((sum - 1.0).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.0[0].location(), "/generator/0");
    }

    #[test]
    fn negative_rate_and_reducible_reported_together() {
        let spec = ChainSpec::from_generator(
            vec![
                vec![0.5, -0.5, 0.0],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 0.0, 0.0],
            ],
            0,
        );
        let err = validate_chain(spec).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| matches!(v, ChainViolation::NegativeRate { row: 0, .. })));
        assert!(err.0.iter().any(|v| matches!(
            v,
            ChainViolation::NotIrreducible { unreachable, .. } if unreachable.contains(&"s2".to_string())
        )));
    }

    #[test]
    fn one_way_chain_not_irreducible() {
        let spec = ChainSpec::from_generator(vec![vec![-1.0, 1.0], vec![0.0, 0.0]], 0);
        let err = validate_chain(spec).unwrap_err();
        assert!(matches!(err.0[0], ChainViolation::NotIrreducible { .. }));
    }

    #[test]
    fn empty_chain_rejected() {
        let spec = ChainSpec {
            states: vec![],
            generator: vec![],
            initial_state: 0,
        };
        assert_eq!(
            validate_chain(spec).unwrap_err().0,
            vec![ChainViolation::EmptyStateSet]
        );
    }

    #[test]
    fn single_state_path_has_no_jumps() {
        let mut s = rng_stream(3, 0);
        let p = sample_chain_path(&ChainSpec::single(), 50.0, &mut s);
        assert!(p.jump_times.is_empty());
        assert_eq!(p.visited_states, vec![0]);
    }

    #[test]
    fn path_invariants() {
        let spec = ChainSpec::symmetric_two_state(3.0);
        for i in 0..50 {
            let mut s = rng_stream(9, i);
            let p = sample_chain_path(&spec, 2.0, &mut s);
            assert_eq!(p.visited_states.len(), p.jump_times.len() + 1);
            assert_eq!(p.initial_state(), 0);
            assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(p.jump_times.iter().all(|&t| t < 2.0));
            assert!(p.visited_states.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn transition_at_zero_is_identity() {
        let spec = ChainSpec::symmetric_two_state(1.0);
        let p = transition_matrix(&spec, 0.0);
        assert!((p - DMatrix::identity(2, 2)).abs().max() < 1e-15);
        assert_eq!(transition_matrix(&ChainSpec::single(), 3.0)[(0, 0)], 1.0);
    }

    #[test]
    fn two_state_transition_closed_form() {
        let p = transition_matrix(&ChainSpec::symmetric_two_state(1.0), 1.0);
        assert!((p[(0, 0)] - 0.567_667_641_618_306_4).abs() < 1e-12);
        assert!((p[(0, 0)] - 0.567668).abs() < 1e-6);
    }

    #[test]
    fn occupation_constant_function_is_horizon() {
        let spec = ChainSpec::symmetric_two_state(2.0);
        assert!((occupation_integral(&spec, 3.5, |_| 1.0) - 3.5).abs() < 1e-9);
        let single = ChainSpec::single();
        assert!((occupation_integral(&single, 2.0, |_| 4.0) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn occupation_indicator_two_state() {
        let spec = ChainSpec::symmetric_two_state(1.0);
        let v = occupation_integral(&spec, 1.0, |z| if z == 0 { 1.0 } else { 0.0 });
        let exact = 0.5 + (1.0 - (-2.0f64).exp()) / 4.0;
        assert!((v - exact).abs() < 1e-9);
        assert!((v - 0.716166).abs() < 1e-6);
    }

    #[test]
    fn stop_all_states_never_exits() {
        let path = ChainPath {
            jump_times: vec![0.3, 0.7],
            visited_states: vec![0, 1, 0],
            horizon: 1.0,
        };
        let all: BTreeSet<usize> = [0, 1].into();
        let stopped = stop_chain(&path, &all);
        assert_eq!(stopped.exit_time, None);
        assert_eq!(stopped.path(), path);
    }

    #[test]
    fn stop_initial_outside_is_constant() {
        let path = ChainPath {
            jump_times: vec![0.3],
            visited_states: vec![0, 1],
            horizon: 1.0,
        };
        let region: BTreeSet<usize> = [1].into();
        let stopped = stop_chain(&path, &region);
        assert_eq!(stopped.exit_time, Some(0.0));
        assert_eq!(stopped.path(), ChainPath::constant(0, 1.0));
        assert_eq!(stopped.state_at(0.9), 0);
    }

    #[test]
    fn stop_freezes_after_first_exit() {
        let path = ChainPath {
            jump_times: vec![0.3, 0.6],
            visited_states: vec![0, 1, 0],
            horizon: 1.0,
        };
        let region: BTreeSet<usize> = [0].into();
        let stopped = stop_chain(&path, &region);
        assert_eq!(stopped.exit_time, Some(0.3));
        let frozen = stopped.path();
        assert_eq!(frozen.jump_times, vec![0.3]);
        assert_eq!(frozen.visited_states, vec![0, 1]);
        assert_eq!(stopped.state_at(0.8), 1);
    }

    #[test]
    fn json_round_trip_uses_state_ids() {
        let spec = ChainSpec::symmetric_two_state(1.0).with_initial(1);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"initial\":\"b\""));
        let back: ChainSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn json_unknown_initial_rejected() {
        let text = r#"{"states":[{"id":"a"}],"generator":[[0]],"initial":"zz"}"#;
        assert!(serde_json::from_str::<ChainSpec>(text).is_err());
    }
}
