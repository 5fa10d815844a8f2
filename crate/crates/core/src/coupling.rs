//! Volatility structure, correlation strategies and cost functions.
//!
//! For volatilities `σ1(z)`, `σ2(z)` driven by a chain state `z`, the
//! difference `R = X - Y(V)` has quadratic-variation rate
//! `σ1² - 2cσ1σ2 + σ2²` under correlation `c`. The synchronous choice
//! `ĉ_I = sgn(σ1σ2)` minimises it to `(|σ1|-|σ2|)²` and the mirror choice
//! `ĉ_II = -ĉ_I` maximises it to `(|σ1|+|σ2|)²`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytic::{normal_cdf, normal_pdf};
use crate::ctmc::ChainSpec;
use crate::quad;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CouplingError {
    #[error("volatility map has {sigma1} sigma1 and {sigma2} sigma2 entries for a {states}-state chain")]
    LengthMismatch {
        sigma1: usize,
        sigma2: usize,
        states: usize,
    },
    #[error("both volatilities vanish in state {state}")]
    DegenerateState { state: usize },
    #[error("correlation {value} is outside [-1, 1]")]
    CorrelationOutOfRange { value: f64 },
    #[error("state feedback has {got} entries for {states} states")]
    FeedbackLength { got: usize, states: usize },
    #[error("unknown adapted rule `{0}`")]
    UnknownRule(String),
    #[error("cost function `{name}` fails the midpoint convexity check at x = {x}")]
    NotConvex { name: String, x: f64 },
    #[error("cost function `{name}` exceeds its growth bound at x = {x}")]
    GrowthViolated { name: String, x: f64 },
}

/// `sgn` with `sgn(0) = +1`.
pub fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Growth constants `|φ(x)| ≤ a|x|^p + b`, recorded for the cost contract.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for Growth {
    fn default() -> Self {
        Growth { p: 2.0, a: 1.0, b: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatilityMap {
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub growth: Growth,
}

impl VolatilityMap {
    pub fn new(sigma1: Vec<f64>, sigma2: Vec<f64>) -> Self {
        VolatilityMap {
            sigma1,
            sigma2,
            growth: Growth::default(),
        }
    }

    /// Same volatility pair in a one-state chain.
    pub fn constant(sigma1: f64, sigma2: f64) -> Self {
        Self::new(vec![sigma1], vec![sigma2])
    }

    pub fn n_states(&self) -> usize {
        self.sigma1.len()
    }

    pub fn validate(&self, chain: &ChainSpec) -> Result<(), CouplingError> {
        let states = chain.n_states();
        if self.sigma1.len() != states || self.sigma2.len() != states {
            return Err(CouplingError::LengthMismatch {
                sigma1: self.sigma1.len(),
                sigma2: self.sigma2.len(),
                states,
            });
        }
        for z in 0..states {
            if !(self.sigma1[z].abs() + self.sigma2[z].abs() > 0.0) {
                return Err(CouplingError::DegenerateState { state: z });
            }
        }
        Ok(())
    }

    /// Largest mirror rate `(|σ1|+|σ2|)²` over all states.
    pub fn max_rate(&self) -> f64 {
        (0..self.n_states())
            .map(|z| variance_rate(self, z, extremal_correlation(self, z, Extremality::Mirror)))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremality {
    Synchronous,
    Mirror,
}

/// `sgn(σ1σ2)` for synchronous, its negation for mirror.
pub fn extremal_correlation(vol: &VolatilityMap, state: usize, kind: Extremality) -> f64 {
    let s = sgn(vol.sigma1[state] * vol.sigma2[state]);
    match kind {
        Extremality::Synchronous => s,
        Extremality::Mirror => -s,
    }
}

/// `σ1² - 2cσ1σ2 + σ2²`, written as `(σ1 - cσ2)² + (1 - c²)σ2²` so it is
/// non-negative in floating point.
pub fn variance_rate(vol: &VolatilityMap, state: usize, c: f64) -> f64 {
    let (s1, s2) = (vol.sigma1[state], vol.sigma2[state]);
    (s1 - c * s2).powi(2) + (1.0 - c * c).max(0.0) * s2 * s2
}

/// `(Σ_I, Σ_II) = (σ1 - sgn(σ1σ2)σ2, σ1 + sgn(σ1σ2)σ2)`.
pub fn sigma_extremal(vol: &VolatilityMap, state: usize) -> (f64, f64) {
    let (s1, s2) = (vol.sigma1[state], vol.sigma2[state]);
    let s = sgn(s1 * s2);
    (s1 - s * s2, s1 + s * s2)
}

/// A function `H(r, z)` together with its second `r`-derivative.
pub trait RegimeFunction {
    fn value(&self, r: f64, state: usize) -> f64;
    fn second_r(&self, r: f64, state: usize) -> f64;
}

/// Closure pair implementing [`RegimeFunction`].
pub struct FnRegime<F, G>(pub F, pub G);

impl<F, G> RegimeFunction for FnRegime<F, G>
where
    F: Fn(f64, usize) -> f64,
    G: Fn(f64, usize) -> f64,
{
    fn value(&self, r: f64, state: usize) -> f64 {
        (self.0)(r, state)
    }

    fn second_r(&self, r: f64, state: usize) -> f64 {
        (self.1)(r, state)
    }
}

/// `(L^c H)(r, z) = ½ rate(z, c) ∂²H/∂r² + (Q H(r, ·))(z)`.
pub fn apply_lc(
    chain: &ChainSpec,
    vol: &VolatilityMap,
    h: &impl RegimeFunction,
    c: f64,
    r: f64,
    state: usize,
) -> f64 {
    let diffusion = 0.5 * variance_rate(vol, state, c) * h.second_r(r, state);
    let jumps: f64 = chain.generator[state]
        .iter()
        .enumerate()
        .map(|(w, q)| if *q == 0.0 { 0.0 } else { q * h.value(r, w) })
        .sum();
    diffusion + jumps
}

/// What an adapted rule may look at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedInput {
    pub t: f64,
    pub r: f64,
    pub state: usize,
    pub summary: PathSummary,
}

/// Running summary of the path so far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSummary {
    pub running_min: f64,
    pub running_max: f64,
    pub chain_jumps: usize,
}

impl PathSummary {
    pub fn start(r0: f64) -> Self {
        PathSummary {
            running_min: r0,
            running_max: r0,
            chain_jumps: 0,
        }
    }

    pub fn observe(&mut self, r: f64) {
        self.running_min = self.running_min.min(r);
        self.running_max = self.running_max.max(r);
    }
}

type RuleFn = dyn Fn(&AdaptedInput) -> f64 + Send + Sync;

/// A correlation rule evaluated along the path. Rules must be pure functions
/// of their input so paths can be simulated concurrently.
#[derive(Clone)]
pub struct AdaptedRule {
    pub name: String,
    rule: Arc<RuleFn>,
}

impl AdaptedRule {
    pub fn new(name: impl Into<String>, rule: impl Fn(&AdaptedInput) -> f64 + Send + Sync + 'static) -> Self {
        AdaptedRule {
            name: name.into(),
            rule: Arc::new(rule),
        }
    }

    /// Rules addressable from configuration files.
    pub fn builtin(name: &str) -> Result<Self, CouplingError> {
        let rule = match name {
            "tanh_r" => AdaptedRule::new(name, |i| i.r.tanh()),
            "sign_r" => AdaptedRule::new(name, |i| sgn(i.r)),
            "cos_t" => AdaptedRule::new(name, |i| (2.0 * std::f64::consts::PI * i.t).cos()),
            "drawdown" => AdaptedRule::new(name, |i| {
                let width = (i.summary.running_max - i.summary.running_min).max(1e-12);
                2.0 * (i.r - i.summary.running_min) / width - 1.0
            }),
            "jump_parity" => AdaptedRule::new(name, |i| if i.summary.chain_jumps % 2 == 0 { 0.5 } else { -0.5 }),
            _ => return Err(CouplingError::UnknownRule(name.to_string())),
        };
        Ok(rule)
    }

    pub fn eval(&self, input: &AdaptedInput) -> f64 {
        (self.rule)(input)
    }
}

impl fmt::Debug for AdaptedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptedRule").field("name", &self.name).finish()
    }
}

impl PartialEq for AdaptedRule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategyJson", into = "StrategyJson")]
pub enum CorrelationStrategy {
    Synchronous,
    Mirror,
    Constant(f64),
    StateFeedback(Vec<f64>),
    Adapted(AdaptedRule),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StrategyJson {
    Synchronous,
    Mirror,
    Constant { c: f64 },
    StateFeedback { c: Vec<f64> },
    Adapted { rule: String },
}

impl TryFrom<StrategyJson> for CorrelationStrategy {
    type Error = CouplingError;

    fn try_from(raw: StrategyJson) -> Result<Self, Self::Error> {
        Ok(match raw {
            StrategyJson::Synchronous => CorrelationStrategy::Synchronous,
            StrategyJson::Mirror => CorrelationStrategy::Mirror,
            StrategyJson::Constant { c } => {
                check_unit(c)?;
                CorrelationStrategy::Constant(c)
            }
            StrategyJson::StateFeedback { c } => {
                for &x in &c {
                    check_unit(x)?;
                }
                CorrelationStrategy::StateFeedback(c)
            }
            StrategyJson::Adapted { rule } => CorrelationStrategy::Adapted(AdaptedRule::builtin(&rule)?),
        })
    }
}

impl From<CorrelationStrategy> for StrategyJson {
    fn from(s: CorrelationStrategy) -> Self {
        match s {
            CorrelationStrategy::Synchronous => StrategyJson::Synchronous,
            CorrelationStrategy::Mirror => StrategyJson::Mirror,
            CorrelationStrategy::Constant(c) => StrategyJson::Constant { c },
            CorrelationStrategy::StateFeedback(c) => StrategyJson::StateFeedback { c },
            CorrelationStrategy::Adapted(rule) => StrategyJson::Adapted { rule: rule.name },
        }
    }
}

fn check_unit(c: f64) -> Result<f64, CouplingError> {
    if (-1.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(CouplingError::CorrelationOutOfRange { value: c })
    }
}

impl CorrelationStrategy {
    pub fn label(&self) -> String {
        match self {
            CorrelationStrategy::Synchronous => "synchronous".into(),
            CorrelationStrategy::Mirror => "mirror".into(),
            CorrelationStrategy::Constant(c) => format!("constant({c})"),
            CorrelationStrategy::StateFeedback(c) => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                format!("state_feedback({})", parts.join(";"))
            }
            CorrelationStrategy::Adapted(rule) => format!("adapted({})", rule.name),
        }
    }

    pub fn is_adapted(&self) -> bool {
        matches!(self, CorrelationStrategy::Adapted(_))
    }

    pub fn validate(&self, chain: &ChainSpec) -> Result<(), CouplingError> {
        match self {
            CorrelationStrategy::Constant(c) => check_unit(*c).map(|_| ()),
            CorrelationStrategy::StateFeedback(c) => {
                if c.len() != chain.n_states() {
                    return Err(CouplingError::FeedbackLength {
                        got: c.len(),
                        states: chain.n_states(),
                    });
                }
                c.iter().try_for_each(|&x| check_unit(x).map(|_| ()))
            }
            _ => Ok(()),
        }
    }

    /// Correlation in `state` for state-feedback strategies; `None` for adapted ones.
    pub fn state_correlation(&self, vol: &VolatilityMap, state: usize) -> Option<f64> {
        match self {
            CorrelationStrategy::Synchronous => Some(extremal_correlation(vol, state, Extremality::Synchronous)),
            CorrelationStrategy::Mirror => Some(extremal_correlation(vol, state, Extremality::Mirror)),
            CorrelationStrategy::Constant(c) => Some(*c),
            CorrelationStrategy::StateFeedback(c) => Some(c[state]),
            CorrelationStrategy::Adapted(_) => None,
        }
    }

    /// Correlation at a point of the path, checked to lie in `[-1, 1]`.
    pub fn correlation(&self, vol: &VolatilityMap, input: &AdaptedInput) -> Result<f64, CouplingError> {
        let c = match self {
            CorrelationStrategy::Adapted(rule) => rule.eval(input),
            other => other
                .state_correlation(vol, input.state)
                .expect("non-adapted strategies have a state correlation"),
        };
        check_unit(c)
    }
}

type CostFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A user-supplied convex cost with declared growth constants.
#[derive(Clone)]
pub struct CustomCost {
    pub name: String,
    pub growth: Growth,
    f: Arc<CostFn>,
}

impl CustomCost {
    pub fn new(name: impl Into<String>, growth: Growth, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CustomCost {
            name: name.into(),
            growth,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCost").field("name", &self.name).finish()
    }
}

impl PartialEq for CustomCost {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostJson", into = "CostJson")]
pub enum CostFunction {
    Quadratic,
    /// `|x|^p`.
    Power(f64),
    /// `|x - k|`.
    AbsShifted(f64),
    /// `max(x - strike, 0)`.
    CallOnDifference(f64),
    Custom(CustomCost),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CostJson {
    Quadratic,
    Power { p: f64 },
    AbsShifted { k: f64 },
    Call { strike: f64 },
    Custom { name: String },
}

impl TryFrom<CostJson> for CostFunction {
    type Error = String;

    fn try_from(raw: CostJson) -> Result<Self, Self::Error> {
        Ok(match raw {
            CostJson::Quadratic => CostFunction::Quadratic,
            CostJson::Power { p } if p >= 1.0 => CostFunction::Power(p),
            CostJson::Power { p } => return Err(format!("power exponent {p} must be >= 1 for convexity")),
            CostJson::AbsShifted { k } => CostFunction::AbsShifted(k),
            CostJson::Call { strike } => CostFunction::CallOnDifference(strike),
            CostJson::Custom { name } => {
                return Err(format!("custom cost `{name}` can only be constructed in code"))
            }
        })
    }
}

impl From<CostFunction> for CostJson {
    fn from(c: CostFunction) -> Self {
        match c {
            CostFunction::Quadratic => CostJson::Quadratic,
            CostFunction::Power(p) => CostJson::Power { p },
            CostFunction::AbsShifted(k) => CostJson::AbsShifted { k },
            CostFunction::CallOnDifference(strike) => CostJson::Call { strike },
            CostFunction::Custom(c) => CostJson::Custom { name: c.name },
        }
    }
}

impl CostFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CostFunction::Quadratic => x * x,
            CostFunction::Power(p) => x.abs().powf(*p),
            CostFunction::AbsShifted(k) => (x - k).abs(),
            CostFunction::CallOnDifference(strike) => (x - strike).max(0.0),
            CostFunction::Custom(c) => (c.f)(x),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CostFunction::Quadratic => "quadratic".into(),
            CostFunction::Power(p) => format!("power({p})"),
            CostFunction::AbsShifted(k) => format!("abs_shifted({k})"),
            CostFunction::CallOnDifference(k) => format!("call({k})"),
            CostFunction::Custom(c) => format!("custom({})", c.name),
        }
    }

    pub fn growth(&self) -> Growth {
        match self {
            CostFunction::Quadratic => Growth { p: 2.0, a: 1.0, b: 0.0 },
            CostFunction::Power(p) => Growth {
                p: p.max(2.0),
                a: 1.0,
                b: 1.0,
            },
            CostFunction::AbsShifted(k) | CostFunction::CallOnDifference(k) => Growth {
                p: 2.0,
                a: 1.0,
                b: k.abs() + 0.25,
            },
            CostFunction::Custom(c) => c.growth,
        }
    }

    /// Midpoint-convexity and growth spot check on 1000 points of `[-extent, extent]`.
    pub fn spot_check(&self, extent: f64) -> Result<(), CouplingError> {
        let n = 1000;
        let h = 2.0 * extent / n as f64;
        let g = self.growth();
        for k in 1..n {
            let x = -extent + k as f64 * h;
            let (l, m, r) = (self.eval(x - h), self.eval(x), self.eval(x + h));
            let scale = 1.0 + l.abs().max(m.abs()).max(r.abs());
            if 0.5 * (l + r) < m - 1e-12 * scale {
                return Err(CouplingError::NotConvex { name: self.label(), x });
            }
            if m.abs() > g.a * x.abs().powf(g.p) + g.b + 1e-12 * scale {
                return Err(CouplingError::GrowthViolated { name: self.label(), x });
            }
        }
        Ok(())
    }

    /// `E[φ(mean + √variance · N)]` for a standard normal `N`.
    pub fn gaussian_expectation(&self, mean: f64, variance: f64) -> f64 {
        if variance <= 0.0 {
            return self.eval(mean);
        }
        let sd = variance.sqrt();
        match self {
            CostFunction::Quadratic => mean * mean + variance,
            CostFunction::Power(p) if *p == 4.0 => {
                mean.powi(4) + 6.0 * mean * mean * variance + 3.0 * variance * variance
            }
            CostFunction::CallOnDifference(k) => {
                let m = mean - k;
                m * normal_cdf(m / sd) + sd * normal_pdf(m / sd)
            }
            CostFunction::AbsShifted(k) => {
                let m = mean - k;
                m * (2.0 * normal_cdf(m / sd) - 1.0) + 2.0 * sd * normal_pdf(m / sd)
            }
            _ => {
                let lo = -12.0;
                let hi = 12.0;
                quad::integrate(|u| self.eval(mean + sd * u) * normal_pdf(u), lo, hi, 1e-10 * (1.0 + mean.abs()))
            }
        }
    }
}
