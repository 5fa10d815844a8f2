//! Ordering batteries over a configured experiment: tracking, coupling and
//! HJB extremality, each producing a claim report and CSV rows.

use crate::config::ExperimentConfig;
use crate::counterexamples::{separated, Claim, Measured, ScenarioReport};
use crate::coupling::{extremal_correlation, CorrelationStrategy, CostFunction, Extremality, VolatilityMap};
use crate::ctmc::ChainSpec;
use crate::hjb::{
    coupling_monotone, fields_ordered, solve_coupling_value, solve_tracking_value, verify_hjb_extremality, FieldKind,
    GridSpec, GridValue, HjbError, DEFAULT_TAIL,
};
use crate::simulate::{
    estimate_coupling_prob, estimate_tracking_conditional, estimate_tracking_many, CouplingMethod, Estimate,
    EstimateRow, McOptions, SimError,
};

/// Pooled standard errors by which an ordering may be violated before it counts.
pub const ORDER_SLACK: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum BatteryError {
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
}

#[derive(Clone, Debug)]
pub struct BatteryOutput {
    pub report: ScenarioReport,
    pub rows: Vec<EstimateRow>,
}

/// Strategy list with synchronous first and mirror last.
fn with_extremes(strategies: &[CorrelationStrategy]) -> Vec<CorrelationStrategy> {
    let mut out = vec![CorrelationStrategy::Synchronous];
    out.extend(
        strategies
            .iter()
            .filter(|s| !matches!(s, CorrelationStrategy::Synchronous | CorrelationStrategy::Mirror))
            .cloned(),
    );
    out.push(CorrelationStrategy::Mirror);
    out
}

/// A constant strategy whose correlation differs from both extremes in some
/// state where the extremes differ, so the ordering must be strict.
fn strictly_inside(s: &CorrelationStrategy, vol: &VolatilityMap) -> bool {
    let CorrelationStrategy::Constant(c) = s else {
        return false;
    };
    (0..vol.n_states()).any(|z| {
        let lo = extremal_correlation(vol, z, Extremality::Synchronous);
        let hi = extremal_correlation(vol, z, Extremality::Mirror);
        vol.sigma1[z] * vol.sigma2[z] != 0.0 && *c != lo && *c != hi
    })
}

fn not_below(upper: &Estimate, lower: &Estimate) -> bool {
    upper.mean - lower.mean >= -ORDER_SLACK * upper.std_error.hypot(lower.std_error)
}

/// Claim that `low <= mid <= high`, strictly by `ORDER_SLACK` pooled errors when `strict`.
fn ordering_claim(desc: String, low: (&str, &Estimate), mid: (&str, &Estimate), high: (&str, &Estimate), strict: bool) -> Claim {
    let ok = if strict {
        separated(mid.1, low.1, ORDER_SLACK) && separated(high.1, mid.1, ORDER_SLACK)
    } else {
        not_below(mid.1, low.1) && not_below(high.1, mid.1)
    };
    let expected = if strict {
        format!("{} < {} < {} by >= 3 pooled standard errors", low.0, mid.0, high.0)
    } else {
        format!("{} <= {} <= {} up to 3 pooled standard errors", low.0, mid.0, high.0)
    };
    Claim::new(
        desc,
        expected,
        vec![
            Measured::estimate(low.0, low.1),
            Measured::estimate(mid.0, mid.1),
            Measured::estimate(high.0, high.1),
        ],
        ok,
    )
}

/// `E[φ(R_T)]` per strategy and cost, checked against the extremal ordering.
pub fn tracking_battery(cfg: &ExperimentConfig, mc: &McOptions) -> Result<BatteryOutput, BatteryError> {
    let strategies = with_extremes(&cfg.strategies);
    let phis = &cfg.cost_functions;
    let mut table = Vec::with_capacity(strategies.len());
    let mut rows = Vec::new();
    for s in &strategies {
        let ests = estimate_tracking_many(&cfg.chain, &cfg.volatility, s, phis, cfg.r0, cfg.horizon, mc)?;
        for (phi, est) in phis.iter().zip(&ests) {
            rows.push(EstimateRow::new("tracking", s, &phi.label(), cfg.r0, cfg.horizon, est, "direct", mc.seed));
            if !s.is_adapted() {
                let cond = estimate_tracking_conditional(&cfg.chain, &cfg.volatility, s, phi, cfg.r0, cfg.horizon, mc)?;
                rows.push(EstimateRow::new("tracking", s, &phi.label(), cfg.r0, cfg.horizon, &cond, "conditional", mc.seed));
            }
        }
        table.push(ests);
    }
    let mut report = ScenarioReport::new("verify-tracking", mc.seed, mc.n_paths);
    let last = strategies.len() - 1;
    for (j, phi) in phis.iter().enumerate() {
        let (sync, mirror) = (&table[0][j], &table[last][j]);
        if strategies.len() == 2 {
            report.push(ordering_claim(
                format!("{}: synchronous <= mirror", phi.label()),
                ("synchronous", sync),
                ("synchronous", sync),
                ("mirror", mirror),
                false,
            ));
        }
        for (k, s) in strategies.iter().enumerate().take(last).skip(1) {
            let label = s.label();
            report.push(ordering_claim(
                format!("{}: synchronous <= {label} <= mirror", phi.label()),
                ("synchronous", sync),
                (&label, &table[k][j]),
                ("mirror", mirror),
                strictly_inside(s, &cfg.volatility),
            ));
        }
    }
    Ok(BatteryOutput { report, rows })
}

/// `P(no coupling by T)` per strategy with the bridge and conditional estimators.
pub fn coupling_battery(cfg: &ExperimentConfig, mc: &McOptions) -> Result<BatteryOutput, BatteryError> {
    let strategies = with_extremes(&cfg.strategies);
    let (chain, vol, r0, t) = (&cfg.chain, &cfg.volatility, cfg.r0, cfg.horizon);
    let mut rows = Vec::new();
    let mut best = Vec::with_capacity(strategies.len());
    let mut report = ScenarioReport::new("verify-coupling", mc.seed, mc.n_paths);
    for s in &strategies {
        let bridge = estimate_coupling_prob(chain, vol, s, r0, t, mc, CouplingMethod::Bridge)?;
        rows.push(EstimateRow::new("coupling", s, "survival", r0, t, &bridge, "bridge", mc.seed));
        if s.is_adapted() {
            best.push(bridge);
            continue;
        }
        let cond = estimate_coupling_prob(chain, vol, s, r0, t, mc, CouplingMethod::Conditional)?;
        rows.push(EstimateRow::new("coupling", s, "survival", r0, t, &cond, "conditional", mc.seed));
        report.push(Claim::new(
            format!("{}: bridge and conditional estimators agree", s.label()),
            "within 3 pooled standard errors",
            vec![Measured::estimate("bridge", &bridge), Measured::estimate("conditional", &cond)],
            bridge.z_distance(&cond) <= ORDER_SLACK,
        ));
        best.push(cond);
    }
    let last = strategies.len() - 1;
    for (k, s) in strategies.iter().enumerate().take(last).skip(1) {
        let label = s.label();
        report.push(ordering_claim(
            format!("survival: mirror <= {label} <= synchronous"),
            ("mirror", &best[last]),
            (&label, &best[k]),
            ("synchronous", &best[0]),
            strictly_inside(s, vol),
        ));
    }
    if strategies.len() == 2 {
        report.push(ordering_claim(
            "survival: mirror <= synchronous".into(),
            ("mirror", &best[last]),
            ("mirror", &best[last]),
            ("synchronous", &best[0]),
            false,
        ));
    }
    Ok(BatteryOutput { report, rows })
}

#[derive(Clone, Debug)]
pub struct HjbOutput {
    pub report: ScenarioReport,
    /// Solved fields with a file stem for each.
    pub fields: Vec<(String, GridValue)>,
}

/// Grid spacing of the default HJB lattices.
pub const DEFAULT_DR: f64 = 0.05;

/// Tracking box `[r0 - k, r0 + k]` wide enough for six mirror standard deviations.
pub fn default_tracking_grid(chain: &ChainSpec, vol: &VolatilityMap, r0: f64, horizon: f64, dr: f64) -> GridSpec {
    let k = r0.abs() + 6.0 * (vol.max_rate() * horizon).sqrt() + 1.0;
    GridSpec::tracking(k, dr, horizon, chain, vol)
}

fn probe_points(center: f64, coupling: bool) -> [f64; 5] {
    if coupling {
        [-0.5, -1.0, -1.5, -2.0, -3.0]
    } else {
        [center - 1.0, center - 0.5, center, center + 0.5, center + 1.0]
    }
}

fn probe_claims(
    report: &mut ScenarioReport,
    name: &str,
    field: &GridValue,
    cfg: &ExperimentConfig,
    phi: Option<&CostFunction>,
    mc: &McOptions,
) -> Result<(), BatteryError> {
    let strategy = match field.kind.extremality() {
        Extremality::Synchronous => CorrelationStrategy::Synchronous,
        Extremality::Mirror => CorrelationStrategy::Mirror,
    };
    let z = cfg.chain.initial_state;
    let chain = cfg.chain.clone().with_initial(z);
    let mut measured = Vec::new();
    let mut ok = true;
    for r in probe_points(cfg.r0, phi.is_none()) {
        let est = match phi {
            Some(phi) => estimate_tracking_conditional(&chain, &cfg.volatility, &strategy, phi, r, cfg.horizon, mc)?,
            None => estimate_coupling_prob(&chain, &cfg.volatility, &strategy, r, cfg.horizon, mc, CouplingMethod::Conditional)?,
        };
        let value = field.probe(r, z);
        ok &= (value - est.mean).abs() <= (3.0 * est.std_error).max(1e-2);
        measured.push(Measured::exact(format!("field(r = {r})"), value));
        measured.push(Measured::estimate(format!("mc(r = {r})"), &est));
    }
    report.push(Claim::new(
        format!("{name}: field matches conditional Monte Carlo at 5 probes"),
        "within max(1e-2, 3 standard errors)",
        measured,
        ok,
    ));
    Ok(())
}

fn extremality_claim(report: &mut ScenarioReport, name: &str, field: &GridValue, cfg: &ExperimentConfig) {
    let ext = verify_hjb_extremality(field, &cfg.chain, &cfg.volatility, 21);
    report.push(Claim::new(
        format!("{name}: sign conditions and c-sweep extremum at every interior node"),
        "0 sign, sweep and residual failures",
        vec![
            Measured::exact("nodes_checked", ext.nodes_checked as f64),
            Measured::exact("sign_failures", ext.sign_failures as f64),
            Measured::exact("sweep_failures", ext.sweep_failures as f64),
            Measured::exact("residual_failures", ext.residual_failures as f64),
            Measured::exact("max_extremal_residual", ext.max_extremal_residual),
        ],
        ext.passed,
    ));
}

/// Solve tracking fields for every cost and both coupling fields, verify
/// extremality and compare against Monte Carlo probes.
pub fn hjb_battery(cfg: &ExperimentConfig, mc: &McOptions, probes: bool) -> Result<HjbOutput, BatteryError> {
    let (chain, vol, t) = (&cfg.chain, &cfg.volatility, cfg.horizon);
    let tracking_grid = cfg
        .hjb
        .clone()
        .unwrap_or_else(|| default_tracking_grid(chain, vol, cfg.r0, t, DEFAULT_DR));
    let mut report = ScenarioReport::new("hjb", mc.seed, mc.n_paths);
    let mut fields = Vec::new();
    for phi in &cfg.cost_functions {
        let one = solve_tracking_value(chain, vol, phi, &tracking_grid, FieldKind::TrackingI)?;
        let two = solve_tracking_value(chain, vol, phi, &tracking_grid, FieldKind::TrackingII)?;
        report.push(Claim::new(
            format!("{}: tracking field I <= tracking field II", phi.label()),
            "pointwise",
            vec![],
            fields_ordered(&one, &two, 1e-9),
        ));
        for (f, tag) in [(one, "tracking_i"), (two, "tracking_ii")] {
            let name = format!("{tag} {}", phi.label());
            extremality_claim(&mut report, &name, &f, cfg);
            if probes {
                probe_claims(&mut report, &name, &f, cfg, Some(phi), mc)?;
            }
            fields.push((format!("{tag}_{}", stem(&phi.label())), f));
        }
    }
    let coupling_grid = GridSpec::coupling(tracking_grid.dr(), t, DEFAULT_TAIL, chain, vol);
    let mut coupling = Vec::new();
    for kind in [FieldKind::CouplingI, FieldKind::CouplingII] {
        match solve_coupling_value(chain, vol, &coupling_grid, kind) {
            Ok(f) => coupling.push(f),
            Err(HjbError::DegenerateKindI { state }) => report.push(Claim::new(
                format!("coupling_i skipped: |sigma1| = |sigma2| in state {state}"),
                "not applicable",
                vec![],
                true,
            )),
            Err(e) => return Err(e.into()),
        }
    }
    if let [one, two] = coupling.as_slice() {
        report.push(Claim::new(
            "coupling field II <= coupling field I",
            "pointwise",
            vec![],
            fields_ordered(two, one, 1e-9),
        ));
    }
    for f in coupling {
        let name = f.kind.label().to_string();
        report.push(Claim::new(
            format!("{name}: survival is monotone in r and t"),
            "pointwise",
            vec![],
            coupling_monotone(&f, 1e-9),
        ));
        extremality_claim(&mut report, &name, &f, cfg);
        if probes {
            probe_claims(&mut report, &name, &f, cfg, None, mc)?;
        }
        fields.push((stem(&name), f));
    }
    Ok(HjbOutput { report, fields })
}

fn stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, ExperimentConfig};

    fn two_state(r0: f64, n_paths: usize) -> ExperimentConfig {
        parse_config(&format!(
            r#"{{
            "chain": {{"states": [{{"id": "calm"}}, {{"id": "wild"}}], "generator": [[-1, 1], [1, -1]], "initial": "calm"}},
            "volatility": {{"sigma1": [1, 2], "sigma2": [2, 1]}},
            "strategies": [{{"kind": "constant", "c": 0}}, {{"kind": "adapted", "rule": "tanh_r"}}],
            "cost_functions": [{{"kind": "quadratic"}}, {{"kind": "call", "strike": 1}}],
            "r0": {r0}, "horizon": 1,
            "monte_carlo": {{"n_paths": {n_paths}, "seed": 3, "step": 0.01}}
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn extremes_are_added_once() {
        let s = with_extremes(&[CorrelationStrategy::Mirror, CorrelationStrategy::Constant(0.2)]);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], CorrelationStrategy::Synchronous);
        assert_eq!(s[2], CorrelationStrategy::Mirror);
    }

    #[test]
    fn strictness_depends_on_extremes() {
        let vol = VolatilityMap::new(vec![1.0, 2.0], vec![2.0, 1.0]);
        assert!(strictly_inside(&CorrelationStrategy::Constant(0.0), &vol));
        assert!(!strictly_inside(&CorrelationStrategy::Constant(1.0), &vol));
        assert!(!strictly_inside(&CorrelationStrategy::Synchronous, &vol));
    }

    #[test]
    fn tracking_battery_passes() {
        let cfg = two_state(1.0, 4000);
        let out = tracking_battery(&cfg, &cfg.mc_options()).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_text());
        assert_eq!(out.report.claims.len(), 4);
        assert_eq!(out.rows.len(), 2 * (2 + 2 + 2 + 1));
    }

    #[test]
    fn coupling_battery_passes() {
        let cfg = two_state(-1.0, 4000);
        let out = coupling_battery(&cfg, &cfg.mc_options()).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_text());
    }

    #[test]
    fn coupling_battery_needs_negative_start() {
        let cfg = two_state(1.0, 200);
        assert!(matches!(
            coupling_battery(&cfg, &cfg.mc_options()),
            Err(BatteryError::Simulation(SimError::NonNegativeStart(_)))
        ));
    }

    #[test]
    fn hjb_battery_small() {
        let mut cfg = two_state(1.0, 2000);
        cfg.horizon = 0.25;
        let out = hjb_battery(&cfg, &cfg.mc_options(), true).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_text());
        assert_eq!(out.fields.len(), 6);
        assert_eq!(stem("call(1)"), "call_1");
    }
}
