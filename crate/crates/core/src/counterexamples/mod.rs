//! Scenarios where synchronous and mirror couplings stop being extremal,
//! with pass/fail reports.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use crate::simulate::Estimate;

pub mod drift;
pub mod feller;
pub mod gbm;
pub mod poisson;
pub mod semi_markov;

pub use drift::{run_drift_counterexample, survival_mc, DriftScenario};
pub use feller::{run_independent_feller_counterexample, FellerConfig};
pub use gbm::{run_gbm_counterexample, GbmConfig};
pub use poisson::{
    build_poisson_sampled_chain, distance_study, g_epsilon, h_of_epsilon, run_poisson_counterexample, DistanceRow,
    DistanceStudy, MarkRule, PoissonConfig, PoissonPath, EPSILON_FLOOR,
};
pub use semi_markov::{
    build_semi_markov_chain, run_semi_markov_counterexample, sample_exit_skeleton, unit_exit_cdf, unit_exit_time,
    ExitSkeleton, SemiMarkovConfig, SemiMarkovPath,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("epsilon {epsilon} is below the floor {floor}: h(epsilon) is not usable in double precision")]
    EpsilonUnderflow { epsilon: f64, floor: f64 },
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Analytic(#[from] crate::analytic::AnalyticError),
    #[error(transparent)]
    Simulation(#[from] crate::simulate::SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measured {
    pub label: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

impl Measured {
    pub fn exact(label: impl Into<String>, value: f64) -> Self {
        Measured {
            label: label.into(),
            value,
            std_error: None,
        }
    }

    pub fn estimate(label: impl Into<String>, est: &Estimate) -> Self {
        Measured {
            label: label.into(),
            value: est.mean,
            std_error: Some(est.std_error),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Claim {
    pub description: String,
    pub expected: String,
    pub measured: Vec<Measured>,
    pub verdict: Verdict,
}

impl Claim {
    pub fn new(description: impl Into<String>, expected: impl Into<String>, measured: Vec<Measured>, ok: bool) -> Self {
        Claim {
            description: description.into(),
            expected: expected.into(),
            measured,
            verdict: Verdict::from_bool(ok),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub n_paths: usize,
    pub claims: Vec<Claim>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, seed: u64, n_paths: usize) -> Self {
        ScenarioReport {
            scenario: scenario.to_string(),
            seed,
            n_paths,
            claims: Vec::new(),
        }
    }

    pub fn push(&mut self, claim: Claim) {
        self.claims.push(claim);
    }

    pub fn passed(&self) -> bool {
        self.claims.iter().all(Claim::passed)
    }

    pub fn claim(&self, needle: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.description.contains(needle))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}  seed {}  paths {}  => {}",
            self.scenario,
            self.seed,
            self.n_paths,
            Verdict::from_bool(self.passed()).label()
        );
        let width = self
            .claims
            .iter()
            .flat_map(|c| c.measured.iter().map(|m| m.label.len()))
            .max()
            .unwrap_or(0);
        for c in &self.claims {
            let _ = writeln!(out, "  [{}] {}", c.verdict.label(), c.description);
            let _ = writeln!(out, "         expected: {}", c.expected);
            for m in &c.measured {
                match m.std_error {
                    Some(se) => {
                        let _ = writeln!(out, "         {:<width$} = {:.6} ± {:.6}", m.label, m.value, se);
                    }
                    None => {
                        let _ = writeln!(out, "         {:<width$} = {:.6}", m.label, m.value);
                    }
                }
            }
        }
        out
    }

    /// One row per measured value.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "claim", "description", "expected", "label", "value", "std_error", "verdict"])?;
        for (k, c) in self.claims.iter().enumerate() {
            for m in &c.measured {
                w.write_record([
                    self.scenario.clone(),
                    k.to_string(),
                    c.description.clone(),
                    c.expected.clone(),
                    m.label.clone(),
                    m.value.to_string(),
                    m.std_error.map(|s| s.to_string()).unwrap_or_default(),
                    c.verdict.label().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `a` exceeds `b` by at least `k` pooled standard errors.
pub fn separated(a: &Estimate, b: &Estimate, k: f64) -> bool {
    a.mean - b.mean >= k * a.std_error.hypot(b.std_error) && a.mean > b.mean
}
