//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always printed.
//! Exits non-zero when a criterion fails that is not listed in `KNOWN_FAILURES`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use regime_coupling::analytic::{psi_c_derivative_at_zero, psi_c_pde_residual, survival_no_drift};
use regime_coupling::battery::{coupling_battery, hjb_battery, tracking_battery};
use regime_coupling::config::{load_config, ExperimentConfig};
use regime_coupling::counterexamples::{
    run_drift_counterexample, run_gbm_counterexample, run_independent_feller_counterexample,
    run_poisson_counterexample, run_semi_markov_counterexample, DriftScenario, FellerConfig, GbmConfig,
    PoissonConfig, ScenarioReport, SemiMarkovConfig,
};
use regime_coupling::coupling::{CorrelationStrategy, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::rng::rng_stream;
use regime_coupling::simulate::{estimate_coupling_prob, CouplingMethod, McOptions};

const PATHS: usize = 100_000;
const SEED: u64 = 7;

/// Criteria expected to fail, with the reason printed next to the verdict.
const KNOWN_FAILURES: &[(u8, &str)] = &[(
    6,
    "Monte Carlo shows synchronous survival above mirror survival at (r, mu, sigma_bar, T) = (-1, 1, 2, 1)",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn failed_claims(report: &ScenarioReport) -> String {
    let failed: Vec<&str> = report
        .claims
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.description.as_str())
        .collect();
    if failed.is_empty() {
        format!("{} claims pass", report.claims.len())
    } else {
        format!("failed: {}", failed.join("; "))
    }
}

fn tracking_ordering() -> Outcome {
    let cfg = config("two_state.json");
    let start = Instant::now();
    let out = tracking_battery(&cfg, &cfg.mc_options()).expect("tracking battery runs");
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(120);
    outcome(
        out.report.passed() && fast,
        format!("{}, {:.1} s", failed_claims(&out.report), elapsed.as_secs_f64()),
    )
}

fn coupling_ordering() -> Outcome {
    let cfg = config("two_state_coupling.json");
    let out = coupling_battery(&cfg, &cfg.mc_options()).expect("coupling battery runs");
    let mc = McOptions::new(PATHS, SEED);
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let anchors = [
        (CorrelationStrategy::Synchronous, 0.682689),
        (CorrelationStrategy::Mirror, 0.261117),
    ];
    let mut detail = failed_claims(&out.report);
    let mut anchors_ok = true;
    for (s, expected) in anchors {
        let est = estimate_coupling_prob(&chain, &vol, &s, -1.0, 1.0, &mc, CouplingMethod::Conditional)
            .expect("conditional estimate");
        anchors_ok &= (est.mean - expected).abs() < 1e-3;
        detail.push_str(&format!(", {} {:.6} vs {expected}", s.label(), est.mean));
    }
    outcome(out.report.passed() && anchors_ok, detail)
}

fn hjb_extremality() -> Outcome {
    let cfg = config("two_state.json");
    let out = hjb_battery(&cfg, &cfg.mc_options(), true).expect("hjb battery runs");
    let fields = out.fields.len();
    outcome(out.report.passed() && fields == 8, format!("{fields} fields, {}", failed_claims(&out.report)))
}

fn fourth_moment_oracle() -> Outcome {
    let mut s = rng_stream(SEED, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let r = 2.0 * s.uniform() - 1.0;
        let z = 2.0 * s.uniform() - 1.0;
        let t = 0.1 + s.uniform();
        let c = 1.6 * s.uniform() - 0.8;
        worst = worst.max(psi_c_pde_residual(r, z, t, c).expect("valid point").abs());
    }
    let derivative = psi_c_derivative_at_zero(1.0, 1.0, 1.0);
    let report = run_independent_feller_counterexample(&FellerConfig::default(), &McOptions::new(PATHS, SEED))
        .expect("feller scenario runs");
    outcome(
        worst < 1e-6 && derivative == -16.0 && report.passed(),
        format!("max PDE residual {worst:.2e}, derivative {derivative}, {}", failed_claims(&report)),
    )
}

fn gbm_counterexample() -> Outcome {
    let report = run_gbm_counterexample(&GbmConfig::default(), &McOptions::new(PATHS, SEED)).expect("gbm scenario runs");
    outcome(report.passed(), failed_claims(&report))
}

fn drift_counterexample() -> Outcome {
    let report = run_drift_counterexample(&DriftScenario::default(), &McOptions::new(PATHS, SEED))
        .expect("drift scenario runs");
    let ordering = report.claim("mirror survival exceeds").expect("ordering claim");
    let literal = report.claim("literal closed form").expect("literal cross-validation");
    let reflection = report.claim("reflection-principle").expect("reflection cross-validation");
    let est = |label: &str| {
        ordering
            .measured
            .iter()
            .find(|m| m.label.contains(label))
            .map(|m| format!("{label} {:.4} ± {:.4}", m.value, m.std_error.unwrap_or(0.0)))
            .unwrap_or_default()
    };
    outcome(
        ordering.passed(),
        format!(
            "{}, {}; literal F cross-validation {}, reflection F cross-validation {}",
            est("mirror"),
            est("sync"),
            literal.verdict.label(),
            reflection.verdict.label()
        ),
    )
}

fn constructions() -> Outcome {
    let mc = McOptions::new(PATHS, SEED);
    let semi = run_semi_markov_counterexample(&SemiMarkovConfig::default(), &mc).expect("semi-Markov scenario runs");
    let poisson = run_poisson_counterexample(&PoissonConfig::default(), &mc).expect("poisson scenario runs");
    let sandwich = semi.claim("Euler integral of Z dB").is_some_and(|c| c.passed());
    outcome(
        sandwich && semi.passed() && poisson.passed(),
        format!("semimarkov {}; poisson {}", failed_claims(&semi), failed_claims(&poisson)),
    )
}

fn bridge_estimator() -> Outcome {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let mc = McOptions::new(PATHS, SEED).with_step(1.0 / 1024.0);
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, rate) in [(CorrelationStrategy::Synchronous, 1.0), (CorrelationStrategy::Mirror, 9.0)] {
        let oracle = survival_no_drift(-1.0, rate).expect("r < 0");
        let z = |m: CouplingMethod| {
            let est = estimate_coupling_prob(&chain, &vol, &s, -1.0, 1.0, &mc, m).expect("estimate");
            (est.mean - oracle) / est.std_error
        };
        let (bridge, naive) = (z(CouplingMethod::Bridge), z(CouplingMethod::Naive));
        ok &= bridge.abs() < 3.0 && naive.abs() > 5.0;
        detail.push(format!("{}: bridge {bridge:+.2} SE, naive {naive:+.2} SE", s.label()));
    }
    outcome(ok, detail.join("; "))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn reproducibility() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_regime-coupling");
    let root = tempfile::tempdir().expect("temp dir");
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_state.json");
    let conf = conf.to_str().unwrap();
    let invocations: Vec<(&str, Vec<&str>)> = vec![
        ("tracking", vec!["verify-tracking", "--config", conf, "--paths", "20000", "--plot-data"]),
        ("gbm", vec!["counterexample", "gbm", "--paths", "20000", "--plot-data"]),
        ("poisson", vec!["counterexample", "poisson", "--paths", "5000"]),
        ("simulate", vec!["simulate", "--config", conf, "--paths", "5"]),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, args) in invocations {
        let mut outputs = Vec::new();
        for (run, workers) in [(0, "1"), (1, "1"), (2, "4")] {
            let dir: PathBuf = root.path().join(format!("{name}_{run}"));
            let status = Command::new(bin)
                .args(&args)
                .args(["--seed", "11", "--workers", workers, "--out", dir.to_str().unwrap()])
                .output()
                .expect("binary runs")
                .status;
            ok &= status.code().is_some_and(|c| c == 0 || c == 1);
            outputs.push(csv_files(&dir));
        }
        let same = !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
        ok &= same;
        detail.push(format!("{name} {} csv files {}", outputs[0].len(), if same { "identical" } else { "differ" }));
    }
    outcome(ok, detail.join(", "))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Outcome); 9] = [
        (1, "tracking ordering", tracking_ordering),
        (2, "coupling ordering", coupling_ordering),
        (3, "HJB extremality", hjb_extremality),
        (4, "fourth-moment oracle", fourth_moment_oracle),
        (5, "geometric volatility counterexample", gbm_counterexample),
        (6, "drift counterexample", drift_counterexample),
        (7, "semi-Markov and Poisson constructions", constructions),
        (8, "bridge first-passage estimator", bridge_estimator),
        (9, "reproducibility", reproducibility),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == id);
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict}: {name} [{:.1} s] {}", start.elapsed().as_secs_f64(), o.detail);
        match (o.passed, known) {
            (false, Some((_, reason))) => println!("    known failure: {reason}"),
            (false, None) => unexpected.push(id),
            _ => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
