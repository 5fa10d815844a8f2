//! Command-line front end. Every subcommand writes CSV and JSON artifacts to
//! the output directory and prints a verdict.
//!
//! Exit codes: 0 when every claim passes, 1 when any claim fails, 2 on usage,
//! configuration or runtime errors.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analytic::{
    drift_survival_f, k_of_c, normal_cdf, normal_quantile, psi_c, psi_c_derivative_at_zero, survival_no_drift,
    survival_no_drift_rr, DriftConfig,
};
use crate::battery::{coupling_battery, hjb_battery, tracking_battery};
use crate::config::{load_config, ExperimentConfig};
use crate::counterexamples::{
    run_drift_counterexample, run_gbm_counterexample, run_independent_feller_counterexample,
    run_poisson_counterexample, run_semi_markov_counterexample, DriftScenario, FellerConfig, GbmConfig,
    PoissonConfig, ScenarioReport, SemiMarkovConfig,
};
use crate::simulate::{simulate_difference_path, write_estimate_rows, EstimateRow, McOptions};

/// Paths used by subcommands that take no configuration file.
pub const DEFAULT_PATHS: usize = 100_000;
/// Paths dumped by `simulate` unless `--paths` is given.
pub const DEFAULT_DUMP_PATHS: usize = 10;
/// Time levels written per solved HJB field.
pub const HJB_CSV_LEVELS: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "regime-coupling", version, about = "Extremal couplings of regime-switching martingales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tracking-error ordering battery.
    VerifyTracking(ConfigArgs),
    /// Coupling-probability ordering battery.
    VerifyCoupling(ConfigArgs),
    /// Solve the HJB fields and verify extremality.
    Hjb(HjbArgs),
    /// Evaluate a closed form.
    Analytic {
        #[command(subcommand)]
        form: Form,
    },
    /// Run a counterexample scenario.
    Counterexample(CounterexampleArgs),
    /// Dump raw coupled paths.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence level of reported intervals.
    #[arg(long)]
    ci: Option<f64>,
    /// Euler step.
    #[arg(long)]
    step: Option<f64>,
    /// Also write tidy long-format CSV for plotting.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct HjbArgs {
    #[arg(long)]
    config: PathBuf,
    /// Skip the Monte Carlo probe comparison.
    #[arg(long)]
    no_probes: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    Gbm,
    Drift,
    Semimarkov,
    Poisson,
    Feller,
}

#[derive(Debug, Args)]
struct CounterexampleArgs {
    scenario: Scenario,
    /// JSON file with the scenario parameters; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Index into the configured strategies; all of them when absent.
    #[arg(long)]
    strategy: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
#[command(rename_all = "kebab-case")]
enum Form {
    /// G(r, a) = 2N(-r/√a) - 1.
    #[command(allow_negative_numbers = true)]
    G {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        a: f64,
    },
    /// Second r-derivative of G.
    #[command(allow_negative_numbers = true)]
    GRr {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        a: f64,
    },
    /// Drifted survival F(v), literal and reflection readings.
    #[command(allow_negative_numbers = true)]
    DriftF {
        #[arg(long)]
        v: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_bar: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// psi_c(r, z, t) = E[R_t^4] under correlation c.
    #[command(allow_negative_numbers = true)]
    Psi {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        c: f64,
    },
    /// Derivative of psi_c in c at c = 0.
    #[command(allow_negative_numbers = true)]
    PsiDerivative {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        t: f64,
    },
    /// k(c) = 5 - 4√(1-c²).
    #[command(allow_negative_numbers = true)]
    K {
        #[arg(long)]
        c: f64,
    },
    /// Standard normal distribution function.
    #[command(allow_negative_numbers = true)]
    NormalCdf {
        #[arg(long)]
        x: f64,
    },
    /// Standard normal quantile.
    NormalQuantile {
        #[arg(long)]
        p: f64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Run(Box<dyn std::error::Error + Send + Sync>),
}

fn run_err(e: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Run(Box::new(e))
}

/// One row of tidy plot data.
#[derive(Debug, Serialize)]
struct PlotRow {
    panel: String,
    series: String,
    x: String,
    y: f64,
    y_low: Option<f64>,
    y_high: Option<f64>,
}

/// Parse `argv` (program name first), run the subcommand and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::VerifyTracking(a) => verify(&a, "verify_tracking", |cfg, mc| tracking_battery(cfg, mc)),
        Command::VerifyCoupling(a) => verify(&a, "verify_coupling", |cfg, mc| coupling_battery(cfg, mc)),
        Command::Hjb(a) => hjb(&a),
        Command::Analytic { form } => analytic(form),
        Command::Counterexample(a) => counterexample(&a),
        Command::Simulate(a) => simulate(&a),
    }
}

/// Load the configuration and apply command-line overrides.
fn configured(path: &Path, run: &RunArgs) -> Result<(ExperimentConfig, McOptions), CliError> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = run.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(paths) = run.paths {
        cfg.monte_carlo.n_paths = paths;
    }
    if let Some(ci) = run.ci {
        cfg.monte_carlo.ci_level = ci;
    }
    if run.step.is_some() {
        cfg.monte_carlo.step = run.step;
    }
    if let Some(out) = &run.out {
        cfg.outputs = out.clone();
    }
    cfg.validate()?;
    let mut mc = cfg.mc_options();
    mc.workers = checked_workers(run)?;
    Ok((cfg, mc))
}

fn checked_workers(run: &RunArgs) -> Result<Option<usize>, CliError> {
    match run.workers {
        Some(0) => Err(CliError::Invalid("--workers must be at least 1".into())),
        w => Ok(w),
    }
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let path = dir.join(name);
    let werr = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(werr)?;
    let mut out = BufWriter::new(File::create(&path).map_err(werr)?);
    body(&mut out).and_then(|_| out.flush()).map_err(werr)
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_plot(dir: &Path, stem: &str, rows: &[PlotRow]) -> Result<(), CliError> {
    write_file(dir, &format!("{stem}_plot.csv"), |out| {
        let mut w = csv::Writer::from_writer(out);
        for row in rows {
            w.serialize(row).map_err(csv_io)?;
        }
        w.flush()
    })
}

fn write_report(dir: &Path, stem: &str, report: &ScenarioReport) -> Result<bool, CliError> {
    write_file(dir, &format!("{stem}_claims.csv"), |out| report.write_csv(out).map_err(csv_io))?;
    write_file(dir, &format!("{stem}.json"), |out| writeln!(out, "{}", report.to_json()))?;
    print!("{}", report.to_text());
    let passed = report.passed();
    println!("verdict {}", if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

fn estimate_plot_rows(rows: &[EstimateRow]) -> Vec<PlotRow> {
    rows.iter()
        .map(|r| PlotRow {
            panel: r.phi.clone(),
            series: r.method.clone(),
            x: r.strategy.clone(),
            y: r.mean,
            y_low: Some(r.ci_low),
            y_high: Some(r.ci_high),
        })
        .collect()
}

fn report_plot_rows(report: &ScenarioReport) -> Vec<PlotRow> {
    report
        .claims
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            c.measured.iter().map(move |m| PlotRow {
                panel: format!("claim {k}"),
                series: c.verdict.label().to_string(),
                x: m.label.clone(),
                y: m.value,
                y_low: m.std_error.map(|s| m.value - s),
                y_high: m.std_error.map(|s| m.value + s),
            })
        })
        .collect()
}

fn verify<E>(
    a: &ConfigArgs,
    stem: &str,
    battery: impl Fn(&ExperimentConfig, &McOptions) -> Result<crate::battery::BatteryOutput, E>,
) -> Result<bool, CliError>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let (cfg, mc) = configured(&a.config, &a.run)?;
    let out = battery(&cfg, &mc).map_err(run_err)?;
    let dir = &cfg.outputs;
    write_file(dir, &format!("{stem}.csv"), |w| write_estimate_rows(&out.rows, w).map_err(csv_io))?;
    if a.run.plot_data {
        write_plot(dir, stem, &estimate_plot_rows(&out.rows))?;
    }
    write_report(dir, stem, &out.report)
}

fn hjb(a: &HjbArgs) -> Result<bool, CliError> {
    let (cfg, mc) = configured(&a.config, &a.run)?;
    let out = hjb_battery(&cfg, &mc, !a.no_probes).map_err(run_err)?;
    let dir = &cfg.outputs;
    let mut plot = Vec::new();
    for (stem, field) in &out.fields {
        let levels = field.sparse_levels(HJB_CSV_LEVELS);
        write_file(dir, &format!("hjb_{stem}.csv"), |w| {
            field.write_csv_levels(&cfg.chain, &levels, w).map_err(csv_io)
        })?;
        if a.run.plot_data {
            let n = field.grid.n_t;
            for z in 0..field.n_states {
                for i in 0..field.grid.n_r {
                    plot.push(PlotRow {
                        panel: stem.clone(),
                        series: cfg.chain.states[z].id.clone(),
                        x: field.grid.r_at(i).to_string(),
                        y: field.value(i, z, n),
                        y_low: None,
                        y_high: None,
                    });
                }
            }
        }
    }
    if a.run.plot_data {
        write_plot(dir, "hjb", &plot)?;
    }
    write_report(dir, "hjb", &out.report)
}

fn print_value(v: f64) {
    println!("{v:.7}");
}

fn analytic(form: Form) -> Result<bool, CliError> {
    let invalid = |e: crate::analytic::AnalyticError| CliError::Invalid(e.to_string());
    match form {
        Form::G { r, a } => print_value(survival_no_drift(r, a).map_err(invalid)?),
        Form::GRr { r, a } => print_value(survival_no_drift_rr(r, a)),
        Form::DriftF { v, r, mu, sigma_bar, t } => {
            let cfg = DriftConfig::new(r, mu, sigma_bar, t).map_err(invalid)?;
            let f = drift_survival_f(v, &cfg).map_err(invalid)?;
            println!("literal {:.7}", f.printed);
            println!("reflection {:.7}", f.reflection);
        }
        Form::Psi { r, z, t, c } => print_value(psi_c(r, z, t, c).map_err(invalid)?),
        Form::PsiDerivative { r, z, t } => print_value(psi_c_derivative_at_zero(r, z, t)),
        Form::K { c } => {
            if !(-1.0..=1.0).contains(&c) {
                return Err(CliError::Invalid(format!("c = {c} is outside [-1, 1]")));
            }
            print_value(k_of_c(c))
        }
        Form::NormalCdf { x } => print_value(normal_cdf(x)),
        Form::NormalQuantile { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::Invalid(format!("p = {p} is outside [0, 1]")));
            }
            print_value(normal_quantile(p))
        }
    }
    Ok(true)
}

fn scenario_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|source| crate::config::ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn counterexample(a: &CounterexampleArgs) -> Result<bool, CliError> {
    let run = &a.run;
    let mut mc = McOptions::new(run.paths.unwrap_or(DEFAULT_PATHS), run.seed.unwrap_or(0));
    if mc.n_paths == 0 {
        return Err(CliError::Invalid("--paths must be positive".into()));
    }
    if let Some(ci) = run.ci {
        if !(ci > 0.0 && ci < 1.0) {
            return Err(CliError::Invalid(format!("--ci {ci} is not in (0, 1)")));
        }
        mc.ci_level = ci;
    }
    mc.step = run.step;
    mc.workers = checked_workers(run)?;
    let path = a.config.as_deref();
    let report = match a.scenario {
        Scenario::Gbm => run_gbm_counterexample(&scenario_config::<GbmConfig>(path)?, &mc),
        Scenario::Drift => run_drift_counterexample(&scenario_config::<DriftScenario>(path)?, &mc),
        Scenario::Semimarkov => run_semi_markov_counterexample(&scenario_config::<SemiMarkovConfig>(path)?, &mc),
        Scenario::Poisson => run_poisson_counterexample(&scenario_config::<PoissonConfig>(path)?, &mc),
        Scenario::Feller => run_independent_feller_counterexample(&scenario_config::<FellerConfig>(path)?, &mc),
    }
    .map_err(run_err)?;
    let dir = run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let stem = format!("counterexample_{}", report.scenario);
    if run.plot_data {
        write_plot(&dir, &stem, &report_plot_rows(&report))?;
    }
    write_report(&dir, &stem, &report)
}

#[derive(Serialize)]
struct PathRow<'a> {
    path: usize,
    strategy: &'a str,
    t: f64,
    state_id: &'a str,
    r: f64,
    crossed: bool,
}

fn simulate(a: &SimulateArgs) -> Result<bool, CliError> {
    let mut run = a.run.clone();
    run.paths = Some(run.paths.unwrap_or(DEFAULT_DUMP_PATHS));
    let (cfg, mc) = configured(&a.config, &run)?;
    let strategies = match a.strategy {
        Some(k) => vec![cfg
            .strategies
            .get(k)
            .cloned()
            .ok_or_else(|| CliError::Invalid(format!("--strategy {k}: only {} configured", cfg.strategies.len())))?],
        None => cfg.strategies.clone(),
    };
    let sampler = cfg.chain.sampler();
    let step = mc.step_for(cfg.horizon);
    let labels: Vec<String> = strategies.iter().map(|s| s.label()).collect();
    let mut rows = Vec::new();
    for (s, label) in strategies.iter().zip(&labels) {
        let paths = crate::simulate::run_paths(mc.n_paths, mc.seed, mc.workers, |_, stream| {
            let chain_path = sampler.sample(cfg.horizon, stream);
            simulate_difference_path(&chain_path, &cfg.volatility, s, cfg.r0, step, stream)
                .map(|p| (chain_path, p))
        });
        for (i, res) in paths.into_iter().enumerate() {
            let (chain_path, p) = res.map_err(run_err)?;
            for (&t, &r) in p.grid_times.iter().zip(&p.r_values) {
                let crossed = p.crossing_time.is_some_and(|tc| tc <= t);
                rows.push((i, label.as_str(), t, chain_path.state_at(t), r, crossed));
            }
        }
    }
    let dir = &cfg.outputs;
    write_file(dir, "paths.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        for &(path, strategy, t, z, r, crossed) in &rows {
            w.serialize(PathRow {
                path,
                strategy,
                t,
                state_id: &cfg.chain.states[z].id,
                r,
                crossed,
            })
            .map_err(csv_io)?;
        }
        w.flush()
    })?;
    if run.plot_data {
        let plot: Vec<PlotRow> = rows
            .iter()
            .map(|&(path, strategy, t, _, r, _)| PlotRow {
                panel: strategy.to_string(),
                series: format!("path {path}"),
                x: t.to_string(),
                y: r,
                y_low: None,
                y_high: None,
            })
            .collect();
        write_plot(dir, "paths", &plot)?;
    }
    println!("wrote {} rows for {} paths to {}", rows.len(), mc.n_paths, dir.join("paths.csv").display());
    Ok(true)
}
