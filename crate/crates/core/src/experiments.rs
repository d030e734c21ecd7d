//! Named, seeded experiments: configuration, CSV output and pass/fail checks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::analysis::{
    loglog_slope, loglog_slope_auto, reference_constrained, reference_lasso, reference_smooth, SlopeFit,
    CERTIFICATE_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::extrapolation::{richardson_weights, spectral_filter, spectral_filter_direct, MAX_ORDER};
use crate::problems::{
    default_robust_penalty, gen_accelerated_quadratic, gen_fw_lasso, gen_lasso_data, gen_logistic, gen_robust_dual,
    harmonic_spectrum, Feasibility, Objective,
};
use crate::ridge::{
    best_lambda, decay_bias_variance, decay_regime_slopes, ridge_experiment, ridge_replication, DecaySpec,
    RidgeConfig, SmootherMethod,
};
use crate::smoothing::{bias_curve, dyadic_grid, l1_as_polyhedral, oracle_curve, Penalty};
use crate::solvers::{accelerated_gd, averaged_gd, frank_wolfe_with, CheckpointSchedule, GapRow, StepRule};

/// Version tag written in the CSV header comment.
pub const CSV_SCHEMA: &str = "richex-csv/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    AvgGd,
    AccGd,
    FwLasso,
    FwRobust,
    SmoothingBias,
    SmoothingOracle,
    RidgeExperiment,
    RidgeDecay,
    Weights,
    Filter,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        Self::AvgGd,
        Self::AccGd,
        Self::FwLasso,
        Self::FwRobust,
        Self::SmoothingBias,
        Self::SmoothingOracle,
        Self::RidgeExperiment,
        Self::RidgeDecay,
        Self::Weights,
        Self::Filter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::AvgGd => "avg-gd",
            Self::AccGd => "acc-gd",
            Self::FwLasso => "fw-lasso",
            Self::FwRobust => "fw-robust",
            Self::SmoothingBias => "smoothing-bias",
            Self::SmoothingOracle => "smoothing-oracle",
            Self::RidgeExperiment => "ridge-experiment",
            Self::RidgeDecay => "ridge-decay",
            Self::Weights => "weights",
            Self::Filter => "filter",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown experiment {s:?}")))
    }
}

/// Keys accepted in config files and as `--key value` flags.
pub const CONFIG_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "n",
    "d",
    "iterations",
    "m",
    "lambda-grid",
    "noise",
    "rule",
    "penalty",
    "radius",
    "weight",
    "replications",
    "beta",
    "delta",
    "window",
    "feasibility",
    "per-octave",
    "output",
];

/// Experiment selection plus optional overrides of the paper-scale defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub iterations: Option<usize>,
    pub orders: Option<Vec<usize>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub noise: Option<f64>,
    pub rule: Option<StepRule>,
    pub penalty: Option<Penalty>,
    pub radius: Option<f64>,
    pub weight: Option<f64>,
    pub replications: Option<usize>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub window: Option<f64>,
    pub feasibility: Option<Feasibility>,
    pub per_octave: Option<usize>,
    pub output: Option<PathBuf>,
    raw: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("cannot parse {key}={value:?}")))
}

/// Comma-separated orders, e.g. `0,1,3`.
pub fn parse_orders(s: &str) -> Result<Vec<usize>> {
    let orders = s
        .split(',')
        .map(|t| parse_value::<usize>("m", t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if orders.is_empty() {
        return Err(invalid("empty order list"));
    }
    Ok(orders)
}

/// `lo:hi:per_octave` for the grid `2^(i/per_octave)` with `lo ≤ i/per_octave ≤ hi`,
/// or a comma-separated list of positive values.
pub fn parse_lambda_grid(s: &str) -> Result<Vec<f64>> {
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(invalid(format!("lambda grid {s:?} is not lo:hi:per_octave")));
        }
        let lo: i32 = parse_value("lambda-grid", parts[0])?;
        let hi: i32 = parse_value("lambda-grid", parts[1])?;
        let per: u32 = parse_value("lambda-grid", parts[2])?;
        if per == 0 || lo > hi {
            return Err(invalid(format!("lambda grid {s:?} is empty")));
        }
        dyadic_grid(lo, hi, per)
    } else {
        s.split(',')
            .map(|t| parse_value::<f64>("lambda-grid", t.trim()))
            .collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(invalid(format!("lambda grid {s:?} must hold positive finite values")));
    }
    Ok(grid)
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 1,
            n: None,
            d: None,
            iterations: None,
            orders: None,
            lambda_grid: None,
            noise: None,
            rule: None,
            penalty: None,
            radius: None,
            weight: None,
            replications: None,
            beta: None,
            delta: None,
            window: None,
            feasibility: None,
            per_octave: None,
            output: None,
            raw: BTreeMap::new(),
        }
    }

    /// Applies `pairs` in order; later values override earlier ones.
    /// The `experiment` key must appear somewhere in `pairs`.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        let kind = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "experiment")
            .ok_or_else(|| invalid("missing experiment"))?
            .1
            .parse()?;
        let mut config = Self::new(kind);
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "experiment" => self.experiment = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "n" => self.n = Some(parse_value(key, value)?),
            "d" => self.d = Some(parse_value(key, value)?),
            "iterations" => self.iterations = Some(parse_value(key, value)?),
            "m" => self.orders = Some(parse_orders(value)?),
            "lambda-grid" => self.lambda_grid = Some(parse_lambda_grid(value)?),
            "noise" => self.noise = Some(parse_value(key, value)?),
            "rule" => self.rule = Some(value.parse()?),
            "penalty" => self.penalty = Some(value.parse()?),
            "radius" => self.radius = Some(parse_value(key, value)?),
            "weight" => self.weight = Some(parse_value(key, value)?),
            "replications" => self.replications = Some(parse_value(key, value)?),
            "beta" => self.beta = Some(parse_value(key, value)?),
            "delta" => self.delta = Some(parse_value(key, value)?),
            "window" => self.window = Some(parse_value(key, value)?),
            "feasibility" => self.feasibility = Some(value.parse()?),
            "per-octave" => self.per_octave = Some(parse_value(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            other => return Err(invalid(format!("unknown config key {other:?}"))),
        }
        if key != "experiment" && key != "output" {
            self.raw.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    /// Sorted `key=value` lines of everything that influences the results.
    pub fn canonical(&self) -> String {
        let mut out = format!("experiment={}\nseed={}\n", self.experiment, self.seed);
        for (k, v) in &self.raw {
            if k != "seed" {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    fn window_or(&self, default: f64) -> f64 {
        self.window.unwrap_or(default)
    }

    fn schedule(&self) -> Result<CheckpointSchedule> {
        CheckpointSchedule::geometric(self.per_octave.unwrap_or(DEFAULT_PER_OCTAVE))
    }
}

const DEFAULT_PER_OCTAVE: usize = 8;

/// One pass/fail line of an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Measured quantity; `None` for yes/no checks.
    pub value: Option<f64>,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    pub fn band(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value: Some(value), expected: format!("in [{lo}, {hi}]"), pass: value >= lo && value <= hi }
    }

    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            expected: format!("{target:.4} ± {tol}"),
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value: Some(value), expected: format!("≤ {limit:e}"), pass: value <= limit }
    }

    pub fn holds(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value: None, expected: detail.into(), pass }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        match self.value {
            Some(v) if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) => {
                write!(f, "{tag} {}: {v:.3e} (expected {})", self.name, self.expected)
            }
            Some(v) => write!(f, "{tag} {}: {v:.4} (expected {})", self.name, self.expected),
            None => write!(f, "{tag} {} ({})", self.name, self.expected),
        }
    }
}

/// Result of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub csv: String,
    pub checks: Vec<Check>,
    pub summary: Vec<(String, String)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// `key=value` summary lines followed by one line per check.
    pub fn report(&self) -> String {
        let mut out = format!("experiment={} config={}\n", self.experiment, self.config_hash);
        for (k, v) in &self.summary {
            out.push_str(&format!("{k}={v}\n"));
        }
        for c in &self.checks {
            out.push_str(&format!("{c}\n"));
        }
        out
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, config: &ExperimentConfig) -> Result<String> {
        let mut buf = format!(
            "# {CSV_SCHEMA} experiment={} seed={} config={}\n",
            config.experiment,
            config.seed,
            config.hash()
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Report {
    table: Table,
    checks: Vec<Check>,
    summary: Vec<(String, String)>,
}

impl Report {
    fn new(table: Table) -> Self {
        Self { table, checks: Vec::new(), summary: Vec::new() }
    }

    fn note(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.summary.push((key.into(), value.to_string()));
    }

    fn fit(&mut self, key: &str, fit: &SlopeFit) {
        self.note(key, fit);
    }
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    let report = match config.experiment {
        ExperimentKind::AvgGd => run_avg_gd(config)?,
        ExperimentKind::AccGd => run_acc_gd(config)?,
        ExperimentKind::FwLasso => run_fw(config, false)?,
        ExperimentKind::FwRobust => run_fw(config, true)?,
        ExperimentKind::SmoothingBias => run_smoothing_bias(config)?,
        ExperimentKind::SmoothingOracle => run_smoothing_oracle(config)?,
        ExperimentKind::RidgeExperiment => run_ridge_experiment(config)?,
        ExperimentKind::RidgeDecay => run_ridge_decay(config)?,
        ExperimentKind::Weights => run_weights(config)?,
        ExperimentKind::Filter => run_filter(config)?,
    };
    Ok(Outcome {
        experiment: config.experiment,
        config_hash: config.hash(),
        csv: report.table.render(config)?,
        checks: report.checks,
        summary: report.summary,
    })
}

/// Slope band shared by every `≈ k^-2` claim.
pub const SECOND_ORDER_BAND: (f64, f64) = (-2.4, -1.6);
/// Slope band of the `≈ k^-1` claims.
pub const FIRST_ORDER_BAND: (f64, f64) = (-1.3, -0.7);

fn gap_table(rows: &[GapRow]) -> Table {
    let mut t = Table::new(&["k", "gap_plain", "gap_avg", "gap_extrap"]);
    for r in rows {
        t.push(vec![r.k.to_string(), r.plain.to_string(), opt(r.average), opt(r.extrapolated)]);
    }
    t
}

fn series(rows: &[GapRow], pick: impl Fn(&GapRow) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
    rows.iter().filter_map(|r| pick(r).map(|g| (r.k as f64, g))).unzip()
}

fn fit_series(rows: &[GapRow], window: f64, pick: impl Fn(&GapRow) -> Option<f64>) -> Result<SlopeFit> {
    let (ks, gaps) = series(rows, pick);
    loglog_slope(&ks, &gaps, window)
}

fn certificate_check(report: &mut Report, certificate: f64) {
    report.note("reference_certificate", format!("{certificate:e}"));
    report.checks.push(Check::at_most("reference certificate", certificate, CERTIFICATE_TOL));
}

/// Final-iterate comparison; `None` when the last checkpoint has no extrapolation.
fn final_ratio(rows: &[GapRow], baseline: impl Fn(&GapRow) -> Option<f64>) -> Option<f64> {
    let last = rows.iter().rev().find(|r| r.extrapolated.is_some())?;
    Some(last.extrapolated? / baseline(last)?)
}

fn run_avg_gd(config: &ExperimentConfig) -> Result<Report> {
    let n = config.n.unwrap_or(4000);
    let d = config.d.unwrap_or(400);
    let iterations = config.iterations.unwrap_or(1 << 17);
    let noise = config.noise.unwrap_or(0.0);
    let window = config.window_or(0.25);
    let problem = gen_logistic(n, d, &harmonic_spectrum(d), config.seed)?;
    let x0 = DVector::zeros(d);
    let reference = reference_smooth(&problem, &x0, 100_000)?;
    let l = problem.smoothness().ok_or_else(|| invalid("logistic problem has no smoothness constant"))?;
    let trace = averaged_gd(&problem, &x0, 1.0 / l, iterations, noise, config.seed, &config.schedule()?)?;
    let rows = trace.gaps(&problem, reference.f_star);
    let mut report = Report::new(gap_table(&rows));
    report.note("f_star", reference.f_star);
    certificate_check(&mut report, reference.certificate);
    let avg = fit_series(&rows, window, |r| r.average)?;
    let extrap = fit_series(&rows, window, |r| r.extrapolated)?;
    report.fit("slope_average", &avg);
    report.fit("slope_tail_average", &extrap);
    report.checks.push(Check::band("averaged gap slope", avg.slope, SECOND_ORDER_BAND.0, SECOND_ORDER_BAND.1));
    let ratio = final_ratio(&rows, |r| r.average).ok_or_else(|| invalid("final checkpoint lacks a tail average"))?;
    report.checks.push(Check::at_most("final tail-average gap / averaged gap", ratio, 0.1));
    Ok(report)
}

fn run_acc_gd(config: &ExperimentConfig) -> Result<Report> {
    let d = config.d.unwrap_or(1000);
    let iterations = config.iterations.unwrap_or(1024);
    let window = config.window_or(0.5);
    let problem = gen_accelerated_quadratic(d, config.seed)?;
    let l = problem.smoothness().ok_or_else(|| invalid("quadratic has no smoothness constant"))?;
    let trace = accelerated_gd(&problem, &DVector::zeros(d), l, iterations, &config.schedule()?)?;
    // the optimum is known in closed form, so f_* = 0 exactly
    let rows = trace.gaps(&problem, 0.0);
    let mut report = Report::new(gap_table(&rows));
    let plain = fit_series(&rows, window, |r| Some(r.plain))?;
    let extrap = fit_series(&rows, window, |r| r.extrapolated)?;
    report.fit("slope_plain", &plain);
    report.fit("slope_extrapolated", &extrap);
    let (lo, hi) = SECOND_ORDER_BAND;
    report.checks.push(Check::band("plain gap slope", plain.slope, lo, hi));
    report.checks.push(Check::band("extrapolated gap slope", extrap.slope, lo, hi));
    let ratio = final_ratio(&rows, |r| Some(r.plain)).ok_or_else(|| invalid("final checkpoint lacks an extrapolation"))?;
    report.checks.push(Check::at_most("final extrapolated gap / plain gap", ratio, 10.0));
    Ok(report)
}

fn run_fw(config: &ExperimentConfig, robust: bool) -> Result<Report> {
    let rule = config.rule.unwrap_or(StepRule::OpenLoopInvK);
    let window = config.window_or(0.5);
    let schedule = config.schedule()?;
    let (rows, certificate) = if robust {
        let n = config.n.unwrap_or(400);
        let d = config.d.unwrap_or(200);
        let iterations = config.iterations.unwrap_or(1 << 20);
        let penalty = config.weight.unwrap_or_else(|| default_robust_penalty(n));
        let (problem, oracle) = gen_robust_dual(n, d, penalty, config.seed)?;
        let x0 = DVector::zeros(n);
        let reference = reference_constrained(&problem, &oracle, &x0, 200_000)?;
        let feasibility = config.feasibility.unwrap_or(oracle.default_feasibility());
        let trace = frank_wolfe_with(&problem, &oracle, rule, &x0, iterations, &schedule, feasibility)?;
        (trace.gaps(&problem, reference.f_star), reference.certificate)
    } else {
        let n = config.n.unwrap_or(400);
        let d = config.d.unwrap_or(n);
        let iterations = config.iterations.unwrap_or(1 << 17);
        let radius = config.radius.unwrap_or(DEFAULT_FW_RADIUS);
        let (problem, oracle) = gen_fw_lasso(n, d, radius, config.seed)?;
        let x0 = DVector::zeros(d);
        let reference = reference_constrained(&problem, &oracle, &x0, 200_000)?;
        let feasibility = config.feasibility.unwrap_or(oracle.default_feasibility());
        let trace = frank_wolfe_with(&problem, &oracle, rule, &x0, iterations, &schedule, feasibility)?;
        (trace.gaps(&problem, reference.f_star), reference.certificate)
    };
    let mut report = Report::new(gap_table(&rows));
    report.note("rule", rule.label());
    certificate_check(&mut report, certificate);
    let plain = fit_series(&rows, window, |r| Some(r.plain))?;
    let extrap = fit_series(&rows, window, |r| r.extrapolated)?;
    report.fit("slope_plain", &plain);
    report.fit("slope_extrapolated", &extrap);
    let plain_band = match rule {
        StepRule::OpenLoopInvK => FIRST_ORDER_BAND,
        _ => SECOND_ORDER_BAND,
    };
    let label = rule.label();
    report.checks.push(Check::band(format!("{label} plain gap slope"), plain.slope, plain_band.0, plain_band.1));
    report.checks.push(Check::band(
        format!("{label} extrapolated gap slope"),
        extrap.slope,
        SECOND_ORDER_BAND.0,
        SECOND_ORDER_BAND.1,
    ));
    let ratio = final_ratio(&rows, |r| Some(r.plain)).ok_or_else(|| invalid("final checkpoint lacks an extrapolation"))?;
    report.checks.push(Check::at_most("final extrapolated gap / plain gap", ratio, 10.0));
    Ok(report)
}

/// ℓ1 radius of the constrained logistic Lasso.
pub const DEFAULT_FW_RADIUS: f64 = 5.0;
/// ℓ1 weight of the penalized Lasso used by the smoothing experiments.
pub const DEFAULT_LASSO_WEIGHT: f64 = 0.3;
/// Residual tolerance for the automatic bias-fit window.
pub const BIAS_FIT_RMS: f64 = 0.05;

fn default_smoothing_grid() -> Vec<f64> {
    dyadic_grid(-18, 1, 5)
}

fn lasso_setup(config: &ExperimentConfig) -> Result<(crate::problems::LeastSquaresProblem, f64, f64, f64)> {
    let n = config.n.unwrap_or(100);
    let d = config.d.unwrap_or(100);
    let weight = config.weight.unwrap_or(DEFAULT_LASSO_WEIGHT);
    let h = gen_lasso_data(n, d, config.seed)?;
    let reference = reference_lasso(&h, weight, 200_000)?;
    Ok((h, weight, reference.f_star, reference.certificate))
}

fn run_smoothing_bias(config: &ExperimentConfig) -> Result<Report> {
    let penalty = config.penalty.unwrap_or(Penalty::Quadratic);
    let orders = config.orders.clone().unwrap_or_else(|| vec![0, 1, 2, 3]);
    let grid = config.lambda_grid.clone().unwrap_or_else(default_smoothing_grid);
    let iterations = config.iterations.unwrap_or(2000);
    let (h, weight, f_star, certificate) = lasso_setup(config)?;
    let g = l1_as_polyhedral(h.dim(), weight)?;
    let points = bias_curve(&h, &g, penalty, &grid, &orders, iterations, f_star)?;
    let mut table = Table::new(&["lambda", "m", "gap"]);
    for p in &points {
        table.push(vec![p.lambda.to_string(), p.order.to_string(), p.gap.to_string()]);
    }
    let mut report = Report::new(table);
    report.note("penalty", penalty.label());
    report.note("f_star", f_star);
    certificate_check(&mut report, certificate);
    // gaps within a few thousand ulps of f_* are roundoff
    let floor = 1e3 * f64::EPSILON * f_star.abs().max(1.0);
    for &m in &orders {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            points.iter().filter(|p| p.order == m).map(|p| (p.lambda, p.gap)).unzip();
        let fit = loglog_slope_auto(&xs, &ys, floor, BIAS_FIT_RMS)?;
        report.fit(&format!("slope_m{m}"), &fit);
        report.checks.push(Check::near(
            format!("{} bias slope m={m}", penalty.label()),
            fit.slope,
            (m + 1) as f64,
            0.3,
        ));
    }
    Ok(report)
}

/// Exponent `2(m+1)/(m+2)` of the oracle rate `k^{-2(m+1)/(m+2)}`.
pub fn oracle_exponent(m: usize) -> f64 {
    2.0 * (m as f64 + 1.0) / (m as f64 + 2.0)
}

fn run_smoothing_oracle(config: &ExperimentConfig) -> Result<Report> {
    let penalty = config.penalty.unwrap_or(Penalty::Quadratic);
    let orders = config.orders.clone().unwrap_or_else(|| vec![0, 1, 2, 3]);
    let grid = config.lambda_grid.clone().unwrap_or_else(default_smoothing_grid);
    let iterations = config.iterations.unwrap_or(16384);
    let window = config.window_or(0.5);
    let schedule = CheckpointSchedule::geometric(config.per_octave.unwrap_or(4))?;
    let (h, weight, f_star, certificate) = lasso_setup(config)?;
    let g = l1_as_polyhedral(h.dim(), weight)?;
    let rows = oracle_curve(&h, &g, penalty, &grid, &orders, iterations, &schedule, f_star)?;
    let mut table = Table::new(&["iterations", "best_gap", "m", "best_lambda"]);
    for r in &rows {
        table.push(vec![r.cost.to_string(), r.best_gap.to_string(), r.order.to_string(), r.best_lambda.to_string()]);
    }
    let mut report = Report::new(table);
    report.note("penalty", penalty.label());
    report.note("f_star", f_star);
    certificate_check(&mut report, certificate);
    for &m in &orders {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.order == m).map(|r| (r.cost as f64, r.best_gap)).unzip();
        let fit = loglog_slope(&xs, &ys, window)?;
        report.fit(&format!("slope_m{m}"), &fit);
        report.checks.push(Check::near(
            format!("{} oracle slope m={m}", penalty.label()),
            fit.slope,
            -oracle_exponent(m),
            0.2,
        ));
    }
    Ok(report)
}

fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().amax()
}

/// Default ridge noise level; puts the optimal `λ` of every order inside the default grid.
pub const DEFAULT_RIDGE_NOISE: f64 = 0.1;

fn run_ridge_experiment(config: &ExperimentConfig) -> Result<Report> {
    let ridge = RidgeConfig {
        d: config.d.unwrap_or(40),
        n: config.n.unwrap_or(200),
        replications: config.replications.unwrap_or(10),
        lambda_grid: config.lambda_grid.clone().unwrap_or_else(|| dyadic_grid(-24, 6, 2)),
        orders: config.orders.clone().unwrap_or_else(|| (0..=8).collect()),
        noise_std: config.noise.unwrap_or(DEFAULT_RIDGE_NOISE),
        seed: config.seed,
    };
    let cells = ridge_experiment(&ridge)?;
    let mut table = Table::new(&["lambda", "m", "bias", "variance", "total"]);
    for c in &cells {
        table.push(vec![
            c.lambda.to_string(),
            c.order.to_string(),
            c.bias.to_string(),
            c.variance.to_string(),
            c.total.to_string(),
        ]);
    }
    let mut report = Report::new(table);

    // both smoother constructions on the first replication
    let model = ridge_replication(ridge.d, ridge.n, ridge.noise_std, ridge.seed)?;
    let probe: Vec<f64> = ridge.lambda_grid.iter().step_by((ridge.lambda_grid.len() / 6).max(1)).copied().collect();
    let mut worst: f64 = 0.0;
    for &lambda in &probe {
        for m in 1..=6 {
            let direct = model.extrapolated_smoother(lambda, m, SmootherMethod::DirectSum)?;
            let spectral = model.extrapolated_smoother(lambda, m, SmootherMethod::SpectralFilter)?;
            let scale = operator_norm(&spectral).max(f64::MIN_POSITIVE);
            worst = worst.max(operator_norm(&(direct - &spectral)) / scale);
        }
    }
    report.checks.push(Check::at_most("DirectSum vs SpectralFilter relative error", worst, 1e-10));

    let best: BTreeMap<usize, (f64, f64)> =
        ridge.orders.iter().filter_map(|&m| best_lambda(&cells, m).map(|b| (m, b))).collect();
    for (m, (l, e)) in &best {
        report.note(format!("best_m{m}"), format!("lambda={l:e} error={e:e}"));
    }
    let need = |m: usize| best.get(&m).copied().ok_or_else(|| invalid(format!("order {m} missing from the run")));
    let shift = [0, 1, 3].iter().map(|&m| need(m)).collect::<Result<Vec<_>>>()?;
    report.checks.push(Check::holds(
        "argmin lambda non-decreasing over m = 0, 1, 3",
        shift.windows(2).all(|w| w[0].0 <= w[1].0),
        format!("{:e} ≤ {:e} ≤ {:e}", shift[0].0, shift[1].0, shift[2].0),
    ));
    let minima = (0..=3).map(need).collect::<Result<Vec<_>>>()?;
    report.checks.push(Check::holds(
        "min error non-increasing from m = 0 to 3",
        minima.windows(2).all(|w| w[1].1 <= w[0].1),
        minima.iter().map(|b| format!("{:e}", b.1)).collect::<Vec<_>>().join(" ≥ "),
    ));
    let top = *ridge.orders.iter().max().unwrap_or(&0);
    if top >= 8 {
        let (prev, last) = (need(top - 1)?.1, need(top)?.1);
        report.checks.push(Check::at_most(
            format!("min error change m={} to m={top}", top - 1),
            (last - prev).abs() / prev,
            0.1,
        ));
    }
    Ok(report)
}

/// `(β, δ, m)` cases checked by default in the decay experiment.
pub const DECAY_CASES: [(f64, f64, usize); 5] = [(1.0, 1.0, 0), (0.75, 4.0, 0), (0.75, 4.0, 1), (1.0, 1.0, 1), (2.0, 1.0, 0)];

fn decay_grid(spec: &DecaySpec, points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = spec.asymptotic_range();
    if !(lo < hi) {
        return Err(invalid(format!("empty asymptotic range [{lo:e}, {hi:e}]; increase n or pass a lambda grid")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().clamp(lo, hi))
        .collect())
}

fn run_ridge_decay(config: &ExperimentConfig) -> Result<Report> {
    let n = config.n.unwrap_or(2000);
    let cases: Vec<(f64, f64, usize)> = match (config.beta, config.delta) {
        (None, None) if config.orders.is_none() => DECAY_CASES.to_vec(),
        _ => {
            let beta = config.beta.unwrap_or(1.0);
            let delta = config.delta.unwrap_or(1.0);
            config.orders.clone().unwrap_or_else(|| vec![0]).into_iter().map(|m| (beta, delta, m)).collect()
        }
    };
    let mut table = Table::new(&["beta", "delta", "m", "lambda", "bias", "variance"]);
    let mut report = Report::new(Table::new(&[]));
    for (beta, delta, m) in cases {
        let spec = DecaySpec::new(beta, delta, n)?;
        let grid = match &config.lambda_grid {
            Some(g) => g.clone(),
            None => decay_grid(&spec, 30)?,
        };
        for &lambda in &grid {
            let (b, v) = decay_bias_variance(&spec, m, lambda)?;
            table.push(vec![beta.to_string(), delta.to_string(), m.to_string(), lambda.to_string(), b.to_string(), v.to_string()]);
        }
        let slopes = decay_regime_slopes(&spec, m, &grid)?;
        let tag = format!("beta={beta} delta={delta} m={m}");
        report.note(format!("bias {tag}"), &slopes.bias);
        report.note(format!("variance {tag}"), &slopes.variance);
        if slopes.low_confidence {
            report.note(format!("low_confidence {tag}"), true);
        }
        report.checks.push(Check::near(format!("bias slope {tag}"), slopes.bias.slope, spec.predicted_bias_slope(m), 0.2));
        report.checks.push(Check::near(
            format!("variance slope {tag}"),
            slopes.variance.slope,
            spec.predicted_variance_slope(),
            0.15,
        ));
    }
    report.table = table;
    Ok(report)
}

fn run_weights(config: &ExperimentConfig) -> Result<Report> {
    let orders = config.orders.clone().unwrap_or_else(|| (0..=10).collect());
    let mut table = Table::new(&["m", "i", "alpha"]);
    let mut report = Report::new(Table::new(&[]));
    for &m in &orders {
        let w = richardson_weights(m)?;
        for (idx, a) in w.coefficients().iter().enumerate() {
            table.push(vec![m.to_string(), (idx + 1).to_string(), a.to_string()]);
        }
        report.note(format!("weights_m{m}"), format!("{:?}", w.coefficients()));
        let worst = w.constraint_residuals().iter().map(|r| r.unsigned_abs()).max().unwrap_or(0);
        report.checks.push(Check::holds(format!("moment residues m={m}"), worst == 0, "all exactly zero"));
        let numeric = vandermonde_weights(m);
        let err = w.to_f64().iter().zip(numeric.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.checks.push(Check::at_most(format!("integer vs Vandermonde solve m={m}"), err, 1e-8));
    }
    report.table = table;
    Ok(report)
}

/// Floating-point solve of `Σ_i α_i i^j = [j == 0]`, `j = 0..=m`, by the
/// Björck-Pereyra recurrences (stable for positive increasing nodes).
pub fn vandermonde_weights(m: usize) -> DVector<f64> {
    let n = m;
    let x: Vec<f64> = (1..=m + 1).map(|i| i as f64).collect();
    let mut b = DVector::zeros(m + 1);
    b[0] = 1.0;
    for k in 0..n {
        for i in (k + 1..=n).rev() {
            b[i] -= x[k] * b[i - 1];
        }
    }
    for k in (0..n).rev() {
        for i in k + 1..=n {
            b[i] /= x[i] - x[i - k - 1];
        }
        for i in k..n {
            b[i] -= b[i + 1];
        }
    }
    b
}

fn run_filter(config: &ExperimentConfig) -> Result<Report> {
    let orders = config.orders.clone().unwrap_or_else(|| (0..=8).collect());
    if let Some(&m) = orders.iter().find(|&&m| m > MAX_ORDER) {
        return Err(Error::Unsupported(format!("order {m} exceeds {MAX_ORDER}")));
    }
    let mus: Vec<f64> = (0..100).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 99.0)).collect();
    let mut table = Table::new(&["m", "mu", "closed_form", "direct_sum", "rel_err"]);
    let mut report = Report::new(Table::new(&[]));
    for &m in &orders {
        let mut worst: f64 = 0.0;
        for &mu in &mus {
            let closed = spectral_filter(mu, m)?;
            let direct = spectral_filter_direct(mu, m)?;
            let rel = (closed - direct).abs() / closed.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            table.push(vec![m.to_string(), mu.to_string(), closed.to_string(), direct.to_string(), rel.to_string()]);
        }
        report.checks.push(Check::at_most(format!("filter closed form vs direct sum m={m}"), worst, 1e-10));
        report.checks.push(Check::holds(format!("filter s(0)=0 m={m}"), spectral_filter(0.0, m)? == 0.0, "exactly 0"));
        if m == 0 {
            let worst = mus
                .iter()
                .map(|&mu| Ok((spectral_filter(mu, 0)? - mu / (mu + 1.0)).abs() / (mu / (mu + 1.0))))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            report.checks.push(Check::at_most("filter m=0 vs mu/(mu+1)", worst, 1e-10));
        }
    }
    report.table = table;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_pairs([("experiment", "weights"), ("colour", "blue")]).unwrap_err();
        assert!(err.to_string().contains("colour"));
        assert!(ExperimentConfig::from_pairs([("seed", "1")]).is_err());
    }

    #[test]
    fn later_pairs_win() {
        let c = ExperimentConfig::from_pairs([("experiment", "weights"), ("m", "1,2"), ("m", "3")]).unwrap();
        assert_eq!(c.orders, Some(vec![3]));
    }

    #[test]
    fn config_text_parsing() {
        let pairs = parse_config_text("# comment\nexperiment = filter\n\nm=0,1\n").unwrap();
        assert_eq!(pairs, vec![("experiment".into(), "filter".into()), ("m".into(), "0,1".into())]);
        assert!(parse_config_text("nonsense").is_err());
    }

    #[test]
    fn hash_ignores_output_and_tracks_values() {
        let a = ExperimentConfig::from_pairs([("experiment", "weights"), ("m", "3")]).unwrap();
        let b = ExperimentConfig::from_pairs([("experiment", "weights"), ("m", "3"), ("output", "x.csv")]).unwrap();
        let c = ExperimentConfig::from_pairs([("experiment", "weights"), ("m", "4")]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn lambda_grid_forms() {
        let g = parse_lambda_grid("-2:0:1").unwrap();
        assert_eq!(g, vec![0.25, 0.5, 1.0]);
        assert_eq!(parse_lambda_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_lambda_grid("0:-1:1").is_err());
        assert!(parse_lambda_grid("-1,2").is_err());
    }

    #[test]
    fn weights_run_reports_known_coefficients() {
        let c = ExperimentConfig::from_pairs([("experiment", "weights"), ("m", "3")]).unwrap();
        let out = run(&c).unwrap();
        assert!(out.passed());
        assert_eq!(out.summary[0], ("weights_m3".to_string(), "[4, -6, 4, -1]".to_string()));
        assert!(out.csv.starts_with("# richex-csv/1 experiment=weights seed=1 config="));
        assert!(out.csv.contains("m,i,alpha\n3,1,4\n3,2,-6\n3,3,4\n3,4,-1\n"));
    }

    #[test]
    fn bjorck_pereyra_matches_lu_at_low_order() {
        for m in 0..=5 {
            let size = m + 1;
            let v = DMatrix::from_fn(size, size, |j, i| ((i + 1) as f64).powi(j as i32));
            let mut rhs = DVector::zeros(size);
            rhs[0] = 1.0;
            let lu = v.lu().solve(&rhs).unwrap();
            assert!((vandermonde_weights(m) - lu).amax() < 1e-10, "m={m}");
        }
    }

    #[test]
    fn check_lines() {
        assert!(Check::band("x", -2.0, -2.4, -1.6).pass);
        assert!(!Check::near("x", 1.5, 1.0, 0.3).pass);
        assert!(Check::at_most("x", 0.1, 0.1).pass);
        assert!(Check::band("x", -2.0, -2.4, -1.6).to_string().starts_with("PASS x"));
    }
}
