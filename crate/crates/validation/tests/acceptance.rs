//! Acceptance criteria, one test each. Every test prints its check lines and a
//! single `criterion N: PASS|FAIL` line straight to stderr so the verdicts
//! survive output capture.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use richex::experiments::{run, Check, ExperimentConfig, ExperimentKind};
use richex::extrapolation::extrapolate_halving;
use richex::problems::{
    gen_accelerated_quadratic, gen_fw_lasso, gen_lasso_data, gen_logistic, gen_robust_dual, harmonic_spectrum,
};
use richex::smoothing::{l1_as_polyhedral, Block, PolyhedralFunction, SeparablePolyhedral, SmoothedObjective};
use richex::solvers::tail_average;
use richex::smoothing::Penalty;
use richex::Objective;

// Criteria carry runtime limits, so they run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn say(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

struct Criterion {
    id: u32,
    title: &'static str,
    start: Instant,
    checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, start: Instant::now(), checks: Vec::new() }
    }

    fn run(&mut self, label: &str, pairs: &[(&str, &str)], limit: Duration) {
        let config = ExperimentConfig::from_pairs(pairs.iter().copied()).expect("valid config");
        let start = Instant::now();
        let outcome = run(&config).expect("experiment runs");
        let elapsed = start.elapsed();
        for (k, v) in &outcome.summary {
            say(&format!("  [{}] {label} {k}={v}", self.id));
        }
        for mut c in outcome.checks {
            c.name = format!("{label}: {}", c.name);
            self.checks.push(c);
        }
        self.runtime(label, elapsed, limit);
    }

    fn runtime(&mut self, label: &str, elapsed: Duration, limit: Duration) {
        self.checks.push(Check::at_most(format!("{label}: runtime seconds"), elapsed.as_secs_f64(), limit.as_secs_f64()));
    }

    fn finish(self) {
        for c in &self.checks {
            say(&format!("  [{}] {c}", self.id));
        }
        let pass = self.checks.iter().all(|c| c.pass);
        let verdict = if pass { "PASS" } else { "FAIL" };
        say(&format!(
            "criterion {:>2}: {verdict} {} ({:.1} s)",
            self.id,
            self.title,
            self.start.elapsed().as_secs_f64()
        ));
        let failed: Vec<String> = self.checks.iter().filter(|c| !c.pass).map(|c| c.to_string()).collect();
        assert!(failed.is_empty(), "criterion {} failed:\n{}", self.id, failed.join("\n"));
    }
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

const SECOND: Duration = Duration::from_secs(1);
const fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

#[test]
fn criterion_01_weights_exactness() {
    let _guard = lock();
    let mut c = Criterion::new(1, "Richardson weights: exact moments and Vandermonde agreement, m = 0..10");
    c.run("weights", &[("experiment", "weights"), ("m", "0,1,2,3,4,5,6,7,8,9,10")], SECOND);
    c.finish();
}

#[test]
fn criterion_02_spectral_filter_equivalence() {
    let _guard = lock();
    let mut c = Criterion::new(2, "spectral filter closed form vs direct sum, m = 0..8");
    c.run("filter", &[("experiment", "filter"), ("m", "0,1,2,3,4,5,6,7,8")], SECOND);
    c.finish();
}

#[test]
fn criterion_03_tail_average_identity() {
    let _guard = lock();
    let mut c = Criterion::new(3, "tail average equals 2 x̄_k - x̄_{k/2} on 50 random sequences");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let half = rng.random_range(1..=200);
        let k = 2 * half;
        let dim = rng.random_range(1..=8);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let seq: Vec<DVector<f64>> = (0..k)
            .map(|_| DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        // running averages summed by hand
        let mean = |n: usize| seq[..n].iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n as f64;
        let identity = extrapolate_halving(&mean(k), &mean(half)).unwrap();
        let direct = tail_average(&seq, k).unwrap();
        let err = (identity - &direct).amax() / direct.amax().max(scale);
        worst = worst.max(err);
    }
    c.checks.push(Check::at_most("max coordinate error relative to sequence scale", worst, 1e-12));
    c.runtime("identity", start.elapsed(), SECOND);
    c.finish();
}

#[test]
fn criterion_04_averaged_gd() {
    let _guard = lock();
    let mut c = Criterion::new(4, "averaged GD on logistic regression: slope ≈ -2, tail average ≤ 0.1× averaged gap");
    c.run(
        "scaled d=100 n=1000",
        &[("experiment", "avg-gd"), ("n", "1000"), ("d", "100"), ("iterations", "65536")],
        Duration::from_secs(30),
    );
    c.run("paper scale d=400 n=4000", &[("experiment", "avg-gd")], minutes(5));
    c.finish();
}

#[test]
fn criterion_05_accelerated_gd() {
    let _guard = lock();
    let mut c = Criterion::new(5, "accelerated GD on a 1/j² quadratic: slopes ≈ -2, no degradation");
    c.run("acc-gd d=1000", &[("experiment", "acc-gd")], minutes(2));
    c.finish();
}

#[test]
fn criterion_06_frank_wolfe_lasso() {
    let _guard = lock();
    let mut c = Criterion::new(6, "Frank-Wolfe on the constrained logistic Lasso, n = d = 400");
    let start = Instant::now();
    c.run("rule 1/k", &[("experiment", "fw-lasso"), ("rule", "1/k")], minutes(5));
    c.run("rule 2/(k+1)", &[("experiment", "fw-lasso"), ("rule", "2/(k+1)")], minutes(5));
    c.runtime("both rules", start.elapsed(), minutes(5));
    c.finish();
}

#[test]
fn criterion_07_frank_wolfe_robust_dual() {
    let _guard = lock();
    let mut c = Criterion::new(7, "Frank-Wolfe on the robust-regression dual, n = 400, d = 200");
    let start = Instant::now();
    c.run("rule 1/k", &[("experiment", "fw-robust"), ("rule", "1/k")], minutes(5));
    c.run("rule 2/(k+1)", &[("experiment", "fw-robust"), ("rule", "2/(k+1)")], minutes(5));
    c.runtime("both rules", start.elapsed(), minutes(5));
    c.finish();
}

#[test]
fn criterion_08_smoothing_bias() {
    let _guard = lock();
    let mut c = Criterion::new(8, "smoothing bias slopes m + 1 for both penalties, d = n = 100");
    c.run("quadratic", &[("experiment", "smoothing-bias"), ("penalty", "quadratic")], minutes(10));
    c.run("entropic", &[("experiment", "smoothing-bias"), ("penalty", "entropic")], minutes(10));
    c.finish();
}

#[test]
fn criterion_09_smoothing_oracle() {
    let _guard = lock();
    let mut c = Criterion::new(9, "smoothing oracle curves: slopes -2(m+1)/(m+2) ± 0.2");
    let start = Instant::now();
    c.run("quadratic", &[("experiment", "smoothing-oracle"), ("penalty", "quadratic")], minutes(20));
    c.run("entropic", &[("experiment", "smoothing-oracle"), ("penalty", "entropic")], minutes(20));
    c.runtime("both penalties", start.elapsed(), minutes(20));
    c.finish();
}

#[test]
fn criterion_10_ridge_experiment() {
    let _guard = lock();
    let mut c = Criterion::new(10, "kernel ridge: smoother equivalence and qualitative claims, d = 40, n = 200");
    c.run("ridge", &[("experiment", "ridge-experiment")], minutes(3));
    c.finish();
}

#[test]
fn criterion_11_decay_slopes() {
    let _guard = lock();
    let mut c = Criterion::new(11, "decay-model bias and variance slopes, n = 2000");
    c.run("decay", &[("experiment", "ridge-decay")], minutes(1));
    c.finish();
}

/// Largest norm-wise relative error between the gradient and central differences.
fn gradient_error<O: Objective>(obj: &O, points: &[DVector<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = obj.gradient(x);
        let mut fd = DVector::zeros(x.len());
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            fd[i] = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
        }
        worst = worst.max((fd - &g).norm() / g.norm().max(1e-8));
    }
    worst
}

fn random_points(d: usize, scale: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20).map(|_| DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))).collect()
}

#[test]
fn criterion_12_gradient_correctness() {
    let _guard = lock();
    let mut c = Criterion::new(12, "gradients match central differences at 20 random points");
    let start = Instant::now();
    let tol = 1e-5;

    let logistic = gen_logistic(60, 12, &harmonic_spectrum(12), 4).unwrap();
    c.checks.push(Check::at_most("logistic", gradient_error(&logistic, &random_points(12, 1.0, 1)), tol));
    let (fw, _) = gen_fw_lasso(60, 12, 5.0, 4).unwrap();
    c.checks.push(Check::at_most("constrained logistic", gradient_error(&fw, &random_points(12, 1.0, 2)), tol));
    let least_squares = gen_lasso_data(30, 12, 4).unwrap();
    c.checks.push(Check::at_most("least squares", gradient_error(&least_squares, &random_points(12, 1.0, 3)), tol));
    let quadratic = gen_accelerated_quadratic(12, 4).unwrap();
    c.checks.push(Check::at_most("quadratic", gradient_error(&quadratic, &random_points(12, 1.0, 4)), tol));
    let (robust, _) = gen_robust_dual(30, 10, 0.2, 4).unwrap();
    c.checks.push(Check::at_most("robust dual", gradient_error(&robust, &random_points(30, 0.5, 5)), tol));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dense = PolyhedralFunction::new(
        DMatrix::from_fn(7, 12, |_, _| rng.sample::<f64, _>(StandardNormal)),
        DVector::from_fn(7, |_, _| rng.sample::<f64, _>(StandardNormal)),
    )
    .unwrap();
    let split = SeparablePolyhedral::new(
        12,
        vec![
            Block {
                coords: (0..5).collect(),
                function: PolyhedralFunction::new(
                    DMatrix::from_fn(4, 5, |_, _| rng.sample::<f64, _>(StandardNormal)),
                    DVector::zeros(4),
                )
                .unwrap(),
            },
            Block {
                coords: (3..12).collect(),
                function: PolyhedralFunction::new(
                    DMatrix::from_fn(3, 9, |_, _| rng.sample::<f64, _>(StandardNormal)),
                    DVector::zeros(3),
                )
                .unwrap(),
            },
        ],
    )
    .unwrap();
    let families = [
        ("l1", l1_as_polyhedral(12, 0.3).unwrap()),
        ("dense max", SeparablePolyhedral::single(dense)),
        ("overlapping blocks", split),
    ];
    for (name, g) in families {
        for penalty in [Penalty::Quadratic, Penalty::Entropic] {
            for lambda in [1.0, 0.1] {
                let obj = SmoothedObjective::new(least_squares.clone(), g.clone(), lambda, penalty).unwrap();
                let err = gradient_error(&obj, &random_points(12, 1.0, 7));
                c.checks.push(Check::at_most(format!("smoothed {name} {} λ={lambda}", penalty.label()), err, tol));
            }
        }
    }
    c.runtime("all objectives", start.elapsed(), Duration::from_secs(10));
    c.finish();
}

fn determinism_configs() -> Vec<Vec<(&'static str, &'static str)>> {
    vec![
        vec![("experiment", "avg-gd"), ("n", "200"), ("d", "20"), ("iterations", "1024"), ("noise", "0.01")],
        vec![("experiment", "acc-gd"), ("d", "100"), ("iterations", "256")],
        vec![("experiment", "fw-lasso"), ("n", "60"), ("d", "40"), ("iterations", "2048")],
        vec![("experiment", "fw-robust"), ("n", "60"), ("d", "30"), ("iterations", "2048"), ("rule", "2/(k+1)")],
        vec![("experiment", "smoothing-bias"), ("n", "30"), ("d", "20"), ("iterations", "300"), ("lambda-grid", "-10:0:2")],
        vec![
            ("experiment", "smoothing-oracle"),
            ("n", "30"),
            ("d", "20"),
            ("iterations", "512"),
            ("lambda-grid", "-8:0:1"),
            ("penalty", "entropic"),
        ],
        vec![("experiment", "ridge-experiment"), ("d", "5"), ("n", "40"), ("replications", "2"), ("lambda-grid", "-8:2:1")],
        vec![("experiment", "ridge-decay")],
        vec![("experiment", "weights")],
        vec![("experiment", "filter")],
    ]
}

#[test]
fn criterion_13_determinism() {
    let _guard = lock();
    let mut c = Criterion::new(13, "repeated runs give bitwise-identical CSV for every experiment");
    let configs = determinism_configs();
    let covered: Vec<ExperimentKind> = configs
        .iter()
        .map(|pairs| pairs[0].1.parse().unwrap())
        .collect();
    c.checks.push(Check::holds(
        "every experiment covered",
        ExperimentKind::ALL.iter().all(|k| covered.contains(k)),
        format!("{} kinds", ExperimentKind::ALL.len()),
    ));
    for pairs in configs {
        let config = ExperimentConfig::from_pairs(pairs.iter().copied()).unwrap();
        let first = run(&config).unwrap().csv;
        let second = run(&config).unwrap().csv;
        c.checks.push(Check::holds(
            format!("{} identical CSV", config.experiment),
            first == second && first.lines().count() > 2,
            format!("{} bytes", first.len()),
        ));
    }
    c.finish();
}
