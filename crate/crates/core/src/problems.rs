//! Objectives, seeded instance generators and linear minimization oracles.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::smoothing::simplex_projection;

/// A differentiable function on `R^d`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), self.gradient(x))
    }

    /// Upper bound on the Hessian eigenvalues, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Dense Hessian, for objectives small enough to factorize.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(x)
    }
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (**self).value_and_gradient(x)
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

/// Largest eigenvalue of `AᵀA`.
pub(crate) fn gram_spectral_norm(a: &DMatrix<f64>) -> f64 {
    let gram = if a.nrows() >= a.ncols() { a.tr_mul(a) } else { a * a.transpose() };
    gram.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max)
}

/// Dot product with independent partial sums, so that the reduction is not
/// serialized on floating-point add latency.
pub(crate) fn fast_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| x * y).sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`.
pub(crate) fn fast_axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `log(1 + exp(-t))` without overflow.
fn log1p_exp_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `1 / (1 + exp(t))`.
fn sigmoid_neg(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// Logistic regression loss `(1/n) Σ log(1 + exp(-b_i xᵀa_i))`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: DMatrix<f64>,
    /// `Aᵀ`, so that each sample is a contiguous column.
    samples: DMatrix<f64>,
    labels: DVector<f64>,
    smoothness: f64,
}

impl LogisticProblem {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), actual: labels.len() });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(invalid("logistic problem needs n, d >= 1"));
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(invalid("labels must be -1 or +1"));
        }
        let smoothness = gram_spectral_norm(&features) / (4.0 * features.nrows() as f64);
        let samples = features.transpose();
        Ok(Self { features, samples, labels, smoothness })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }
}

impl Objective for LogisticProblem {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let margins = &self.features * x;
        let total: f64 = margins
            .iter()
            .zip(self.labels.iter())
            .map(|(z, b)| log1p_exp_neg(b * z))
            .sum();
        total / self.n_samples() as f64
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        // one pass over the samples, each read once for its margin and its gradient term
        let n = self.n_samples() as f64;
        let mut grad = DVector::zeros(self.dim());
        let mut total = 0.0;
        let d = self.dim();
        let data = self.samples.as_slice();
        for (i, &b) in self.labels.iter().enumerate() {
            let a = &data[i * d..(i + 1) * d];
            let t = b * fast_dot(a, x.as_slice());
            total += log1p_exp_neg(t);
            fast_axpy(-b * sigmoid_neg(t) / n, a, grad.as_mut_slice());
        }
        (total / n, grad)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    /// `(1/n) Aᵀ diag(σ(t)(1 - σ(t))) A` with `t_i = b_i xᵀa_i`.
    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.n_samples() as f64;
        let margins = &self.features * x;
        let mut weighted = self.features.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            let s = sigmoid_neg(margins[i]);
            row *= s * (1.0 - s) / n;
        }
        Some(self.features.tr_mul(&weighted))
    }
}

/// Least squares `(1/2n) ‖b - Ax‖²`, the smooth part of the penalized Lasso.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    features: DMatrix<f64>,
    response: DVector<f64>,
    smoothness: f64,
}

impl LeastSquaresProblem {
    pub fn new(features: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), actual: response.len() });
        }
        let smoothness = gram_spectral_norm(&features) / features.nrows() as f64;
        Ok(Self { features, response, smoothness })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }
}

impl Objective for LeastSquaresProblem {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = &self.features * x - &self.response;
        r.norm_squared() / (2.0 * self.features.nrows() as f64)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.features.nrows() as f64;
        let r = &self.features * x - &self.response;
        (r.norm_squared() / (2.0 * n), self.features.tr_mul(&r) / n)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.features.tr_mul(&self.features) / self.features.nrows() as f64)
    }
}

/// Quadratic `½ Σ_j h_j (x_j - x*_j)²`, written in its eigenbasis.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    eigenvalues: DVector<f64>,
    optimum: DVector<f64>,
}

impl QuadraticProblem {
    pub fn new(eigenvalues: DVector<f64>, optimum: DVector<f64>) -> Result<Self> {
        if eigenvalues.len() != optimum.len() {
            return Err(Error::DimensionMismatch { expected: eigenvalues.len(), actual: optimum.len() });
        }
        if eigenvalues.iter().any(|&h| !(h >= 0.0)) {
            return Err(invalid("quadratic eigenvalues must be non-negative"));
        }
        Ok(Self { eigenvalues, optimum })
    }

    /// Hessian eigenvalues `1/j^power`, `j = 1..=d`, with the given optimum.
    pub fn power_decay(d: usize, power: f64, optimum: DVector<f64>) -> Result<Self> {
        let eig = DVector::from_fn(d, |j, _| ((j + 1) as f64).powf(-power));
        Self::new(eig, optimum)
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn optimum(&self) -> &DVector<f64> {
        &self.optimum
    }

    /// The vector `c` in `f(x) = ½ xᵀHx - cᵀx + const`.
    pub fn linear_term(&self) -> DVector<f64> {
        self.eigenvalues.component_mul(&self.optimum)
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x
            .iter()
            .zip(self.optimum.iter())
            .zip(self.eigenvalues.iter())
            .map(|((xi, oi), h)| h * (xi - oi) * (xi - oi))
            .sum::<f64>()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.optimum).component_mul(&self.eigenvalues)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.eigenvalues.iter().copied().fold(0.0, f64::max))
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&self.eigenvalues))
    }
}

/// Dual of ℓ1-loss ridge regression,
/// `f(x) = -(1/n) xᵀb + (1/(2n²λ)) xᵀAAᵀx`, minimized over the unit ℓ∞ ball.
#[derive(Debug, Clone)]
pub struct RobustDualProblem {
    data: DMatrix<f64>,
    response: DVector<f64>,
    penalty: f64,
    smoothness: f64,
}

impl RobustDualProblem {
    pub fn new(data: DMatrix<f64>, response: DVector<f64>, penalty: f64) -> Result<Self> {
        if !(penalty > 0.0) {
            return Err(invalid(format!("robust dual penalty must be positive, got {penalty}")));
        }
        if data.nrows() != response.len() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), actual: response.len() });
        }
        let n = data.nrows() as f64;
        let smoothness = gram_spectral_norm(&data) / (n * n * penalty);
        Ok(Self { data, response, penalty, smoothness })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    fn scale(&self) -> f64 {
        let n = self.data.nrows() as f64;
        1.0 / (n * n * self.penalty)
    }
}

impl Objective for RobustDualProblem {
    fn dim(&self) -> usize {
        self.data.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let n = self.data.nrows() as f64;
        let atx = self.data.tr_mul(x);
        -x.dot(&self.response) / n + 0.5 * self.scale() * atx.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.data.nrows() as f64;
        let atx = self.data.tr_mul(x);
        let value = -x.dot(&self.response) / n + 0.5 * self.scale() * atx.norm_squared();
        let grad = &self.data * atx * self.scale() - &self.response / n;
        (value, grad)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(&self.data * self.data.transpose() * self.scale())
    }
}

/// Linear minimization oracle over an origin-symmetric polytope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearMinimizationOracle {
    /// `{x : ‖x‖₁ ≤ radius}`.
    L1Ball { radius: f64 },
    /// `{x : ‖x‖_∞ ≤ 1}`.
    BoxLinf,
}

/// How an infeasible point is mapped back into the oracle's set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Feasibility {
    /// Divide by the gauge `‖x‖_K` when it exceeds 1.
    #[default]
    Rescale,
    /// Euclidean projection (coordinate clipping for the box).
    Project,
}

impl std::str::FromStr for Feasibility {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescale" => Ok(Self::Rescale),
            "project" | "clip" => Ok(Self::Project),
            other => Err(invalid(format!("unknown feasibility map {other:?}"))),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl LinearMinimizationOracle {
    pub fn l1_ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid(format!("l1 radius must be positive, got {radius}")));
        }
        Ok(Self::L1Ball { radius })
    }

    /// A vertex attaining `min_{y ∈ K} gᵀy`. Ties go to the lowest index and `sign(0) = +1`.
    pub fn minimize(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        if g.is_empty() {
            return Err(invalid("linear minimization over a zero-dimensional set"));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite direction passed to the oracle"));
        }
        Ok(match *self {
            Self::L1Ball { radius } => {
                let mut best = 0;
                for (j, v) in g.iter().enumerate() {
                    if v.abs() > g[best].abs() {
                        best = j;
                    }
                }
                let mut out = DVector::zeros(g.len());
                out[best] = -radius * sign(g[best]);
                out
            }
            Self::BoxLinf => g.map(|v| -sign(v)),
        })
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        match *self {
            Self::L1Ball { radius } => x.lp_norm(1) / radius,
            Self::BoxLinf => x.amax(),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        match *self {
            Self::L1Ball { radius } => x.lp_norm(1) <= radius + slack,
            Self::BoxLinf => x.amax() <= 1.0 + slack,
        }
    }

    /// Pulls `x` back into the set with [`default_feasibility`](Self::default_feasibility).
    pub fn make_feasible(&self, x: &DVector<f64>) -> DVector<f64> {
        self.make_feasible_with(x, self.default_feasibility())
    }

    /// Radial rescaling for the ℓ1 ball, coordinate clipping for the box.
    pub fn default_feasibility(&self) -> Feasibility {
        match self {
            Self::L1Ball { .. } => Feasibility::Rescale,
            Self::BoxLinf => Feasibility::Project,
        }
    }

    pub fn make_feasible_with(&self, x: &DVector<f64>, mode: Feasibility) -> DVector<f64> {
        match mode {
            Feasibility::Rescale => {
                let norm = self.norm(x);
                if norm > 1.0 {
                    x / norm
                } else {
                    x.clone()
                }
            }
            Feasibility::Project => self.project(x),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            Self::L1Ball { radius } => {
                if x.lp_norm(1) <= radius {
                    return x.clone();
                }
                let scaled = x.map(|v| v.abs() / radius);
                let eta = simplex_projection(&scaled).expect("finite input");
                DVector::from_fn(x.len(), |j, _| radius * eta[j] * sign(x[j]))
            }
            Self::BoxLinf => x.map(|v| v.clamp(-1.0, 1.0)),
        }
    }

    /// Frank-Wolfe duality gap `gᵀ(x - LMO(g))`, an upper bound on `f(x) - f_*`.
    pub fn duality_gap(&self, x: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
        let vertex = self.minimize(g)?;
        Ok(g.dot(&(x - vertex)))
    }
}

/// Std of the Gaussian noise added to the logit before taking label signs.
pub const LABEL_NOISE_STD: f64 = 1.0;

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    // row-major fill so instances do not depend on the storage order
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            out[(i, j)] = rng.sample(StandardNormal);
        }
    }
    out
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn noisy_labels(rng: &mut ChaCha8Rng, features: &DMatrix<f64>) -> DVector<f64> {
    let w0 = normal_vector(rng, features.ncols());
    let logits = features * w0;
    logits.map(|z| {
        let eps: f64 = rng.sample(StandardNormal);
        sign(z + LABEL_NOISE_STD * eps)
    })
}

/// Gaussian logistic data whose covariance has the given (diagonal) spectrum.
pub fn gen_logistic(n: usize, d: usize, spectrum: &[f64], seed: u64) -> Result<LogisticProblem> {
    if n == 0 || d == 0 {
        return Err(invalid("gen_logistic needs n, d >= 1"));
    }
    if spectrum.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: spectrum.len() });
    }
    if spectrum.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid("covariance spectrum must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = normal_matrix(&mut rng, n, d);
    for (j, s) in spectrum.iter().enumerate() {
        let scale = s.sqrt();
        features.column_mut(j).scale_mut(scale);
    }
    let labels = noisy_labels(&mut rng, &features);
    LogisticProblem::new(features, labels)
}

/// The spectrum `1/j`, `j = 1..=d`.
pub fn harmonic_spectrum(d: usize) -> Vec<f64> {
    (1..=d).map(|j| 1.0 / j as f64).collect()
}

/// Constrained logistic Lasso: standard normal features and an ℓ1-ball oracle.
pub fn gen_fw_lasso(
    n: usize,
    d: usize,
    radius: f64,
    seed: u64,
) -> Result<(LogisticProblem, LinearMinimizationOracle)> {
    let oracle = LinearMinimizationOracle::l1_ball(radius)?;
    let problem = gen_logistic(n, d, &vec![1.0; d], seed)?;
    Ok((problem, oracle))
}

/// Robust-regression dual on standard normal data, over the unit box.
pub fn gen_robust_dual(
    n: usize,
    d: usize,
    penalty: f64,
    seed: u64,
) -> Result<(RobustDualProblem, LinearMinimizationOracle)> {
    if !(penalty > 0.0) {
        return Err(invalid(format!("robust dual penalty must be positive, got {penalty}")));
    }
    if n == 0 || d == 0 {
        return Err(invalid("gen_robust_dual needs n, d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = normal_matrix(&mut rng, n, d);
    let response = normal_vector(&mut rng, n);
    Ok((RobustDualProblem::new(data, response, penalty)?, LinearMinimizationOracle::BoxLinf))
}

/// Default robust-dual penalty `1/√n`.
pub fn default_robust_penalty(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Quadratic with Hessian eigenvalues `1/j²` and optimum `x*_j ~ N(0, 1/j)`.
///
/// The optimum's decay keeps every eigen-direction relevant up to `k ≈ d`,
/// where accelerated methods follow their `1/k²` worst-case rate.
pub fn gen_accelerated_quadratic(d: usize, seed: u64) -> Result<QuadraticProblem> {
    if d == 0 {
        return Err(invalid("gen_accelerated_quadratic needs d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let optimum = DVector::from_fn(d, |j, _| rng.sample::<f64, _>(StandardNormal) / ((j + 1) as f64).sqrt());
    QuadraticProblem::power_decay(d, 2.0, optimum)
}

/// Penalized Lasso data: standard normal features and response
/// `b = A w0 + noise` with a sparse `w0`.
pub fn gen_lasso_data(n: usize, d: usize, seed: u64) -> Result<LeastSquaresProblem> {
    if n == 0 || d == 0 {
        return Err(invalid("gen_lasso_data needs n, d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = normal_matrix(&mut rng, n, d);
    let active = (d / 10).max(1);
    let w0 = DVector::from_fn(d, |j, _| if j < active { 1.0 } else { 0.0 });
    let noise = normal_vector(&mut rng, n);
    let response = &features * w0 + noise;
    LeastSquaresProblem::new(features, response)
}

/// Writes a dataset as CSV: one row per sample, features first, label last.
pub fn write_dataset_csv<W: Write>(writer: W, features: &DMatrix<f64>, labels: &DVector<f64>) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: features.nrows(), actual: labels.len() });
    }
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut record = Vec::with_capacity(features.ncols() + 1);
    for i in 0..features.nrows() {
        record.clear();
        record.extend(features.row(i).iter().map(|v| v.to_string()));
        record.push(labels[i].to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), actual: row.len() });
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if n == 0 || width < 2 {
        return Err(Error::Parse("dataset needs at least one row with a feature and a label".into()));
    }
    let features = DMatrix::from_fn(n, width - 1, |i, j| rows[i][j]);
    let labels = DVector::from_fn(n, |i, _| rows[i][width - 1]);
    Ok((features, labels))
}

/// Central finite-difference gradient with step `h`.
pub fn finite_difference_gradient<O: Objective + ?Sized>(obj: &O, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |j, _| {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = obj.value(&probe);
        probe[j] = orig - h;
        let down = obj.value(&probe);
        probe[j] = orig;
        (up - down) / (2.0 * h)
    })
}

/// `‖g - g_fd‖ / max(‖g_fd‖, floor)`.
pub fn gradient_check<O: Objective + ?Sized>(obj: &O, x: &DVector<f64>, h: f64) -> f64 {
    let fd = finite_difference_gradient(obj, x, h);
    let g = obj.gradient(x);
    (g - &fd).norm() / fd.norm().max(1e-8)
}
