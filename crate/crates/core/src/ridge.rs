//! Kernel ridge regression smoothers `K (K + nλI)^{-1}` and their Richardson
//! extrapolations, computed from a single eigendecomposition of `K`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{loglog_slope_window, SlopeFit};
use crate::error::{invalid, Error, Result};
use crate::extrapolation::{richardson_weights, spectral_filter, MAX_ORDER};

/// `K_ij = (1 + x_iᵀx_j)(π - arccos(x_iᵀx_j))` for unit-norm rows `x_i`.
pub fn arccos_kernel_matrix(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for (i, row) in x.row_iter().enumerate() {
        let norm = row.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(invalid(format!("row {i} has norm {norm}, expected 1")));
        }
    }
    let gram = x * x.transpose();
    let n = x.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 2.0 * std::f64::consts::PI;
        }
        let c = gram[(i, j)].clamp(-1.0, 1.0);
        (1.0 + c) * (std::f64::consts::PI - c.acos())
    }))
}

/// How [`KernelModel::extrapolated_smoother`] builds `Ĥ_λ^(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherMethod {
    /// `Σ_i α_i Ĥ_{iλ}`.
    DirectSum,
    /// `V s(Λ / nλ) Vᵀ` with the closed-form filter.
    SpectralFilter,
}

/// A kernel matrix with its eigendecomposition, responses and noise level.
#[derive(Debug, Clone)]
pub struct KernelModel {
    kernel: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    y: DVector<f64>,
    z: Option<DVector<f64>>,
    sigma2: f64,
}

impl KernelModel {
    /// Factorizes `kernel`. Eigenvalues down to `-1e-10 ‖K‖` are clamped to zero.
    pub fn new(kernel: DMatrix<f64>, y: DVector<f64>, z: Option<DVector<f64>>, sigma2: f64) -> Result<Self> {
        let n = kernel.nrows();
        if kernel.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: kernel.ncols() });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
        }
        if let Some(z) = &z {
            if z.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: z.len() });
            }
        }
        if !(sigma2 >= 0.0) {
            return Err(invalid(format!("noise variance must be non-negative, got {sigma2}")));
        }
        let scale = kernel.amax().max(f64::MIN_POSITIVE);
        if (&kernel - kernel.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("kernel matrix is not symmetric"));
        }
        let eig = SymmetricEigen::new(kernel.clone());
        let op_norm = eig.eigenvalues.amax();
        if eig.eigenvalues.min() < -1e-10 * op_norm {
            return Err(invalid(format!("kernel matrix has eigenvalue {} < 0", eig.eigenvalues.min())));
        }
        let eigenvalues = eig.eigenvalues.map(|v| v.max(0.0));
        let eigenvectors = eig.eigenvectors;
        let recon = &eigenvectors * DMatrix::from_diagonal(&eigenvalues) * eigenvectors.transpose();
        if (&recon - &kernel).amax() > 1e-8 * op_norm.max(f64::MIN_POSITIVE) * n as f64 {
            return Err(invalid("eigendecomposition failed to reconstruct the kernel"));
        }
        Ok(Self { kernel, eigenvalues, eigenvectors, y, z, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn target(&self) -> Option<&DVector<f64>> {
        self.z.as_ref()
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !(lambda > 0.0) {
            return Err(invalid(format!("ridge parameter must be positive, got {lambda}")));
        }
        Ok(())
    }

    /// Eigenvalues of `Ĥ_λ^(m)`: `s(κ_i / nλ)`.
    pub fn filter_values(&self, lambda: f64, m: usize) -> Result<DVector<f64>> {
        Self::check_lambda(lambda)?;
        let scale = self.n() as f64 * lambda;
        let values = self
            .eigenvalues
            .iter()
            .map(|&k| spectral_filter(k / scale, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(values))
    }

    fn matrix_from_filter(&self, filter: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= filter[j];
        }
        scaled * self.eigenvectors.transpose()
    }

    /// `Ĥ_λ = K (K + nλI)^{-1}`.
    pub fn smoother(&self, lambda: f64) -> Result<DMatrix<f64>> {
        Ok(self.matrix_from_filter(&self.filter_values(lambda, 0)?))
    }

    /// `Ĥ_λ^(m)`.
    pub fn extrapolated_smoother(&self, lambda: f64, m: usize, method: SmootherMethod) -> Result<DMatrix<f64>> {
        Self::check_lambda(lambda)?;
        if m > MAX_ORDER {
            return Err(Error::Unsupported(format!("order {m} exceeds {MAX_ORDER}")));
        }
        match method {
            SmootherMethod::SpectralFilter => Ok(self.matrix_from_filter(&self.filter_values(lambda, m)?)),
            SmootherMethod::DirectSum => {
                let weights = richardson_weights(m)?;
                let n = self.n();
                let mut out = DMatrix::zeros(n, n);
                for (idx, &a) in weights.coefficients().iter().enumerate() {
                    let h = self.smoother((idx + 1) as f64 * lambda)?;
                    out += h * a as f64;
                }
                Ok(out)
            }
        }
    }

    /// `((1/n) ‖(H - I) z‖², (σ²/n) tr H²)`.
    pub fn bias_variance(&self, h: &DMatrix<f64>) -> Result<(f64, f64)> {
        let z = self.z.as_ref().ok_or_else(|| invalid("bias needs the noiseless target z"))?;
        let n = self.n();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: h.nrows() });
        }
        let residual = h * z - z;
        let bias = residual.norm_squared() / n as f64;
        let trace_sq: f64 = (0..n).map(|i| h.row(i).dot(&h.column(i).transpose())).sum();
        Ok((bias, self.sigma2 * trace_sq / n as f64))
    }

    /// [`bias_variance`](Self::bias_variance) of `Ĥ_λ^(m)` from the eigenvalues alone.
    pub fn spectral_bias_variance(&self, lambda: f64, m: usize) -> Result<(f64, f64)> {
        let z = self.z.as_ref().ok_or_else(|| invalid("bias needs the noiseless target z"))?;
        let s = self.filter_values(lambda, m)?;
        let coords = self.eigenvectors.tr_mul(z);
        let n = self.n() as f64;
        let bias = s.iter().zip(coords.iter()).map(|(s, c)| (1.0 - s).powi(2) * c * c).sum::<f64>() / n;
        let variance = self.sigma2 * s.iter().map(|s| s * s).sum::<f64>() / n;
        Ok((bias, variance))
    }

    /// Fitted values `Ĥ_λ^(m) y`.
    pub fn predict(&self, lambda: f64, m: usize) -> Result<DVector<f64>> {
        let s = self.filter_values(lambda, m)?;
        let coords = self.eigenvectors.tr_mul(&self.y).component_mul(&s);
        Ok(&self.eigenvectors * coords)
    }
}

/// Polynomial decay model: `μ_i = i^{-2β}`, `ν_i = i^{-2δ}`, `i = 1..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySpec {
    pub beta: f64,
    pub delta: f64,
    pub n: usize,
}

impl DecaySpec {
    pub fn new(beta: f64, delta: f64, n: usize) -> Result<Self> {
        if !(beta > 0.5) || !(delta > 0.5) {
            return Err(invalid(format!("decay exponents must exceed 1/2, got beta={beta}, delta={delta}")));
        }
        if n == 0 {
            return Err(invalid("decay model needs n >= 1"));
        }
        Ok(Self { beta, delta, n })
    }

    /// Predicted bias exponent `min(2(m+1), (2δ-1)/(2β))`.
    pub fn predicted_bias_slope(&self, m: usize) -> f64 {
        (2.0 * (m as f64 + 1.0)).min((2.0 * self.delta - 1.0) / (2.0 * self.beta))
    }

    /// Predicted variance exponent `-1/(2β)`.
    pub fn predicted_variance_slope(&self) -> f64 {
        -1.0 / (2.0 * self.beta)
    }

    /// λ range over which both asymptotic regimes hold: well above the
    /// truncation scale `n^{-2β}` and well below the top eigenvalue.
    pub fn asymptotic_range(&self) -> (f64, f64) {
        (100.0 * (self.n as f64).powf(-2.0 * self.beta), 1e-2)
    }
}

/// Exact bias and variance of `Ĥ_λ^(m)` in the diagonal model with unit noise:
/// kernel eigenvalues `nμ_i`, target coordinates `√(nν_i)`.
pub fn decay_bias_variance(spec: &DecaySpec, m: usize, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("ridge parameter must be positive, got {lambda}")));
    }
    let mut bias = 0.0;
    let mut variance = 0.0;
    for i in 1..=spec.n {
        let mu = (i as f64).powf(-2.0 * spec.beta);
        let nu = (i as f64).powf(-2.0 * spec.delta);
        let s = spectral_filter(mu / lambda, m)?;
        bias += nu * (1.0 - s).powi(2);
        variance += s * s;
    }
    Ok((bias, variance / spec.n as f64))
}

#[derive(Debug, Clone)]
pub struct DecaySlopes {
    pub bias: SlopeFit,
    pub variance: SlopeFit,
    /// Set when part of the grid lies outside [`DecaySpec::asymptotic_range`].
    pub low_confidence: bool,
}

/// Log-log slopes of bias and variance against `λ` over `lambda_grid`.
pub fn decay_regime_slopes(spec: &DecaySpec, m: usize, lambda_grid: &[f64]) -> Result<DecaySlopes> {
    let values = lambda_grid
        .iter()
        .map(|&l| decay_bias_variance(spec, m, l))
        .collect::<Result<Vec<_>>>()?;
    let bias: Vec<f64> = values.iter().map(|v| v.0).collect();
    let variance: Vec<f64> = values.iter().map(|v| v.1).collect();
    let (lo, hi) = spec.asymptotic_range();
    let low_confidence = lambda_grid.iter().any(|&l| l < lo || l > hi);
    if low_confidence {
        log::warn!("lambda grid leaves the asymptotic range [{lo:e}, {hi:e}]");
    }
    Ok(DecaySlopes {
        bias: loglog_slope_window(lambda_grid, &bias, 0.0, f64::INFINITY)?,
        variance: loglog_slope_window(lambda_grid, &variance, 0.0, f64::INFINITY)?,
        low_confidence,
    })
}

/// Settings of the sphere-data kernel ridge experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeConfig {
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub lambda_grid: Vec<f64>,
    pub orders: Vec<usize>,
    pub noise_std: f64,
    pub seed: u64,
}

/// Mean bias, variance and their sum over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeCell {
    pub lambda: f64,
    pub order: usize,
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
}

/// Points uniform on the unit sphere in `R^d`.
pub fn sphere_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    x
}

/// One replication: sphere inputs, arccos kernel, `z = Xθ` with `θ ~ N(0, I/d)`,
/// Gaussian noise of std `noise_std`.
pub fn ridge_replication(d: usize, n: usize, noise_std: f64, seed: u64) -> Result<KernelModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sphere_points(n, d, &mut rng);
    let theta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt());
    let z = &x * theta;
    let noise = DVector::from_fn(n, |_, _| noise_std * rng.sample::<f64, _>(StandardNormal));
    let y = &z + noise;
    KernelModel::new(arccos_kernel_matrix(&x)?, y, Some(z), noise_std * noise_std)
}

/// Exact bias and variance for every `(λ, m)`, averaged over replications with
/// seeds `seed, seed + 1, …`. Rows are ordered by `m`, then `λ`.
pub fn ridge_experiment(config: &RidgeConfig) -> Result<Vec<RidgeCell>> {
    if config.replications == 0 {
        return Err(invalid("ridge experiment needs at least one replication"));
    }
    let models = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| ridge_replication(config.d, config.n, config.noise_std, config.seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for &m in &config.orders {
        for &lambda in &config.lambda_grid {
            let mut bias = 0.0;
            let mut variance = 0.0;
            for model in &models {
                let (b, v) = model.spectral_bias_variance(lambda, m)?;
                bias += b;
                variance += v;
            }
            let reps = config.replications as f64;
            let (bias, variance) = (bias / reps, variance / reps);
            cells.push(RidgeCell { lambda, order: m, bias, variance, total: bias + variance });
        }
    }
    Ok(cells)
}

/// `λ` minimizing the mean total error for order `m`, with that error.
pub fn best_lambda(cells: &[RidgeCell], m: usize) -> Option<(f64, f64)> {
    cells
        .iter()
        .filter(|c| c.order == m)
        .min_by(|a, b| a.total.total_cmp(&b.total))
        .map(|c| (c.lambda, c.total))
}
