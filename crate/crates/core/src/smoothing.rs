//! Nesterov smoothing of polyhedral functions `g(x) = max_i (Ax - b)_i`,
//! `g_λ(x) = max_{η ∈ Δ} ηᵀ(Ax - b) - λ φ(η)`, with entropic or quadratic `φ`,
//! and Richardson extrapolation of the smoothed minimizers in `λ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::extrapolation::{combine, richardson_weights};
use crate::problems::Objective;
use crate::solvers::{accelerated_gd, CheckpointSchedule};

/// Euclidean projection onto the probability simplex `{η ≥ 0, Σ η = 1}`.
pub fn simplex_projection(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(invalid("cannot project an empty vector onto the simplex"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("non-finite input to simplex projection"));
    }
    let mut out = v.clone();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(out.as_mut_slice(), &mut scratch);
    Ok(out)
}

/// Sort-based projection: find `τ` with `Σ max(v_i - τ, 0) = 1`.
fn project_simplex_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    if v.len() == 2 {
        let t = 0.5 * (v[0] - v[1]);
        let first = (0.5 + t).clamp(0.0, 1.0);
        v[0] = first;
        v[1] = 1.0 - first;
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Dual penalty `φ` on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// `Σ η_i log η_i - η_i`.
    Entropic,
    /// `½ ‖η‖²`.
    Quadratic,
}

impl Penalty {
    /// `(min φ, max φ)` over the simplex in `R^rows`.
    pub fn range(&self, rows: usize) -> (f64, f64) {
        let m = rows as f64;
        match self {
            Self::Entropic => (-m.ln() - 1.0, -1.0),
            Self::Quadratic => (0.5 / m, 0.5),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Entropic => "entropic",
            Self::Quadratic => "quadratic",
        }
    }

    /// Overwrites `v = Ax - b` with the maximizer `η_λ` and returns the smoothed value.
    fn maximize_in_place(&self, v: &mut [f64], lambda: f64, scratch: &mut Vec<f64>) -> f64 {
        match self {
            Self::Entropic => {
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in v.iter_mut() {
                    *x = ((*x - max) / lambda).exp();
                    total += *x;
                }
                for x in v.iter_mut() {
                    *x /= total;
                }
                max + lambda * total.ln() + lambda
            }
            Self::Quadratic => {
                scratch.clear();
                scratch.extend(v.iter().copied());
                let raw: Vec<f64> = scratch.clone();
                for x in v.iter_mut() {
                    *x /= lambda;
                }
                let mut sort_buf = Vec::new();
                project_simplex_in_place(v, &mut sort_buf);
                let linear: f64 = v.iter().zip(raw.iter()).map(|(e, r)| e * r).sum();
                let sq: f64 = v.iter().map(|e| e * e).sum();
                linear - 0.5 * lambda * sq
            }
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropic" => Ok(Self::Entropic),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(invalid(format!("unknown penalty {other:?}"))),
        }
    }
}

/// `g(x) = max_i (Ax - b)_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralFunction {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl PolyhedralFunction {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), actual: b.len() });
        }
        if a.nrows() == 0 {
            return Err(invalid("polyhedral function needs at least one row"));
        }
        Ok(Self { a, b })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).max()
    }

    /// `(g_λ(x), ∇g_λ(x), η_λ(x))`.
    pub fn smoothed(&self, x: &DVector<f64>, lambda: f64, penalty: Penalty) -> (f64, DVector<f64>, DVector<f64>) {
        let mut eta = &self.a * x - &self.b;
        let value = penalty.maximize_in_place(eta.as_mut_slice(), lambda, &mut Vec::new());
        let grad = self.a.tr_mul(&eta);
        (value, grad, eta)
    }

    /// Smoothness constant of `g_λ`: `max_i ‖a_i‖² / λ` (entropic) or `‖A‖²_op / λ` (quadratic).
    pub fn smoothness(&self, lambda: f64, penalty: Penalty) -> f64 {
        let c = match penalty {
            Penalty::Entropic => self.a.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max),
            Penalty::Quadratic => crate::problems::gram_spectral_norm(&self.a),
        };
        c / lambda
    }
}

/// A polyhedral block acting on a subset of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub coords: Vec<usize>,
    pub function: PolyhedralFunction,
}

/// A sum of polyhedral blocks, each smoothed independently.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparablePolyhedral {
    dim: usize,
    blocks: Vec<Block>,
    disjoint: bool,
}

impl SeparablePolyhedral {
    pub fn new(dim: usize, blocks: Vec<Block>) -> Result<Self> {
        let mut seen = vec![false; dim];
        let mut disjoint = true;
        for block in &blocks {
            if block.coords.len() != block.function.dim() {
                return Err(Error::DimensionMismatch { expected: block.coords.len(), actual: block.function.dim() });
            }
            for &c in &block.coords {
                if c >= dim {
                    return Err(invalid(format!("block coordinate {c} out of range for dimension {dim}")));
                }
                disjoint &= !seen[c];
                seen[c] = true;
            }
        }
        Ok(Self { dim, blocks, disjoint })
    }

    /// A single block over all coordinates.
    pub fn single(function: PolyhedralFunction) -> Self {
        let dim = function.dim();
        Self { dim, blocks: vec![Block { coords: (0..dim).collect(), function }], disjoint: true }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    fn local(&self, block: &Block, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(block.coords.len(), block.coords.iter().map(|&c| x[c]))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.blocks.iter().map(|b| b.function.value(&self.local(b, x))).sum()
    }

    /// `(Σ g_λ, ∇ Σ g_λ)`.
    pub fn smoothed_value_grad(&self, x: &DVector<f64>, lambda: f64, penalty: Penalty) -> (f64, DVector<f64>) {
        let mut grad = DVector::zeros(self.dim);
        let mut total = 0.0;
        let mut v = Vec::new();
        let mut scratch = Vec::new();
        for block in &self.blocks {
            let a = &block.function.a;
            v.clear();
            v.extend((0..a.nrows()).map(|i| {
                let mut s = -block.function.b[i];
                for (col, &c) in block.coords.iter().enumerate() {
                    s += a[(i, col)] * x[c];
                }
                s
            }));
            total += penalty.maximize_in_place(&mut v, lambda, &mut scratch);
            for (col, &c) in block.coords.iter().enumerate() {
                let mut s = 0.0;
                for (i, eta) in v.iter().enumerate() {
                    s += a[(i, col)] * eta;
                }
                grad[c] += s;
            }
        }
        (total, grad)
    }

    /// Hessian of `Σ g_λ`: `Aᵀ M A` per block with `M = (diag η - ηηᵀ)/λ` (entropic)
    /// or the projector onto the active face of the simplex divided by `λ` (quadratic).
    pub fn smoothed_hessian(&self, x: &DVector<f64>, lambda: f64, penalty: Penalty) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for block in &self.blocks {
            let f = &block.function;
            let (_, _, eta) = f.smoothed(&self.local(block, x), lambda, penalty);
            let rows = f.rows();
            let curvature = match penalty {
                Penalty::Entropic => DMatrix::from_diagonal(&eta) - &eta * eta.transpose(),
                Penalty::Quadratic => {
                    let active: Vec<bool> = eta.iter().map(|&e| e > 0.0).collect();
                    let size = active.iter().filter(|&&a| a).count() as f64;
                    DMatrix::from_fn(rows, rows, |i, j| {
                        if active[i] && active[j] {
                            f64::from(u8::from(i == j)) - 1.0 / size
                        } else {
                            0.0
                        }
                    })
                }
            } / lambda;
            let local = f.a.transpose() * curvature * &f.a;
            for (p, &cp) in block.coords.iter().enumerate() {
                for (q, &cq) in block.coords.iter().enumerate() {
                    out[(cp, cq)] += local[(p, q)];
                }
            }
        }
        out
    }

    /// Maximizers `η_λ(x)`, one per block.
    pub fn dual_variables(&self, x: &DVector<f64>, lambda: f64, penalty: Penalty) -> Vec<DVector<f64>> {
        self.blocks
            .iter()
            .map(|b| b.function.smoothed(&self.local(b, x), lambda, penalty).2)
            .collect()
    }

    /// Smoothness of `Σ g_λ`: the largest block constant for disjoint blocks, their sum otherwise.
    pub fn smoothness(&self, lambda: f64, penalty: Penalty) -> f64 {
        let per_block = self.blocks.iter().map(|b| b.function.smoothness(lambda, penalty));
        if self.disjoint {
            per_block.fold(0.0, f64::max)
        } else {
            per_block.sum()
        }
    }

    /// Bounds `(lo, hi)` with `lo ≤ g(x) - Σ g_λ(x) ≤ hi` for every `x`.
    pub fn approximation_bounds(&self, lambda: f64, penalty: Penalty) -> (f64, f64) {
        self.blocks.iter().fold((0.0, 0.0), |(lo, hi), b| {
            let (pmin, pmax) = penalty.range(b.function.rows());
            (lo + lambda * pmin, hi + lambda * pmax)
        })
    }

    /// Weight of an ℓ1 norm built by [`l1_as_polyhedral`], if this is one.
    pub fn l1_weight(&self) -> Option<f64> {
        if self.blocks.len() != self.dim || !self.disjoint {
            return None;
        }
        let w = self.blocks.first()?.function.a[(0, 0)];
        self.blocks
            .iter()
            .all(|b| {
                let f = &b.function;
                f.rows() == 2 && f.dim() == 1 && f.a[(0, 0)] == w && f.a[(1, 0)] == -w && f.b.iter().all(|&v| v == 0.0)
            })
            .then_some(w)
    }
}

/// `w ‖x‖₁` as `d` two-row blocks `max(w x_j, -w x_j)`.
pub fn l1_as_polyhedral(d: usize, weight: f64) -> Result<SeparablePolyhedral> {
    if !(weight > 0.0) {
        return Err(invalid(format!("l1 weight must be positive, got {weight}")));
    }
    let blocks = (0..d)
        .map(|j| Block {
            coords: vec![j],
            function: PolyhedralFunction {
                a: DMatrix::from_column_slice(2, 1, &[weight, -weight]),
                b: DVector::zeros(2),
            },
        })
        .collect();
    SeparablePolyhedral::new(d, blocks)
}

/// `h + g_λ`.
#[derive(Debug, Clone)]
pub struct SmoothedObjective<H> {
    pub h: H,
    pub g: SeparablePolyhedral,
    pub lambda: f64,
    pub penalty: Penalty,
}

impl<H: Objective> SmoothedObjective<H> {
    pub fn new(h: H, g: SeparablePolyhedral, lambda: f64, penalty: Penalty) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid(format!("smoothing parameter must be positive, got {lambda}")));
        }
        if h.dim() != g.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), actual: g.dim() });
        }
        Ok(Self { h, g, lambda, penalty })
    }
}

impl<H: Objective> Objective for SmoothedObjective<H> {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_and_gradient(x).0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (hv, hg) = self.h.value_and_gradient(x);
        let (gv, gg) = self.g.smoothed_value_grad(x, self.lambda, self.penalty);
        (hv + gv, hg + gg)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.h.smoothness()? + self.g.smoothness(self.lambda, self.penalty))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h.hessian(x)? + self.g.smoothed_hessian(x, self.lambda, self.penalty))
    }
}

/// `(h + g_λ)(x)` together with its gradient.
pub fn smoothed_value_grad<H: Objective>(s: &SmoothedObjective<H>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    s.value_and_gradient(x)
}

/// The non-smooth objective `h(x) + g(x)`.
pub fn composite_value<H: Objective + ?Sized>(h: &H, g: &SeparablePolyhedral, x: &DVector<f64>) -> f64 {
    h.value(x) + g.value(x)
}

/// Minimizer of `h + g_λ`.
#[derive(Debug, Clone)]
pub struct SmoothedSolution {
    pub lambda: f64,
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Runs Nesterov's method with `L = L_h + L(g_λ)` from the origin on `h + g_λ`.
///
/// Uses gradient-restarted momentum, which keeps the `O(1/k²)` guarantee and
/// converges linearly once the iterates reach the locally strongly convex
/// region, so `x_λ` is resolved to near machine precision.
pub fn solve_smoothed<H: Objective + Clone>(
    h: &H,
    g: &SeparablePolyhedral,
    lambda: f64,
    penalty: Penalty,
    iterations: usize,
) -> Result<SmoothedSolution> {
    let obj = SmoothedObjective::new(h.clone(), g.clone(), lambda, penalty)?;
    let smoothness = obj
        .smoothness()
        .ok_or_else(|| invalid("smooth part must report a smoothness constant"))?;
    let x0 = DVector::zeros(obj.dim());
    let (x, used) = crate::solvers::restarted_minimize(&obj, &x0, smoothness, iterations, 0.0)?;
    Ok(SmoothedSolution { lambda, x, iterations: used })
}

/// Minimizers of `h + g_λ` along decreasing `λ`, each warm-started from the
/// previous one. Restarted Nesterov iterations are followed by Newton steps
/// when `h` exposes its Hessian, so the bias is not masked by optimization
/// error at small `λ`.
fn smoothing_path<H: Objective + Clone>(
    h: &H,
    g: &SeparablePolyhedral,
    penalty: Penalty,
    scales: &[f64],
    iterations: usize,
) -> Result<Vec<DVector<f64>>> {
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&a, &b| scales[b].total_cmp(&scales[a]));
    let mut out = vec![DVector::zeros(h.dim()); scales.len()];
    let mut warm = DVector::zeros(h.dim());
    for idx in order {
        let obj = SmoothedObjective::new(h.clone(), g.clone(), scales[idx], penalty)?;
        let smoothness = obj
            .smoothness()
            .ok_or_else(|| invalid("smooth part must report a smoothness constant"))?;
        let (mut x, _) = crate::solvers::restarted_minimize(&obj, &warm, smoothness, iterations, 0.0)?;
        if obj.hessian(&x).is_some() {
            x = crate::analysis::newton_minimize(&obj, &x, crate::analysis::NEWTON_MAX_STEPS, 0.0)?.0;
        }
        warm = x.clone();
        out[idx] = x;
    }
    Ok(out)
}

/// `x_λ^(m) = Σ α_i x_{iλ}`.
#[derive(Debug, Clone)]
pub struct MultiStepSolution {
    pub lambda: f64,
    pub order: usize,
    pub x: DVector<f64>,
    pub estimates: Vec<DVector<f64>>,
    /// Total iterations over the `m + 1` solves.
    pub cost: usize,
}

/// Largest order accepted by [`multi_step_smoothed`].
pub const MAX_SMOOTHING_ORDER: usize = 6;

pub fn multi_step_smoothed<H: Objective + Clone>(
    h: &H,
    g: &SeparablePolyhedral,
    lambda: f64,
    penalty: Penalty,
    m: usize,
    iterations: usize,
) -> Result<MultiStepSolution> {
    if m > MAX_SMOOTHING_ORDER {
        return Err(Error::Unsupported(format!(
            "smoothing extrapolation order {m} exceeds {MAX_SMOOTHING_ORDER}"
        )));
    }
    let weights = richardson_weights(m)?;
    let solutions = (1..=m + 1)
        .into_par_iter()
        .map(|i| solve_smoothed(h, g, i as f64 * lambda, penalty, iterations))
        .collect::<Result<Vec<_>>>()?;
    let cost = solutions.iter().map(|s| s.iterations).sum();
    let estimates: Vec<_> = solutions.into_iter().map(|s| s.x).collect();
    let x = combine(&weights, &estimates)?;
    Ok(MultiStepSolution { lambda, order: m, x, estimates, cost })
}

/// `f(x_λ^(m)) - f_*` for every `(λ, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPoint {
    pub lambda: f64,
    pub order: usize,
    pub gap: f64,
}

/// Bias of the extrapolated smoothed minimizers over a `λ` grid.
///
/// Each distinct scale `iλ` is solved once and shared between orders.
pub fn bias_curve<H: Objective + Clone>(
    h: &H,
    g: &SeparablePolyhedral,
    penalty: Penalty,
    lambda_grid: &[f64],
    orders: &[usize],
    iterations: usize,
    f_star: f64,
) -> Result<Vec<BiasPoint>> {
    let max_order = orders.iter().copied().max().unwrap_or(0);
    if max_order > MAX_SMOOTHING_ORDER {
        return Err(Error::Unsupported(format!("order {max_order} exceeds {MAX_SMOOTHING_ORDER}")));
    }
    let scales = ScaleTable::new(lambda_grid, max_order)?;
    let solved = smoothing_path(h, g, penalty, &scales.values, iterations)?;
    let mut out = Vec::new();
    for &m in orders {
        let weights = richardson_weights(m)?;
        for (li, &lambda) in lambda_grid.iter().enumerate() {
            let est: Vec<_> = (1..=m + 1).map(|i| solved[scales.index(li, i)].clone()).collect();
            let x = combine(&weights, &est)?;
            out.push(BiasPoint { lambda, order: m, gap: composite_value(h, g, &x) - f_star });
        }
    }
    Ok(out)
}

/// Distinct scales `iλ` for every grid point and `i = 1..=max_order+1`.
struct ScaleTable {
    values: Vec<f64>,
    lookup: Vec<Vec<usize>>,
}

impl ScaleTable {
    fn new(lambda_grid: &[f64], max_order: usize) -> Result<Self> {
        if lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(invalid("lambda grid must be positive"));
        }
        let key = |v: f64| (v.ln() * 1e9).round() as i64;
        let mut keys: Vec<(i64, f64)> = Vec::new();
        for &l in lambda_grid {
            for i in 1..=max_order + 1 {
                let s = l * i as f64;
                keys.push((key(s), s));
            }
        }
        keys.sort_by_key(|k| k.0);
        keys.dedup_by_key(|k| k.0);
        let values: Vec<f64> = keys.iter().map(|k| k.1).collect();
        let lookup = lambda_grid
            .iter()
            .map(|&l| {
                (1..=max_order + 1)
                    .map(|i| keys.binary_search_by_key(&key(l * i as f64), |k| k.0).expect("present"))
                    .collect()
            })
            .collect();
        Ok(Self { values, lookup })
    }

    fn index(&self, grid_index: usize, i: usize) -> usize {
        self.lookup[grid_index][i - 1]
    }
}

/// Best gap over `λ` at a given total iteration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub cost: usize,
    pub best_gap: f64,
    pub best_lambda: f64,
    pub order: usize,
}

/// For every iteration count `k` on `schedule`, the minimum over the `λ` grid
/// of `f(Σ α_i x_{iλ,k}) - f_*`, where `x_{s,k}` is the `k`-th plain Nesterov
/// iterate on `h + g_s` from the origin. The budget of a point is `(m+1) k`.
pub fn oracle_curve<H: Objective + Clone>(
    h: &H,
    g: &SeparablePolyhedral,
    penalty: Penalty,
    lambda_grid: &[f64],
    orders: &[usize],
    max_iterations: usize,
    schedule: &CheckpointSchedule,
    f_star: f64,
) -> Result<Vec<OracleRow>> {
    let max_order = orders.iter().copied().max().unwrap_or(0);
    if max_order > MAX_SMOOTHING_ORDER {
        return Err(Error::Unsupported(format!("order {max_order} exceeds {MAX_SMOOTHING_ORDER}")));
    }
    let scales = ScaleTable::new(lambda_grid, max_order)?;
    let ks = schedule.points(max_iterations);
    let traces = scales
        .values
        .par_iter()
        .map(|&s| {
            let obj = SmoothedObjective::new(h.clone(), g.clone(), s, penalty)?;
            let l = obj.smoothness().ok_or_else(|| invalid("smooth part must report a smoothness constant"))?;
            let trace = accelerated_gd(&obj, &DVector::zeros(obj.dim()), l, max_iterations, schedule)?;
            Ok(ks.iter().map(|&k| trace.get(k).expect("checkpoint").iterate.clone()).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &m in orders {
        let weights = richardson_weights(m)?;
        let per_k: Vec<OracleRow> = (0..ks.len())
            .into_par_iter()
            .map(|ki| {
                let mut best = (f64::INFINITY, f64::NAN);
                for (li, &lambda) in lambda_grid.iter().enumerate() {
                    let est: Vec<_> = (1..=m + 1).map(|i| traces[scales.index(li, i)][ki].clone()).collect();
                    let x = combine(&weights, &est).expect("matching dimensions");
                    let gap = composite_value(h, g, &x) - f_star;
                    if gap < best.0 {
                        best = (gap, lambda);
                    }
                }
                OracleRow { cost: (m + 1) * ks[ki], best_gap: best.0, best_lambda: best.1, order: m }
            })
            .collect();
        rows.extend(per_k);
    }
    Ok(rows)
}

/// `2^{i/5}` for `i` from `5·lo_exp` to `5·hi_exp`.
pub fn dyadic_grid(lo_exp: i32, hi_exp: i32, per_octave: u32) -> Vec<f64> {
    let p = per_octave as i32;
    (lo_exp * p..=hi_exp * p).map(|i| 2f64.powf(i as f64 / p as f64)).collect()
}
