//! Log-log slope fits and reference optima used as gap baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::problems::{LeastSquaresProblem, LinearMinimizationOracle, Objective};
use crate::solvers::{projected_restarted_minimize, restarted_minimize};

/// Gaps below this value are treated as numerical zero and left out of fits.
pub const GAP_FLOOR: f64 = 1e-15;

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(x_min, x_max)` of the fitting window.
    pub window: (f64, f64),
    pub residual_rms: f64,
    pub n_points: usize,
    /// Points inside the window dropped for lying at or below [`GAP_FLOOR`].
    pub floored: usize,
}

impl std::fmt::Display for SlopeFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "slope={:.4} intercept={:.4} window=[{:e}, {:e}] residual_rms={:.3e} points={} floored={}",
            self.slope, self.intercept, self.window.0, self.window.1, self.residual_rms, self.n_points, self.floored
        )
    }
}

/// Fit over the last `window_fraction` of the `log x` range.
pub fn loglog_slope(xs: &[f64], ys: &[f64], window_fraction: f64) -> Result<SlopeFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(invalid(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    check_abscissae(xs, ys)?;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min).ln();
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
    let cut = (hi - window_fraction * (hi - lo)).exp();
    // guard the boundary point against rounding in exp(ln(x))
    loglog_slope_window(xs, ys, cut * (1.0 - 1e-12), f64::INFINITY)
}

/// Fit over the points with `x_lo ≤ x ≤ x_hi`.
pub fn loglog_slope_window(xs: &[f64], ys: &[f64], x_lo: f64, x_hi: f64) -> Result<SlopeFit> {
    check_abscissae(xs, ys)?;
    let mut points = Vec::new();
    let mut floored = 0;
    let mut window = (f64::INFINITY, f64::NEG_INFINITY);
    for (&x, &y) in xs.iter().zip(ys) {
        if x < x_lo || x > x_hi {
            continue;
        }
        if !(y > GAP_FLOOR) {
            floored += 1;
            continue;
        }
        points.push((x.ln(), y.ln()));
        window.0 = window.0.min(x);
        window.1 = window.1.max(x);
    }
    if points.len() < 4 {
        return Err(invalid(format!(
            "slope fit needs at least 4 points in the window, got {} ({floored} floored)",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs at least two distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SlopeFit { slope, intercept, window, residual_rms, n_points: points.len(), floored })
}

/// Widest window starting at the smallest `x` whose fit has
/// `residual_rms ≤ rms_tol`, for curves that follow a power law as `x → 0`.
///
/// Points with `y ≤ floor` are treated as numerical zero and dropped first.
pub fn loglog_slope_auto(xs: &[f64], ys: &[f64], floor: f64, rms_tol: f64) -> Result<SlopeFit> {
    check_abscissae(xs, ys)?;
    let mut kept: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|p| *p.1 > floor).map(|(&x, &y)| (x, y)).collect();
    let dropped = xs.len() - kept.len();
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (kx, ky): (Vec<f64>, Vec<f64>) = kept.iter().copied().unzip();
    let mut best = None;
    for end in (3..kx.len()).rev() {
        let fit = loglog_slope_window(&kx, &ky, kx[0], kx[end])?;
        if fit.residual_rms <= rms_tol {
            best = Some(fit);
            break;
        }
    }
    let mut fit = best.ok_or_else(|| invalid(format!("no window of at least 4 points has residual rms ≤ {rms_tol}")))?;
    fit.floored = dropped;
    Ok(fit)
}

fn check_abscissae(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), actual: ys.len() });
    }
    if xs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(invalid("log-log fit needs positive finite abscissae"));
    }
    Ok(())
}

/// A reference minimizer with its optimality certificate.
#[derive(Debug, Clone)]
pub struct Reference {
    pub f_star: f64,
    pub x_star: DVector<f64>,
    /// Gradient norm, Frank-Wolfe duality gap, or KKT residual, depending on the problem class.
    pub certificate: f64,
    pub certified: bool,
    pub iterations: usize,
}

/// Certification threshold for reference optima.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Unconstrained smooth problem, certified by the gradient norm.
///
/// Uses damped Newton steps when the objective exposes its Hessian and
/// restarted Nesterov iterations otherwise, stopping once `‖∇f‖_∞ ≤ 1e-13`
/// or after `budget` iterations.
pub fn reference_smooth<O: Objective + ?Sized>(obj: &O, x0: &DVector<f64>, budget: usize) -> Result<Reference> {
    let (x, iterations) = if obj.hessian(x0).is_some() {
        newton_minimize(obj, x0, budget.min(NEWTON_MAX_STEPS), 1e-13)?
    } else {
        let l = obj.smoothness().ok_or_else(|| invalid("reference solve needs a smoothness constant"))?;
        restarted_minimize(obj, x0, l, budget, 1e-13)?
    };
    let (f_star, g) = obj.value_and_gradient(&x);
    let certificate = g.amax();
    if certificate > CERTIFICATE_TOL {
        log::warn!("reference gradient norm {certificate:e} above {CERTIFICATE_TOL:e}");
    }
    Ok(Reference { f_star, x_star: x, certificate, certified: certificate <= CERTIFICATE_TOL, iterations })
}

pub(crate) const NEWTON_MAX_STEPS: usize = 200;

/// Newton's method with backtracking on the function value. Stops at the
/// gradient tolerance, after `budget` steps, or when no step decreases `f`.
pub(crate) fn newton_minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    budget: usize,
    grad_tol: f64,
) -> Result<(DVector<f64>, usize)> {
    let mut x = x0.clone();
    let (mut fx, mut g) = obj.value_and_gradient(&x);
    for k in 1..=budget {
        if g.amax() <= grad_tol {
            return Ok((x, k - 1));
        }
        let h = obj.hessian(&x).ok_or_else(|| invalid("Newton step needs the Hessian"))?;
        let direction = match h.clone().cholesky() {
            Some(c) => -c.solve(&g),
            None => {
                // tiny ridge for numerically singular Hessians
                let shift = 1e-12 * h.diagonal().amax().max(f64::MIN_POSITIVE);
                let shifted = h + DMatrix::identity(x.len(), x.len()) * shift;
                let c = shifted.cholesky().ok_or_else(|| invalid("Hessian is not positive semidefinite"))?;
                -c.solve(&g)
            }
        };
        let slope = g.dot(&direction);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let candidate = &x + &direction * t;
            let (fc, gc) = obj.value_and_gradient(&candidate);
            let decreased = fc < fx + 1e-4 * t * slope;
            // near the optimum f stalls at roundoff level, so accept steps that shrink the gradient
            let flat = fc <= fx + 8.0 * f64::EPSILON * fx.abs().max(1.0);
            if decreased || (flat && gc.amax() < 0.5 * g.amax()) {
                accepted = Some((candidate, fc, gc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fn_, gn)) => {
                x = xn;
                fx = fn_;
                g = gn;
            }
            None => return Ok((x, k)),
        }
    }
    Ok((x, budget))
}

/// Constrained smooth problem: restarted accelerated projected gradient,
/// certified by the Frank-Wolfe duality gap.
pub fn reference_constrained<O: Objective + ?Sized>(
    obj: &O,
    oracle: &LinearMinimizationOracle,
    x0: &DVector<f64>,
    budget: usize,
) -> Result<Reference> {
    let l = obj.smoothness().ok_or_else(|| invalid("reference solve needs a smoothness constant"))?;
    let (mut x, iterations) = projected_restarted_minimize(obj, Some(oracle), x0, l, budget, 1e-15)?;
    if *oracle == LinearMinimizationOracle::BoxLinf {
        x = polish_box(obj, oracle, x)?;
    }
    let (f_star, g) = obj.value_and_gradient(&x);
    let certificate = oracle.duality_gap(&x, &g)?.max(0.0);
    if certificate > CERTIFICATE_TOL {
        log::warn!("reference duality gap {certificate:e} above {CERTIFICATE_TOL:e}");
    }
    Ok(Reference { f_star, x_star: x, certificate, certified: certificate <= CERTIFICATE_TOL, iterations })
}

/// Active-set Newton refinement on the unit box: coordinates at a bound with
/// an outward-pointing negative gradient are fixed, the rest take a
/// pseudo-inverse Newton step. Kept only while the duality gap decreases.
fn polish_box<O: Objective + ?Sized>(
    obj: &O,
    oracle: &LinearMinimizationOracle,
    mut x: DVector<f64>,
) -> Result<DVector<f64>> {
    let gap = |x: &DVector<f64>| -> Result<f64> { oracle.duality_gap(x, &obj.gradient(x)) };
    let mut best = gap(&x)?;
    for _ in 0..POLISH_ROUNDS {
        let Some(h) = obj.hessian(&x) else { break };
        let g = obj.gradient(&x);
        let fixed: Vec<bool> = (0..x.len()).map(|i| x[i].abs() >= 1.0 - 1e-9 && g[i] * x[i] < 0.0).collect();
        let free: Vec<usize> = (0..x.len()).filter(|&i| !fixed[i]).collect();
        let mut candidate = x.clone();
        for i in 0..x.len() {
            if fixed[i] {
                candidate[i] = x[i].signum();
            }
        }
        if !free.is_empty() {
            let g = obj.gradient(&candidate);
            let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let g_f = DVector::from_fn(free.len(), |a, _| g[free[a]]);
            let step = h_ff.svd(true, true).solve(&g_f, 1e-12 * h.amax()).map_err(invalid)?;
            for (a, &i) in free.iter().enumerate() {
                candidate[i] = (candidate[i] - step[a]).clamp(-1.0, 1.0);
            }
        }
        let candidate_gap = gap(&candidate)?;
        if !(candidate_gap < best) {
            break;
        }
        best = candidate_gap;
        x = candidate;
    }
    Ok(x)
}

const POLISH_ROUNDS: usize = 10;

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Largest violation of the optimality conditions of `h(x) + w ‖x‖₁`.
pub fn lasso_kkt_residual(h: &LeastSquaresProblem, weight: f64, x: &DVector<f64>) -> f64 {
    let g = h.gradient(x);
    g.iter()
        .zip(x.iter())
        .map(|(&gj, &xj)| if xj != 0.0 { (gj + weight * xj.signum()).abs() } else { (gj.abs() - weight).max(0.0) })
        .fold(0.0, f64::max)
}

/// `h(x) + w ‖x‖₁` with least-squares `h`: restarted accelerated proximal
/// gradient, then an exact solve of the optimality system on the detected
/// support and signs, kept only if it satisfies all optimality conditions.
/// Certified by the KKT residual.
pub fn reference_lasso(h: &LeastSquaresProblem, weight: f64, budget: usize) -> Result<Reference> {
    if !(weight > 0.0) {
        return Err(invalid(format!("l1 weight must be positive, got {weight}")));
    }
    let l = h.smoothness().expect("least squares reports its smoothness");
    let d = h.dim();
    let mut x_prev = DVector::zeros(d);
    let mut y = x_prev.clone();
    let mut j = 1usize;
    let mut iterations = budget;
    for k in 1..=budget {
        let g = h.gradient(&y);
        let x = DVector::from_fn(d, |i, _| soft_threshold(y[i] - g[i] / l, weight / l));
        let mapping = (&y - &x).amax() * l;
        let dx = &x - &x_prev;
        if (&y - &x).dot(&dx) < 0.0 {
            j = 1;
        }
        let beta = (j as f64 - 1.0) / (j as f64 + 2.0);
        y = &x + dx * beta;
        j += 1;
        x_prev = x;
        if mapping <= 1e-14 {
            iterations = k;
            break;
        }
    }
    let mut x = x_prev;
    if let Some(polished) = polish_lasso(h, weight, &x) {
        if lasso_kkt_residual(h, weight, &polished) <= lasso_kkt_residual(h, weight, &x) {
            x = polished;
        }
    }
    let f_star = h.value(&x) + weight * x.lp_norm(1);
    let certificate = lasso_kkt_residual(h, weight, &x);
    Ok(Reference { f_star, x_star: x, certificate, certified: certificate <= CERTIFICATE_TOL, iterations })
}

fn polish_lasso(h: &LeastSquaresProblem, weight: f64, x: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let a = h.features();
    let n = a.nrows() as f64;
    let a_s = a.select_columns(&support);
    let gram = a_s.tr_mul(&a_s) / n;
    let rhs = DVector::from_fn(support.len(), |i, _| {
        a_s.column(i).dot(h.response()) / n - weight * x[support[i]].signum()
    });
    let sol = gram.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(x.len());
    for (i, &j) in support.iter().enumerate() {
        if sol[i].signum() != x[j].signum() {
            return None;
        }
        out[j] = sol[i];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use nalgebra::DMatrix;

    #[test]
    fn exact_power_laws() {
        let ks: Vec<f64> = (1..=64).map(|k| k as f64).collect();
        let inv: Vec<f64> = ks.iter().map(|k| 3.0 / k).collect();
        let inv2: Vec<f64> = ks.iter().map(|k| 0.5 / (k * k)).collect();
        assert!((loglog_slope(&ks, &inv, 0.5).unwrap().slope + 1.0).abs() < 1e-9);
        let fit = loglog_slope(&ks, &inv2, 0.5).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-9);
        assert_eq!(fit.window, (8.0, 64.0));
    }

    #[test]
    fn perturbed_power_law() {
        let ks: Vec<f64> = (1..=4096).map(|k| k as f64).collect();
        let ys: Vec<f64> = ks.iter().map(|k| (1.0 + 0.1 * k.sin()) / (k * k)).collect();
        assert!((loglog_slope(&ks, &ys, 0.5).unwrap().slope + 2.0).abs() < 0.1);
    }

    #[test]
    fn floored_points_are_flagged_and_skipped() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let ys = [1.0, 0.5, 0.25, 0.125, 0.0, -1.0];
        let fit = loglog_slope(&xs, &ys, 1.0).unwrap();
        assert_eq!(fit.floored, 2);
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&xs[..3], &ys[..3], 1.0).is_err());
        assert!(loglog_slope(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4], 1.0).is_err());
    }

    #[test]
    fn automatic_window_stops_at_the_kink() {
        // λ² below 1e-2, then flat: the fit must stay on the power-law part
        let xs: Vec<f64> = (0..40).map(|i| 1e-4 * 2f64.powf(i as f64 / 4.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 1e-2 { x * x } else { 1e-4 }).collect();
        let fit = loglog_slope_auto(&xs, &ys, 0.0, 0.05).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.05, "{fit}");
        assert!(fit.residual_rms <= 0.05);
        // at most one flat point fits inside the tolerance
        assert!(fit.window.1 < 1e-2 * 2f64.powf(0.5), "{fit}");
        // points at or below the floor are dropped and counted
        let mut noisy = ys.clone();
        noisy[0] = 1e-20;
        let fit = loglog_slope_auto(&xs, &noisy, 1e-16, 0.05).unwrap();
        assert_eq!(fit.floored, 1);
        assert!(loglog_slope_auto(&xs[..3], &ys[..3], 0.0, 0.05).is_err());
    }

    #[test]
    fn box_polish_reaches_the_boundary_optimum() {
        // minimizer (0.3, 2, -5) clipped to (0.3, 1, -1)
        let q = QuadraticProblem::new(
            DVector::from_vec(vec![1.0, 0.5, 2.0]),
            DVector::from_vec(vec![0.3, 2.0, -5.0]),
        )
        .unwrap();
        let oracle = LinearMinimizationOracle::BoxLinf;
        let x = polish_box(&q, &oracle, DVector::from_vec(vec![0.2, 0.9, -0.8])).unwrap();
        assert!((x - DVector::from_vec(vec![0.3, 1.0, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn reference_on_quadratic() {
        let q = QuadraticProblem::new(DVector::from_vec(vec![2.0]), DVector::from_vec(vec![0.3])).unwrap();
        let r = reference_smooth(&q, &DVector::zeros(1), 1000).unwrap();
        assert!((r.x_star[0] - 0.3).abs() < 1e-12 && r.f_star.abs() < 1e-20 && r.certified);
        let r = reference_constrained(&q, &LinearMinimizationOracle::BoxLinf, &DVector::zeros(1), 1000).unwrap();
        assert!((r.x_star[0] - 0.3).abs() < 1e-12 && r.certified);
    }

    #[test]
    fn lasso_reference_matches_orthogonal_design() {
        // with AᵀA = n I the solution is soft-thresholding of Aᵀb / n
        let n = 4;
        let a = DMatrix::<f64>::identity(n, n) * 2.0;
        let b = DVector::from_vec(vec![1.0, -0.2, 0.05, -3.0]);
        let h = LeastSquaresProblem::new(a, b.clone()).unwrap();
        let w = 0.15;
        let r = reference_lasso(&h, w, 10_000).unwrap();
        // (1/2n)‖2x - b‖² gives gradient (4x - 2b)/n = x - b/2
        for j in 0..n {
            let expected = soft_threshold(b[j] / 2.0, w);
            assert!((r.x_star[j] - expected).abs() < 1e-13, "{j}: {} vs {expected}", r.x_star[j]);
        }
        assert!(r.certified);
    }
}
