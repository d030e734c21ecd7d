//! Richardson extrapolation weights and combination rules.
//!
//! An estimate `x_t` with expansion `x_* + t Δ_1 + t² Δ_2 + …` around `t = 0`
//! is evaluated at the scales `t, 2t, …, (m+1)t`; the order-`m` weights cancel
//! the first `m` terms while keeping the limit. The iteration-count variant
//! (`2 x_k - x_{k/2}`) is the `m = 1` case with the scale inverted.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};

/// Largest order whose binomial weights (and constraint residues) are
/// computed exactly in 64/128-bit integers.
pub const MAX_ORDER: usize = 20;

/// How estimates passed to [`combine`] are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleConvention {
    /// Estimates at λ, 2λ, …, (m+1)λ, in that order.
    RegularizationScales,
    /// Estimates at iteration `k` and `k/2`, in that order. Only `m = 1`.
    IterationHalving,
}

/// Order-`m` extrapolation weights `α_i = (-1)^{i-1} C(m+1, i)`, `i = 1..=m+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RichardsonWeights {
    order: usize,
    coefficients: Vec<i64>,
}

impl RichardsonWeights {
    pub fn new(order: usize) -> Result<Self> {
        richardson_weights(order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Integer weights `α_1..α_{m+1}`.
    pub fn coefficients(&self) -> &[i64] {
        &self.coefficients
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coefficients.iter().map(|&a| a as f64).collect()
    }

    /// Sum of absolute weights, the worst-case amplification of per-estimate errors.
    pub fn l1_norm(&self) -> i64 {
        self.coefficients.iter().map(|a| a.abs()).sum()
    }

    /// Exact residues of the defining constraints: entry `j` is
    /// `Σ_i α_i i^j - [j == 0]` for `j = 0..=m`. All zero for valid weights.
    pub fn constraint_residuals(&self) -> Vec<i128> {
        (0..=self.order as u32)
            .map(|j| {
                let moment: i128 = self
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(idx, &a)| a as i128 * ((idx + 1) as i128).pow(j))
                    .sum();
                if j == 0 {
                    moment - 1
                } else {
                    moment
                }
            })
            .collect()
    }
}

fn binomial(n: u64, k: u64) -> i64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) / (i + 1);
    }
    acc as i64
}

/// Binomial closed form of the order-`m` weights.
pub fn richardson_weights(m: usize) -> Result<RichardsonWeights> {
    if m > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "extrapolation order {m} exceeds the exact-integer limit {MAX_ORDER}"
        )));
    }
    let n = (m + 1) as u64;
    let coefficients = (1..=n)
        .map(|i| {
            let sign = if i % 2 == 1 { 1 } else { -1 };
            sign * binomial(n, i)
        })
        .collect();
    Ok(RichardsonWeights { order: m, coefficients })
}

/// `Σ_i α_i · estimates[i]`.
pub fn combine(weights: &RichardsonWeights, estimates: &[DVector<f64>]) -> Result<DVector<f64>> {
    let expected = weights.order + 1;
    if estimates.len() != expected {
        return Err(invalid(format!(
            "order {} needs {expected} estimates, got {}",
            weights.order,
            estimates.len()
        )));
    }
    let dim = estimates[0].len();
    let mut out = DVector::zeros(dim);
    for (alpha, est) in weights.coefficients.iter().zip(estimates) {
        if est.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: est.len() });
        }
        out.axpy(*alpha as f64, est, 1.0);
    }
    Ok(out)
}

/// Combines estimates according to `convention`.
pub fn combine_with(
    convention: ScaleConvention,
    weights: &RichardsonWeights,
    estimates: &[DVector<f64>],
) -> Result<DVector<f64>> {
    match convention {
        ScaleConvention::RegularizationScales => combine(weights, estimates),
        ScaleConvention::IterationHalving => {
            if weights.order != 1 {
                return Err(Error::Unsupported(
                    "iteration halving is only defined for order 1".into(),
                ));
            }
            combine(weights, estimates)
        }
    }
}

/// Index `k/2` paired with iteration `k` by the halving rule. Odd `k` is rejected.
pub fn halving_partner(k: usize) -> Result<usize> {
    if k == 0 || k % 2 == 1 {
        return Err(invalid(format!("iteration halving needs a positive even k, got {k}")));
    }
    Ok(k / 2)
}

/// `2 x_k - x_{k/2}`.
pub fn extrapolate_halving(x_k: &DVector<f64>, x_half: &DVector<f64>) -> Result<DVector<f64>> {
    if x_k.len() != x_half.len() {
        return Err(Error::DimensionMismatch { expected: x_k.len(), actual: x_half.len() });
    }
    Ok(x_k * 2.0 - x_half)
}

/// Spectral filter of the order-`m` extrapolated ridge smoother,
/// `s(μ) = 1 - (m+1)! / ((μ+1)(μ+2)⋯(μ+m+1))`.
///
/// Evaluated as `-expm1(-Σ log1p(μ/j))` so that small `μ` keeps full relative precision.
pub fn spectral_filter(mu: f64, m: usize) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(invalid(format!("spectral filter needs mu >= 0, got {mu}")));
    }
    if m > MAX_ORDER {
        return Err(Error::Unsupported(format!("order {m} exceeds {MAX_ORDER}")));
    }
    if mu.is_infinite() {
        return Ok(1.0);
    }
    let log_ratio: f64 = (1..=m + 1).map(|j| (mu / j as f64).ln_1p()).sum();
    Ok(-(-log_ratio).exp_m1())
}

/// The same filter as [`spectral_filter`], evaluated as the weighted sum
/// `Σ_i α_i μ / (μ + i)` of plain ridge filters.
pub fn spectral_filter_direct(mu: f64, m: usize) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(invalid(format!("spectral filter needs mu >= 0, got {mu}")));
    }
    let w = richardson_weights(m)?;
    Ok(w
        .coefficients
        .iter()
        .enumerate()
        .map(|(idx, &a)| a as f64 * mu / (mu + (idx + 1) as f64))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn vandermonde_solve(m: usize) -> Vec<f64> {
        let n = m + 1;
        let mat = DMatrix::from_fn(n, n, |j, i| ((i + 1) as f64).powi(j as i32));
        let mut rhs = DVector::zeros(n);
        rhs[0] = 1.0;
        mat.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    #[test]
    fn small_orders() {
        assert_eq!(richardson_weights(0).unwrap().coefficients(), &[1]);
        assert_eq!(richardson_weights(1).unwrap().coefficients(), &[2, -1]);
        assert_eq!(richardson_weights(2).unwrap().coefficients(), &[3, -3, 1]);
        assert_eq!(richardson_weights(3).unwrap().coefficients(), &[4, -6, 4, -1]);
    }

    #[test]
    fn order_three_matches_vandermonde_solve() {
        let numeric = vandermonde_solve(3);
        for (a, b) in numeric.iter().zip([4.0, -6.0, 4.0, -1.0]) {
            assert!((a - b).abs() < 1e-10, "{numeric:?}");
        }
    }

    #[test]
    fn residues_vanish_up_to_max_order() {
        for m in 0..=MAX_ORDER {
            let w = richardson_weights(m).unwrap();
            assert!(w.constraint_residuals().iter().all(|&r| r == 0), "m={m}");
            assert_eq!(w.l1_norm(), (1i64 << (m + 1)) - 1);
        }
    }

    #[test]
    fn rejects_large_order() {
        assert!(matches!(richardson_weights(21), Err(Error::Unsupported(_))));
    }

    #[test]
    fn combine_cancels_linear_term() {
        let w = richardson_weights(1).unwrap();
        let v = DVector::from_vec(vec![1.5, -2.0]);
        assert_eq!(combine(&w, &[v.clone(), v.clone()]).unwrap(), v);

        let x_star = DVector::from_vec(vec![0.25, 3.0, -1.0]);
        let delta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let lambda = 0.125;
        let est = [&x_star + &delta * lambda, &x_star + &delta * (2.0 * lambda)];
        let out = combine(&w, &est).unwrap();
        assert!((out - &x_star).amax() < 1e-15);
    }

    #[test]
    fn combine_cancels_quadratic_expansion() {
        let w = richardson_weights(2).unwrap();
        let x_star = DVector::from_vec(vec![1.0, -0.5]);
        let d1 = DVector::from_vec(vec![0.3, 2.0]);
        let d2 = DVector::from_vec(vec![-1.1, 0.7]);
        let lambda = 0.01;
        let est: Vec<_> = (1..=3)
            .map(|i| {
                let t = i as f64 * lambda;
                &x_star + &d1 * t + &d2 * (t * t)
            })
            .collect();
        let out = combine(&w, &est).unwrap();
        assert!((out - &x_star).amax() < 1e-14);
    }

    #[test]
    fn combine_errors() {
        let w = richardson_weights(1).unwrap();
        let a = DVector::from_vec(vec![1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(combine(&w, std::slice::from_ref(&a)).is_err());
        assert!(matches!(combine(&w, &[a, b]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn halving_convention() {
        assert_eq!(halving_partner(8).unwrap(), 4);
        assert!(halving_partner(7).is_err());
        assert!(halving_partner(0).is_err());
        let w2 = richardson_weights(2).unwrap();
        let v = DVector::from_vec(vec![1.0]);
        assert!(combine_with(ScaleConvention::IterationHalving, &w2, &[v.clone(), v.clone(), v]).is_err());
    }

    #[test]
    fn filter_examples() {
        for mu in [0.0, 0.3, 1.0, 7.5, 1e4] {
            let s = spectral_filter(mu, 0).unwrap();
            assert!((s - mu / (mu + 1.0)).abs() <= 1e-15 * (1.0 + s));
        }
        for m in 0..6 {
            assert_eq!(spectral_filter(0.0, m).unwrap(), 0.0);
        }
        // direct sum 2 * 1/2 - 1/3 and closed form 1 - 2 / (2 * 3)
        assert!((spectral_filter(1.0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((spectral_filter_direct(1.0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(spectral_filter(-1e-3, 1).is_err());
        assert!(spectral_filter(f64::NAN, 1).is_err());
    }

    #[test]
    fn filter_is_monotone_in_order() {
        for &mu in &[1e-3, 0.5, 2.0, 40.0] {
            let mut prev = spectral_filter(mu, 0).unwrap();
            for m in 1..=12 {
                let s = spectral_filter(mu, m).unwrap();
                assert!(s >= prev - 1e-12);
                assert!(s < 1.0);
                prev = s;
            }
        }
    }
}
