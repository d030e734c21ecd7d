//! Averaged gradient descent, Nesterov acceleration and open-loop Frank-Wolfe,
//! each recording iterates on a checkpoint schedule together with their
//! iteration-halving extrapolation `2 x_k - x_{k/2}`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::extrapolation::extrapolate_halving;
use crate::problems::{Feasibility, LinearMinimizationOracle, Objective};

/// Iterations at which a solver records its state.
///
/// `Geometric { per_octave }` keeps every `k ≤ 2·per_octave` and, above that,
/// the `per_octave` values `c·2^j` with `per_octave ≤ c < 2·per_octave`.
/// `per_octave` must be a power of two, which makes the set closed under
/// halving of even members, so `x_{k/2}` is available whenever `x_k` is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointSchedule {
    Geometric { per_octave: usize },
    Explicit(Vec<usize>),
}

impl Default for CheckpointSchedule {
    /// Powers of two and their midpoints.
    fn default() -> Self {
        Self::Geometric { per_octave: 2 }
    }
}

impl CheckpointSchedule {
    pub fn geometric(per_octave: usize) -> Result<Self> {
        if per_octave == 0 || !per_octave.is_power_of_two() {
            return Err(invalid(format!("per_octave must be a power of two, got {per_octave}")));
        }
        Ok(Self::Geometric { per_octave })
    }

    pub fn contains(&self, k: usize) -> bool {
        match self {
            Self::Geometric { per_octave } => {
                let mut k = k;
                while k >= 2 * per_octave {
                    if k % 2 == 1 {
                        return false;
                    }
                    k /= 2;
                }
                k >= 1
            }
            Self::Explicit(ks) => ks.contains(&k),
        }
    }

    /// Checkpoints in `1..=max_k`, with `max_k` always included.
    pub fn points(&self, max_k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            Self::Explicit(ks) => {
                let mut ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= max_k).collect();
                ks.sort_unstable();
                ks.dedup();
                ks
            }
            Self::Geometric { .. } => (1..=max_k).filter(|&k| self.contains(k)).collect(),
        };
        if out.last() != Some(&max_k) && max_k >= 1 {
            out.push(max_k);
        }
        out
    }

    fn is_checkpoint(&self, k: usize, max_k: usize) -> bool {
        k == max_k || self.contains(k)
    }
}

/// State recorded at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub k: usize,
    pub iterate: DVector<f64>,
    /// Polyak-Ruppert average `x̄_k = (1/k) Σ_{i<k} x_i`, for averaged solvers.
    pub average: Option<DVector<f64>>,
    /// `2 x_k - x_{k/2}` (of the averages, for averaged solvers), made feasible
    /// for constrained solvers.
    pub extrapolated: Option<DVector<f64>>,
}

/// Function gaps at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub k: usize,
    pub plain: f64,
    pub average: Option<f64>,
    pub extrapolated: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub checkpoints: Vec<Checkpoint>,
}

impl SolverTrace {
    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    pub fn get(&self, k: usize) -> Option<&Checkpoint> {
        self.checkpoints
            .binary_search_by_key(&k, |c| c.k)
            .ok()
            .map(|i| &self.checkpoints[i])
    }

    /// `f(·) - f_*` for every recorded vector.
    pub fn gaps<O: Objective + ?Sized>(&self, obj: &O, f_star: f64) -> Vec<GapRow> {
        self.checkpoints
            .iter()
            .map(|c| GapRow {
                k: c.k,
                plain: obj.value(&c.iterate) - f_star,
                average: c.average.as_ref().map(|x| obj.value(x) - f_star),
                extrapolated: c.extrapolated.as_ref().map(|x| obj.value(x) - f_star),
            })
            .collect()
    }
}

/// Writes gap rows as CSV with columns `k,gap_plain,gap_avg,gap_extrap`.
pub fn write_gap_csv<W: Write>(writer: W, rows: &[GapRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["k", "gap_plain", "gap_avg", "gap_extrap"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        wtr.write_record([r.k.to_string(), format!("{:e}", r.plain), cell(r.average), cell(r.extrapolated)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Open-loop step size `ρ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Constant(f64),
    /// `ρ_k = 1/k`.
    OpenLoopInvK,
    /// `ρ_k = 2/(k+1)`.
    OpenLoopTwoOverKPlus1,
}

impl StepRule {
    pub fn step(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            Self::Constant(g) => g,
            Self::OpenLoopInvK => 1.0 / k,
            Self::OpenLoopTwoOverKPlus1 => 2.0 / (k + 1.0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Constant(g) => format!("{g}"),
            Self::OpenLoopInvK => "1/k".into(),
            Self::OpenLoopTwoOverKPlus1 => "2/(k+1)".into(),
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1/k" | "inv-k" => Ok(Self::OpenLoopInvK),
            "2/(k+1)" | "2/k+1" | "two-over-k-plus-1" => Ok(Self::OpenLoopTwoOverKPlus1),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|g| *g > 0.0 && *g <= 1.0)
                .map(Self::Constant)
                .ok_or_else(|| invalid(format!("unknown step rule {other:?}"))),
        }
    }
}

fn check_finite(x: &DVector<f64>, iteration: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration, detail: "non-finite iterate".into() })
    }
}

/// Indices of stored checkpoints, used to find the `k/2` partner.
struct Recorder {
    schedule: CheckpointSchedule,
    max_k: usize,
    trace: SolverTrace,
    index: BTreeMap<usize, usize>,
}

impl Recorder {
    fn new(schedule: &CheckpointSchedule, max_k: usize) -> Self {
        Self { schedule: schedule.clone(), max_k, trace: SolverTrace::default(), index: BTreeMap::new() }
    }

    fn wants(&self, k: usize) -> bool {
        self.schedule.is_checkpoint(k, self.max_k)
    }

    fn partner(&self, k: usize) -> Option<&Checkpoint> {
        if k % 2 == 1 {
            return None;
        }
        self.index.get(&(k / 2)).map(|&i| &self.trace.checkpoints[i])
    }

    fn push(&mut self, cp: Checkpoint) {
        self.index.insert(cp.k, self.trace.checkpoints.len());
        self.trace.checkpoints.push(cp);
    }
}

/// Gradient descent `x_k = x_{k-1} - γ (f'(x_{k-1}) + ξ_k)` with Polyak-Ruppert
/// averaging and tail averaging `2 x̄_k - x̄_{k/2}` at even checkpoints.
pub fn averaged_gd<O: Objective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    step: f64,
    iterations: usize,
    grad_noise_std: f64,
    seed: u64,
    schedule: &CheckpointSchedule,
) -> Result<SolverTrace> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), actual: x0.len() });
    }
    if iterations < 2 {
        return Err(invalid("averaged_gd needs at least 2 iterations"));
    }
    if !(step > 0.0) || !(grad_noise_std >= 0.0) {
        return Err(invalid("step must be positive and noise std non-negative"));
    }
    if let Some(l) = obj.smoothness() {
        if step > 1.0 / l * (1.0 + 1e-12) {
            log::warn!("step {step} exceeds 1/L = {}", 1.0 / l);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = Recorder::new(schedule, iterations);
    let mut x = x0.clone();
    let mut sum = DVector::zeros(x.len());
    for k in 1..=iterations {
        sum += &x;
        let mut g = obj.gradient(&x);
        if grad_noise_std > 0.0 {
            for gi in g.iter_mut() {
                let xi: f64 = rng.sample(StandardNormal);
                *gi += grad_noise_std * xi;
            }
        }
        x.axpy(-step, &g, 1.0);
        check_finite(&x, k)?;
        if rec.wants(k) {
            let average = &sum / k as f64;
            let extrapolated = match rec.partner(k) {
                Some(half) => Some(extrapolate_halving(&average, half.average.as_ref().expect("averaged"))?),
                None => None,
            };
            rec.push(Checkpoint { k, iterate: x.clone(), average: Some(average), extrapolated });
        }
    }
    Ok(rec.trace)
}

/// `(2/k) Σ_{i=k/2}^{k-1} x_i` computed directly from a sequence.
pub fn tail_average(seq: &[DVector<f64>], k: usize) -> Result<DVector<f64>> {
    if k == 0 || k % 2 == 1 || k > seq.len() {
        return Err(invalid(format!("tail average needs even k <= {}, got {k}", seq.len())));
    }
    let mut out = DVector::zeros(seq[0].len());
    for x in &seq[k / 2..k] {
        out += x;
    }
    Ok(out * (2.0 / k as f64))
}

/// `(1/k) Σ_{i<k} x_i` computed directly from a sequence.
pub fn running_average(seq: &[DVector<f64>], k: usize) -> Result<DVector<f64>> {
    if k == 0 || k > seq.len() {
        return Err(invalid(format!("running average needs 1 <= k <= {}, got {k}", seq.len())));
    }
    let mut out = DVector::zeros(seq[0].len());
    for x in &seq[..k] {
        out += x;
    }
    Ok(out / k as f64)
}

/// Momentum schedule for [`accelerated_gd_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Momentum {
    /// `(k-1)/(k+2)`.
    #[default]
    Convex,
    /// `(j-1)/(j+2)` where `j` resets whenever the step opposes the gradient.
    GradientRestart,
}

/// Nesterov's method for convex functions: step `1/L`, momentum `(k-1)/(k+2)`.
pub fn accelerated_gd<O: Objective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    smoothness: f64,
    iterations: usize,
    schedule: &CheckpointSchedule,
) -> Result<SolverTrace> {
    accelerated_gd_with(obj, x0, smoothness, iterations, schedule, Momentum::Convex)
}

pub fn accelerated_gd_with<O: Objective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    smoothness: f64,
    iterations: usize,
    schedule: &CheckpointSchedule,
    momentum: Momentum,
) -> Result<SolverTrace> {
    if !(smoothness > 0.0) {
        return Err(invalid(format!("smoothness constant must be positive, got {smoothness}")));
    }
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), actual: x0.len() });
    }
    let step = 1.0 / smoothness;
    let mut rec = Recorder::new(schedule, iterations);
    let mut x_prev = x0.clone();
    let mut y = x0.clone();
    let mut j = 1usize;
    for k in 1..=iterations {
        let g = obj.gradient(&y);
        let mut x = y.clone();
        x.axpy(-step, &g, 1.0);
        check_finite(&x, k)?;
        let dx = &x - &x_prev;
        if momentum == Momentum::GradientRestart && g.dot(&dx) > 0.0 {
            j = 1;
        }
        let beta = (j as f64 - 1.0) / (j as f64 + 2.0);
        y = &x + dx * beta;
        j += 1;
        if rec.wants(k) {
            let extrapolated = match rec.partner(k) {
                Some(half) => Some(extrapolate_halving(&x, &half.iterate)?),
                None => None,
            };
            rec.push(Checkpoint { k, iterate: x.clone(), average: None, extrapolated });
        }
        x_prev = x;
    }
    Ok(rec.trace)
}

/// Gradient-restarted Nesterov iterations returning only the final point.
///
/// Stops after `max_iterations` or once `‖∇f(y)‖_∞ ≤ grad_tol`. Returns the
/// final iterate and the number of iterations run.
pub fn restarted_minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    smoothness: f64,
    max_iterations: usize,
    grad_tol: f64,
) -> Result<(DVector<f64>, usize)> {
    projected_restarted_minimize(obj, None, x0, smoothness, max_iterations, grad_tol)
}

/// As [`restarted_minimize`], with each gradient step projected onto the
/// oracle's set when `oracle` is given. The tolerance then applies to the
/// gradient mapping `L (y - x)`.
pub fn projected_restarted_minimize<O: Objective + ?Sized>(
    obj: &O,
    oracle: Option<&LinearMinimizationOracle>,
    x0: &DVector<f64>,
    smoothness: f64,
    max_iterations: usize,
    grad_tol: f64,
) -> Result<(DVector<f64>, usize)> {
    if !(smoothness > 0.0) {
        return Err(invalid(format!("smoothness constant must be positive, got {smoothness}")));
    }
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), actual: x0.len() });
    }
    let step = 1.0 / smoothness;
    let mut x_prev = match oracle {
        Some(o) => o.project(x0),
        None => x0.clone(),
    };
    let mut y = x_prev.clone();
    let mut j = 1usize;
    for k in 1..=max_iterations {
        let g = obj.gradient(&y);
        let mut x = y.clone();
        x.axpy(-step, &g, 1.0);
        if let Some(o) = oracle {
            x = o.project(&x);
        }
        check_finite(&x, k)?;
        let mapping = (&y - &x).amax() * smoothness;
        if mapping <= grad_tol {
            return Ok((x, k));
        }
        let dx = &x - &x_prev;
        if (&y - &x).dot(&dx) < 0.0 {
            j = 1;
        }
        let beta = (j as f64 - 1.0) / (j as f64 + 2.0);
        y = &x + dx * beta;
        j += 1;
        x_prev = x;
    }
    Ok((x_prev, max_iterations))
}

/// Frank-Wolfe with an open-loop step rule, starting at `k = 1` so `ρ_1 = 1`.
/// Extrapolated iterates are pulled back into the feasible set with
/// [`LinearMinimizationOracle::make_feasible`].
pub fn frank_wolfe<O: Objective + ?Sized>(
    obj: &O,
    oracle: &LinearMinimizationOracle,
    rule: StepRule,
    x0: &DVector<f64>,
    iterations: usize,
    schedule: &CheckpointSchedule,
) -> Result<SolverTrace> {
    frank_wolfe_with(obj, oracle, rule, x0, iterations, schedule, oracle.default_feasibility())
}

/// [`frank_wolfe`] with a chosen map from extrapolated iterates back into the set.
pub fn frank_wolfe_with<O: Objective + ?Sized>(
    obj: &O,
    oracle: &LinearMinimizationOracle,
    rule: StepRule,
    x0: &DVector<f64>,
    iterations: usize,
    schedule: &CheckpointSchedule,
    feasibility: Feasibility,
) -> Result<SolverTrace> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), actual: x0.len() });
    }
    if !oracle.contains(x0, 1e-12) {
        return Err(Error::Infeasible("Frank-Wolfe start point lies outside the set".into()));
    }
    let mut rec = Recorder::new(schedule, iterations);
    let mut x = x0.clone();
    for k in 1..=iterations {
        let g = obj.gradient(&x);
        let vertex = oracle.minimize(&g)?;
        let rho = rule.step(k);
        x.axpy(rho, &vertex, 1.0 - rho);
        check_finite(&x, k)?;
        if rec.wants(k) {
            let extrapolated = match rec.partner(k) {
                Some(half) => Some(oracle.make_feasible_with(&extrapolate_halving(&x, &half.iterate)?, feasibility)),
                None => None,
            };
            rec.push(Checkpoint { k, iterate: x.clone(), average: None, extrapolated });
        }
    }
    Ok(rec.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;

    /// `(x - c)²` in one dimension.
    struct Shifted(f64);

    impl Objective for Shifted {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &DVector<f64>) -> f64 {
            (x[0] - self.0).powi(2)
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 2.0 * (x[0] - self.0))
        }
        fn smoothness(&self) -> Option<f64> {
            Some(2.0)
        }
    }

    #[test]
    fn schedule_is_closed_under_halving() {
        for p in [1, 2, 4, 8] {
            let s = CheckpointSchedule::geometric(p).unwrap();
            let pts = s.points(5000);
            for &k in &pts[..pts.len() - 1] {
                if k % 2 == 0 {
                    assert!(s.contains(k / 2), "p={p} k={k}");
                }
            }
        }
        let s = CheckpointSchedule::default();
        assert_eq!(s.points(20), vec![1, 2, 3, 4, 6, 8, 12, 16, 20]);
        assert!(CheckpointSchedule::geometric(3).is_err());
    }

    #[test]
    fn averaged_gd_one_step_quadratic() {
        let q = QuadraticProblem::new(DVector::from_element(1, 1.0), DVector::zeros(1)).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let sched = CheckpointSchedule::Explicit((1..=16).collect());
        let trace = averaged_gd(&q, &x0, 1.0, 16, 0.0, 0, &sched).unwrap();
        for c in &trace.checkpoints {
            assert_eq!(c.iterate[0], 0.0);
            assert!((c.average.as_ref().unwrap()[0] - 1.0 / c.k as f64).abs() < 1e-15);
            if c.k % 2 == 0 {
                // tail average of x_{k/2..k-1} is zero once k >= 2
                assert!(c.extrapolated.as_ref().unwrap()[0].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn averaged_gd_rejects_short_runs_and_divergence() {
        let q = QuadraticProblem::new(DVector::from_element(1, 1.0), DVector::zeros(1)).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let s = CheckpointSchedule::default();
        assert!(averaged_gd(&q, &x0, 1.0, 1, 0.0, 0, &s).is_err());
        let err = averaged_gd(&q, &x0, 3.0, 5000, 0.0, 0, &s).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn noisy_runs_are_deterministic() {
        let q = QuadraticProblem::power_decay(10, 1.0, DVector::from_element(10, 1.0)).unwrap();
        let x0 = DVector::zeros(10);
        let s = CheckpointSchedule::default();
        let a = averaged_gd(&q, &x0, 0.5, 300, 0.1, 42, &s).unwrap();
        let b = averaged_gd(&q, &x0, 0.5, 300, 0.1, 42, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn accelerated_fixed_point_and_monotone_on_isotropic_quadratic() {
        let q = QuadraticProblem::new(DVector::from_element(3, 1.0), DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let s = CheckpointSchedule::default();
        let trace = accelerated_gd(&q, q.optimum(), 1.0, 64, &s).unwrap();
        assert!(trace.checkpoints.iter().all(|c| &c.iterate == q.optimum()));

        let q = QuadraticProblem::new(DVector::from_element(3, 1.0), DVector::zeros(3)).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let trace = accelerated_gd(&q, &x0, 1.0, 64, &s).unwrap();
        let gaps = trace.gaps(&q, 0.0);
        for w in gaps.windows(2) {
            assert!(w[1].plain <= w[0].plain);
        }
    }

    #[test]
    fn frank_wolfe_one_dimensional() {
        // min (x - 0.3)² on [-1, 1]; with ρ_k = 2/(k+1) the iterates approach 0.3
        let f = Shifted(0.3);
        let oracle = LinearMinimizationOracle::BoxLinf;
        let x0 = DVector::from_element(1, -1.0);
        let trace = frank_wolfe(&f, &oracle, StepRule::OpenLoopTwoOverKPlus1, &x0, 4096, &CheckpointSchedule::default()).unwrap();

        // closed-form simulation of the same recursion
        let mut x = -1.0f64;
        for k in 1..=4096 {
            let v = if 2.0 * (x - 0.3) < 0.0 { 1.0 } else { -1.0 };
            let rho = 2.0 / (k as f64 + 1.0);
            x = (1.0 - rho) * x + rho * v;
        }
        let last = trace.last().unwrap();
        assert!((last.iterate[0] - x).abs() < 1e-12);
        assert!((last.iterate[0] - 0.3).abs() < 1e-3);
        assert!(trace.checkpoints.iter().all(|c| c.iterate[0].abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn frank_wolfe_rejects_infeasible_start() {
        let f = Shifted(0.3);
        let oracle = LinearMinimizationOracle::BoxLinf;
        let x0 = DVector::from_element(1, 2.0);
        let r = frank_wolfe(&f, &oracle, StepRule::OpenLoopInvK, &x0, 10, &CheckpointSchedule::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn step_rules() {
        assert_eq!(StepRule::OpenLoopInvK.step(1), 1.0);
        assert_eq!(StepRule::OpenLoopTwoOverKPlus1.step(1), 1.0);
        assert_eq!(StepRule::OpenLoopTwoOverKPlus1.step(3), 0.5);
        assert_eq!("1/k".parse::<StepRule>().unwrap(), StepRule::OpenLoopInvK);
        assert_eq!("2/(k+1)".parse::<StepRule>().unwrap(), StepRule::OpenLoopTwoOverKPlus1);
        assert!("bogus".parse::<StepRule>().is_err());
    }

    #[test]
    fn gap_csv_has_empty_cells() {
        let rows = [GapRow { k: 1, plain: 0.5, average: None, extrapolated: Some(0.25) }];
        let mut buf = Vec::new();
        write_gap_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "k,gap_plain,gap_avg,gap_extrap\n1,5e-1,,2.5e-1\n");
    }
}
