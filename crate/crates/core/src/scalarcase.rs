//! The vector case: a scalar cost `f` lifted through one hidden layer,
//! `g(w_1, w_2) = f(w_2 w_1)` with `w_1 ∈ ℝ^k` and a covector `w_2`.
//!
//! Along the flow `z = w_2 w_1` obeys `ż = −f′(z) S` with
//! `S = ‖w_1‖² + ‖w_2‖²`, and `D = S² − 4z²` is conserved, so the product
//! follows the one-dimensional reduced flow `ż = −f′(z) √(c + 4z²)` with
//! `c = D`. Reparameterizing time by `dτ/dt = √(c + 4z²)` removes the
//! dependence on `c` altogether.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cost::{MatrixCost, ScalarCost};
use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig, Trajectory};
use crate::linnet::{LayerStack, NetShape};
use crate::ode::{self, Sampling};

/// `(w_1, w_2)` with `w_2` stored as a plain vector (it acts as a row).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPairState {
    pub w1: DVector<f64>,
    pub w2: DVector<f64>,
}

impl ScalarPairState {
    pub fn new(w1: DVector<f64>, w2: DVector<f64>) -> Result<Self> {
        if w1.len() != w2.len() || w1.is_empty() {
            return Err(Error::dims(format!("two vectors of length {}", w1.len()), w2.len()));
        }
        Ok(Self { w1, w2 })
    }

    pub fn from_slices(w1: &[f64], w2: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w1), DVector::from_column_slice(w2))
    }

    pub fn k(&self) -> usize {
        self.w1.len()
    }

    /// The product `z = w_2 w_1`.
    pub fn z(&self) -> f64 {
        self.w2.dot(&self.w1)
    }

    /// `S = ‖w_1‖² + ‖w_2‖²`.
    pub fn total(&self) -> f64 {
        self.w1.norm_squared() + self.w2.norm_squared()
    }

    pub fn u(&self, s: f64) -> DVector<f64> {
        &self.w1 - &self.w2 * s
    }

    pub fn v(&self, s: f64) -> DVector<f64> {
        &self.w1 + &self.w2 * s
    }

    pub fn norm(&self) -> f64 {
        self.total().sqrt()
    }

    pub fn to_stack(&self) -> LayerStack {
        let k = self.k();
        let shape = NetShape { n: 1, k, depth: 2 };
        LayerStack::new(
            shape,
            vec![
                DMatrix::from_column_slice(k, 1, self.w1.as_slice()),
                DMatrix::from_row_slice(1, k, self.w2.as_slice()),
            ],
        )
        .expect("shapes built from k")
    }

    pub fn from_stack(stack: &LayerStack) -> Result<Self> {
        let shape = stack.shape();
        if shape.n != 1 || shape.depth != 2 {
            return Err(Error::InvalidArgument(format!(
                "vector case needs n = 1 and depth 2 (got n={}, depth={})",
                shape.n, shape.depth
            )));
        }
        Self::from_slices(stack.layer(1).as_slice(), stack.layer(2).as_slice())
    }
}

/// `D = S² − 4z²`.
pub fn conserved_d(state: &ScalarPairState) -> f64 {
    let s = state.total();
    let z = state.z();
    s * s - 4.0 * z * z
}

/// `sign(f′(0))`; errors when `f′(0) = 0`.
pub fn origin_sign(cost: &ScalarCost) -> Result<f64> {
    let d = cost.d1(0.0);
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Precondition(format!("sign undefined: f'(0) = {d}")));
    }
    Ok(d.signum())
}

/// `d(w_1, w_2) = ‖w_1 − s w_2ᵀ‖` with `s = sign(f′(0))`.
pub fn d_metric(state: &ScalarPairState, cost: &ScalarCost) -> Result<f64> {
    let s = origin_sign(cost)?;
    Ok(state.u(s).norm())
}

/// `d` counts as zero below `1e-12 (1 + ‖w‖)`.
pub fn d_is_zero(d: f64, state: &ScalarPairState) -> bool {
    d < 1e-12 * (1.0 + state.norm())
}

/// Samples of the reduced product flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub c: f64,
    pub stop_reason: ode::StopReason,
}

fn reduced(cost: &ScalarCost, c: f64, z0: f64, cfg: &IntegratorConfig, sampling: Sampling<'_>) -> Result<ReducedTrajectory> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("imbalance c must be >= 0 (got {c})")));
    }
    let rhs = |_t: f64, y: &DVector<f64>| {
        let z = y[0];
        DVector::from_element(1, -cost.d1(z) * (c + 4.0 * z * z).sqrt())
    };
    let sol = ode::solve(rhs, &DVector::from_element(1, z0), cfg, sampling)?;
    let z: Vec<f64> = sol.y.iter().map(|y| y[0]).collect();
    Ok(ReducedTrajectory {
        f: z.iter().map(|z| cost.value(*z)).collect(),
        t: sol.t,
        z,
        c,
        stop_reason: sol.stop,
    })
}

/// Integrates `ż = −f′(z) √(c + 4z²)`.
pub fn reduced_flow(cost: &ScalarCost, c: f64, z0: f64, cfg: &IntegratorConfig) -> Result<ReducedTrajectory> {
    reduced(cost, c, z0, cfg, Sampling::Stride)
}

/// As [`reduced_flow`], sampled exactly at `times`.
pub fn reduced_flow_at(cost: &ScalarCost, c: f64, z0: f64, cfg: &IntegratorConfig, times: &[f64]) -> Result<ReducedTrajectory> {
    reduced(cost, c, z0, cfg, Sampling::AtTimes(times))
}

/// `n` equally spaced times in `(0, t_end]`.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

/// Holds the last value once a run stopped early at an equilibrium.
fn value_at(values: &[f64], i: usize) -> f64 {
    values[i.min(values.len() - 1)]
}

/// Integrates the full `2k`-dimensional flow and the reduced flow with
/// `c = D(state0)` on a common grid of 200 times in `(0, t_max]` and returns
/// the largest gap between the two products.
pub fn match_reduction(cost: &ScalarCost, state0: &ScalarPairState, cfg: &IntegratorConfig) -> Result<f64> {
    let cfg = IntegratorConfig {
        grad_tol: f64::MIN_POSITIVE,
        ..*cfg
    };
    let times = uniform_times(cfg.t_max, 200);
    let mcost = MatrixCost::scalar(cost.clone());
    let full = flow::integrate_at(&state0.to_stack(), &mcost, &cfg, &times)?;
    let z_full: Vec<f64> = full.samples.iter().map(|s| s.stack.product()[(0, 0)]).collect();
    let red = reduced_flow_at(cost, conserved_d(state0).max(0.0), state0.z(), &cfg, &times)?;
    let n = times.len() + 1;
    Ok((0..n)
        .map(|i| (value_at(&z_full, i) - value_at(&red.z, i)).abs())
        .fold(0.0, f64::max))
}

/// Cumulative trapezoidal `τ(t) = ∫ √(c + 4z²) dt`, paired with `z`.
///
/// Requires adjacent samples no more than `0.01` apart.
pub fn reparameterize_time(traj: &ReducedTrajectory, c: f64) -> Result<Vec<(f64, f64)>> {
    if traj.t.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if let Some(gap) = traj.t.windows(2).map(|w| w[1] - w[0]).find(|g| *g > MAX_TAU_SPACING) {
        return Err(Error::Precondition(format!(
            "samples too sparse for quadrature (spacing {gap} > {MAX_TAU_SPACING})"
        )));
    }
    let rate = |z: f64| (c + 4.0 * z * z).sqrt();
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(traj.t.len());
    out.push((0.0, traj.z[0]));
    for i in 1..traj.t.len() {
        let dt = traj.t[i] - traj.t[i - 1];
        tau += 0.5 * dt * (rate(traj.z[i - 1]) + rate(traj.z[i]));
        out.push((tau, traj.z[i]));
    }
    Ok(out)
}

pub const MAX_TAU_SPACING: f64 = 0.01 + 1e-12;

/// Linear interpolation of `z(τ)` on an increasing `τ` grid.
fn interp(curve: &[(f64, f64)], tau: f64) -> Option<f64> {
    let i = curve.partition_point(|(t, _)| *t < tau);
    if i == 0 {
        return (curve[0].0 == tau).then_some(curve[0].1);
    }
    if i == curve.len() {
        return None;
    }
    let (t0, z0) = curve[i - 1];
    let (t1, z1) = curve[i];
    if t1 == t0 {
        return Some(z1);
    }
    Some(z0 + (z1 - z0) * (tau - t0) / (t1 - t0))
}

/// Sup-norm gap between two `z(τ)` curves over their common `τ` range,
/// evaluated at the nodes of `a`.
pub fn collapse_error(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .filter_map(|(tau, z)| interp(b, *tau).map(|zb| (z - zb).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelReport {
    pub t_grid: Vec<f64>,
    pub cost_low_c: Vec<f64>,
    pub cost_high_c: Vec<f64>,
    pub tau_collapse_error: f64,
    pub collapse_low: Vec<(f64, f64)>,
    pub collapse_high: Vec<(f64, f64)>,
}

impl AccelReport {
    pub fn margins(&self) -> Vec<f64> {
        self.cost_low_c.iter().zip(&self.cost_high_c).map(|(l, h)| l - h).collect()
    }

    /// Smallest `cost_low − cost_high` over samples with `t > 0`.
    pub fn min_margin(&self) -> f64 {
        self.t_grid
            .iter()
            .zip(self.margins())
            .filter(|(t, _)| **t > 0.0)
            .map(|(_, m)| m)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sample spacing used by [`compare_acceleration`].
pub const ACCEL_SPACING: f64 = 1e-3;

/// Runs the reduced flow from `z0` with two imbalance levels on a `1e-3`
/// grid over `[0, t_max]` and compares the resulting costs.
pub fn compare_acceleration(
    cost: &ScalarCost,
    z0: f64,
    c_low: f64,
    c_high: f64,
    cfg: &IntegratorConfig,
) -> Result<AccelReport> {
    if !(c_low < c_high) {
        return Err(Error::Precondition(format!("need c_low < c_high (got {c_low}, {c_high})")));
    }
    compare_acceleration_unchecked(cost, z0, c_low, c_high, cfg)
}

/// [`compare_acceleration`] without the ordering precondition.
pub fn compare_acceleration_unchecked(
    cost: &ScalarCost,
    z0: f64,
    c_low: f64,
    c_high: f64,
    cfg: &IntegratorConfig,
) -> Result<AccelReport> {
    let n = (cfg.t_max / ACCEL_SPACING).round().max(1.0) as usize;
    let times = uniform_times(cfg.t_max, n);
    let cfg = IntegratorConfig {
        grad_tol: f64::MIN_POSITIVE,
        ..*cfg
    };
    let low = reduced_flow_at(cost, c_low, z0, &cfg, &times)?;
    let high = reduced_flow_at(cost, c_high, z0, &cfg, &times)?;
    let mut t_grid = vec![0.0];
    t_grid.extend_from_slice(&times);
    let cost_low_c = (0..t_grid.len()).map(|i| value_at(&low.f, i)).collect();
    let cost_high_c = (0..t_grid.len()).map(|i| value_at(&high.f, i)).collect();
    let collapse_low = reparameterize_time(&low, c_low)?;
    let collapse_high = reparameterize_time(&high, c_high)?;
    let tau_collapse_error = collapse_error(&collapse_low, &collapse_high);
    Ok(AccelReport {
        t_grid,
        cost_low_c,
        cost_high_c,
        tau_collapse_error,
        collapse_low,
        collapse_high,
    })
}

/// One run of the dichotomy battery.
#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyRun {
    pub init: ScalarPairState,
    pub d0: f64,
    /// `D` at the start.
    pub conserved0: f64,
    /// `2 tr(C²) − (tr C)²` of the initial stack.
    pub imbalance0: f64,
    pub final_f: f64,
    pub final_norm: f64,
    /// `max_t |D(t) − D(0)|`.
    pub d_drift: f64,
    /// `sign f′(z(t))` changed between two samples.
    pub sign_flip: bool,
    /// `z(t)` stayed monotone while `|f′(z)| > 10 grad_tol`.
    pub z_monotone: bool,
    pub trajectory_len: usize,
}

impl DichotomyRun {
    pub fn anti_balanced(&self) -> bool {
        d_is_zero(self.d0, &self.init)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyReport {
    pub sign: f64,
    pub f_min: f64,
    pub f_at_zero: f64,
    pub runs: Vec<DichotomyRun>,
}

impl DichotomyReport {
    /// Runs with `d > 0` that reached `f̲` within `tol`.
    pub fn positive_ok(&self, tol: f64) -> (usize, usize) {
        let pos: Vec<_> = self.runs.iter().filter(|r| !r.anti_balanced()).collect();
        (pos.iter().filter(|r| r.final_f - self.f_min < tol).count(), pos.len())
    }

    /// Runs with `d = 0` that went to the origin and stayed at `f(0)`.
    pub fn anti_ok(&self, tol: f64) -> (usize, usize) {
        let anti: Vec<_> = self.runs.iter().filter(|r| r.anti_balanced()).collect();
        (
            anti.iter()
                .filter(|r| r.final_norm < 1e-4 && (r.final_f - self.f_at_zero).abs() < tol)
                .count(),
            anti.len(),
        )
    }
}

/// Interval on which the dichotomy precondition checks the gradient
/// inequality.
pub const DICHOTOMY_PDPLI_INTERVAL: (f64, f64) = (-4.0, 4.0);

/// Inits for the dichotomy battery: `positive` Gaussian pairs with `d > 0`
/// and `anti` pairs on the line `w_1 = s w_2ᵀ`, all from one seed.
pub fn dichotomy_inits(cost: &ScalarCost, k: usize, positive: usize, anti: usize, seed: u64) -> Result<Vec<ScalarPairState>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let s = origin_sign(cost)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.7).unwrap();
    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(k, |_, _| normal.sample(rng));
    let mut out = Vec::with_capacity(positive + anti);
    while out.len() < positive {
        let st = ScalarPairState::new(draw(&mut rng), draw(&mut rng))?;
        if st.u(s).norm() > 1e-3 {
            out.push(st);
        }
    }
    for _ in 0..anti {
        let w1 = draw(&mut rng);
        let w2 = &w1 * s;
        out.push(ScalarPairState::new(w1, w2)?);
    }
    Ok(out)
}

fn check_dichotomy_preconditions(cost: &ScalarCost) -> Result<(f64, f64)> {
    let f0 = cost.value(0.0);
    origin_sign(cost)?;
    let (lo, hi) = DICHOTOMY_PDPLI_INTERVAL;
    let report = cost.pdpli_check(lo, hi, 801)?;
    if !report.passed {
        return Err(Error::Precondition(format!(
            "cost fails the gradient inequality on [{lo}, {hi}] (witness {:?})",
            report.witness
        )));
    }
    let f_min = cost.min_value().unwrap_or_else(|| {
        (0..=800)
            .map(|i| cost.value(lo + (hi - lo) * i as f64 / 800.0))
            .fold(f64::INFINITY, f64::min)
    });
    if !(f0 > f_min) {
        return Err(Error::Precondition(format!("f(0) = {f0} is already minimal")));
    }
    Ok((f_min, f0))
}

fn run_one(cost: &ScalarCost, mcost: &MatrixCost, init: &ScalarPairState, cfg: &IntegratorConfig) -> Result<DichotomyRun> {
    let s = origin_sign(cost)?;
    let traj: Trajectory = flow::integrate(&init.to_stack(), mcost, cfg)?;
    let states: Vec<ScalarPairState> = traj
        .samples
        .iter()
        .map(|smp| ScalarPairState::from_stack(&smp.stack))
        .collect::<Result<_>>()?;
    let d0 = conserved_d(init);
    let d_drift = states
        .iter()
        .map(|st| (conserved_d(st) - d0).abs())
        .fold(0.0, f64::max);

    let zs: Vec<f64> = states.iter().map(|st| st.z()).collect();
    let signs: Vec<f64> = zs
        .iter()
        .map(|z| cost.d1(*z))
        .filter(|d| *d != 0.0)
        .map(f64::signum)
        .collect();
    let sign_flip = signs.windows(2).any(|w| w[0] != w[1]);
    let active = 10.0 * cfg.grad_tol;
    let steps: Vec<f64> = zs
        .windows(2)
        .filter(|w| cost.d1(w[0]).abs() > active && cost.d1(w[1]).abs() > active)
        .map(|w| w[1] - w[0])
        .collect();
    let z_monotone = steps.iter().all(|d| *d >= 0.0) || steps.iter().all(|d| *d <= 0.0);

    let last = states.last().expect("non-empty");
    let imbalance0 = crate::invariant::invariants(&init.to_stack())?
        .imbalance_c
        .expect("vector case");
    Ok(DichotomyRun {
        init: init.clone(),
        d0: init.u(s).norm(),
        conserved0: d0,
        imbalance0,
        final_f: cost.value(last.z()),
        final_norm: last.norm(),
        d_drift,
        sign_flip,
        z_monotone,
        trajectory_len: traj.samples.len(),
    })
}

/// Integrates the full flow from each init in parallel and records the
/// limit behaviour.
pub fn dichotomy_experiment(cost: &ScalarCost, inits: &[ScalarPairState], cfg: &IntegratorConfig) -> Result<DichotomyReport> {
    let (f_min, f_at_zero) = check_dichotomy_preconditions(cost)?;
    let sign = origin_sign(cost)?;
    let mcost = MatrixCost::scalar(cost.clone());
    let runs = inits
        .par_iter()
        .map(|init| run_one(cost, &mcost, init, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(DichotomyReport {
        sign,
        f_min,
        f_at_zero,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::{imbalance_scalar, invariants};
    use proptest::prelude::*;

    fn quad() -> ScalarCost {
        ScalarCost::parse("(1-w)^2").unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig {
            t_max: 200.0,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn d_metric_examples() {
        let st = ScalarPairState::from_slices(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(d_metric(&st, &quad()).unwrap(), 2.0);
        let st = ScalarPairState::from_slices(&[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(d_metric(&st, &quad()).unwrap(), 0.0);
        let plus = ScalarCost::parse("(1+w)^2").unwrap();
        let st = ScalarPairState::from_slices(&[0.4, -2.0], &[0.4, -2.0]).unwrap();
        assert_eq!(d_metric(&st, &plus).unwrap(), 0.0);
        let flat = ScalarCost::parse("(w^2-1)^2").unwrap();
        assert!(matches!(d_metric(&st, &flat), Err(Error::Precondition(_))));
    }

    #[test]
    fn conserved_d_examples() {
        let st = ScalarPairState::from_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(conserved_d(&st), 4.0);
        let st = ScalarPairState::from_slices(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(conserved_d(&st), 0.0);
    }

    #[test]
    fn conserved_d_along_flow_seed5() {
        let inits = dichotomy_inits(&quad(), 2, 1, 0, 5).unwrap();
        let st = &inits[0];
        let traj = flow::integrate(&st.to_stack(), &MatrixCost::scalar(quad()), &cfg()).unwrap();
        let d0 = conserved_d(st);
        for s in &traj.samples {
            let d = conserved_d(&ScalarPairState::from_stack(&s.stack).unwrap());
            assert!((d - d0).abs() < 1e-8);
        }
    }

    #[test]
    fn reduced_flow_logistic_oracle() {
        let t_star = 0.25 * 3f64.ln();
        let r = reduced_flow_at(&quad(), 0.0, 0.5, &cfg(), &[0.1, t_star, 0.5]).unwrap();
        for (t, z) in r.t.iter().zip(&r.z) {
            let e = (4.0 * t).exp();
            assert!((z - e / (1.0 + e)).abs() < 1e-8, "t={t}");
        }
        assert!((r.z[2] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn reduced_flow_stationary_and_bad_c() {
        let r = reduced_flow(&quad(), 0.0, 1.0, &cfg()).unwrap();
        assert_eq!(r.z, vec![1.0]);
        assert!(reduced_flow(&quad(), -1.0, 0.5, &cfg()).is_err());
    }

    #[test]
    fn higher_imbalance_is_faster_at_t02() {
        let lo = reduced_flow_at(&quad(), 0.0, 0.5, &cfg(), &[0.2]).unwrap();
        let hi = reduced_flow_at(&quad(), 9.0, 0.5, &cfg(), &[0.2]).unwrap();
        assert!(hi.f[1] < lo.f[1]);
    }

    #[test]
    fn match_reduction_examples() {
        let c = cfg().with_t_max(3.0);
        let st = ScalarPairState::from_slices(&[1.0], &[1.0]).unwrap();
        // balanced at the minimizer: both flows are stationary
        assert_eq!(match_reduction(&quad(), &st, &c).unwrap(), 0.0);
        let st = ScalarPairState::from_slices(&[0.5], &[0.5]).unwrap();
        assert!(match_reduction(&quad(), &st, &c).unwrap() < 1e-8);
        let st = ScalarPairState::from_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(match_reduction(&quad(), &st, &c).unwrap() < 1e-8);
    }

    #[test]
    fn reparameterize_constant_and_sparse() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let traj = ReducedTrajectory {
            z: vec![0.3; t.len()],
            f: vec![0.0; t.len()],
            t: t.clone(),
            c: 0.0,
            stop_reason: ode::StopReason::TMax,
        };
        let tau = reparameterize_time(&traj, 0.0).unwrap();
        for ((tau, _), t) in tau.iter().zip(&t) {
            assert!((tau - 0.6 * t).abs() < 1e-12);
        }
        assert!(tau.windows(2).all(|w| w[0].0 < w[1].0));

        let sparse = ReducedTrajectory {
            t: vec![0.0, 0.5],
            z: vec![0.3, 0.3],
            f: vec![0.0, 0.0],
            c: 0.0,
            stop_reason: ode::StopReason::TMax,
        };
        assert!(reparameterize_time(&sparse, 0.0).is_err());
        let empty = ReducedTrajectory {
            t: vec![],
            z: vec![],
            f: vec![],
            c: 0.0,
            stop_reason: ode::StopReason::TMax,
        };
        assert!(reparameterize_time(&empty, 0.0).is_err());
    }

    #[test]
    fn acceleration_ordering_and_collapse() {
        let r = compare_acceleration(&quad(), 0.5, 0.0, 9.0, &cfg().with_t_max(1.0)).unwrap();
        for t in [0.05, 0.25, 0.5, 0.75, 1.0] {
            let i = (t / ACCEL_SPACING).round() as usize;
            assert!((r.t_grid[i] - t).abs() < 1e-12);
            assert!(r.cost_high_c[i] < r.cost_low_c[i]);
        }
        assert!(r.min_margin() > 0.0);
        assert!(r.tau_collapse_error < 1e-4, "{}", r.tau_collapse_error);
    }

    #[test]
    fn acceleration_degenerate_cases() {
        assert!(compare_acceleration(&quad(), 0.5, 9.0, 9.0, &cfg().with_t_max(1.0)).is_err());
        let r = compare_acceleration_unchecked(&quad(), 0.5, 4.0, 4.0, &cfg().with_t_max(1.0)).unwrap();
        assert!(r.margins().iter().all(|m| m.abs() < 1e-10));
        // starting at the minimizer nothing moves
        let r = compare_acceleration(&quad(), 1.0, 0.0, 9.0, &cfg().with_t_max(1.0)).unwrap();
        assert!(r.margins().iter().all(|m| *m == 0.0));
    }

    #[test]
    fn dichotomy_examples() {
        let c = cfg();
        let st = ScalarPairState::from_slices(&[0.3, -0.2], &[0.1, 0.4]).unwrap();
        let anti = ScalarPairState::from_slices(&[0.3, -0.2], &[-0.3, 0.2]).unwrap();
        let origin = ScalarPairState::from_slices(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let rep = dichotomy_experiment(&quad(), &[st, anti, origin], &c).unwrap();
        assert_eq!(rep.sign, -1.0);
        let [pos, anti, origin] = [&rep.runs[0], &rep.runs[1], &rep.runs[2]];
        assert!(!pos.anti_balanced());
        assert!(pos.final_f < 1e-6);
        assert!(anti.anti_balanced());
        assert!(anti.final_norm < 1e-4);
        assert!((anti.final_f - 1.0).abs() < 1e-6);
        assert_eq!(origin.trajectory_len, 1);
        assert_eq!(origin.final_f, 1.0);
        for r in &rep.runs {
            assert!(r.d_drift < 1e-8);
            assert!(!r.sign_flip);
            assert!(r.z_monotone);
        }
    }

    #[test]
    fn dichotomy_preconditions() {
        let inits = dichotomy_inits(&quad(), 2, 1, 1, 0).unwrap();
        let flat = ScalarCost::parse("(w^2-1)^2+w").unwrap();
        assert!(dichotomy_experiment(&flat, &inits, &cfg()).is_err());
        let already_min = ScalarCost::parse("w^2+w").unwrap();
        // f'(0) = 1 but the double well fails nowhere; f(0) = 0 > min(-1/4)
        assert!(dichotomy_experiment(&already_min, &inits, &cfg()).is_ok());
        let at_min = ScalarCost::parse("(w-0)^2").unwrap();
        assert!(dichotomy_experiment(&at_min, &inits, &cfg()).is_err());
    }

    proptest! {
        #[test]
        fn d_equals_uv_and_imbalance(seed in 0u64..5000, k in 1usize..=4) {
            let inits = dichotomy_inits(&quad(), k, 1, 0, seed).unwrap();
            let st = &inits[0];
            let d = conserved_d(st);
            prop_assert!(d >= -1e-12);
            for s in [-1.0, 1.0] {
                let uv = st.u(s).norm_squared() * st.v(s).norm_squared();
                prop_assert!((d - uv).abs() < 1e-10 * (1.0 + d));
            }
            let c = imbalance_scalar(&invariants(&st.to_stack()).unwrap()).unwrap();
            prop_assert!((c - d).abs() < 1e-10 * (1.0 + d));
        }
    }
}
