//! Gradient flows of the baseline cost `f` and the overparameterized cost
//! `g`, trajectory records and limit classification.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::MatrixCost;
use crate::error::{Error, Result};
use crate::invariant;
use crate::linnet::{random_init, LayerStack, NetShape};
use crate::ode::{self, Sampling};

pub use crate::ode::{IntegratorConfig, Method, StopReason};

/// Default threshold on `‖∇f(W̄)‖_F` for calling a limit a critical point of `f`.
pub const DEFAULT_TOL_F: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub stack: LayerStack,
    pub cost: f64,
    /// `‖∇g‖_F` (or `‖∇f‖_F` for the baseline flow).
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stop_reason: StopReason,
    pub config: IntegratorConfig,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories are never empty")
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    /// Largest increase of the cost between consecutive samples (zero when
    /// the sequence is non-increasing).
    pub fn max_cost_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].cost - w[0].cost)
            .fold(0.0, f64::max)
    }

    pub fn cost_non_increasing(&self, slack: f64) -> bool {
        self.max_cost_increase() <= slack
    }

    /// Normalized invariant drift, `max_{t,i} ‖C_i(t) − C_i(0)‖_F / (1 + ‖C_i(0)‖_F)`.
    pub fn drift(&self) -> Result<f64> {
        invariant::drift_of(self.samples.iter().map(|s| &s.stack))
    }

    /// Largest norm-chain residual over all samples, relative to the first.
    pub fn max_chain_residual(&self) -> Result<f64> {
        let first = &self.first().stack;
        if first.depth() < 2 {
            return Ok(0.0);
        }
        let inv0 = invariant::invariants(first)?;
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            for r in invariant::norm_chain_residual(&s.stack, &inv0)? {
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }
}

/// Drift of a trajectory; errors on an empty sample list.
pub fn drift(traj: &Trajectory) -> Result<f64> {
    if traj.samples.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    traj.drift()
}

fn field(stack: &LayerStack, cost: &MatrixCost) -> Result<DVector<f64>> {
    if stack.depth() == 1 {
        let g = cost.grad(stack.layer(1))?;
        return Ok(-DVector::from_column_slice(g.as_slice()));
    }
    let grads = stack.layer_gradients(cost)?;
    let mut v = Vec::with_capacity(stack.shape().num_params());
    for g in &grads.layers {
        v.extend(g.iter().map(|x| -x));
    }
    Ok(DVector::from_vec(v))
}

fn run(stack0: &LayerStack, cost: &MatrixCost, cfg: &IntegratorConfig, sampling: Sampling<'_>) -> Result<Trajectory> {
    let shape = stack0.shape();
    if cost.dim() != shape.n {
        return Err(Error::dims(format!("cost on {0}x{0}", shape.n), format!("cost on {0}x{0}", cost.dim())));
    }
    // validates dimensions once, outside the hot loop
    field(stack0, cost)?;
    let rhs = |_t: f64, y: &DVector<f64>| {
        let s = LayerStack::from_slice(shape, y.as_slice()).expect("state length fixed by shape");
        field(&s, cost).expect("dimensions checked")
    };
    let sol = ode::solve(rhs, &stack0.to_vector(), cfg, sampling)?;
    let samples = sol
        .t
        .iter()
        .zip(&sol.y)
        .zip(&sol.dy)
        .map(|((t, y), dy)| {
            let stack = LayerStack::from_slice(shape, y.as_slice()).expect("state length fixed by shape");
            let cost = cost.eval_unchecked(&stack.product());
            Sample {
                t: *t,
                stack,
                cost,
                grad_norm: dy.norm(),
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        stop_reason: sol.stop,
        config: *cfg,
    })
}

/// Integrates `Ẇ_i = −∇_{W_i} g` from `stack0`.
pub fn integrate(stack0: &LayerStack, cost: &MatrixCost, cfg: &IntegratorConfig) -> Result<Trajectory> {
    run(stack0, cost, cfg, Sampling::Stride)
}

/// As [`integrate`], recording exactly at `times` (plus `t = 0`).
pub fn integrate_at(stack0: &LayerStack, cost: &MatrixCost, cfg: &IntegratorConfig, times: &[f64]) -> Result<Trajectory> {
    run(stack0, cost, cfg, Sampling::AtTimes(times))
}

/// The baseline flow `Ẇ = −∇f(W)`, stored as depth-one stacks.
pub fn integrate_baseline(w0: &DMatrix<f64>, cost: &MatrixCost, cfg: &IntegratorConfig) -> Result<Trajectory> {
    run(&LayerStack::single(w0.clone())?, cost, cfg, Sampling::Stride)
}

pub fn integrate_baseline_at(
    w0: &DMatrix<f64>,
    cost: &MatrixCost,
    cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<Trajectory> {
    run(&LayerStack::single(w0.clone())?, cost, cfg, Sampling::AtTimes(times))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitLabel {
    CriticalOfF,
    SpuriousCriticalOfG,
    Undecided,
}

impl LimitLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitLabel::CriticalOfF => "critical_of_f",
            LimitLabel::SpuriousCriticalOfG => "spurious_critical_of_g",
            LimitLabel::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitClass {
    pub label: LimitLabel,
    pub grad_f_norm: f64,
    pub grad_g_norm: f64,
    pub note: Option<String>,
}

/// Classifies the last sample of a trajectory.
///
/// `critical_of_f` when `‖∇f(W̄)‖_F < tol_f`; `spurious_critical_of_g` when
/// only `‖∇g‖_F` is below the run's `grad_tol`; `undecided` otherwise.
pub fn detect_convergence(traj: &Trajectory, cost: &MatrixCost, tol_f: f64) -> LimitClass {
    let last = traj.last();
    let grad_f_norm = cost
        .grad(&last.stack.product())
        .map(|g| g.norm())
        .unwrap_or(f64::NAN);
    let grad_g_norm = last.grad_norm;
    let label = if grad_f_norm < tol_f {
        LimitLabel::CriticalOfF
    } else if grad_g_norm < traj.config.grad_tol {
        LimitLabel::SpuriousCriticalOfG
    } else {
        LimitLabel::Undecided
    };
    let note = (traj.stop_reason == StopReason::NonFinite).then(|| "state became non-finite".to_string());
    LimitClass {
        label,
        grad_f_norm,
        grad_g_norm,
        note,
    }
}

/// Runs one trajectory per seed from [`random_init`] and classifies each
/// limit. Runs execute in parallel; output order follows `seeds`.
pub fn sweep(shape: NetShape, cost: &MatrixCost, cfg: &IntegratorConfig, seeds: &[u64], scale: f64) -> Vec<LimitClass> {
    seeds
        .par_iter()
        .map(|&seed| {
            let traj = random_init(shape, seed, scale).and_then(|s| integrate(&s, cost, cfg));
            match traj {
                Ok(t) => detect_convergence(&t, cost, DEFAULT_TOL_F),
                Err(e) => LimitClass {
                    label: LimitLabel::Undecided,
                    grad_f_norm: f64::NAN,
                    grad_g_norm: f64::NAN,
                    note: Some(format!("seed {seed}: {e}")),
                },
            }
        })
        .collect()
}

/// Same as [`sweep`] for explicitly supplied initial stacks.
pub fn sweep_stacks(stacks: &[LayerStack], cost: &MatrixCost, cfg: &IntegratorConfig) -> Vec<LimitClass> {
    stacks
        .par_iter()
        .map(|s| match integrate(s, cost, cfg) {
            Ok(t) => detect_convergence(&t, cost, DEFAULT_TOL_F),
            Err(e) => LimitClass {
                label: LimitLabel::Undecided,
                grad_f_norm: f64::NAN,
                grad_g_norm: f64::NAN,
                note: Some(e.to_string()),
            },
        })
        .collect()
}
