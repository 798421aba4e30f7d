//! Explicit Runge–Kutta integration for autonomous or time-dependent
//! systems `y′ = F(t, y)`.
//!
//! Two methods are offered: Dormand–Prince 5(4) with a PI step-size
//! controller and classical fixed-step RK4. Both stop early when the field
//! norm drops below `grad_tol`, which for a gradient flow means the state has
//! reached a critical point.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rk4")]
    Rk4Fixed,
    #[serde(rename = "rk45")]
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Initial step (adaptive) or the step (fixed).
    pub h0: f64,
    pub t_max: f64,
    /// Stop once the field norm falls below this.
    pub grad_tol: f64,
    pub max_steps: usize,
    /// Keep every `record_stride`-th accepted step (first and last always).
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            rtol: 1e-10,
            atol: 1e-12,
            h0: 1e-3,
            t_max: 100.0,
            grad_tol: 1e-8,
            max_steps: 1_000_000,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h0", self.h0),
            ("t_max", self.t_max),
            ("grad_tol", self.grad_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite (got {v})")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TMax,
    MaxSteps,
    NonFinite,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::TMax => "t_max",
            StopReason::MaxSteps => "max_steps",
            StopReason::NonFinite => "non_finite",
        }
    }
}

/// Where samples are recorded.
#[derive(Debug, Clone, Copy)]
pub enum Sampling<'a> {
    /// Every `record_stride` accepted steps.
    Stride,
    /// Exactly at the given increasing times (steps are shortened to land on
    /// them); the initial point is always recorded.
    AtTimes(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    /// Field value at each recorded sample.
    pub dy: Vec<DVector<f64>>,
    pub stop: StopReason,
    pub accepted: usize,
    pub rejected: usize,
}

const SAFETY: f64 = 0.9;
const H_MIN: f64 = 1e-12;
const H_MAX: f64 = 1.0;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
// PI exponents (Hairer's dopri5 defaults).
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.04;

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct Recorder {
    out: OdeSolution,
    stride: usize,
    since: usize,
}

impl Recorder {
    fn push(&mut self, t: f64, y: &DVector<f64>, dy: &DVector<f64>) {
        if self.out.t.last().is_some_and(|last| *last == t) {
            return;
        }
        self.out.t.push(t);
        self.out.y.push(y.clone());
        self.out.dy.push(dy.clone());
        self.since = 0;
    }
}

/// Integrates `y′ = rhs(t, y)` from `t = 0`.
pub fn solve<F>(rhs: F, y0: &DVector<f64>, cfg: &IntegratorConfig, sampling: Sampling<'_>) -> Result<OdeSolution>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    if !finite(y0) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let stops: &[f64] = match sampling {
        Sampling::Stride => &[],
        Sampling::AtTimes(ts) => {
            if ts.windows(2).any(|w| !(w[0] < w[1])) || ts.iter().any(|t| !(*t >= 0.0)) {
                return Err(Error::InvalidArgument("sample times must be nonnegative and strictly increasing".into()));
            }
            ts
        }
    };
    let dense = matches!(sampling, Sampling::AtTimes(_));
    let t_end = if dense {
        stops.last().copied().unwrap_or(0.0).min(cfg.t_max)
    } else {
        cfg.t_max
    };

    let mut rec = Recorder {
        out: OdeSolution {
            t: Vec::new(),
            y: Vec::new(),
            dy: Vec::new(),
            stop: StopReason::TMax,
            accepted: 0,
            rejected: 0,
        },
        stride: cfg.record_stride,
        since: 0,
    };

    let mut t = 0.0;
    let mut y = y0.clone();
    let mut f = rhs(t, &y);
    if !finite(&f) {
        rec.out.stop = StopReason::NonFinite;
        rec.push(t, &y, &DVector::zeros(y.len()));
        return Ok(rec.out);
    }
    rec.push(t, &y, &f);
    if f.norm() < cfg.grad_tol {
        rec.out.stop = StopReason::Converged;
        return Ok(rec.out);
    }
    let mut next_stop = stops.iter().position(|s| *s > t);

    let mut h = cfg.h0.clamp(H_MIN, H_MAX);
    let mut err_prev: f64 = 1e-4;

    loop {
        if t >= t_end {
            rec.out.stop = StopReason::TMax;
            break;
        }
        if rec.out.accepted >= cfg.max_steps {
            rec.out.stop = StopReason::MaxSteps;
            break;
        }
        // land exactly on the next sample time / end time
        let mut target = t_end;
        if let Some(i) = next_stop {
            target = target.min(stops[i]);
        }
        let remaining = target - t;
        let fixed = cfg.method == Method::Rk4Fixed;
        let mut step = if fixed { cfg.h0 } else { h };
        let mut hits_target = false;
        if step >= remaining * (1.0 - 1e-12) {
            step = remaining;
            hits_target = true;
        }

        let (y_new, f_new, err) = match cfg.method {
            Method::Rk45Adaptive => dopri_step(&rhs, t, &y, &f, step, cfg),
            Method::Rk4Fixed => {
                let (yn, fnew) = rk4_step(&rhs, t, &y, &f, step);
                (yn, fnew, 0.0)
            }
        };

        if !finite(&y_new) || !finite(&f_new) || !err.is_finite() {
            if !fixed && step > H_MIN && finite(&y_new) {
                // error estimate overflowed; shrink
                h = (step * FAC_MIN).max(H_MIN);
                rec.out.rejected += 1;
                continue;
            }
            rec.out.stop = StopReason::NonFinite;
            break;
        }

        if !fixed && err > 1.0 && step > H_MIN {
            let fac = (SAFETY * err.powf(-PI_ALPHA)).clamp(FAC_MIN, 1.0);
            h = (step * fac).max(H_MIN);
            rec.out.rejected += 1;
            continue;
        }

        // accepted
        t = if hits_target { target } else { t + step };
        y = y_new;
        f = f_new;
        rec.out.accepted += 1;
        rec.since += 1;

        if !fixed {
            let e = err.max(1e-10);
            let fac = (SAFETY * e.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(FAC_MIN, FAC_MAX);
            err_prev = e;
            // a step shortened to hit a sample time should not shrink the next one
            let base = if hits_target { h.max(step) } else { step };
            h = (base * fac).clamp(H_MIN, H_MAX);
        }

        let at_stop = next_stop.is_some_and(|i| hits_target && target == stops[i]);
        if at_stop {
            rec.push(t, &y, &f);
            let i = next_stop.unwrap();
            next_stop = (i + 1 < stops.len()).then_some(i + 1);
        } else if !dense && rec.since >= rec.stride {
            rec.push(t, &y, &f);
        }

        if f.norm() < cfg.grad_tol {
            rec.out.stop = StopReason::Converged;
            break;
        }
    }
    rec.push(t, &y, &f);
    Ok(rec.out)
}

fn dopri_step<F>(
    rhs: &F,
    t: f64,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
    cfg: &IntegratorConfig,
) -> (DVector<f64>, DVector<f64>, f64)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = rhs(t + C2 * h, &(y + k1 * (h * A21)));
    let k3 = rhs(t + C3 * h, &(y + (k1 * A31 + &k2 * A32) * h));
    let k4 = rhs(t + C4 * h, &(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h));
    let k5 = rhs(t + C5 * h, &(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
    let k6 = rhs(t + h, &(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
    let y_new = y + (k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
    let k7 = rhs(t + h, &y_new);
    let err_vec = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
    let n = y.len().max(1) as f64;
    let sum: f64 = err_vec
        .iter()
        .zip(y.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (y_new, k7, (sum / n).sqrt())
}

fn rk4_step<F>(rhs: &F, t: f64, y: &DVector<f64>, k1: &DVector<f64>, h: f64) -> (DVector<f64>, DVector<f64>)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = rhs(t + 0.5 * h, &(y + k1 * (0.5 * h)));
    let k3 = rhs(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = rhs(t + h, &(y + &k3 * h));
    let y_new = y + (k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
    let f_new = rhs(t + h, &y_new);
    (y_new, f_new)
}
