//! A two-parameter sigmoidal network `g(w_1, w_2) = (1 − w_2 σ(w_1))²` with
//! `σ(z) = z/√(1 + z²)`.
//!
//! Its flow conserves `C = w_2² − ½(1 + w_1²)²`. The level `C = −½` through
//! the saddle at the origin is the union of its stable and unstable
//! manifolds, `w_2 = ±w_1 √((2 + w_1²)/2)`.

use nalgebra::{DVector, Matrix2};

use crate::error::{Error, Result};
use crate::ode::{self, IntegratorConfig, Sampling, StopReason};

pub fn sigma(z: f64) -> f64 {
    z / (1.0 + z * z).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigState {
    pub w1: f64,
    pub w2: f64,
}

impl SigState {
    pub fn new(w1: f64, w2: f64) -> Self {
        Self { w1, w2 }
    }

    pub fn norm(&self) -> f64 {
        self.w1.hypot(self.w2)
    }

    fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.w1, self.w2])
    }

    fn from_vector(v: &DVector<f64>) -> Self {
        Self::new(v[0], v[1])
    }
}

/// The right-hand side
/// `ẇ_1 = (w_2 √(1+w_1²) − w_2² w_1)/(1+w_1²)²`,
/// `ẇ_2 = (w_1 √(1+w_1²) − w_2 w_1²)/(1+w_1²)`.
pub fn sig_flow_field(s: SigState) -> (f64, f64) {
    let q = 1.0 + s.w1 * s.w1;
    let r = q.sqrt();
    (
        (s.w2 * r - s.w2 * s.w2 * s.w1) / (q * q),
        (s.w1 * r - s.w2 * s.w1 * s.w1) / q,
    )
}

/// `C = w_2² − ½(1 + w_1²)²`.
pub fn sig_invariant(s: SigState) -> f64 {
    let q = 1.0 + s.w1 * s.w1;
    s.w2 * s.w2 - 0.5 * q * q
}

/// Level of [`sig_invariant`] through the origin.
pub const SADDLE_LEVEL: f64 = -0.5;

/// `g = (1 − w_2 σ(w_1))²`.
pub fn sig_cost(s: SigState) -> f64 {
    let r = 1.0 - s.w2 * sigma(s.w1);
    r * r
}

/// `(w_2⁺, w_2⁻) = ±w_1 √((2 + w_1²)/2)`.
pub fn manifold_curve(w1: f64) -> (f64, f64) {
    let v = w1 * ((2.0 + w1 * w1) / 2.0).sqrt();
    (v, -v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<SigState>,
    pub invariant: Vec<f64>,
    pub cost: Vec<f64>,
    pub stop_reason: StopReason,
}

impl SigTrajectory {
    /// `max_t |C(t) − C(0)|`.
    pub fn invariant_drift(&self) -> f64 {
        let c0 = self.invariant[0];
        self.invariant.iter().map(|c| (c - c0).abs()).fold(0.0, f64::max)
    }

    pub fn last(&self) -> SigState {
        *self.states.last().expect("non-empty")
    }
}

fn field_vec(_t: f64, y: &DVector<f64>) -> DVector<f64> {
    let (a, b) = sig_flow_field(SigState::from_vector(y));
    DVector::from_vec(vec![a, b])
}

fn reversed_field_vec(_t: f64, y: &DVector<f64>) -> DVector<f64> {
    -field_vec(0.0, y)
}

fn to_trajectory(sol: ode::OdeSolution) -> SigTrajectory {
    let states: Vec<SigState> = sol.y.iter().map(SigState::from_vector).collect();
    SigTrajectory {
        invariant: states.iter().map(|s| sig_invariant(*s)).collect(),
        cost: states.iter().map(|s| sig_cost(*s)).collect(),
        t: sol.t,
        states,
        stop_reason: sol.stop,
    }
}

/// Integrates the printed field from `state0`.
pub fn sig_integrate(state0: SigState, cfg: &IntegratorConfig) -> Result<SigTrajectory> {
    let sol = ode::solve(field_vec, &state0.to_vector(), cfg, Sampling::Stride)?;
    Ok(to_trajectory(sol))
}

/// As [`sig_integrate`], sampled exactly at `times`.
pub fn sig_integrate_at(state0: SigState, cfg: &IntegratorConfig, times: &[f64]) -> Result<SigTrajectory> {
    let sol = ode::solve(field_vec, &state0.to_vector(), cfg, Sampling::AtTimes(times))?;
    Ok(to_trajectory(sol))
}

/// Eigen-pair of the linearized field at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit vector with nonnegative first component.
    pub vector: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub jacobian: Matrix2<f64>,
    pub unstable: EigenPair,
    pub stable: EigenPair,
}

/// Central-difference Jacobian of the field at the origin and its two real
/// eigen-pairs.
pub fn origin_linearization() -> Result<Linearization> {
    let h = 1e-6;
    let col = |d: SigState| {
        let (p1, p2) = sig_flow_field(d);
        let (m1, m2) = sig_flow_field(SigState::new(-d.w1, -d.w2));
        ((p1 - m1) / (2.0 * h), (p2 - m2) / (2.0 * h))
    };
    let (a, c) = col(SigState::new(h, 0.0));
    let (b, d) = col(SigState::new(0.0, h));
    let jacobian = Matrix2::new(a, b, c, d);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr / 4.0 - det;
    if !(disc > 0.0) || !(det < 0.0) {
        return Err(Error::Inconsistent(format!("origin is not a hyperbolic saddle (jacobian {jacobian:?})")));
    }
    let pair = |lambda: f64| {
        // (J − λI) v = 0
        let (x, y) = if b.abs() > (a - lambda).abs() { (b, lambda - a) } else { (lambda - d, c) };
        let n = x.hypot(y);
        let s = if x < 0.0 { -1.0 } else { 1.0 };
        EigenPair {
            value: lambda,
            vector: (s * x / n, s * y / n),
        }
    };
    Ok(Linearization {
        jacobian,
        unstable: pair(tr / 2.0 + disc.sqrt()),
        stable: pair(tr / 2.0 - disc.sqrt()),
    })
}

/// Side of the origin a separatrix leaves on: `Plus` starts with `w_1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// `Forward` follows the unstable manifold in forward time; `Backward`
/// follows the stable manifold in reversed time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Distance from the origin of the first point.
    pub eps: f64,
    /// Tracing stops once `max(|w_1|, |w_2|)` exceeds this.
    pub bound: f64,
    /// Length of each integration segment.
    pub segment: f64,
    /// Upper limit on the traced time.
    pub t_limit: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            bound: 4.0,
            segment: 1.0,
            t_limit: 500.0,
        }
    }
}

/// A numerically traced separatrix, ordered away from the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Separatrix {
    pub branch: Branch,
    pub direction: Direction,
    pub points: Vec<SigState>,
}

/// Traces a stable or unstable manifold of the origin from `±eps` along the
/// corresponding eigenvector.
pub fn separatrix_trace(branch: Branch, direction: Direction, cfg: &IntegratorConfig, opts: &TraceOptions) -> Result<Separatrix> {
    if !(opts.eps > 0.0 && opts.bound > 0.0 && opts.segment > 0.0 && opts.t_limit > 0.0) {
        return Err(Error::InvalidArgument("trace options must be positive".into()));
    }
    let lin = origin_linearization()?;
    let pair = match direction {
        Direction::Forward => lin.unstable,
        Direction::Backward => lin.stable,
    };
    let side = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    let start = SigState::new(side * opts.eps * pair.vector.0, side * opts.eps * pair.vector.1);
    let seg_cfg = IntegratorConfig {
        t_max: opts.segment,
        ..*cfg
    };
    let mut points = vec![start];
    let mut y = start.to_vector();
    let mut elapsed = 0.0;
    let outside = |s: &SigState| s.w1.abs().max(s.w2.abs()) > opts.bound;
    while elapsed < opts.t_limit {
        let sol = match direction {
            Direction::Forward => ode::solve(field_vec, &y, &seg_cfg, Sampling::Stride)?,
            Direction::Backward => ode::solve(reversed_field_vec, &y, &seg_cfg, Sampling::Stride)?,
        };
        if sol.stop == StopReason::NonFinite {
            return Err(Error::NonFinite("separatrix trace".into()));
        }
        for v in sol.y.iter().skip(1) {
            let s = SigState::from_vector(v);
            points.push(s);
            if outside(&s) {
                return Ok(Separatrix { branch, direction, points });
            }
        }
        if sol.stop != StopReason::TMax {
            break;
        }
        y = sol.y.last().expect("non-empty").clone();
        elapsed += opts.segment;
    }
    Ok(Separatrix { branch, direction, points })
}

impl Separatrix {
    /// `w_2` at the given `w_1` by cubic Hermite interpolation, using the
    /// field for slopes. `None` when the trace never reaches `w_1`.
    pub fn w2_at(&self, w1: f64) -> Option<f64> {
        self.points.windows(2).find_map(|p| {
            let (a, b) = (p[0], p[1]);
            let inside = (a.w1 - w1) * (b.w1 - w1) <= 0.0 && a.w1 != b.w1;
            inside.then(|| hermite(a, b, w1))
        })
    }

    /// Largest `|C + ½|` along the trace.
    pub fn level_error(&self) -> f64 {
        self.points
            .iter()
            .map(|s| (sig_invariant(*s) - SADDLE_LEVEL).abs())
            .fold(0.0, f64::max)
    }
}

fn slope(s: SigState) -> f64 {
    let (d1, d2) = sig_flow_field(s);
    d2 / d1
}

fn hermite(a: SigState, b: SigState, w1: f64) -> f64 {
    let h = b.w1 - a.w1;
    let t = (w1 - a.w1) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * a.w2 + h10 * h * slope(a) + h01 * b.w2 + h11 * h * slope(b)
}

/// Formula value of the manifold traced by `(branch, direction)` at `w_1`.
pub fn manifold_value(direction: Direction, w1: f64) -> f64 {
    let (plus, minus) = manifold_curve(w1);
    match direction {
        Direction::Forward => plus,
        Direction::Backward => minus,
    }
}

/// Largest `|w_2^traced − w_2^formula|` over `w1s` on both sides of the
/// origin for the stable manifold.
pub fn separatrix_deviation(cfg: &IntegratorConfig, w1s: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for branch in [Branch::Plus, Branch::Minus] {
        let trace = separatrix_trace(branch, Direction::Backward, cfg, &TraceOptions::default())?;
        let side = if branch == Branch::Plus { 1.0 } else { -1.0 };
        for &w1 in w1s {
            let w1 = side * w1;
            let traced = trace
                .w2_at(w1)
                .ok_or_else(|| Error::Precondition(format!("trace does not reach w1 = {w1}")))?;
            worst = worst.max((traced - manifold_value(Direction::Backward, w1)).abs());
        }
    }
    Ok(worst)
}

/// Abscissae used for the separatrix check.
pub const SEPARATRIX_CHECK_POINTS: [f64; 3] = [0.25, 0.5, 1.0];
