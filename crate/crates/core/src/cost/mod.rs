//! Objective functions.
//!
//! Two families are built in: the matrix quadratic `½‖W − W*‖²_F` and scalar
//! costs parsed from an expression in `w`. A scalar cost acts on `1×1`
//! matrices so both plug into the same flow machinery.

pub mod expr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
pub use expr::Expr;

/// A scalar cost `f(w)` with symbolic first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCost {
    source: String,
    expression: Expr,
    derivative: Expr,
    second_derivative: Expr,
    min_value: Option<f64>,
    /// Set when the expression divides; properness is then up to the user.
    pub has_division: bool,
}

/// `(f, f′, f″)` at a point, plus a flag for overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub finite: bool,
}

impl ScalarCost {
    pub fn parse(text: &str) -> Result<Self> {
        let expression = expr::parse(text)?;
        let derivative = expression.derivative();
        let second_derivative = derivative.derivative();
        Ok(Self {
            source: text.to_string(),
            has_division: expression.contains_division(),
            expression,
            derivative,
            second_derivative,
            min_value: None,
        })
    }

    pub fn with_min_value(mut self, min_value: f64) -> Self {
        self.min_value = Some(min_value);
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }
    pub fn expression(&self) -> &Expr {
        &self.expression
    }
    pub fn derivative(&self) -> &Expr {
        &self.derivative
    }
    pub fn second_derivative(&self) -> &Expr {
        &self.second_derivative
    }
    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn value(&self, w: f64) -> f64 {
        self.expression.eval(w)
    }
    pub fn d1(&self, w: f64) -> f64 {
        self.derivative.eval(w)
    }
    pub fn d2(&self, w: f64) -> f64 {
        self.second_derivative.eval(w)
    }

    pub fn eval(&self, w: f64) -> ScalarEval {
        let (value, d1, d2) = (self.value(w), self.d1(w), self.d2(w));
        ScalarEval {
            value,
            d1,
            d2,
            finite: value.is_finite() && d1.is_finite() && d2.is_finite(),
        }
    }

    /// Checks `|f′(w)| ≥ κ √(f(w) − f̲)` on a uniform grid and reports the
    /// largest admissible `κ`.
    ///
    /// `f̲` is the declared minimum value, or the grid minimum when none was
    /// declared. Critical points between grid nodes are located by bisection
    /// and checked as well. Points with `f(w) ≤ f̲ + 1e-12` are skipped.
    pub fn pdpli_check(&self, lo: f64, hi: f64, grid_points: usize) -> Result<PdpliReport> {
        if !(lo < hi) || grid_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "empty interval [{lo}, {hi}] with {grid_points} points"
            )));
        }
        let span = hi - lo;
        let last = (grid_points - 1) as f64;
        let grid: Vec<(f64, ScalarEval)> = (0..grid_points)
            .map(|i| {
                let w = lo + span * i as f64 / last;
                (w, self.eval(w))
            })
            .collect();
        let roots: Vec<(f64, ScalarEval)> = grid
            .windows(2)
            .filter(|p| p[0].1.d1 != 0.0 && p[0].1.d1.signum() != p[1].1.d1.signum())
            .map(|p| {
                let w = self.bisect_d1(p[0].0, p[1].0);
                (w, self.eval(w))
            })
            .collect();
        let floor = self.min_value.unwrap_or_else(|| {
            grid.iter()
                .chain(&roots)
                .map(|(_, e)| e.value)
                .fold(f64::INFINITY, f64::min)
        });

        let mut kappa = f64::INFINITY;
        let mut witness = None;
        for (w, e) in grid.iter().chain(&roots) {
            let gap = e.value - floor;
            if !(gap > 1e-12) {
                continue;
            }
            let ratio = e.d1.abs() / gap.sqrt();
            if ratio < kappa {
                kappa = ratio;
                witness = Some(*w);
            }
        }
        if kappa.is_infinite() {
            // every grid point sits at the floor
            return Ok(PdpliReport {
                passed: true,
                witness: None,
                alpha_scale: f64::INFINITY,
            });
        }
        let passed = kappa > PDPLI_MIN_SCALE;
        Ok(PdpliReport {
            passed,
            witness: if passed { None } else { witness },
            alpha_scale: kappa,
        })
    }
}

impl ScalarCost {
    /// Root of `f′` in `[a, b]`, given a sign change at the ends.
    fn bisect_d1(&self, mut a: f64, mut b: f64) -> f64 {
        let sa = self.d1(a).signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let dm = self.d1(m);
            if dm == 0.0 {
                return m;
            }
            if dm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        if self.d1(a).abs() <= self.d1(b).abs() {
            a
        } else {
            b
        }
    }
}

/// Scales at or below this count as "no positive κ exists".
pub const PDPLI_MIN_SCALE: f64 = 1e-10;

/// Outcome of [`ScalarCost::pdpli_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpliReport {
    pub passed: bool,
    /// Grid point with the worst ratio when the check fails.
    pub witness: Option<f64>,
    /// Largest `κ` with `|f′| ≥ κ √(f − f̲)` at every grid point.
    pub alpha_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `½‖W − target‖²_F` with a full-rank target.
    Quadratic { target: DMatrix<f64> },
    /// A scalar cost on `1×1` matrices.
    Scalar(ScalarCost),
}

/// A cost on `n×n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCost {
    pub kind: CostKind,
    pub min_value: Option<f64>,
    pub domain_note: String,
    /// True when the standing full-rank assumption could not be checked.
    pub rank_unchecked: bool,
}

impl MatrixCost {
    /// Builtin quadratic. Rejects targets whose smallest singular value is
    /// not positive (relative to the largest).
    pub fn quadratic(target: DMatrix<f64>) -> Result<Self> {
        if target.nrows() != target.ncols() || target.nrows() == 0 {
            return Err(Error::dims("square non-empty target", format!("{}x{}", target.nrows(), target.ncols())));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target entries".into()));
        }
        let sv = target.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smin > 1e-12 * smax.max(1.0)) {
            return Err(Error::RankDeficient(smin));
        }
        Ok(Self {
            kind: CostKind::Quadratic { target },
            min_value: Some(0.0),
            domain_note: "all real n x n matrices".into(),
            rank_unchecked: false,
        })
    }

    pub fn scalar(cost: ScalarCost) -> Self {
        let note = if cost.has_division {
            "real line minus poles of the expression (properness not verified)"
        } else {
            "real line"
        };
        Self {
            min_value: cost.min_value(),
            kind: CostKind::Scalar(cost),
            domain_note: note.into(),
            rank_unchecked: true,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CostKind::Quadratic { target } => target.nrows(),
            CostKind::Scalar(_) => 1,
        }
    }

    pub fn target(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            CostKind::Quadratic { target } => Some(target),
            CostKind::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<&ScalarCost> {
        match &self.kind {
            CostKind::Scalar(c) => Some(c),
            CostKind::Quadratic { .. } => None,
        }
    }

    fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        let n = self.dim();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", w.nrows(), w.ncols())));
        }
        Ok(())
    }

    pub fn eval(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        Ok(self.eval_unchecked(w))
    }

    pub fn grad(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        Ok(self.grad_unchecked(w))
    }

    pub(crate) fn eval_unchecked(&self, w: &DMatrix<f64>) -> f64 {
        match &self.kind {
            CostKind::Quadratic { target } => 0.5 * (w - target).norm_squared(),
            CostKind::Scalar(c) => c.value(w[(0, 0)]),
        }
    }

    pub(crate) fn grad_unchecked(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            CostKind::Quadratic { target } => w - target,
            CostKind::Scalar(c) => DMatrix::from_element(1, 1, c.d1(w[(0, 0)])),
        }
    }

    /// Second-order Taylor term `f″(W)[A, A]`, which carries the `½`:
    /// `f(W + A) = f(W) + ⟨∇f(W), A⟩ + f″(W)[A, A] + o(‖A‖²)`.
    pub fn second_order_term(&self, w: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        self.check(a)?;
        Ok(match &self.kind {
            CostKind::Quadratic { .. } => 0.5 * a.norm_squared(),
            CostKind::Scalar(c) => 0.5 * c.d2(w[(0, 0)]) * a[(0, 0)] * a[(0, 0)],
        })
    }
}
