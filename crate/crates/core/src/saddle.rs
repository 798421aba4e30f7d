//! Second-order analysis of two-layer stacks at spurious critical points.
//!
//! For `g(W_1, W_2) = f(W_2 W_1)` and a direction `(M_1, M_2)` the second
//! variation is `⟨∇f(W̄), M_2 M_1⟩ + f″(W̄)[A, A]` with
//! `A = W_2 M_1 + M_2 W_1`, where `f″[A, A]` carries the factor `½` of the
//! Taylor expansion. At a critical point of `g` whose product is not
//! critical for `f`, the direction `M_1 = −γφᵀ q²`, `M_2 = ψγᵀ q` built from
//! a singular pair `(ψ, φ)` of `∇f(W̄)` and a unit `γ` with `γᵀW_1 = 0` has
//! curvature `−σq³ + bq⁴`, negative for small `q`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::cost::MatrixCost;
use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig};
use crate::linnet::{overparam_cost, LayerStack};

/// `‖∇g‖_F` below this counts as a critical point of `g`.
pub const CRITICAL_TOL: f64 = 1e-8;
/// `‖∇f(W̄)‖_F` above this counts as non-critical for `f`.
pub const NONCRITICAL_TOL: f64 = 1e-6;
/// `‖γᵀW_1‖` below this counts as a kernel vector.
pub const KERNEL_TOL: f64 = 1e-8;
pub const CURVATURE_THRESHOLD: f64 = -1e-10;
pub const EIGEN_THRESHOLD: f64 = -1e-6;
pub const DEFAULT_FD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleCertificate {
    /// `(M_1, M_2)` stored with the shapes of `(W_1, W_2)`.
    pub direction: LayerStack,
    pub curvature: f64,
    pub q_bar: f64,
    pub min_eig: f64,
    pub is_strict_saddle: bool,
}

/// The constructed escape direction and the quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeDirection {
    pub direction: LayerStack,
    pub q: f64,
    pub q_bar: f64,
    pub sigma: f64,
    pub b: f64,
    pub curvature: f64,
    pub psi: DVector<f64>,
    pub phi: DVector<f64>,
    pub gamma: DVector<f64>,
}

fn require_two_layers(stack: &LayerStack) -> Result<()> {
    if stack.depth() != 2 {
        return Err(Error::InvalidArgument(format!(
            "second-order analysis supports depth 2 only (got {})",
            stack.depth()
        )));
    }
    Ok(())
}

/// `⟨∇f(W̄), M_2 M_1⟩ + f″(W̄)[A, A]` with `A = W_2 M_1 + M_2 W_1`.
pub fn hessian_quadratic_form(stack: &LayerStack, cost: &MatrixCost, m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<f64> {
    require_two_layers(stack)?;
    let (w1, w2) = (stack.layer(1), stack.layer(2));
    if m1.shape() != w1.shape() {
        return Err(Error::dims(format!("{:?}", w1.shape()), format!("{:?}", m1.shape())));
    }
    if m2.shape() != w2.shape() {
        return Err(Error::dims(format!("{:?}", w2.shape()), format!("{:?}", m2.shape())));
    }
    let product = stack.product();
    let a = w2 * m1 + m2 * w1;
    let b = m2 * m1;
    let grad = cost.grad(&product)?;
    Ok(grad.dot(&b) + cost.second_order_term(&product, &a)?)
}

/// Unit `γ` minimizing `‖γᵀW_1‖`.
fn left_kernel_vector(w1: &DMatrix<f64>) -> Result<DVector<f64>> {
    let gram = w1 * w1.transpose();
    let eig = SymmetricEigen::new(gram);
    let i = eig.eigenvalues.imin();
    let mut gamma = eig.eigenvectors.column(i).into_owned();
    gamma /= gamma.norm();
    let residual = (w1.transpose() * &gamma).norm();
    if !(residual < KERNEL_TOL) {
        return Err(Error::Inconsistent(format!(
            "W_1 has no left kernel (smallest ‖γᵀW_1‖ = {residual:e})"
        )));
    }
    Ok(gamma)
}

fn scaled_direction(stack: &LayerStack, psi: &DVector<f64>, phi: &DVector<f64>, gamma: &DVector<f64>, q: f64) -> Result<LayerStack> {
    let m1 = -(gamma * phi.transpose()) * (q * q);
    let m2 = (psi * gamma.transpose()) * q;
    LayerStack::new(stack.shape(), vec![m1, m2])
}

fn check_spurious_critical(stack: &LayerStack, cost: &MatrixCost) -> Result<DMatrix<f64>> {
    require_two_layers(stack)?;
    let grad_g = stack.layer_gradients(cost)?.norm();
    if !(grad_g < CRITICAL_TOL) {
        return Err(Error::Precondition(format!(
            "not a critical point of g (‖∇g‖ = {grad_g:e})"
        )));
    }
    let grad_f = cost.grad(&stack.product())?;
    if !(grad_f.norm() > NONCRITICAL_TOL) {
        return Err(Error::Precondition(format!(
            "product is critical for f (‖∇f‖ = {:e}); not a spurious saddle",
            grad_f.norm()
        )));
    }
    Ok(grad_f)
}

/// Builds the escape direction at a critical point of `g` whose product is
/// not critical for `f`.
pub fn escape_direction(stack: &LayerStack, cost: &MatrixCost) -> Result<EscapeDirection> {
    let grad_f = check_spurious_critical(stack, cost)?;
    let svd = grad_f.svd(true, true);
    let i = svd.singular_values.imax();
    let sigma = svd.singular_values[i];
    let psi = svd.u.as_ref().expect("u requested").column(i).into_owned();
    let phi = svd.v_t.as_ref().expect("v_t requested").row(i).transpose();
    let gamma = left_kernel_vector(stack.layer(1))?;

    let form_at = |q: f64| -> Result<f64> {
        let d = scaled_direction(stack, &psi, &phi, &gamma, q)?;
        hessian_quadratic_form(stack, cost, d.layer(1), d.layer(2))
    };
    // form(q)/q³ = −σ + b q
    let (q1, q2) = (0.5, 1.0);
    let b = (form_at(q2)? / q2.powi(3) - form_at(q1)? / q1.powi(3)) / (q2 - q1);
    let b = if b.abs() <= 1e-12 * sigma.max(1.0) { 0.0 } else { b };
    let q_bar = if b == 0.0 { 1.0 } else { sigma / (2.0 * b.abs()) };
    let q = (q_bar / 2.0).min(1.0);
    let direction = scaled_direction(stack, &psi, &phi, &gamma, q)?;
    let curvature = hessian_quadratic_form(stack, cost, direction.layer(1), direction.layer(2))?;
    Ok(EscapeDirection {
        direction,
        q,
        q_bar,
        sigma,
        b,
        curvature,
        psi,
        phi,
        gamma,
    })
}

impl EscapeDirection {
    /// The direction rebuilt at another scale `q`.
    pub fn at_scale(&self, stack: &LayerStack, q: f64) -> Result<LayerStack> {
        scaled_direction(stack, &self.psi, &self.phi, &self.gamma, q)
    }
}

/// Central-difference Hessian of `g` in the flattened `(vec W_1, vec W_2)`
/// coordinates, symmetrized.
pub fn assemble_hessian(stack: &LayerStack, cost: &MatrixCost, eps: f64) -> Result<DMatrix<f64>> {
    require_two_layers(stack)?;
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let shape = stack.shape();
    let x0 = stack.to_vector();
    let dim = x0.len();
    let g = |x: &DVector<f64>| -> Result<f64> { overparam_cost(&LayerStack::from_slice(shape, x.as_slice())?, cost) };
    let g2 = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        let mut x = x0.clone();
        x[i] += si * eps;
        x[j] += sj * eps;
        g(&x)
    };
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let v = g2(i, 1.0, j, 1.0)? - g2(i, 1.0, j, -1.0)? - g2(i, -1.0, j, 1.0)? + g2(i, -1.0, j, -1.0)?;
                    Ok(v / (4.0 * eps * eps))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let h = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian entry".into()));
    }
    Ok((&h + h.transpose()) * 0.5)
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.min()
}

/// Escape direction curvature plus the assembled Hessian's spectrum.
pub fn certify_strict_saddle(stack: &LayerStack, cost: &MatrixCost) -> Result<SaddleCertificate> {
    let esc = escape_direction(stack, cost)?;
    let min_eig = min_eigenvalue(&assemble_hessian(stack, cost, DEFAULT_FD_EPS)?);
    Ok(SaddleCertificate {
        is_strict_saddle: esc.curvature < CURVATURE_THRESHOLD && min_eig < EIGEN_THRESHOLD,
        direction: esc.direction,
        curvature: esc.curvature,
        q_bar: esc.q_bar,
        min_eig,
    })
}

/// `g` at the saddle and at the end of a flow started from
/// `saddle + scale · direction` and run for `t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeRun {
    pub g_saddle: f64,
    pub g_start: f64,
    pub g_end: f64,
    pub t_end: f64,
}

impl EscapeRun {
    pub fn escaped(&self) -> bool {
        self.g_end < self.g_saddle
    }
}

pub fn realize_escape(
    stack: &LayerStack,
    cost: &MatrixCost,
    direction: &LayerStack,
    scale: f64,
    cfg: &IntegratorConfig,
) -> Result<EscapeRun> {
    let layers = stack
        .layers()
        .iter()
        .zip(direction.layers())
        .map(|(w, m)| w + m * scale)
        .collect();
    let start = LayerStack::new(stack.shape(), layers)?;
    let traj = flow::integrate(&start, cost, cfg)?;
    Ok(EscapeRun {
        g_saddle: overparam_cost(stack, cost)?,
        g_start: traj.first().cost,
        g_end: traj.last().cost,
        t_end: traj.last().t,
    })
}
