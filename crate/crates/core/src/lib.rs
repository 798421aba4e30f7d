//! Gradient flows of overparameterized costs.
//!
//! A cost `f(W)` on `n×n` matrices is lifted to a deep linear network
//! `g(W_1, …, W_N) = f(W_N ⋯ W_1)` and its gradient flow is integrated.
//! The crate provides the pieces needed to study that flow numerically:
//!
//! * [`cost`]: builtin costs and a small scalar expression language with
//!   symbolic derivatives.
//! * [`linnet`]: layer stacks, the product map, per-layer gradients and
//!   initializers.
//! * [`invariant`]: the conserved imbalance matrices and drift diagnostics.
//! * [`ode`] and [`flow`]: Dormand–Prince / RK4 integration, trajectories,
//!   limit classification and seeded sweeps.
//! * [`scalarcase`]: the vector case (`n = 1`, two layers), its conserved
//!   quantity, reduced flow and time reparameterization.
//! * [`saddle`]: escape directions and Hessian certificates for spurious
//!   critical points of two-layer networks.
//! * [`sigmoid`] and [`portrait`]: the scalar sigmoidal network and phase
//!   portraits rendered to CSV and SVG.
//! * [`cli`]: the command-line front end used by the `overparam` binary.

pub mod cli;
pub mod cost;
pub mod csvio;
pub mod error;
pub mod flow;
pub mod invariant;
pub mod linnet;
pub mod ode;
pub mod portrait;
pub mod saddle;
pub mod scalarcase;
pub mod sigmoid;

pub use cost::{MatrixCost, ScalarCost};
pub use error::{Error, Result};
pub use flow::{IntegratorConfig, LimitClass, LimitLabel, Method, StopReason, Trajectory};
pub use invariant::InvariantSet;
pub use linnet::{LayerGradients, LayerStack, NetShape};
