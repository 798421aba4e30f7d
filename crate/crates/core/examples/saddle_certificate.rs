//! Certify that the origin of a two-layer network is a strict saddle and escape from it.
//!
//! ```bash
//! cargo run --example saddle_certificate
//! ```

use nalgebra::DMatrix;
use overparam::linnet::{LayerStack, NetShape};
use overparam::saddle::{certify_strict_saddle, realize_escape};
use overparam::{IntegratorConfig, MatrixCost};

fn main() -> overparam::Result<()> {
    let shape = NetShape::new(2, 3, 2)?;
    let origin = LayerStack::zeros(shape);
    let cost = MatrixCost::quadratic(DMatrix::identity(2, 2))?;

    let cert = certify_strict_saddle(&origin, &cost)?;
    println!("strict saddle: {}", cert.is_strict_saddle);
    println!("curvature along the escape direction: {:.6}", cert.curvature);
    println!("smallest Hessian eigenvalue: {:.6}", cert.min_eig);
    println!("admissible step bound: {:.4}", cert.q_bar);

    let run = realize_escape(&origin, &cost, &cert.direction, 1e-3, &IntegratorConfig::default().with_t_max(10.0))?;
    println!(
        "g at saddle {:.6}, after the kick {:.6}, at t = {:.1}: {:.3e}",
        run.g_saddle, run.g_start, run.t_end, run.g_end
    );
    Ok(())
}
