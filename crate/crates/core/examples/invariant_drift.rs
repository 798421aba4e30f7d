//! Track the layer invariants `W_i W_iᵀ − W_{i+1}ᵀ W_{i+1}` along a trajectory.
//!
//! ```bash
//! cargo run --example invariant_drift
//! ```

use nalgebra::DMatrix;
use overparam::flow::integrate;
use overparam::invariant::{deviation, invariants, norm_chain_residual};
use overparam::linnet::{random_init, NetShape};
use overparam::{IntegratorConfig, MatrixCost};

fn main() -> overparam::Result<()> {
    let shape = NetShape::new(3, 5, 4)?;
    let cost = MatrixCost::quadratic(DMatrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.2 }))?;
    let stack = random_init(shape, 11, 0.8)?;
    let inv0 = invariants(&stack)?;
    println!("traces of C_i at t = 0: {:?}", inv0.traces);

    let traj = integrate(&stack, &cost, &IntegratorConfig::default().with_t_max(50.0))?;
    for s in traj.samples.iter().step_by((traj.samples.len() / 8).max(1)) {
        let dev = deviation(&invariants(&s.stack)?, &inv0);
        let chain = norm_chain_residual(&s.stack, &inv0)?.into_iter().fold(0.0, f64::max);
        println!("t = {:>8.3}  drift {:.2e}  norm-chain residual {:.2e}", s.t, dev, chain);
    }
    println!("max drift over {} samples: {:.2e}", traj.samples.len(), traj.drift()?);
    Ok(())
}
