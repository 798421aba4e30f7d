//! Integrate one deep linear network toward a diagonal target and print the cost decay.
//!
//! ```bash
//! cargo run --example quadratic_flow
//! ```

use nalgebra::DMatrix;
use overparam::flow::integrate_at;
use overparam::linnet::{random_init, NetShape};
use overparam::{IntegratorConfig, MatrixCost};

fn main() -> overparam::Result<()> {
    let shape = NetShape::new(2, 4, 3)?;
    let cost = MatrixCost::quadratic(DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0]))?;
    let stack = random_init(shape, 7, 0.6)?;
    let times: Vec<f64> = (0..=10).map(|i| i as f64 * 2.0).collect();
    let traj = integrate_at(&stack, &cost, &IntegratorConfig::default().with_t_max(20.0), &times)?;

    println!("{:>6}  {:>12}  {:>12}", "t", "g(W)", "|grad g|");
    for s in &traj.samples {
        println!("{:>6.2}  {:>12.4e}  {:>12.4e}", s.t, s.cost, s.grad_norm);
    }
    println!("stop: {}", traj.stop_reason.as_str());
    println!("end-to-end product:\n{:.6}", traj.last().stack.product());
    Ok(())
}
