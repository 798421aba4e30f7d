//! Classify the limits of many random initializations.
//!
//! ```bash
//! cargo run --release --example sweep_convergence
//! ```

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use overparam::flow::{sweep, DEFAULT_TOL_F};
use overparam::linnet::NetShape;
use overparam::{IntegratorConfig, MatrixCost};

fn main() -> overparam::Result<()> {
    let shape = NetShape::new(2, 4, 2)?;
    let cost = MatrixCost::quadratic(DMatrix::identity(2, 2))?;
    let seeds: Vec<u64> = (0..100).collect();
    let classes = sweep(shape, &cost, &IntegratorConfig::default().with_t_max(500.0), &seeds, 0.5);

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &classes {
        *counts.entry(c.label.as_str()).or_default() += 1;
    }
    for (label, n) in &counts {
        println!("{label:<24} {n}");
    }
    let worst = classes.iter().map(|c| c.grad_f_norm).fold(0.0, f64::max);
    println!("largest |grad f| at a limit: {worst:.2e} (tolerance {DEFAULT_TOL_F:.0e})");
    Ok(())
}
