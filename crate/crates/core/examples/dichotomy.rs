//! Vector case: initializations off the balanced-against-the-gradient line reach the
//! minimum, those on it collapse to the origin.
//!
//! ```bash
//! cargo run --example dichotomy
//! ```

use overparam::scalarcase::{dichotomy_experiment, dichotomy_inits};
use overparam::{IntegratorConfig, ScalarCost};

fn main() -> overparam::Result<()> {
    let cost = ScalarCost::parse("(1-w)^2")?;
    let inits = dichotomy_inits(&cost, 3, 8, 3, 42)?;
    let report = dichotomy_experiment(&cost, &inits, &IntegratorConfig::default().with_t_max(200.0))?;

    println!("{:>4}  {:>10}  {:>12}  {:>12}  {:>10}", "run", "d(0)", "final f", "final |w|", "D drift");
    for (i, r) in report.runs.iter().enumerate() {
        println!(
            "{i:>4}  {:>10.3e}  {:>12.4e}  {:>12.4e}  {:>10.2e}",
            r.d0, r.final_f, r.final_norm, r.d_drift
        );
    }
    let (pos, pos_n) = report.positive_ok(1e-6);
    let (anti, anti_n) = report.anti_ok(1e-6);
    println!("d > 0 reaching the minimum: {pos}/{pos_n}");
    println!("d = 0 collapsing to the origin: {anti}/{anti_n}");
    Ok(())
}
