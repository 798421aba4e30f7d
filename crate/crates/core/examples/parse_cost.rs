//! Parse scalar cost expressions, differentiate them, and check the gradient-domination bound.
//!
//! ```bash
//! cargo run --example parse_cost
//! ```

use overparam::ScalarCost;

fn main() -> overparam::Result<()> {
    for text in ["(1-w)^2", "(w-2)^2/2 + 1", "(w^2-1)^2+w", "w^4/4 - w"] {
        let cost = ScalarCost::parse(text)?;
        println!("f(w)   = {}", cost.expression());
        println!("f'(w)  = {}", cost.derivative());
        println!("f''(w) = {}", cost.second_derivative());
        for w in [-1.0, 0.0, 1.5] {
            println!("  w = {w:>4}: f = {:>9.4}  f' = {:>9.4}  f'' = {:>9.4}", cost.value(w), cost.d1(w), cost.d2(w));
        }
        match cost.pdpli_check(-4.0, 4.0, 801) {
            Ok(r) => println!("  gradient domination on [-4, 4]: {} (kappa {:.3e})\n", r.passed, r.alpha_scale),
            Err(e) => println!("  gradient domination check failed: {e}\n"),
        }
    }
    match ScalarCost::parse("exp(w)") {
        Ok(_) => println!("unexpectedly parsed exp(w)"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
