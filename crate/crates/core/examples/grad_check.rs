//! Compares the matcher's hand-written gradients with central differences.
//!
//! ```text
//! cargo run --release --example grad_check [-- seed]
//! ```

use kws_core::matcher::{gradient_check, small_case};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 0,
    };
    let (weights, example) = small_case(seed);
    let report = gradient_check(&weights, &example, 1e-4)?;
    for (name, err) in &report.per_tensor {
        println!("{name:<32} {err:.3e}");
    }
    println!("max relative error {:.3e}", report.max_relative_error());
    Ok(())
}
