//! Held-out error as the number of training anchor classes grows.
//!
//! Every run shares the held-out classes and draws its training classes as
//! a prefix of the same sequence.
//!
//! ```text
//! cargo run --release --example anchor_scaling [-- 10 50 200]
//! ```

use std::time::Instant;

use kws_core::corpus::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sweep: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    if sweep.is_empty() {
        sweep = vec![10, 50, 200];
    }
    println!(
        "{:>8}  {:>8}  {:>8}  {:>8}",
        "classes", "m1_auc", "m1_eer", "secs"
    );
    for classes in sweep {
        let started = Instant::now();
        let out = run_experiment(&ExperimentConfig {
            train_classes: classes,
            ..ExperimentConfig::default()
        })?;
        println!(
            "{classes:>8}  {:>8.4}  {:>8.4}  {:>8.1}",
            out.m1_auc,
            out.m1_eer,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
