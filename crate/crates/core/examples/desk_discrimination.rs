//! Trains the matcher on 200 synthetic anchor classes and compares stage one
//! alone (M0) with the two-stage cascade (M1) on held-out classes.
//!
//! ```text
//! cargo run --release --example desk_discrimination [-- experiment.toml]
//! ```
//!
//! The optional TOML file overrides any field of `ExperimentConfig`.

use std::time::Instant;

use kws_core::corpus::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg: ExperimentConfig = match std::env::args().nth(1) {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let started = Instant::now();
    let out = run_experiment(&cfg)?;
    for (i, l) in out.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.6}", i + 1);
    }
    println!(
        "held-out pairs: {} positive, {} negative",
        out.heldout.m1.pos.len(),
        out.heldout.m1.neg.len()
    );
    println!("M0  auc {:.4}  eer {:.4}", out.m0_auc, out.m0_eer);
    println!("M1  auc {:.4}  eer {:.4}", out.m1_auc, out.m1_eer);
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
