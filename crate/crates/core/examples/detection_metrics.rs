//! AUC, EER and recall at fixed false-alarm rates on a small score set.
//!
//! ```text
//! cargo run --example detection_metrics
//! ```

use kws_core::metrics::{auc, eer, recall_at_far, roc_points, ScoreSet, StreamEval};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = ScoreSet::new(
        vec![0.97, 0.91, 0.88, 0.74, 0.66, 0.52, 0.31],
        vec![0.81, 0.45, 0.40, 0.22, 0.18, 0.09, 0.05, 0.02],
    )?;
    println!("AUC {:.4}", auc(&scores)?);
    println!("EER {:.2}%", 100.0 * eer(&scores)?);
    println!("ROC (FAR, TPR):");
    for (far, tpr) in roc_points(&scores)? {
        println!("    {far:.3}  {tpr:.3}");
    }

    let stream = StreamEval {
        positive_best: scores.pos.clone(),
        false_alarms: vec![0.81, 0.62, 0.45, 0.40, 0.33],
        negative_hours: 2.0,
    };
    for rate in [0.5, 1.0, 2.0] {
        let r = recall_at_far(&stream, rate)?;
        println!(
            "recall {:.3} at {rate} FA/h (threshold {:.3}, false alarms allowed: {})",
            r.recall, r.threshold, r.allowed
        );
    }
    Ok(())
}
