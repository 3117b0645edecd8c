use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, MatchExample, MatcherConfig, MatcherError, MatcherWeights};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the shuffle schedule.
    pub seed: u64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    /// L2 penalty coefficient added to every gradient.
    pub weight_decay: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            clip_norm: Some(5.0),
            lr_decay: 1.0,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: MatcherWeights,
    /// Mean total loss per epoch, measured while the epoch ran.
    pub epoch_losses: Vec<f64>,
}

fn check_dataset(dataset: &[MatchExample]) -> Result<(), MatcherError> {
    if dataset.is_empty() {
        return Err(MatcherError::EmptyDataset);
    }
    let positives = dataset.iter().filter(|e| e.label_utt).count();
    if positives == 0 || positives == dataset.len() {
        return Err(MatcherError::DegenerateLabels);
    }
    Ok(())
}

/// Trains freshly initialized weights.
pub fn train(
    dataset: &[MatchExample],
    config: &MatcherConfig,
    hyper: &TrainHyper,
) -> Result<TrainOutcome, MatcherError> {
    train_from(MatcherWeights::init(config)?, dataset, hyper)
}

/// Mini-batch SGD with momentum starting from `weights`.
pub fn train_from(
    mut weights: MatcherWeights,
    dataset: &[MatchExample],
    hyper: &TrainHyper,
) -> Result<TrainOutcome, MatcherError> {
    check_dataset(dataset)?;
    if hyper.batch_size == 0 {
        return Err(MatcherError::BadConfig(
            "batch_size must be at least 1".into(),
        ));
    }
    if !(hyper.lr >= 0.0 && hyper.lr.is_finite())
        || !(0.0..1.0).contains(&hyper.momentum)
        || !(hyper.lr_decay > 0.0 && hyper.lr_decay <= 1.0)
        || !(hyper.weight_decay >= 0.0 && hyper.weight_decay.is_finite())
    {
        return Err(MatcherError::BadConfig(format!(
            "lr {} / momentum {} out of range",
            hyper.lr, hyper.momentum
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut velocity = MatcherWeights::zeros(&weights.config);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut losses = vec![0.0; dataset.len()];

    let mut lr = hyper.lr;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let mut sum = MatcherWeights::zeros(&weights.config);
            for &i in batch {
                let (g, l) = backward(&dataset[i], &weights)?;
                losses[i] = l.total;
                for ((_, acc), (_, gi)) in sum.tensors_mut().into_iter().zip(g.tensors()) {
                    *acc += gi;
                }
            }
            let mut scale = 1.0 / batch.len() as f64;
            if let Some(max_norm) = hyper.clip_norm {
                let norm = sum
                    .tensors()
                    .iter()
                    .flat_map(|(_, t)| t.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
                    * scale;
                if norm > max_norm {
                    scale *= max_norm / norm;
                }
            }
            let params = weights.tensors_mut().into_iter();
            let vel = velocity.tensors_mut().into_iter();
            for (((_, p), (_, v)), (_, g)) in params.zip(vel).zip(sum.tensors()) {
                *v *= hyper.momentum;
                v.scaled_add(scale, g);
                v.scaled_add(hyper.weight_decay, &*p);
                p.scaled_add(-lr, v);
            }
            weights.round_to_f32();
        }
        lr *= hyper.lr_decay;
        epoch_losses.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(TrainOutcome {
        weights,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::{PhonemeInventory, PhonemeSeq};
    use ndarray::Array2;
    use rand::Rng;

    fn cfg() -> MatcherConfig {
        MatcherConfig {
            vocab_size: 5,
            d_model: 8,
            d_enc: 4,
            n_attn_layers: 1,
            n_heads: 2,
            d_gru: 4,
            seed: 3,
        }
    }

    /// Positives carry the anchor's phonemes one-hot in the features.
    fn toy_dataset(n: usize) -> Vec<MatchExample> {
        let inv = PhonemeInventory::from_symbols(["<blk>", "A", "B", "C", "D"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n)
            .map(|i| {
                let anchor_syms: Vec<&str> = (0..3)
                    .map(|_| ["A", "B", "C", "D"][rng.random_range(0..4)])
                    .collect();
                let anchor = PhonemeSeq::from_symbols(&anchor_syms, &inv).unwrap();
                let positive = i % 2 == 0;
                let spoken: Vec<usize> = if positive {
                    anchor.tokens().to_vec()
                } else {
                    (0..3).map(|_| rng.random_range(1..5)).collect()
                };
                let mut feats = Array2::from_shape_fn((6, 4), |_| rng.random_range(-0.1..0.1));
                for (j, &tok) in spoken.iter().enumerate() {
                    feats[[2 * j, tok - 1]] += 1.0;
                    feats[[2 * j + 1, tok - 1]] += 1.0;
                }
                let spoken = PhonemeSeq::new(spoken, "", &inv).unwrap();
                let labels_phon = MatchExample::positional_labels(&anchor, &spoken);
                MatchExample {
                    audio_features: feats,
                    label_utt: positive || labels_phon.iter().all(|&b| b),
                    anchor,
                    labels_phon,
                }
            })
            .collect()
    }

    #[test]
    fn loss_decreases() {
        let data = toy_dataset(200);
        let hyper = TrainHyper {
            epochs: 30,
            ..TrainHyper::default()
        };
        let out = train(&data, &cfg(), &hyper).unwrap();
        assert_eq!(out.epoch_losses.len(), 30);
        assert!(
            out.epoch_losses[29] < out.epoch_losses[0],
            "{:?}",
            out.epoch_losses
        );
        assert!(out.weights.is_finite());
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let data = toy_dataset(20);
        let hyper = TrainHyper {
            lr: 0.0,
            epochs: 3,
            ..TrainHyper::default()
        };
        let out = train(&data, &cfg(), &hyper).unwrap();
        assert_eq!(out.weights, MatcherWeights::init(&cfg()).unwrap());
        assert_eq!(out.epoch_losses[0], out.epoch_losses[2]);
    }

    #[test]
    fn seeded_runs_agree() {
        let data = toy_dataset(20);
        let hyper = TrainHyper {
            epochs: 2,
            ..TrainHyper::default()
        };
        let a = train(&data, &cfg(), &hyper).unwrap();
        let b = train(&data, &cfg(), &hyper).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn dataset_errors() {
        let hyper = TrainHyper::default();
        assert!(matches!(
            train(&[], &cfg(), &hyper),
            Err(MatcherError::EmptyDataset)
        ));
        let only_pos: Vec<_> = toy_dataset(10)
            .into_iter()
            .filter(|e| e.label_utt)
            .collect();
        assert!(matches!(
            train(&only_pos, &cfg(), &hyper),
            Err(MatcherError::DegenerateLabels)
        ));
    }
}
