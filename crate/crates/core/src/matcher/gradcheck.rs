use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, loss, MatchExample, MatcherConfig, MatcherError, MatcherWeights};
use crate::phoneme::{PhonemeInventory, PhonemeSeq};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(tensor name, relative error)` in weight-file order.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_tensor.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

const NORM_FLOOR: f64 = 1e-6;

fn set(w: &mut MatcherWeights, tensor: usize, j: usize, v: f64) {
    w.tensors_mut()[tensor]
        .1
        .as_slice_mut()
        .expect("contiguous")[j] = v;
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Compares analytic gradients with central differences of step `h` on every
/// scalar weight. The error of a tensor is `|a - n| / max(|a|, |n|, 1e-6)` in
/// the L2 norm. Tensors with no influence on the loss, such as key biases
/// under a row softmax, have a zero analytic gradient and pure rounding noise
/// as the numeric one; the floor keeps them from reading as errors.
pub fn gradient_check(
    w: &MatcherWeights,
    example: &MatchExample,
    h: f64,
) -> Result<GradCheckReport, MatcherError> {
    let (analytic, _) = backward(example, w)?;
    let eval = |p: &MatcherWeights| -> Result<f64, MatcherError> {
        let r = forward(&example.audio_features, &example.anchor, p)?;
        Ok(loss(&r, example)?.total)
    };
    let mut probe = w.clone();
    let mut per_tensor = Vec::new();
    for (idx, (name, a)) in analytic.tensors().into_iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for j in 0..a.len() {
            let original = probe.tensors()[idx].1.as_slice().expect("contiguous")[j];
            set(&mut probe, idx, j, original + h);
            let plus = eval(&probe)?;
            set(&mut probe, idx, j, original - h);
            let minus = eval(&probe)?;
            set(&mut probe, idx, j, original);
            numeric.push((plus - minus) / (2.0 * h));
        }
        let diff = norm(a.iter().zip(&numeric).map(|(x, y)| x - y));
        let scale = norm(a.iter().copied()).max(norm(numeric.iter().copied()));
        let rel = diff / scale.max(NORM_FLOOR);
        per_tensor.push((name, rel));
    }
    Ok(GradCheckReport { per_tensor })
}

/// The small seeded configuration used for gradient checks: 7 symbols,
/// d_model 8, d_enc 6, d_gru 5, two layers of two heads.
pub fn small_config(seed: u64) -> MatcherConfig {
    MatcherConfig {
        vocab_size: 7,
        d_model: 8,
        d_enc: 6,
        n_attn_layers: 2,
        n_heads: 2,
        d_gru: 5,
        seed,
    }
}

/// Weights of [`small_config`] and a random example with 5 frames and a
/// 3-phoneme anchor, all drawn from `seed`.
pub fn small_case(seed: u64) -> (MatcherWeights, MatchExample) {
    let cfg = small_config(seed);
    let w = MatcherWeights::init(&cfg).expect("small config is valid");
    let inv = PhonemeInventory::from_symbols(["<blk>", "A", "B", "C", "D", "E", "F"])
        .expect("fixed inventory");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9c);
    let features = Array2::from_shape_fn((5, cfg.d_enc), |_| rng.random_range(-1.0..1.0));
    let tokens: Vec<usize> = (0..3)
        .map(|_| rng.random_range(1..cfg.vocab_size))
        .collect();
    let anchor = PhonemeSeq::new(tokens, "", &inv).expect("tokens in range");
    let label_utt = rng.random_bool(0.5);
    let labels_phon = (0..3).map(|_| label_utt || rng.random_bool(0.5)).collect();
    (
        w,
        MatchExample {
            audio_features: features,
            anchor,
            label_utt,
            labels_phon,
        },
    )
}
