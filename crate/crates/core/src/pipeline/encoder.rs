use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::posteriorgram::{Frames, Posteriorgram};

/// Turns a frame span into candidate features for the matcher.
pub trait SegmentEncoder {
    fn output_dim(&self) -> usize;
    /// One output row per input frame.
    fn encode(&self, span: Frames<'_>) -> Array2<f64>;
}

/// Fixed random linear map from posterior rows to `d_enc` features. Serves as
/// the stand-in acoustic encoder output and as the default stage-two
/// re-encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    projection: Array2<f64>,
}

impl LinearEncoder {
    /// Entries drawn from N(0, 1) with a seeded generator.
    pub fn new(vocab_size: usize, d_enc: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection =
            Array2::from_shape_simple_fn((vocab_size, d_enc), || StandardNormal.sample(&mut rng));
        Self { projection }
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }
}

fn frames_matrix(span: Frames<'_>) -> Array2<f64> {
    Array2::from_shape_fn((span.len(), span.vocab_size()), |(t, v)| {
        f64::from(span.row(t)[v])
    })
}

impl SegmentEncoder for LinearEncoder {
    fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn encode(&self, span: Frames<'_>) -> Array2<f64> {
        assert_eq!(
            span.vocab_size(),
            self.projection.nrows(),
            "vocabulary size"
        );
        frames_matrix(span).dot(&self.projection)
    }
}

/// Whole-stream features: the encoder output plus seeded Gaussian noise.
pub fn featurize(
    pg: &Posteriorgram,
    encoder: &LinearEncoder,
    noise_std: f64,
    seed: u64,
) -> Array2<f64> {
    let mut out = encoder.encode(pg.frames());
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.mapv_inplace(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + noise_std * n
        });
    }
    out
}
