use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MatcherConfig, MatcherError};

pub const MWTS_MAGIC: &[u8; 6] = b"MWTS1\0";

/// Parameters of one pre-norm cross-attention block. Biases, gains and
/// offsets are stored as `1×n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub ln1_gain: Array2<f64>,
    pub ln1_offset: Array2<f64>,
    pub query_w: Array2<f64>,
    pub query_b: Array2<f64>,
    pub key_w: Array2<f64>,
    pub key_b: Array2<f64>,
    pub value_w: Array2<f64>,
    pub value_b: Array2<f64>,
    pub output_w: Array2<f64>,
    pub output_b: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_offset: Array2<f64>,
    pub ffn_in_w: Array2<f64>,
    pub ffn_in_b: Array2<f64>,
    pub ffn_out_w: Array2<f64>,
    pub ffn_out_b: Array2<f64>,
}

/// Every trainable tensor of the matcher. The same struct doubles as the
/// gradient and momentum container.
///
/// Values are kept exactly representable as `f32` after initialization,
/// loading and every optimizer step, so MWTS1 files round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherWeights {
    pub config: MatcherConfig,
    /// V×d_model phoneme lookup table (the registration embedding).
    pub phoneme_embedding: Array2<f64>,
    pub audio_projection_w: Array2<f64>,
    pub audio_projection_b: Array2<f64>,
    pub layers: Vec<AttentionLayer>,
    pub final_gain: Array2<f64>,
    pub final_offset: Array2<f64>,
    /// d_model×3·d_gru, gate blocks ordered reset, update, candidate.
    pub gru_input_w: Array2<f64>,
    pub gru_input_b: Array2<f64>,
    pub gru_hidden_w: Array2<f64>,
    pub gru_hidden_b: Array2<f64>,
    pub phoneme_head_w: Array2<f64>,
    pub phoneme_head_b: Array2<f64>,
    pub utterance_head_w: Array2<f64>,
    pub utterance_head_b: Array2<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Linear,
    Zero,
    One,
}

/// Name, shape and initializer of every tensor, in file order.
fn layout(cfg: &MatcherConfig) -> Vec<(String, [usize; 2], Init)> {
    let d = cfg.d_model;
    let f = cfg.ffn_dim();
    let g = cfg.d_gru;
    let mut out = vec![
        (
            "phoneme_embedding".to_string(),
            [cfg.vocab_size, d],
            Init::Linear,
        ),
        (
            "audio_projection.weight".into(),
            [cfg.d_enc, d],
            Init::Linear,
        ),
        ("audio_projection.bias".into(), [1, d], Init::Zero),
    ];
    for l in 0..cfg.n_attn_layers {
        let p = |n: &str| format!("layers.{l}.{n}");
        out.extend([
            (p("ln1.gain"), [1, d], Init::One),
            (p("ln1.offset"), [1, d], Init::Zero),
            (p("query.weight"), [d, d], Init::Linear),
            (p("query.bias"), [1, d], Init::Zero),
            (p("key.weight"), [d, d], Init::Linear),
            (p("key.bias"), [1, d], Init::Zero),
            (p("value.weight"), [d, d], Init::Linear),
            (p("value.bias"), [1, d], Init::Zero),
            (p("output.weight"), [d, d], Init::Linear),
            (p("output.bias"), [1, d], Init::Zero),
            (p("ln2.gain"), [1, d], Init::One),
            (p("ln2.offset"), [1, d], Init::Zero),
            (p("ffn_in.weight"), [d, f], Init::Linear),
            (p("ffn_in.bias"), [1, f], Init::Zero),
            (p("ffn_out.weight"), [f, d], Init::Linear),
            (p("ffn_out.bias"), [1, d], Init::Zero),
        ]);
    }
    out.extend([
        ("final_norm.gain".to_string(), [1, d], Init::One),
        ("final_norm.offset".into(), [1, d], Init::Zero),
        ("gru.input.weight".into(), [d, 3 * g], Init::Linear),
        ("gru.input.bias".into(), [1, 3 * g], Init::Zero),
        ("gru.hidden.weight".into(), [g, 3 * g], Init::Linear),
        ("gru.hidden.bias".into(), [1, 3 * g], Init::Zero),
        ("phoneme_head.weight".into(), [d, 1], Init::Linear),
        ("phoneme_head.bias".into(), [1, 1], Init::Zero),
        ("utterance_head.weight".into(), [g, 1], Init::Linear),
        ("utterance_head.bias".into(), [1, 1], Init::Zero),
    ]);
    out
}

fn round_to_f32(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| f64::from(v as f32));
}

impl MatcherWeights {
    fn from_tensors(config: MatcherConfig, tensors: impl IntoIterator<Item = Array2<f64>>) -> Self {
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("layout provides every tensor");
        let phoneme_embedding = next();
        let audio_projection_w = next();
        let audio_projection_b = next();
        let layers = (0..config.n_attn_layers)
            .map(|_| AttentionLayer {
                ln1_gain: next(),
                ln1_offset: next(),
                query_w: next(),
                query_b: next(),
                key_w: next(),
                key_b: next(),
                value_w: next(),
                value_b: next(),
                output_w: next(),
                output_b: next(),
                ln2_gain: next(),
                ln2_offset: next(),
                ffn_in_w: next(),
                ffn_in_b: next(),
                ffn_out_w: next(),
                ffn_out_b: next(),
            })
            .collect();
        Self {
            phoneme_embedding,
            audio_projection_w,
            audio_projection_b,
            layers,
            final_gain: next(),
            final_offset: next(),
            gru_input_w: next(),
            gru_input_b: next(),
            gru_hidden_w: next(),
            gru_hidden_b: next(),
            phoneme_head_w: next(),
            phoneme_head_b: next(),
            utterance_head_w: next(),
            utterance_head_b: next(),
            config,
        }
    }

    /// Glorot-uniform linear maps, zero biases, unit layer-norm gains.
    pub fn init(config: &MatcherConfig) -> Result<Self, MatcherError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors: Vec<_> = layout(config)
            .into_iter()
            .map(|(_, [rows, cols], init)| match init {
                Init::Zero => Array2::zeros((rows, cols)),
                Init::One => Array2::ones((rows, cols)),
                Init::Linear => {
                    let a = (6.0 / (rows + cols) as f64).sqrt();
                    let mut t = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..=a));
                    round_to_f32(&mut t);
                    t
                }
            })
            .collect();
        Ok(Self::from_tensors(config.clone(), tensors))
    }

    pub fn zeros(config: &MatcherConfig) -> Self {
        let tensors: Vec<_> = layout(config)
            .into_iter()
            .map(|(_, [r, c], _)| Array2::zeros((r, c)))
            .collect();
        Self::from_tensors(config.clone(), tensors)
    }

    pub fn tensor_names(config: &MatcherConfig) -> Vec<String> {
        layout(config).into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut refs: Vec<&Array2<f64>> = vec![
            &self.phoneme_embedding,
            &self.audio_projection_w,
            &self.audio_projection_b,
        ];
        for l in &self.layers {
            refs.extend([
                &l.ln1_gain,
                &l.ln1_offset,
                &l.query_w,
                &l.query_b,
                &l.key_w,
                &l.key_b,
                &l.value_w,
                &l.value_b,
                &l.output_w,
                &l.output_b,
                &l.ln2_gain,
                &l.ln2_offset,
                &l.ffn_in_w,
                &l.ffn_in_b,
                &l.ffn_out_w,
                &l.ffn_out_b,
            ]);
        }
        refs.extend([
            &self.final_gain,
            &self.final_offset,
            &self.gru_input_w,
            &self.gru_input_b,
            &self.gru_hidden_w,
            &self.gru_hidden_b,
            &self.phoneme_head_w,
            &self.phoneme_head_b,
            &self.utterance_head_w,
            &self.utterance_head_b,
        ]);
        Self::tensor_names(&self.config)
            .into_iter()
            .zip(refs)
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let names = Self::tensor_names(&self.config);
        let mut refs: Vec<&mut Array2<f64>> = vec![
            &mut self.phoneme_embedding,
            &mut self.audio_projection_w,
            &mut self.audio_projection_b,
        ];
        for l in &mut self.layers {
            refs.extend([
                &mut l.ln1_gain,
                &mut l.ln1_offset,
                &mut l.query_w,
                &mut l.query_b,
                &mut l.key_w,
                &mut l.key_b,
                &mut l.value_w,
                &mut l.value_b,
                &mut l.output_w,
                &mut l.output_b,
                &mut l.ln2_gain,
                &mut l.ln2_offset,
                &mut l.ffn_in_w,
                &mut l.ffn_in_b,
                &mut l.ffn_out_w,
                &mut l.ffn_out_b,
            ]);
        }
        refs.extend([
            &mut self.final_gain,
            &mut self.final_offset,
            &mut self.gru_input_w,
            &mut self.gru_input_b,
            &mut self.gru_hidden_w,
            &mut self.gru_hidden_b,
            &mut self.phoneme_head_w,
            &mut self.phoneme_head_b,
            &mut self.utterance_head_w,
            &mut self.utterance_head_b,
        ]);
        names.into_iter().zip(refs).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            round_to_f32(t);
        }
    }
}

pub fn encode_weights(w: &MatcherWeights) -> Vec<u8> {
    let tensors = w.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MWTS_MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for dim in t.shape() {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MatcherError> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(MatcherError::TruncatedFile)?;
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, MatcherError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, MatcherError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode_weights(
    bytes: &[u8],
    config: &MatcherConfig,
) -> Result<MatcherWeights, MatcherError> {
    config.validate()?;
    if bytes.len() < MWTS_MAGIC.len() {
        return Err(MatcherError::TruncatedFile);
    }
    if &bytes[..6] != MWTS_MAGIC {
        return Err(MatcherError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 6 };
    let expected = layout(config);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(MatcherError::ShapeMismatch(format!(
            "file has {count} tensors, config expects {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (exp_name, exp_shape, _) in &expected {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &name != exp_name || dims != exp_shape {
            return Err(MatcherError::ShapeMismatch(format!(
                "tensor {name} {dims:?}, expected {exp_name} {exp_shape:?}"
            )));
        }
        let n = dims.iter().product::<usize>();
        let raw = r.take(n * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        tensors.push(Array2::from_shape_vec((dims[0], dims[1]), values).expect("shape checked"));
    }
    if r.pos != bytes.len() {
        return Err(MatcherError::ShapeMismatch(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(MatcherWeights::from_tensors(config.clone(), tensors))
}

pub fn save_weights(w: &MatcherWeights, path: impl AsRef<Path>) -> Result<(), MatcherError> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w)).map_err(|source| MatcherError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads the dimensions of a weight file from its tensor shapes. The head
/// count is not stored, so it is taken from `n_heads`.
pub fn infer_config(bytes: &[u8], n_heads: usize) -> Result<MatcherConfig, MatcherError> {
    if bytes.len() < MWTS_MAGIC.len() {
        return Err(MatcherError::TruncatedFile);
    }
    if &bytes[..6] != MWTS_MAGIC {
        return Err(MatcherError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 6 };
    let count = r.u32()? as usize;
    let mut shapes = std::collections::HashMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        r.take(dims.iter().product::<usize>() * 4)?;
        shapes.insert(name, dims);
    }
    let dim = |name: &str, axis: usize| {
        shapes
            .get(name)
            .and_then(|d| d.get(axis).copied())
            .ok_or_else(|| MatcherError::ShapeMismatch(format!("missing tensor {name}")))
    };
    let n_attn_layers = (0..)
        .take_while(|l| shapes.contains_key(&format!("layers.{l}.ln1.gain")))
        .count();
    Ok(MatcherConfig {
        vocab_size: dim("phoneme_embedding", 0)?,
        d_model: dim("phoneme_embedding", 1)?,
        d_enc: dim("audio_projection.weight", 0)?,
        n_attn_layers,
        n_heads,
        d_gru: dim("gru.hidden.weight", 0)?,
        seed: 0,
    })
}

/// Loads a weight file whose dimensions are read from the file itself.
pub fn load_weights_inferred(
    path: impl AsRef<Path>,
    n_heads: usize,
) -> Result<MatcherWeights, MatcherError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MatcherError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = infer_config(&bytes, n_heads)?;
    decode_weights(&bytes, &config)
}

pub fn load_weights(
    path: impl AsRef<Path>,
    config: &MatcherConfig,
) -> Result<MatcherWeights, MatcherError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MatcherError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_weights(&bytes, config)
}
