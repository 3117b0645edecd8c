use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::phoneme::PhonemeSeq;

use super::{AttentionLayer, MatchExample, MatcherError, MatcherWeights};

const LN_EPS: f64 = 1e-5;
const PROB_CLAMP: f64 = 1e-7;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub p_phon: Vec<f64>,
    /// Utterance-level match probability, the stage-two score.
    pub p_utt: f64,
    /// `attention_maps[layer][head]` is L×T', rows sum to one.
    pub attention_maps: Vec<Vec<Array2<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub utterance: f64,
    pub phoneme: f64,
}

struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    xn: Array2<f64>,
    ln1: NormCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    heads: Array2<f64>,
    yn: Array2<f64>,
    ln2: NormCache,
    hpre: Array2<f64>,
    hact: Array2<f64>,
}

struct GruStep {
    h_prev: Array2<f64>,
    r: Array2<f64>,
    u: Array2<f64>,
    n: Array2<f64>,
    gh_n: Array2<f64>,
}

struct Cache {
    audio: Array2<f64>,
    layers: Vec<LayerCache>,
    z: Array2<f64>,
    final_norm: NormCache,
    gru: Vec<GruStep>,
    h_last: Array2<f64>,
    phon_logits: Vec<f64>,
    utt_logit: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

fn col_sum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Accumulates the weight and bias gradients of `y = x·w + b` and returns dx.
fn affine_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &col_sum(dy);
    dy.dot(&w.t())
}

fn layer_norm(
    x: &Array2<f64>,
    gain: &Array2<f64>,
    offset: &Array2<f64>,
) -> (Array2<f64>, NormCache) {
    let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = x - &mean.insert_axis(Axis(1));
    let var = centered
        .mapv(|v| v * v)
        .mean_axis(Axis(1))
        .expect("non-empty rows");
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * rstd.view().insert_axis(Axis(1));
    let y = &xhat * gain + offset;
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    doffset: &mut Array2<f64>,
) -> Array2<f64> {
    *dgain += &col_sum(&(dy * &cache.xhat));
    *doffset += &col_sum(dy);
    let dxhat = dy * gain;
    let m1 = dxhat.mean_axis(Axis(1)).expect("rows").insert_axis(Axis(1));
    let m2 = (&dxhat * &cache.xhat)
        .mean_axis(Axis(1))
        .expect("rows")
        .insert_axis(Axis(1));
    (dxhat - &m1 - &cache.xhat * &m2) * cache.rstd.view().insert_axis(Axis(1))
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Sinusoidal position table, T×d.
pub(crate) fn positional_encoding(frames: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((frames, d), |(t, j)| {
        let i = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn attention_forward(
    x: &Array2<f64>,
    audio: &Array2<f64>,
    p: &AttentionLayer,
    n_heads: usize,
) -> (Array2<f64>, LayerCache) {
    let d = x.ncols();
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let (xn, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_offset);
    let q = affine(&xn, &p.query_w, &p.query_b);
    let k = affine(audio, &p.key_w, &p.key_b);
    let v = affine(audio, &p.value_w, &p.value_b);
    let mut heads = Array2::zeros((x.nrows(), d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        heads.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let x1 = x + &affine(&heads, &p.output_w, &p.output_b);
    let (yn, ln2) = layer_norm(&x1, &p.ln2_gain, &p.ln2_offset);
    let hpre = affine(&yn, &p.ffn_in_w, &p.ffn_in_b);
    let hact = hpre.mapv(gelu);
    let out = &x1 + &affine(&hact, &p.ffn_out_w, &p.ffn_out_b);
    let cache = LayerCache {
        xn,
        ln1,
        q,
        k,
        v,
        probs,
        heads,
        yn,
        ln2,
        hpre,
        hact,
    };
    (out, cache)
}

/// Returns the gradient with respect to the layer input and accumulates the
/// gradient with respect to the audio memory into `daudio`.
fn attention_backward(
    dout: &Array2<f64>,
    audio: &Array2<f64>,
    p: &AttentionLayer,
    c: &LayerCache,
    g: &mut AttentionLayer,
    daudio: &mut Array2<f64>,
) -> Array2<f64> {
    let n_heads = c.probs.len();
    let d = dout.ncols();
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let dhact = affine_backward(
        dout,
        &c.hact,
        &p.ffn_out_w,
        &mut g.ffn_out_w,
        &mut g.ffn_out_b,
    );
    let dhpre = dhact * &c.hpre.mapv(gelu_grad);
    let dyn_ = affine_backward(&dhpre, &c.yn, &p.ffn_in_w, &mut g.ffn_in_w, &mut g.ffn_in_b);
    let dx1 = dout
        + &layer_norm_backward(
            &dyn_,
            &c.ln2,
            &p.ln2_gain,
            &mut g.ln2_gain,
            &mut g.ln2_offset,
        );

    let dheads = affine_backward(
        &dx1,
        &c.heads,
        &p.output_w,
        &mut g.output_w,
        &mut g.output_b,
    );
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk_all = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for (h, probs) in c.probs.iter().enumerate() {
        let cols = s![.., h * dk..(h + 1) * dk];
        let dh = dheads.slice(cols);
        dv.slice_mut(cols).assign(&probs.t().dot(&dh));
        let dprobs = dh.dot(&c.v.slice(cols).t());
        let inner = (&dprobs * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dscores = (dprobs - &inner) * probs * scale;
        dq.slice_mut(cols).assign(&dscores.dot(&c.k.slice(cols)));
        dk_all
            .slice_mut(cols)
            .assign(&dscores.t().dot(&c.q.slice(cols)));
    }
    *daudio += &affine_backward(&dk_all, audio, &p.key_w, &mut g.key_w, &mut g.key_b);
    *daudio += &affine_backward(&dv, audio, &p.value_w, &mut g.value_w, &mut g.value_b);
    let dxn = affine_backward(&dq, &c.xn, &p.query_w, &mut g.query_w, &mut g.query_b);
    dx1 + &layer_norm_backward(
        &dxn,
        &c.ln1,
        &p.ln1_gain,
        &mut g.ln1_gain,
        &mut g.ln1_offset,
    )
}

fn check_inputs(
    w: &MatcherWeights,
    features: ArrayView2<'_, f64>,
    anchor: &PhonemeSeq,
) -> Result<(), MatcherError> {
    let cfg = &w.config;
    if features.nrows() == 0 {
        return Err(MatcherError::DimensionMismatch("no audio frames".into()));
    }
    if features.ncols() != cfg.d_enc {
        return Err(MatcherError::DimensionMismatch(format!(
            "features have width {}, matcher expects {}",
            features.ncols(),
            cfg.d_enc
        )));
    }
    if let Some(&t) = anchor.tokens().iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(MatcherError::DimensionMismatch(format!(
            "anchor token {t} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(MatcherError::NonFiniteInput);
    }
    Ok(())
}

fn run_forward(
    w: &MatcherWeights,
    features: &Array2<f64>,
    anchor: &PhonemeSeq,
) -> Result<(MatchResult, Cache), MatcherError> {
    check_inputs(w, features.view(), anchor)?;
    let cfg = &w.config;
    let audio = affine(features, &w.audio_projection_w, &w.audio_projection_b)
        + positional_encoding(features.nrows(), cfg.d_model);
    let mut x = w.phoneme_embedding.select(Axis(0), anchor.tokens());
    let mut layers = Vec::with_capacity(w.layers.len());
    for p in &w.layers {
        let (out, cache) = attention_forward(&x, &audio, p, cfg.n_heads);
        x = out;
        layers.push(cache);
    }
    let (z, final_norm) = layer_norm(&x, &w.final_gain, &w.final_offset);

    let phon_logits: Vec<f64> = affine(&z, &w.phoneme_head_w, &w.phoneme_head_b)
        .iter()
        .copied()
        .collect();

    let g = cfg.d_gru;
    let mut h = Array2::zeros((1, g));
    let mut gru = Vec::with_capacity(z.nrows());
    for i in 0..z.nrows() {
        let zi = z.slice(s![i..i + 1, ..]).to_owned();
        let gi = affine(&zi, &w.gru_input_w, &w.gru_input_b);
        let gh = affine(&h, &w.gru_hidden_w, &w.gru_hidden_b);
        let r = (&gi.slice(s![.., ..g]) + &gh.slice(s![.., ..g])).mapv(sigmoid);
        let u = (&gi.slice(s![.., g..2 * g]) + &gh.slice(s![.., g..2 * g])).mapv(sigmoid);
        let gh_n = gh.slice(s![.., 2 * g..]).to_owned();
        let n = (&gi.slice(s![.., 2 * g..]) + &(&r * &gh_n)).mapv(f64::tanh);
        let h_next = (1.0 - &u) * &n + &u * &h;
        gru.push(GruStep {
            h_prev: std::mem::replace(&mut h, h_next),
            r,
            u,
            n,
            gh_n,
        });
    }
    let utt_logit = affine(&h, &w.utterance_head_w, &w.utterance_head_b)[[0, 0]];

    let result = MatchResult {
        p_phon: phon_logits.iter().map(|&l| sigmoid(l)).collect(),
        p_utt: sigmoid(utt_logit),
        attention_maps: layers.iter().map(|c| c.probs.clone()).collect(),
    };
    let cache = Cache {
        audio,
        layers,
        z,
        final_norm,
        gru,
        h_last: h,
        phon_logits,
        utt_logit,
    };
    Ok((result, cache))
}

/// Scores one anchor against a feature segment.
pub fn forward(
    features: &Array2<f64>,
    anchor: &PhonemeSeq,
    w: &MatcherWeights,
) -> Result<MatchResult, MatcherError> {
    run_forward(w, features, anchor).map(|(r, _)| r)
}

fn bce(p: f64, label: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d BCE / d logit. Zero where the clamp is active.
fn bce_logit_grad(p: f64, label: bool) -> f64 {
    if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        return 0.0;
    }
    p - if label { 1.0 } else { 0.0 }
}

pub fn loss(result: &MatchResult, example: &MatchExample) -> Result<LossBreakdown, MatcherError> {
    let l = result.p_phon.len();
    if example.labels_phon.len() != l || l == 0 {
        return Err(MatcherError::DimensionMismatch(format!(
            "{} phoneme labels for {} phoneme scores",
            example.labels_phon.len(),
            l
        )));
    }
    let utterance = bce(result.p_utt, example.label_utt);
    let phoneme = result
        .p_phon
        .iter()
        .zip(&example.labels_phon)
        .map(|(&p, &y)| bce(p, y))
        .sum::<f64>()
        / l as f64;
    Ok(LossBreakdown {
        total: utterance + phoneme,
        utterance,
        phoneme,
    })
}

/// Analytic gradient of the joint loss with respect to every weight tensor.
pub fn backward(
    example: &MatchExample,
    w: &MatcherWeights,
) -> Result<(MatcherWeights, LossBreakdown), MatcherError> {
    let (result, c) = run_forward(w, &example.audio_features, &example.anchor)?;
    let breakdown = loss(&result, example)?;
    let cfg = &w.config;
    let g = cfg.d_gru;
    let l = result.p_phon.len();
    let mut grad = MatcherWeights::zeros(cfg);

    let dphon = Array2::from_shape_fn((l, 1), |(i, _)| {
        bce_logit_grad(sigmoid(c.phon_logits[i]), example.labels_phon[i]) / l as f64
    });
    let mut dz = affine_backward(
        &dphon,
        &c.z,
        &w.phoneme_head_w,
        &mut grad.phoneme_head_w,
        &mut grad.phoneme_head_b,
    );
    let dutt = Array2::from_elem(
        (1, 1),
        bce_logit_grad(sigmoid(c.utt_logit), example.label_utt),
    );
    let mut dh = affine_backward(
        &dutt,
        &c.h_last,
        &w.utterance_head_w,
        &mut grad.utterance_head_w,
        &mut grad.utterance_head_b,
    );

    for (i, st) in c.gru.iter().enumerate().rev() {
        let dn = &dh * &(1.0 - &st.u);
        let du = &dh * &(&st.h_prev - &st.n);
        let mut dh_prev = &dh * &st.u;
        let dn_pre = dn * &st.n.mapv(|n| 1.0 - n * n);
        let dr = &dn_pre * &st.gh_n;
        let dr_pre = dr * &st.r.mapv(|r| r * (1.0 - r));
        let du_pre = du * &st.u.mapv(|u| u * (1.0 - u));
        let mut dgi = Array2::zeros((1, 3 * g));
        dgi.slice_mut(s![.., ..g]).assign(&dr_pre);
        dgi.slice_mut(s![.., g..2 * g]).assign(&du_pre);
        let mut dgh = dgi.clone();
        dgi.slice_mut(s![.., 2 * g..]).assign(&dn_pre);
        dgh.slice_mut(s![.., 2 * g..]).assign(&(&dn_pre * &st.r));

        let zi = c.z.slice(s![i..i + 1, ..]).to_owned();
        let dzi = affine_backward(
            &dgi,
            &zi,
            &w.gru_input_w,
            &mut grad.gru_input_w,
            &mut grad.gru_input_b,
        );
        let mut row = dz.slice_mut(s![i..i + 1, ..]);
        row += &dzi;
        dh_prev += &affine_backward(
            &dgh,
            &st.h_prev,
            &w.gru_hidden_w,
            &mut grad.gru_hidden_w,
            &mut grad.gru_hidden_b,
        );
        dh = dh_prev;
    }

    let mut dx = layer_norm_backward(
        &dz,
        &c.final_norm,
        &w.final_gain,
        &mut grad.final_gain,
        &mut grad.final_offset,
    );
    let mut daudio = Array2::zeros(c.audio.raw_dim());
    for ((p, cache), gl) in w.layers.iter().zip(&c.layers).zip(&mut grad.layers).rev() {
        dx = attention_backward(&dx, &c.audio, p, cache, gl, &mut daudio);
    }
    for (i, &tok) in example.anchor.tokens().iter().enumerate() {
        let mut row = grad.phoneme_embedding.row_mut(tok);
        row += &dx.row(i);
    }
    affine_backward(
        &daudio,
        &example.audio_features,
        &w.audio_projection_w,
        &mut grad.audio_projection_w,
        &mut grad.audio_projection_b,
    );
    Ok((grad, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::MatcherConfig;
    use crate::phoneme::PhonemeInventory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> MatcherConfig {
        MatcherConfig {
            vocab_size: 7,
            d_model: 8,
            d_enc: 6,
            n_attn_layers: 2,
            n_heads: 2,
            d_gru: 5,
            seed: 11,
        }
    }

    fn inv7() -> PhonemeInventory {
        PhonemeInventory::from_symbols(["<blk>", "A", "B", "C", "D", "E", "F"]).unwrap()
    }

    fn random_example(seed: u64, frames: usize, label: bool) -> MatchExample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = Array2::from_shape_fn((frames, 6), |_| rng.random_range(-1.0..1.0));
        let anchor = PhonemeSeq::from_symbols(&["A", "C", "F"], &inv7()).unwrap();
        MatchExample {
            audio_features: feats,
            anchor,
            label_utt: label,
            labels_phon: vec![true, label, false],
        }
    }

    #[test]
    fn zero_heads_give_one_half() {
        let mut w = MatcherWeights::init(&small_cfg()).unwrap();
        w.phoneme_head_w.fill(0.0);
        w.utterance_head_w.fill(0.0);
        let ex = random_example(1, 5, true);
        let r = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
        assert_eq!(r.p_utt, 0.5);
        assert!(r.p_phon.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn head_bias_gradient_is_p_minus_y() {
        let mut w = MatcherWeights::init(&small_cfg()).unwrap();
        w.phoneme_head_w.fill(0.0);
        w.utterance_head_w.fill(0.0);
        let mut ex = random_example(2, 5, true);
        ex.labels_phon = vec![true; 3];
        let (g, _) = backward(&ex, &w).unwrap();
        assert!((g.utterance_head_b[[0, 0]] + 0.5).abs() < 1e-15);
        assert!((g.phoneme_head_b[[0, 0]] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let ex = MatchExample {
            audio_features: Array2::zeros((1, 1)),
            anchor: PhonemeSeq::from_symbols(&["A"], &inv7()).unwrap(),
            label_utt: true,
            labels_phon: vec![true],
        };
        let half = MatchResult {
            p_phon: vec![0.5],
            p_utt: 0.5,
            attention_maps: Vec::new(),
        };
        let b = loss(&half, &ex).unwrap();
        assert!((b.utterance - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((b.phoneme - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(b.total, b.utterance + b.phoneme);

        let sure = MatchResult {
            p_phon: vec![1.0],
            p_utt: 1.0,
            attention_maps: Vec::new(),
        };
        assert!(loss(&sure, &ex).unwrap().total < 1e-6);

        let neg = MatchExample {
            label_utt: false,
            ..ex.clone()
        };
        let wrong = MatchResult {
            p_utt: 1.0 - 1e-7,
            ..half.clone()
        };
        assert!((loss(&wrong, &neg).unwrap().utterance - 16.118).abs() < 1e-3);

        let bad = MatchResult {
            p_phon: vec![0.5, 0.5],
            ..half
        };
        assert!(matches!(
            loss(&bad, &ex),
            Err(MatcherError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn attention_rows_are_stochastic_and_probabilities_open() {
        let w = MatcherWeights::init(&small_cfg()).unwrap();
        for seed in 0..10 {
            let ex = random_example(seed, 1 + seed as usize, seed % 2 == 0);
            let r = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
            assert_eq!(r.attention_maps.len(), 2);
            for map in r.attention_maps.iter().flatten() {
                assert_eq!(map.shape(), [3, ex.audio_features.nrows()]);
                for row in map.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-5);
                }
            }
            assert!(r.p_utt > 0.0 && r.p_utt < 1.0);
            assert!(r.p_phon.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn constant_keys_give_uniform_attention() {
        // Positional encodings make equal frames distinguishable, so only
        // constant keys guarantee uniform rows.
        let mut w = MatcherWeights::init(&small_cfg()).unwrap();
        for l in &mut w.layers {
            l.key_w.fill(0.0);
        }
        let ex = random_example(3, 4, true);
        let r = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
        for row in r.attention_maps.iter().flatten().flat_map(|m| m.rows()) {
            assert!(row.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn frame_permutation_changes_output() {
        let w = MatcherWeights::init(&small_cfg()).unwrap();
        let ex = random_example(4, 5, true);
        let mut shuffled = ex.audio_features.clone();
        let order = [3, 0, 4, 1, 2];
        for (dst, &src) in order.iter().enumerate() {
            shuffled.row_mut(dst).assign(&ex.audio_features.row(src));
        }
        let a = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
        let b = forward(&shuffled, &ex.anchor, &w).unwrap();
        assert_ne!(a.p_utt, b.p_utt);
    }

    #[test]
    fn forward_is_reproducible() {
        let w = MatcherWeights::init(&small_cfg()).unwrap();
        let ex = random_example(5, 5, false);
        let a = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
        let b = forward(&ex.audio_features, &ex.anchor, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_errors() {
        let w = MatcherWeights::init(&small_cfg()).unwrap();
        let ex = random_example(6, 5, false);
        assert!(matches!(
            forward(&Array2::zeros((5, 4)), &ex.anchor, &w),
            Err(MatcherError::DimensionMismatch(_))
        ));
        assert!(matches!(
            forward(&Array2::zeros((0, 6)), &ex.anchor, &w),
            Err(MatcherError::DimensionMismatch(_))
        ));
        let mut nan = ex.audio_features.clone();
        nan[[2, 2]] = f64::NAN;
        assert!(matches!(
            forward(&nan, &ex.anchor, &w),
            Err(MatcherError::NonFiniteInput)
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let w = MatcherWeights::init(&small_cfg()).unwrap();
        for (seed, label) in [(7, true), (8, false)] {
            let ex = random_example(seed, 5, label);
            let rep = crate::matcher::gradient_check(&w, &ex, 1e-4).unwrap();
            let err = rep.max_relative_error();
            assert!(err <= 1e-4, "max relative error {err}");
        }
        for seed in 0..3 {
            let (w, ex) = crate::matcher::small_case(seed);
            let err = crate::matcher::gradient_check(&w, &ex, 1e-4)
                .unwrap()
                .max_relative_error();
            assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        }
    }
}
