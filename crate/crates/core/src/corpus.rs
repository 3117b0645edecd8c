//! Synthetic anchor corpora for matcher training and desk-scale evaluation.
//!
//! Anchor classes are pseudo-words with random pronunciations. Each class
//! yields positive streams that contain the anchor and negative streams that
//! contain a confusable variant, one phoneme swapped for another member of
//! its group in [`experiment_fuzzy_map`]. Stage one merges those groups, so
//! it cannot tell the variants apart; the matcher has to.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ctc::{search, KeywordAutomaton, SearchConfig};
use crate::matcher::{
    train, MatchExample, MatcherConfig, MatcherError, MatcherWeights, TrainHyper,
};
use crate::metrics::{auc, eer, MetricsError, ScoreSet};
use crate::phoneme::{FuzzyMap, Lexicon, PhonemeError, PhonemeInventory, PhonemeSeq};
use crate::pipeline::{
    best_scores, featurize, read_features, score_candidates, write_features, KeywordSpec,
    LinearEncoder, Mode, PairRecord, PipelineConfig, PipelineError, Stage2,
};
use crate::posteriorgram::{
    synthesize, write_pgrm, GroundTruth, PgrmError, Posteriorgram, SynthSpec,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error(transparent)]
    Posteriorgram(#[from] PgrmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Vowels grouped across stress, plus the voicing and place pairs that
/// acoustic models confuse most.
pub fn experiment_fuzzy_map(inv: &PhonemeInventory) -> Result<FuzzyMap, PhonemeError> {
    const VOWELS: [&str; 15] = [
        "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
    ];
    const PAIRS: [&str; 11] = [
        "P B", "T D", "K G", "F V", "S Z", "SH ZH", "CH JH", "TH DH", "M N", "L R", "W Y",
    ];
    let mut text = String::new();
    for v in VOWELS {
        text.push_str(&format!("{v}0 {v}1 {v}2\n"));
    }
    for p in PAIRS {
        text.push_str(p);
        text.push('\n');
    }
    FuzzyMap::parse(&text, inv)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub positives_per_class: usize,
    pub negatives_per_class: usize,
    /// Extra negatives per class from [`scrambled_variant`].
    pub scrambled_per_class: usize,
    pub phonemes_min: usize,
    pub phonemes_max: usize,
    pub fpp_min: usize,
    pub fpp_max: usize,
    pub peak_min: f64,
    pub peak_max: f64,
    /// Background frames before and after the plant, each drawn from this range.
    pub margin_min: usize,
    pub margin_max: usize,
    pub d_enc: usize,
    pub encoder_seed: u64,
    pub noise_std: f64,
    /// Frames of context around a planted span in training crops.
    pub padding: usize,
    /// Random shift of each training crop boundary, in frames.
    pub jitter: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            positives_per_class: 2,
            negatives_per_class: 2,
            scrambled_per_class: 0,
            phonemes_min: 3,
            phonemes_max: 6,
            fpp_min: 3,
            fpp_max: 5,
            peak_min: 0.6,
            peak_max: 0.95,
            margin_min: 8,
            margin_max: 16,
            d_enc: 144,
            encoder_seed: 0,
            noise_std: 0.1,
            padding: 2,
            jitter: 2,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let ok = self.phonemes_min >= 2
            && self.phonemes_min <= self.phonemes_max
            && self.fpp_min >= 2
            && self.fpp_min <= self.fpp_max
            && self.peak_min > 0.0
            && self.peak_min <= self.peak_max
            && self.peak_max <= 1.0
            && self.margin_min <= self.margin_max
            && self.d_enc >= 1
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidConfig(format!("{self:?}")))
        }
    }

    pub fn encoder(&self, inv: &PhonemeInventory) -> LinearEncoder {
        LinearEncoder::new(inv.len(), self.d_enc, self.encoder_seed)
    }
}

/// A keyword class: a pseudo-word and its pronunciation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorClass {
    pub word: String,
    pub seq: PhonemeSeq,
}

/// Phonemes available to pseudo-words: everything except blank and silence.
fn phoneme_pool(inv: &PhonemeInventory) -> Vec<usize> {
    inv.phoneme_indices()
        .filter(|&i| inv.symbol(i) != Some("SIL"))
        .collect()
}

/// `count` distinct pseudo-words named `{prefix}{i}`, none repeating a
/// phoneme back to back and none in `exclude`.
pub fn anchor_classes(
    count: usize,
    prefix: &str,
    inv: &PhonemeInventory,
    cfg: &CorpusConfig,
    seed: u64,
    exclude: &HashSet<Vec<usize>>,
) -> Result<Vec<AnchorClass>, CorpusError> {
    cfg.validate()?;
    let pool = phoneme_pool(inv);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = rng.random_range(cfg.phonemes_min..=cfg.phonemes_max);
        let mut tokens: Vec<usize> = Vec::with_capacity(len);
        while tokens.len() < len {
            let p = *pool.choose(&mut rng).expect("non-empty pool");
            if tokens.last() != Some(&p) {
                tokens.push(p);
            }
        }
        if !seen.insert(tokens.clone()) {
            continue;
        }
        let word = format!("{prefix}{:04}", out.len());
        let seq = PhonemeSeq::new(tokens, word.clone(), inv)?;
        out.push(AnchorClass { word, seq });
    }
    Ok(out)
}

/// The anchor with one phoneme replaced by another member of its fuzzy
/// group. `None` when no position admits a swap that keeps neighbours
/// distinct.
pub fn confusable_variant(
    seq: &PhonemeSeq,
    fuzzy: &FuzzyMap,
    inv: &PhonemeInventory,
    rng: &mut impl Rng,
) -> Option<PhonemeSeq> {
    let t = seq.tokens();
    let mut options = Vec::new();
    for (i, &p) in t.iter().enumerate() {
        for &q in fuzzy.fuzzy_set(p) {
            let clash = (i > 0 && t[i - 1] == q) || t.get(i + 1) == Some(&q);
            if q != p && !clash {
                options.push((i, q));
            }
        }
    }
    let &(i, q) = options.choose(rng)?;
    let mut tokens = t.to_vec();
    tokens[i] = q;
    PhonemeSeq::new(tokens, seq.source_text(), inv).ok()
}

/// `seq` with roughly half its positions replaced by random phonemes, at
/// least one of them. No phoneme repeats back to back.
pub fn scrambled_variant(
    seq: &PhonemeSeq,
    inv: &PhonemeInventory,
    rng: &mut impl Rng,
) -> PhonemeSeq {
    let pool = phoneme_pool(inv);
    let t = seq.tokens();
    let forced = rng.random_range(0..t.len());
    let mut tokens = t.to_vec();
    for i in 0..t.len() {
        if i != forced && rng.random_bool(0.5) {
            continue;
        }
        loop {
            let q = *pool.choose(rng).expect("inventory has phonemes");
            let clash = (i > 0 && tokens[i - 1] == q) || t.get(i + 1) == Some(&q);
            if q != t[i] && !clash {
                tokens[i] = q;
                break;
            }
        }
    }
    PhonemeSeq::new(tokens, seq.source_text(), inv).expect("pool tokens are valid")
}

/// A synthetic stream paired with the anchor it is scored against.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub id: String,
    pub anchor: AnchorClass,
    /// What the stream actually contains.
    pub spoken: PhonemeSeq,
    pub label: bool,
    pub posteriorgram: Posteriorgram,
    pub features: Array2<f64>,
    pub truth: GroundTruth,
}

impl SynthPair {
    pub fn phoneme_labels(&self) -> Vec<bool> {
        MatchExample::positional_labels(&self.anchor.seq, &self.spoken)
    }
}

/// Positive and confusable-negative streams for every class. A class whose
/// anchor has no confusable variant falls back to another class's anchor.
pub fn synth_pairs(
    classes: &[AnchorClass],
    cfg: &CorpusConfig,
    inv: &PhonemeInventory,
    fuzzy: &FuzzyMap,
    seed: u64,
) -> Result<Vec<SynthPair>, CorpusError> {
    cfg.validate()?;
    let encoder = cfg.encoder(inv);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        let plan = (0..cfg.positives_per_class)
            .map(|_| (true, false))
            .chain((0..cfg.negatives_per_class).map(|_| (false, false)))
            .chain((0..cfg.scrambled_per_class).map(|_| (false, true)));
        for (k, (label, scrambled)) in plan.enumerate() {
            let variant = match (label, scrambled) {
                (true, _) => Some(class.seq.clone()),
                (false, true) => Some(scrambled_variant(&class.seq, inv, &mut rng)),
                (false, false) => confusable_variant(&class.seq, fuzzy, inv, &mut rng),
            };
            let spoken = match variant {
                Some(v) => v,
                None if classes.len() > 1 => {
                    let other = (ci + rng.random_range(1..classes.len())) % classes.len();
                    classes[other].seq.clone()
                }
                None => continue,
            };
            let fpp = rng.random_range(cfg.fpp_min..=cfg.fpp_max);
            let peak = rng.random_range(cfg.peak_min..=cfg.peak_max);
            let lead = rng.random_range(cfg.margin_min..=cfg.margin_max);
            let trail = rng.random_range(cfg.margin_min..=cfg.margin_max);
            let stream_seed: u64 = rng.random();
            let (pg, truth) = synthesize(
                &SynthSpec {
                    keyword: spoken.clone(),
                    total_frames: lead + spoken.len() * fpp + trail,
                    frames_per_phoneme: fpp,
                    insert_at: lead,
                    peak_prob: peak,
                    seed: stream_seed,
                },
                inv,
            )?;
            let features = featurize(&pg, &encoder, cfg.noise_std, stream_seed ^ 0x5eed);
            out.push(SynthPair {
                id: format!("{}_{}{k}", class.word, if label { "pos" } else { "neg" }),
                anchor: class.clone(),
                spoken,
                label,
                posteriorgram: pg,
                features,
                truth,
            });
        }
    }
    Ok(out)
}

/// Planted span of every pair, inclusive frame bounds.
pub fn truth_spans(pairs: &[SynthPair]) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .map(|p| (p.truth.start_frame, p.truth.end_frame))
        .collect()
}

/// Span of the best stage-one candidate in every pair, the planted span when
/// stage one finds nothing.
pub fn stage_one_spans(
    pairs: &[SynthPair],
    fuzzy: &FuzzyMap,
    search_cfg: &SearchConfig,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    pairs
        .iter()
        .map(|p| {
            let spec = spec_for(&p.anchor, fuzzy)?;
            let hits = search(&p.posteriorgram, &spec.automaton, search_cfg)
                .map_err(PipelineError::from)?;
            Ok(hits
                .iter()
                .max_by(|a, b| a.s1.total_cmp(&b.s1))
                .map_or((p.truth.start_frame, p.truth.end_frame), |c| {
                    (c.start_frame, c.end_frame)
                }))
        })
        .collect()
}

/// Matcher training examples cropped around `spans` (one per pair) with
/// `cfg.padding` frames of context, each boundary shifted by up to
/// `cfg.jitter` frames.
pub fn training_examples(
    pairs: &[SynthPair],
    spans: &[(usize, usize)],
    cfg: &CorpusConfig,
    seed: u64,
) -> Vec<MatchExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .zip(spans)
        .map(|(p, &(start, end))| {
            let frames = p.features.nrows();
            let j = cfg.jitter as i64;
            let lo = start as i64 - cfg.padding as i64 + rng.random_range(-j..=j);
            let hi = end as i64 + cfg.padding as i64 + rng.random_range(-j..=j);
            let lo = lo.clamp(0, frames as i64 - 1) as usize;
            let hi = (hi.clamp(0, frames as i64 - 1) as usize).max(lo);
            MatchExample {
                audio_features: p.features.slice(s![lo..=hi, ..]).to_owned(),
                anchor: p.anchor.seq.clone(),
                label_utt: p.label,
                labels_phon: p.phoneme_labels(),
            }
        })
        .collect()
}

/// Lexicon entries for pseudo-words, so they can be enrolled by text.
pub fn lexicon_for(
    classes: &[AnchorClass],
    inv: &PhonemeInventory,
) -> Result<Lexicon, CorpusError> {
    let mut lex = Lexicon::default();
    for c in classes {
        let phones = c.seq.symbols(inv).into_iter().map(str::to_string).collect();
        lex.insert(&c.word, phones, inv)?;
    }
    Ok(lex)
}

fn spec_for(class: &AnchorClass, fuzzy: &FuzzyMap) -> Result<KeywordSpec, CorpusError> {
    Ok(KeywordSpec {
        id: class.word.to_lowercase(),
        text: class.word.clone(),
        seq: class.seq.clone(),
        automaton: KeywordAutomaton::new(&class.seq, fuzzy).map_err(PipelineError::from)?,
    })
}

/// Best-candidate scores of every pair under stage one alone and under the
/// two-stage cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub m0: ScoreSet,
    pub m1: ScoreSet,
}

pub fn evaluate_pairs(
    pairs: &[SynthPair],
    fuzzy: &FuzzyMap,
    weights: &MatcherWeights,
    cfg: &PipelineConfig,
) -> Result<PairEvaluation, CorpusError> {
    let cfg = PipelineConfig {
        mode: Mode::M1,
        ..cfg.clone()
    };
    let (mut m0, mut m1) = (Vec::new(), Vec::new());
    for p in pairs {
        let spec = spec_for(&p.anchor, fuzzy)?;
        let stage2 = Stage2 {
            weights: Some(weights),
            features: Some(&p.features),
            encoder: None,
        };
        let candidates = score_candidates(&p.posteriorgram, &spec, stage2, &cfg)?;
        let (s1, s2) = best_scores(&candidates, Mode::M1);
        m0.push((p.label, s1));
        m1.push((p.label, s2.unwrap_or(0.0)));
    }
    Ok(PairEvaluation {
        m0: ScoreSet::from_labelled(m0)?,
        m1: ScoreSet::from_labelled(m1)?,
    })
}

/// End-to-end desk experiment: train on synthetic anchor classes, evaluate
/// M0 and M1 on held-out classes never seen in training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train_classes: usize,
    pub heldout_classes: usize,
    pub corpus: CorpusConfig,
    pub matcher: MatcherConfig,
    pub hyper: TrainHyper,
    pub pipeline: PipelineConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_classes: 200,
            heldout_classes: 60,
            corpus: CorpusConfig {
                positives_per_class: 8,
                negatives_per_class: 8,
                scrambled_per_class: 16,
                padding: 10,
                ..CorpusConfig::default()
            },
            matcher: MatcherConfig {
                d_model: 32,
                d_gru: 32,
                ..MatcherConfig::default()
            },
            hyper: TrainHyper {
                lr: 0.01,
                epochs: 12,
                lr_decay: 0.9,
                ..TrainHyper::default()
            },
            pipeline: PipelineConfig {
                mode: Mode::M1,
                s1_threshold: 0.3,
                padding: 10,
                ..PipelineConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub weights: MatcherWeights,
    pub epoch_losses: Vec<f64>,
    pub heldout: PairEvaluation,
    pub m0_auc: f64,
    pub m0_eer: f64,
    pub m1_auc: f64,
    pub m1_eer: f64,
}

/// Held-out classes depend only on the seed, so sweeps over
/// `train_classes` share the same evaluation set. Training classes form a
/// growing prefix of one seeded sequence.
pub fn held_out_classes(
    cfg: &ExperimentConfig,
    inv: &PhonemeInventory,
) -> Result<Vec<AnchorClass>, CorpusError> {
    anchor_classes(
        cfg.heldout_classes,
        "HELD",
        inv,
        &cfg.corpus,
        cfg.seed ^ 0xbeef,
        &HashSet::new(),
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, CorpusError> {
    let inv = PhonemeInventory::default_english();
    let fuzzy = experiment_fuzzy_map(&inv)?;
    let matcher = MatcherConfig {
        vocab_size: inv.len(),
        d_enc: cfg.corpus.d_enc,
        ..cfg.matcher.clone()
    };
    let held = held_out_classes(cfg, &inv)?;
    let exclude: HashSet<Vec<usize>> = held.iter().map(|c| c.seq.tokens().to_vec()).collect();
    let train_set = anchor_classes(
        cfg.train_classes,
        "ANCH",
        &inv,
        &cfg.corpus,
        cfg.seed,
        &exclude,
    )?;
    let train_pairs = synth_pairs(&train_set, &cfg.corpus, &inv, &fuzzy, cfg.seed ^ 0x1)?;
    let spans = stage_one_spans(&train_pairs, &fuzzy, &cfg.pipeline.search_config())?;
    let examples = training_examples(&train_pairs, &spans, &cfg.corpus, cfg.seed ^ 0x2);
    let trained = train(&examples, &matcher, &cfg.hyper)?;
    let held_corpus = CorpusConfig {
        scrambled_per_class: 0,
        ..cfg.corpus.clone()
    };
    let held_pairs = synth_pairs(&held, &held_corpus, &inv, &fuzzy, cfg.seed ^ 0x3)?;
    let heldout = evaluate_pairs(&held_pairs, &fuzzy, &trained.weights, &cfg.pipeline)?;
    Ok(ExperimentOutcome {
        m0_auc: auc(&heldout.m0)?,
        m0_eer: eer(&heldout.m0)?,
        m1_auc: auc(&heldout.m1)?,
        m1_eer: eer(&heldout.m1)?,
        weights: trained.weights,
        epoch_losses: trained.epoch_losses,
        heldout,
    })
}

/// One line of a matcher training dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    /// Space-separated phoneme symbols.
    pub anchor: String,
    pub features_path: String,
    pub label_utt: u8,
    pub labels_phon: Vec<u8>,
}

/// Writes `train.jsonl` and one FEAT1 file per example under `dir`.
pub fn write_dataset(
    dir: &Path,
    ids: &[String],
    examples: &[MatchExample],
    inv: &PhonemeInventory,
) -> Result<(), CorpusError> {
    let feat_dir = dir.join("train");
    fs::create_dir_all(&feat_dir).map_err(io_err(&feat_dir))?;
    let mut lines = String::new();
    for (id, ex) in ids.iter().zip(examples) {
        let rel = format!("train/{id}.feat");
        write_features(&ex.audio_features, dir.join(&rel))?;
        let rec = DatasetRecord {
            id: id.clone(),
            anchor: ex.anchor.symbols(inv).join(" "),
            features_path: rel,
            label_utt: u8::from(ex.label_utt),
            labels_phon: ex.labels_phon.iter().map(|&b| u8::from(b)).collect(),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
        lines.push('\n');
    }
    let path = dir.join("train.jsonl");
    fs::write(&path, lines).map_err(io_err(&path))
}

/// Reads a dataset written by [`write_dataset`]; feature paths resolve
/// against the JSONL file's directory.
pub fn read_dataset(path: &Path, inv: &PhonemeInventory) -> Result<Vec<MatchExample>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CorpusError::Dataset {
            line: i + 1,
            message,
        };
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let syms: Vec<&str> = rec.anchor.split_whitespace().collect();
        let anchor = PhonemeSeq::from_symbols(&syms, inv).map_err(|e| bad(e.to_string()))?;
        if rec.labels_phon.len() != anchor.len()
            || rec.label_utt > 1
            || rec.labels_phon.iter().any(|&l| l > 1)
        {
            return Err(bad(format!("{}: labels do not fit the anchor", rec.id)));
        }
        out.push(MatchExample {
            audio_features: read_features(base.join(&rec.features_path))?,
            anchor,
            label_utt: rec.label_utt == 1,
            labels_phon: rec.labels_phon.iter().map(|&l| l == 1).collect(),
        });
    }
    Ok(out)
}

/// Writes a complete on-disk corpus: lexicon, fuzzy map, stream files, a
/// pair manifest for the pipeline and a training dataset.
#[allow(clippy::too_many_arguments)]
pub fn write_corpus(
    dir: &Path,
    classes: &[AnchorClass],
    pairs: &[SynthPair],
    cfg: &CorpusConfig,
    inv: &PhonemeInventory,
    fuzzy: &FuzzyMap,
    search_cfg: &SearchConfig,
    seed: u64,
) -> Result<(), CorpusError> {
    let streams = dir.join("streams");
    fs::create_dir_all(&streams).map_err(io_err(&streams))?;
    let lex = lexicon_for(classes, inv)?;
    let path = dir.join("lexicon.dict");
    fs::write(&path, lex.to_dict_string()).map_err(io_err(&path))?;
    let path = dir.join("fuzzy.txt");
    fs::write(&path, fuzzy.to_text(inv)).map_err(io_err(&path))?;

    let mut manifest = String::new();
    for p in pairs {
        let pg_rel = format!("streams/{}.pgrm", p.id);
        let feat_rel = format!("streams/{}.feat", p.id);
        write_pgrm(&p.posteriorgram, dir.join(&pg_rel))?;
        write_features(&p.features, dir.join(&feat_rel))?;
        let rec = PairRecord {
            id: p.id.clone(),
            anchor_text: p.anchor.word.clone(),
            pgrm_path: pg_rel,
            features_path: Some(feat_rel),
            label: u8::from(p.label),
        };
        manifest.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest).map_err(io_err(&path))?;

    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let spans = stage_one_spans(pairs, fuzzy, search_cfg)?;
    write_dataset(dir, &ids, &training_examples(pairs, &spans, cfg, seed), inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{evaluate_manifest, read_manifest};

    fn small_cfg() -> CorpusConfig {
        CorpusConfig {
            d_enc: 8,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn fuzzy_map_groups() {
        let inv = PhonemeInventory::default_english();
        let f = experiment_fuzzy_map(&inv).unwrap();
        assert_eq!(f.groups().len(), 26);
        let p = inv.index_of("P").unwrap();
        let b = inv.index_of("B").unwrap();
        let mut pb = vec![p, b];
        pb.sort();
        assert_eq!(f.fuzzy_set(p), pb.as_slice());
        assert_eq!(f.fuzzy_set(inv.index_of("HH").unwrap()).len(), 1);
        assert_eq!(f.fuzzy_set(inv.index_of("EY1").unwrap()).len(), 3);
    }

    #[test]
    fn anchors_are_distinct_and_valid() {
        let inv = PhonemeInventory::default_english();
        let classes = anchor_classes(50, "W", &inv, &small_cfg(), 1, &HashSet::new()).unwrap();
        let set: HashSet<_> = classes.iter().map(|c| c.seq.tokens().to_vec()).collect();
        assert_eq!(set.len(), 50);
        let sil = inv.index_of("SIL").unwrap();
        for c in &classes {
            let t = c.seq.tokens();
            assert!((3..=6).contains(&t.len()));
            assert!(t.windows(2).all(|w| w[0] != w[1]));
            assert!(!t.contains(&sil));
        }
        let more = anchor_classes(60, "W", &inv, &small_cfg(), 1, &HashSet::new()).unwrap();
        assert_eq!(&more[..50], classes.as_slice());
        let disjoint = anchor_classes(20, "X", &inv, &small_cfg(), 1, &set).unwrap();
        assert!(disjoint.iter().all(|c| !set.contains(c.seq.tokens())));
    }

    #[test]
    fn variants_differ_in_one_fuzzy_position() {
        let inv = PhonemeInventory::default_english();
        let fuzzy = experiment_fuzzy_map(&inv).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for c in anchor_classes(40, "W", &inv, &small_cfg(), 2, &HashSet::new()).unwrap() {
            let Some(v) = confusable_variant(&c.seq, &fuzzy, &inv, &mut rng) else {
                continue;
            };
            let diffs: Vec<usize> = (0..v.len())
                .filter(|&i| v.tokens()[i] != c.seq.tokens()[i])
                .collect();
            assert_eq!(diffs.len(), 1);
            let i = diffs[0];
            assert!(fuzzy.fuzzy_set(c.seq.tokens()[i]).contains(&v.tokens()[i]));
        }
        let inv3 = PhonemeInventory::from_symbols(["<blk>", "A", "B"]).unwrap();
        let seq = PhonemeSeq::from_symbols(&["A"], &inv3).unwrap();
        assert!(confusable_variant(&seq, &FuzzyMap::identity(&inv3), &inv3, &mut rng).is_none());
    }

    #[test]
    fn scrambled_variants_change_something_and_never_repeat() {
        let inv = PhonemeInventory::default_english();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for c in anchor_classes(60, "W", &inv, &small_cfg(), 5, &HashSet::new()).unwrap() {
            let v = scrambled_variant(&c.seq, &inv, &mut rng);
            assert_eq!(v.len(), c.seq.len());
            assert_ne!(v, c.seq);
            assert!(v.tokens().windows(2).all(|w| w[0] != w[1]));
            assert!(v.tokens().iter().all(|&t| t != inv.blank_index()));
        }
    }

    #[test]
    fn stage_one_spans_sit_on_the_plant() {
        let inv = PhonemeInventory::default_english();
        let fuzzy = experiment_fuzzy_map(&inv).unwrap();
        let cfg = small_cfg();
        let classes = anchor_classes(4, "W", &inv, &cfg, 6, &HashSet::new()).unwrap();
        let pairs = synth_pairs(&classes, &cfg, &inv, &fuzzy, 8).unwrap();
        let search_cfg = SearchConfig {
            threshold: 0.3,
            ..SearchConfig::default()
        };
        let spans = stage_one_spans(&pairs, &fuzzy, &search_cfg).unwrap();
        for (p, &(start, end)) in pairs.iter().zip(&spans) {
            assert!(start <= end);
            assert!(start <= p.truth.end_frame && end >= p.truth.start_frame);
        }
        let never = SearchConfig {
            threshold: 2.0,
            ..SearchConfig::default()
        };
        assert_eq!(
            stage_one_spans(&pairs, &fuzzy, &never).unwrap(),
            truth_spans(&pairs)
        );
    }

    #[test]
    fn pairs_and_examples() {
        let inv = PhonemeInventory::default_english();
        let fuzzy = experiment_fuzzy_map(&inv).unwrap();
        let cfg = small_cfg();
        let classes = anchor_classes(5, "W", &inv, &cfg, 3, &HashSet::new()).unwrap();
        let pairs = synth_pairs(&classes, &cfg, &inv, &fuzzy, 7).unwrap();
        assert_eq!(pairs.len(), 20);
        for p in &pairs {
            assert_eq!(p.features.shape(), [p.posteriorgram.num_frames(), 8]);
            if p.label {
                assert!(p.phoneme_labels().iter().all(|&b| b));
            } else {
                assert_ne!(p.spoken, p.anchor.seq);
            }
        }
        let ex = training_examples(&pairs, &truth_spans(&pairs), &cfg, 0);
        assert_eq!(ex.len(), 20);
        assert!(ex
            .iter()
            .all(|e| e.audio_features.nrows() >= 1 && e.labels_phon.len() == e.anchor.len()));
        let again = synth_pairs(&classes, &cfg, &inv, &fuzzy, 7).unwrap();
        assert_eq!(again[3].features, pairs[3].features);
    }

    #[test]
    fn corpus_on_disk_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let inv = PhonemeInventory::default_english();
        let fuzzy = experiment_fuzzy_map(&inv).unwrap();
        let cfg = small_cfg();
        let classes = anchor_classes(3, "W", &inv, &cfg, 3, &HashSet::new()).unwrap();
        let pairs = synth_pairs(&classes, &cfg, &inv, &fuzzy, 7).unwrap();
        write_corpus(
            dir.path(),
            &classes,
            &pairs,
            &cfg,
            &inv,
            &fuzzy,
            &SearchConfig::default(),
            1,
        )
        .unwrap();

        let data = read_dataset(&dir.path().join("train.jsonl"), &inv).unwrap();
        assert_eq!(data.len(), 12);
        assert_eq!(data[0].anchor.tokens(), pairs[0].anchor.seq.tokens());

        let lex = Lexicon::load(dir.path().join("lexicon.dict"), &inv).unwrap();
        let fz = FuzzyMap::load(dir.path().join("fuzzy.txt"), &inv).unwrap();
        assert_eq!(fz, fuzzy);
        let recs = read_manifest(dir.path().join("manifest.jsonl")).unwrap();
        let eval = evaluate_manifest(
            &recs,
            dir.path(),
            &lex,
            &inv,
            &fz,
            None,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(eval.rows.len(), 12);
    }
}
