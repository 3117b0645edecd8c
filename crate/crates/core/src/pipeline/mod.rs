//! Two-stage detection: stage-one search proposes candidate segments, the
//! matcher verifies them.

mod encoder;
mod features;
mod manifest;

pub use encoder::{featurize, LinearEncoder, SegmentEncoder};
pub use features::{decode_features, encode_features, read_features, write_features, FEAT_MAGIC};
pub use manifest::{
    best_scores, evaluate_manifest, read_manifest, score_dump, ManifestEval, PairRecord,
    RecordDetection,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use thiserror::Error;

use crate::ctc::{search, CandidateSegment, KeywordAutomaton, SearchConfig, SearchError};
use crate::matcher::{forward, MatcherError, MatcherWeights};
use crate::metrics::MetricsError;
use crate::phoneme::{tokenize, FuzzyMap, Lexicon, PhonemeError, PhonemeInventory, PhonemeSeq};
use crate::posteriorgram::{PgrmError, Posteriorgram};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Posteriorgram(#[from] PgrmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("mode {0} needs audio features")]
    MissingFeatures(Mode),
    #[error("mode {0} needs matcher weights")]
    MissingWeights(Mode),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("segment {start}..={end} outside {frames} frames")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Stage one only.
    M0,
    /// Matcher over features cropped from the stage-one encoder output.
    M1,
    /// Matcher over the padded span re-encoded by a [`SegmentEncoder`].
    M2,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::M0 => "m0",
            Mode::M1 => "m1",
            Mode::M2 => "m2",
        })
    }
}

impl FromStr for Mode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(Mode::M0),
            "m1" => Ok(Mode::M1),
            "m2" => Ok(Mode::M2),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown mode {other:?}"
            ))),
        }
    }
}

/// An enrolled keyword. Enrollment needs text only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSpec {
    pub id: String,
    pub text: String,
    pub seq: PhonemeSeq,
    pub automaton: KeywordAutomaton,
}

pub fn keyword_id(text: &str) -> String {
    text.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

pub fn enroll(
    text: &str,
    lexicon: &Lexicon,
    inv: &PhonemeInventory,
    fuzzy: &FuzzyMap,
) -> Result<KeywordSpec, PipelineError> {
    let seq = tokenize(text, lexicon, inv)?;
    let automaton = KeywordAutomaton::new(&seq, fuzzy)?;
    Ok(KeywordSpec {
        id: keyword_id(text),
        text: text.to_string(),
        seq,
        automaton,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub s1_threshold: f64,
    pub s2_threshold: f64,
    /// Search settings; its threshold is replaced by `s1_threshold`.
    pub search: SearchConfig,
    /// Frames added on each side of a candidate before stage two.
    pub padding: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::M0,
            s1_threshold: 0.5,
            s2_threshold: 0.5,
            search: SearchConfig::default(),
            padding: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("s1_threshold", self.s1_threshold),
            ("s2_threshold", self.s2_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::InvalidConfig(format!(
                    "{name} {v} outside [0, 1]"
                )));
            }
        }
        self.search_config().validate()?;
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            threshold: self.s1_threshold,
            ..self.search.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Detection {
    pub keyword: String,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub s1: f64,
    pub s2: Option<f64>,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub mode: Mode,
}

/// A stage-one candidate with its stage-two score, if stage two ran.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub segment: CandidateSegment,
    pub s2: Option<f64>,
}

/// Inclusive row range of a padded segment, clamped to the stream.
pub fn padded_range(
    frames: usize,
    seg: &CandidateSegment,
    padding: usize,
) -> Result<(usize, usize), PipelineError> {
    if seg.start_frame > seg.end_frame || seg.end_frame >= frames {
        return Err(PipelineError::SegmentOutOfRange {
            start: seg.start_frame,
            end: seg.end_frame,
            frames,
        });
    }
    Ok((
        seg.start_frame.saturating_sub(padding),
        (seg.end_frame + padding).min(frames - 1),
    ))
}

/// Copies the padded rows of a candidate out of the stream features.
pub fn crop_features(
    features: &Array2<f64>,
    seg: &CandidateSegment,
    padding: usize,
) -> Result<Array2<f64>, PipelineError> {
    let (lo, hi) = padded_range(features.nrows(), seg, padding)?;
    Ok(features.slice(s![lo..=hi, ..]).to_owned())
}

/// Frame index to seconds. The shift is widened through its shortest
/// decimal form, so a shift stored as `0.01f32` counts as exactly 0.01.
pub fn frame_to_seconds(frame: usize, frame_shift_s: f32) -> f64 {
    frame as f64 * crate::posteriorgram::shift_as_f64(frame_shift_s)
}

/// Stage two inputs bundled for the candidate scorer.
#[derive(Clone, Copy)]
pub struct Stage2<'a> {
    pub weights: Option<&'a MatcherWeights>,
    pub features: Option<&'a Array2<f64>>,
    pub encoder: Option<&'a dyn SegmentEncoder>,
}

impl<'a> Stage2<'a> {
    pub fn none() -> Self {
        Self {
            weights: None,
            features: None,
            encoder: None,
        }
    }
}

fn check_stage2(pg: &Posteriorgram, st: &Stage2<'_>, mode: Mode) -> Result<(), PipelineError> {
    if let Some(f) = st.features {
        if f.nrows() != pg.num_frames() {
            return Err(PipelineError::DimensionMismatch(format!(
                "features have {} rows, posteriorgram has {} frames",
                f.nrows(),
                pg.num_frames()
            )));
        }
    }
    if mode == Mode::M0 {
        return Ok(());
    }
    let w = st.weights.ok_or(PipelineError::MissingWeights(mode))?;
    match mode {
        Mode::M1 => {
            let f = st.features.ok_or(PipelineError::MissingFeatures(mode))?;
            if f.ncols() != w.config.d_enc {
                return Err(PipelineError::DimensionMismatch(format!(
                    "features have width {}, matcher expects {}",
                    f.ncols(),
                    w.config.d_enc
                )));
            }
        }
        Mode::M2 => {
            if let Some(enc) = st.encoder {
                if enc.output_dim() != w.config.d_enc {
                    return Err(PipelineError::DimensionMismatch(format!(
                        "encoder width {}, matcher expects {}",
                        enc.output_dim(),
                        w.config.d_enc
                    )));
                }
            }
        }
        Mode::M0 => {}
    }
    Ok(())
}

/// Runs stage one for one keyword and scores every candidate with stage two
/// according to `cfg.mode`. No stage-two gate is applied.
pub fn score_candidates(
    pg: &Posteriorgram,
    spec: &KeywordSpec,
    stage2: Stage2<'_>,
    cfg: &PipelineConfig,
) -> Result<Vec<ScoredCandidate>, PipelineError> {
    cfg.validate()?;
    check_stage2(pg, &stage2, cfg.mode)?;
    let default_encoder;
    let encoder: Option<&dyn SegmentEncoder> = match (cfg.mode, stage2.encoder, stage2.weights) {
        (Mode::M2, None, Some(w)) => {
            default_encoder = LinearEncoder::new(pg.vocab_size(), w.config.d_enc, 0);
            Some(&default_encoder)
        }
        (_, e, _) => e,
    };
    let candidates = search(pg, &spec.automaton, &cfg.search_config())?;
    candidates
        .into_iter()
        .map(|segment| {
            let s2 = match cfg.mode {
                Mode::M0 => None,
                Mode::M1 => {
                    let f = stage2.features.expect("checked");
                    let crop = crop_features(f, &segment, cfg.padding)?;
                    Some(forward(&crop, &spec.seq, stage2.weights.expect("checked"))?.p_utt)
                }
                Mode::M2 => {
                    let (lo, hi) = padded_range(pg.num_frames(), &segment, cfg.padding)?;
                    let enc = encoder.expect("set above");
                    let encoded = enc.encode(pg.frames_range(lo, hi));
                    Some(forward(&encoded, &spec.seq, stage2.weights.expect("checked"))?.p_utt)
                }
            };
            Ok(ScoredCandidate { segment, s2 })
        })
        .collect()
}

/// Full two-stage detection over one stream and any number of keywords.
/// Detections are sorted by start time, then keyword id.
pub fn run(
    pg: &Posteriorgram,
    specs: &[KeywordSpec],
    stage2: Stage2<'_>,
    cfg: &PipelineConfig,
) -> Result<Vec<Detection>, PipelineError> {
    let shift = pg.frame_shift_s();
    let mut out = Vec::new();
    for spec in specs {
        for c in score_candidates(pg, spec, stage2, cfg)? {
            let final_score = match c.s2 {
                None => c.segment.s1,
                Some(s2) if s2 >= cfg.s2_threshold => s2,
                Some(_) => continue,
            };
            out.push(Detection {
                keyword: spec.id.clone(),
                t_start_s: frame_to_seconds(c.segment.start_frame, shift),
                t_end_s: frame_to_seconds(c.segment.end_frame + 1, shift),
                s1: c.segment.s1,
                s2: c.s2,
                final_score,
                mode: cfg.mode,
            });
        }
    }
    out.sort_by(|a, b| {
        a.t_start_s
            .total_cmp(&b.t_start_s)
            .then_with(|| a.keyword.cmp(&b.keyword))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::MatcherConfig;
    use crate::posteriorgram::{synthesize, SynthSpec};
    use proptest::prelude::*;

    fn english() -> (Lexicon, PhonemeInventory, FuzzyMap) {
        (
            Lexicon::default_english(),
            PhonemeInventory::default_english(),
            FuzzyMap::default_english(),
        )
    }

    fn hey_snips_stream(peak: f64, seed: u64) -> (Posteriorgram, KeywordSpec) {
        let (lex, inv, fuzzy) = english();
        let spec = enroll("hey snips", &lex, &inv, &fuzzy).unwrap();
        let (pg, _) = synthesize(
            &SynthSpec {
                keyword: spec.seq.clone(),
                total_frames: 120,
                frames_per_phoneme: 4,
                insert_at: 40,
                peak_prob: peak,
                seed,
            },
            &inv,
        )
        .unwrap();
        (pg, spec)
    }

    fn small_weights(d_enc: usize) -> MatcherWeights {
        MatcherWeights::init(&MatcherConfig {
            d_model: 8,
            d_enc,
            d_gru: 4,
            ..MatcherConfig::default()
        })
        .unwrap()
    }

    fn segment(start: usize, end: usize) -> CandidateSegment {
        CandidateSegment {
            start_frame: start,
            end_frame: end,
            s1: 1.0,
            score_start: start,
            score_end: end,
            alignment: Vec::new(),
        }
    }

    #[test]
    fn enroll_hey_snips() {
        let (lex, inv, fuzzy) = english();
        let a = enroll("Hey  Snips", &lex, &inv, &fuzzy).unwrap();
        assert_eq!(a.id, "hey_snips");
        assert_eq!(a.seq.len(), 7);
        assert_eq!(a.automaton.num_states(), 15);
        assert_eq!(a, enroll("Hey  Snips", &lex, &inv, &fuzzy).unwrap());
        assert!(matches!(
            enroll("zzqx", &lex, &inv, &fuzzy),
            Err(PipelineError::Phoneme(PhonemeError::OovWord(_)))
        ));
    }

    #[test]
    fn crop_examples() {
        let f = Array2::from_shape_fn((10, 2), |(r, _)| r as f64);
        let c = crop_features(&f, &segment(3, 5), 0).unwrap();
        assert_eq!(c.column(0).to_vec(), [3.0, 4.0, 5.0]);
        let c = crop_features(&f, &segment(0, 2), 2).unwrap();
        assert_eq!(c.column(0).to_vec(), [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            crop_features(&f, &segment(8, 12), 0),
            Err(PipelineError::SegmentOutOfRange { .. })
        ));
    }

    #[test]
    fn m0_noiseless_detection() {
        let (pg, spec) = hey_snips_stream(1.0, 1);
        let dets = run(
            &pg,
            std::slice::from_ref(&spec),
            Stage2::none(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.final_score, 1.0);
        assert_eq!(d.s2, None);
        assert_eq!(d.t_start_s, 0.4);
        assert_eq!(d.t_end_s, 0.68);
    }

    #[test]
    fn m1_zero_heads_are_gated() {
        let (pg, spec) = hey_snips_stream(1.0, 2);
        let enc = LinearEncoder::new(pg.vocab_size(), 12, 3);
        let feats = featurize(&pg, &enc, 0.0, 0);
        let mut w = small_weights(12);
        w.utterance_head_w.fill(0.0);
        w.utterance_head_b.fill(0.0);
        let cfg = PipelineConfig {
            mode: Mode::M1,
            s2_threshold: 0.6,
            ..PipelineConfig::default()
        };
        let st = Stage2 {
            weights: Some(&w),
            features: Some(&feats),
            encoder: None,
        };
        assert!(run(&pg, std::slice::from_ref(&spec), st, &cfg)
            .unwrap()
            .is_empty());
        let cfg = PipelineConfig {
            s2_threshold: 0.5,
            ..cfg
        };
        let dets = run(&pg, std::slice::from_ref(&spec), st, &cfg).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].s2, Some(0.5));
    }

    #[test]
    fn missing_inputs() {
        let (pg, spec) = hey_snips_stream(0.9, 3);
        let w = small_weights(12);
        let m1 = PipelineConfig {
            mode: Mode::M1,
            ..PipelineConfig::default()
        };
        let specs = std::slice::from_ref(&spec);
        assert!(matches!(
            run(&pg, specs, Stage2::none(), &m1),
            Err(PipelineError::MissingWeights(Mode::M1))
        ));
        let st = Stage2 {
            weights: Some(&w),
            ..Stage2::none()
        };
        assert!(matches!(
            run(&pg, specs, st, &m1),
            Err(PipelineError::MissingFeatures(Mode::M1))
        ));
        let short = Array2::zeros((5, 12));
        let st = Stage2 {
            weights: Some(&w),
            features: Some(&short),
            encoder: None,
        };
        assert!(matches!(
            run(&pg, specs, st, &m1),
            Err(PipelineError::DimensionMismatch(_))
        ));
        let m2 = PipelineConfig {
            mode: Mode::M2,
            ..PipelineConfig::default()
        };
        let st = Stage2 {
            weights: Some(&w),
            ..Stage2::none()
        };
        assert_eq!(run(&pg, specs, st, &m2).unwrap().len(), 1);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("M2".parse::<Mode>().unwrap(), Mode::M2);
        assert!("m3".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::M1).unwrap(), "\"m1\"");
    }

    fn random_stream(seed: u64) -> Posteriorgram {
        use crate::posteriorgram::{synthesize_stream, Plant};
        let (lex, inv, _) = english();
        let kw = tokenize("hey", &lex, &inv).unwrap();
        let kw2 = tokenize("hi", &lex, &inv).unwrap();
        let plants = [
            Plant {
                keyword: kw,
                insert_at: 10 + (seed % 7) as usize,
                frames_per_phoneme: 3,
            },
            Plant {
                keyword: kw2,
                insert_at: 50,
                frames_per_phoneme: 4,
            },
        ];
        synthesize_stream(90, &plants, 0.5 + (seed % 5) as f64 * 0.1, seed, &inv)
            .unwrap()
            .0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gating_and_mode_consistency(seed in 0u64..1000, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lex, inv, fuzzy) = english();
            let specs = vec![
                enroll("hey", &lex, &inv, &fuzzy).unwrap(),
                enroll("hi", &lex, &inv, &fuzzy).unwrap(),
            ];
            let pg = random_stream(seed);
            let enc = LinearEncoder::new(pg.vocab_size(), 12, 1);
            let feats = featurize(&pg, &enc, 0.1, seed);
            let w = small_weights(12);
            let st = Stage2 { weights: Some(&w), features: Some(&feats), encoder: None };
            let (lo1, hi1) = if t1 < 0.5 { (t1, 0.5) } else { (0.5, t1) };
            let cfg = |mode, s1, s2| PipelineConfig { mode, s1_threshold: s1, s2_threshold: s2, ..PipelineConfig::default() };

            let m0_lo = run(&pg, &specs, st, &cfg(Mode::M0, lo1, 0.0)).unwrap();
            let m0_hi = run(&pg, &specs, st, &cfg(Mode::M0, hi1, 0.0)).unwrap();
            prop_assert!(m0_hi.len() <= m0_lo.len());

            let m1_lo = run(&pg, &specs, st, &cfg(Mode::M1, hi1, t2.min(0.5))).unwrap();
            let m1_hi = run(&pg, &specs, st, &cfg(Mode::M1, hi1, t2.max(0.5))).unwrap();
            prop_assert!(m1_hi.len() <= m1_lo.len());
            for d in &m1_lo {
                prop_assert!(m0_hi.iter().any(|c| c.keyword == d.keyword && c.t_start_s == d.t_start_s && c.t_end_s == d.t_end_s));
            }
            for d in m0_lo.iter().chain(&m1_lo) {
                prop_assert!(d.t_start_s <= d.t_end_s && d.t_end_s <= pg.duration_s() + 1e-9);
            }

            let only_hey = run(&pg, &specs[..1], st, &cfg(Mode::M0, lo1, 0.0)).unwrap();
            let from_both: Vec<_> = m0_lo.iter().filter(|d| d.keyword == "hey").cloned().collect();
            prop_assert_eq!(only_hey, from_both);
        }
    }
}
