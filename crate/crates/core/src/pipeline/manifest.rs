use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::matcher::MatcherWeights;
use crate::metrics::{write_score_csv, ScoreRow, ScoreSet};
use crate::phoneme::{FuzzyMap, Lexicon, PhonemeInventory};
use crate::posteriorgram::{read_pgrm, Posteriorgram};

use super::{
    enroll, frame_to_seconds, score_candidates, Detection, KeywordSpec, Mode, PipelineConfig,
    PipelineError, ScoredCandidate, Stage2,
};

/// One line of a pair manifest. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub anchor_text: String,
    pub pgrm_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<String>,
    pub label: u8,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| PipelineError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(PipelineError::Manifest {
                line: i + 1,
                message: format!("{}: label must be 0 or 1", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// A detection tagged with the manifest record it came from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecordDetection {
    pub id: String,
    #[serde(flatten)]
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEval {
    /// Best scores per record, sorted by id.
    pub rows: Vec<ScoreRow>,
    pub detections: Vec<RecordDetection>,
    /// Total duration of label-0 streams.
    pub negative_seconds: f64,
    pub mode: Mode,
}

impl ManifestEval {
    /// The score the mode decides on: s1 for M0, s2 otherwise.
    pub fn final_scores(&self) -> Result<ScoreSet, PipelineError> {
        Ok(ScoreSet::from_labelled(self.rows.iter().map(|r| {
            let s = match self.mode {
                Mode::M0 => r.s1,
                _ => r.s2.unwrap_or(0.0),
            };
            (r.label == 1, s)
        }))?)
    }

    pub fn negative_hours(&self) -> f64 {
        self.negative_seconds / 3600.0
    }
}

/// Best stage-one score and best stage-two score over the candidates, zero
/// when there are none. Stage two is `None` in M0.
pub fn best_scores(candidates: &[ScoredCandidate], mode: Mode) -> (f64, Option<f64>) {
    let s1 = candidates.iter().map(|c| c.segment.s1).fold(0.0, f64::max);
    let s2 = (mode != Mode::M0).then(|| candidates.iter().filter_map(|c| c.s2).fold(0.0, f64::max));
    (s1, s2)
}

fn load_record(
    rec: &PairRecord,
    base: &Path,
    inv: &PhonemeInventory,
) -> Result<(Posteriorgram, Option<Array2<f64>>), PipelineError> {
    let pg = read_pgrm(base.join(&rec.pgrm_path))?;
    pg.check_inventory(inv)?;
    let features = rec
        .features_path
        .as_ref()
        .map(|p| super::read_features(base.join(p)))
        .transpose()?;
    Ok((pg, features))
}

/// Scores every record of a manifest. Errors carry the offending record id.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_manifest(
    records: &[PairRecord],
    base_dir: &Path,
    lexicon: &Lexicon,
    inv: &PhonemeInventory,
    fuzzy: &FuzzyMap,
    weights: Option<&MatcherWeights>,
    cfg: &PipelineConfig,
) -> Result<ManifestEval, PipelineError> {
    cfg.validate()?;
    let mut specs: HashMap<&str, KeywordSpec> = HashMap::new();
    let mut rows = Vec::with_capacity(records.len());
    let mut detections = Vec::new();
    let mut negative_seconds = 0.0;
    let mut order: Vec<&PairRecord> = records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for rec in order {
        let wrap = |e: PipelineError| PipelineError::Record {
            id: rec.id.clone(),
            source: Box::new(e),
        };
        if !specs.contains_key(rec.anchor_text.as_str()) {
            let spec = enroll(&rec.anchor_text, lexicon, inv, fuzzy).map_err(wrap)?;
            specs.insert(&rec.anchor_text, spec);
        }
        let spec = &specs[rec.anchor_text.as_str()];
        let (pg, features) = load_record(rec, base_dir, inv).map_err(wrap)?;
        let stage2 = Stage2 {
            weights,
            features: features.as_ref(),
            encoder: None,
        };
        let candidates = score_candidates(&pg, spec, stage2, cfg).map_err(wrap)?;
        let (s1, s2) = best_scores(&candidates, cfg.mode);
        if rec.label == 0 {
            negative_seconds += pg.duration_s();
        }
        rows.push(ScoreRow {
            id: rec.id.clone(),
            label: rec.label,
            s1,
            s2,
        });
        for c in candidates {
            let final_score = match c.s2 {
                None => c.segment.s1,
                Some(s2) if s2 >= cfg.s2_threshold => s2,
                Some(_) => continue,
            };
            detections.push(RecordDetection {
                id: rec.id.clone(),
                detection: Detection {
                    keyword: spec.id.clone(),
                    t_start_s: frame_to_seconds(c.segment.start_frame, pg.frame_shift_s()),
                    t_end_s: frame_to_seconds(c.segment.end_frame + 1, pg.frame_shift_s()),
                    s1: c.segment.s1,
                    s2: c.s2,
                    final_score,
                    mode: cfg.mode,
                },
            });
        }
    }
    Ok(ManifestEval {
        rows,
        detections,
        negative_seconds,
        mode: cfg.mode,
    })
}

/// Writes the per-record best scores as `id,label,s1,s2`.
#[allow(clippy::too_many_arguments)]
pub fn score_dump(
    records: &[PairRecord],
    base_dir: &Path,
    lexicon: &Lexicon,
    inv: &PhonemeInventory,
    fuzzy: &FuzzyMap,
    weights: Option<&MatcherWeights>,
    cfg: &PipelineConfig,
    out: impl AsRef<Path>,
) -> Result<ManifestEval, PipelineError> {
    let eval = evaluate_manifest(records, base_dir, lexicon, inv, fuzzy, weights, cfg)?;
    write_score_csv(out, &eval.rows)?;
    Ok(eval)
}
