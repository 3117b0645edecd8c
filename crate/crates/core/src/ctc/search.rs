use std::collections::VecDeque;

use crate::posteriorgram::{Frames, Posteriorgram};

use super::{viterbi_align, KeywordAutomaton, SearchError};

/// Frames per phoneme assumed when deriving the default gap between hits.
pub const DEFAULT_FRAMES_PER_PHONEME: usize = 4;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Minimum S1 for a candidate to be emitted.
    pub threshold: f64,
    /// Frames without S1 improvement before the pending peak is emitted.
    pub patience: usize,
    /// Frames between the end of a hit and the earliest start of the next
    /// one. `None` means `DEFAULT_FRAMES_PER_PHONEME * L`.
    pub min_gap: Option<usize>,
    /// Longest scored span, as a multiple of the keyword length.
    pub max_frames_per_phoneme: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            patience: 5,
            min_gap: None,
            max_frames_per_phoneme: 8,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(SearchError::InvalidConfig(format!(
                "threshold {} must be a non-negative number",
                self.threshold
            )));
        }
        if self.patience == 0 {
            return Err(SearchError::InvalidConfig(
                "patience must be at least 1".into(),
            ));
        }
        if self.max_frames_per_phoneme == 0 {
            return Err(SearchError::InvalidConfig(
                "max_frames_per_phoneme must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn min_gap_for(&self, automaton: &KeywordAutomaton) -> usize {
        self.min_gap
            .unwrap_or(DEFAULT_FRAMES_PER_PHONEME * automaton.keyword_len())
    }

    /// Longest span (in frames) a keyword path may cover.
    pub fn max_span_for(&self, automaton: &KeywordAutomaton) -> usize {
        automaton
            .keyword_len()
            .saturating_mul(self.max_frames_per_phoneme)
    }
}

/// A stage-one hit.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSegment {
    /// First frame aligned to a keyword phoneme.
    pub start_frame: usize,
    /// Last frame aligned to a keyword phoneme.
    pub end_frame: usize,
    /// Length-normalized best-path probability over `score_start..=score_end`.
    pub s1: f64,
    pub score_start: usize,
    pub score_end: usize,
    /// Automaton state of the best path at each frame of the scored span.
    pub alignment: Vec<usize>,
}

impl CandidateSegment {
    /// Keyword labels along the alignment, one per scored frame.
    pub fn labels(&self, automaton: &KeywordAutomaton) -> Vec<usize> {
        self.alignment.iter().map(|&s| automaton.label(s)).collect()
    }

    /// CTC collapse of the alignment: merge repeats, drop blanks.
    pub fn collapsed(&self, automaton: &KeywordAutomaton) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev = None;
        for &s in &self.alignment {
            if prev != Some(s) && !automaton.is_blank_state(s) {
                out.push(automaton.label(s));
            }
            prev = Some(s);
        }
        out
    }
}

/// Partial paths that began on the same frame.
#[derive(Debug, Clone)]
struct Token {
    start: usize,
    scores: Vec<f64>,
    /// Frame at which the best path into each state entered the keyword.
    onsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    s1: f64,
    start: usize,
    end: usize,
    onset: usize,
    stale_frames: usize,
}

const NO_ONSET: usize = usize::MAX;

/// Streaming search state for one (stream, keyword) pair.
///
/// Every frame opens a new token so a keyword may begin anywhere; tokens are
/// kept per start frame because the length-normalized score of a longer
/// path can beat a shorter path with a higher raw probability.
#[derive(Debug, Clone)]
pub struct SearchState {
    frame: usize,
    tokens: VecDeque<Token>,
    history: VecDeque<Vec<f32>>,
    history_start: usize,
    earliest_start: usize,
    pending: Option<Peak>,
    scratch: Vec<f64>,
    scratch_onsets: Vec<usize>,
    backptr: Vec<u8>,
}

impl SearchState {
    pub fn new(automaton: &KeywordAutomaton) -> Self {
        Self {
            frame: 0,
            tokens: VecDeque::new(),
            history: VecDeque::new(),
            history_start: 0,
            earliest_start: 0,
            pending: None,
            scratch: vec![f64::NEG_INFINITY; automaton.num_states()],
            scratch_onsets: vec![NO_ONSET; automaton.num_states()],
            backptr: vec![0; automaton.num_states()],
        }
    }

    pub fn frames_consumed(&self) -> usize {
        self.frame
    }

    /// Consumes one posteriorgram row; returns a hit once its peak is confirmed.
    pub fn step(
        &mut self,
        frame: &[f32],
        automaton: &KeywordAutomaton,
        config: &SearchConfig,
    ) -> Result<Option<CandidateSegment>, SearchError> {
        automaton.check_frame(frame)?;
        config.validate()?;
        let t = self.frame;
        let max_span = config.max_span_for(automaton);
        let log_emit = automaton.log_emissions(frame);

        for token in self.tokens.iter_mut() {
            automaton.viterbi_step(
                &token.scores,
                &log_emit,
                &mut self.scratch,
                Some(&mut self.backptr),
            );
            for (s, &from) in self.backptr.iter().enumerate() {
                let pred = s - usize::from(from);
                self.scratch_onsets[s] = if s == 0 {
                    NO_ONSET
                } else if pred == 0 {
                    t
                } else {
                    token.onsets[pred]
                };
            }
            std::mem::swap(&mut token.scores, &mut self.scratch);
            std::mem::swap(&mut token.onsets, &mut self.scratch_onsets);
        }
        self.tokens.retain(|tok| {
            t - tok.start < max_span && tok.scores.iter().any(|&s| s > f64::NEG_INFINITY)
        });
        if t >= self.earliest_start {
            let scores = automaton.initial_scores(&log_emit);
            if scores.iter().any(|&s| s > f64::NEG_INFINITY) {
                let mut onsets = vec![NO_ONSET; scores.len()];
                onsets[1] = t;
                self.tokens.push_back(Token {
                    start: t,
                    scores,
                    onsets,
                });
            }
        }

        self.history.push_back(frame.to_vec());
        let keep = max_span.saturating_add(config.patience).saturating_add(1);
        while self.history.len() > keep {
            self.history.pop_front();
            self.history_start += 1;
        }
        self.frame += 1;

        // Tokens are ordered by start, so strict comparison keeps the longest
        // path among equal scores.
        let n = automaton.num_states();
        let mut best: Option<(f64, usize, usize)> = None;
        for tok in &self.tokens {
            let log_p = automaton.final_score(&tok.scores);
            if log_p == f64::NEG_INFINITY {
                continue;
            }
            let s1 = (log_p / (t - tok.start + 1) as f64).exp();
            if best.is_none_or(|(b, _, _)| s1 > b) {
                let state = if tok.scores[n - 1] >= tok.scores[n - 2] {
                    n - 1
                } else {
                    n - 2
                };
                best = Some((s1, tok.start, tok.onsets[state]));
            }
        }

        // On an exact tie, a later frame wins when it keeps the keyword onset,
        // so plateaus extend to the end of the keyword evidence.
        let improved = best.filter(|&(s1, _, onset)| {
            s1 >= config.threshold
                && self
                    .pending
                    .is_none_or(|p| s1 > p.s1 || (s1 == p.s1 && onset <= p.onset))
        });
        match (improved, self.pending.as_mut()) {
            (Some((s1, start, onset)), _) => {
                self.pending = Some(Peak {
                    s1,
                    start,
                    end: t,
                    onset,
                    stale_frames: 0,
                })
            }
            (None, Some(p)) => p.stale_frames += 1,
            (None, None) => {}
        }

        if self
            .pending
            .is_some_and(|p| p.stale_frames >= config.patience)
        {
            return Ok(self.emit(automaton, config));
        }
        Ok(None)
    }

    /// End of stream: emits any peak still waiting for confirmation.
    pub fn finish(
        &mut self,
        automaton: &KeywordAutomaton,
        config: &SearchConfig,
    ) -> Option<CandidateSegment> {
        self.emit(automaton, config)
    }

    fn emit(
        &mut self,
        automaton: &KeywordAutomaton,
        config: &SearchConfig,
    ) -> Option<CandidateSegment> {
        let peak = self.pending.take()?;
        let rows: Vec<f32> = self
            .history
            .range(peak.start - self.history_start..=peak.end - self.history_start)
            .flatten()
            .copied()
            .collect();
        let frames = Frames::new(&rows, automaton.vocab_size());
        let alignment =
            viterbi_align(frames, automaton).expect("history rows match the automaton vocabulary");
        debug_assert!(
            ((alignment.log_prob / frames.len() as f64).exp() - peak.s1).abs() < 1e-9,
            "token score disagrees with re-alignment"
        );
        let first = alignment
            .states
            .iter()
            .position(|&s| !automaton.is_blank_state(s))
            .expect("accepted path visits keyword states");
        let last = alignment
            .states
            .iter()
            .rposition(|&s| !automaton.is_blank_state(s))
            .expect("accepted path visits keyword states");
        let hit = CandidateSegment {
            start_frame: peak.start + first,
            end_frame: peak.start + last,
            s1: peak.s1,
            score_start: peak.start,
            score_end: peak.end,
            alignment: alignment.states,
        };

        self.earliest_start = hit.end_frame + 1 + config.min_gap_for(automaton);
        let earliest = self.earliest_start;
        self.tokens.retain(|tok| tok.start >= earliest);
        Some(hit)
    }
}

/// Runs the streaming search over a whole posteriorgram.
pub fn search(
    pg: &Posteriorgram,
    automaton: &KeywordAutomaton,
    config: &SearchConfig,
) -> Result<Vec<CandidateSegment>, SearchError> {
    config.validate()?;
    let mut state = SearchState::new(automaton);
    let mut hits = Vec::new();
    for row in pg.frames().rows() {
        if let Some(hit) = state.step(row, automaton, config)? {
            hits.push(hit);
        }
    }
    hits.extend(state.finish(automaton, config));
    hits.sort_by_key(|h| h.start_frame);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::build_automaton;
    use crate::phoneme::{FuzzyMap, PhonemeInventory, PhonemeSeq};
    use crate::posteriorgram::{synthesize, synthesize_stream, Plant, SynthSpec};

    fn inv3() -> PhonemeInventory {
        PhonemeInventory::from_symbols(["<blk>", "A", "B"]).unwrap()
    }

    #[test]
    fn perfect_single_frame_match() {
        let inv = inv3();
        let seq = PhonemeSeq::from_symbols(&["A"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let pg = Posteriorgram::from_rows(&[vec![0.0, 1.0, 0.0]], 0.01).unwrap();
        let hits = search(&pg, &aut, &SearchConfig::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].s1, 1.0);
        assert_eq!((hits[0].start_frame, hits[0].end_frame), (0, 0));
        assert_eq!(hits[0].collapsed(&aut), seq.tokens());
    }

    #[test]
    fn all_blank_stream_never_hits() {
        let inv = inv3();
        let seq = PhonemeSeq::from_symbols(&["A", "B"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let pg = Posteriorgram::from_rows(&vec![vec![1.0, 0.0, 0.0]; 50], 0.01).unwrap();
        let cfg = SearchConfig {
            threshold: 0.0,
            ..SearchConfig::default()
        };
        assert!(search(&pg, &aut, &cfg).unwrap().is_empty());
    }

    #[test]
    fn noiseless_plant_is_recovered_exactly() {
        let inv = PhonemeInventory::default_english();
        let seq = PhonemeSeq::from_symbols(&["HH", "EY1", "S"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let spec = SynthSpec {
            keyword: seq,
            total_frames: 60,
            frames_per_phoneme: 4,
            insert_at: 17,
            peak_prob: 1.0,
            seed: 1,
        };
        let (pg, truth) = synthesize(&spec, &inv).unwrap();
        let hits = search(&pg, &aut, &SearchConfig::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].s1, 1.0);
        assert_eq!(
            (hits[0].start_frame, hits[0].end_frame),
            (truth.start_frame, truth.end_frame)
        );
    }

    #[test]
    fn noiseless_repeated_phoneme_is_recovered() {
        let inv = PhonemeInventory::default_english();
        let seq = PhonemeSeq::from_symbols(&["SH", "SH", "AH2"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let spec = SynthSpec {
            keyword: seq,
            total_frames: 50,
            frames_per_phoneme: 3,
            insert_at: 20,
            peak_prob: 1.0,
            seed: 2,
        };
        let (pg, truth) = synthesize(&spec, &inv).unwrap();
        let hits = search(&pg, &aut, &SearchConfig::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].s1, 1.0);
        assert_eq!(
            (hits[0].start_frame, hits[0].end_frame),
            (truth.start_frame, truth.end_frame)
        );
    }

    #[test]
    fn threshold_above_one_never_emits() {
        let inv = PhonemeInventory::default_english();
        let seq = PhonemeSeq::from_symbols(&["HH", "EY1"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let spec = SynthSpec {
            keyword: seq,
            total_frames: 40,
            frames_per_phoneme: 3,
            insert_at: 10,
            peak_prob: 0.99,
            seed: 5,
        };
        let (pg, _) = synthesize(&spec, &inv).unwrap();
        let cfg = SearchConfig {
            threshold: 1.0 + 1e-9,
            ..SearchConfig::default()
        };
        assert!(search(&pg, &aut, &cfg).unwrap().is_empty());
    }

    #[test]
    fn two_plants_give_two_hits() {
        let inv = PhonemeInventory::default_english();
        let seq = PhonemeSeq::from_symbols(&["S", "N", "IH1", "P", "S"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let cfg = SearchConfig::default();
        let gap = cfg.min_gap_for(&aut);
        let first = Plant {
            keyword: seq.clone(),
            insert_at: 10,
            frames_per_phoneme: 4,
        };
        let second = Plant {
            insert_at: 10 + 20 + gap,
            ..first.clone()
        };
        for peak in [1.0, 0.95] {
            let (pg, truths) =
                synthesize_stream(120, &[first.clone(), second.clone()], peak, 42, &inv).unwrap();
            let hits = search(&pg, &aut, &cfg).unwrap();
            assert_eq!(hits.len(), 2, "peak {peak}");
            for (hit, truth) in hits.iter().zip(&truths) {
                if peak == 1.0 {
                    assert_eq!(
                        (hit.start_frame, hit.end_frame),
                        (truth.start_frame, truth.end_frame)
                    );
                } else {
                    // Near-ties inside the first and last phoneme may trim a few frames.
                    assert!(
                        hit.start_frame >= truth.start_frame
                            && hit.start_frame < truth.start_frame + 4
                    );
                    assert!(
                        hit.end_frame <= truth.end_frame && hit.end_frame + 4 > truth.end_frame
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let inv = inv3();
        let seq = PhonemeSeq::from_symbols(&["A"], &inv).unwrap();
        let aut = build_automaton(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let mut st = SearchState::new(&aut);
        assert!(matches!(
            st.step(&[0.5, 0.5], &aut, &SearchConfig::default()),
            Err(SearchError::DimensionMismatch { .. })
        ));
        let cfg = SearchConfig {
            patience: 0,
            ..SearchConfig::default()
        };
        assert!(matches!(
            st.step(&[1.0, 0.0, 0.0], &aut, &cfg),
            Err(SearchError::InvalidConfig(_))
        ));
    }
}
