use crate::phoneme::{FuzzyMap, PhonemeSeq};

use super::SearchError;

/// Sum of the posteriors of every member of a fuzzy set, capped at 1.
pub fn aggregate_fuzzy(frame: &[f32], fuzzy_set: &[usize]) -> f64 {
    fuzzy_set
        .iter()
        .map(|&f| f64::from(frame[f]))
        .sum::<f64>()
        .min(1.0)
}

/// Expanded CTC label sequence `blank, x1, blank, x2, ..., xL, blank` with the
/// fuzzy set attached to every keyword state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordAutomaton {
    labels: Vec<usize>,
    fuzzy_sets: Vec<Vec<usize>>,
    keyword: PhonemeSeq,
    blank: usize,
    vocab_size: usize,
}

pub fn build_automaton(
    seq: &PhonemeSeq,
    fuzzy: &FuzzyMap,
) -> Result<KeywordAutomaton, SearchError> {
    KeywordAutomaton::new(seq, fuzzy)
}

impl KeywordAutomaton {
    pub fn new(seq: &PhonemeSeq, fuzzy: &FuzzyMap) -> Result<Self, SearchError> {
        if seq.is_empty() {
            return Err(SearchError::EmptyKeyword);
        }
        let blank = 0;
        let mut labels = Vec::with_capacity(2 * seq.len() + 1);
        let mut fuzzy_sets = Vec::with_capacity(2 * seq.len() + 1);
        for &tok in seq.tokens() {
            labels.push(blank);
            fuzzy_sets.push(vec![blank]);
            labels.push(tok);
            fuzzy_sets.push(fuzzy.fuzzy_set(tok).to_vec());
        }
        labels.push(blank);
        fuzzy_sets.push(vec![blank]);
        Ok(Self {
            labels,
            fuzzy_sets,
            keyword: seq.clone(),
            blank,
            vocab_size: fuzzy.vocab_size(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    /// Keyword length L.
    pub fn keyword_len(&self) -> usize {
        self.keyword.len()
    }

    pub fn keyword(&self) -> &PhonemeSeq {
        &self.keyword
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, state: usize) -> usize {
        self.labels[state]
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_blank_state(&self, state: usize) -> bool {
        state.is_multiple_of(2)
    }

    pub fn fuzzy_set(&self, state: usize) -> &[usize] {
        &self.fuzzy_sets[state]
    }

    /// Whether a path may jump from `state - 2` directly to `state`.
    pub fn can_skip(&self, state: usize) -> bool {
        state >= 2 && !self.is_blank_state(state) && self.labels[state] != self.labels[state - 2]
    }

    /// Emission probability of `state`; fuzzy aggregation applies to keyword
    /// states only.
    pub fn emission(&self, frame: &[f32], state: usize) -> f64 {
        if self.is_blank_state(state) {
            f64::from(frame[self.blank])
        } else {
            aggregate_fuzzy(frame, &self.fuzzy_sets[state])
        }
    }

    pub fn log_emissions(&self, frame: &[f32]) -> Vec<f64> {
        (0..self.num_states())
            .map(|s| self.emission(frame, s).ln())
            .collect()
    }

    pub(crate) fn check_frame(&self, frame: &[f32]) -> Result<(), SearchError> {
        if frame.len() != self.vocab_size {
            return Err(SearchError::DimensionMismatch {
                expected: self.vocab_size,
                found: frame.len(),
            });
        }
        Ok(())
    }

    /// One max-product step: `out[s] = max(prev[s], prev[s-1], prev[s-2]) + log_emit[s]`,
    /// the last term only where skipping is legal. Ties keep the earliest
    /// predecessor in the order stay, advance one, skip.
    pub(crate) fn viterbi_step(
        &self,
        prev: &[f64],
        log_emit: &[f64],
        out: &mut [f64],
        mut backptr: Option<&mut [u8]>,
    ) {
        for s in 0..self.num_states() {
            let mut best = prev[s];
            let mut from = 0u8;
            if s >= 1 && prev[s - 1] > best {
                best = prev[s - 1];
                from = 1;
            }
            if self.can_skip(s) && prev[s - 2] > best {
                best = prev[s - 2];
                from = 2;
            }
            out[s] = best + log_emit[s];
            if let Some(bp) = backptr.as_deref_mut() {
                bp[s] = from;
            }
        }
    }

    /// Scores of a path that begins at the current frame.
    pub(crate) fn initial_scores(&self, log_emit: &[f64]) -> Vec<f64> {
        let mut scores = vec![f64::NEG_INFINITY; self.num_states()];
        scores[0] = log_emit[0];
        scores[1] = log_emit[1];
        scores
    }

    /// Best score over the two accepting states (last phoneme, trailing blank).
    pub(crate) fn final_score(&self, scores: &[f64]) -> f64 {
        let n = self.num_states();
        scores[n - 1].max(scores[n - 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::PhonemeInventory;

    #[test]
    fn fuzzy_sum_examples() {
        let inv = PhonemeInventory::default_english();
        let ay = inv.index_of("AY1").unwrap();
        let ey = inv.index_of("EY1").unwrap();
        let mut frame = vec![0.0f32; inv.len()];
        frame[ay] = 0.3;
        frame[ey] = 0.5;
        frame[0] = 0.2;
        assert!((aggregate_fuzzy(&frame, &[ay, ey]) - 0.8).abs() < 1e-7);

        let inv = PhonemeInventory::from_symbols(["<blk>", "A", "B"]).unwrap();
        let a = inv.index_of("A").unwrap();
        assert!((aggregate_fuzzy(&[0.3, 0.7, 0.0], &[a]) - 0.7).abs() < 1e-7);
        assert!((aggregate_fuzzy(&[0.1, 0.6, 0.3], &[1, 2]) - 0.9).abs() < 1e-7);
        // Rows summing slightly above one are capped.
        assert_eq!(aggregate_fuzzy(&[0.0, 0.60005, 0.4], &[1, 2]), 1.0);
    }

    #[test]
    fn expansion_and_skip_rule() {
        let inv = PhonemeInventory::from_symbols(["<blk>", "A", "B"]).unwrap();
        let id = FuzzyMap::identity(&inv);
        let one =
            KeywordAutomaton::new(&PhonemeSeq::from_symbols(&["A"], &inv).unwrap(), &id).unwrap();
        assert_eq!(one.labels(), [0, 1, 0]);

        let aa = KeywordAutomaton::new(&PhonemeSeq::from_symbols(&["A", "A"], &inv).unwrap(), &id)
            .unwrap();
        assert_eq!(aa.labels(), [0, 1, 0, 1, 0]);
        assert!(!aa.can_skip(3));

        let ab = KeywordAutomaton::new(&PhonemeSeq::from_symbols(&["A", "B"], &inv).unwrap(), &id)
            .unwrap();
        assert!(ab.can_skip(3));
        assert!(!ab.can_skip(2));
        assert!(!ab.can_skip(1));
    }

    #[test]
    fn fuzzy_sets_attach_to_keyword_states() {
        let inv = PhonemeInventory::default_english();
        let fuzzy = FuzzyMap::parse("AY1 EY1", &inv).unwrap();
        let seq = PhonemeSeq::from_symbols(&["HH", "EY1"], &inv).unwrap();
        let a = build_automaton(&seq, &fuzzy).unwrap();
        assert_eq!(a.num_states(), 5);
        let mut expected = vec![inv.index_of("AY1").unwrap(), inv.index_of("EY1").unwrap()];
        expected.sort();
        assert_eq!(a.fuzzy_set(3), expected.as_slice());
        assert_eq!(a.fuzzy_set(1), [inv.index_of("HH").unwrap()]);
        assert_eq!(a.fuzzy_set(0), [0]);
    }
}
