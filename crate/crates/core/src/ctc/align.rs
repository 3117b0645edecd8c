use crate::phoneme::PhonemeSeq;
use crate::posteriorgram::Frames;

use super::{KeywordAutomaton, SearchError};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-probability of `seq` under the posteriorgram, summed over every CTC
/// alignment. Plain posteriors, no fuzzy aggregation. Returns `-inf` when no
/// alignment fits in the available frames.
pub fn ctc_forward(frames: Frames<'_>, seq: &PhonemeSeq) -> Result<f64, SearchError> {
    let vocab = frames.vocab_size();
    if let Some(&bad) = seq.tokens().iter().find(|&&t| t >= vocab) {
        return Err(SearchError::DimensionMismatch {
            expected: bad + 1,
            found: vocab,
        });
    }
    if frames.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let blank = 0;
    let mut labels = vec![blank];
    for &t in seq.tokens() {
        labels.push(t);
        labels.push(blank);
    }
    let n = labels.len();
    let skip = |s: usize| s >= 2 && labels[s] != blank && labels[s] != labels[s - 2];

    let mut alpha = vec![f64::NEG_INFINITY; n];
    let first = frames.row(0);
    alpha[0] = f64::from(first[labels[0]]).ln();
    alpha[1] = f64::from(first[labels[1]]).ln();
    let mut next = vec![f64::NEG_INFINITY; n];
    for row in frames.rows().skip(1) {
        for s in 0..n {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if skip(s) {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = acc + f64::from(row[labels[s]]).ln();
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(log_add(alpha[n - 1], alpha[n - 2]))
}

/// Best single path through a keyword automaton over a frame slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub log_prob: f64,
    /// Automaton state per frame; empty when no path fits.
    pub states: Vec<usize>,
}

impl Alignment {
    pub fn is_feasible(&self) -> bool {
        self.log_prob > f64::NEG_INFINITY
    }
}

/// Max-product CTC alignment confined to exactly `frames`: the path starts in
/// state 0 or 1 on the first frame and ends in one of the two accepting
/// states on the last frame. Keyword states emit fuzzy-aggregated posteriors.
pub fn viterbi_align(
    frames: Frames<'_>,
    automaton: &KeywordAutomaton,
) -> Result<Alignment, SearchError> {
    if frames.vocab_size() != automaton.vocab_size() {
        return Err(SearchError::DimensionMismatch {
            expected: automaton.vocab_size(),
            found: frames.vocab_size(),
        });
    }
    let infeasible = Alignment {
        log_prob: f64::NEG_INFINITY,
        states: Vec::new(),
    };
    let n_frames = frames.len();
    if n_frames == 0 {
        return Ok(infeasible);
    }
    let n = automaton.num_states();
    let mut backptr = vec![0u8; n_frames * n];
    let mut scores = automaton.initial_scores(&automaton.log_emissions(frames.row(0)));
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..n_frames {
        let log_emit = automaton.log_emissions(frames.row(t));
        automaton.viterbi_step(
            &scores,
            &log_emit,
            &mut next,
            Some(&mut backptr[t * n..(t + 1) * n]),
        );
        std::mem::swap(&mut scores, &mut next);
    }
    let log_prob = automaton.final_score(&scores);
    if log_prob == f64::NEG_INFINITY {
        return Ok(infeasible);
    }
    let mut state = if scores[n - 1] >= scores[n - 2] {
        n - 1
    } else {
        n - 2
    };
    let mut states = vec![0; n_frames];
    for t in (0..n_frames).rev() {
        states[t] = state;
        if t > 0 {
            state -= usize::from(backptr[t * n + state]);
        }
    }
    Ok(Alignment { log_prob, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::{FuzzyMap, PhonemeInventory};
    use crate::posteriorgram::Posteriorgram;

    fn inv3() -> PhonemeInventory {
        PhonemeInventory::from_symbols(["<blk>", "A", "B"]).unwrap()
    }

    #[test]
    fn forward_single_frame() {
        let inv = inv3();
        let pg = Posteriorgram::from_rows(&[vec![0.4, 0.6, 0.0]], 0.01).unwrap();
        let seq = PhonemeSeq::from_symbols(&["A"], &inv).unwrap();
        let lp = ctc_forward(pg.frames(), &seq).unwrap();
        assert!((lp - 0.6f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn forward_three_paths() {
        let inv = inv3();
        let pg =
            Posteriorgram::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0]], 0.01).unwrap();
        let seq = PhonemeSeq::from_symbols(&["A"], &inv).unwrap();
        let lp = ctc_forward(pg.frames(), &seq).unwrap();
        assert!((lp - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_infeasible_is_neg_inf() {
        let inv = inv3();
        let pg =
            Posteriorgram::from_rows(&[vec![0.2, 0.4, 0.4], vec![0.2, 0.4, 0.4]], 0.01).unwrap();
        // A A needs a blank between the repeats: three frames minimum.
        let seq = PhonemeSeq::from_symbols(&["A", "A"], &inv).unwrap();
        assert_eq!(ctc_forward(pg.frames(), &seq).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn viterbi_one_hot_spelling() {
        let inv = inv3();
        let pg = Posteriorgram::from_rows(
            &[
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            0.01,
        )
        .unwrap();
        let seq = PhonemeSeq::from_symbols(&["A", "B"], &inv).unwrap();
        let aut = KeywordAutomaton::new(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let al = viterbi_align(pg.frames(), &aut).unwrap();
        assert_eq!(al.log_prob, 0.0);
        assert_eq!(al.states, [1, 2, 3]);
    }

    #[test]
    fn viterbi_short_slice_is_infeasible() {
        let inv = inv3();
        let pg = Posteriorgram::from_rows(&[vec![0.2, 0.4, 0.4]], 0.01).unwrap();
        let seq = PhonemeSeq::from_symbols(&["A", "B"], &inv).unwrap();
        let aut = KeywordAutomaton::new(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let al = viterbi_align(pg.frames(), &aut).unwrap();
        assert!(!al.is_feasible());
        assert!(al.states.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let inv = inv3();
        let seq = PhonemeSeq::from_symbols(&["B"], &inv).unwrap();
        let aut = KeywordAutomaton::new(&seq, &FuzzyMap::identity(&inv)).unwrap();
        let pg = Posteriorgram::from_rows(&[vec![0.5, 0.5]], 0.01).unwrap();
        assert!(matches!(
            viterbi_align(pg.frames(), &aut),
            Err(SearchError::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(ctc_forward(pg.frames(), &seq).is_err());
    }
}
