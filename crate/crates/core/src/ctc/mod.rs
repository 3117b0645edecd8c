//! Stage one: CTC keyword automaton, exact forward/Viterbi scoring and the
//! streaming keyword search that produces scored candidate segments.

mod align;
mod automaton;
mod search;

pub use align::{ctc_forward, viterbi_align, Alignment};
pub use automaton::{aggregate_fuzzy, build_automaton, KeywordAutomaton};
pub use search::{search, CandidateSegment, SearchConfig, SearchState};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("frame has {found} probabilities, automaton expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
}
