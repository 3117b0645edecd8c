//! Two-stage user-defined keyword spotting.
//!
//! Stage one runs a streaming CTC keyword search over phoneme posteriorgrams
//! and proposes candidate segments with a score `s1`. Stage two verifies each
//! candidate with a small query-by-text phoneme matcher that aligns audio
//! features to the keyword's phoneme embeddings and yields `s2`. The
//! [`metrics`] module scores the result with AUC, EER and recall at a fixed
//! false-alarm rate.

pub mod cli;
pub mod corpus;
pub mod ctc;
pub mod matcher;
pub mod metrics;
pub mod phoneme;
pub mod pipeline;
pub mod posteriorgram;
