//! Translate extractive question-answering datasets in SQuAD 2.0 format and
//! re-align every answer span inside the translated context.
//!
//! The crate is organized bottom-up:
//!
//! * [`squad`] parses, validates and writes the dataset format.
//! * [`text`] holds normalization, word splitting and LCS.
//! * [`providers`] wraps translation and embedding services with caching,
//!   retry and bounded concurrency, plus a deterministic offline embedder.
//! * [`aligner`] scores word windows of the translated context and picks the
//!   answer span.
//! * [`pipeline`] drives a whole dataset through translate, align, filter and
//!   downsample, with checkpoint/resume and a similarity report.
//! * [`metrics`] computes SQuAD-style exact match and F1.

pub mod aligner;
pub mod metrics;
pub mod pipeline;
pub mod providers;
pub mod squad;
pub mod text;

pub use aligner::{
    align_answer, AlignError, AlignmentCandidate, AlignmentQuery, AlignmentResult,
    SimilarityWeights, UpdateRule,
};
pub use metrics::{evaluate_predictions, EvalSummary, MetricsError, PredictionSet};
pub use pipeline::{
    run_pipeline, Pipeline, PipelineConfig, PipelineError, PipelineReport, RecordOutcome,
    RecordStatus, Split,
};
pub use providers::{Embedder, EmbeddingVector, ProviderConfig, ProviderError, Translator};
pub use squad::{parse_dataset, serialize_dataset, validate_dataset, Dataset, FormatError};
