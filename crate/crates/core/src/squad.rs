//! SQuAD 2.0 object tree with lossless parse and serialize.
//!
//! Keys this crate does not know about are kept in an `extra` map on every
//! node and written back out, so third-party annotations survive a pipeline
//! run. Output records may carry one additional per-question key,
//! `alignment`, holding the aligner's score, proximity and stride.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::text::char_slice;

type Extra = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: String,
    #[serde(rename = "data")]
    pub articles: Vec<Article>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<Qa>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qa {
    pub id: String,
    pub question: String,
    pub answers: Vec<Answer>,
    #[serde(default)]
    pub is_impossible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_answers: Option<Vec<Answer>>,
    #[serde(rename = "alignment", default, skip_serializing_if = "Option::is_none")]
    pub alignment_meta: Option<AlignmentMeta>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Character (not byte) offset into the owning paragraph's context.
    pub answer_start: usize,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Audit record of how a translated answer was placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMeta {
    pub similarity: f64,
    pub proximity: f64,
    #[serde(rename = "stride")]
    pub window_stride_used: usize,
}

impl Answer {
    pub fn new(text: impl Into<String>, answer_start: usize) -> Self {
        Answer {
            text: text.into(),
            answer_start,
            extra: Extra::new(),
        }
    }
}

impl Qa {
    pub fn answerable(
        id: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<Answer>,
    ) -> Self {
        Qa {
            id: id.into(),
            question: question.into(),
            answers,
            is_impossible: false,
            plausible_answers: None,
            alignment_meta: None,
            extra: Extra::new(),
        }
    }

    pub fn unanswerable(id: impl Into<String>, question: impl Into<String>) -> Self {
        Qa {
            id: id.into(),
            question: question.into(),
            answers: Vec::new(),
            is_impossible: true,
            plausible_answers: None,
            alignment_meta: None,
            extra: Extra::new(),
        }
    }
}

impl Paragraph {
    pub fn new(context: impl Into<String>, qas: Vec<Qa>) -> Self {
        Paragraph {
            context: context.into(),
            qas,
            extra: Extra::new(),
        }
    }
}

impl Article {
    pub fn new(title: impl Into<String>, paragraphs: Vec<Paragraph>) -> Self {
        Article {
            title: title.into(),
            paragraphs,
            extra: Extra::new(),
        }
    }
}

impl Dataset {
    pub fn new(version: impl Into<String>, articles: Vec<Article>) -> Self {
        Dataset {
            version: version.into(),
            articles,
            extra: Extra::new(),
        }
    }

    pub fn qas(&self) -> impl Iterator<Item = &Qa> {
        self.articles
            .iter()
            .flat_map(|a| a.paragraphs.iter())
            .flat_map(|p| p.qas.iter())
    }

    pub fn question_count(&self) -> usize {
        self.qas().count()
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    MalformedSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(Violation),
    #[error("failed to encode dataset: {0}")]
    Encode(#[from] serde_json::Error),
}

pub fn parse_dataset(raw: &[u8]) -> Result<Dataset, FormatError> {
    let mut de = serde_json::Deserializer::from_slice(raw);
    let result: Result<Dataset, _> = serde_path_to_error::deserialize(&mut de);
    let dataset = match result {
        Ok(d) => d,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            return Err(if inner.is_data() {
                FormatError::SchemaViolation {
                    path: squad_path(&path),
                    message: inner.to_string(),
                }
            } else {
                FormatError::MalformedSyntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            });
        }
    };
    de.end().map_err(|e| FormatError::MalformedSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(dataset)
}

// serde_path_to_error reports `data[0].paragraphs[1]`; "." means the root
fn squad_path(p: &str) -> String {
    if p == "." || p.is_empty() {
        "$".to_string()
    } else {
        format!("$.{p}")
    }
}

/// Writes the dataset as compact JSON. Refuses datasets whose answers do not
/// index their context.
pub fn serialize_dataset(d: &Dataset) -> Result<Vec<u8>, FormatError> {
    if let Some(v) = validate_dataset(d).into_iter().find(|v| v.kind.is_offset()) {
        return Err(FormatError::InvariantViolation(v));
    }
    Ok(serde_json::to_vec(d)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DuplicateId {
        id: String,
        first: String,
    },
    OffsetMismatch {
        expected: String,
        found: String,
    },
    OffsetOutOfRange {
        answer_start: usize,
        context_len: usize,
    },
    ImpossibleWithAnswers,
    AnswerableWithoutAnswers,
    EmptyContext,
    SimilarityOutOfRange(f64),
}

impl ViolationKind {
    fn is_offset(&self) -> bool {
        matches!(
            self,
            ViolationKind::OffsetMismatch { .. } | ViolationKind::OffsetOutOfRange { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::DuplicateId { id, first } => {
                write!(
                    f,
                    "{}: duplicate id {id:?} (first seen at {first})",
                    self.path
                )
            }
            ViolationKind::OffsetMismatch { expected, found } => write!(
                f,
                "{}: answer text {expected:?} does not match context text {found:?}",
                self.path
            ),
            ViolationKind::OffsetOutOfRange {
                answer_start,
                context_len,
            } => write!(
                f,
                "{}: answer at {answer_start} runs past context of {context_len} chars",
                self.path
            ),
            ViolationKind::ImpossibleWithAnswers => {
                write!(f, "{}: is_impossible question has answers", self.path)
            }
            ViolationKind::AnswerableWithoutAnswers => {
                write!(f, "{}: answerable question has no answers", self.path)
            }
            ViolationKind::EmptyContext => {
                write!(f, "{}: empty context with answerable questions", self.path)
            }
            ViolationKind::SimilarityOutOfRange(s) => {
                write!(f, "{}: alignment similarity {s} outside [0, 1]", self.path)
            }
        }
    }
}

/// Collects every violated invariant; an empty result means the dataset is
/// valid.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, String> = HashMap::new();
    for (ai, article) in d.articles.iter().enumerate() {
        for (pi, para) in article.paragraphs.iter().enumerate() {
            let ppath = format!("$.data[{ai}].paragraphs[{pi}]");
            let context_len = para.context.chars().count();
            if para.context.is_empty() && para.qas.iter().any(|q| !q.is_impossible) {
                out.push(Violation {
                    path: ppath.clone(),
                    kind: ViolationKind::EmptyContext,
                });
            }
            for (qi, qa) in para.qas.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                if let Some(first) = seen.get(qa.id.as_str()) {
                    out.push(Violation {
                        path: qpath.clone(),
                        kind: ViolationKind::DuplicateId {
                            id: qa.id.clone(),
                            first: first.clone(),
                        },
                    });
                } else {
                    seen.insert(&qa.id, qpath.clone());
                }
                if qa.is_impossible && !qa.answers.is_empty() {
                    out.push(Violation {
                        path: qpath.clone(),
                        kind: ViolationKind::ImpossibleWithAnswers,
                    });
                }
                if !qa.is_impossible && qa.answers.is_empty() {
                    out.push(Violation {
                        path: qpath.clone(),
                        kind: ViolationKind::AnswerableWithoutAnswers,
                    });
                }
                if let Some(meta) = &qa.alignment_meta {
                    if !(0.0..=1.0).contains(&meta.similarity) {
                        out.push(Violation {
                            path: format!("{qpath}.alignment"),
                            kind: ViolationKind::SimilarityOutOfRange(meta.similarity),
                        });
                    }
                }
                for (xi, ans) in qa.answers.iter().enumerate() {
                    let apath = format!("{qpath}.answers[{xi}]");
                    if let Some(v) = check_offset(&para.context, context_len, ans, apath) {
                        out.push(v);
                    }
                }
            }
        }
    }
    out
}

fn check_offset(
    context: &str,
    context_len: usize,
    ans: &Answer,
    path: String,
) -> Option<Violation> {
    let len = ans.text.chars().count();
    match char_slice(context, ans.answer_start, len) {
        Some(found) if found == ans.text => None,
        Some(found) => Some(Violation {
            path,
            kind: ViolationKind::OffsetMismatch {
                expected: ans.text.clone(),
                found: found.to_string(),
            },
        }),
        None => Some(Violation {
            path,
            kind: ViolationKind::OffsetOutOfRange {
                answer_start: ans.answer_start,
                context_len,
            },
        }),
    }
}
