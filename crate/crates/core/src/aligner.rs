//! Answer-span alignment inside a translated context.
//!
//! Every window of consecutive context words is scored against the
//! translated answer with
//!
//! ```text
//! score = w1 * clamp(cos(emb(answer), emb(window)), 0, 1) + w2 * lcs_sim(window, answer)
//! ```
//!
//! Windows start at each word `i` and span `answer_words + s` words for
//! `s` in `0..=max_stride`, so translations that gained or lost a few words
//! can still be matched. Among candidates, position is compared through
//! *proximity*: the distance between the window's relative character
//! position in the translated context and the original answer's relative
//! position in the source context.
//!
//! Two selection rules are provided:
//!
//! * [`UpdateRule::Lexicographic`] maximizes score, breaks near-ties
//!   (within [`SCORE_TIE_EPSILON`]) by smallest proximity, then by smallest
//!   character offset, then by enumeration order.
//! * [`UpdateRule::PaperLiteral`] scans in enumeration order and replaces the
//!   incumbent only when a window has both a strictly higher score and a
//!   strictly smaller proximity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{cosine_similarity, Embedder, EmbeddingVector, ProviderError};
use crate::text::{lcs_similarity_chars, normalize_text, split_words, WordSequence};

pub const SCORE_TIE_EPSILON: f64 = 1e-9;
pub const DEFAULT_MAX_STRIDE: usize = 3;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("translated context has no words")]
    EmptyContext,
    #[error("translated answer is empty")]
    EmptyAnswer,
    #[error("answer has {answer_words} words but context only {context_words}")]
    NoFeasibleWindow {
        answer_words: usize,
        context_words: usize,
    },
    #[error("original answer position {0} outside [0, 1]")]
    InvalidPosition(f64),
    #[error("invalid weights w1={w1}, w2={w2}: both must be non-negative and sum to 1")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Convex weights of the embedding-cosine and LCS terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            w1: 2.0 / 3.0,
            w2: 1.0 / 3.0,
        }
    }
}

impl SimilarityWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, AlignError> {
        let w = SimilarityWeights { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        let ok = self.w1 >= 0.0
            && self.w2 >= 0.0
            && ((self.w1 + self.w2) - 1.0).abs() <= WEIGHT_SUM_TOLERANCE;
        if ok {
            Ok(())
        } else {
            Err(AlignError::InvalidWeights {
                w1: self.w1,
                w2: self.w2,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    #[default]
    Lexicographic,
    PaperLiteral,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Lexicographic => "lexicographic",
            UpdateRule::PaperLiteral => "paper_literal",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexicographic" => Ok(UpdateRule::Lexicographic),
            "paper_literal" | "paper-literal" => Ok(UpdateRule::PaperLiteral),
            other => Err(format!(
                "unknown update rule {other:?} (expected lexicographic or paper_literal)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentQuery<'a> {
    pub translated_context: &'a str,
    pub translated_answer: &'a str,
    /// Original `answer_start` divided by the original context length.
    pub original_answer_rel_pos: f64,
    pub max_stride: usize,
}

impl<'a> AlignmentQuery<'a> {
    pub fn new(
        translated_context: &'a str,
        translated_answer: &'a str,
        original_answer_rel_pos: f64,
    ) -> Self {
        AlignmentQuery {
            translated_context,
            translated_answer,
            original_answer_rel_pos,
            max_stride: DEFAULT_MAX_STRIDE,
        }
    }

    pub fn with_max_stride(mut self, max_stride: usize) -> Self {
        self.max_stride = max_stride;
        self
    }
}

/// A contiguous run of context words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub word_index: usize,
    pub stride: usize,
    pub text: String,
    pub char_start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCandidate {
    pub window_text: String,
    pub char_start: usize,
    pub score: f64,
    pub proximity: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub answer_text: String,
    pub answer_start: usize,
    pub score: f64,
    pub proximity: f64,
    pub stride: usize,
    pub candidates_examined: usize,
}

/// Lists windows in scan order: by start word, then by stride. Windows that
/// would run past the last word are omitted.
pub fn enumerate_windows(
    context: &str,
    ctx: &WordSequence,
    answer_word_len: usize,
    max_stride: usize,
) -> Result<Vec<Window>, AlignError> {
    if ctx.is_empty() {
        return Err(AlignError::EmptyContext);
    }
    if answer_word_len == 0 {
        return Err(AlignError::EmptyAnswer);
    }
    let n = ctx.len();
    if answer_word_len > n {
        return Ok(Vec::new());
    }
    // byte offset of every char boundary, plus the end
    let byte_at: Vec<usize> = context
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(context.len()))
        .collect();
    let mut out = Vec::with_capacity((n - answer_word_len + 1) * (max_stride + 1));
    for i in 0..=(n - answer_word_len) {
        for s in 0..=max_stride {
            let last = i + answer_word_len + s - 1;
            if last >= n {
                break;
            }
            let first = &ctx.words[i];
            let from = byte_at[first.char_start];
            let to = byte_at[ctx.words[last].char_end()];
            out.push(Window {
                word_index: i,
                stride: s,
                text: context[from..to].to_string(),
                char_start: first.char_start,
            });
        }
    }
    Ok(out)
}

/// `|window_start / context_len - original_rel_pos|`.
pub fn proximity(original_rel_pos: f64, window_char_start: usize, context_char_len: usize) -> f64 {
    let len = context_char_len.max(1) as f64;
    (window_char_start as f64 / len - original_rel_pos).abs()
}

fn combine(weights: &SimilarityWeights, cosine: f64, lcs: f64) -> f64 {
    (weights.w1 * cosine.clamp(0.0, 1.0) + weights.w2 * lcs).clamp(0.0, 1.0)
}

/// Weighted cosine + LCS score of one window against the answer.
pub fn score_window<E: Embedder + ?Sized>(
    window_text: &str,
    answer_text: &str,
    weights: &SimilarityWeights,
    embed: &E,
) -> Result<f64, AlignError> {
    let answer = PreparedAnswer::new(answer_text, embed)?;
    answer.score(window_text, weights, embed)
}

/// Answer-side values computed once per query.
struct PreparedAnswer {
    chars: Vec<char>,
    embedding: EmbeddingVector,
}

impl PreparedAnswer {
    fn new<E: Embedder + ?Sized>(answer: &str, embed: &E) -> Result<Self, AlignError> {
        let chars: Vec<char> = normalize_text(answer).chars().collect();
        if chars.is_empty() {
            return Err(AlignError::EmptyAnswer);
        }
        Ok(PreparedAnswer {
            chars,
            embedding: embed.embed_text(answer)?,
        })
    }

    fn score<E: Embedder + ?Sized>(
        &self,
        window_text: &str,
        weights: &SimilarityWeights,
        embed: &E,
    ) -> Result<f64, AlignError> {
        let cosine = cosine_similarity(&self.embedding, &embed.embed_text(window_text)?)?;
        let window: Vec<char> = normalize_text(window_text).chars().collect();
        Ok(combine(
            weights,
            cosine,
            lcs_similarity_chars(&window, &self.chars),
        ))
    }
}

/// Scores every window of the query; candidates come back in scan order.
pub fn score_candidates<E: Embedder + ?Sized>(
    q: &AlignmentQuery<'_>,
    weights: &SimilarityWeights,
    embed: &E,
) -> Result<Vec<AlignmentCandidate>, AlignError> {
    weights.validate()?;
    if !(0.0..=1.0).contains(&q.original_answer_rel_pos) {
        return Err(AlignError::InvalidPosition(q.original_answer_rel_pos));
    }
    let ctx = split_words(q.translated_context);
    if ctx.is_empty() {
        return Err(AlignError::EmptyContext);
    }
    let answer_words = split_words(q.translated_answer).len();
    if answer_words == 0 {
        return Err(AlignError::EmptyAnswer);
    }
    if answer_words > ctx.len() {
        return Err(AlignError::NoFeasibleWindow {
            answer_words,
            context_words: ctx.len(),
        });
    }
    let answer = PreparedAnswer::new(q.translated_answer, embed)?;
    enumerate_windows(q.translated_context, &ctx, answer_words, q.max_stride)?
        .into_iter()
        .map(|w| {
            let score = answer.score(&w.text, weights, embed)?;
            Ok(AlignmentCandidate {
                proximity: proximity(q.original_answer_rel_pos, w.char_start, ctx.source_len),
                window_text: w.text,
                char_start: w.char_start,
                score,
                stride: w.stride,
            })
        })
        .collect()
}

fn select_lexicographic(cands: &[AlignmentCandidate]) -> usize {
    let best = cands
        .iter()
        .map(|c| c.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut pick: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if c.score < best - SCORE_TIE_EPSILON {
            continue;
        }
        pick = match pick {
            Some(j) if (cands[j].proximity, cands[j].char_start) <= (c.proximity, c.char_start) => {
                Some(j)
            }
            _ => Some(i),
        };
    }
    pick.expect("non-empty candidate list")
}

fn select_paper_literal(cands: &[AlignmentCandidate]) -> usize {
    let mut best_score = 0.0;
    let mut best_prox = f64::INFINITY;
    let mut pick = None;
    for (i, c) in cands.iter().enumerate() {
        if c.score > best_score && c.proximity < best_prox {
            best_score = c.score;
            best_prox = c.proximity;
            pick = Some(i);
        }
    }
    // nothing ever beat the initial zero score: fall back to the first window
    pick.unwrap_or(0)
}

/// Locates the translated answer in the translated context.
pub fn align_answer<E: Embedder + ?Sized>(
    q: &AlignmentQuery<'_>,
    weights: &SimilarityWeights,
    embed: &E,
    rule: UpdateRule,
) -> Result<AlignmentResult, AlignError> {
    let cands = score_candidates(q, weights, embed)?;
    if cands.is_empty() {
        // unreachable for feasible queries, kept as a typed error
        return Err(AlignError::NoFeasibleWindow {
            answer_words: split_words(q.translated_answer).len(),
            context_words: split_words(q.translated_context).len(),
        });
    }
    let i = match rule {
        UpdateRule::Lexicographic => select_lexicographic(&cands),
        UpdateRule::PaperLiteral => select_paper_literal(&cands),
    };
    let examined = cands.len();
    let best = cands.into_iter().nth(i).expect("index in range");
    Ok(AlignmentResult {
        answer_text: best.window_text,
        answer_start: best.char_start,
        score: best.score,
        proximity: best.proximity,
        stride: best.stride,
        candidates_examined: examined,
    })
}
