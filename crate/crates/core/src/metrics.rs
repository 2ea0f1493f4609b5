//! SQuAD-style Exact Match and token F1.
//!
//! Normalization follows the SQuAD evaluator (lowercase, strip ASCII
//! punctuation, drop the articles "a", "an", "the", collapse whitespace) and
//! additionally strips Ethiopic punctuation. Gold answers that normalize to
//! nothing are ignored; a question with no remaining golds is unanswerable
//! and is matched only by an empty prediction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::squad::Dataset;

const ETHIOPIC_PUNCTUATION: [char; 8] = ['፡', '።', '፣', '፤', '፥', '፦', '፧', '፨'];

static ARTICLES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction for unknown question id {0:?}")]
    UnknownQaId(String),
    #[error("malformed prediction file: {0}")]
    MalformedPredictions(#[from] serde_json::Error),
}

/// Question id to predicted answer; the empty string predicts "unanswerable".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionSet(pub BTreeMap<String, String>);

impl PredictionSet {
    pub fn from_json(raw: &[u8]) -> Result<Self, MetricsError> {
        Ok(serde_json::from_slice(raw)?)
    }
}

impl FromIterator<(String, String)> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        PredictionSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuestionScore {
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    /// Percent, 0..=100.
    pub exact_match: f64,
    /// Percent, 0..=100.
    pub f1: f64,
    /// Number of gold questions averaged over.
    pub n_evaluated: usize,
    /// Gold questions with no prediction; they score zero.
    pub n_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_question: Option<BTreeMap<String, QuestionScore>>,
}

impl EvalSummary {
    pub fn render(&self) -> String {
        let mut s = format!("EM {:.2} F1 {:.2}\n", self.exact_match, self.f1);
        s.push_str(&format!("evaluated {} questions", self.n_evaluated));
        if self.n_missing > 0 {
            s.push_str(&format!(
                " ({} without prediction, scored 0)",
                self.n_missing
            ));
        }
        s.push('\n');
        s
    }
}

pub fn normalize_answer(s: &str) -> Vec<String> {
    let stripped: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !ETHIOPIC_PUNCTUATION.contains(c))
        .collect();
    ARTICLES
        .replace_all(&stripped, " ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn gold_tokens(golds: &[&str]) -> Vec<Vec<String>> {
    golds
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|t| !t.is_empty())
        .collect()
}

/// 1.0 if the normalized prediction equals any normalized gold.
pub fn compute_em(pred: &str, golds: &[&str]) -> f64 {
    let pred = normalize_answer(pred);
    let golds = gold_tokens(golds);
    if golds.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    if golds.contains(&pred) {
        1.0
    } else {
        0.0
    }
}

fn f1_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred == gold { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pred.len() as f64;
    let recall = same as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-multiset F1, maximized over golds.
pub fn compute_f1(pred: &str, golds: &[&str]) -> f64 {
    let pred = normalize_answer(pred);
    let golds = gold_tokens(golds);
    if golds.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    golds
        .iter()
        .map(|g| f1_tokens(&pred, g))
        .fold(0.0, f64::max)
}

/// Macro-averages EM and F1 over every gold question. Questions without a
/// prediction count as zero; a prediction for an id absent from the gold set
/// is an error.
pub fn evaluate_predictions(
    preds: &PredictionSet,
    gold: &Dataset,
) -> Result<EvalSummary, MetricsError> {
    let gold_ids: HashSet<&str> = gold.qas().map(|q| q.id.as_str()).collect();
    if let Some(unknown) = preds.0.keys().find(|k| !gold_ids.contains(k.as_str())) {
        return Err(MetricsError::UnknownQaId(unknown.clone()));
    }
    let mut per_question = BTreeMap::new();
    let (mut em_sum, mut f1_sum, mut missing, mut n) = (0.0, 0.0, 0, 0);
    for qa in gold.qas() {
        n += 1;
        let Some(pred) = preds.0.get(&qa.id) else {
            missing += 1;
            per_question.insert(qa.id.clone(), QuestionScore { em: 0.0, f1: 0.0 });
            continue;
        };
        let golds: Vec<&str> = qa.answers.iter().map(|a| a.text.as_str()).collect();
        let score = QuestionScore {
            em: compute_em(pred, &golds),
            f1: compute_f1(pred, &golds),
        };
        em_sum += score.em;
        f1_sum += score.f1;
        per_question.insert(qa.id.clone(), score);
    }
    let pct = |x: f64| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    Ok(EvalSummary {
        exact_match: pct(em_sum),
        f1: pct(f1_sum),
        n_evaluated: n,
        n_missing: missing,
        per_question: Some(per_question),
    })
}
