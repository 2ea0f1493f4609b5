//! Whole-dataset driver: translate, align, filter, downsample, report.
//!
//! Work is split into paragraph units. Each unit translates its context once
//! (the article title once per article), then translates and aligns every
//! question in it. Units run on a bounded thread pool and results are put
//! back in document order, so the output never depends on scheduling.
//! Provider failures are recorded per question and never abort the run.

mod checkpoint;
mod report;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aligner::{
    align_answer, AlignError, AlignmentQuery, SimilarityWeights, UpdateRule, DEFAULT_MAX_STRIDE,
};
use crate::providers::{ConfigError, Embedder, ProviderConfig, ProviderError, Translator};
use crate::squad::{
    validate_dataset, AlignmentMeta, Answer, Article, Dataset, Paragraph, Qa, Violation,
};
use crate::text::normalize_text;

pub use report::{
    downsample_unanswerable, filter_by_threshold, histogram_bin, render_histogram,
    similarity_histogram, PipelineCounts, PipelineReport, RecordOutcome, RecordStatus,
    HISTOGRAM_BINS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            other => Err(format!("unknown split {other:?}, expected train or dev")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub weights: SimilarityWeights,
    /// Aligned questions need at least this similarity to be kept.
    pub similarity_threshold: f64,
    pub unanswerable_keep_train: usize,
    pub unanswerable_keep_dev: usize,
    pub rng_seed: u64,
    pub max_stride: usize,
    pub update_rule: UpdateRule,
    pub provider: ProviderConfig,
    /// Journal file for resumable runs.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: SimilarityWeights::default(),
            similarity_threshold: 0.6,
            unanswerable_keep_train: 6000,
            unanswerable_keep_dev: 700,
            rng_seed: 0,
            max_stride: DEFAULT_MAX_STRIDE,
            update_rule: UpdateRule::default(),
            provider: ProviderConfig::default(),
            checkpoint_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn unanswerable_keep(&self, split: Split) -> usize {
        match split {
            Split::Train => self.unanswerable_keep_train,
            Split::Dev => self.unanswerable_keep_dev,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.weights
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(PipelineError::InvalidConfig(format!(
                "similarity_threshold {} outside [0, 1]",
                self.similarity_threshold
            )));
        }
        self.provider.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ConfigError),
    #[error("input dataset has {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidInput(Vec<Violation>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {0} is unreadable")]
    CorruptCheckpoint(PathBuf),
    #[error("checkpoint {path} was written for a different input or configuration (digest {found}, expected {expected})")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("run stopped after {completed} of {total} paragraphs")]
    Interrupted { completed: usize, total: usize },
}

/// One aligned answer inside the translated context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedAnswer {
    pub text: String,
    pub answer_start: usize,
    pub similarity: f64,
    pub proximity: f64,
    pub stride: usize,
}

/// Translation and alignment result of one question, before filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResult {
    pub qa_id: String,
    pub answerable: bool,
    /// `Aligned`, `UnanswerableKept`, `TranslationFailed` or `NoFeasibleWindow`.
    pub status: RecordStatus,
    pub question: Option<String>,
    /// Aligned answers, parallel to the input answers that could be aligned.
    pub answers: Vec<AlignedAnswer>,
    /// Index into `answers` of the best-scoring one.
    pub best: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl QaResult {
    fn failed(qa: &Qa, status: RecordStatus, detail: String) -> Self {
        QaResult {
            qa_id: qa.id.clone(),
            answerable: !qa.is_impossible,
            status,
            question: None,
            answers: Vec::new(),
            best: None,
            detail: Some(detail),
        }
    }

    pub fn best_answer(&self) -> Option<&AlignedAnswer> {
        self.best.map(|i| &self.answers[i])
    }

    fn outcome(&self) -> RecordOutcome {
        let best = self.best_answer();
        RecordOutcome {
            qa_id: self.qa_id.clone(),
            status: self.status,
            answerable: self.answerable,
            similarity: best.map(|a| a.similarity),
            proximity: best.map(|a| a.proximity),
            detail: self.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ParagraphUnit {
    article: usize,
    paragraph: usize,
    title: Option<String>,
    context: Option<String>,
    qas: Vec<QaResult>,
}

type ProgressFn = dyn Fn(usize, usize) + Send + Sync;

pub struct Pipeline {
    cfg: PipelineConfig,
    translator: Arc<dyn Translator>,
    embedder: Arc<dyn Embedder>,
    stop_after: Option<usize>,
    progress: Option<Box<ProgressFn>>,
}

/// Builds providers from `cfg.provider` and runs the whole pipeline.
pub fn run_pipeline(
    input: &Dataset,
    split: Split,
    cfg: &PipelineConfig,
) -> Result<(Dataset, PipelineReport), PipelineError> {
    Pipeline::from_config(cfg.clone())?.run(input, split)
}

impl Pipeline {
    pub fn from_config(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let translator = cfg.provider.build_translator()?;
        let embedder = cfg.provider.build_embedder()?;
        Ok(Self::with_providers(cfg, translator, embedder))
    }

    pub fn with_providers(
        cfg: PipelineConfig,
        translator: Arc<dyn Translator>,
        embedder: Arc<dyn Embedder>,
    ) -> Self {
        Pipeline {
            cfg,
            translator,
            embedder,
            stop_after: None,
            progress: None,
        }
    }

    /// Stops with [`PipelineError::Interrupted`] after `n` newly processed
    /// paragraphs, as if the process had been killed there.
    pub fn stop_after(mut self, n: usize) -> Self {
        self.stop_after = Some(n);
        self
    }

    /// Called with `(paragraphs done, paragraphs total)` as work completes.
    pub fn on_progress(mut self, f: impl Fn(usize, usize) + Send + Sync + 'static) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Digest of the input and of every setting that changes the output.
    pub fn run_digest(&self, input: &Dataset, split: Split) -> String {
        #[derive(Serialize)]
        struct Settings<'a> {
            split: Split,
            weights: SimilarityWeights,
            similarity_threshold: f64,
            unanswerable_keep: usize,
            rng_seed: u64,
            max_stride: usize,
            update_rule: UpdateRule,
            translator: String,
            embedder: String,
            source_lang: &'a str,
            target_lang: &'a str,
        }
        let settings = Settings {
            split,
            weights: self.cfg.weights,
            similarity_threshold: self.cfg.similarity_threshold,
            unanswerable_keep: self.cfg.unanswerable_keep(split),
            rng_seed: self.cfg.rng_seed,
            max_stride: self.cfg.max_stride,
            update_rule: self.cfg.update_rule,
            translator: self.translator.provider_id(),
            embedder: self.embedder.provider_id(),
            source_lang: &self.cfg.provider.source_lang,
            target_lang: &self.cfg.provider.target_lang,
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(input).expect("dataset serializes"));
        h.update(b"\0");
        h.update(serde_json::to_vec(&settings).expect("settings serialize"));
        hex::encode(h.finalize())
    }

    pub fn run(
        &self,
        input: &Dataset,
        split: Split,
    ) -> Result<(Dataset, PipelineReport), PipelineError> {
        self.cfg.validate()?;
        let violations = validate_dataset(input);
        if !violations.is_empty() {
            return Err(PipelineError::InvalidInput(violations));
        }

        let (journal, mut done) = match &self.cfg.checkpoint_path {
            Some(path) => {
                let (j, d) = checkpoint::open(path, &self.run_digest(input, split))?;
                (Some(j), d)
            }
            None => (None, Default::default()),
        };

        let todo: Vec<(usize, usize)> = input
            .articles
            .iter()
            .enumerate()
            .flat_map(|(ai, a)| (0..a.paragraphs.len()).map(move |pi| (ai, pi)))
            .filter(|k| !done.contains_key(k))
            .collect();
        let total = done.len() + todo.len();
        let titles: Vec<OnceLock<Result<String, ProviderError>>> =
            input.articles.iter().map(|_| OnceLock::new()).collect();
        let claimed = AtomicUsize::new(0);
        let finished = AtomicUsize::new(done.len());

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.provider.max_in_flight)
            .build()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        let fresh: Vec<Option<ParagraphUnit>> = pool.install(|| {
            todo.par_iter()
                .map(|&(ai, pi)| {
                    if let Some(limit) = self.stop_after {
                        if claimed.fetch_add(1, Ordering::SeqCst) >= limit {
                            return Ok(None);
                        }
                    }
                    let article = &input.articles[ai];
                    let title =
                        titles[ai].get_or_init(|| self.translate_passthrough(&article.title));
                    let unit = self.process_paragraph(ai, pi, title, &article.paragraphs[pi]);
                    if let Some(j) = &journal {
                        j.record(&unit)?;
                    }
                    let n = finished.fetch_add(1, Ordering::SeqCst) + 1;
                    if let Some(f) = &self.progress {
                        f(n, total);
                    }
                    Ok(Some(unit))
                })
                .collect::<Result<Vec<_>, PipelineError>>()
        })?;

        let mut skipped = false;
        for unit in fresh {
            match unit {
                Some(u) => {
                    done.insert((u.article, u.paragraph), u);
                }
                None => skipped = true,
            }
        }
        if skipped {
            return Err(PipelineError::Interrupted {
                completed: done.len(),
                total,
            });
        }
        let units: Vec<ParagraphUnit> = done.into_values().collect();
        Ok(self.assemble(input, split, &units))
    }

    /// Filters, downsamples and writes the output dataset from finished
    /// units, which must be in document order.
    fn assemble(
        &self,
        input: &Dataset,
        split: Split,
        units: &[ParagraphUnit],
    ) -> (Dataset, PipelineReport) {
        let mut outcomes: Vec<RecordOutcome> = units
            .iter()
            .flat_map(|u| u.qas.iter().map(QaResult::outcome))
            .collect();
        report::apply_threshold(&mut outcomes, self.cfg.similarity_threshold);
        report::apply_downsample(
            &mut outcomes,
            self.cfg.unanswerable_keep(split),
            self.cfg.rng_seed,
        );

        let mut articles: Vec<Article> = Vec::new();
        let mut cursor = 0;
        let mut plausible_dropped = 0;
        let mut last_article = None;
        for unit in units {
            let src_article = &input.articles[unit.article];
            let src_para = &src_article.paragraphs[unit.paragraph];
            let mut qas = Vec::new();
            for (res, src) in unit.qas.iter().zip(&src_para.qas) {
                let status = outcomes[cursor].status;
                cursor += 1;
                if !status.is_kept() {
                    continue;
                }
                if src.plausible_answers.is_some() {
                    plausible_dropped += 1;
                }
                qas.push(self.output_qa(src, res));
            }
            if qas.is_empty() {
                continue;
            }
            let paragraph = Paragraph {
                context: unit
                    .context
                    .clone()
                    .expect("kept questions imply a translated context"),
                qas,
                extra: src_para.extra.clone(),
            };
            if last_article == Some(unit.article) {
                articles
                    .last_mut()
                    .expect("article pushed")
                    .paragraphs
                    .push(paragraph);
            } else {
                last_article = Some(unit.article);
                articles.push(Article {
                    title: unit
                        .title
                        .clone()
                        .expect("kept questions imply a translated title"),
                    paragraphs: vec![paragraph],
                    extra: src_article.extra.clone(),
                });
            }
        }
        let out = Dataset {
            version: input.version.clone(),
            articles,
            extra: input.extra.clone(),
        };
        (
            out,
            PipelineReport::from_outcomes(outcomes, plausible_dropped),
        )
    }

    fn output_qa(&self, src: &Qa, res: &QaResult) -> Qa {
        let question = res.question.clone().expect("kept questions are translated");
        if !res.answerable {
            return Qa {
                id: src.id.clone(),
                question,
                answers: Vec::new(),
                is_impossible: src.is_impossible,
                plausible_answers: None,
                alignment_meta: None,
                extra: src.extra.clone(),
            };
        }
        let best = res
            .best_answer()
            .expect("aligned questions have a best answer");
        let answers = res
            .answers
            .iter()
            .filter(|a| a.similarity >= self.cfg.similarity_threshold)
            .map(|a| Answer {
                text: a.text.clone(),
                answer_start: a.answer_start,
                extra: Default::default(),
            })
            .collect();
        Qa {
            id: src.id.clone(),
            question,
            answers,
            is_impossible: false,
            plausible_answers: None,
            alignment_meta: Some(AlignmentMeta {
                similarity: best.similarity,
                proximity: best.proximity,
                window_stride_used: best.stride,
            }),
            extra: src.extra.clone(),
        }
    }

    fn translate_passthrough(&self, text: &str) -> Result<String, ProviderError> {
        if normalize_text(text).is_empty() {
            return Ok(text.to_string());
        }
        self.translator.translate_text(text)
    }

    fn process_paragraph(
        &self,
        article: usize,
        paragraph: usize,
        title: &Result<String, ProviderError>,
        para: &Paragraph,
    ) -> ParagraphUnit {
        let context = self.translate_passthrough(&para.context);
        let (title, context) = match (title, context) {
            (Ok(t), Ok(c)) => (t.clone(), c),
            (t, c) => {
                let err = t
                    .as_ref()
                    .err()
                    .cloned()
                    .or(c.err())
                    .expect("one side failed");
                let detail = format!("paragraph translation failed: {err}");
                return ParagraphUnit {
                    article,
                    paragraph,
                    title: t.as_ref().ok().cloned(),
                    context: None,
                    qas: para
                        .qas
                        .iter()
                        .map(|qa| {
                            QaResult::failed(qa, RecordStatus::TranslationFailed, detail.clone())
                        })
                        .collect(),
                };
            }
        };
        let mut memo = HashMap::new();
        let qas = para
            .qas
            .iter()
            .map(|qa| self.entry(&para.context, &context, qa, &mut memo))
            .collect();
        ParagraphUnit {
            article,
            paragraph,
            title: Some(title),
            context: Some(context),
            qas,
        }
    }

    /// Translates one question and aligns each of its answers inside the
    /// already translated context.
    pub fn translate_entry(
        &self,
        original_context: &str,
        translated_context: &str,
        qa: &Qa,
    ) -> QaResult {
        self.entry(
            original_context,
            translated_context,
            qa,
            &mut HashMap::new(),
        )
    }

    fn entry(
        &self,
        original_context: &str,
        translated_context: &str,
        qa: &Qa,
        memo: &mut HashMap<String, Result<String, ProviderError>>,
    ) -> QaResult {
        let mut translate = |text: &str| {
            memo.entry(text.to_string())
                .or_insert_with(|| self.translate_passthrough(text))
                .clone()
        };
        let question = match translate(&qa.question) {
            Ok(q) => q,
            Err(e) => {
                return QaResult::failed(
                    qa,
                    RecordStatus::TranslationFailed,
                    format!("question: {e}"),
                )
            }
        };
        if qa.is_impossible {
            return QaResult {
                qa_id: qa.id.clone(),
                answerable: false,
                status: RecordStatus::UnanswerableKept,
                question: Some(question),
                answers: Vec::new(),
                best: None,
                detail: None,
            };
        }

        let ctx_len = original_context.chars().count().max(1) as f64;
        let mut answers = Vec::new();
        let mut infeasible = None;
        for ans in &qa.answers {
            let translated = match translate(&ans.text) {
                Ok(t) => t,
                Err(e) => {
                    return QaResult::failed(
                        qa,
                        RecordStatus::TranslationFailed,
                        format!("answer: {e}"),
                    )
                }
            };
            let rel_pos = (ans.answer_start as f64 / ctx_len).clamp(0.0, 1.0);
            let query = AlignmentQuery::new(translated_context, &translated, rel_pos)
                .with_max_stride(self.cfg.max_stride);
            match align_answer(
                &query,
                &self.cfg.weights,
                self.embedder.as_ref(),
                self.cfg.update_rule,
            ) {
                Ok(r) => answers.push(AlignedAnswer {
                    text: r.answer_text,
                    answer_start: r.answer_start,
                    similarity: r.score,
                    proximity: r.proximity,
                    stride: r.stride,
                }),
                Err(AlignError::Provider(e)) => {
                    return QaResult::failed(
                        qa,
                        RecordStatus::TranslationFailed,
                        format!("embedding: {e}"),
                    )
                }
                Err(e) => infeasible = Some(e),
            }
        }
        if answers.is_empty() {
            let detail = infeasible.map_or_else(|| "no answers".to_string(), |e| e.to_string());
            return QaResult::failed(qa, RecordStatus::NoFeasibleWindow, detail);
        }
        // first answer wins ties
        let best = (0..answers.len()).reduce(|b, i| {
            if answers[i].similarity > answers[b].similarity {
                i
            } else {
                b
            }
        });
        QaResult {
            qa_id: qa.id.clone(),
            answerable: true,
            status: RecordStatus::Aligned,
            question: Some(question),
            answers,
            best,
            detail: None,
        }
    }
}
