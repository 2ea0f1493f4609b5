use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, bail, Context, Result};
use qax_core::aligner::{align_answer, AlignError, AlignmentQuery, SimilarityWeights, UpdateRule};
use qax_core::metrics::{evaluate_predictions, PredictionSet};
use qax_core::pipeline::{similarity_histogram, PipelineReport, RecordOutcome};
use qax_core::providers::{DiskCache, EmbedderKind, ProviderConfig, TranslatorKind};
use qax_core::squad::{parse_dataset, serialize_dataset, Dataset};
use qax_core::{Pipeline, PipelineConfig, Split};
use serde_json::{json, Value};

use crate::{
    AlignArgs, CacheCmd, Cmd, EmbedArgs, EvaluateArgs, ProviderArgs, ScoringArgs, StatsArgs,
    TranslateArgs,
};

const EXIT_PARTIAL: u8 = 2;

pub fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::TranslateDataset(a) => translate_dataset(a),
        Cmd::Align(a) => align(a),
        Cmd::Stats(a) => stats(a),
        Cmd::Evaluate(a) => evaluate(a),
        Cmd::Cache(c) => cache(c),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

fn scoring(a: &ScoringArgs) -> Result<(SimilarityWeights, UpdateRule)> {
    let weights = SimilarityWeights::new(a.w1, a.w2)?;
    let rule = a
        .update_rule
        .parse::<UpdateRule>()
        .map_err(|e| anyhow!("{e}"))?;
    Ok((weights, rule))
}

fn apply_embed(cfg: &mut ProviderConfig, e: &EmbedArgs) {
    cfg.embedder = match e.embedder.as_str() {
        "http" => EmbedderKind::Http,
        _ => EmbedderKind::Test,
    };
    cfg.embed_endpoint = e.embed_url.clone();
    cfg.embed_dim = e.embed_dim;
}

fn provider_config(p: &ProviderArgs, e: &EmbedArgs) -> ProviderConfig {
    let mut cfg = ProviderConfig {
        translator: match p.translator.as_str() {
            "http" => TranslatorKind::Http,
            _ => TranslatorKind::Identity,
        },
        translate_endpoint: p.translate_url.clone(),
        source_lang: p.source_lang.clone(),
        target_lang: p.target_lang.clone(),
        max_in_flight: p.max_in_flight,
        retry_max: p.retry_max,
        retry_base_ms: p.retry_base_ms,
        cache_dir: p.cache_dir.clone(),
        api_key: p.api_key.clone().filter(|k| !k.is_empty()),
        ..ProviderConfig::default()
    };
    apply_embed(&mut cfg, e);
    cfg
}

fn report_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn translate_dataset(a: TranslateArgs) -> Result<ExitCode> {
    let split: Split = a
        .split
        .as_deref()
        .ok_or_else(|| anyhow!("--split is required (train or dev)"))?
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    let (weights, update_rule) = scoring(&a.scoring)?;
    let cfg = PipelineConfig {
        weights,
        similarity_threshold: a.similarity_threshold,
        unanswerable_keep_train: a.unanswerable_keep_train,
        unanswerable_keep_dev: a.unanswerable_keep_dev,
        rng_seed: a.seed,
        max_stride: a.scoring.max_stride,
        update_rule,
        provider: provider_config(&a.provider, &a.embed),
        checkpoint_path: a.checkpoint.clone(),
    };
    let input = parse_dataset(&read(&a.input)?)
        .with_context(|| format!("parsing {}", a.input.display()))?;

    let mut pipeline = Pipeline::from_config(cfg)?;
    if !a.quiet {
        let last_pct = AtomicUsize::new(usize::MAX);
        pipeline = pipeline.on_progress(move |done, total| {
            let pct = done * 100 / total.max(1);
            if last_pct.swap(pct, Ordering::Relaxed) != pct {
                eprint!("\rtranslating: {done}/{total} paragraphs ({pct}%)");
                if done == total {
                    eprintln!();
                }
                let _ = std::io::stderr().flush();
            }
        });
    }
    let (out, report) = pipeline.run(&input, split)?;

    write_atomic(&a.output, &serialize_dataset(&out)?)?;
    let rp = report_path(&a.output);
    write_atomic(&rp, &serde_json::to_vec_pretty(&report)?)?;
    print!("{}", report.render());
    if report.has_failures() {
        eprintln!(
            "{} question(s) failed; see {} for details",
            report.counts.failed,
            rp.display()
        );
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn align(a: AlignArgs) -> Result<ExitCode> {
    let (weights, rule) = scoring(&a.scoring)?;
    let mut cfg = ProviderConfig {
        cache_dir: a.cache_dir.clone(),
        api_key: a.api_key.clone().filter(|k| !k.is_empty()),
        ..ProviderConfig::default()
    };
    apply_embed(&mut cfg, &a.embed);
    let embedder = cfg.build_embedder()?;
    let query =
        AlignmentQuery::new(&a.context, &a.answer, a.rel_pos).with_max_stride(a.scoring.max_stride);
    match align_answer(&query, &weights, embedder.as_ref(), rule) {
        Ok(r) => {
            let out = json!({
                "char_start": r.answer_start,
                "text": r.answer_text,
                "score": r.score,
                "proximity": r.proximity,
                "stride": r.stride,
                "candidates_examined": r.candidates_examined,
                "update_rule": rule.to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ AlignError::NoFeasibleWindow { .. }) => bail!("no feasible window: {e}"),
        Err(e) => Err(e.into()),
    }
}

/// Rebuilds histogram and counts from the alignment metadata of a dataset.
fn report_from_dataset(d: &Dataset) -> PipelineReport {
    let outcomes: Vec<RecordOutcome> = d
        .qas()
        .map(|qa| match &qa.alignment_meta {
            Some(m) if !qa.is_impossible => {
                RecordOutcome::aligned(qa.id.clone(), m.similarity, m.proximity)
            }
            _ => RecordOutcome::unanswerable(qa.id.clone()),
        })
        .collect();
    PipelineReport::from_outcomes(outcomes, 0)
}

fn stats(a: StatsArgs) -> Result<ExitCode> {
    let raw = read(&a.path)?;
    let value: Value =
        serde_json::from_slice(&raw).with_context(|| format!("parsing {}", a.path.display()))?;
    let report = if value.get("histogram").is_some() && value.get("counts").is_some() {
        serde_json::from_value::<PipelineReport>(value)
            .with_context(|| format!("{} is not a valid report", a.path.display()))?
    } else if value.get("data").is_some() {
        let d = parse_dataset(&raw).with_context(|| format!("parsing {}", a.path.display()))?;
        report_from_dataset(&d)
    } else {
        bail!(
            "{} is neither a pipeline report nor a dataset",
            a.path.display()
        );
    };
    // recompute from outcomes when present so a hand-edited file cannot disagree
    let histogram = if report.outcomes.is_empty() {
        report.histogram
    } else {
        similarity_histogram(&report.outcomes)
    };
    let shown = PipelineReport {
        histogram,
        ..report
    };
    print!("{}", shown.render());
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let preds = PredictionSet::from_json(&read(&a.predictions)?)
        .with_context(|| format!("parsing {}", a.predictions.display()))?;
    let gold =
        parse_dataset(&read(&a.gold)?).with_context(|| format!("parsing {}", a.gold.display()))?;
    let mut summary = evaluate_predictions(&preds, &gold)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        summary.per_question = None;
        print!("{}", summary.render());
    }
    Ok(ExitCode::SUCCESS)
}

fn cache(c: CacheCmd) -> Result<ExitCode> {
    match c {
        CacheCmd::Inspect(a) => {
            let s = DiskCache::new(&a.cache_dir)
                .stats()
                .with_context(|| format!("reading cache {}", a.cache_dir.display()))?;
            println!("cache {}", a.cache_dir.display());
            println!("entries      {}", s.entries);
            println!("translations {}", s.translations);
            println!("embeddings   {}", s.embeddings);
            println!("bytes        {}", s.bytes);
            if s.unreadable > 0 {
                println!("unreadable   {}", s.unreadable);
            }
        }
        CacheCmd::Clear(a) => {
            let n = DiskCache::new(&a.cache_dir)
                .clear()
                .with_context(|| format!("clearing cache {}", a.cache_dir.display()))?;
            println!("removed {n} entries from {}", a.cache_dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
