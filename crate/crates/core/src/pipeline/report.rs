use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Aligned,
    FilteredLowSimilarity,
    UnanswerableKept,
    UnanswerableDropped,
    TranslationFailed,
    NoFeasibleWindow,
}

impl RecordStatus {
    pub fn is_failure(self) -> bool {
        matches!(
            self,
            RecordStatus::TranslationFailed | RecordStatus::NoFeasibleWindow
        )
    }

    /// Whether the question ends up in the output dataset.
    pub fn is_kept(self) -> bool {
        matches!(self, RecordStatus::Aligned | RecordStatus::UnanswerableKept)
    }
}

/// What happened to one question. `similarity` and `proximity` are present
/// exactly for aligned and threshold-filtered records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub qa_id: String,
    pub status: RecordStatus,
    pub answerable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proximity: Option<f64>,
    /// Why a failed record failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RecordOutcome {
    pub fn aligned(qa_id: impl Into<String>, similarity: f64, proximity: f64) -> Self {
        RecordOutcome {
            qa_id: qa_id.into(),
            status: RecordStatus::Aligned,
            answerable: true,
            similarity: Some(similarity),
            proximity: Some(proximity),
            detail: None,
        }
    }

    pub fn unanswerable(qa_id: impl Into<String>) -> Self {
        RecordOutcome {
            qa_id: qa_id.into(),
            status: RecordStatus::UnanswerableKept,
            answerable: false,
            similarity: None,
            proximity: None,
            detail: None,
        }
    }

    pub fn failed(qa_id: impl Into<String>, answerable: bool, status: RecordStatus) -> Self {
        RecordOutcome {
            qa_id: qa_id.into(),
            status,
            answerable,
            similarity: None,
            proximity: None,
            detail: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub answerable_kept: usize,
    pub answerable_filtered: usize,
    pub unanswerable_kept: usize,
    pub unanswerable_dropped: usize,
    pub failed: usize,
    /// Unanswerable questions whose `plausible_answers` were not carried over.
    #[serde(default)]
    pub plausible_answers_dropped: usize,
}

impl PipelineCounts {
    pub fn from_outcomes(outcomes: &[RecordOutcome]) -> Self {
        let mut c = PipelineCounts::default();
        for o in outcomes {
            match o.status {
                RecordStatus::Aligned => c.answerable_kept += 1,
                RecordStatus::FilteredLowSimilarity => c.answerable_filtered += 1,
                RecordStatus::UnanswerableKept => c.unanswerable_kept += 1,
                RecordStatus::UnanswerableDropped => c.unanswerable_dropped += 1,
                RecordStatus::TranslationFailed | RecordStatus::NoFeasibleWindow => c.failed += 1,
            }
        }
        c
    }

    /// Questions written to the output dataset.
    pub fn output_total(&self) -> usize {
        self.answerable_kept + self.unanswerable_kept
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub counts: PipelineCounts,
    pub histogram: [u64; HISTOGRAM_BINS],
    pub outcomes: Vec<RecordOutcome>,
}

impl PipelineReport {
    pub fn from_outcomes(outcomes: Vec<RecordOutcome>, plausible_answers_dropped: usize) -> Self {
        let mut counts = PipelineCounts::from_outcomes(&outcomes);
        counts.plausible_answers_dropped = plausible_answers_dropped;
        PipelineReport {
            counts,
            histogram: similarity_histogram(&outcomes),
            outcomes,
        }
    }

    pub fn has_failures(&self) -> bool {
        self.counts.failed > 0
    }

    pub fn render(&self) -> String {
        let mut s = render_histogram(&self.histogram);
        let c = &self.counts;
        let _ = writeln!(s, "answerable kept      {}", c.answerable_kept);
        let _ = writeln!(s, "answerable filtered  {}", c.answerable_filtered);
        let _ = writeln!(s, "unanswerable kept    {}", c.unanswerable_kept);
        let _ = writeln!(s, "unanswerable dropped {}", c.unanswerable_dropped);
        let _ = writeln!(s, "failed               {}", c.failed);
        if c.plausible_answers_dropped > 0 {
            let _ = writeln!(
                s,
                "plausible answers dropped on {} questions",
                c.plausible_answers_dropped
            );
        }
        let _ = writeln!(s, "output questions     {}", c.output_total());
        s
    }
}

/// Bin index for a similarity: `[0, 0.1)`, ..., `[0.9, 1.0]`.
pub fn histogram_bin(similarity: f64) -> usize {
    ((similarity * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Counts similarity-bearing records per bin; the last bin is closed on the
/// right so 1.0 lands in it.
pub fn similarity_histogram(records: &[RecordOutcome]) -> [u64; HISTOGRAM_BINS] {
    let mut bins = [0u64; HISTOGRAM_BINS];
    for s in records
        .iter()
        .filter_map(|r| r.similarity)
        .filter(|s| !s.is_nan())
    {
        bins[histogram_bin(s)] += 1;
    }
    bins
}

pub fn render_histogram(bins: &[u64; HISTOGRAM_BINS]) -> String {
    const WIDTH: u64 = 40;
    let peak = bins.iter().copied().max().unwrap_or(0).max(1);
    let mut s = String::new();
    for (i, &n) in bins.iter().enumerate() {
        let close = if i == HISTOGRAM_BINS - 1 { ']' } else { ')' };
        let bar = "#".repeat((n * WIDTH).div_ceil(peak) as usize);
        let _ = writeln!(
            s,
            "[{:.1}, {:.1}{close} {n:>8} {bar}",
            i as f64 / 10.0,
            (i + 1) as f64 / 10.0
        );
    }
    s
}

/// Marks aligned records below `threshold` as filtered, in place. The bound
/// is inclusive: a similarity equal to the threshold is kept.
pub(crate) fn apply_threshold(records: &mut [RecordOutcome], threshold: f64) {
    for r in records.iter_mut() {
        if r.status == RecordStatus::Aligned && r.similarity.is_none_or(|s| s < threshold) {
            r.status = RecordStatus::FilteredLowSimilarity;
        }
    }
}

/// Splits records into `(kept, filtered)`. Only aligned answerable records
/// are subject to the threshold; everything else passes through in `kept`.
pub fn filter_by_threshold(
    mut records: Vec<RecordOutcome>,
    threshold: f64,
) -> (Vec<RecordOutcome>, Vec<RecordOutcome>) {
    apply_threshold(&mut records, threshold);
    records
        .into_iter()
        .partition(|r| r.status != RecordStatus::FilteredLowSimilarity)
}

/// Keeps a uniform random subset of exactly `min(keep_n, available)`
/// unanswerable records, marking the rest dropped. Answerable records and
/// record order are untouched; the same seed always picks the same subset.
pub fn downsample_unanswerable(
    mut records: Vec<RecordOutcome>,
    keep_n: usize,
    rng_seed: u64,
) -> Vec<RecordOutcome> {
    apply_downsample(&mut records, keep_n, rng_seed);
    records
}

pub(crate) fn apply_downsample(records: &mut [RecordOutcome], keep_n: usize, rng_seed: u64) {
    let pool: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            matches!(
                r.status,
                RecordStatus::UnanswerableKept | RecordStatus::UnanswerableDropped
            )
        })
        .map(|(i, _)| i)
        .collect();
    let mut keep = vec![false; pool.len()];
    if keep_n >= pool.len() {
        keep.iter_mut().for_each(|k| *k = true);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for i in index::sample(&mut rng, pool.len(), keep_n) {
            keep[i] = true;
        }
    }
    for (slot, &i) in pool.iter().enumerate() {
        records[i].status = if keep[slot] {
            RecordStatus::UnanswerableKept
        } else {
            RecordStatus::UnanswerableDropped
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sims(xs: &[f64]) -> Vec<RecordOutcome> {
        xs.iter()
            .enumerate()
            .map(|(i, &s)| RecordOutcome::aligned(format!("q{i}"), s, 0.0))
            .collect()
    }

    #[test]
    fn threshold_is_inclusive() {
        let (kept, filtered) = filter_by_threshold(sims(&[0.59, 0.60, 0.61]), 0.6);
        let k: Vec<f64> = kept.iter().map(|r| r.similarity.unwrap()).collect();
        assert_eq!(k, vec![0.60, 0.61]);
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered[0].status, RecordStatus::FilteredLowSimilarity);
    }

    #[test]
    fn threshold_extremes() {
        assert_eq!(filter_by_threshold(sims(&[0.0, 0.3, 1.0]), 0.0).0.len(), 3);
        assert_eq!(filter_by_threshold(sims(&[0.0, 0.3, 1.0]), 1.01).0.len(), 0);
    }

    #[test]
    fn threshold_ignores_unanswerable() {
        let mut recs = sims(&[0.1]);
        recs.push(RecordOutcome::unanswerable("u"));
        let (kept, _) = filter_by_threshold(recs, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].status, RecordStatus::UnanswerableKept);
    }

    fn unanswerables(n: usize) -> Vec<RecordOutcome> {
        (0..n)
            .map(|i| RecordOutcome::unanswerable(format!("u{i}")))
            .collect()
    }

    #[test]
    fn downsample_exact_and_stable() {
        let a = downsample_unanswerable(unanswerables(50_000), 6_000, 7);
        let kept = a
            .iter()
            .filter(|r| r.status == RecordStatus::UnanswerableKept)
            .count();
        assert_eq!(kept, 6_000);
        let b = downsample_unanswerable(unanswerables(50_000), 6_000, 7);
        assert_eq!(a, b);
        let c = downsample_unanswerable(unanswerables(50_000), 6_000, 8);
        assert_ne!(a, c);
        assert!(a
            .iter()
            .enumerate()
            .all(|(i, r)| r.qa_id == format!("u{i}")));
    }

    #[test]
    fn downsample_edges() {
        let all = downsample_unanswerable(unanswerables(5), 10, 1);
        assert!(all
            .iter()
            .all(|r| r.status == RecordStatus::UnanswerableKept));
        let none = downsample_unanswerable(unanswerables(5), 0, 1);
        assert!(none
            .iter()
            .all(|r| r.status == RecordStatus::UnanswerableDropped));
        let mut mixed = sims(&[0.9]);
        mixed.extend(unanswerables(3));
        let out = downsample_unanswerable(mixed, 1, 3);
        assert_eq!(out[0].status, RecordStatus::Aligned);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(similarity_histogram(&sims(&[0.95; 10]))[9], 10);
        assert_eq!(histogram_bin(1.0), 9);
        assert_eq!(histogram_bin(0.0), 0);
        assert_eq!(histogram_bin(0.1), 1);
        assert_eq!(histogram_bin(0.6), 6);
        assert_eq!(histogram_bin(0.5999), 5);
        let mut recs = sims(&[0.05, 0.15, 0.99]);
        recs.push(RecordOutcome::unanswerable("u"));
        let h = similarity_histogram(&recs);
        assert_eq!(h.iter().sum::<u64>(), 3);
    }

    #[test]
    fn render_marks_closed_last_bin() {
        let mut bins = [0u64; 10];
        bins[9] = 3;
        let text = render_histogram(&bins);
        assert!(text.lines().last().unwrap().starts_with("[0.9, 1.0]"));
        assert!(text.lines().next().unwrap().starts_with("[0.0, 0.1)"));
    }
}
