//! Synthetic datasets and fake providers shared by the integration tests.
#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use qax_core::providers::ProviderError;
use qax_core::squad::{Answer, Article, Dataset, Paragraph, Qa};
use qax_core::Translator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "river",
    "city",
    "king",
    "north",
    "stone",
    "market",
    "coffee",
    "mountain",
    "church",
    "school",
    "ሰላም",
    "ከተማ",
    "አዲስ",
    "አበባ",
    "ንጉሥ",
    "ወንዝ",
    "ተራራ",
    "ቡና",
    "ገበያ",
    "ትምህርት",
    "1889",
    "42",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect()
}

/// A dataset with `n_questions` questions spread over small paragraphs.
/// Roughly one question in four is unanswerable and carries plausible
/// answers; answerable ones have one to three word-aligned gold spans.
pub fn synthetic_dataset(n_questions: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::new();
    let mut made = 0;
    let mut a = 0;
    while made < n_questions {
        let mut paragraphs = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            if made >= n_questions {
                break;
            }
            let n_words = rng.random_range(8..=30);
            let words = sentence(&mut rng, n_words);
            let context = words.join(" ");
            let starts: Vec<usize> = words
                .iter()
                .scan(0, |pos, w| {
                    let s = *pos;
                    *pos += w.chars().count() + 1;
                    Some(s)
                })
                .collect();
            let span = |rng: &mut ChaCha8Rng| {
                let len = rng.random_range(1..=3.min(words.len()));
                let i = rng.random_range(0..=words.len() - len);
                Answer::new(words[i..i + len].join(" "), starts[i])
            };
            let mut qas = Vec::new();
            for _ in 0..rng.random_range(1..=4) {
                if made >= n_questions {
                    break;
                }
                let id = format!("q{made:05}");
                let question = format!("{}?", sentence(&mut rng, 4).join(" "));
                let qa = if rng.random_bool(0.25) {
                    let mut qa = Qa::unanswerable(id, question);
                    qa.plausible_answers = Some(vec![span(&mut rng)]);
                    qa
                } else {
                    let answers = (0..rng.random_range(1..=3))
                        .map(|_| span(&mut rng))
                        .collect();
                    Qa::answerable(id, question, answers)
                };
                qas.push(qa);
                made += 1;
            }
            paragraphs.push(Paragraph::new(context, qas));
        }
        articles.push(Article::new(format!("Article {a}"), paragraphs));
        a += 1;
    }
    Dataset::new("v2.0", articles)
}

/// Rewrites every word through a fixed table and appends a suffix, so the
/// translated answer differs from the matching context span only by the
/// substitutions.
#[derive(Debug, Default)]
pub struct WordMapTranslator {
    pub calls: AtomicUsize,
}

impl WordMapTranslator {
    pub fn map_word(w: &str) -> String {
        match w {
            "river" => "ወንዝ".to_string(),
            "city" => "ከተማ".to_string(),
            "coffee" => "ቡና".to_string(),
            other => format!("{other}ኛ"),
        }
    }
}

impl Translator for WordMapTranslator {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(text
            .split_whitespace()
            .map(Self::map_word)
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn provider_id(&self) -> String {
        "word-map".to_string()
    }
}

/// Fails on any text equal to one of `poison`, otherwise returns it as is.
pub struct PoisonTranslator {
    pub poison: Vec<String>,
    pub seen: Mutex<Vec<String>>,
}

impl PoisonTranslator {
    pub fn new(poison: &[&str]) -> Self {
        PoisonTranslator {
            poison: poison.iter().map(|s| s.to_string()).collect(),
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl Translator for PoisonTranslator {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(text.to_string());
        if self.poison.iter().any(|p| p == text) {
            return Err(ProviderError::Unavailable {
                attempts: 6,
                last: "HTTP 503".to_string(),
            });
        }
        Ok(text.to_string())
    }

    fn provider_id(&self) -> String {
        "poison".to_string()
    }
}

/// Looks texts up in a fixed table and passes anything else through.
pub struct TableTranslator(pub Vec<(&'static str, &'static str)>);

impl Translator for TableTranslator {
    fn translate_text(&self, text: &str) -> Result<String, ProviderError> {
        Ok(self
            .0
            .iter()
            .find(|(from, _)| *from == text)
            .map_or(text, |(_, to)| to)
            .to_string())
    }

    fn provider_id(&self) -> String {
        "table".to_string()
    }
}
