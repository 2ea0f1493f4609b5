//! Unicode-aware text helpers shared by the aligner, the providers and the
//! metrics.
//!
//! All character offsets in this crate are counted in Unicode scalar values
//! (Rust `char`s), never in bytes. SQuAD offsets are character based and
//! Ethiopic script takes three bytes per letter in UTF-8.
//!
//! LCS is computed over the *characters* of the normalized inputs. Word
//! splitting only drives window enumeration in the aligner.

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("word index {index} out of range for sequence of {len} words")]
    IndexOutOfRange { index: usize, len: usize },
}

/// NFC-composes, lowercases, collapses whitespace runs to a single space and
/// trims both ends.
///
/// Ethiopic has no case, so lowercasing only affects cased scripts.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.nfc().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// One whitespace-delimited word and its character offset in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub char_start: usize,
}

impl Word {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn char_end(&self) -> usize {
        self.char_start + self.char_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordSequence {
    pub words: Vec<Word>,
    /// Character length of the source string.
    pub source_len: usize,
}

impl WordSequence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Character offset of word `i` in the source string.
    pub fn word_char_start(&self, i: usize) -> Result<usize, TextError> {
        self.words
            .get(i)
            .map(|w| w.char_start)
            .ok_or(TextError::IndexOutOfRange {
                index: i,
                len: self.words.len(),
            })
    }
}

/// Splits on Unicode whitespace. Offsets refer to the original, un-normalized
/// string.
pub fn split_words(s: &str) -> WordSequence {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut n = 0;
    for (i, c) in s.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(Word {
                    text: std::mem::take(&mut current),
                    char_start: start,
                });
            }
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(Word {
            text: current,
            char_start: start,
        });
    }
    WordSequence {
        words,
        source_len: n,
    }
}

pub fn word_char_start(ws: &WordSequence, i: usize) -> Result<usize, TextError> {
    ws.word_char_start(i)
}

/// LCS length over two character slices, two-row DP.
pub fn lcs_length_chars(a: &[char], b: &[char]) -> usize {
    // keep the shorter sequence on the row axis
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for &x in long {
        for (j, &y) in short.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Classic LCS length over the characters of the normalized inputs.
pub fn lcs_length(a: &str, b: &str) -> usize {
    let a: Vec<char> = normalize_text(a).chars().collect();
    let b: Vec<char> = normalize_text(b).chars().collect();
    lcs_length_chars(&a, &b)
}

/// `lcs / max(len_a, len_b)` over normalized characters. Two empty inputs are
/// identical (1.0); exactly one empty input gives 0.0.
pub fn lcs_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = normalize_text(a).chars().collect();
    let b: Vec<char> = normalize_text(b).chars().collect();
    lcs_similarity_chars(&a, &b)
}

pub(crate) fn lcs_similarity_chars(a: &[char], b: &[char]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => lcs_length_chars(a, b) as f64 / a.len().max(b.len()) as f64,
    }
}

/// Extracts `len` characters starting at character offset `start`, or `None`
/// if the range runs past the end of `s`.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = s
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(s.len()));
    let from = indices.nth(start)?;
    if len == 0 {
        return Some(&s[from..from]);
    }
    let to = indices.nth(len - 1)?;
    Some(&s[from..to])
}
