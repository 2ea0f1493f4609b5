use super::{AttemptError, EmbedBackend, Embedder, ProviderError};
use crate::text::normalize_text;

pub const TEST_EMBED_DIM: usize = 256;

/// XORed into the FNV-1a 64-bit offset basis before hashing each n-gram.
pub const TEST_EMBED_SEED: u64 = 0x5141_5845_4d42_4544;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]` against rounding drift.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, ProviderError> {
    if u.dim() != v.dim() {
        return Err(ProviderError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(ProviderError::ZeroVector);
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ TEST_EMBED_SEED;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic offline embedder.
///
/// Counts character 1-, 2- and 3-grams of the normalized text, hashes each
/// n-gram's UTF-8 bytes with seeded FNV-1a into [`TEST_EMBED_DIM`] buckets,
/// and L2-normalizes. Text that normalizes to empty maps to `e_0`.
pub fn test_embedder(text: &str) -> EmbeddingVector {
    let chars: Vec<char> = normalize_text(text).chars().collect();
    let mut values = vec![0.0; TEST_EMBED_DIM];
    if chars.is_empty() {
        values[0] = 1.0;
        return EmbeddingVector { values };
    }
    let mut buf = String::new();
    for n in 1..=3 {
        for gram in chars.windows(n) {
            buf.clear();
            buf.extend(gram);
            let bucket = (fnv1a(buf.as_bytes()) % TEST_EMBED_DIM as u64) as usize;
            values[bucket] += 1.0;
        }
    }
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut values {
        *x /= norm;
    }
    EmbeddingVector { values }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TestEmbedder;

impl Embedder for TestEmbedder {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        Ok(test_embedder(text))
    }

    fn provider_id(&self) -> String {
        "test-ngram-256".to_string()
    }
}

impl EmbedBackend for TestEmbedder {
    fn id(&self) -> &str {
        "test-ngram-256"
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, AttemptError> {
        Ok(test_embedder(text).into_values())
    }
}
