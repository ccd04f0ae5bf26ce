//! Dense vectors, cosine similarity and deterministic hashed text embeddings.

use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokens;

/// Default dimension of text embeddings.
pub const TEXT_DIM: usize = 128;

const UNIGRAM_WEIGHT: f64 = 1.0;
const TRIGRAM_WEIGHT: f64 = 0.5;

/// Function words carry no topical signal and only add hash collisions.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "has", "have", "i", "in",
    "is", "it", "its", "me", "my", "of", "on", "or", "s", "that", "the", "this", "to", "was", "what", "when",
    "where", "which", "who", "will", "with", "you", "your",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn from_vec(components: Vec<f64>) -> Self {
        Vector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Scales to unit L2 norm; the zero vector is left unchanged.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
    }

    pub fn add_assign(&mut self, other: &Vector) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|x| *x *= factor);
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &Vector) -> f64 {
        libm::sqrt(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Arithmetic mean of `vectors`, or the zero vector of `dim` when empty.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Vector>, dim: usize) -> Vector {
        let mut acc = Vector::zeros(dim);
        let mut n = 0usize;
        for v in vectors {
            acc.add_assign(v);
            n += 1;
        }
        if n > 0 {
            acc.scale(1.0 / n as f64);
        }
        acc
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`; zero when either norm is zero.
pub fn cosine(u: &Vector, v: &Vector) -> Result<f64, DimensionMismatch> {
    if u.dim() != v.dim() {
        return Err(DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn feature_hash(namespace: u8, feature: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u8(namespace);
    h.write(feature);
    h.finish()
}

fn add_feature(out: &mut [f64], namespace: u8, feature: &[u8], weight: f64) {
    let h = feature_hash(namespace, feature);
    let bucket = (h % out.len() as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    out[bucket] += sign * weight;
}

/// Signed feature hashing of lowercase word unigrams plus the character
/// trigrams of each boundary-marked word (`<word>`), L2-normalized.
/// Common function words are skipped.
///
/// Empty (or punctuation-only, or all function-word) text maps to the zero
/// vector.
///
/// # Panics
/// If `dim == 0`.
pub fn embed_text(text: &str, dim: usize) -> Vector {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut out = vec![0.0; dim];
    let mut buf: Vec<char> = Vec::new();
    let mut tri = [0u8; 12];
    for word in tokens(text) {
        if STOPWORDS.contains(&word.as_str()) {
            continue;
        }
        add_feature(&mut out, b'w', word.as_bytes(), UNIGRAM_WEIGHT);
        buf.clear();
        buf.push('<');
        buf.extend(word.chars());
        buf.push('>');
        for window in buf.windows(3) {
            let mut len = 0;
            for ch in window {
                len += ch.encode_utf8(&mut tri[len..]).len();
            }
            add_feature(&mut out, b't', &tri[..len], TRIGRAM_WEIGHT);
        }
    }
    let mut v = Vector(out);
    v.normalize();
    v
}
