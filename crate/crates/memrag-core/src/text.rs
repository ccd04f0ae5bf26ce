//! Tokenization shared by the embedder and the answer metrics.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercase tokens split on whitespace and punctuation.
///
/// A token is a maximal run of alphanumeric characters, so `"01:40"` yields
/// `["01", "40"]` and `"boss's"` yields `["boss", "s"]`.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            out.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}
