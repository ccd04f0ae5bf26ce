//! JSON Lines corpus, edit-stream and cache files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use memrag_core::generation::{AnswerCache, CacheKey, CachedAnswer};
use memrag_core::memory::{MemoryRecord, QaPair, Session};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorpusLine {
    Memory {
        user_id: String,
        #[serde(flatten)]
        record: MemoryRecord,
    },
    Qa {
        user_id: String,
        #[serde(flatten)]
        qa: QaPair,
    },
}

pub fn corpus_lines(sessions: &[Session]) -> Vec<CorpusLine> {
    let mut lines = Vec::new();
    for s in sessions {
        for m in &s.memories {
            lines.push(CorpusLine::Memory { user_id: s.user_id.clone(), record: m.clone() });
        }
        for qa in &s.qa_pairs {
            lines.push(CorpusLine::Qa { user_id: s.user_id.clone(), qa: qa.clone() });
        }
    }
    lines
}

/// Groups lines into sessions, users in order of first appearance.
pub fn sessions_from_lines(lines: Vec<CorpusLine>) -> Vec<Session> {
    let mut order: Vec<String> = Vec::new();
    let mut parts: BTreeMap<String, (Vec<MemoryRecord>, Vec<QaPair>)> = BTreeMap::new();
    for line in lines {
        let (user, memory, qa) = match line {
            CorpusLine::Memory { user_id, record } => (user_id, Some(record), None),
            CorpusLine::Qa { user_id, qa } => (user_id, None, Some(qa)),
        };
        let entry = parts.entry(user.clone()).or_insert_with(|| {
            order.push(user.clone());
            (Vec::new(), Vec::new())
        });
        entry.0.extend(memory);
        entry.1.extend(qa);
    }
    order
        .into_iter()
        .map(|u| {
            let (m, q) = parts.remove(&u).unwrap_or_default();
            Session::new(u, m, q)
        })
        .collect()
}

pub fn write_corpus(path: &Path, sessions: &[Session]) -> Result<()> {
    write_jsonl(path, corpus_lines(sessions))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Session>> {
    Ok(sessions_from_lines(read_jsonl(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CacheLine {
    #[serde(flatten)]
    key: CacheKey,
    answer: String,
    score: f64,
}

pub fn write_cache(path: &Path, cache: &AnswerCache) -> Result<()> {
    write_jsonl(
        path,
        cache.iter().map(|(k, v)| CacheLine { key: k.clone(), answer: v.answer.clone(), score: v.score }),
    )
}

pub fn read_cache(path: &Path) -> Result<AnswerCache> {
    let lines: Vec<CacheLine> = read_jsonl(path)?;
    Ok(lines.into_iter().map(|l| (l.key, CachedAnswer { answer: l.answer, score: l.score })).collect())
}
