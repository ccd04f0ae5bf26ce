//! Answer generation behind a uniform interface, the deterministic slot
//! oracle used for training, and the answer cache.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{MemoryId, QaPair, Session};
use crate::metrics::Metric;

/// Rendering used when none of the answer's slots is covered.
pub const INSUFFICIENT_MEMORY: &str = "No relevant memory found.";
/// Stand-in for a slot whose memory was not selected.
pub const UNKNOWN_SLOT: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("generator transport failed after {retries} retries: {message}")]
    Transport { retries: u32, message: String },
    #[error("generator returned an empty answer")]
    EmptyAnswer,
}

/// `generate(Q ⊕ memories)`. Implementations must be pure: identical
/// question and memory multiset give the identical answer.
pub trait Generator {
    fn generate(&self, question: &str, memories: &[&str]) -> Result<String, GenerateError>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplatePart {
    Text(String),
    /// A value contributed by one memory.
    Slot { value: String, memory_id: MemoryId },
}

/// Answer layout: literal text interleaved with memory-backed slots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerTemplate {
    pub parts: Vec<TemplatePart>,
}

impl AnswerTemplate {
    pub fn new() -> Self {
        AnswerTemplate::default()
    }

    pub fn text(mut self, s: impl Into<String>) -> Self {
        self.parts.push(TemplatePart::Text(s.into()));
        self
    }

    pub fn slot(mut self, value: impl Into<String>, memory_id: impl Into<String>) -> Self {
        self.parts.push(TemplatePart::Slot { value: value.into(), memory_id: memory_id.into() });
        self
    }

    /// Every slot filled.
    pub fn render(&self) -> String {
        self.render_with(|_| true)
    }

    /// Fills the slots accepted by `covered`; others become [`UNKNOWN_SLOT`].
    pub fn render_with(&self, covered: impl Fn(&str) -> bool) -> String {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                TemplatePart::Text(t) => out.push_str(t),
                TemplatePart::Slot { value, memory_id } => {
                    out.push_str(if covered(memory_id) { value } else { UNKNOWN_SLOT })
                }
            }
        }
        out
    }

    /// Distinct slot memories in first-appearance order.
    pub fn memory_ids(&self) -> Vec<MemoryId> {
        let mut out: Vec<MemoryId> = Vec::new();
        for part in &self.parts {
            if let TemplatePart::Slot { memory_id, .. } = part {
                if !out.contains(memory_id) {
                    out.push(memory_id.clone());
                }
            }
        }
        out
    }

    pub fn slot_values(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            TemplatePart::Slot { value, .. } => Some(value.as_str()),
            TemplatePart::Text(_) => None,
        })
    }

    /// Points every slot sourced from `old` at `new`, swapping `old_value`
    /// for `new_value` where the slot carried it.
    pub fn retarget(&mut self, old: &str, new: &str, old_value: &str, new_value: &str) {
        for part in &mut self.parts {
            if let TemplatePart::Slot { value, memory_id } = part {
                if memory_id == old {
                    *memory_id = new.to_string();
                    if value == old_value {
                        *value = new_value.to_string();
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct ResolvedSlotPart {
    text: String,
    /// Text of the memory that supplies this slot; `None` for literal text.
    source: Option<String>,
}

/// Deterministic slot-filling stand-in for an LLM.
///
/// Each registered question maps to its answer template, with every slot
/// keyed by the text of the memory that supplies it. A slot is covered when
/// that memory text is among the inputs. Full coverage reproduces the
/// reference answer verbatim, partial coverage renders the template with
/// the missing slots as `unknown`, and no coverage (or an unknown
/// question) yields [`INSUFFICIENT_MEMORY`].
#[derive(Clone, Debug, Default)]
pub struct MockOracle {
    templates: BTreeMap<String, Vec<ResolvedSlotPart>>,
}

impl MockOracle {
    pub fn new() -> Self {
        MockOracle::default()
    }

    /// Registers `qa`; memory ids resolve to texts through `text_of`.
    /// Returns false (and registers nothing) when the QA has no template
    /// or a slot memory cannot be resolved.
    pub fn register<'a>(&mut self, qa: &QaPair, text_of: impl Fn(&str) -> Option<&'a str>) -> bool {
        let Some(template) = &qa.template else { return false };
        let mut parts = Vec::with_capacity(template.parts.len());
        for part in &template.parts {
            match part {
                TemplatePart::Text(t) => parts.push(ResolvedSlotPart { text: t.clone(), source: None }),
                TemplatePart::Slot { value, memory_id } => match text_of(memory_id) {
                    Some(src) => parts.push(ResolvedSlotPart { text: value.clone(), source: Some(src.to_string()) }),
                    None => return false,
                },
            }
        }
        self.templates.insert(qa.question.clone(), parts);
        true
    }

    pub fn from_session(session: &Session) -> Self {
        let mut oracle = MockOracle::new();
        for qa in &session.qa_pairs {
            oracle.register(qa, |id| session.memory(id).map(|m| m.text.as_str()));
        }
        oracle
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

impl Generator for MockOracle {
    fn generate(&self, question: &str, memories: &[&str]) -> Result<String, GenerateError> {
        let Some(parts) = self.templates.get(question) else {
            return Ok(INSUFFICIENT_MEMORY.to_string());
        };
        let covered = |src: &str| memories.contains(&src);
        let any = parts.iter().any(|p| p.source.as_deref().is_some_and(covered));
        if !any {
            return Ok(INSUFFICIENT_MEMORY.to_string());
        }
        let mut out = String::new();
        for p in parts {
            match &p.source {
                Some(src) if !covered(src) => out.push_str(UNKNOWN_SLOT),
                _ => out.push_str(&p.text),
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub question_id: String,
    /// Sorted.
    pub memory_ids: Vec<MemoryId>,
}

impl CacheKey {
    pub fn new(question_id: impl Into<String>, memory_ids: &[&str]) -> Self {
        let mut ids: Vec<MemoryId> = memory_ids.iter().map(|s| s.to_string()).collect();
        ids.sort_unstable();
        CacheKey { question_id: question_id.into(), memory_ids: ids }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedAnswer {
    pub answer: String,
    pub score: f64,
}

/// Memoizes `(question, selected memories) -> (answer, metric)`.
#[derive(Clone, Debug, Default)]
pub struct AnswerCache {
    entries: BTreeMap<CacheKey, CachedAnswer>,
    hits: u64,
    misses: u64,
}

impl AnswerCache {
    pub fn new() -> Self {
        AnswerCache::default()
    }

    pub fn get(&mut self, key: &CacheKey) -> Option<&CachedAnswer> {
        let found = self.entries.get(key);
        if found.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        found
    }

    pub fn insert(&mut self, key: CacheKey, value: CachedAnswer) {
        self.entries.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CacheKey, &CachedAnswer)> {
        self.entries.iter()
    }
}

impl FromIterator<(CacheKey, CachedAnswer)> for AnswerCache {
    fn from_iter<I: IntoIterator<Item = (CacheKey, CachedAnswer)>>(iter: I) -> Self {
        AnswerCache { entries: iter.into_iter().collect(), hits: 0, misses: 0 }
    }
}

/// One selected memory as handed to the scorer.
#[derive(Clone, Copy, Debug)]
pub struct SelectedMemory<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// Something that can score a memory selection for a question: generate an
/// answer and measure it against the reference.
pub trait AnswerScorer {
    fn score(&mut self, question_id: &str, qa: &QaPair, selected: &[SelectedMemory<'_>])
        -> Result<(String, f64), GenerateError>;
}

/// Generator + metric, optionally memoized.
pub struct Scorer<'g> {
    generator: &'g dyn Generator,
    metric: Metric,
    cache: Option<AnswerCache>,
}

impl core::fmt::Debug for Scorer<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Scorer").field("metric", &self.metric).field("cached", &self.cache.is_some()).finish()
    }
}

impl<'g> Scorer<'g> {
    pub fn new(generator: &'g dyn Generator, metric: Metric) -> Self {
        Scorer { generator, metric, cache: None }
    }

    pub fn cached(generator: &'g dyn Generator, metric: Metric) -> Self {
        Scorer { generator, metric, cache: Some(AnswerCache::new()) }
    }

    pub fn with_cache(generator: &'g dyn Generator, metric: Metric, cache: AnswerCache) -> Self {
        Scorer { generator, metric, cache: Some(cache) }
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn cache(&self) -> Option<&AnswerCache> {
        self.cache.as_ref()
    }

    pub fn into_cache(self) -> Option<AnswerCache> {
        self.cache
    }

    /// Generates without scoring (cache consulted when present).
    pub fn generate(&mut self, question_id: &str, qa: &QaPair, selected: &[SelectedMemory<'_>]) -> Result<String, GenerateError> {
        self.score(question_id, qa, selected).map(|(a, _)| a)
    }
}

impl AnswerScorer for Scorer<'_> {
    fn score(&mut self, question_id: &str, qa: &QaPair, selected: &[SelectedMemory<'_>]) -> Result<(String, f64), GenerateError> {
        let key = self.cache.as_ref().map(|_| {
            let ids: Vec<&str> = selected.iter().map(|m| m.id).collect();
            CacheKey::new(question_id, &ids)
        });
        if let (Some(cache), Some(key)) = (self.cache.as_mut(), key.as_ref()) {
            if let Some(hit) = cache.get(key) {
                return Ok((hit.answer.clone(), hit.score));
            }
        }
        let texts: Vec<&str> = selected.iter().map(|m| m.text).collect();
        let answer = self.generator.generate(&qa.question, &texts)?;
        let score = self.metric.score(&answer, &qa.answer);
        if let (Some(cache), Some(key)) = (self.cache.as_mut(), key) {
            cache.insert(key, CachedAnswer { answer: answer.clone(), score });
        }
        Ok((answer, score))
    }
}

/// Scores every selection as zero without generating; used when only the
/// visited states matter (e.g. collecting warm-start samples).
#[derive(Clone, Copy, Debug, Default)]
pub struct NoScore;

impl AnswerScorer for NoScore {
    fn score(&mut self, _: &str, _: &QaPair, _: &[SelectedMemory<'_>]) -> Result<(String, f64), GenerateError> {
        Ok((String::new(), 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rouge_l;
    use alloc::vec;

    const M1: &str = "My boss is traveling to Amsterdam next month, I assist with flight and hotel arrangements.";
    const M2: &str = "I booked the EK349 flight.";
    const M4: &str = "The EK349 flight departs at 01:40 on 2024-05-12.";

    fn boss_qa() -> QaPair {
        let template = AnswerTemplate::new()
            .text("Your ")
            .slot("boss", "M1")
            .text(" flight ")
            .slot("EK349", "M2")
            .text(" departs at ")
            .slot("01:40 on 2024-05-12", "M4")
            .text(".");
        let mut qa = QaPair::new(
            "What time is my boss's flight to Amsterdam?",
            template.render(),
            vec!["M1".into(), "M2".into(), "M4".into()],
        );
        qa.template = Some(template);
        qa
    }

    fn oracle() -> MockOracle {
        let mut o = MockOracle::new();
        let texts = [("M1", M1), ("M2", M2), ("M4", M4)];
        assert!(o.register(&boss_qa(), |id| texts.iter().find(|(k, _)| *k == id).map(|(_, v)| *v)));
        o
    }

    #[test]
    fn full_coverage_reproduces_reference() {
        let qa = boss_qa();
        assert_eq!(qa.answer, "Your boss flight EK349 departs at 01:40 on 2024-05-12.");
        let got = oracle().generate(&qa.question, &[M4, M2, M1, "I like spicy food."]).unwrap();
        assert_eq!(got, qa.answer);
    }

    #[test]
    fn empty_selection_is_insufficient() {
        let qa = boss_qa();
        assert_eq!(oracle().generate(&qa.question, &[]).unwrap(), INSUFFICIENT_MEMORY);
        assert_eq!(oracle().generate("unregistered?", &[M1]).unwrap(), INSUFFICIENT_MEMORY);
    }

    #[test]
    fn partial_coverage_elides_missing_slots() {
        let qa = boss_qa();
        let got = oracle().generate(&qa.question, &[M1, M2]).unwrap();
        assert_eq!(got, "Your boss flight EK349 departs at unknown.");
    }

    #[test]
    fn adding_required_memories_never_lowers_rouge_l() {
        let qa = boss_qa();
        let o = oracle();
        let all = [M1, M2, M4];
        // every order of adding the three required memories
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for order in orders {
            let mut sel: Vec<&str> = Vec::new();
            let mut last = rouge_l(&o.generate(&qa.question, &sel).unwrap(), &qa.answer);
            for i in order {
                sel.push(all[i]);
                let now = rouge_l(&o.generate(&qa.question, &sel).unwrap(), &qa.answer);
                assert!(now >= last);
                last = now;
            }
            assert!((last - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cache_hit_returns_identical_answer() {
        let qa = boss_qa();
        let o = oracle();
        let mut cached = Scorer::cached(&o, Metric::RougeL);
        let mut plain = Scorer::new(&o, Metric::RougeL);
        let sel = [SelectedMemory { id: "M2", text: M2 }, SelectedMemory { id: "M1", text: M1 }];
        let rev = [SelectedMemory { id: "M1", text: M1 }, SelectedMemory { id: "M2", text: M2 }];
        let a = cached.score("q", &qa, &sel).unwrap();
        let b = cached.score("q", &qa, &rev).unwrap();
        let c = plain.score("q", &qa, &sel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let cache = cached.cache().unwrap();
        assert_eq!((cache.hits(), cache.misses(), cache.len()), (1, 1, 1));
    }

    #[test]
    fn retarget_swaps_value_and_source() {
        let mut t = boss_qa().template.unwrap();
        t.retarget("M4", "M9", "01:40 on 2024-05-12", "01:30 on 2024-05-12");
        assert_eq!(t.render(), "Your boss flight EK349 departs at 01:30 on 2024-05-12.");
        assert_eq!(t.memory_ids(), ["M1", "M2", "M9"]);
    }
}
