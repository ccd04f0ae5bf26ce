//! Memory selection as an MDP over the graph.
//!
//! An episode starts from the attachment nodes of the question's Top-K
//! memories (or from the user root) and walks the graph depth-first. Every
//! live memory met on the way is one decision: include it in the selected
//! set, or stop, which abandons the current node and its branch. Including a
//! memory regenerates the answer and is rewarded with the metric change.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, embed_text, Vector};
use crate::generation::{AnswerScorer, GenerateError, SelectedMemory};
use crate::graph::Emg;
use crate::memory::{MemoryId, QaPair};

/// Cosine similarities describing one decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Question entity vs the node holding the memory.
    pub sim_entity: f64,
    /// Question relation vs the relation that attached the memory.
    pub sim_relation: f64,
    /// Question vs memory text.
    pub sim_memory: f64,
}

impl EnvState {
    pub fn as_array(&self) -> [f64; 3] {
        [self.sim_entity, self.sim_relation, self.sim_memory]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        EnvState { sim_entity: a[0], sim_relation: a[1], sim_memory: a[2] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Stop = 0,
    Include = 1,
}

impl Action {
    /// Output index in the policy network.
    pub fn index(self) -> usize {
        match self {
            Action::Include => 0,
            Action::Stop => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Begin at the attachment nodes of the Top-K memories.
    #[default]
    Activated,
    /// Begin at the user root and descend through types and subclasses.
    Root,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub k: usize,
    pub max_selected: usize,
    pub start: StartMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { k: 3, max_selected: 16, start: StartMode::Activated }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("policy failed: {0}")]
    Policy(String),
}

/// Live memories ranked by cosine with `query`, best first; ties by id.
pub fn top_k_memories(emg: &Emg, query: &Vector, k: usize) -> Vec<(MemoryId, f64)> {
    let mut scored: Vec<(MemoryId, f64)> = emg
        .active_memories()
        .map(|m| (m.record.id.clone(), cosine(&m.embedding, query).unwrap_or(0.0)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Attachment nodes of the question's Top-`k` memories, deduplicated, in
/// score order.
pub fn activate(emg: &Emg, qa: &QaPair, k: usize) -> Result<Vec<String>, EnvError> {
    if k == 0 {
        return Err(EnvError::ZeroK);
    }
    let query = embed_text(&qa.question, emg.dim());
    let mut nodes: Vec<String> = Vec::new();
    for (id, _) in top_k_memories(emg, &query, k) {
        if let Some(m) = emg.memory(&id) {
            if !nodes.contains(&m.node) {
                nodes.push(m.node.clone());
            }
        }
    }
    Ok(nodes)
}

const QUESTION_WORDS: &[&str] = &[
    "what", "when", "where", "who", "whom", "whose", "which", "why", "how", "is", "are", "was", "were", "do", "does",
    "did", "can", "could", "will", "would", "should", "i", "my", "the", "a", "an",
];

/// Verb forms recognised as the question relation, in priority order.
const VERB_TABLE: &[&str] = &[
    "departs", "depart", "departing", "leaves", "leave", "arrives", "arrive", "booked", "book", "reserved", "lives",
    "live", "works", "work", "likes", "like", "prefers", "prefer", "born", "visiting", "visit", "traveling", "travel",
    "starts", "start", "ends", "end", "meets", "meet", "drives", "drive", "plays", "play", "studies", "study",
];

/// Question entity and relation: the stored anchors when present, else a
/// capitalized-span and verb-table heuristic.
pub fn extract_question_anchor(qa: &QaPair) -> (String, String) {
    if let (Some(e), Some(r)) = (&qa.q_entity, &qa.q_relation) {
        return (e.clone(), r.clone());
    }
    let words: Vec<&str> = qa
        .question
        .split(|c: char| c.is_whitespace() || matches!(c, '?' | '!' | ',' | '.' | ';' | ':'))
        .filter(|w| !w.is_empty())
        .collect();
    let capitalized = |w: &str| {
        w.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
            && !QUESTION_WORDS.contains(&w.to_lowercase().as_str())
    };
    let mut best: &[&str] = &[];
    let mut i = 0;
    while i < words.len() {
        if capitalized(words[i]) {
            let start = i;
            while i < words.len() && capitalized(words[i]) {
                i += 1;
            }
            if i - start > best.len() {
                best = &words[start..i];
            }
        } else {
            i += 1;
        }
    }
    let entity = best.join(" ");
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let relation = VERB_TABLE
        .iter()
        .find(|v| lower.iter().any(|w| w == *v))
        .map(|v| v.to_string())
        .unwrap_or_default();
    (entity, relation)
}

/// Chooses an action for a state.
pub trait ActionPolicy {
    fn decide(&mut self, state: &EnvState) -> Result<Action, EnvError>;
}

/// Includes every memory it meets.
#[derive(Clone, Copy, Debug, Default)]
pub struct IncludeAll;

impl ActionPolicy for IncludeAll {
    fn decide(&mut self, _: &EnvState) -> Result<Action, EnvError> {
        Ok(Action::Include)
    }
}

/// Stops at every memory.
#[derive(Clone, Copy, Debug, Default)]
pub struct StopAll;

impl ActionPolicy for StopAll {
    fn decide(&mut self, _: &EnvState) -> Result<Action, EnvError> {
        Ok(Action::Stop)
    }
}

impl<F: FnMut(&EnvState) -> Action> ActionPolicy for F {
    fn decide(&mut self, state: &EnvState) -> Result<Action, EnvError> {
        Ok(self(state))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum NodeRef {
    Root,
    Type(String),
    Subclass(String),
    Entity(String),
}

#[derive(Clone, Debug)]
struct Pending {
    node: String,
    node_embedding: Vector,
    /// (memory id, attaching relation), best question match first.
    memories: Vec<(MemoryId, String)>,
    next: usize,
    included_any: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub memory_id: MemoryId,
    pub state: EnvState,
    pub action: Action,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Option<EnvState>,
    pub reward: f64,
    pub done: bool,
}

/// A single episode in progress.
#[derive(Debug)]
pub struct EpisodeContext<'a> {
    emg: &'a Emg,
    qa: &'a QaPair,
    question_id: String,
    q_embedding: Vector,
    entity_embedding: Vector,
    relation_embedding: Vector,
    frontier: Vec<NodeRef>,
    pending: Option<Pending>,
    selected: Vec<MemoryId>,
    visited: BTreeSet<NodeRef>,
    steps: usize,
    max_selected: usize,
    done: bool,
    answer: String,
    score: f64,
    initial_answer: String,
    initial_score: f64,
}

impl<'a> EpisodeContext<'a> {
    /// Starts an episode: activates nodes, generates the answer for the
    /// empty selection and advances to the first decision.
    pub fn new(
        emg: &'a Emg,
        qa: &'a QaPair,
        question_id: impl Into<String>,
        config: &EnvConfig,
        scorer: &mut dyn AnswerScorer,
    ) -> Result<Self, EnvError> {
        let dim = emg.dim();
        let (n_q, r_q) = extract_question_anchor(qa);
        let frontier = match config.start {
            StartMode::Activated => {
                activate(emg, qa, config.k)?.into_iter().rev().map(NodeRef::Entity).collect()
            }
            StartMode::Root => alloc::vec![NodeRef::Root],
        };
        let question_id = question_id.into();
        let (answer, score) = scorer.score(&question_id, qa, &[])?;
        let mut ctx = EpisodeContext {
            emg,
            qa,
            question_id,
            q_embedding: embed_text(&qa.question, dim),
            entity_embedding: embed_text(&n_q, dim),
            relation_embedding: embed_text(&r_q, dim),
            frontier,
            pending: None,
            selected: Vec::new(),
            visited: BTreeSet::new(),
            steps: 0,
            max_selected: config.max_selected,
            done: false,
            initial_answer: answer.clone(),
            initial_score: score,
            answer,
            score,
        };
        if ctx.max_selected == 0 {
            ctx.done = true;
        } else {
            ctx.advance();
        }
        Ok(ctx)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn selected(&self) -> &[MemoryId] {
        &self.selected
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn answer(&self) -> &str {
        &self.answer
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn initial_score(&self) -> f64 {
        self.initial_score
    }

    pub fn initial_answer(&self) -> &str {
        &self.initial_answer
    }

    /// Number of distinct graph nodes popped so far.
    pub fn visited_count(&self) -> usize {
        self.visited.len()
    }

    /// Memory under consideration, if the episode is not done.
    pub fn current_memory(&self) -> Option<&str> {
        let p = self.pending.as_ref()?;
        p.memories.get(p.next).map(|(id, _)| id.as_str())
    }

    /// State of the pending decision.
    pub fn current_state(&self) -> Option<EnvState> {
        let p = self.pending.as_ref()?;
        let (id, relation) = p.memories.get(p.next)?;
        let m = self.emg.memory(id)?;
        let rel = embed_text(relation, self.emg.dim());
        Some(EnvState {
            sim_entity: cosine(&self.entity_embedding, &p.node_embedding).unwrap_or(0.0),
            sim_relation: cosine(&self.relation_embedding, &rel).unwrap_or(0.0),
            sim_memory: cosine(&self.q_embedding, &m.embedding).unwrap_or(0.0),
        })
    }

    pub fn step(&mut self, action: Action, scorer: &mut dyn AnswerScorer) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let Some(pending) = self.pending.as_mut() else {
            self.done = true;
            return Err(EnvError::StepAfterDone);
        };
        self.steps += 1;
        let mut reward = 0.0;
        match action {
            Action::Include => {
                let id = pending.memories[pending.next].0.clone();
                pending.next += 1;
                pending.included_any = true;
                self.selected.push(id);
                let texts: Vec<SelectedMemory<'_>> = self
                    .selected
                    .iter()
                    .filter_map(|id| self.emg.memory(id).map(|m| SelectedMemory { id, text: m.record.text.as_str() }))
                    .collect();
                let (answer, score) = scorer.score(&self.question_id, self.qa, &texts)?;
                reward = score - self.score;
                self.answer = answer;
                self.score = score;
                if self.selected.len() >= self.max_selected {
                    self.done = true;
                    self.pending = None;
                }
            }
            Action::Stop => {
                self.pending = None;
            }
        }
        if !self.done {
            self.advance();
        }
        Ok(StepResult { next_state: self.current_state(), reward, done: self.done })
    }

    /// Moves to the next decision, expanding transit nodes along the way.
    fn advance(&mut self) {
        loop {
            if let Some(p) = &self.pending {
                if p.next < p.memories.len() {
                    return;
                }
                let node = p.node.clone();
                let expand = p.included_any;
                self.pending = None;
                if expand {
                    self.push_neighbors(&node);
                }
            }
            let Some(next) = self.frontier.pop() else {
                self.done = true;
                return;
            };
            if !self.visited.insert(next.clone()) {
                continue;
            }
            match next {
                NodeRef::Root => {
                    for t in self.emg.type_nodes().iter().rev() {
                        self.frontier.push(NodeRef::Type(t.clone()));
                    }
                }
                NodeRef::Type(t) => {
                    for s in self.emg.subclasses_of(&t).iter().rev() {
                        self.frontier.push(NodeRef::Subclass(s.clone()));
                    }
                }
                NodeRef::Subclass(s) => {
                    let names: Vec<String> = self.emg.entities_in_subclass(&s).map(|n| n.name.clone()).collect();
                    for n in names.into_iter().rev() {
                        self.frontier.push(NodeRef::Entity(n));
                    }
                }
                NodeRef::Entity(name) => {
                    let mut memories: Vec<(MemoryId, String, f64)> = self
                        .emg
                        .attached(&name)
                        .map(|m| {
                            let c = cosine(&self.q_embedding, &m.embedding).unwrap_or(0.0);
                            (m.record.id.clone(), m.record.triple.relation.clone(), c)
                        })
                        .collect();
                    if memories.is_empty() {
                        self.push_neighbors(&name);
                        continue;
                    }
                    memories.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
                    let node_embedding = match self.emg.entity(&name) {
                        Some(n) => n.embedding.clone(),
                        None => embed_text(&name, self.emg.dim()),
                    };
                    self.pending = Some(Pending {
                        node: name,
                        node_embedding,
                        memories: memories.into_iter().map(|(id, rel, _)| (id, rel)).collect(),
                        next: 0,
                        included_any: false,
                    });
                }
            }
        }
    }

    fn push_neighbors(&mut self, node: &str) {
        for (n, _) in self.emg.neighbors(node).into_iter().rev() {
            let r = NodeRef::Entity(n);
            if !self.visited.contains(&r) {
                self.frontier.push(r);
            }
        }
    }
}

/// A finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub selected: Vec<MemoryId>,
    pub trajectory: Vec<Transition>,
    pub initial_answer: String,
    pub initial_score: f64,
    pub final_answer: String,
    pub final_score: f64,
    pub visited_nodes: usize,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.trajectory.iter().map(|t| t.reward).sum()
    }
}

/// Runs a full episode with `policy` choosing every action.
pub fn run_episode(
    emg: &Emg,
    qa: &QaPair,
    question_id: &str,
    policy: &mut dyn ActionPolicy,
    scorer: &mut dyn AnswerScorer,
    config: &EnvConfig,
) -> Result<Episode, EnvError> {
    let mut ctx = EpisodeContext::new(emg, qa, question_id, config, scorer)?;
    let mut trajectory = Vec::new();
    while let Some(state) = ctx.current_state() {
        let memory_id = ctx.current_memory().unwrap_or_default().to_string();
        let action = policy.decide(&state)?;
        let r = ctx.step(action, scorer)?;
        trajectory.push(Transition { memory_id, state, action, reward: r.reward });
        if r.done {
            break;
        }
    }
    Ok(Episode {
        selected: ctx.selected.clone(),
        trajectory,
        initial_answer: ctx.initial_answer.clone(),
        initial_score: ctx.initial_score,
        final_answer: ctx.answer.clone(),
        final_score: ctx.score,
        visited_nodes: ctx.visited_count(),
    })
}
