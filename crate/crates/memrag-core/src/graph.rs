//! The three-layer editable memory graph.
//!
//! * Type layer: the four fixed memory types, children of the user root.
//! * Subclass layer: the fixed subclasses of each type; each subclass is a
//!   partition with a center (mean embedding of its live memories).
//! * Graph layer: entity nodes joined by relation-labelled edges. Each
//!   memory contributes one edge and is attached to the edge's tail
//!   (in-degree) node; every entity belongs to exactly one subclass.
//!
//! Self references (`I`, `me`, ...) are the user root rather than an entity
//! node, so first-person memories hang directly off the root.
//!
//! Retired memories (superseded or expired) stay in the graph for audit but
//! are invisible to retrieval, traversal and partition centers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, embed_text, Vector};
use crate::memory::{
    validate_record, EditCommand, EditCommandError, EditKind, MemoryId, MemoryRecord, Session, Timestamp,
};
use crate::taxonomy::{self, MemoryType};
use crate::text::normalize;
use crate::transe::{assign_to_subclass, TransEError, TransEModel};

const SELF_ALIASES: &[&str] = &["i", "me", "my", "myself", "user"];

/// Whether an entity name refers to the user.
pub fn is_self(name: &str) -> bool {
    let n = normalize(name);
    SELF_ALIASES.contains(&n.as_str())
}

/// Relation labels compare after lowercasing and trimming.
pub fn relation_key(label: &str) -> String {
    normalize(label)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error(transparent)]
    TransE(#[from] TransEError),
    #[error(transparent)]
    InvalidEdit(#[from] EditCommandError),
    #[error("memory {0} already exists")]
    DuplicateMemory(MemoryId),
    #[error("memory {0} has the user as its tail")]
    SelfTail(MemoryId),
    #[error("memory {id} is invalid: {reason}")]
    InvalidMemory { id: MemoryId, reason: String },
    #[error("every partition is empty")]
    EmptyPartitions,
    #[error("partition {0} is empty")]
    EmptyPartition(String),
    #[error("unknown subclass {0}")]
    UnknownSubclass(String),
    #[error("the TransE model embeds no subclass")]
    NoSubclassEmbeddings,
    #[error("no existing relation to replace: ({head}, {relation})")]
    NoRelationToReplace { head: String, relation: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub name: String,
    pub subclass: String,
    pub embedding: Vector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub head: String,
    pub relation: String,
    pub tail: String,
    /// Memories that asserted this edge, live or retired.
    pub memory_ids: Vec<MemoryId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredMemory {
    pub record: MemoryRecord,
    pub embedding: Vector,
    /// Attachment node (the tail of the memory's triple).
    pub node: String,
    pub retired: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub kind_applied: EditKind,
    /// Top-1 memory of the located partition, when any partition was live.
    pub matched_memory_id: Option<MemoryId>,
    pub nodes_created: Vec<String>,
    pub nodes_updated: Vec<String>,
    pub memories_retired: Vec<MemoryId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emg {
    root: String,
    type_nodes: Vec<String>,
    subclass_nodes: BTreeMap<String, Vec<String>>,
    entities: BTreeMap<String, EntityNode>,
    edges: Vec<Edge>,
    adjacency: BTreeMap<String, Vec<usize>>,
    memories: BTreeMap<MemoryId, StoredMemory>,
    attachments: BTreeMap<String, Vec<MemoryId>>,
    partition_centers: BTreeMap<String, Vector>,
    dim: usize,
}

#[derive(Default)]
struct Touched {
    created: Vec<String>,
    updated: Vec<String>,
}

impl Emg {
    /// Root, type and subclass layers only.
    pub fn empty(root: impl Into<String>, dim: usize) -> Self {
        let type_nodes = MemoryType::ALL.iter().map(|t| t.name().to_string()).collect();
        let subclass_nodes = MemoryType::ALL
            .iter()
            .map(|t| (t.name().to_string(), t.subclasses().iter().map(|s| s.to_string()).collect()))
            .collect();
        let partition_centers = taxonomy::all_subclasses().map(|s| (s.to_string(), Vector::zeros(dim))).collect();
        Emg {
            root: root.into(),
            type_nodes,
            subclass_nodes,
            entities: BTreeMap::new(),
            edges: Vec::new(),
            adjacency: BTreeMap::new(),
            memories: BTreeMap::new(),
            attachments: BTreeMap::new(),
            partition_centers,
            dim,
        }
    }

    /// Builds a user's graph: one node per distinct entity, one edge per
    /// memory triple, memories on tail nodes, entities assigned to their
    /// nearest subclass under `transe`.
    pub fn build(session: &Session, transe: &TransEModel, dim: usize) -> Result<Self, GraphError> {
        let mut g = Emg::empty(session.user_id.clone(), dim);
        if session.memories.is_empty() {
            return Ok(g);
        }
        let candidates = transe.embedded_subclasses(taxonomy::all_subclasses());
        if candidates.is_empty() {
            return Err(GraphError::NoSubclassEmbeddings);
        }
        for m in &session.memories {
            g.insert_record(m.clone(), |_| String::new())?;
        }
        let names: Vec<String> = g.entities.keys().cloned().collect();
        for name in names {
            let subclass = assign_to_subclass(transe, &name, &candidates)?;
            if let Some(node) = g.entities.get_mut(&name) {
                node.subclass = subclass;
            }
        }
        g.recompute_all_centers();
        Ok(g)
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn type_nodes(&self) -> &[String] {
        &self.type_nodes
    }

    pub fn subclasses_of(&self, type_name: &str) -> &[String] {
        self.subclass_nodes.get(type_name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityNode> {
        self.entities.values()
    }

    pub fn entity(&self, name: &str) -> Option<&EntityNode> {
        self.entities.get(name)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn memory(&self, id: &str) -> Option<&StoredMemory> {
        self.memories.get(id)
    }

    pub fn memories(&self) -> impl Iterator<Item = &StoredMemory> {
        self.memories.values()
    }

    pub fn active_memories(&self) -> impl Iterator<Item = &StoredMemory> {
        self.memories.values().filter(|m| !m.retired)
    }

    pub fn active_count(&self) -> usize {
        self.active_memories().count()
    }

    pub fn is_active(&self, id: &str) -> bool {
        self.memories.get(id).is_some_and(|m| !m.retired)
    }

    pub fn partition_center(&self, subclass: &str) -> Option<&Vector> {
        self.partition_centers.get(subclass)
    }

    pub fn partition_centers(&self) -> &BTreeMap<String, Vector> {
        &self.partition_centers
    }

    /// Live memories attached at `node`, in attachment order.
    pub fn attached(&self, node: &str) -> impl Iterator<Item = &StoredMemory> {
        self.attachments
            .get(node)
            .into_iter()
            .flatten()
            .filter_map(|id| self.memories.get(id))
            .filter(|m| !m.retired)
    }

    /// All attachment ids at `node`, including retired memories.
    pub fn attachment_ids(&self, node: &str) -> &[MemoryId] {
        self.attachments.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Subclass owning the memory's attachment node.
    pub fn subclass_of_memory(&self, id: &str) -> Option<&str> {
        let m = self.memories.get(id)?;
        self.entities.get(&m.node).map(|n| n.subclass.as_str())
    }

    /// Entities of a subclass, by name.
    pub fn entities_in_subclass<'a>(&'a self, subclass: &'a str) -> impl Iterator<Item = &'a EntityNode> + 'a {
        self.entities.values().filter(move |n| n.subclass == subclass)
    }

    /// Neighbors of an entity over edges that still carry a live memory, as
    /// `(neighbor, relation label)` sorted and deduplicated. The user root
    /// is never a neighbor.
    pub fn neighbors(&self, node: &str) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for &i in self.adjacency.get(node).into_iter().flatten() {
            let e = &self.edges[i];
            if !e.memory_ids.iter().any(|id| self.is_active(id)) {
                continue;
            }
            let other = if e.head == node { &e.tail } else { &e.head };
            if other == node || is_self(other) {
                continue;
            }
            out.push((other.clone(), e.relation.clone()));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Memories whose attachment node lies in `subclass`.
    pub fn partition_members<'a>(&'a self, subclass: &'a str) -> impl Iterator<Item = &'a StoredMemory> + 'a {
        self.active_memories()
            .filter(move |m| self.entities.get(&m.node).is_some_and(|n| n.subclass == subclass))
    }

    /// Subclass whose center is most cosine-similar to `query` among
    /// non-empty partitions; ties go to the lexicographically first name.
    pub fn locate_partition(&self, query: &Vector) -> Result<String, GraphError> {
        let live: BTreeSet<&str> = self
            .active_memories()
            .filter_map(|m| self.entities.get(&m.node).map(|n| n.subclass.as_str()))
            .collect();
        let mut best: Option<(f64, &str)> = None;
        for s in live {
            let center = &self.partition_centers[s];
            let c = cosine(center, query).unwrap_or(0.0);
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, s));
            }
        }
        best.map(|(_, s)| s.to_string()).ok_or(GraphError::EmptyPartitions)
    }

    /// Most cosine-similar live memory in `subclass`; ties go to the smaller id.
    pub fn top1_in_partition(&self, subclass: &str, query: &Vector) -> Result<MemoryId, GraphError> {
        if !self.partition_centers.contains_key(subclass) {
            return Err(GraphError::UnknownSubclass(subclass.to_string()));
        }
        let mut best: Option<(f64, &str)> = None;
        for m in self.partition_members(subclass) {
            let c = cosine(&m.embedding, query).unwrap_or(0.0);
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, m.record.id.as_str()));
            }
        }
        best.map(|(_, id)| id.to_string()).ok_or_else(|| GraphError::EmptyPartition(subclass.to_string()))
    }

    /// Applies one edit.
    ///
    /// The payload is embedded, routed to its nearest partition and compared
    /// with that partition's Top-1 memory. Insertion and Deletion attach the
    /// payload (a Deletion payload carries the expiry that later retires it).
    /// Replacement finds the live edge with the payload's head and relation,
    /// retires the memories behind it and attaches the payload, which moves
    /// the relation to the payload's tail.
    pub fn apply_edit(&mut self, cmd: &EditCommand, transe: &TransEModel) -> Result<EditOutcome, GraphError> {
        cmd.validate()?;
        let payload = &cmd.payload;
        if self.memories.contains_key(&payload.id) {
            return Err(GraphError::DuplicateMemory(payload.id.clone()));
        }
        let query = embed_text(&payload.text, self.dim);
        let located = self.locate_partition(&query).ok();
        let matched = match &located {
            Some(s) => self.top1_in_partition(s, &query).ok(),
            None => None,
        };

        let mut retired = Vec::new();
        let mut touched_subclasses: BTreeSet<String> = BTreeSet::new();
        if cmd.kind == EditKind::Replacement {
            let edge = self.replacement_edge(payload, matched.as_deref()).ok_or_else(|| {
                GraphError::NoRelationToReplace {
                    head: payload.triple.head.clone(),
                    relation: payload.triple.relation.clone(),
                }
            })?;
            let ids = self.edges[edge].memory_ids.clone();
            for id in ids {
                if let Some(m) = self.memories.get_mut(&id) {
                    if !m.retired {
                        m.retired = true;
                        retired.push(id.clone());
                    }
                }
                if let Some(s) = self.subclass_of_memory(&id) {
                    touched_subclasses.insert(s.to_string());
                }
            }
        }

        let fallback = located.clone().or_else(|| payload.subclass_hint.clone().filter(|h| taxonomy::is_subclass(h)));
        let candidates = transe.embedded_subclasses(taxonomy::all_subclasses());
        let subclass_for = |name: &str| -> String {
            if transe.contains_entity(name) && !candidates.is_empty() {
                if let Ok(s) = assign_to_subclass(transe, name, &candidates) {
                    return s;
                }
            }
            fallback.clone().unwrap_or_else(|| taxonomy::all_subclasses().next().unwrap_or_default().to_string())
        };
        let touched = self.insert_record(payload.clone(), subclass_for)?;
        if let Some(s) = self.subclass_of_memory(&payload.id) {
            touched_subclasses.insert(s.to_string());
        }
        for s in &touched_subclasses {
            self.recompute_center(s);
        }
        let mut nodes_updated = touched.updated;
        if cmd.kind == EditKind::Replacement && !is_self(&payload.triple.head) {
            nodes_updated.push(payload.triple.head.clone());
        }
        nodes_updated.sort();
        nodes_updated.dedup();
        Ok(EditOutcome {
            kind_applied: cmd.kind,
            matched_memory_id: matched,
            nodes_created: touched.created,
            nodes_updated,
            memories_retired: retired,
        })
    }

    fn replacement_edge(&self, payload: &MemoryRecord, matched: Option<&str>) -> Option<usize> {
        let key = relation_key(&payload.triple.relation);
        let head_self = is_self(&payload.triple.head);
        let live: Vec<usize> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                let same_head = if head_self { is_self(&e.head) } else { e.head == payload.triple.head };
                same_head && relation_key(&e.relation) == key && e.memory_ids.iter().any(|id| self.is_active(id))
            })
            .map(|(i, _)| i)
            .collect();
        if let Some(m) = matched {
            if let Some(&i) = live.iter().find(|&&i| self.edges[i].memory_ids.iter().any(|id| id == m)) {
                return Some(i);
            }
        }
        // otherwise the edge asserted most recently
        live.into_iter().max_by(|&a, &b| {
            let newest = |i: usize| {
                self.edges[i]
                    .memory_ids
                    .iter()
                    .filter_map(|id| self.memories.get(id))
                    .filter(|m| !m.retired)
                    .map(|m| m.record.created_at)
                    .max()
            };
            newest(a).cmp(&newest(b)).then(b.cmp(&a))
        })
    }

    /// Retires every live memory whose `valid_until` is before `now`.
    pub fn sweep_expired(&mut self, now: Timestamp) -> usize {
        let expired: Vec<MemoryId> = self
            .memories
            .values()
            .filter(|m| !m.retired && m.record.valid_until.is_some_and(|u| u < now))
            .map(|m| m.record.id.clone())
            .collect();
        let mut touched = BTreeSet::new();
        for id in &expired {
            if let Some(s) = self.subclass_of_memory(id) {
                touched.insert(s.to_string());
            }
            if let Some(m) = self.memories.get_mut(id) {
                m.retired = true;
            }
        }
        for s in touched {
            self.recompute_center(&s);
        }
        expired.len()
    }

    /// Live memories as a session (no QA pairs).
    pub fn active_session(&self) -> Session {
        Session::new(self.root.clone(), self.active_memories().map(|m| m.record.clone()).collect(), Vec::new())
    }

    fn insert_record(
        &mut self,
        record: MemoryRecord,
        subclass_for: impl Fn(&str) -> String,
    ) -> Result<Touched, GraphError> {
        if let Some(v) = validate_record(&record).first() {
            return Err(GraphError::InvalidMemory { id: record.id.clone(), reason: v.to_string() });
        }
        if self.memories.contains_key(&record.id) {
            return Err(GraphError::DuplicateMemory(record.id.clone()));
        }
        if is_self(&record.triple.tail) {
            return Err(GraphError::SelfTail(record.id.clone()));
        }
        let mut touched = Touched::default();
        for name in [&record.triple.head, &record.triple.tail] {
            if is_self(name) {
                continue;
            }
            if self.entities.contains_key(name.as_str()) {
                touched.updated.push(name.clone());
            } else if !touched.created.contains(name) {
                self.entities.insert(
                    name.clone(),
                    EntityNode {
                        name: name.clone(),
                        subclass: subclass_for(name),
                        embedding: embed_text(name, self.dim),
                    },
                );
                touched.created.push(name.clone());
            }
        }
        let key = relation_key(&record.triple.relation);
        let existing = self.edges.iter().position(|e| {
            e.head == record.triple.head && e.tail == record.triple.tail && relation_key(&e.relation) == key
        });
        match existing {
            Some(i) => self.edges[i].memory_ids.push(record.id.clone()),
            None => {
                let i = self.edges.len();
                self.edges.push(Edge {
                    head: record.triple.head.clone(),
                    relation: record.triple.relation.clone(),
                    tail: record.triple.tail.clone(),
                    memory_ids: alloc::vec![record.id.clone()],
                });
                self.adjacency.entry(record.triple.head.clone()).or_default().push(i);
                if record.triple.tail != record.triple.head {
                    self.adjacency.entry(record.triple.tail.clone()).or_default().push(i);
                }
            }
        }
        let node = record.triple.tail.clone();
        self.attachments.entry(node.clone()).or_default().push(record.id.clone());
        let embedding = embed_text(&record.text, self.dim);
        self.memories.insert(record.id.clone(), StoredMemory { record, embedding, node, retired: false });
        touched.updated.retain(|n| !touched.created.contains(n));
        Ok(touched)
    }

    fn recompute_center(&mut self, subclass: &str) {
        let center = Vector::mean(self.partition_members(subclass).map(|m| &m.embedding), self.dim);
        self.partition_centers.insert(subclass.to_string(), center);
    }

    fn recompute_all_centers(&mut self) {
        let names: Vec<String> = self.partition_centers.keys().cloned().collect();
        for s in names {
            self.recompute_center(&s);
        }
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let types: Vec<&str> = MemoryType::ALL.iter().map(|t| t.name()).collect();
        if self.type_nodes.iter().map(String::as_str).ne(types.iter().copied()) {
            return Err("type layer is not the four memory types".into());
        }
        for t in MemoryType::ALL {
            if self.subclasses_of(t.name()).iter().map(String::as_str).ne(t.subclasses().iter().copied()) {
                return Err(alloc::format!("subclass layer of {t} differs from the taxonomy"));
            }
        }
        for (name, node) in &self.entities {
            if name != &node.name {
                return Err(alloc::format!("entity key {name} holds node {}", node.name));
            }
            if !taxonomy::is_subclass(&node.subclass) {
                return Err(alloc::format!("entity {name} has unknown subclass {:?}", node.subclass));
            }
            if is_self(name) {
                return Err(alloc::format!("self reference {name} stored as an entity"));
            }
        }
        for (id, m) in &self.memories {
            if id != &m.record.id {
                return Err(alloc::format!("memory key {id} holds {}", m.record.id));
            }
            if m.node != m.record.triple.tail {
                return Err(alloc::format!("memory {id} attached at {} instead of its tail", m.node));
            }
            if !self.entities.contains_key(&m.node) {
                return Err(alloc::format!("memory {id} attached to missing node {}", m.node));
            }
            if !self.attachment_ids(&m.node).contains(id) {
                return Err(alloc::format!("memory {id} missing from attachments of {}", m.node));
            }
            let key = relation_key(&m.record.triple.relation);
            let on_edge = self.edges.iter().any(|e| {
                e.head == m.record.triple.head
                    && e.tail == m.record.triple.tail
                    && relation_key(&e.relation) == key
                    && e.memory_ids.contains(id)
            });
            if !on_edge {
                return Err(alloc::format!("memory {id} has no edge"));
            }
        }
        for (node, ids) in &self.attachments {
            for id in ids {
                match self.memories.get(id) {
                    Some(m) if &m.node == node => {}
                    _ => return Err(alloc::format!("stale attachment {id} at {node}")),
                }
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            for end in [&e.head, &e.tail] {
                if !self.adjacency.get(end).is_some_and(|v| v.contains(&i)) {
                    return Err(alloc::format!("edge {i} missing from adjacency of {end}"));
                }
            }
            for id in &e.memory_ids {
                if self.memories.get(id).is_none_or(|m| m.node != e.tail) {
                    return Err(alloc::format!("edge {i} memory {id} not attached at its tail"));
                }
            }
        }
        if self.partition_centers.keys().map(String::as_str).ne({
            let mut all: Vec<&str> = taxonomy::all_subclasses().collect();
            all.sort_unstable();
            all
        }) {
            return Err("partition centers do not cover the subclass layer".into());
        }
        for (s, center) in &self.partition_centers {
            let mean = Vector::mean(self.partition_members(s).map(|m| &m.embedding), self.dim);
            let worst = center.as_slice().iter().zip(mean.as_slice()).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
            if worst > 1e-9 || center.dim() != self.dim {
                return Err(alloc::format!("partition center of {s} off by {worst}"));
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Emg::build`] at the default text dimension.
pub fn build_emg(session: &Session, transe: &TransEModel) -> Result<Emg, GraphError> {
    Emg::build(session, transe, crate::embedding::TEXT_DIM)
}
