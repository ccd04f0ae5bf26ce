//! TransE: entities and relations embedded so that `head + relation ≈ tail`.
//!
//! Training minimizes the margin ranking loss
//! `max(0, margin + d(h + r, t) - d(h' + r, t'))` with L2 distance `d`, one
//! uniformly corrupted triple per positive, plain SGD, and entity vectors
//! projected back onto the unit sphere after every epoch.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Vector;
use crate::memory::{MemoryRecord, Triple};

/// Relation linking an entity to its subclass node in training triples.
pub const INSTANCE_OF: &str = "instance-of";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransEError {
    #[error("cannot train TransE on an empty triple set")]
    EmptyTriples,
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("no candidate subclasses")]
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig { dim: 32, margin: 1.0, lr: 0.01, epochs: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransEModel {
    pub entities: BTreeMap<String, Vector>,
    pub relations: BTreeMap<String, Vector>,
    pub dim: usize,
    pub margin: f64,
    pub trained_epochs: usize,
    /// Mean margin loss of each training epoch.
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
}

/// Name under which a subclass is embedded alongside ordinary entities.
pub fn subclass_entity(subclass: &str) -> String {
    format!("subclass:{subclass}")
}

/// Memory triples plus one `(entity, instance-of, subclass)` triple for the
/// head and the tail of every memory that carries a subclass hint.
pub fn training_triples<'a>(memories: impl IntoIterator<Item = &'a MemoryRecord>) -> Vec<Triple> {
    let mut out = Vec::new();
    for m in memories {
        out.push(m.triple.clone());
        if let Some(hint) = &m.subclass_hint {
            let class = subclass_entity(hint);
            out.push(Triple::new(m.triple.head.clone(), INSTANCE_OF, class.clone()));
            out.push(Triple::new(m.triple.tail.clone(), INSTANCE_OF, class));
        }
    }
    out
}

fn l2(diff: &[f64]) -> f64 {
    libm::sqrt(diff.iter().map(|x| x * x).sum())
}

fn normalize(v: &mut [f64]) {
    let n = l2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn translation(h: &[f64], r: &[f64], t: &[f64], out: &mut [f64]) -> f64 {
    for i in 0..out.len() {
        out[i] = h[i] + r[i] - t[i];
    }
    l2(out)
}

/// Trains a seeded TransE model. Identical inputs give a bitwise-identical model.
pub fn train_transe(triples: &[Triple], config: &TransEConfig) -> Result<TransEModel, TransEError> {
    if triples.is_empty() {
        return Err(TransEError::EmptyTriples);
    }
    let dim = config.dim.max(1);
    let mut entity_names: Vec<&str> = Vec::new();
    let mut relation_names: Vec<&str> = Vec::new();
    for t in triples {
        entity_names.push(&t.head);
        entity_names.push(&t.tail);
        relation_names.push(&t.relation);
    }
    entity_names.sort_unstable();
    entity_names.dedup();
    relation_names.sort_unstable();
    relation_names.dedup();
    let entity_index: BTreeMap<&str, usize> = entity_names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let relation_index: BTreeMap<&str, usize> =
        relation_names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let indexed: Vec<(usize, usize, usize)> = triples
        .iter()
        .map(|t| (entity_index[t.head.as_str()], relation_index[t.relation.as_str()], entity_index[t.tail.as_str()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 6.0 / libm::sqrt(dim as f64);
    let init = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..bound)).collect();
                normalize(&mut v);
                v
            })
            .collect()
    };
    let mut ent = init(entity_names.len(), &mut rng);
    let mut rel = init(relation_names.len(), &mut rng);

    let n_ent = entity_names.len();
    let mut order: Vec<usize> = (0..indexed.len()).collect();
    let mut pos = alloc::vec![0.0; dim];
    let mut neg = alloc::vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let (h, r, t) = indexed[k];
            let corrupt_head = rng.gen_bool(0.5);
            let mut replacement = rng.gen_range(0..n_ent);
            let original = if corrupt_head { h } else { t };
            if n_ent > 1 {
                while replacement == original {
                    replacement = rng.gen_range(0..n_ent);
                }
            }
            let (nh, nt) = if corrupt_head { (replacement, t) } else { (h, replacement) };
            let d_pos = translation(&ent[h], &rel[r], &ent[t], &mut pos);
            let d_neg = translation(&ent[nh], &rel[r], &ent[nt], &mut neg);
            let loss = config.margin + d_pos - d_neg;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            // d/dx |h + r - t| = (h + r - t) / |h + r - t|
            let gp = if d_pos > 0.0 { 1.0 / d_pos } else { 0.0 };
            let gn = if d_neg > 0.0 { 1.0 / d_neg } else { 0.0 };
            let step = config.lr;
            for i in 0..dim {
                let p = pos[i] * gp * step;
                let n = neg[i] * gn * step;
                ent[h][i] -= p;
                ent[t][i] += p;
                rel[r][i] -= p - n;
                ent[nh][i] += n;
                ent[nt][i] -= n;
            }
        }
        ent.iter_mut().for_each(|v| normalize(v));
        epoch_losses.push(total / indexed.len() as f64);
    }
    if config.epochs == 0 {
        ent.iter_mut().for_each(|v| normalize(v));
    }

    Ok(TransEModel {
        entities: entity_names.iter().zip(ent).map(|(n, v)| (n.to_string(), Vector::from_vec(v))).collect(),
        relations: relation_names.iter().zip(rel).map(|(n, v)| (n.to_string(), Vector::from_vec(v))).collect(),
        dim,
        margin: config.margin,
        trained_epochs: config.epochs,
        epoch_losses,
    })
}

impl TransEModel {
    /// A model from explicit tables, used for fixtures and restored snapshots.
    pub fn from_tables(entities: BTreeMap<String, Vector>, relations: BTreeMap<String, Vector>, dim: usize) -> Self {
        TransEModel { entities, relations, dim, margin: 1.0, trained_epochs: 0, epoch_losses: Vec::new() }
    }

    pub fn entity(&self, name: &str) -> Result<&Vector, TransEError> {
        self.entities.get(name).ok_or_else(|| TransEError::UnknownName(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<&Vector, TransEError> {
        self.relations.get(name).ok_or_else(|| TransEError::UnknownName(name.to_string()))
    }

    pub fn contains_entity(&self, name: &str) -> bool {
        self.entities.contains_key(name)
    }

    /// Subclasses that have an embedding in this model.
    pub fn embedded_subclasses<'a>(&self, candidates: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
        candidates.into_iter().filter(|s| self.entities.contains_key(&subclass_entity(s))).collect()
    }
}

/// Translation distance `|h + r - t|`.
pub fn transe_score(model: &TransEModel, head: &str, relation: &str, tail: &str) -> Result<f64, TransEError> {
    let h = model.entity(head)?;
    let r = model.relation(relation)?;
    let t = model.entity(tail)?;
    let mut buf = alloc::vec![0.0; model.dim];
    Ok(translation(h.as_slice(), r.as_slice(), t.as_slice(), &mut buf))
}

/// Nearest subclass to `entity`: the subclass vector closest to the entity
/// translated by the `instance-of` relation (no translation when the model
/// has no such relation). Ties go to the lexicographically first name.
pub fn assign_to_subclass(model: &TransEModel, entity: &str, subclasses: &[&str]) -> Result<String, TransEError> {
    let e = model.entity(entity)?;
    let mut anchor = e.clone();
    if let Some(r) = model.relations.get(INSTANCE_OF) {
        anchor.add_assign(r);
    }
    let mut best: Option<(f64, &str)> = None;
    for &s in subclasses {
        let v = model.entity(&subclass_entity(s))?;
        let d = anchor.distance(v);
        let better = match best {
            None => true,
            Some((bd, bs)) => d < bd || (d == bd && s < bs),
        };
        if better {
            best = Some((d, s));
        }
    }
    best.map(|(_, s)| s.to_string()).ok_or(TransEError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn star() -> Vec<Triple> {
        vec![
            Triple::new("hub", "links", "a"),
            Triple::new("hub", "links", "b"),
            Triple::new("hub", "owns", "c"),
            Triple::new("d", "likes", "hub"),
            Triple::new("e", "likes", "hub"),
            Triple::new("f", "visits", "hub"),
        ]
    }

    fn cfg(seed: u64) -> TransEConfig {
        TransEConfig { epochs: 200, seed, ..TransEConfig::default() }
    }

    #[test]
    fn empty_triples_rejected() {
        assert_eq!(train_transe(&[], &cfg(0)), Err(TransEError::EmptyTriples));
    }

    #[test]
    fn exact_translation_scores_zero() {
        let mut ents = BTreeMap::new();
        ents.insert("h".to_string(), Vector::from_vec(vec![1.0, 0.0]));
        ents.insert("t".to_string(), Vector::from_vec(vec![1.0, 1.0]));
        let mut rels = BTreeMap::new();
        rels.insert("r".to_string(), Vector::from_vec(vec![0.0, 1.0]));
        let model = TransEModel::from_tables(ents, rels, 2);
        assert_eq!(transe_score(&model, "h", "r", "t").unwrap(), 0.0);
        assert!(transe_score(&model, "t", "r", "h").unwrap() > 0.0);
        assert_eq!(transe_score(&model, "x", "r", "h"), Err(TransEError::UnknownName("x".into())));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_transe(&star(), &cfg(7)).unwrap();
        let b = train_transe(&star(), &cfg(7)).unwrap();
        assert_eq!(a, b);
        let c = train_transe(&star(), &cfg(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn entity_vectors_stay_normalized_and_loss_drops() {
        for seed in 0..5 {
            let m = train_transe(&star(), &cfg(seed)).unwrap();
            for v in m.entities.values() {
                assert!((v.norm() - 1.0).abs() < 1e-6);
            }
            let first = m.epoch_losses[0];
            let last = *m.epoch_losses.last().unwrap();
            assert!(last <= first, "seed {seed}: {last} > {first}");
        }
    }

    #[test]
    fn gold_triples_beat_uniform_corruptions() {
        let triples = star();
        let m = train_transe(&triples, &cfg(3)).unwrap();
        let gold: f64 = triples
            .iter()
            .map(|t| transe_score(&m, &t.head, &t.relation, &t.tail).unwrap())
            .sum::<f64>()
            / triples.len() as f64;
        // brute-force corruption over the entity set
        let names: Vec<&String> = m.entities.keys().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut corrupt = 0.0;
        for i in 0..100 {
            let t = &triples[i % triples.len()];
            let e = names[rng.gen_range(0..names.len())];
            let s = if i % 2 == 0 {
                transe_score(&m, e, &t.relation, &t.tail).unwrap()
            } else {
                transe_score(&m, &t.head, &t.relation, e).unwrap()
            };
            corrupt += s;
        }
        corrupt /= 100.0;
        assert!(gold < corrupt, "gold {gold} >= corrupted {corrupt}");
        for t in &triples {
            let g = transe_score(&m, &t.head, &t.relation, &t.tail).unwrap();
            let worst_tail = names
                .iter()
                .filter(|n| n.as_str() != t.tail)
                .map(|n| transe_score(&m, &t.head, &t.relation, n).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(g < worst_tail + 1.0, "gold triple not competitive");
        }
    }

    #[test]
    fn assignment_single_candidate_and_exact_match() {
        let mut ents = BTreeMap::new();
        ents.insert("x".to_string(), Vector::from_vec(vec![1.0, 0.0]));
        ents.insert(subclass_entity("A"), Vector::from_vec(vec![-1.0, 0.0]));
        ents.insert(subclass_entity("B"), Vector::from_vec(vec![1.0, 0.0]));
        let model = TransEModel::from_tables(ents, BTreeMap::new(), 2);
        assert_eq!(assign_to_subclass(&model, "x", &["A"]).unwrap(), "A");
        assert_eq!(assign_to_subclass(&model, "x", &["A", "B"]).unwrap(), "B");
        assert_eq!(assign_to_subclass(&model, "x", &["A", "B"]).unwrap(), "B");
        assert_eq!(assign_to_subclass(&model, "y", &["A"]), Err(TransEError::UnknownName("y".into())));
        assert_eq!(assign_to_subclass(&model, "x", &[]), Err(TransEError::NoCandidates));
    }

    #[test]
    fn assignment_ties_break_lexicographically() {
        let mut ents = BTreeMap::new();
        ents.insert("x".to_string(), Vector::from_vec(vec![0.0, 0.0]));
        ents.insert(subclass_entity("B"), Vector::from_vec(vec![0.0, 1.0]));
        ents.insert(subclass_entity("A"), Vector::from_vec(vec![1.0, 0.0]));
        let model = TransEModel::from_tables(ents, BTreeMap::new(), 2);
        assert_eq!(assign_to_subclass(&model, "x", &["B", "A"]).unwrap(), "A");
    }
}
